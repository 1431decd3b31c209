"""Offline-online two-level Schwarz preconditioners for elliptic problems with random defects."""
from .analysis import (
    CostModel,
    SpectrumReport,
    break_even,
    check_stability_bounds,
    estimate_eta,
    operator_deviation,
    patch_error_indicator,
    spectrum,
)
from .coefficient import CoefficientModel, Realization, build_model, rasterize, sample_realization
from .errors import (
    ConfigurationError,
    DefectSchwarzError,
    IndefinitePreconditionerError,
    PcgDivergenceError,
    SpdViolationError,
)
from .experiment import ExperimentConfig, ExperimentResult, iteration_stats, run_experiment, write_csv
from .mesh import MeshHierarchy, assemble_load, assemble_stiffness, build_hierarchy, prolongation
from .patches import build_patches
from .pcg import PcgReport, pcg, theoretical_bound
from .plots import emit_plots
from .preconditioner import (
    PrecondState,
    ReferenceDictionary,
    apply_preconditioner,
    build_preconditioner,
    build_reference_dictionary,
)
from .sparse import CsrMatrix, csr_from_triplets, factorize_spd, solve_spd, spmv

__version__ = "0.1.0"

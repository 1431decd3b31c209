"""Two-level additive Schwarz preconditioners for defect coefficients.

All three variants share the application

    z = P K0^{-1} P^T r + sum_i R_i^T (local solve on patch i) R_i r

and differ in how the patch solves (and, for ND, the coarse matrix) are
obtained:

direct  factorize K_i(A) of every patch for every realization.
nd      reuse the background factorization on every patch.
oo      combine precomputed single-defect reference solves with
        mu-weights; no factorization happens online.
"""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np

from .coefficient import (
    CoefficientModel,
    Realization,
    WeightVector,
    rasterize,
    reference_element_cells,
    reference_patch_cells,
)
from .errors import ConfigurationError, DimensionError
from .mesh import (
    FineCoefficientField,
    MeshHierarchy,
    assemble_cells,
    assemble_elements,
    assemble_stiffness,
    coarse_element_matrices,
    galerkin_coarse,
    grid_dof_map,
    prolongation,
)
from .patches import Patch, ReferencePatch, build_patches, patch_cells, reference_patch, translation_map
from .sparse import CsrMatrix, SpdFactorization, factorize_spd, solve_spd

log = logging.getLogger(__name__)

VARIANTS = ("direct", "nd", "oo")


@dataclass(frozen=True, eq=False)
class PatchLayout:
    """Mesh-only data shared by every preconditioner on one hierarchy."""

    hier: MeshHierarchy
    ref: ReferencePatch
    patches: list[Patch]
    dofs: np.ndarray  # (n_patches, n_local) global fine DOFs
    perms: np.ndarray  # (n_patches, n_local) reference index -> patch position
    prolongation: CsrMatrix

    @property
    def n_patches(self) -> int:
        return len(self.patches)


@lru_cache(maxsize=8)
def patch_layout(hier: MeshHierarchy) -> PatchLayout:
    ref = reference_patch(hier)
    patches = build_patches(hier)
    dofs = np.stack([p.fine_dofs for p in patches])
    perms = np.stack([translation_map(p, ref, hier) for p in patches])
    for a in (dofs, perms):
        a.setflags(write=False)
    return PatchLayout(hier, ref, patches, dofs, perms, prolongation(hier))


def patch_matrix(cells: np.ndarray) -> CsrMatrix:
    """Patch stiffness with homogeneous Dirichlet data on the patch boundary."""
    n = cells.shape[0]
    return assemble_cells(cells, grid_dof_map(n, n), (n - 1) ** 2)


def reference_patch_matrix(model: CoefficientModel, hier: MeshHierarchy, ell: int) -> CsrMatrix:
    return patch_matrix(reference_patch_cells(model, hier, ell))


def reference_coarse_block(model: CoefficientModel, hier: MeshHierarchy, ell: int) -> np.ndarray:
    cells = reference_element_cells(model, hier, ell)
    return coarse_element_matrices(cells, hier.fine_per_coarse)[0, 0]


@dataclass(frozen=True, eq=False)
class ReferenceDictionary:
    model: CoefficientModel
    hier: MeshHierarchy
    patch_factors: list[SpdFactorization]
    coarse_blocks: np.ndarray  # (n_ref_coarse + 1, 4, 4)
    build_seconds: float = 0.0

    @property
    def n_ref(self) -> int:
        return len(self.patch_factors) - 1

    @property
    def n_ref_coarse(self) -> int:
        return len(self.coarse_blocks) - 1

    @property
    def n_local(self) -> int:
        return self.patch_factors[0].dimension


def build_reference_dictionary(model: CoefficientModel, hier: MeshHierarchy, jobs: int = 1) -> ReferenceDictionary:
    """Offline phase: factor A^(0..N_ref) on the reference patch and form the
    reference coarse-element blocks."""
    model.check_hierarchy(hier)
    ref = reference_patch(hier)
    t0 = time.perf_counter()

    def one(ell):
        return factorize_spd(reference_patch_matrix(model, hier, ell))

    ells = range(ref.n_ref + 1)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            factors = list(pool.map(one, ells))
    else:
        factors = [one(ell) for ell in ells]
    blocks = np.stack(
        [reference_coarse_block(model, hier, ell) for ell in range(hier.eps_per_coarse**2 + 1)]
    )
    blocks.setflags(write=False)
    elapsed = time.perf_counter() - t0
    log.info("reference dictionary: %d patch factors of size %d in %.3fs", len(factors), ref.n_local, elapsed)
    return ReferenceDictionary(model, hier, factors, blocks, elapsed)


def local_cells(field: FineCoefficientField, patch: Patch, hier: MeshHierarchy) -> np.ndarray:
    rows, cols = patch_cells(patch, reference_patch(hier))
    return field.values.reshape(hier.n_fine, hier.n_fine)[rows, cols]


def build_direct_local(patch: Patch, field: FineCoefficientField, hier: MeshHierarchy) -> SpdFactorization:
    """Factorization of K_i(A) for the true coefficient."""
    return factorize_spd(patch_matrix(local_cells(field, patch, hier)))


def _combine(dictionary: ReferenceDictionary, weights: np.ndarray, r_ref: np.ndarray) -> np.ndarray:
    """Sum of mu_l * B_ref^(l) r over nonzero weights, ascending l."""
    out = np.zeros_like(r_ref)
    for ell in np.flatnonzero(weights):
        out += float(weights[ell]) * solve_spd(dictionary.patch_factors[ell], r_ref)
    return out


def apply_local_oo(dictionary: ReferenceDictionary, patch: Patch, weights: WeightVector, r_local) -> np.ndarray:
    """Offline-online local solve T_i (sum_l mu_l B_ref^(l)) T_i^{-1} r_local."""
    w = weights.weights if isinstance(weights, WeightVector) else np.asarray(weights)
    r_local = np.asarray(r_local, dtype=np.float64)
    if len(w) != dictionary.n_ref + 1:
        raise DimensionError(f"{len(w)} weights for a dictionary of {dictionary.n_ref + 1} entries")
    if r_local.shape[0] != dictionary.n_local:
        raise DimensionError(f"local vector has {r_local.shape[0]} rows, patch has {dictionary.n_local}")
    perm = patch_layout(dictionary.hier).perms[patch.index]
    out = np.empty_like(r_local)
    out[perm] = _combine(dictionary, w, r_local[perm])
    return out


def element_weight_grid(realization: Realization, hier: MeshHierarchy) -> np.ndarray:
    """lambda-weights of every coarse element, shape ``(ty, tx, N_ref_coarse + 1)``."""
    n, m = hier.n_coarse, hier.eps_per_coarse
    bits = realization.grid().reshape(n, m, n, m).transpose(0, 2, 1, 3).reshape(n, n, m * m)
    w = np.empty((n, n, m * m + 1), dtype=np.int64)
    w[..., 1:] = bits
    w[..., 0] = 1 - bits.sum(axis=-1)
    return w


def patch_weight_matrix(realization: Realization, hier: MeshHierarchy) -> np.ndarray:
    """mu-weights of every patch in patch order, shape ``(n_patches, N_ref + 1)``."""
    n, m = hier.n_coarse, hier.eps_per_coarse
    grid = realization.grid()
    rows = []
    for vy in range(1, n):
        for vx in range(1, n):
            local = grid[(vy - 1) * m : (vy + 1) * m, (vx - 1) * m : (vx + 1) * m].ravel()
            rows.append(np.concatenate([[1 - int(local.sum())], local.astype(np.int64)]))
    return np.array(rows, dtype=np.int64)


def assemble_coarse_matrix(dictionary: ReferenceDictionary, realization: Realization,
                           hier: MeshHierarchy, mode: str = "oo") -> CsrMatrix:
    """Coarse stiffness K0(A).

    oo           sum_l lambda_l K_ref^(l) per coarse element, then assembly.
    incremental  K_ref^(0) + sum over defects q of (K_ref^(q) - K_ref^(0)).
    direct       Galerkin product P^T K_fine(A) P.
    """
    n = hier.n_coarse
    dof_map = grid_dof_map(n, n)
    blocks = dictionary.coarse_blocks
    if mode == "oo":
        w = element_weight_grid(realization, hier).astype(np.float64)
        mats = np.einsum("tsl,lab->tsab", w, blocks)
    elif mode == "incremental":
        w = element_weight_grid(realization, hier)[..., 1:].astype(np.float64)
        mats = blocks[0] + np.einsum("tsl,lab->tsab", w, blocks[1:] - blocks[0])
    elif mode == "direct":
        field = rasterize(dictionary.model, realization, hier)
        return galerkin_coarse(assemble_stiffness("fine", field, hier), patch_layout(hier).prolongation)
    else:
        raise ConfigurationError(f"unknown coarse assembly mode {mode!r}")
    return assemble_elements(mats, dof_map, hier.coarse_dof_count)


def assemble_coarse_operator(dictionary: ReferenceDictionary, realization: Realization,
                             hier: MeshHierarchy, mode: str = "oo") -> SpdFactorization:
    return factorize_spd(assemble_coarse_matrix(dictionary, realization, hier, mode))


def background_realization(hier: MeshHierarchy) -> Realization:
    n = hier.n_cells_eps
    bits = np.zeros(n * n, dtype=bool)
    bits.setflags(write=False)
    return Realization(0.0, 0, bits, n)


@dataclass(frozen=True, eq=False)
class PrecondState:
    variant: str
    layout: PatchLayout
    coarse_matrix: CsrMatrix
    coarse_factor: SpdFactorization
    local_factors: list[SpdFactorization] | None = None
    dictionary: ReferenceDictionary | None = None
    weights: np.ndarray | None = None  # (n_patches, N_ref + 1), oo only
    patch_factorizations: int = 0
    extra: dict = dc_field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.layout.hier.fine_dof_count

    def __call__(self, r):
        return apply_preconditioner(self, r)


def build_preconditioner(variant: str, model: CoefficientModel, realization: Realization,
                         hier: MeshHierarchy, dictionary: ReferenceDictionary | None = None,
                         nd_coarse: str = "frozen", field: FineCoefficientField | None = None) -> PrecondState:
    """Online phase for one realization.

    ``dictionary`` is required for ``oo`` and ``nd``.  The coarse operator is
    built from the true realization except for ``nd`` with
    ``nd_coarse="frozen"``, which uses the background coefficient.
    """
    if variant not in VARIANTS:
        raise ConfigurationError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    if nd_coarse not in ("frozen", "exact"):
        raise ConfigurationError(f"nd_coarse must be 'frozen' or 'exact', got {nd_coarse!r}")
    model.check_hierarchy(hier)
    layout = patch_layout(hier)
    if variant in ("oo", "nd"):
        if dictionary is None:
            raise ConfigurationError(f"variant {variant!r} needs a reference dictionary")
        if dictionary.hier != hier:
            raise ConfigurationError("reference dictionary was built for another mesh")

    if variant == "direct":
        if field is None:
            field = rasterize(model, realization, hier)
        k0 = galerkin_coarse(assemble_stiffness("fine", field, hier), layout.prolongation)
        factors = [build_direct_local(p, field, hier) for p in layout.patches]
        return PrecondState("direct", layout, k0, factorize_spd(k0), local_factors=factors,
                            patch_factorizations=len(factors))
    if variant == "nd":
        coarse_real = background_realization(hier) if nd_coarse == "frozen" else realization
        k0 = assemble_coarse_matrix(dictionary, coarse_real, hier, "oo")
        return PrecondState("nd", layout, k0, factorize_spd(k0), dictionary=dictionary,
                            extra={"nd_coarse": nd_coarse})
    k0 = assemble_coarse_matrix(dictionary, realization, hier, "oo")
    weights = patch_weight_matrix(realization, hier)
    weights.setflags(write=False)
    return PrecondState("oo", layout, k0, factorize_spd(k0), dictionary=dictionary, weights=weights)


def _local_solves(state: PrecondState, R: np.ndarray) -> np.ndarray:
    """Patch solves for gathered residuals ``R`` of shape (n_patches, n_local, k)."""
    layout = state.layout
    n_p, n_loc, k = R.shape
    if state.variant == "direct":
        return np.stack([solve_spd(f, R[i]) for i, f in enumerate(state.local_factors)])

    perms = layout.perms[..., None]
    R_ref = np.take_along_axis(R, perms, axis=1)
    factors = state.dictionary.patch_factors
    if state.variant == "nd":
        rhs = R_ref.transpose(1, 0, 2).reshape(n_loc, n_p * k)
        Y_ref = solve_spd(factors[0], rhs).reshape(n_loc, n_p, k).transpose(1, 0, 2)
    else:
        Y_ref = np.zeros_like(R_ref)
        w = state.weights
        for ell in np.flatnonzero(w.any(axis=0)):
            sel = np.flatnonzero(w[:, ell])
            rhs = R_ref[sel].transpose(1, 0, 2).reshape(n_loc, len(sel) * k)
            sol = solve_spd(factors[ell], rhs).reshape(n_loc, len(sel), k).transpose(1, 0, 2)
            Y_ref[sel] += w[sel, ell].astype(np.float64)[:, None, None] * sol
    Y = np.empty_like(Y_ref)
    np.put_along_axis(Y, perms, Y_ref, axis=1)
    return Y


def apply_preconditioner(state: PrecondState, r) -> np.ndarray:
    """``z = B r`` for a fine vector or a block of fine vectors (columns)."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape[0] != state.dimension:
        raise DimensionError(f"residual has {r.shape[0]} rows, preconditioner acts on {state.dimension}")
    vec = r.ndim == 1
    r2 = r[:, None] if vec else r
    p = state.layout.prolongation.as_scipy
    z = p @ solve_spd(state.coarse_factor, p.T @ r2)
    dofs = state.layout.dofs
    Y = _local_solves(state, r2[dofs])
    # np.add.at is unbuffered and visits patches in ascending order
    np.add.at(z, dofs.reshape(-1), Y.reshape(-1, r2.shape[1]))
    return z[:, 0] if vec else z

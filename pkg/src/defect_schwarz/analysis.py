"""Spectral and perturbation diagnostics for the preconditioners.

Operators are compared in the energy inner product ``a(v, w) = v^T K w``.
For a preconditioner ``B`` the preconditioned operator is ``P = B K``; its
spectrum is that of the symmetric pencil ``(K B K, K)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from . import rng
from .coefficient import CoefficientModel, Realization, rasterize, reference_patch_cells
from .errors import ConfigurationError, DegenerateOperatorError, SizeGuardError, SymmetryError
from .mesh import CORNER_DX, CORNER_DY, MeshHierarchy, Q1_STIFFNESS, assemble_cells, grid_dof_map
from .patches import Patch, patch_cells, reference_patch
from .preconditioner import ReferenceDictionary, patch_layout, patch_matrix, patch_weight_matrix
from .sparse import (
    DENSE_EIG_LIMIT,
    CsrMatrix,
    DenseSymmetricPencil,
    dense_generalized_eigvals,
    solve_spd,
    spmv,
    symmetrize,
)

PATCH_DENSE_LIMIT = 2500
ETA_SYMMETRY_TOL = 1e-8

Apply = Callable[[np.ndarray], np.ndarray]


def dense_operator(apply: Apply, n: int, block: int = 512) -> np.ndarray:
    """Columns of a linear operator, applied to identity blocks."""
    if n > DENSE_EIG_LIMIT:
        raise SizeGuardError(f"dense operator of size {n} exceeds the guard {DENSE_EIG_LIMIT}")
    out = np.empty((n, n))
    for j0 in range(0, n, block):
        cols = np.eye(n, min(block, n - j0), -j0)
        try:
            out[:, j0 : j0 + cols.shape[1]] = apply(cols)
        except (ValueError, IndexError):
            for j in range(cols.shape[1]):
                out[:, j0 + j] = apply(cols[:, j])
    return out


@dataclass
class SpectrumReport:
    lambda_min: float
    lambda_max: float
    kappa: float
    eta: Optional[float] = None
    c1_hat: Optional[float] = None
    c2_hat: Optional[float] = None
    eigenvalues: Optional[np.ndarray] = None

    @property
    def positive(self) -> bool:
        return self.lambda_min > 0.0

    def as_row(self) -> dict:
        row = asdict(self)
        row.pop("eigenvalues")
        return row


def spectrum(K: CsrMatrix, apply_B: Apply) -> SpectrumReport:
    """Extreme eigenvalues of ``B K`` in the energy inner product."""
    n = K.nrows
    Kd = K.to_dense()
    KBK = symmetrize(Kd @ dense_operator(apply_B, n) @ Kd, 1e-8, "K B K")
    ev = dense_generalized_eigvals(DenseSymmetricPencil(KBK, Kd))
    lo, hi = float(ev[0]), float(ev[-1])
    kappa = hi / lo if lo > 0 else math.inf
    return SpectrumReport(lo, hi, kappa, c1_hat=lo, c2_hat=hi, eigenvalues=ev)


def _a_norm(Kd_or_K, v):
    kv = Kd_or_K @ v if isinstance(Kd_or_K, np.ndarray) else spmv(Kd_or_K, v)
    return math.sqrt(max(float(v @ kv), 0.0))


def estimate_eta(K: CsrMatrix, apply_B: Apply, apply_Btilde: Apply, mode: str = "dense",
                 tol: float = 1e-6, maxit: int = 500, seed: int = 0) -> float:
    """Energy spectral radius of ``E = (B~ - B) K``.

    ``dense`` solves the pencil ``(K (B~ - B) K, K)``; ``iterative`` runs a
    power iteration normalised in the energy norm and stops once the relative
    eigen-residual of ``E^2`` drops below ``tol``.
    """
    n = K.nrows
    if mode == "dense":
        Kd = K.to_dense()
        M1 = Kd @ dense_operator(apply_Btilde, n) @ Kd
        M0 = Kd @ dense_operator(apply_B, n) @ Kd
        M = M1 - M0
        # asymmetry is judged against the operators, not their (possibly tiny) difference
        scale = max(np.abs(M1).max(), np.abs(M0).max(), np.finfo(float).tiny)
        if np.abs(M - M.T).max() > ETA_SYMMETRY_TOL * scale:
            raise SymmetryError("perturbation E is not symmetric in the energy inner product")
        if not np.any(M):
            return 0.0
        ev = dense_generalized_eigvals(DenseSymmetricPencil(0.5 * (M + M.T), Kd))
        return float(max(abs(ev[0]), abs(ev[-1])))
    if mode != "iterative":
        raise ConfigurationError(f"unknown eta mode {mode!r}")

    def E(v):
        kv = spmv(K, v)
        return apply_Btilde(kv) - apply_B(kv)

    def op_norm(v):
        kv = spmv(K, v)
        return _a_norm(K, apply_Btilde(kv)) + _a_norm(K, apply_B(kv))

    v, w = rng.uniform_pm1(seed, n), rng.uniform_pm1(seed + 1, n)
    lhs, rhs = float(E(w) @ spmv(K, v)), float(w @ spmv(K, E(v)))
    ref = op_norm(v) * _a_norm(K, w) + op_norm(w) * _a_norm(K, v)
    if abs(lhs - rhs) > ETA_SYMMETRY_TOL * max(ref, np.finfo(float).tiny):
        raise SymmetryError("perturbation E is not symmetric in the energy inner product")

    v = v / _a_norm(K, v)
    theta = 0.0
    for _ in range(maxit):
        w1 = E(v)
        theta = _a_norm(K, w1) ** 2
        if theta == 0.0:
            return 0.0
        w2 = E(w1)
        if _a_norm(K, w2 - theta * v) <= tol * theta:
            break
        v = w2 / _a_norm(K, w2)
    return math.sqrt(theta)


@dataclass
class StabilityCheck:
    applicable: bool
    passed: bool
    lower_bound: float
    upper_bound: float
    kappa_bound: float
    detail: str


def check_stability_bounds(exact: SpectrumReport, tilde: SpectrumReport, slack: float = 1e-9) -> StabilityCheck:
    """Containment of sigma(P~) in [C1 - eta, C2 + eta] and the kappa bound."""
    eta = tilde.eta if tilde.eta is not None else exact.eta
    if eta is None:
        raise ConfigurationError("eta must be set on one of the reports")
    c1 = exact.c1_hat if exact.c1_hat is not None else exact.lambda_min
    c2 = exact.c2_hat if exact.c2_hat is not None else exact.lambda_max
    lo, hi = c1 - eta, c2 + eta
    contained = tilde.lambda_min >= lo - slack and tilde.lambda_max <= hi + slack
    if eta >= c1:
        return StabilityCheck(False, contained, lo, hi, math.inf,
                              f"eta={eta:.6g} >= C1={c1:.6g}: positivity bound not applicable")
    kb = hi / lo
    kappa_ok = tilde.kappa <= kb * (1 + slack) + slack
    detail = (f"sigma(P~)=[{tilde.lambda_min:.6g}, {tilde.lambda_max:.6g}] within "
              f"[{lo:.6g}, {hi:.6g}]: {contained}; kappa={tilde.kappa:.6g} <= {kb:.6g}: {kappa_ok}")
    return StabilityCheck(True, contained and kappa_ok, lo, hi, kb, detail)


# ---------------------------------------------------------------------------
# patch error indicator


@dataclass(frozen=True, eq=False)
class _PatchSpaces:
    cells: np.ndarray  # true coefficient on the patch, (2R, 2R)
    free: np.ndarray  # closed-patch node ids not on the domain boundary
    closed_matrix: np.ndarray  # Neumann-type patch stiffness on free nodes
    coupling: np.ndarray  # rows of L(A) for patch-interior test functions, (n_loc, n_free)


def _patch_spaces(patch: Patch, field_values: np.ndarray, hier: MeshHierarchy) -> _PatchSpaces:
    ref = reference_patch(hier)
    rows, cols = patch_cells(patch, ref)
    cells = field_values.reshape(hier.n_fine, hier.n_fine)[rows, cols]
    n = ref.cells_side
    all_nodes = grid_dof_map(n, n, dirichlet=False)
    full = assemble_cells(cells, all_nodes, (n + 1) ** 2).to_dense()
    ox, oy = patch.offset
    jj, ii = np.meshgrid(np.arange(n + 1) + oy, np.arange(n + 1) + ox, indexing="ij")
    on_domain_boundary = (ii == 0) | (jj == 0) | (ii == hier.n_fine) | (jj == hier.n_fine)
    free = all_nodes[~on_domain_boundary]
    interior = all_nodes[1:-1, 1:-1].ravel()
    return _PatchSpaces(cells, free, full[np.ix_(free, free)], full[np.ix_(interior, free)])


def _max_rayleigh(N: np.ndarray, D: np.ndarray) -> float:
    """max v^T N v / v^T D v over v outside the kernel of the PSD matrix D."""
    s, U = sla.eigh(D)
    keep = s > 1e-12 * s[-1]
    W = U[:, keep] / np.sqrt(s[keep])
    return float(sla.eigvalsh(W.T @ N @ W)[-1])


def patch_error_indicator(patch: Patch, realization: Realization, model: CoefficientModel,
                          hier: MeshHierarchy, dictionary: ReferenceDictionary,
                          mode: str = "dense") -> float:
    """Local indicator E_i bounding ||(P_i - P~_i) v||_{a, w_i} / ||v||_{a, w_i}.

    Here ``P_i^(l) = B_ref^(l) L(A)`` is the local solve with reference
    factor ``l`` applied to the true residual functional.
    """
    if mode != "dense":
        raise ConfigurationError(f"unknown indicator mode {mode!r}")
    ref = reference_patch(hier)
    if ref.n_local > PATCH_DENSE_LIMIT:
        raise SizeGuardError(f"patch dimension {ref.n_local} exceeds the dense guard {PATCH_DENSE_LIMIT}")
    field = rasterize(model, realization, hier)
    sp_ = _patch_spaces(patch, field.values, hier)
    mu = patch_weight_matrix(realization, hier)[patch.index]
    A = sp_.cells
    terms = []
    for ell in np.flatnonzero(mu):
        c = mu[ell] * (reference_patch_cells(model, hier, ell) - A) / np.sqrt(A)
        if not np.any(c):
            continue
        perm = patch_layout(hier).perms[patch.index]
        Z = np.empty_like(sp_.coupling)
        Z[perm] = solve_spd(dictionary.patch_factors[ell], sp_.coupling[perm])
        terms.append((c, Z))
    if not terms:
        return 0.0

    n = ref.cells_side
    dof = grid_dof_map(n, n)
    cy, cx = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    corners = dof[cy[..., None] + CORNER_DY, cx[..., None] + CORNER_DX]
    # weighted gradient field per cell: sum_l c_l(cell) * z_l on the cell corners
    Wc = np.zeros(corners.shape + (sp_.coupling.shape[1],))
    for c, Z in terms:
        Zpad = np.vstack([Z, np.zeros((1, Z.shape[1]))])  # row -1 = boundary node, value 0
        Wc += c[..., None, None] * Zpad[corners]
    F = np.einsum("ka,...ad->...kd", _q1_root(), Wc).reshape(-1, Wc.shape[-1])
    e2 = _max_rayleigh(F.T @ F, sp_.closed_matrix)
    return math.sqrt(max(e2, 0.0))


def _q1_root() -> np.ndarray:
    """R with R^T R = Q1_STIFFNESS (the matrix is PSD of rank 3)."""
    s, U = np.linalg.eigh(Q1_STIFFNESS)
    s = np.clip(s, 0.0, None)
    return (U * np.sqrt(s)).T


def patch_projection_gap(patch: Patch, K: CsrMatrix, field_values: np.ndarray, hier: MeshHierarchy,
                         local_exact, local_tilde, v: np.ndarray) -> tuple[float, float]:
    """``||(P_i - P~_i) v||_{a, w_i}`` and ``||v||_{a, w_i}`` for one fine vector.

    ``local_exact`` / ``local_tilde`` map a patch-local residual to the
    local correction.
    """
    sp_ = _patch_spaces(patch, field_values, hier)
    g = spmv(K, v)[patch.fine_dofs]
    diff = local_exact(g) - local_tilde(g)
    Ki = patch_matrix(sp_.cells)
    gap = math.sqrt(max(float(diff @ spmv(Ki, diff)), 0.0))
    vf = _closed_values(patch, v, hier)[sp_.free]
    return gap, math.sqrt(max(float(vf @ sp_.closed_matrix @ vf), 0.0))


def _closed_values(patch: Patch, v: np.ndarray, hier: MeshHierarchy) -> np.ndarray:
    """Values of a fine DOF vector on all closed-patch nodes (0 on the domain boundary)."""
    n = reference_patch(hier).cells_side
    ox, oy = patch.offset
    full = np.zeros((hier.n_fine + 1, hier.n_fine + 1))
    full[1:-1, 1:-1] = v.reshape(hier.n_fine - 1, hier.n_fine - 1)
    return full[oy : oy + n + 1, ox : ox + n + 1].ravel()


# ---------------------------------------------------------------------------
# operator deviation and cost model


def operator_deviation(apply_Bexact: Apply, apply_Bbar: Apply, dim: int, n_vectors: int = 1,
                       seed: int = 0) -> float:
    """RMSE over test vectors of ``||(B - B_bar) r||_2 / ||B r||_2``.

    Test vector ``j`` is uniform on [-1, 1)^dim from SplitMix64 seed ``seed + j``.
    """
    if n_vectors < 1:
        raise ConfigurationError("need at least one test vector")
    devs = []
    for j in range(n_vectors):
        r = rng.uniform_pm1(seed + j, dim)
        br = apply_Bexact(r)
        nb = float(np.linalg.norm(br))
        if nb == 0.0:
            raise DegenerateOperatorError(f"B r = 0 for test vector {j}")
        devs.append(float(np.linalg.norm(br - apply_Bbar(r))) / nb)
    return math.sqrt(sum(d * d for d in devs) / len(devs))


@dataclass
class CostModel:
    t_patch: float
    t_comb: float
    t_pcg: float
    n_ref: int  # number of reference coefficients, background included
    n_patches: int
    k_direct: float
    k_nd: float
    k_oo: float

    def __post_init__(self):
        for name in ("t_patch", "t_comb", "t_pcg", "k_direct", "k_nd", "k_oo"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be nonnegative")
        if self.n_ref < 1 or self.n_patches < 0:
            raise ConfigurationError("n_ref must be >= 1 and n_patches >= 0")


def break_even(cm: CostModel) -> tuple[float, float]:
    """Break-even sample counts of OO-DD against Direct-DD and ND-DD.

    ``math.inf`` stands for "never" (non-positive denominator).
    """
    den_d = cm.n_patches * (cm.t_patch - cm.t_comb) + (cm.k_direct - cm.k_oo) * cm.t_pcg
    den_nd = (cm.k_nd - cm.k_oo) * cm.t_pcg - cm.n_patches * cm.t_comb
    n_d = cm.n_ref * cm.t_patch / den_d if den_d > 0 else math.inf
    n_nd = (cm.n_ref - 1) * cm.t_patch / den_nd if den_nd > 0 else math.inf
    return n_d, n_nd

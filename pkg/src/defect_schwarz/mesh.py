"""Nested uniform Cartesian Q1 meshes on the unit square.

Nodes ``(i, j)`` carry x-index ``i`` and y-index ``j``; cells ``(cx, cy)``
are stored row-major (``k = cy * n + cx``).  Only interior nodes are degrees
of freedom (homogeneous Dirichlet data), numbered x-fastest.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ConfigurationError, DimensionError, SpdViolationError
from .sparse import CsrMatrix, csr_from_triplets, spmv

# Q1 stiffness of a square cell with unit coefficient; independent of the
# cell size in 2D.  Local corners run counter-clockwise from (0, 0).
Q1_STIFFNESS = np.array(
    [
        [4.0, -1.0, -2.0, -1.0],
        [-1.0, 4.0, -1.0, -2.0],
        [-2.0, -1.0, 4.0, -1.0],
        [-1.0, -2.0, -1.0, 4.0],
    ]
) / 6.0
CORNER_DX = np.array([0, 1, 1, 0])
CORNER_DY = np.array([0, 0, 1, 1])


def as_fraction(x) -> Fraction:
    """Parse ``0.125``, ``"1/8"`` or ``Fraction(1, 8)`` exactly."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x.strip())
    return Fraction(x).limit_denominator(1 << 30)


def _reciprocal(x, name: str) -> int:
    f = as_fraction(x)
    if f <= 0 or f.numerator != 1:
        raise ConfigurationError(f"{name}={f} must be the reciprocal of a positive integer")
    return f.denominator


@dataclass(frozen=True)
class MeshHierarchy:
    n_fine: int
    n_coarse: int
    n_cells_eps: int

    @property
    def h(self) -> float:
        return 1.0 / self.n_fine

    @property
    def H(self) -> float:
        return 1.0 / self.n_coarse

    @property
    def eps(self) -> float:
        return 1.0 / self.n_cells_eps

    @property
    def fine_per_coarse(self) -> int:
        """H / h."""
        return self.n_fine // self.n_coarse

    @property
    def fine_per_eps(self) -> int:
        """eps / h, the fine-cell resolution of one eps-cell."""
        return self.n_fine // self.n_cells_eps

    @property
    def eps_per_coarse(self) -> int:
        """H / eps."""
        return self.n_cells_eps // self.n_coarse

    @property
    def fine_dof_count(self) -> int:
        return (self.n_fine - 1) ** 2

    @property
    def coarse_dof_count(self) -> int:
        return (self.n_coarse - 1) ** 2

    def fine_dof(self, i, j):
        return (np.asarray(j) - 1) * (self.n_fine - 1) + (np.asarray(i) - 1)

    def coarse_dof(self, i, j):
        return (np.asarray(j) - 1) * (self.n_coarse - 1) + (np.asarray(i) - 1)

    def describe(self) -> str:
        return f"h=1/{self.n_fine} H=1/{self.n_coarse} eps=1/{self.n_cells_eps}"


def build_hierarchy(h, H, eps) -> MeshHierarchy:
    """Validate and build the mesh hierarchy ``h <= eps < H``."""
    n_f = _reciprocal(h, "h")
    n_c = _reciprocal(H, "H")
    n_e = _reciprocal(eps, "eps")
    if n_e > n_f:
        raise ConfigurationError(f"h <= eps violated (h=1/{n_f}, eps=1/{n_e})")
    if not n_c < n_e:
        raise ConfigurationError(f"eps < H violated (eps=1/{n_e}, H=1/{n_c})")
    if n_f % n_e or n_f // n_e < 2:
        raise ConfigurationError(f"eps/h = {Fraction(n_f, n_e)} must be an integer >= 2")
    if n_e % n_c or n_e // n_c < 2:
        raise ConfigurationError(f"H/eps = {Fraction(n_e, n_c)} must be an integer >= 2")
    return MeshHierarchy(n_f, n_c, n_e)


@dataclass(frozen=True)
class FineCoefficientField:
    values: np.ndarray
    alpha: float
    beta: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if self.alpha <= 0:
            raise ConfigurationError(f"alpha={self.alpha} must be positive")
        if v.size and (v.min() < self.alpha or v.max() > self.beta):
            raise ConfigurationError("coefficient values leave [alpha, beta]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def grid(self) -> np.ndarray:
        n = int(round(np.sqrt(self.values.size)))
        return self.values.reshape(n, n)


def grid_dof_map(nx: int, ny: int, dirichlet: bool = True) -> np.ndarray:
    """Node -> DOF index on an ``nx x ny`` cell grid, ``-1`` on the boundary.

    Returned array is indexed ``[j, i]``.
    """
    m = -np.ones((ny + 1, nx + 1), dtype=np.int64)
    if dirichlet:
        m[1:-1, 1:-1] = np.arange((nx - 1) * (ny - 1)).reshape(ny - 1, nx - 1)
    else:
        m[:, :] = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    return m


def assemble_elements(element_matrices: np.ndarray, dof_map: np.ndarray, n_dofs: int) -> CsrMatrix:
    """Scatter per-cell 4x4 matrices (shape ``(ny, nx, 4, 4)``) into CSR.

    Cells are visited row-major and every cell contributes its 16 entries in
    the same local order, so mirrored entries are summed identically.
    """
    ny, nx = element_matrices.shape[:2]
    cy, cx = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    nodes = dof_map[cy[..., None] + CORNER_DY, cx[..., None] + CORNER_DX]  # (ny, nx, 4)
    rows = np.broadcast_to(nodes[..., :, None], element_matrices.shape).reshape(-1)
    cols = np.broadcast_to(nodes[..., None, :], element_matrices.shape).reshape(-1)
    vals = element_matrices.reshape(-1)
    keep = (rows >= 0) & (cols >= 0)
    return csr_from_triplets((rows[keep], cols[keep], vals[keep]), n_dofs, n_dofs)


def assemble_cells(cell_values: np.ndarray, dof_map: np.ndarray, n_dofs: int) -> CsrMatrix:
    """Q1 stiffness for a piecewise constant coefficient on a uniform grid."""
    cell_values = np.asarray(cell_values, dtype=np.float64)
    return assemble_elements(cell_values[..., None, None] * Q1_STIFFNESS, dof_map, n_dofs)


def coarse_shape_stiffness(r: int) -> np.ndarray:
    """Unit-coefficient contribution of each fine cell to a coarse element.

    Entry ``[cy, cx]`` is ``V^T K_e V`` with ``V[k, a]`` the coarse shape
    function ``a`` evaluated at corner ``k`` of fine cell ``(cx, cy)`` of a
    coarse element split into ``r x r`` fine cells.  Coarse shape functions
    are bilinear on every fine cell, so this integrates exactly.
    """
    c = np.arange(r)
    cy, cx = np.meshgrid(c, c, indexing="ij")
    x = (cx[..., None] + CORNER_DX) / r
    y = (cy[..., None] + CORNER_DY) / r
    v = np.stack([(1 - x) * (1 - y), x * (1 - y), x * y, (1 - x) * y], axis=-1)  # (r, r, 4, 4)
    return np.einsum("...ka,kl,...lb->...ab", v, Q1_STIFFNESS, v)


def coarse_element_matrices(cell_grid: np.ndarray, r: int) -> np.ndarray:
    """4x4 coarse element matrices for every coarse element of a fine field."""
    n = cell_grid.shape[0] // r
    blocks = cell_grid.reshape(n, r, n, r).transpose(0, 2, 1, 3)  # (ty, tx, cy, cx)
    return np.einsum("tscd,cdab->tsab", blocks, coarse_shape_stiffness(r))


def _check_field(field: FineCoefficientField, hier: MeshHierarchy) -> np.ndarray:
    if field.values.size != hier.n_fine**2:
        raise DimensionError(
            f"coefficient field has {field.values.size} cells, mesh has {hier.n_fine ** 2}"
        )
    return field.values.reshape(hier.n_fine, hier.n_fine)


def assemble_stiffness(level: str, field: FineCoefficientField, hier: MeshHierarchy) -> CsrMatrix:
    """Stiffness matrix on the interior DOFs of ``level`` ('fine' or 'coarse').

    Coarse entries are integrated over fine cells, so the coefficient is
    never averaged.
    """
    grid = _check_field(field, hier)
    if level == "fine":
        return assemble_cells(grid, grid_dof_map(hier.n_fine, hier.n_fine), hier.fine_dof_count)
    if level == "coarse":
        mats = coarse_element_matrices(grid, hier.fine_per_coarse)
        return assemble_elements(mats, grid_dof_map(hier.n_coarse, hier.n_coarse), hier.coarse_dof_count)
    raise ConfigurationError(f"unknown mesh level {level!r}")


_GAUSS = 0.5 + np.array([-1.0, 1.0]) / (2.0 * np.sqrt(3.0))


def assemble_load(f, hier: MeshHierarchy) -> np.ndarray:
    """Fine load vector with 2x2 Gauss quadrature per cell.

    ``f(x, y)`` should accept numpy arrays; scalar-only callables are
    vectorized automatically.
    """
    n, h = hier.n_fine, hier.h
    c = np.arange(n)
    cy, cx = np.meshgrid(c, c, indexing="ij")
    xi, eta = np.meshgrid(_GAUSS, _GAUSS, indexing="ij")
    xi, eta = xi.ravel(), eta.ravel()
    X = (cx[..., None] + xi) * h
    Y = (cy[..., None] + eta) * h
    try:
        fv = np.asarray(f(X, Y), dtype=np.float64)
    except (TypeError, ValueError):
        fv = np.vectorize(f, otypes=[np.float64])(X, Y)
    fv = np.broadcast_to(fv, X.shape)
    shape = np.stack([(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta], axis=-1)
    local = np.einsum("...q,qa->...a", fv, shape) * (h * h / 4.0)  # (n, n, 4)
    nodes = grid_dof_map(n, n)[cy[..., None] + CORNER_DY, cx[..., None] + CORNER_DX]
    keep = nodes >= 0
    b = np.zeros(hier.fine_dof_count)
    np.add.at(b, nodes[keep], local[keep])
    return b


def prolongation(hier: MeshHierarchy) -> CsrMatrix:
    """Bilinear interpolation from coarse to fine interior nodal values."""
    n, r = hier.n_fine, hier.fine_per_coarse
    i = np.arange(1, n)
    J, I = np.meshgrid(i, i, indexing="ij")
    I, J = I.ravel(), J.ravel()
    rows = hier.fine_dof(I, J)
    tx, ty = np.minimum(I // r, hier.n_coarse - 1), np.minimum(J // r, hier.n_coarse - 1)
    sx, sy = (I - tx * r) / r, (J - ty * r) / r
    trip_r, trip_c, trip_v = [], [], []
    for dx, dy in zip(CORNER_DX, CORNER_DY):
        w = (sx if dx else 1 - sx) * (sy if dy else 1 - sy)
        ci, cj = tx + dx, ty + dy
        keep = (w > 0) & (ci > 0) & (ci < hier.n_coarse) & (cj > 0) & (cj < hier.n_coarse)
        trip_r.append(rows[keep])
        trip_c.append(hier.coarse_dof(ci[keep], cj[keep]))
        trip_v.append(w[keep])
    return csr_from_triplets(
        (np.concatenate(trip_r), np.concatenate(trip_c), np.concatenate(trip_v)),
        hier.fine_dof_count,
        hier.coarse_dof_count,
    )


def galerkin_coarse(k_fine: CsrMatrix, p: CsrMatrix) -> CsrMatrix:
    """``P^T K P``."""
    ps = p.as_scipy
    return CsrMatrix.from_scipy((ps.T @ k_fine.as_scipy @ ps).tocsr())


def energy_norm(k: CsrMatrix, v) -> float:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (k.nrows,):
        raise DimensionError(f"vector of length {v.shape} for a {k.nrows}x{k.ncols} matrix")
    q = float(v @ spmv(k, v))
    if q < 0.0:
        raise SpdViolationError(f"negative quadratic form v^T K v = {q!r}")
    return float(np.sqrt(q))

"""Periodic background with randomly activated eps-cell defects.

Every eps-cell is drawn at ``cell_resolution x cell_resolution`` fine cells.
A non-defective cell follows ``background_mask`` and a defective one
``defect_mask`` (``True`` marks a beta-valued fine cell, ``False`` alpha).
Mask arrays are indexed ``[y, x]`` with row 0 at the bottom of the cell.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from .errors import ConfigurationError, DimensionError
from .mesh import FineCoefficientField, MeshHierarchy, as_fraction

GEOMETRIES = ("erasure", "lshape", "shifted", "custom")


@dataclass(frozen=True, eq=False)
class CoefficientModel:
    alpha: float
    beta: float
    eps: float
    cell_resolution: int
    background_mask: np.ndarray
    defect_mask: np.ndarray
    geometry: str

    @property
    def contrast(self) -> float:
        return self.beta / self.alpha

    def mask_bytes(self) -> bytes:
        return np.packbits(np.concatenate([self.background_mask.ravel(), self.defect_mask.ravel()])).tobytes()

    def check_hierarchy(self, hier: MeshHierarchy):
        if hier.fine_per_eps != self.cell_resolution or abs(hier.eps - self.eps) > 1e-15:
            raise ConfigurationError(
                f"model (eps={self.eps}, resolution {self.cell_resolution}) does not match "
                f"mesh {hier.describe()} with eps/h={hier.fine_per_eps}"
            )


def _square(r: int, x0: int, y0: int, side: int) -> np.ndarray:
    m = np.zeros((r, r), dtype=bool)
    m[y0 : y0 + side, x0 : x0 + side] = True
    return m


def geometry_masks(geometry: str, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Background and defect masks for the built-in geometries.

    All non-defective cells carry a centered beta-square of side eps/2.
    erasure: the defect removes the square.
    lshape: the defect is an L of a vertical (eps/4 x 3eps/4) and a
      horizontal (3eps/4 x eps/4) bar sharing the corner square at
      (eps/4, eps/4).
    shifted: the square moved by eps/4 towards the upper-right corner.
    """
    if r < 4 or r % 4:
        raise ConfigurationError(
            f"geometry {geometry!r} needs a cell resolution divisible by 4 (got {r})"
        )
    q = r // 4
    background = _square(r, q, q, 2 * q)
    if geometry == "erasure":
        defect = np.zeros((r, r), dtype=bool)
    elif geometry == "lshape":
        defect = np.zeros((r, r), dtype=bool)
        defect[q:r, q : 2 * q] = True
        defect[q : 2 * q, q:r] = True
    elif geometry == "shifted":
        defect = _square(r, 2 * q, 2 * q, 2 * q)
    else:
        raise ConfigurationError(f"unknown geometry {geometry!r}; choose from {GEOMETRIES}")
    return background, defect


def read_mask_file(path) -> tuple[np.ndarray, np.ndarray]:
    """Parse a custom mask file.

    Line 1 holds the resolution ``r``, then ``r`` lines of ``0``/``1`` for the
    background mask, a blank line, and ``r`` lines for the defect mask.  The
    first text line of each block is the top row of the cell.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    try:
        r = int(lines[0].strip())
    except (IndexError, ValueError) as exc:
        raise ConfigurationError(f"{path}: first line must be the resolution") from exc
    body = [ln.strip() for ln in lines[1:]]
    blocks, cur = [], []
    for ln in body:
        if ln:
            cur.append(ln)
        elif cur:
            blocks.append(cur)
            cur = []
    if cur:
        blocks.append(cur)
    if len(blocks) != 2 or any(len(b) != r or any(len(row) != r for row in b) for b in blocks):
        raise ConfigurationError(f"{path}: expected two {r}x{r} blocks of 0/1 characters")
    masks = []
    for b in blocks:
        if any(set(row) - {"0", "1"} for row in b):
            raise ConfigurationError(f"{path}: masks may only contain 0 and 1")
        masks.append(np.array([[c == "1" for c in row] for row in reversed(b)], dtype=bool))
    return masks[0], masks[1]


def build_model(geometry: str, alpha: float, beta: float, eps, cell_resolution: int,
                masks=None, mask_file=None) -> CoefficientModel:
    alpha, beta = float(alpha), float(beta)
    if not alpha > 0 or not beta >= alpha:
        raise ConfigurationError(f"need 0 < alpha <= beta, got alpha={alpha}, beta={beta}")
    r = int(cell_resolution)
    if geometry == "custom":
        if mask_file is not None:
            masks = read_mask_file(mask_file)
        if masks is None:
            raise ConfigurationError("custom geometry needs masks or a mask file")
        bg, df = (np.asarray(m, dtype=bool) for m in masks)
        if bg.shape != (r, r) or df.shape != (r, r):
            raise ConfigurationError(f"custom masks must be {r}x{r}")
        if r < 4 or r % 2:
            raise ConfigurationError(f"cell resolution {r} must be even and >= 4")
    else:
        bg, df = geometry_masks(geometry, r)
    bg, df = bg.copy(), df.copy()
    bg.setflags(write=False)
    df.setflags(write=False)
    return CoefficientModel(alpha, beta, float(as_fraction(eps)), r, bg, df, geometry)


@dataclass(frozen=True, eq=False)
class Realization:
    p: float
    seed: int
    defect_bits: np.ndarray
    n_cells_eps: int

    def grid(self) -> np.ndarray:
        """Defect bits as an ``[ey, ex]`` grid."""
        return self.defect_bits.reshape(self.n_cells_eps, self.n_cells_eps)

    @property
    def n_defects(self) -> int:
        return int(self.defect_bits.sum())


def sample_realization(model: CoefficientModel, hier: MeshHierarchy, p: float, seed: int) -> Realization:
    """Independent Bernoulli(p) defect per eps-cell from a SplitMix64 stream."""
    if not 0.0 <= p <= 1.0:
        raise ConfigurationError(f"defect probability {p} outside [0, 1]")
    n = hier.n_cells_eps
    bits = rng.bernoulli_bits(int(seed), n * n, float(p))
    bits.setflags(write=False)
    return Realization(float(p), int(seed), bits, n)


def realization_from_bits(bits, p: float = float("nan"), seed: int = -1) -> Realization:
    bits = np.asarray(bits, dtype=bool)
    n = bits.shape[0] if bits.ndim == 2 else int(round(np.sqrt(bits.size)))
    bits = bits.reshape(-1).copy()
    if bits.size != n * n:
        raise DimensionError("defect bits must form a square grid")
    bits.setflags(write=False)
    return Realization(p, seed, bits, n)


def tile_cells(model: CoefficientModel, bits_grid: np.ndarray) -> np.ndarray:
    """Fine-cell coefficient grid for a block of eps-cells with given defect bits."""
    bits_grid = np.asarray(bits_grid, dtype=bool)
    r = model.cell_resolution
    ny, nx = bits_grid.shape
    bg = np.tile(model.background_mask, (ny, nx))
    df = np.tile(model.defect_mask, (ny, nx))
    defective = np.kron(bits_grid, np.ones((r, r), dtype=bool))
    return np.where(np.where(defective, df, bg), model.beta, model.alpha)


def rasterize(model: CoefficientModel, realization: Realization, hier: MeshHierarchy) -> FineCoefficientField:
    model.check_hierarchy(hier)
    if realization.n_cells_eps != hier.n_cells_eps:
        raise DimensionError(
            f"realization has {realization.n_cells_eps}^2 eps-cells, mesh has {hier.n_cells_eps}^2"
        )
    values = tile_cells(model, realization.grid())
    return FineCoefficientField(values.ravel(), model.alpha, model.beta)


def reference_patch_cells(model: CoefficientModel, hier: MeshHierarchy, ell: int) -> np.ndarray:
    """Coefficient A^(ell) on the reference patch (``ell = 0`` is the background)."""
    m = 2 * hier.eps_per_coarse
    bits = np.zeros(m * m, dtype=bool)
    if ell:
        bits[ell - 1] = True
    return tile_cells(model, bits.reshape(m, m))


def reference_element_cells(model: CoefficientModel, hier: MeshHierarchy, ell: int) -> np.ndarray:
    """Coefficient on the reference coarse element with a defect at ``ell``."""
    m = hier.eps_per_coarse
    bits = np.zeros(m * m, dtype=bool)
    if ell:
        bits[ell - 1] = True
    return tile_cells(model, bits.reshape(m, m))


@dataclass(frozen=True, eq=False)
class WeightVector:
    weights: np.ndarray  # int64, index 0 = background
    n_defects: int

    @property
    def active(self) -> np.ndarray:
        """Indices with nonzero weight, ascending."""
        return np.flatnonzero(self.weights)


def _block_weights(realization: Realization, ex0: int, ey0: int, m: int) -> WeightVector:
    local = realization.grid()[ey0 : ey0 + m, ex0 : ex0 + m]
    if local.shape != (m, m):
        raise DimensionError("requested block leaves the eps-cell grid")
    bits = local.ravel().astype(np.int64)
    n_def = int(bits.sum())
    w = np.empty(m * m + 1, dtype=np.int64)
    w[0] = 1 - n_def
    w[1:] = bits
    w.setflags(write=False)
    return WeightVector(w, n_def)


def patch_weights(realization: Realization, patch, hier: MeshHierarchy) -> WeightVector:
    """mu-weights of an interior vertex patch (row-major local eps-cells)."""
    vx, vy = patch.coarse_vertex
    m = hier.eps_per_coarse
    return _block_weights(realization, (vx - 1) * m, (vy - 1) * m, 2 * m)


def element_weights(realization: Realization, coarse_element, hier: MeshHierarchy) -> WeightVector:
    """lambda-weights of coarse element ``(tx, ty)``."""
    tx, ty = coarse_element
    m = hier.eps_per_coarse
    return _block_weights(realization, tx * m, ty * m, m)

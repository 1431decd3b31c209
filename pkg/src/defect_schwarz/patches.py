"""Vertex-centred overlapping patches.

The patch of interior coarse vertex ``(vx, vy)`` is the 2x2 block of coarse
elements around it.  Its local space holds the fine nodes strictly inside
the block, numbered row-major from the lower-left.  All patches are
translates of the reference patch at vertex ``(1, 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import MeshHierarchy


@dataclass(frozen=True, eq=False)
class Patch:
    index: int
    coarse_vertex: tuple[int, int]
    cell_span: tuple[tuple[int, int], ...]
    fine_dofs: np.ndarray
    offset: tuple[int, int]


@dataclass(frozen=True)
class ReferencePatch:
    fine_per_coarse: int
    eps_per_coarse: int
    fine_per_eps: int

    @property
    def side(self) -> int:
        """Interior fine nodes per side, 2H/h - 1."""
        return 2 * self.fine_per_coarse - 1

    @property
    def n_local(self) -> int:
        return self.side**2

    @property
    def cells_side(self) -> int:
        """Fine cells per side, 2H/h."""
        return 2 * self.fine_per_coarse

    @property
    def eps_side(self) -> int:
        return 2 * self.eps_per_coarse

    @property
    def n_ref(self) -> int:
        return self.eps_side**2

    def local_node(self, k):
        """Local index -> (a, b) node offsets from the patch's first interior node."""
        k = np.asarray(k)
        return k % self.side, k // self.side

    def eps_footprint(self, ell: int) -> tuple[slice, slice]:
        """Fine-cell (rows, cols) slice of local eps-cell ``ell >= 1``."""
        ly, lx = divmod(ell - 1, self.eps_side)
        r = self.fine_per_eps
        return slice(ly * r, (ly + 1) * r), slice(lx * r, (lx + 1) * r)


def reference_patch(hier: MeshHierarchy) -> ReferencePatch:
    return ReferencePatch(hier.fine_per_coarse, hier.eps_per_coarse, hier.fine_per_eps)


def build_patches(hier: MeshHierarchy) -> list[Patch]:
    """One patch per interior coarse vertex, ordered row-major by vertex."""
    r = hier.fine_per_coarse
    side = 2 * r - 1
    a = np.arange(side)
    B, A = np.meshgrid(a, a, indexing="ij")
    out = []
    for vy in range(1, hier.n_coarse):
        for vx in range(1, hier.n_coarse):
            ox, oy = (vx - 1) * r, (vy - 1) * r
            dofs = hier.fine_dof(ox + 1 + A, oy + 1 + B).ravel().astype(np.int64)
            dofs.setflags(write=False)
            span = ((vx - 1, vy - 1), (vx, vy - 1), (vx - 1, vy), (vx, vy))
            out.append(Patch(len(out), (vx, vy), span, dofs, (ox, oy)))
    return out


def restriction_indices(patch: Patch) -> np.ndarray:
    return patch.fine_dofs


def restrict(patch: Patch, v: np.ndarray) -> np.ndarray:
    return v[patch.fine_dofs]


def scatter(patch: Patch, local: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros((n,) + local.shape[1:])
    out[patch.fine_dofs] = local
    return out


def translation_map(patch: Patch, ref: ReferencePatch, hier: MeshHierarchy) -> np.ndarray:
    """Permutation ``perm`` with ``perm[k]`` = position in ``patch.fine_dofs``
    of the node that reference-local node ``k`` translates to."""
    k = np.arange(ref.n_local)
    a, b = ref.local_node(k)
    ox, oy = patch.offset
    glob = hier.fine_dof(ox + 1 + a, oy + 1 + b)
    pos = np.searchsorted(patch.fine_dofs, glob)
    if np.any(patch.fine_dofs[np.minimum(pos, len(patch.fine_dofs) - 1)] != glob):
        raise ValueError(f"patch {patch.index} is not a translate of the reference patch")
    return pos


def patch_cells(patch: Patch, ref: ReferencePatch) -> tuple[slice, slice]:
    """Fine-cell (rows, cols) slice of the global cell grid covered by the patch."""
    ox, oy = patch.offset
    n = ref.cells_side
    return slice(oy, oy + n), slice(ox, ox + n)

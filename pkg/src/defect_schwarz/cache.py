"""Binary on-disk cache for reference dictionaries.

Layout (little-endian)::

    b"OODD1"
    u32 n_fine, u32 n_coarse, u32 n_cells_eps
    f64 alpha, f64 beta
    u8 len, utf-8 geometry tag
    u32 cell_resolution, packed background+defect mask bits
    u32 n_factors, u32 dimension, u32 bandwidth, f64 band[n_factors, bandwidth+1, dimension]
    u32 n_blocks, f64 blocks[n_blocks, 4, 4]
"""
from __future__ import annotations

import hashlib
import logging
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .coefficient import CoefficientModel
from .errors import CacheFormatError
from .mesh import MeshHierarchy
from .preconditioner import ReferenceDictionary, build_reference_dictionary
from .sparse import SpdFactorization

MAGIC = b"OODD1"
log = logging.getLogger(__name__)


def cache_key(model: CoefficientModel, hier: MeshHierarchy) -> str:
    text = (f"{hier.n_fine},{hier.n_coarse},{hier.n_cells_eps},{model.geometry},"
            f"{model.alpha!r},{model.beta!r},{model.cell_resolution}")
    h = hashlib.sha256(text.encode())
    h.update(model.mask_bytes())
    return h.hexdigest()


def cache_path(cache_dir, model: CoefficientModel, hier: MeshHierarchy) -> Path:
    return Path(cache_dir) / f"oodd-{cache_key(model, hier)[:24]}.bin"


def _header(model: CoefficientModel, hier: MeshHierarchy) -> bytes:
    tag = model.geometry.encode()
    masks = model.mask_bytes()
    return (MAGIC + struct.pack("<3I2d", hier.n_fine, hier.n_coarse, hier.n_cells_eps, model.alpha, model.beta)
            + struct.pack("<B", len(tag)) + tag + struct.pack("<I", model.cell_resolution) + masks)


def save_dictionary(dictionary: ReferenceDictionary, path) -> Path:
    """Write ``dictionary`` atomically to ``path``."""
    path = Path(path)
    factors = dictionary.patch_factors
    dim, bw = factors[0].dimension, factors[0].bandwidth
    if any(f.dimension != dim or f.bandwidth != bw for f in factors):
        raise CacheFormatError("reference factors differ in shape")
    payload = [
        _header(dictionary.model, dictionary.hier),
        struct.pack("<3I", len(factors), dim, bw),
        np.stack([f.band for f in factors]).astype("<f8").tobytes(),
        struct.pack("<I", len(dictionary.coarse_blocks)),
        np.ascontiguousarray(dictionary.coarse_blocks, dtype="<f8").tobytes(),
    ]
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".oodd-")
    try:
        with os.fdopen(fd, "wb") as fh:
            for chunk in payload:
                fh.write(chunk)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


class _Reader:
    def __init__(self, data: bytes, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CacheFormatError(f"{self.path}: truncated cache file")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_dictionary(path, model: CoefficientModel, hier: MeshHierarchy) -> ReferenceDictionary:
    """Read a cached dictionary and check it was built for ``model`` on ``hier``."""
    rd = _Reader(Path(path).read_bytes(), path)
    if rd.take(len(MAGIC)) != MAGIC:
        raise CacheFormatError(f"{path}: bad magic bytes")
    expected = _header(model, hier)
    rd.pos = 0
    if rd.take(len(expected)) != expected:
        raise CacheFormatError(f"{path}: cache header does not match the requested mesh and model")
    n_f, dim, bw = rd.unpack("<3I")
    bands = np.frombuffer(rd.take(8 * n_f * (bw + 1) * dim), dtype="<f8").reshape(n_f, bw + 1, dim)
    (n_b,) = rd.unpack("<I")
    blocks = np.frombuffer(rd.take(8 * n_b * 16), dtype="<f8").reshape(n_b, 4, 4).astype(np.float64)
    if rd.pos != len(rd.data):
        raise CacheFormatError(f"{path}: trailing bytes after payload")
    if n_f != (2 * hier.eps_per_coarse) ** 2 + 1 or n_b != hier.eps_per_coarse**2 + 1:
        raise CacheFormatError(f"{path}: dictionary size does not match the mesh")
    factors = [SpdFactorization(dim, bw, bands[i].astype(np.float64)) for i in range(n_f)]
    blocks.setflags(write=False)
    return ReferenceDictionary(model, hier, factors, blocks, 0.0)


def get_or_build(model: CoefficientModel, hier: MeshHierarchy, cache_dir=None, jobs: int = 1) -> ReferenceDictionary:
    """Load the dictionary from ``cache_dir`` if present, else build and store it."""
    if cache_dir is None:
        return build_reference_dictionary(model, hier, jobs=jobs)
    path = cache_path(cache_dir, model, hier)
    if path.exists():
        try:
            d = load_dictionary(path, model, hier)
            log.info("loaded reference dictionary from %s", path)
            return d
        except CacheFormatError as exc:
            log.warning("ignoring unusable cache file: %s", exc)
    d = build_reference_dictionary(model, hier, jobs=jobs)
    save_dictionary(d, path)
    return d

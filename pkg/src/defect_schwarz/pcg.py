"""Preconditioned conjugate gradients with energy-error tracking."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, DimensionError, IndefinitePreconditionerError, PcgDivergenceError
from .sparse import CsrMatrix, spmv


@dataclass
class PcgReport:
    converged: bool
    iterations: int
    residual_history: list[float]
    energy_error_history: Optional[list[float]]
    final_x: np.ndarray
    indefinite_steps: int = 0


def pcg(K: CsrMatrix, b, precond: Callable[[np.ndarray], np.ndarray] | None = None,
        tol: float = 1e-6, maxit: int = 200, x0=None, reference=None,
        indefinite: str = "raise") -> PcgReport:
    """Solve ``K x = b`` with ``precond`` as left preconditioner.

    Stops once ``||b - K x_k||_2 <= tol * ||b||_2`` or after ``maxit``
    iterations.  With ``reference`` given, ``||reference - x_k||_K`` is
    recorded for every iterate.

    ``indefinite`` selects what happens when ``<z, r> <= 0``: ``"raise"``
    throws ``IndefinitePreconditionerError``; ``"continue"`` keeps the
    recurrence going like ``scipy.sparse.linalg.cg`` does (only an exact
    zero is fatal) and counts the event in ``indefinite_steps``.
    """
    if indefinite not in ("raise", "continue"):
        raise ConfigurationError(f"indefinite must be 'raise' or 'continue', got {indefinite!r}")
    b = np.asarray(b, dtype=np.float64)
    n = K.nrows
    if b.shape != (n,):
        raise DimensionError(f"rhs has shape {b.shape}, matrix is {n}x{K.ncols}")
    if precond is None:
        precond = np.copy
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    if x.shape != (n,):
        raise DimensionError(f"x0 has shape {x.shape}, expected ({n},)")

    def energy_error(xk):
        e = reference - xk
        return math.sqrt(max(float(e @ spmv(K, e)), 0.0))

    r = b - spmv(K, x)
    bnorm = float(np.linalg.norm(b))
    target = tol * bnorm
    res = [float(np.linalg.norm(r))]
    errs = [energy_error(x)] if reference is not None else None
    if res[0] <= target:
        return PcgReport(True, 0, res, errs, x)

    n_indef = 0

    def check_rho(rho, k):
        nonlocal n_indef
        if not np.isfinite(rho):
            raise PcgDivergenceError(k, "non-finite preconditioned residual")
        if rho <= 0.0:
            if indefinite == "raise" or rho == 0.0:
                raise IndefinitePreconditionerError(k, f"<z, r> = {rho!r} <= 0")
            n_indef += 1

    z = np.asarray(precond(r), dtype=np.float64)
    rho = float(r @ z)
    check_rho(rho, 0)
    p = z.copy()
    converged = False
    k = 0
    while k < maxit:
        k += 1
        q = spmv(K, p)
        pq = float(p @ q)
        if not np.isfinite(pq) or pq == 0.0:
            raise PcgDivergenceError(k, f"<p, Kp> = {pq!r}")
        step = rho / pq
        x += step * p
        r -= step * q
        res.append(float(np.linalg.norm(r)))
        if errs is not None:
            errs.append(energy_error(x))
        if not np.isfinite(res[-1]):
            raise PcgDivergenceError(k, "non-finite residual")
        if res[-1] <= target:
            converged = True
            break
        z = np.asarray(precond(r), dtype=np.float64)
        rho_new = float(r @ z)
        check_rho(rho_new, k)
        p = z + (rho_new / rho) * p
        rho = rho_new
    return PcgReport(converged, k, res, errs, x, n_indef)


def theoretical_bound(kappa: float, k: int) -> float:
    """Classical PCG error factor 2 ((sqrt(kappa) - 1) / (sqrt(kappa) + 1))^k."""
    if not kappa >= 1.0:
        raise ConfigurationError(f"condition number {kappa} must be >= 1")
    s = math.sqrt(kappa)
    return 2.0 * ((s - 1.0) / (s + 1.0)) ** k


def rmse_energy_curves(reports: Sequence[PcgReport]) -> np.ndarray:
    """RMSE over samples of the energy error per iteration.

    Shorter histories are padded with their last value.
    """
    if not reports:
        raise ConfigurationError("no reports to aggregate")
    hists = []
    for rep in reports:
        if rep.energy_error_history is None:
            raise ConfigurationError("report carries no energy-error history")
        hists.append(rep.energy_error_history)
    return rmse_of_histories(hists)


def rmse_of_histories(hists: Sequence[Sequence[float]]) -> np.ndarray:
    length = max(len(h) for h in hists)
    padded = np.array([list(h) + [h[-1]] * (length - len(h)) for h in hists], dtype=np.float64)
    return np.sqrt(np.mean(padded**2, axis=0))

"""Monte-Carlo comparison of the Direct, ND and OO preconditioners."""
from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import cache
from .analysis import CostModel, operator_deviation
from .coefficient import build_model, rasterize, sample_realization
from .errors import ConfigurationError, DefectSchwarzError
from .mesh import assemble_load, assemble_stiffness, build_hierarchy
from .pcg import pcg, rmse_of_histories
from .preconditioner import VARIANTS, build_preconditioner, patch_layout
from .rng import splitmix64
from .sparse import factorize_spd, solve_spd

log = logging.getLogger(__name__)

SAMPLES_HEADER = ["variant", "p", "sample", "seed", "iterations", "converged", "energy_error", "setup_s", "solve_s"]
SUMMARY_HEADER = ["variant", "p", "mean_iters", "std_iters", "n_outliers", "convergence_fraction"]
RMSE_HEADER = ["variant", "p", "iteration", "rmse"]
DEVIATION_HEADER = ["p", "variant", "rel_deviation_rmse"]


def source_term(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y)


@dataclass(frozen=True)
class ExperimentConfig:
    h: str = "1/64"
    H: str = "1/8"
    eps: str = "1/16"
    geometry: str = "erasure"
    alpha: float = 1.0
    beta: float = 100.0
    p_values: tuple = (0.02, 0.06, 0.10)
    n_samples: int = 50
    base_seed: int = 0
    tol: float = 1e-6
    maxit: int = 200
    nd_coarse: str = "frozen"
    out: Optional[str] = None
    variants: tuple = VARIANTS
    jobs: int = 1
    on_indefinite: str = "continue"
    timings: str = "none"
    mask_file: Optional[str] = None
    cache_dir: Optional[str] = None
    deviation: bool = False
    deviation_vectors: int = 1

    def validate(self):
        hier = build_hierarchy(self.h, self.H, self.eps)
        model = build_model(self.geometry, self.alpha, self.beta, hier.eps, hier.fine_per_eps,
                            mask_file=self.mask_file)
        if self.n_samples < 1:
            raise ConfigurationError("n_samples must be >= 1")
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive")
        if self.maxit < 1:
            raise ConfigurationError("maxit must be >= 1")
        if not self.p_values or any(not 0.0 <= p <= 1.0 for p in self.p_values):
            raise ConfigurationError(f"defect probabilities must lie in [0, 1], got {self.p_values}")
        bad = [v for v in self.variants if v not in VARIANTS]
        if bad or not (self.variants or self.deviation):
            raise ConfigurationError(f"unknown variants {bad}; choose from {VARIANTS}")
        if self.nd_coarse not in ("frozen", "exact"):
            raise ConfigurationError("nd_coarse must be 'frozen' or 'exact'")
        if self.on_indefinite not in ("raise", "continue"):
            raise ConfigurationError("on_indefinite must be 'raise' or 'continue'")
        if self.timings not in ("none", "wall"):
            raise ConfigurationError("timings must be 'none' or 'wall'")
        if self.jobs < 1 or self.deviation_vectors < 1:
            raise ConfigurationError("jobs and deviation_vectors must be >= 1")
        return hier, model


@dataclass
class SampleRow:
    variant: str
    p: float
    sample: int
    seed: int
    iterations: Optional[int]
    converged: bool
    energy_error: Optional[float]
    setup_s: float = 0.0
    solve_s: float = 0.0
    error: Optional[str] = None


@dataclass
class IterationStats:
    mean: float
    std: float
    n_outliers: int
    n_used: int


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list = field(default_factory=list)
    histories: dict = field(default_factory=dict)  # (variant, p) -> list of energy histories
    deviations: list = field(default_factory=list)  # (p, variant, sample, value)
    offline_seconds: float = 0.0
    n_patches: int = 0
    n_ref: int = 1

    def cells(self):
        seen = []
        for r in self.rows:
            if (r.variant, r.p) not in seen:
                seen.append((r.variant, r.p))
        return seen

    def summary(self) -> list:
        out = []
        for variant, p in self.cells():
            rows = [r for r in self.rows if r.variant == variant and r.p == p]
            st = iteration_stats(rows)
            frac = sum(r.converged for r in rows) / len(rows)
            out.append((variant, p, st, frac))
        return out

    def rmse_curves(self) -> dict:
        return {key: rmse_of_histories(h) for key, h in self.histories.items() if h}

    def deviation_summary(self) -> list:
        cells: dict = {}
        for p, variant, _, d in self.deviations:
            cells.setdefault((p, variant), []).append(d)
        return [(p, v, math.sqrt(sum(d * d for d in ds) / len(ds))) for (p, v), ds in cells.items()]

    def cost_model(self) -> Optional[CostModel]:
        """Cost model from measured timings; needs all three variants."""
        ok = {v: [r for r in self.rows if r.variant == v and r.error is None] for v in VARIANTS}
        if not all(ok.values()) or not self.n_patches:
            return None

        def mean(xs):
            return sum(xs) / len(xs)

        def iters(v):
            conv = [r.iterations for r in ok[v] if r.converged]
            return mean(conv) if conv else float(self.config.maxit)

        solves = [r.solve_s / r.iterations for rs in ok.values() for r in rs if r.iterations]
        return CostModel(
            t_patch=mean([r.setup_s for r in ok["direct"]]) / self.n_patches,
            t_comb=mean([r.setup_s for r in ok["oo"]]) / self.n_patches,
            t_pcg=mean(solves) if solves else 0.0,
            n_ref=self.n_ref,
            n_patches=self.n_patches,
            k_direct=iters("direct"),
            k_nd=iters("nd"),
            k_oo=iters("oo"),
        )


def sample_seed(base_seed: int, sample: int) -> int:
    return splitmix64(base_seed + sample)


def tukey_stats(values: Sequence[float]) -> Optional[IterationStats]:
    """Mean and population std after dropping points outside the 1.5 IQR fence."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        return None
    q1, q3 = np.percentile(x, [25, 75])
    iqr = q3 - q1
    keep = (x >= q1 - 1.5 * iqr) & (x <= q3 + 1.5 * iqr)
    kept = x[keep]
    return IterationStats(float(kept.mean()), float(kept.std()), int((~keep).sum()), int(kept.size))


def iteration_stats(rows) -> Optional[IterationStats]:
    """Statistics over converged rows; ``None`` marks "nothing converged"."""
    vals = []
    for r in rows:
        if isinstance(r, SampleRow):
            if r.converged:
                vals.append(r.iterations)
        else:
            vals.append(r)
    return tukey_stats(vals)


@dataclass(frozen=True, eq=False)
class _Context:
    cfg: ExperimentConfig
    hier: object
    model: object
    dictionary: object
    load: np.ndarray


def _run_sample(ctx: _Context, p: float, s: int):
    cfg, hier, model = ctx.cfg, ctx.hier, ctx.model
    seed = sample_seed(cfg.base_seed, s)
    real = sample_realization(model, hier, p, seed)
    field_ = rasterize(model, real, hier)
    K = assemble_stiffness("fine", field_, hier)
    u = solve_spd(factorize_spd(K), ctx.load) if cfg.variants else None
    rows, hists, devs, states = [], {}, [], {}
    for variant in cfg.variants:
        t0 = time.perf_counter()
        try:
            state = build_preconditioner(variant, model, real, hier, ctx.dictionary,
                                         nd_coarse=cfg.nd_coarse, field=field_)
            t1 = time.perf_counter()
            rep = pcg(K, ctx.load, state, tol=cfg.tol, maxit=cfg.maxit, reference=u,
                      indefinite=cfg.on_indefinite)
            t2 = time.perf_counter()
        except DefectSchwarzError as exc:
            log.warning("%s p=%r sample %d failed: %s", variant, p, s, exc)
            rows.append(SampleRow(variant, p, s, seed, None, False, None, error=str(exc)))
            continue
        states[variant] = state
        hists[variant] = rep.energy_error_history
        rows.append(SampleRow(variant, p, s, seed, rep.iterations, rep.converged,
                              rep.energy_error_history[-1], t1 - t0, t2 - t1))
    if cfg.deviation:
        try:
            exact = states.get("direct") or build_preconditioner("direct", model, real, hier, field=field_)
            for variant in ("nd", "oo"):
                bbar = states.get(variant) or build_preconditioner(variant, model, real, hier, ctx.dictionary,
                                                                   nd_coarse=cfg.nd_coarse)
                d = operator_deviation(exact, bbar, hier.fine_dof_count, cfg.deviation_vectors, seed)
                devs.append((p, variant, s, d))
        except DefectSchwarzError as exc:
            log.warning("deviation study p=%r sample %d failed: %s", p, s, exc)
    return rows, hists, devs


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Offline phase once, then every (p, sample) with every variant."""
    hier, model = cfg.validate()
    dictionary = None
    t0 = time.perf_counter()
    if {"nd", "oo"} & set(cfg.variants) or cfg.deviation:
        dictionary = cache.get_or_build(model, hier, cfg.cache_dir, jobs=cfg.jobs)
    offline = time.perf_counter() - t0
    load = assemble_load(source_term, hier)
    ctx = _Context(cfg, hier, model, dictionary, load)
    tasks = [(p, s) for p in cfg.p_values for s in range(cfg.n_samples)]
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            outputs = list(pool.map(lambda t: _run_sample(ctx, *t), tasks))
    else:
        outputs = [_run_sample(ctx, *t) for t in tasks]

    order = {v: i for i, v in enumerate(cfg.variants)}
    pord = {p: i for i, p in enumerate(cfg.p_values)}
    res = ExperimentResult(cfg, offline_seconds=offline, n_patches=patch_layout(hier).n_patches,
                           n_ref=dictionary.n_ref + 1 if dictionary else 1)
    for (p, s), (rows, hists, devs) in zip(tasks, outputs):
        res.rows.extend(rows)
        for v, h in hists.items():
            res.histories.setdefault((v, p), []).append(h)
        res.deviations.extend(devs)
    res.rows.sort(key=lambda r: (order[r.variant], pord[r.p], r.sample))
    res.histories = {k: res.histories[k] for k in sorted(res.histories, key=lambda k: (order[k[0]], pord[k[1]]))}
    res.deviations.sort(key=lambda d: (pord[d[0]], d[1], d[2]))
    return res


def run_deviation_study(cfg: ExperimentConfig) -> ExperimentResult:
    """Operator deviation of ND and OO from Direct, without PCG solves."""
    return run_experiment(replace(cfg, variants=(), deviation=True))


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write(path: Path, header, rows):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(x) for x in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_csv(result: ExperimentResult, path) -> list:
    """Write samples, summary, rmse and deviation tables into directory ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    wall = result.config.timings == "wall"
    samples = [
        (r.variant, r.p, r.sample, r.seed, r.iterations, r.converged, r.energy_error,
         r.setup_s if wall and r.error is None else None, r.solve_s if wall and r.error is None else None)
        for r in result.rows
    ]
    summary = [
        (v, p, st.mean if st else None, st.std if st else None, st.n_outliers if st else 0, frac)
        for v, p, st, frac in result.summary()
    ]
    rmse = [(v, p, k, float(e)) for (v, p), curve in result.rmse_curves().items() for k, e in enumerate(curve)]
    files = [out / "samples.csv", out / "summary.csv", out / "rmse.csv", out / "deviation.csv"]
    _write(files[0], SAMPLES_HEADER, samples)
    _write(files[1], SUMMARY_HEADER, summary)
    _write(files[2], RMSE_HEADER, rmse)
    _write(files[3], DEVIATION_HEADER, result.deviation_summary())
    return files


def read_samples(path) -> list:
    """Parse a samples.csv back into ``SampleRow`` objects."""
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(SampleRow(
                rec["variant"], float(rec["p"]), int(rec["sample"]), int(rec["seed"]),
                int(rec["iterations"]) if rec["iterations"] else None,
                rec["converged"] == "1",
                float(rec["energy_error"]) if rec["energy_error"] else None,
                float(rec["setup_s"]) if rec["setup_s"] else 0.0,
                float(rec["solve_s"]) if rec["solve_s"] else 0.0,
            ))
    return rows


def write_cost(cm: CostModel, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in vars(cm).items():
            fh.write(f"{k}={v!r}\n")
    return path


def read_cost(path) -> CostModel:
    kv = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}: expected key=value, got {line!r}")
        k, v = (t.strip() for t in line.split("=", 1))
        kv[k] = v
    ints = {"n_ref", "n_patches"}
    names = set(CostModel.__dataclass_fields__)
    unknown = set(kv) - names
    missing = names - set(kv)
    if unknown or missing:
        raise ConfigurationError(f"{path}: unknown keys {sorted(unknown)}, missing keys {sorted(missing)}")
    try:
        return CostModel(**{k: int(v) if k in ints else float(v) for k, v in kv.items()})
    except ValueError as exc:
        raise ConfigurationError(f"{path}: {exc}") from exc


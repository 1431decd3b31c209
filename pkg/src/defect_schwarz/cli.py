"""Command-line entry point: ``defect-schwarz <subcommand> [flags]``."""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

from . import cache
from .analysis import break_even, check_stability_bounds, estimate_eta, spectrum
from .coefficient import rasterize, sample_realization
from .errors import ConfigurationError, DefectSchwarzError
from .experiment import (
    ExperimentConfig,
    read_cost,
    run_deviation_study,
    run_experiment,
    sample_seed,
    write_cost,
    write_csv,
)
from .mesh import assemble_stiffness
from .plots import emit_plots
from .preconditioner import VARIANTS, build_preconditioner

log = logging.getLogger("defect_schwarz")

SUBCOMMANDS = ("run", "compare-operators", "spectrum", "break-even", "cache")


def _plist(text: str) -> tuple:
    try:
        return tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")


def _vlist(text: str) -> tuple:
    return tuple(t.strip() for t in text.split(",") if t.strip())


def _common(sp: argparse.ArgumentParser, out_default: str | None = "results"):
    g = sp.add_argument_group("problem")
    g.add_argument("--h", default="1/64", help="fine mesh size, e.g. 1/64")
    g.add_argument("--H", default="1/8", help="coarse mesh size")
    g.add_argument("--eps", default="1/16", help="periodicity cell size")
    g.add_argument("--model", default="erasure", choices=["erasure", "lshape", "shifted", "custom"])
    g.add_argument("--mask-file", default=None, help="mask file for --model custom")
    g.add_argument("--alpha", type=float, default=1.0)
    g.add_argument("--beta", type=float, default=100.0)
    g.add_argument("--p", type=_plist, default=(0.02, 0.06, 0.10), help="comma-separated defect probabilities")
    g.add_argument("--samples", type=int, default=50)
    g.add_argument("--seed", type=int, default=0)
    s = sp.add_argument_group("solver")
    s.add_argument("--tol", type=float, default=1e-6)
    s.add_argument("--maxit", type=int, default=200)
    s.add_argument("--variants", type=_vlist, default=VARIANTS, help="comma list of direct,nd,oo")
    s.add_argument("--nd-coarse", choices=["frozen", "exact"], default="frozen")
    s.add_argument("--on-indefinite", choices=["continue", "raise"], default="continue",
                   help="PCG policy when <z, r> <= 0")
    o = sp.add_argument_group("execution")
    o.add_argument("--out", default=out_default, help="output directory")
    o.add_argument("--jobs", type=int, default=1)
    o.add_argument("--timings", choices=["none", "wall"], default="none",
                   help="write wall-clock columns to samples.csv (breaks byte-identical reruns)")
    o.add_argument("--cache-dir", default=None, help="reuse reference dictionaries stored here")
    o.add_argument("--deviation", action="store_true", help="also run the operator-deviation study")
    o.add_argument("--config", default=None, help="key=value file overriding flags")
    o.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="defect-schwarz",
                                 description="Offline-online Schwarz preconditioners for random defects.")
    sub = ap.add_subparsers(dest="command", metavar="{" + ",".join(SUBCOMMANDS) + "}")
    _common(sub.add_parser("run", help="Monte-Carlo PCG comparison of the variants"))
    _common(sub.add_parser("compare-operators", help="relative deviation of ND and OO from Direct"))
    sp = sub.add_parser("spectrum", help="dense spectra, eta and stability bounds (small meshes)")
    _common(sp)
    sp.set_defaults(h="1/32", H="1/4", eps="1/8", samples=1)
    be = sub.add_parser("break-even", help="break-even sample counts from a cost file")
    be.add_argument("--cost", required=True, help="key=value file with CostModel fields")
    be.add_argument("--config", default=None)
    be.add_argument("-v", "--verbose", action="store_true")
    ca = sub.add_parser("cache", help="build and store the reference dictionary")
    _common(ca)
    ca.set_defaults(cache_dir=".defect-schwarz-cache")
    return ap


def read_config(path) -> dict:
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{n}: expected key=value")
        k, v = (t.strip() for t in line.split("=", 1))
        out[k.lstrip("-")] = v
    return out


def apply_config(parser: argparse.ArgumentParser, ns: argparse.Namespace, values: dict):
    """Override parsed flags with config-file values, converted like the flags."""
    actions = {}
    for a in parser._actions:
        for opt in a.option_strings:
            if opt.startswith("--"):
                actions[opt[2:]] = a
    for key, raw in values.items():
        a = actions.get(key) or actions.get(key.replace("_", "-"))
        if a is None or a.dest in ("config", "help"):
            raise ConfigurationError(f"unknown config key {key!r}")
        if isinstance(a, argparse._StoreTrueAction):
            val = raw.lower() in ("1", "true", "yes", "on")
        else:
            try:
                val = a.type(raw) if a.type else raw
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise ConfigurationError(f"config key {key!r}: {exc}") from exc
            if a.choices is not None and val not in a.choices:
                raise ConfigurationError(f"config key {key!r}: {val!r} not in {list(a.choices)}")
        setattr(ns, a.dest, val)


def config_from_args(ns) -> ExperimentConfig:
    return ExperimentConfig(
        h=ns.h, H=ns.H, eps=ns.eps, geometry=ns.model, alpha=ns.alpha, beta=ns.beta,
        p_values=tuple(ns.p), n_samples=ns.samples, base_seed=ns.seed, tol=ns.tol, maxit=ns.maxit,
        nd_coarse=ns.nd_coarse, out=ns.out, variants=tuple(ns.variants), jobs=ns.jobs,
        on_indefinite=ns.on_indefinite, timings=ns.timings, mask_file=ns.mask_file,
        cache_dir=ns.cache_dir, deviation=ns.deviation,
    )


def _fmt_n(x: float) -> str:
    return "never" if math.isinf(x) else f"{x:.6g}"


def cmd_run(cfg: ExperimentConfig) -> int:
    res = run_experiment(cfg)
    out = Path(cfg.out or "results")
    write_csv(res, out)
    emit_plots(res, out)
    cm = res.cost_model()
    if cm is not None:
        write_cost(cm, out / "cost.txt")
    print(f"{'variant':8s} {'p':>6s} {'mean':>8s} {'std':>7s} {'outl':>5s} {'conv':>6s}")
    for v, p, st, frac in res.summary():
        if st is None:
            print(f"{v:8s} {p:6g} {'-':>8s} {'-':>7s} {'-':>5s} {frac:6.2f}")
        else:
            print(f"{v:8s} {p:6g} {st.mean:8.2f} {st.std:7.2f} {st.n_outliers:5d} {frac:6.2f}")
    for p, v, d in res.deviation_summary():
        print(f"deviation {v:3s} p={p:g}: {d:.4e}")
    print(f"wrote results to {out}/")
    return 0


def cmd_compare(cfg: ExperimentConfig) -> int:
    res = run_deviation_study(cfg)
    out = Path(cfg.out or "results")
    write_csv(res, out)
    emit_plots(res, out)
    for p, v, d in res.deviation_summary():
        print(f"p={p:g} {v:3s} rel_deviation_rmse={d:.6e}")
    return 0


def cmd_spectrum(cfg: ExperimentConfig) -> int:
    hier, model = cfg.validate()
    dictionary = cache.get_or_build(model, hier, cfg.cache_dir)
    out = Path(cfg.out or "results")
    out.mkdir(parents=True, exist_ok=True)
    header = ["p", "sample", "variant", "lambda_min", "lambda_max", "kappa", "eta", "bounds"]
    rows = []
    for p in cfg.p_values:
        for s in range(cfg.n_samples):
            real = sample_realization(model, hier, p, sample_seed(cfg.base_seed, s))
            field_ = rasterize(model, real, hier)
            K = assemble_stiffness("fine", field_, hier)
            exact = build_preconditioner("direct", model, real, hier, field=field_)
            ref = spectrum(K, exact)
            rows.append([p, s, "direct", ref.lambda_min, ref.lambda_max, ref.kappa, 0.0, ""])
            for v in cfg.variants:
                if v == "direct":
                    continue
                st = build_preconditioner(v, model, real, hier, dictionary, nd_coarse=cfg.nd_coarse)
                rep = spectrum(K, st)
                rep.eta = estimate_eta(K, exact, st)
                chk = check_stability_bounds(ref, rep)
                verdict = ("pass" if chk.passed else "FAIL") if chk.applicable else (
                    "contained" if chk.passed else "FAIL")
                rows.append([p, s, v, rep.lambda_min, rep.lambda_max, rep.kappa, rep.eta, verdict])
    with open(out / "spectrum.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows([[repr(x) if isinstance(x, float) else x for x in r] for r in rows])
    for r in rows:
        print(f"p={r[0]:g} s={r[1]} {r[2]:6s} lambda=[{r[3]:.4g}, {r[4]:.4g}] kappa={r[5]:.4g} "
              f"eta={r[6]:.3g} {r[7]}")
    return 0


def cmd_break_even(path) -> int:
    n_d, n_nd = break_even(read_cost(path))
    print(f"N*_direct = {_fmt_n(n_d)}")
    print(f"N*_nd = {_fmt_n(n_nd)}")
    return 0


def cmd_cache(cfg: ExperimentConfig) -> int:
    hier, model = cfg.validate()
    cache.get_or_build(model, hier, cfg.cache_dir, jobs=cfg.jobs)
    print(cache.cache_path(cfg.cache_dir, model, hier))
    return 0


def cli_main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if ns.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    sub = parser._subparsers._group_actions[0].choices[ns.command]
    try:
        if ns.config:
            apply_config(sub, ns, read_config(ns.config))
        if ns.command == "break-even":
            return cmd_break_even(ns.cost)
        cfg = config_from_args(ns)
        cfg.validate()
        if ns.command == "run":
            return cmd_run(cfg)
        if ns.command == "compare-operators":
            return cmd_compare(cfg)
        if ns.command == "spectrum":
            return cmd_spectrum(cfg)
        return cmd_cache(cfg)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DefectSchwarzError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()

import csv

import pytest

from defect_schwarz.analysis import CostModel
from defect_schwarz.cli import cli_main
from defect_schwarz.experiment import iteration_stats, read_samples, write_cost

SMALL = ["--h", "1/32", "--H", "1/4", "--eps", "1/8"]


def test_no_args_usage(capsys):
    assert cli_main([]) == 2
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["bogus"], ["run", "--nope"], ["run", "--samples", "x"],
                                  ["run", "--model", "round"]])
def test_bad_arguments(argv):
    assert cli_main(argv) == 2


def test_invalid_values_exit_2(tmp_path):
    assert cli_main(["run", "--h", "1/30", "--out", str(tmp_path)]) == 2
    assert cli_main(["run", *SMALL, "--samples", "0", "--out", str(tmp_path)]) == 2


def test_run_populates_results(tmp_path, capsys):
    out = tmp_path / "res"
    argv = ["run", *SMALL, "--model", "erasure", "--beta", "100", "--p", "0.02,0.1",
            "--samples", "3", "--seed", "7", "--out", str(out)]
    assert cli_main(argv) == 0
    names = {f.name for f in out.iterdir()}
    assert {"samples.csv", "summary.csv", "rmse.csv", "deviation.csv", "cost.txt",
            "iterations.svg", "rmse.svg"} <= names
    rows = read_samples(out / "samples.csv")
    assert len(rows) == 3 * 2 * 3
    with open(out / "summary.csv", newline="") as fh:
        for rec in csv.DictReader(fh):
            cell = [r for r in rows if r.variant == rec["variant"] and r.p == float(rec["p"])]
            assert abs(iteration_stats(cell).mean - float(rec["mean_iters"])) <= 1e-12
    assert "oo" in capsys.readouterr().out


def test_config_overrides_flags(tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("# small run\nsamples = 2\nvariants = oo\np = 0.1\n")
    out = tmp_path / "o"
    assert cli_main(["run", *SMALL, "--samples", "9", "--config", str(cfg), "--out", str(out)]) == 0
    rows = read_samples(out / "samples.csv")
    assert [(r.variant, r.p) for r in rows] == [("oo", 0.1)] * 2


@pytest.mark.parametrize("text", ["colour = red\n", "samples = many\n", "nd_coarse = maybe\n", "no equals\n"])
def test_config_errors(tmp_path, text):
    cfg = tmp_path / "c.txt"
    cfg.write_text(text)
    assert cli_main(["run", *SMALL, "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_break_even(tmp_path, capsys):
    cm = CostModel(t_patch=1.0, t_comb=0.01, t_pcg=0.1, n_ref=17, n_patches=100, k_direct=20, k_nd=60, k_oo=20)
    path = write_cost(cm, tmp_path / "cost.txt")
    assert cli_main(["break-even", "--cost", str(path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == f"N*_direct = {17 / 99:.6g}"
    assert out[1] == f"N*_nd = {16 / 3:.6g}"


def test_break_even_never(tmp_path, capsys):
    cm = CostModel(t_patch=1.0, t_comb=1.0, t_pcg=0.1, n_ref=17, n_patches=100, k_direct=20, k_nd=20, k_oo=20)
    assert cli_main(["break-even", "--cost", str(write_cost(cm, tmp_path / "c.txt"))]) == 0
    assert capsys.readouterr().out.count("never") == 2


def test_break_even_missing_file(tmp_path):
    assert cli_main(["break-even", "--cost", str(tmp_path / "none.txt")]) != 0


def test_cache_command(tmp_path, capsys):
    assert cli_main(["cache", *SMALL, "--cache-dir", str(tmp_path)]) == 0
    printed = capsys.readouterr().out.strip()
    assert printed.endswith(".bin") and list(tmp_path.glob("oodd-*.bin"))


def test_compare_operators(tmp_path, capsys):
    out = tmp_path / "cmp"
    assert cli_main(["compare-operators", *SMALL, "--p", "0.1", "--samples", "2", "--out", str(out)]) == 0
    with open(out / "deviation.csv", newline="") as fh:
        recs = list(csv.DictReader(fh))
    assert [(r["p"], r["variant"]) for r in recs] == [("0.1", "nd"), ("0.1", "oo")]
    assert "rel_deviation_rmse" in capsys.readouterr().out


def test_spectrum(tmp_path):
    out = tmp_path / "sp"
    assert cli_main(["spectrum", "--p", "0.1", "--out", str(out)]) == 0
    with open(out / "spectrum.csv", newline="") as fh:
        recs = list(csv.DictReader(fh))
    assert [r["variant"] for r in recs] == ["direct", "nd", "oo"]
    assert all("FAIL" not in r["bounds"] for r in recs)
    assert all(float(r["lambda_min"]) > 0 for r in recs)

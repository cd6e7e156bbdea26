"""CLI end-to-end: run, rate-study, check; output files and exit codes."""

import json
from pathlib import Path

import numpy as np
import pytest

from bregman_skm import PolynomialSteps, Trace, averaged_residual, step_sum
from bregman_skm.cli import main

TINY_CONFIG = {
    "schema_version": 1,
    "name": "smoke",
    "operator": {
        "kind": "softmax_policy", "dim": 6, "eta": 2.0, "matrix_seed": 3, "matrix_scale": 0.2,
    },
    "n_iters": 10,
    "seeds": [1],
    "variants": [
        {
            "name": "euclid",
            "geometry": {"kind": "euclidean"},
            "steps": {"kind": "harmonic_offset", "a": 10.0},
            "noise": {"kind": "gaussian", "sigma": 0.1, "seed": 2},
        },
        {
            "name": "entropy",
            "geometry": {"kind": "neg_entropy_simplex", "domain_floor": 0.01},
            "steps": {"kind": "harmonic_offset", "a": 10.0},
            "noise": {"kind": "gaussian", "sigma": 0.1, "seed": 2},
            "trim": {"kind": "log_schedule"},
        },
    ],
}


@pytest.fixture()
def tiny_config(tmp_path):
    path = tmp_path / "smoke.json"
    path.write_text(json.dumps(TINY_CONFIG))
    return path


class TestRunCommand:
    def test_end_to_end_outputs(self, tiny_config, tmp_path, capsys):
        out = tmp_path / "out"
        assert main(["run", str(tiny_config), "--out", str(out)]) == 0
        stdout = capsys.readouterr().out
        assert "euclid" in stdout and "entropy" in stdout
        for variant in ("euclid", "entropy"):
            csv = out / f"{variant}_seed1.csv"
            meta = out / f"{variant}_seed1.meta.json"
            assert csv.exists() and meta.exists()
            trace = Trace.read_csv(csv)
            assert len(trace) == 11  # rows 0..10 at stride 1
            doc = json.loads(meta.read_text())
            assert doc["rng_algorithm"] == "numpy-pcg64"
            assert "nonexpansiveness_probe" in doc and "oracle_residual" in doc
        assert (out / "summary.json").exists()
        assert (out / "summary.txt").exists()
        assert (out / "avg_residual.png").exists()

    def test_missing_config_exits_1(self, tmp_path, capsys):
        assert main(["run", str(tmp_path / "nope.json")]) == 1
        assert "error" in capsys.readouterr().err

    def test_bad_schema_exits_1(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        doc = dict(TINY_CONFIG)
        doc["surprise"] = True
        path.write_text(json.dumps(doc))
        assert main(["run", str(path)]) == 1
        assert "surprise" in capsys.readouterr().err

    def test_seed_override(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        assert main(["run", str(tiny_config), "--out", str(out), "--seeds", "7,8",
                     "--no-figures"]) == 0
        assert (out / "euclid_seed7.csv").exists()
        assert (out / "euclid_seed8.csv").exists()
        assert not (out / "euclid_seed1.csv").exists()

    def test_csv_roundtrip_avg_recompute(self, tiny_config, tmp_path):
        out = tmp_path / "out"
        main(["run", str(tiny_config), "--out", str(out), "--no-figures"])
        trace = Trace.read_csv(out / "entropy_seed1.csv")
        for N in (5, 10):
            stored = trace.avg_residual[trace.n == N][0]
            assert averaged_residual(trace, N) == pytest.approx(stored, abs=1e-12)

    def test_rerun_reproduces_outputs_bit_exactly(self, tiny_config, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        main(["run", str(tiny_config), "--out", str(out1), "--no-figures"])
        main(["run", str(tiny_config), "--out", str(out2), "--no-figures"])
        for name in ("euclid_seed1.csv", "entropy_seed1.csv", "summary.json"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


class TestRateStudyCommand:
    def test_study_outputs_and_slope(self, tmp_path):
        out = tmp_path / "rate"
        code = main(["rate-study", "--gamma", "0.75", "--n", "500", "--seeds", "2",
                     "--out", str(out), "--no-figures"])
        assert code == 0
        doc = json.loads((out / "rate_study.json").read_text())
        row = doc["rows"][0]
        assert row["gamma"] == 0.75
        assert row["fitted_slope_vs_A"] <= -0.25
        assert row["theoretical_exponent_vs_A"] == -0.5
        assert row["theoretical_exponent_vs_N"] == pytest.approx(-0.125)
        assert (out / "gamma0.75_seed0.csv").exists()

    def test_empty_gamma_usage_error(self, tmp_path, capsys):
        assert main(["rate-study", "--gamma", "", "--out", str(tmp_path / "x")]) == 1
        assert "gamma" in capsys.readouterr().err

    def test_gamma_out_of_range(self, tmp_path):
        assert main(["rate-study", "--gamma", "0.4", "--out", str(tmp_path / "x")]) == 1
        assert main(["rate-study", "--gamma", "1.0", "--out", str(tmp_path / "x")]) == 1

    def test_step_sum_ordering_between_gammas(self):
        # slower decay (smaller gamma) accumulates a larger step sum
        assert step_sum(PolynomialSteps(0.6), 1000) > step_sum(PolynomialSteps(0.9), 1000)


class TestCheckCommand:
    @pytest.mark.parametrize("suite", ["trim", "hilbert", "geometry"])
    def test_suites_pass(self, suite, capsys):
        assert main(["check", suite]) == 0
        out = capsys.readouterr().out
        assert "[PASS]" in out and "[FAIL]" not in out

    def test_unknown_suite_rejected(self):
        with pytest.raises(SystemExit):
            main(["check", "everything"])


class TestFigures:
    def test_rate_figure_written(self, tmp_path):
        out = tmp_path / "rate"
        main(["rate-study", "--gamma", "0.6,0.9", "--n", "300", "--seeds", "1", "--out", str(out)])
        assert (out / "rate_fit.png").exists()
        assert (out / "rate_study.txt").read_text().count("\n") >= 3

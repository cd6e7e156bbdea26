"""Command-line harness: `skm run`, `skm rate-study`, `skm check`."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import bound_envelope_check, fit_rate, step_sum
from .checks import SUITES, run_suite
from .config import load_experiment
from .errors import ConfigError, DegenerateFit, Diverged
from .experiments import run_experiment
from .geometry import EuclideanGeometry, NegEntropySimplexGeometry, PNormGeometry, rate_exponent
from .iteration import IterationConfig, PolynomialSteps, run
from .noise import GaussianNoise, ZeroNoise
from .operators import random_affine_average


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip() != ""]
    except ValueError as e:
        raise ConfigError(f"--seeds: {e}") from e


def _cli_geometry(name: str):
    if name == "euclidean":
        return EuclideanGeometry()
    if name == "neg_entropy_simplex":
        return NegEntropySimplexGeometry()
    if name.startswith("p_norm:"):
        return PNormGeometry(float(name.split(":", 1)[1]))
    raise ConfigError(
        f"unknown geometry {name!r} (use euclidean, neg_entropy_simplex, or p_norm:<p>)"
    )


def cmd_run(args) -> int:
    try:
        cfg = load_experiment(args.config)
        seeds = _parse_seeds(args.seeds) if args.seeds else None
    except (ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    out_dir = args.out or cfg.outputs or f"skm_out/{cfg.name}"
    table, results = run_experiment(cfg, out_dir, seeds=seeds)
    if not args.no_figures:
        from .report import experiment_figures

        experiment_figures(results, out_dir)
    print(table.format_text())
    print(f"\noutputs written to {Path(out_dir).resolve()}")
    return 2 if table.diverged else 0


def cmd_rate_study(args) -> int:
    try:
        if not args.gamma:
            raise ConfigError("--gamma: need at least one value")
        gammas = [float(g) for g in args.gamma.split(",") if g.strip() != ""]
        if not gammas:
            raise ConfigError("--gamma: need at least one value")
        for g in gammas:
            if not 0.5 < g < 1.0:
                raise ConfigError(f"--gamma: values must lie in (1/2, 1), got {g}")
        geom = _cli_geometry(args.geometry)
        if args.seeds < 1:
            raise ConfigError("--seeds: need a positive seed count")
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    out = Path(args.out or "skm_out/rate_study")
    out.mkdir(parents=True, exist_ok=True)
    op = random_affine_average(args.dim, matrix_seed=args.matrix_seed, matrix_norm=args.matrix_norm)
    noise = GaussianNoise(args.sigma, seed=7) if args.sigma > 0 else ZeroNoise(seed=7)
    p = rate_exponent(geom)

    rows = []
    curves = {}
    diverged = False
    for gamma in gammas:
        steps = PolynomialSteps(gamma)
        slopes, envelopes = [], []
        last_trace = None
        for seed in range(args.seeds):
            cfg = IterationConfig(
                operator=op, geometry=geom, steps=steps, noise=noise,
                n_iters=args.n, seed=seed, record_every=1 if args.n <= 10_000 else None,
            )
            try:
                trace = run(cfg)
            except Diverged as e:
                trace = e.trace
                diverged = True
            last_trace = trace
            envelopes.append(bound_envelope_check(trace, p))
            try:
                slopes.append(fit_rate(trace, p, 0.5).fitted_slope)
            except DegenerateFit:
                pass
            trace.write_csv(out / f"gamma{gamma}_seed{seed}.csv")
        a_n = step_sum(steps, args.n)
        slope_med = float(np.median(slopes)) if slopes else float("nan")
        rows.append(
            {
                "gamma": gamma,
                "A_N": a_n,
                "fitted_slope_vs_A": slope_med,
                "theoretical_exponent_vs_A": -p,
                "theoretical_exponent_vs_N": -p * (1.0 - gamma),
                "envelope_pass_fraction": float(np.mean(envelopes)),
            }
        )
        curves[f"gamma={gamma}"] = (last_trace.step_sum, last_trace.avg_residual, slope_med)

    header = ["gamma", "A_N", "slope(med)", "-p", "-p(1-gamma)", "envelope_pass"]
    widths = [9, 12, 12, 8, 12, 13]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for r in rows:
        cells = [
            f"{r['gamma']:.3g}", f"{r['A_N']:.6g}", f"{r['fitted_slope_vs_A']:.4g}",
            f"{-p:.3g}", f"{r['theoretical_exponent_vs_N']:.4g}",
            f"{r['envelope_pass_fraction']:.2f}",
        ]
        lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
    text = "\n".join(lines)
    print(text)
    with open(out / "rate_study.json", "w") as fh:
        json.dump({"geometry": args.geometry, "n": args.n, "rows": rows}, fh, indent=2, sort_keys=True)
    with open(out / "rate_study.txt", "w") as fh:
        fh.write(text + "\n")
    if not args.no_figures:
        from .report import rate_figure

        rate_figure(curves, out / "rate_fit.png")
    print(f"\noutputs written to {out.resolve()}")
    return 2 if diverged else 0


def cmd_check(args) -> int:
    suites = SUITES if args.suite == "all" else (args.suite,)
    all_passed = True
    for suite in suites:
        for res in run_suite(suite):
            status = "PASS" if res.passed else "FAIL"
            print(f"[{status}] {res.name}: {res.detail}")
            all_passed &= res.passed
    return 0 if all_passed else 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skm",
        description="Stochastic Krasnoselskii-Mann iterations with Bregman geometries.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config (JSON)")
    p_run.add_argument("config", help="path to the experiment JSON file")
    p_run.add_argument("--seeds", help="comma-separated seed list overriding the config")
    p_run.add_argument("--out", help="output directory (default from config or skm_out/<name>)")
    p_run.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    p_run.set_defaults(func=cmd_run)

    p_rate = sub.add_parser("rate-study", help="fit residual decay rates for step exponents")
    p_rate.add_argument("--geometry", default="euclidean",
                        help="euclidean | neg_entropy_simplex | p_norm:<p>")
    p_rate.add_argument("--gamma", required=True, help="comma-separated exponents in (1/2, 1)")
    p_rate.add_argument("--n", type=int, default=2000, help="iterations per run")
    p_rate.add_argument("--seeds", type=int, default=4, help="number of seeds per gamma")
    p_rate.add_argument("--dim", type=int, default=8)
    p_rate.add_argument("--matrix-seed", type=int, default=11)
    p_rate.add_argument("--matrix-norm", type=float, default=0.5)
    p_rate.add_argument("--sigma", type=float, default=0.0,
                        help="gaussian noise level (0 for a noise-free study)")
    p_rate.add_argument("--out", help="output directory")
    p_rate.add_argument("--no-figures", action="store_true")
    p_rate.set_defaults(func=cmd_rate_study)

    p_check = sub.add_parser("check", help="run a named invariant suite")
    p_check.add_argument("suite", choices=SUITES + ("all",))
    p_check.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

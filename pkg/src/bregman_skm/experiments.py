"""Experiment execution: (variant x seed) runs, trace/metadata files, summaries."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import bound_envelope_check, fit_rate
from .config import ExperimentConfig, VariantSpec
from .errors import DegenerateFit, Diverged, InsufficientTrace
from .geometry import GeometrySchedule, rate_exponent
from .iteration import IterationConfig, Trace, run
from .noise import RNG_ALGORITHM
from .operators import FixedPointRef, fixed_point_oracle, nonexpansiveness_probe

PROBE_TRIALS = 10_000


@dataclass
class RunResult:
    variant: str
    seed: int
    trace: Trace
    diverged: bool = False


@dataclass
class SummaryTable:
    """Per-variant aggregate metrics across seeds, one row per variant."""

    experiment: str
    metrics: tuple[str, ...]
    rows: list[dict] = field(default_factory=list)
    diverged: bool = False

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "metrics": list(self.metrics),
            "diverged": self.diverged,
            "rows": self.rows,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def format_text(self) -> str:
        cols = ["algorithm"]
        for m in self.metrics:
            if m == "final_avg_residual":
                cols += ["avg_residual(med)", "avg_residual(mean)"]
            elif m == "final_dist_to_ref_l1":
                cols += ["l1_dist(med)", "l1_dist(mean)"]
            elif m == "rate_fit":
                cols += ["slope(med)", "p_theory"]
            elif m == "envelope_check":
                cols += ["envelope_pass"]
        lines = []
        table = []
        for row in self.rows:
            cells = [row["name"]]
            for m in self.metrics:
                if m == "final_avg_residual":
                    cells += [f"{row['final_avg_residual_median']:.6g}",
                              f"{row['final_avg_residual_mean']:.6g}"]
                elif m == "final_dist_to_ref_l1":
                    cells += [f"{row['final_dist_to_ref_l1_median']:.6g}",
                              f"{row['final_dist_to_ref_l1_mean']:.6g}"]
                elif m == "rate_fit":
                    cells += [f"{row['rate_fit_slope_median']:.4g}", f"{-row['theoretical_p']:.3g}"]
                elif m == "envelope_check":
                    cells += [f"{row['envelope_pass_fraction']:.2f}"]
            table.append(cells)
        widths = [max(len(c[i]) for c in [cols] + table) for i in range(len(cols))]
        lines.append("  ".join(c.ljust(w) for c, w in zip(cols, widths)))
        lines.append("  ".join("-" * w for w in widths))
        for cells in table:
            lines.append("  ".join(c.ljust(w) for c, w in zip(cells, widths)))
        if self.diverged:
            lines.append("(at least one run diverged; medians cover completed rows only)")
        return "\n".join(lines)


def _variant_p(variant: VariantSpec) -> float:
    geom = variant.geometry
    base = geom.base if isinstance(geom, GeometrySchedule) else geom
    return rate_exponent(base)


def summarize(experiment: str, variants: list[VariantSpec], results: list[RunResult],
              metrics: tuple[str, ...]) -> SummaryTable:
    """Aggregate per-variant medians/means; a pure function of the trace set."""
    table = SummaryTable(experiment=experiment, metrics=metrics)
    table.diverged = any(r.diverged for r in results)
    for variant in variants:
        runs = [r for r in results if r.variant == variant.name and not r.diverged]
        row: dict = {"name": variant.name, "seeds": len(runs)}
        finals = np.array([r.trace.final_avg_residual for r in runs])
        dists = np.array([float(r.trace.dist_to_ref[-1]) for r in runs])
        if "final_avg_residual" in metrics:
            row["final_avg_residual_median"] = float(np.median(finals))
            row["final_avg_residual_mean"] = float(np.mean(finals))
        if "final_dist_to_ref_l1" in metrics:
            row["final_dist_to_ref_l1_median"] = float(np.median(dists))
            row["final_dist_to_ref_l1_mean"] = float(np.mean(dists))
        if "rate_fit" in metrics:
            p = _variant_p(variant)
            slopes = []
            for r in runs:
                try:
                    slopes.append(fit_rate(r.trace, p, 0.5).fitted_slope)
                except (DegenerateFit, InsufficientTrace):
                    pass
            row["rate_fit_slope_median"] = float(np.median(slopes)) if slopes else float("nan")
            row["theoretical_p"] = p
        if "envelope_check" in metrics:
            p = _variant_p(variant)
            passes = []
            for r in runs:
                try:
                    passes.append(bound_envelope_check(r.trace, p))
                except InsufficientTrace:
                    pass
            row["envelope_pass_fraction"] = float(np.mean(passes)) if passes else float("nan")
        table.rows.append(row)
    return table


def run_experiment(
    cfg: ExperimentConfig,
    out_dir,
    seeds: list[int] | None = None,
    write_files: bool = True,
    reference: FixedPointRef | None = None,
) -> tuple[SummaryTable, list[RunResult]]:
    """Execute every (variant x seed) run and write traces, metadata, summary.

    Returns the summary table and the individual results. Runs that diverge
    are recorded with their partial traces and flagged rather than aborting
    the experiment.
    """
    seeds = cfg.seeds if seeds is None else seeds
    out = Path(out_dir)
    if write_files:
        out.mkdir(parents=True, exist_ok=True)
    op = cfg.operator
    probe = nonexpansiveness_probe(op, PROBE_TRIALS, seed=1)
    ref = reference if reference is not None else fixed_point_oracle(op, tol=1e-12)

    results: list[RunResult] = []
    for variant in cfg.variants:
        for seed in seeds:
            it_cfg = IterationConfig(
                operator=op,
                geometry=variant.geometry,
                steps=variant.steps,
                noise=variant.noise,
                trim=variant.trim,
                n_iters=cfg.n_iters,
                init=cfg.init,
                seed=seed,
                record_every=cfg.record_every,
            )
            diverged = False
            try:
                trace = run(it_cfg, ref=ref)
            except Diverged as e:
                trace = e.trace
                diverged = True
            results.append(RunResult(variant=variant.name, seed=seed, trace=trace, diverged=diverged))
            if write_files:
                stem = f"{variant.name}_seed{seed}"
                trace.write_csv(out / f"{stem}.csv")
                meta = {
                    "experiment": cfg.name,
                    "variant": variant.raw or variant.name,
                    "operator": cfg.raw.get("operator", {"kind": op.kind, "dim": op.dim}),
                    "operator_generation": getattr(op, "generation", {}),
                    "seed": seed,
                    "rng_algorithm": RNG_ALGORITHM,
                    "nonexpansiveness_probe": probe,
                    "oracle_residual": ref.residual_norm,
                    "oracle_iterations": ref.iterations_used,
                    "run": trace.metadata,
                }
                with open(out / f"{stem}.meta.json", "w") as fh:
                    json.dump(meta, fh, indent=2, sort_keys=True, default=repr)

    table = summarize(cfg.name, cfg.variants, results, cfg.report_metrics)
    if write_files:
        with open(out / "summary.json", "w") as fh:
            fh.write(table.to_json() + "\n")
        with open(out / "summary.txt", "w") as fh:
            fh.write(table.format_text() + "\n")
    return table, results

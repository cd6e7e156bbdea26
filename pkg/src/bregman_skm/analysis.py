"""Residual aggregation, rate fitting, and the one-step descent check."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateFit, InsufficientTrace
from .geometry import GeometrySchedule, modulus_lower_bound
from .iteration import (
    ConstantSteps,
    HarmonicOffsetSteps,
    IterationConfig,
    PolynomialSteps,
    StepSchedule,
    Trace,
    _resolve_init,
    _skm_step_counted,
)
from .noise import make_rng, trim, trim_level


def _alphas(sched: StepSchedule, N: int) -> np.ndarray:
    if isinstance(sched, HarmonicOffsetSteps):
        return 1.0 / (np.arange(N, dtype=np.float64) + sched.a)
    if isinstance(sched, PolynomialSteps):
        from .iteration import ALPHA_CAP

        return np.minimum((np.arange(N, dtype=np.float64) + 1.0) ** (-sched.gamma), ALPHA_CAP)
    if isinstance(sched, ConstantSteps):
        return np.full(N, sched.alpha)
    return np.array([sched.step(n) for n in range(N)])


def step_sum(sched: StepSchedule, N: int) -> float:
    """A_N = sum of alpha_n over n < N by direct (sequential) summation."""
    if N < 1:
        raise ConfigError("N must be >= 1")
    return float(np.cumsum(_alphas(sched, N))[-1])


def averaged_residual(trace: Trace, N: int) -> float:
    """Step-weighted residual average over iterations n < N.

    Traces recorded with stride > 1 contribute only their recorded rows,
    weighted by those rows' alphas (a documented approximation).
    """
    if N < 1:
        raise ConfigError("N must be >= 1")
    if N - 1 > int(trace.n.max()):
        raise InsufficientTrace(f"trace covers n <= {int(trace.n.max())}, need {N - 1}")
    mask = trace.n < N
    a = trace.alpha[mask]
    total = float(a.sum())
    if total <= 0.0:
        raise InsufficientTrace("no recorded rows below N")
    return float((a * trace.bregman_residual[mask]).sum() / total)


@dataclass(frozen=True)
class RateFit:
    """Log-log least-squares slope of the averaged residual against A_n."""

    fitted_slope: float
    theoretical_p: float
    window: tuple[int, int]
    r_squared: float

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["window"] = list(self.window)
        return d


def fit_rate(trace: Trace, p_theoretical: float, window_fraction: float = 0.5) -> RateFit:
    """Fit ln(avg_residual) ~ slope * ln(A_n) over the trailing window of rows."""
    if len(trace) < 100:
        raise InsufficientTrace("need at least 100 recorded rows to fit a rate")
    if not 0.0 < window_fraction <= 1.0:
        raise ConfigError("window_fraction must lie in (0, 1]")
    eligible = np.flatnonzero(trace.step_sum > 0.0)
    start = eligible.size - max(2, int(np.ceil(window_fraction * eligible.size)))
    idx = eligible[max(start, 0):]
    avg = trace.avg_residual[idx]
    if np.any(avg <= 0.0):
        raise DegenerateFit("avg_residual is nonpositive inside the fit window")
    x = np.log(trace.step_sum[idx])
    y = np.log(avg)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot < 1e-30 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return RateFit(
        fitted_slope=float(slope),
        theoretical_p=float(p_theoretical),
        window=(int(trace.n[idx[0]]), int(trace.n[idx[-1]])),
        r_squared=r2,
    )


def bound_envelope_check(trace: Trace, p: float) -> bool:
    """Shape test of the residual bound avg_n <= C (1 + sum alpha^2) / A_n^p.

    The constant is calibrated as the max over the first 10% of rows and the
    remaining rows must stay below 1.5x the calibrated envelope.
    """
    if len(trace) < 100:
        raise InsufficientTrace("need at least 100 recorded rows")
    idx = np.flatnonzero(trace.step_sum > 0.0)
    a_n = trace.step_sum[idx]
    avg = trace.avg_residual[idx]
    q_n = 1.0 + np.cumsum(trace.alpha**2)[idx]
    n_early = max(1, int(np.ceil(0.10 * idx.size)))
    ratios = avg * a_n**p / q_n
    c = float(ratios[:n_early].max())
    later = slice(n_early, None)
    return bool(np.all(avg[later] <= 1.5 * c * q_n[later] / a_n[later] ** p))


@dataclass(frozen=True)
class DescentCheckReport:
    """Monte-Carlo comparison of the one-step residual decrease inequality."""

    n_probe: int
    trials: int
    lhs_mean: float
    rhs: float
    fitted_L: float
    fitted_sigma2: float
    satisfied: bool
    standard_error: float
    residual_before: float

    def to_dict(self):
        return dataclasses.asdict(self)


def descent_check(config: IterationConfig, n_probe: int, trials: int) -> DescentCheckReport:
    """Estimate E[D_{n+1} | state at n_probe] and compare with the bound.

    Runs the configured iteration deterministically to n_probe, then draws
    independent one-step continuations. The check passes when

        mean(D_next) + alpha/2 * delta(||x - T(x)||)
            <= (1 + L alpha^2) D_n + sigma2 alpha^2 + 3 SE

    with L the geometry's local mirror-map Lipschitz constant and sigma2 the
    empirical second moment of the noise as the update sees it: the dual-space
    perturbation grad theta(T(x) + trimmed noise) - grad theta(T(x)). In the
    Euclidean geometry this is the plain second moment of the noise vector.
    """
    if isinstance(config.geometry, GeometrySchedule):
        raise ConfigError("descent check requires a fixed geometry, not a schedule")
    if trials < 1000:
        raise ConfigError("need at least 1000 Monte-Carlo trials")
    if n_probe < 0:
        raise ConfigError("n_probe must be nonnegative")

    geom = config.geometry
    op = config.operator
    d = op.dim
    if n_probe == 0:
        x = _resolve_init(config, geom)
    else:
        from .iteration import run

        probe_cfg = dataclasses.replace(config, n_iters=n_probe, record_every=n_probe)
        x = run(probe_cfg).final_point

    alpha = config.steps.step(n_probe)
    k = trim_level(config.trim, n_probe, d)
    tx = op.apply(x)
    tx_dom, _ = geom.clamp_to_domain(tx)
    d_before = geom.bregman(x, tx_dom)
    r = float(np.linalg.norm(x - tx))
    delta_term = 0.5 * modulus_lower_bound(geom, r) * alpha

    rng = make_rng(config.seed, config.noise.seed, 1 + n_probe)
    g_tx = geom.grad(tx_dom)
    d_next = np.empty(trials)
    sq_noise = np.empty(trials)
    for j in range(trials):
        w = config.noise.sample(rng, d)
        y, _ = geom.clamp_to_domain(tx_dom + trim(w, k))
        dual_pert = geom._grad(y) - g_tx
        sq_noise[j] = float(dual_pert @ dual_pert)
        z, _ = _skm_step_counted(geom, op, x, alpha, w, k, tx=tx_dom)
        tz_dom, _ = geom.clamp_to_domain(op.apply(z))
        d_next[j] = geom.bregman(z, tz_dom)

    lhs_mean = float(d_next.mean()) + delta_term
    se = float(d_next.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    sigma2 = float(sq_noise.mean())
    lip = geom.grad_lipschitz_at(x)
    rhs = (1.0 + lip * alpha**2) * d_before + sigma2 * alpha**2
    return DescentCheckReport(
        n_probe=n_probe,
        trials=trials,
        lhs_mean=lhs_mean,
        rhs=rhs,
        fitted_L=lip,
        fitted_sigma2=sigma2,
        satisfied=bool(lhs_mean <= rhs + 3.0 * se),
        standard_error=se,
        residual_before=d_before,
    )

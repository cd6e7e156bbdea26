"""The stochastic Bregman-KM update and its driver loop.

One engine covers the plain iteration (fixed geometry), the adaptive variant
(a GeometrySchedule selects the geometry each step), and the robust variant
(a TrimSchedule zeroes the largest noise coordinates before the update).
"""

from __future__ import annotations

import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, Diverged
from .geometry import (
    GeometrySchedule,
    LegendreGeometry,
    as_vector,
    geometry_at,
    uniform_simplex,
)
from .noise import RNG_ALGORITHM, NoiseModel, TrimSchedule, ZeroNoise, make_rng, trim, trim_level
from .operators import FixedPointRef, Operator

ALPHA_CAP = 1.0 - 1e-9
DIVERGENCE_LIMIT = 1e12

TRACE_COLUMNS = (
    "n",
    "alpha",
    "bregman_residual",
    "norm_residual",
    "step_sum",
    "avg_residual",
    "dist_to_ref",
    "clamp_count",
)


class StepSchedule(ABC):
    """The step-size sequence alpha_n, with its summability classification."""

    kind: str
    is_a3: bool

    @abstractmethod
    def step(self, n: int) -> float:
        """alpha_n, guaranteed to lie in (0, 1)."""


@dataclass(frozen=True)
class HarmonicOffsetSteps(StepSchedule):
    """alpha_n = 1/(n + a) with a > 1; satisfies the summability conditions."""

    a: float
    kind = "harmonic_offset"
    is_a3 = True

    def __post_init__(self):
        if self.a <= 1.0:
            raise ConfigError("harmonic offset requires a > 1 so alpha_0 < 1")

    def step(self, n):
        return 1.0 / (n + self.a)


@dataclass(frozen=True)
class PolynomialSteps(StepSchedule):
    """alpha_n = (n+1)^(-gamma) for gamma in (1/2, 1], capped below 1 at n=0."""

    gamma: float
    kind = "polynomial"
    is_a3 = True

    def __post_init__(self):
        if not 0.5 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (1/2, 1]")

    def step(self, n):
        return min((n + 1.0) ** (-self.gamma), ALPHA_CAP)


@dataclass(frozen=True)
class ConstantSteps(StepSchedule):
    """Constant alpha in (0, 1); violates square-summability (flagged non-a3)."""

    alpha: float
    kind = "constant"
    is_a3 = False

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")

    def step(self, n):
        return self.alpha


def step_size(sched: StepSchedule, n: int) -> float:
    if n < 0:
        raise ConfigError("iteration index must be nonnegative")
    return sched.step(n)


def _skm_step_counted(
    geom: LegendreGeometry,
    op: Operator,
    x: np.ndarray,
    alpha: float,
    noise_vec: np.ndarray,
    k: int,
    tx: np.ndarray | None = None,
) -> tuple[np.ndarray, int]:
    """One update; returns the new iterate and the number of clamped coords."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    if tx is None:
        tx = op.apply(x)
    u = trim(noise_vec, k)
    y, c1 = geom.clamp_to_domain(tx + u)
    # x and y are interior by construction, so the raw hooks are safe here
    mixed = (1.0 - alpha) * geom._grad(x) + alpha * geom._grad(y)
    z, c2 = geom.clamp_to_domain(geom._grad_conjugate(mixed))
    return z, c1 + c2


def skm_step(
    geom: LegendreGeometry,
    op: Operator,
    x,
    alpha: float,
    noise_vec,
    k: int = 0,
) -> np.ndarray:
    """The Bregman-KM update at one point.

    The noisy image point T(x) + Trim_k(noise_vec) is safeguarded into the
    geometry's domain interior, mixed with x in the dual, and mapped back;
    the result is again safeguarded so it can seed the next step.
    """
    x = geom.validate_point(x)
    noise_vec = as_vector(noise_vec, dim=x.size)
    z, _ = _skm_step_counted(geom, op, x, alpha, noise_vec, k)
    return z


def hilbert_equivalence_check(op: Operator, x, alpha: float, noise_vec) -> float:
    """Max-norm gap between the Euclidean update and its closed form.

    With the Euclidean geometry the update must reduce to
    (1-alpha) x + alpha (T(x) + noise).
    """
    from .geometry import EuclideanGeometry

    x = as_vector(x)
    noise_vec = as_vector(noise_vec, dim=x.size)
    closed = (1.0 - alpha) * x + alpha * (op.apply(x) + noise_vec)
    stepped = skm_step(EuclideanGeometry(), op, x, alpha, noise_vec, k=0)
    return float(np.max(np.abs(stepped - closed)))


@dataclass
class IterationConfig:
    """A complete, seeded description of one run."""

    operator: Operator
    geometry: LegendreGeometry | GeometrySchedule
    steps: StepSchedule
    noise: NoiseModel = field(default_factory=ZeroNoise)
    trim: TrimSchedule = field(default_factory=TrimSchedule)
    n_iters: int = 1000
    init: np.ndarray | str = "uniform"
    seed: int = 0
    record_every: int | None = None

    def __post_init__(self):
        if self.n_iters < 1:
            raise ConfigError("n_iters must be >= 1")
        if self.record_every is not None and self.record_every < 1:
            raise ConfigError("record_every must be >= 1")

    @property
    def stride(self) -> int:
        if self.record_every is not None:
            return self.record_every
        return 1 if self.n_iters <= 10_000 else 10


@dataclass
class Trace:
    """Per-iteration record of a run plus the final iterate and metadata.

    Row semantics: the row at n describes the state before step n is taken;
    ``step_sum`` is sum(alpha_m, m < n) and ``avg_residual`` the step-weighted
    residual average over m < n (0 at n = 0). ``clamp_count`` is cumulative.
    """

    n: np.ndarray
    alpha: np.ndarray
    bregman_residual: np.ndarray
    norm_residual: np.ndarray
    step_sum: np.ndarray
    avg_residual: np.ndarray
    dist_to_ref: np.ndarray
    clamp_count: np.ndarray
    final_point: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return self.n.size

    @property
    def final_avg_residual(self) -> float:
        return float(self.avg_residual[-1])

    def write_csv(self, path):
        # repr of a Python float is its shortest exact round-trip form
        with open(path, "w", newline="") as fh:
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            for i in range(len(self)):
                fh.write(
                    f"{int(self.n[i])},{float(self.alpha[i])!r},{float(self.bregman_residual[i])!r},"
                    f"{float(self.norm_residual[i])!r},{float(self.step_sum[i])!r},"
                    f"{float(self.avg_residual[i])!r},{float(self.dist_to_ref[i])!r},"
                    f"{int(self.clamp_count[i])}\n"
                )

    @classmethod
    def read_csv(cls, path) -> "Trace":
        data = np.genfromtxt(path, delimiter=",", names=True)
        data = np.atleast_1d(data)
        cols = {name: np.asarray(data[name], dtype=np.float64) for name in data.dtype.names}
        if tuple(cols) != TRACE_COLUMNS:
            raise ConfigError(f"unexpected trace header {tuple(cols)}")
        return cls(
            n=cols["n"].astype(np.int64),
            alpha=cols["alpha"],
            bregman_residual=cols["bregman_residual"],
            norm_residual=cols["norm_residual"],
            step_sum=cols["step_sum"],
            avg_residual=cols["avg_residual"],
            dist_to_ref=cols["dist_to_ref"],
            clamp_count=cols["clamp_count"].astype(np.int64),
            final_point=np.empty(0),
            metadata={"source_csv": str(path)},
        )


class _TraceBuilder:
    def __init__(self):
        self.rows = []

    def add(self, n, alpha, d, r, a_sum, avg, dist, clamps):
        self.rows.append((n, alpha, d, r, a_sum, avg, dist, clamps))

    def build(self, final_point, metadata) -> Trace:
        arr = np.array(self.rows, dtype=np.float64).reshape(len(self.rows), 8)
        return Trace(
            n=arr[:, 0].astype(np.int64),
            alpha=arr[:, 1],
            bregman_residual=arr[:, 2],
            norm_residual=arr[:, 3],
            step_sum=arr[:, 4],
            avg_residual=arr[:, 5],
            dist_to_ref=arr[:, 6],
            clamp_count=arr[:, 7].astype(np.int64),
            final_point=final_point,
            metadata=metadata,
        )


def _resolve_init(config: IterationConfig, geom: LegendreGeometry) -> np.ndarray:
    if isinstance(config.init, str):
        if config.init != "uniform":
            raise ConfigError(f"unknown init {config.init!r}")
        x = uniform_simplex(config.operator.dim)
    else:
        x = as_vector(config.init, dim=config.operator.dim)
    x, _ = geom.clamp_to_domain(x)
    return x


def run(config: IterationConfig, ref: FixedPointRef | None = None) -> Trace:
    """Execute the iteration and record its trace.

    Deterministic given (config, seed): the noise stream is derived from
    (config.seed, noise.seed). Raises Diverged (carrying the partial trace)
    if an iterate leaves the finite range.
    """
    t0 = time.perf_counter()
    op = config.operator
    d = op.dim
    scheduled = isinstance(config.geometry, GeometrySchedule)
    geom0 = config.geometry.base if scheduled else config.geometry
    rng = make_rng(config.seed, config.noise.seed)
    stride = config.stride
    n_iters = config.n_iters

    x = _resolve_init(config, geom0)
    builder = _TraceBuilder()
    a_sum = 0.0  # sum of alpha_m, m < n
    w_sum = 0.0  # sum of alpha_m * D_m, m < n
    sq_sum = 0.0  # sum of alpha_m^2, m < n (metadata only)
    clamp_total = 0

    metadata = {
        "seed": config.seed,
        "noise_seed": config.noise.seed,
        "rng_algorithm": RNG_ALGORITHM,
        "record_every": stride,
        "steps_kind": config.steps.kind,
        "is_a3": config.steps.is_a3,
        "operator_kind": op.kind,
        "geometry_kind": "schedule" if scheduled else geom0.kind,
        "noise_kind": config.noise.kind,
        "trim_kind": config.trim.kind,
        "n_iters": n_iters,
        "dim": d,
        "diverged": False,
    }

    def finish(point):
        metadata["clamp_total"] = clamp_total
        metadata["step_sq_sum"] = sq_sum
        metadata["wall_time_s"] = time.perf_counter() - t0
        return builder.build(point, metadata)

    for n in range(n_iters + 1):
        geom = geometry_at(config.geometry, n) if scheduled else config.geometry
        alpha = config.steps.step(n)
        tx = op.apply(x)
        tx_dom, _ = geom.clamp_to_domain(tx)
        d_n = geom._bregman(x, tx_dom)
        r_n = float(np.linalg.norm(x - tx))
        if n % stride == 0 or n == n_iters:
            avg = w_sum / a_sum if a_sum > 0.0 else 0.0
            dist = float(np.abs(x - ref.point).sum()) if ref is not None else float("nan")
            builder.add(n, alpha, d_n, r_n, a_sum, avg, dist, clamp_total)
        if n == n_iters:
            break
        noise_vec = config.noise.sample(rng, d)
        k = trim_level(config.trim, n, d)
        x, clamps = _skm_step_counted(geom, op, x, alpha, noise_vec, k, tx=tx_dom)
        clamp_total += clamps
        w_sum += alpha * d_n
        a_sum += alpha
        sq_sum += alpha * alpha
        if np.max(np.abs(x)) > DIVERGENCE_LIMIT:
            metadata["diverged"] = True
            metadata["diverged_at"] = n + 1
            raise Diverged(f"iterate left finite range at n={n + 1}", trace=finish(x))

    return finish(x)

"""Zero-mean dual-perturbation generators and the coordinate trimming operator."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

RNG_ALGORITHM = "numpy-pcg64"


def make_rng(*keys: int) -> np.random.Generator:
    """A deterministic PCG64 generator keyed by a tuple of integers.

    Distinct key tuples give statistically independent streams; the same
    tuple always reproduces the same stream.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(keys))))


class NoiseModel(ABC):
    """Per-iteration additive perturbation of the operator image point."""

    kind: str
    seed: int

    @abstractmethod
    def sample(self, rng: np.random.Generator, d: int) -> np.ndarray:
        """Draw one d-dimensional perturbation, advancing rng."""


@dataclass(frozen=True)
class ZeroNoise(NoiseModel):
    seed: int = 0
    kind = "zero"

    def sample(self, rng, d):
        return np.zeros(d)


@dataclass(frozen=True)
class GaussianNoise(NoiseModel):
    """I.i.d. N(0, sigma^2) coordinates; finite second moment sigma^2 * d."""

    sigma: float
    seed: int = 0
    kind = "gaussian"

    def __post_init__(self):
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive")

    def sample(self, rng, d):
        return rng.normal(0.0, self.sigma, size=d)


@dataclass(frozen=True)
class StudentTNoise(NoiseModel):
    """I.i.d. scaled Student-t coordinates; dof=2 has infinite variance."""

    dof: float
    scale: float = 1.0
    seed: int = 0
    kind = "student_t"

    def __post_init__(self):
        if self.dof <= 0 or self.scale <= 0:
            raise ConfigError("dof and scale must be positive")

    def sample(self, rng, d):
        return self.scale * rng.standard_t(self.dof, size=d)


def sample(model: NoiseModel, rng: np.random.Generator, d: int) -> np.ndarray:
    if d < 1:
        raise ConfigError("dimension must be >= 1")
    return model.sample(rng, d)


def trim(u, k: int) -> np.ndarray:
    """Zero the k largest-magnitude coordinates of u.

    Magnitude ties are broken by zeroing the lowest index first; all other
    coordinates are preserved bit-exactly. Returns a copy.
    """
    u = np.asarray(u, dtype=np.float64)
    d = u.size
    if k < 0:
        raise ConfigError("trim level must be nonnegative")
    k = min(k, d)
    out = u.copy()
    if k == 0:
        return out
    # stable sort on descending magnitude keeps ascending index within ties
    order = np.argsort(-np.abs(u), kind="stable")
    out[order[:k]] = 0.0
    return out


@dataclass(frozen=True)
class TrimSchedule:
    """Per-iteration trimming level: none, a fixed k, or ceil(ln(n+2))."""

    kind: str = "none"
    k: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "fixed", "log_schedule"):
            raise ConfigError(f"unknown trim schedule kind {self.kind!r}")
        if self.kind == "fixed" and self.k < 0:
            raise ConfigError("fixed trim level must be nonnegative")


def trim_level(sched: TrimSchedule, n: int, d: int) -> int:
    """The number of coordinates to zero at iteration n, clamped to d."""
    if n < 0:
        raise ConfigError("iteration index must be nonnegative")
    if sched.kind == "none":
        return 0
    if sched.kind == "fixed":
        return min(sched.k, d)
    return min(int(np.ceil(np.log(n + 2))), d)

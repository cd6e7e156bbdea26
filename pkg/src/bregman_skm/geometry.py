"""Legendre distance-generating functions, mirror maps, and Bregman distances.

Each geometry supplies the function value, its gradient (mirror map), the
conjugate gradient (inverse mirror map), and uniform-convexity modulus data
``delta(r) >= c * r**q`` used by the rate analysis.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, DomainError

SIMPLEX_SUM_TOL = 1e-9


def as_vector(x, dim: int | None = None) -> np.ndarray:
    """Validate and convert to a finite 1-D float64 array."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise DomainError(f"expected a 1-D vector, got shape {v.shape}")
    # a finite sum implies all entries are finite (inf/nan propagate)
    if not np.isfinite(v.sum()):
        raise DomainError("vector has non-finite entries")
    if dim is not None and v.size != dim:
        raise DomainError(f"expected dimension {dim}, got {v.size}")
    return v


def uniform_simplex(d: int) -> np.ndarray:
    """The barycenter of the probability simplex in R^d."""
    if d < 1:
        raise ConfigError("dimension must be >= 1")
    return np.full(d, 1.0 / d)


class LegendreGeometry(ABC):
    """A distance-generating function given by its gradient and conjugate.

    Subclasses fix the value normalization; ``modulus_c`` and ``modulus_q``
    are configuration data describing the uniform-convexity lower bound.
    Public methods validate their inputs; the underscored hooks assume
    already-validated interior points (used by the iteration hot loop).
    """

    kind: str
    modulus_c: float
    modulus_q: float
    domain_floor: float

    @abstractmethod
    def _value(self, x: np.ndarray) -> float: ...

    @abstractmethod
    def _grad(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _grad_conjugate(self, u: np.ndarray) -> np.ndarray: ...

    def _check_domain(self, x: np.ndarray) -> np.ndarray:
        return x

    def validate_point(self, x) -> np.ndarray:
        """Check that x is a finite interior point and return it as an array."""
        return self._check_domain(as_vector(x))

    def value(self, x) -> float:
        """theta(x) at an interior point."""
        return self._value(self.validate_point(x))

    def grad(self, x) -> np.ndarray:
        """The mirror map grad theta(x)."""
        return self._grad(self.validate_point(x))

    def grad_conjugate(self, u) -> np.ndarray:
        """The inverse mirror map grad theta*(u); finite for any finite u."""
        return self._grad_conjugate(as_vector(u))

    def clamp_to_domain(self, y) -> tuple[np.ndarray, int]:
        """Safeguard an arbitrary finite point into the domain interior.

        Returns the safeguarded point and the number of floored coordinates.
        Identity for geometries whose domain is all of R^d.
        """
        return as_vector(y), 0

    def grad_lipschitz_at(self, x) -> float:
        """A valid local Lipschitz constant of the mirror map near x."""
        raise NotImplementedError(f"no gradient-Lipschitz estimate for {self.kind}")

    def bregman(self, x, y) -> float:
        """Bregman distance theta(x) - theta(y) - <grad theta(y), x - y>."""
        x = self.validate_point(x)
        y = self.validate_point(y)
        if x.size != y.size:
            raise DomainError(f"dimension mismatch: {x.size} vs {y.size}")
        return self._bregman(x, y)

    def _bregman(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(self._value(x) - self._value(y) - self._grad(y) @ (x - y))

    def __repr__(self):
        return f"{type(self).__name__}(kind={self.kind!r})"


class EuclideanGeometry(LegendreGeometry):
    """theta(x) = ||x||^2 / 2; mirror maps are the identity."""

    kind = "euclidean"

    def __init__(self, modulus_c: float = 0.5, domain_floor: float = 1e-12):
        # Normalization: with theta = ||.||^2/2 the modulus lower bound is
        # recorded as delta(r) >= r^2/2 (c = 1/2, q = 2).
        if modulus_c <= 0:
            raise ConfigError("modulus_c must be positive")
        self.modulus_c = float(modulus_c)
        self.modulus_q = 2.0
        self.domain_floor = float(domain_floor)

    def _value(self, x):
        return 0.5 * float(x @ x)

    def _grad(self, x):
        return x.copy()

    def _grad_conjugate(self, u):
        return u.copy()

    def grad_lipschitz_at(self, x):
        return 1.0


class NegEntropySimplexGeometry(LegendreGeometry):
    """theta(x) = sum x_i ln x_i restricted to the probability simplex.

    The conjugate gradient is the softmax, so iterates stay in the open
    simplex. Interior points must have coordinates >= ``domain_floor`` and
    sum to 1 within SIMPLEX_SUM_TOL.
    """

    kind = "neg_entropy_simplex"

    def __init__(self, modulus_c: float = 0.125, domain_floor: float = 1e-12):
        # Default c = 1/8: the entropy Hessian diag(1/x_i) dominates the
        # identity on the simplex, giving a midpoint gap >= r^2/8.
        if modulus_c <= 0:
            raise ConfigError("modulus_c must be positive")
        if not 0.0 < domain_floor < 0.1:
            raise ConfigError("domain_floor must be a small positive real")
        self.modulus_c = float(modulus_c)
        self.modulus_q = 2.0
        self.domain_floor = float(domain_floor)

    def _check_domain(self, x):
        if x.min() < self.domain_floor:
            raise DomainError(
                f"simplex coordinate {x.min():.3e} below floor {self.domain_floor:.1e}"
            )
        if abs(x.sum() - 1.0) > SIMPLEX_SUM_TOL:
            raise DomainError(f"coordinates sum to {x.sum()!r}, not 1")
        return x

    def _value(self, x):
        return float(np.sum(x * np.log(x)))

    def _grad(self, x):
        return 1.0 + np.log(x)

    def _grad_conjugate(self, u):
        z = np.exp(u - u.max())
        return z / z.sum()

    def clamp_to_domain(self, y):
        y = as_vector(y)
        eps = self.domain_floor
        d = y.size
        if d * eps >= 1.0:
            raise ConfigError(f"domain_floor {eps} too large for dimension {d}")
        y = np.maximum(y, eps)
        # rescale the unfloored mass so floored coordinates stay exactly at
        # the floor and the result sums to one (at most d passes)
        floored = y <= eps
        x = y
        for _ in range(d):
            free = ~floored
            if not free.any():
                x = uniform_simplex(d)
                break
            lam = (1.0 - eps * floored.sum()) / y[free].sum()
            x = np.where(floored, eps, lam * y)
            newly = free & (x < eps)
            if not newly.any():
                break
            floored |= newly
        return x, int(np.count_nonzero(x <= eps))

    def grad_lipschitz_at(self, x):
        x = self.validate_point(x)
        return float(1.0 / x.min())


class PNormGeometry(LegendreGeometry):
    """theta(x) = (1/p) sum |x_i|^p for p in (1, 2]."""

    kind = "p_norm"

    def __init__(self, p: float, domain_floor: float = 1e-12):
        if not 1.0 < p <= 2.0:
            raise ConfigError(f"p must lie in (1, 2], got {p}")
        self.p = float(p)
        self.modulus_c = (self.p - 1.0) / 8.0
        self.modulus_q = 2.0
        self.domain_floor = float(domain_floor)

    def _value(self, x):
        return float(np.sum(np.abs(x) ** self.p) / self.p)

    def _grad(self, x):
        return np.sign(x) * np.abs(x) ** (self.p - 1.0)

    def _grad_conjugate(self, u):
        return np.sign(u) * np.abs(u) ** (1.0 / (self.p - 1.0))

    def grad_lipschitz_at(self, x):
        # |t|^(p-1) has derivative (p-1)|t|^(p-2), unbounded at 0 for p < 2;
        # floor the coordinate magnitude to keep the local estimate finite.
        x = as_vector(x)
        t = np.maximum(np.abs(x), self.domain_floor)
        return float((self.p - 1.0) * np.max(t ** (self.p - 2.0)))


class ScaledGeometry(LegendreGeometry):
    """theta_kappa = kappa * theta_base for a positive factor kappa."""

    kind = "scaled"

    def __init__(self, factor: float, base: LegendreGeometry):
        if not np.isfinite(factor) or factor <= 0:
            raise ConfigError(f"scale factor must be positive and finite, got {factor}")
        self.factor = float(factor)
        self.base = base
        self.modulus_c = self.factor * base.modulus_c
        self.modulus_q = base.modulus_q
        self.domain_floor = base.domain_floor

    def _check_domain(self, x):
        return self.base._check_domain(x)

    def _value(self, x):
        return self.factor * self.base._value(x)

    def _grad(self, x):
        return self.factor * self.base._grad(x)

    def _grad_conjugate(self, u):
        return self.base._grad_conjugate(u / self.factor)

    def clamp_to_domain(self, y):
        return self.base.clamp_to_domain(y)

    def grad_lipschitz_at(self, x):
        return self.factor * self.base.grad_lipschitz_at(x)


@dataclass(frozen=True)
class GeometrySchedule:
    """A time-varying family kappa_n * theta with kappa_n in a fixed band."""

    base: LegendreGeometry
    scale_fn: Callable[[int], float]
    kappa_lower: float = 1.0
    kappa_upper: float = 2.0

    def __post_init__(self):
        if not 0 < self.kappa_lower <= self.kappa_upper:
            raise ConfigError("need 0 < kappa_lower <= kappa_upper")


def one_plus_harmonic(n: int) -> float:
    """Default adaptive scale factor kappa_n = 1 + 1/(n+1), in [1, 2]."""
    return 1.0 + 1.0 / (n + 1)


def geometry_at(sched: GeometrySchedule, n: int) -> LegendreGeometry:
    """The geometry in force at iteration n, with the factor clamped."""
    k = sched.scale_fn(n)
    if not np.isfinite(k):
        raise ConfigError(f"scale_fn({n}) returned non-finite value {k!r}")
    k = min(max(float(k), sched.kappa_lower), sched.kappa_upper)
    if k == 1.0:
        return sched.base
    return ScaledGeometry(k, sched.base)


def three_point_defect(geom: LegendreGeometry, x, y, z) -> float:
    """Absolute defect of the three-point identity at (x, y, z).

    D(x,z) = D(x,y) + D(y,z) + <grad theta(y) - grad theta(z), x - y> holds
    algebraically; this measures the floating-point discrepancy.
    """
    x = geom.validate_point(x)
    y = geom.validate_point(y)
    z = geom.validate_point(z)
    lhs = geom._bregman(x, z)
    rhs = geom._bregman(x, y) + geom._bregman(y, z) + (geom._grad(y) - geom._grad(z)) @ (x - y)
    return abs(lhs - float(rhs))


def modulus_lower_bound(geom: LegendreGeometry, r: float) -> float:
    """The modulus lower bound c * r**q at radius r >= 0."""
    if r < 0:
        raise DomainError("radius must be nonnegative")
    return geom.modulus_c * r ** geom.modulus_q


def rate_exponent(geom: LegendreGeometry) -> float:
    """Decay exponent p = (q-1)/q in [1/2, 1) implied by the modulus."""
    q = geom.modulus_q
    if q < 2:
        raise ConfigError("modulus_q must be >= 2")
    return (q - 1.0) / q

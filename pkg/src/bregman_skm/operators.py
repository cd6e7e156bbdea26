"""Nonexpansive test operators and a deterministic fixed-point oracle."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionMismatch, NoConvergence
from .geometry import as_vector, uniform_simplex
from .noise import make_rng


def power_iteration_norm(M: np.ndarray, iters: int = 200) -> float:
    """Spectral norm estimate of M by power iteration on M^T M."""
    M = np.asarray(M, dtype=np.float64)
    d = M.shape[1]
    # deterministic, generically non-orthogonal start
    v = np.cos(np.arange(1, d + 1, dtype=np.float64))
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iters):
        w = M.T @ (M @ v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        sigma = np.sqrt(nw)
    return float(np.linalg.norm(M @ v))


class Operator(ABC):
    """A map from R^dim to R^dim, assumed nonexpansive for the iteration."""

    kind: str
    dim: int

    @abstractmethod
    def apply(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the operator at one point."""

    def apply_many(self, X: np.ndarray) -> np.ndarray:
        """Row-wise evaluation; default loops over apply."""
        return np.stack([self.apply(row) for row in np.atleast_2d(X)])

    def domain_sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """n points drawn from the operator's natural domain."""
        return rng.standard_normal((n, self.dim))

    def start_point(self) -> np.ndarray:
        """Canonical initializer (the simplex barycenter)."""
        return uniform_simplex(self.dim)

    def _check_dim(self, x: np.ndarray):
        if x.shape[-1] != self.dim:
            raise DimensionMismatch(f"operator dim {self.dim}, point dim {x.shape[-1]}")


class IdentityOperator(Operator):
    kind = "identity"

    def __init__(self, dim: int):
        if dim < 1:
            raise ConfigError("dim must be >= 1")
        self.dim = int(dim)

    def apply(self, x):
        x = as_vector(x)
        self._check_dim(x)
        return x.copy()

    def apply_many(self, X):
        return np.array(X, dtype=np.float64, copy=True)


class SoftmaxPolicyOperator(Operator):
    """x -> softmax(eta * A x); maps any finite point into the open simplex."""

    kind = "softmax_policy"

    def __init__(self, A: np.ndarray, eta: float):
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ConfigError("A must be a square matrix")
        if eta <= 0:
            raise ConfigError("eta must be positive")
        self.A = A
        self.eta = float(eta)
        self.dim = A.shape[0]
        self.generation: dict = {}

    def apply(self, x):
        x = as_vector(x)
        self._check_dim(x)
        logits = self.eta * (self.A @ x)
        z = np.exp(logits - logits.max())
        return z / z.sum()

    def apply_many(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        logits = self.eta * (X @ self.A.T)
        z = np.exp(logits - logits.max(axis=1, keepdims=True))
        return z / z.sum(axis=1, keepdims=True)

    def domain_sample(self, rng, n):
        return rng.dirichlet(np.ones(self.dim), size=n)


class AffineAverageOperator(Operator):
    """x -> (1 - lam) x + lam (M x + b) with ||M||_2 <= 1.

    Analytically controllable: for lam > 0 the fixed point solves
    (I - M) x = b.
    """

    kind = "affine_average"

    def __init__(self, M: np.ndarray, b: np.ndarray, lam: float = 1.0):
        M = np.asarray(M, dtype=np.float64)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ConfigError("M must be a square matrix")
        if not 0.0 <= lam <= 1.0:
            raise ConfigError("lam must lie in [0, 1]")
        norm = power_iteration_norm(M)
        if norm > 1.0 + 1e-9:
            raise ConfigError(f"operator norm of M is {norm:.6f} > 1")
        self.M = M
        self.b = as_vector(b, dim=M.shape[0])
        self.lam = float(lam)
        self.dim = M.shape[0]

    def apply(self, x):
        x = as_vector(x)
        self._check_dim(x)
        return (1.0 - self.lam) * x + self.lam * (self.M @ x + self.b)

    def apply_many(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return (1.0 - self.lam) * X + self.lam * (X @ self.M.T + self.b)

    def solve_fixed_point(self) -> np.ndarray:
        """Exact fixed point by linear algebra (requires lam > 0)."""
        if self.lam == 0.0:
            raise ConfigError("every point is fixed when lam = 0")
        return np.linalg.solve(np.eye(self.dim) - self.M, self.b)


@dataclass(frozen=True)
class FixedPointRef:
    """A numerically certified fixed point with its achieved residual."""

    point: np.ndarray
    residual_norm: float
    iterations_used: int


def nonexpansiveness_probe(op: Operator, trials: int, seed: int = 0) -> float:
    """Largest observed ||T(x)-T(y)|| / ||x-y|| over sampled domain pairs."""
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    rng = make_rng(seed)
    X = op.domain_sample(rng, trials)
    Y = op.domain_sample(rng, trials)
    den = np.linalg.norm(X - Y, axis=1)
    keep = den > 1e-12
    if not np.any(keep):
        return 0.0
    num = np.linalg.norm(op.apply_many(X[keep]) - op.apply_many(Y[keep]), axis=1)
    return float(np.max(num / den[keep]))


def fixed_point_oracle(op: Operator, tol: float = 1e-12, max_iter: int = 200_000) -> FixedPointRef:
    """Zero-noise Euclidean averaged iteration x <- (x + T(x))/2 to tolerance.

    Deterministic: the same operator always yields bit-identical output.
    Raises NoConvergence (carrying the best iterate) if tol is not reached.
    """
    if tol <= 0:
        raise ConfigError("tol must be positive")
    x = op.start_point()
    best = None
    for i in range(max_iter + 1):
        tx = op.apply(x)
        r = float(np.linalg.norm(x - tx))
        if best is None or r < best.residual_norm:
            best = FixedPointRef(point=x.copy(), residual_norm=r, iterations_used=i)
        if r <= tol:
            return FixedPointRef(point=x, residual_norm=r, iterations_used=i)
        x = 0.5 * (x + tx)
    raise NoConvergence(
        f"residual {best.residual_norm:.3e} > tol {tol:.1e} after {max_iter} iterations",
        best=best,
    )


def random_softmax_policy(
    dim: int,
    eta: float,
    matrix_seed: int,
    matrix_scale: float | str = "auto",
    probe_trials: int = 2000,
    probe_target: float = 0.95,
) -> SoftmaxPolicyOperator:
    """Seeded softmax policy operator with a nonexpansiveness-safe matrix.

    The raw standard-normal matrix is normalized to unit spectral norm and
    then rescaled: either to an explicit spectral norm (`matrix_scale` a
    number) or, for "auto", to the largest scale whose empirical
    nonexpansiveness probe stays at or below `probe_target` (binary search).
    The resolved scale and probe value are recorded in `op.generation`.
    """
    rng = make_rng(matrix_seed)
    G = rng.standard_normal((dim, dim))
    norm = power_iteration_norm(G)
    if norm == 0.0:
        raise ConfigError("degenerate zero matrix draw")
    A_unit = G / norm

    probe_seed = int(np.random.SeedSequence([matrix_seed, 0xA5]).generate_state(1)[0])

    def probe_at(s: float) -> float:
        return nonexpansiveness_probe(SoftmaxPolicyOperator(s * A_unit, eta), probe_trials, seed=probe_seed)

    if matrix_scale == "auto":
        if not 0 < probe_target <= 1.0:
            raise ConfigError("probe_target must lie in (0, 1]")
        hi = 1.0
        while probe_at(hi) <= probe_target and hi < 64.0:
            hi *= 2.0
        if probe_at(hi) <= probe_target:
            scale = hi
        else:
            lo = 0.0
            for _ in range(48):
                mid = 0.5 * (lo + hi)
                if probe_at(mid) <= probe_target:
                    lo = mid
                else:
                    hi = mid
            scale = lo
    else:
        scale = float(matrix_scale)
        if scale < 0:
            raise ConfigError("matrix_scale must be nonnegative")

    op = SoftmaxPolicyOperator(scale * A_unit, eta)
    op.generation = {
        "matrix_seed": matrix_seed,
        "matrix_scale": scale,
        "probe_value": probe_at(scale),
        "probe_trials": probe_trials,
    }
    return op


def random_affine_average(
    dim: int,
    matrix_seed: int,
    matrix_norm: float = 0.5,
    lam: float = 1.0,
    offset_scale: float = 0.1,
) -> AffineAverageOperator:
    """Seeded affine averaged operator with prescribed spectral norm."""
    if not 0 <= matrix_norm <= 1.0:
        raise ConfigError("matrix_norm must lie in [0, 1]")
    rng = make_rng(matrix_seed)
    G = rng.standard_normal((dim, dim))
    norm = power_iteration_norm(G)
    M = G * (matrix_norm / norm) if norm > 0 else G
    b = offset_scale * rng.standard_normal(dim)
    return AffineAverageOperator(M, b, lam=lam)

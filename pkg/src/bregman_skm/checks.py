"""Seeded invariant suites behind `skm check`, reused by the test suite."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .analysis import descent_check
from .geometry import (
    EuclideanGeometry,
    NegEntropySimplexGeometry,
    PNormGeometry,
    ScaledGeometry,
    three_point_defect,
)
from .iteration import HarmonicOffsetSteps, IterationConfig, hilbert_equivalence_check
from .noise import GaussianNoise, make_rng, trim
from .operators import IdentityOperator, random_softmax_policy

SUITES = ("geometry", "descent", "trim", "hilbert")


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _interior_simplex(rng, d):
    # keep the minimum coordinate comfortably above the domain floor
    x = rng.dirichlet(np.ones(d))
    x = 0.999 * x + 0.001 / d
    return x / x.sum()


def _geometry_points(rng, geom, d):
    if geom.kind in ("neg_entropy_simplex",) or getattr(geom, "base", None) is not None:
        return _interior_simplex(rng, d)
    if geom.kind == "p_norm":
        return rng.uniform(-10.0, 10.0, size=d)
    return 3.0 * rng.standard_normal(d)


def geometry_suite(n_samples: int = 1000, seed: int = 20_240) -> list[CheckResult]:
    results = []
    geoms = [
        ("euclidean", EuclideanGeometry(), 3),
        ("neg_entropy_simplex", NegEntropySimplexGeometry(), 10),
        ("p_norm(1.5)", PNormGeometry(1.5), 4),
        ("scaled(2.0, entropy)", ScaledGeometry(2.0, NegEntropySimplexGeometry()), 6),
    ]

    for label, geom, d in geoms:
        rng = make_rng(seed, hash(label) % 2**32)
        worst = 0.0
        for _ in range(n_samples):
            x, y, z = (_geometry_points(rng, geom, d) for _ in range(3))
            worst = max(worst, three_point_defect(geom, x, y, z))
        results.append(
            CheckResult(
                f"three_point_identity[{label}]", worst < 1e-10, f"max defect {worst:.3e}"
            )
        )

    for label, geom, d in geoms:
        rng = make_rng(seed, 1, hash(label) % 2**32)
        worst = 0.0
        for _ in range(n_samples):
            x = _geometry_points(rng, geom, d)
            back = geom.grad_conjugate(geom.grad(x))
            worst = max(worst, float(np.max(np.abs(back - x))))
        results.append(
            CheckResult(f"conjugacy_roundtrip[{label}]", worst < 1e-8, f"max error {worst:.3e}")
        )

    rng = make_rng(seed, 2)
    ent = NegEntropySimplexGeometry()
    worst = 0.0
    for _ in range(n_samples):
        x, y = _interior_simplex(rng, 10), _interior_simplex(rng, 10)
        kl = float(np.sum(x * np.log(x / y)))
        worst = max(worst, abs(ent.bregman(x, y) - kl))
    results.append(CheckResult("entropy_bregman_is_kl", worst < 1e-10, f"max gap {worst:.3e}"))

    rng = make_rng(seed, 3)
    euc = EuclideanGeometry()
    worst = 0.0
    for _ in range(n_samples):
        x, y = 3.0 * rng.standard_normal(5), 3.0 * rng.standard_normal(5)
        worst = max(worst, abs(euc.bregman(x, y) - 0.5 * float(np.sum((x - y) ** 2))))
    results.append(
        CheckResult("euclidean_bregman_is_half_sqnorm", worst < 1e-12, f"max gap {worst:.3e}")
    )

    rng = make_rng(seed, 4)
    scaled = ScaledGeometry(2.5, ent)
    worst = 0.0
    for _ in range(n_samples):
        x, y = _interior_simplex(rng, 8), _interior_simplex(rng, 8)
        worst = max(worst, abs(scaled.bregman(x, y) - 2.5 * ent.bregman(x, y)))
    results.append(CheckResult("bregman_scaling_linearity", worst < 1e-12, f"max gap {worst:.3e}"))

    rng = make_rng(seed, 5)
    most_negative = 0.0
    ok_identity = True
    for geom, d in ((euc, 5), (ent, 8), (PNormGeometry(1.5), 4)):
        for _ in range(n_samples // 2):
            x = _geometry_points(rng, geom, d)
            y = _geometry_points(rng, geom, d)
            most_negative = min(most_negative, geom.bregman(x, y))
            ok_identity &= geom.bregman(x, x) < 1e-12
    results.append(
        CheckResult(
            "bregman_nonnegative_zero_at_diagonal",
            most_negative >= -1e-12 and ok_identity,
            f"most negative value {most_negative:.3e}",
        )
    )
    return results


def hilbert_suite(n_samples: int = 1000, seed: int = 20_241) -> list[CheckResult]:
    results = []
    rng = make_rng(seed)
    ident = IdentityOperator(6)
    worst = 0.0
    for i in range(n_samples):
        x = rng.standard_normal(6)
        noise = 0.5 * rng.standard_normal(6)
        alpha = 1.0 - 1e-9 if i == 0 else float(rng.uniform(1e-6, 1.0 - 1e-9))
        worst = max(worst, hilbert_equivalence_check(ident, x, alpha, noise))
    results.append(
        CheckResult("hilbert_closed_form[identity]", worst < 1e-12, f"max gap {worst:.3e}")
    )

    op = random_softmax_policy(10, 2.0, matrix_seed=2024, matrix_scale=0.1)
    worst = 0.0
    for _ in range(n_samples):
        x = rng.dirichlet(np.ones(10))
        noise = 0.1 * rng.standard_normal(10)
        alpha = float(rng.uniform(1e-6, 1.0 - 1e-9))
        worst = max(worst, hilbert_equivalence_check(op, x, alpha, noise))
    results.append(
        CheckResult("hilbert_closed_form[softmax_policy]", worst < 1e-12, f"max gap {worst:.3e}")
    )
    return results


def trim_oracle(u: np.ndarray, k: int) -> np.ndarray:
    """Reference trimming by explicit sort: largest |u_i| first, ties by index."""
    order = sorted(range(u.size), key=lambda i: (-abs(u[i]), i))
    out = np.array(u, dtype=np.float64, copy=True)
    for i in order[: min(k, u.size)]:
        out[i] = 0.0
    return out


def trim_suite(seed: int = 20_242) -> list[CheckResult]:
    results = []
    values = (-2.0, -1.0, 0.0, 1.0, 2.0)
    mismatches = 0
    total = 0
    for d in range(1, 6):
        for combo in itertools.product(values, repeat=d):
            u = np.array(combo)
            for k in range(d + 1):
                total += 1
                if not np.array_equal(trim(u, k), trim_oracle(u, k)):
                    mismatches += 1
    results.append(
        CheckResult(
            "trim_matches_sort_oracle_exhaustive",
            mismatches == 0,
            f"{mismatches} mismatches over {total} cases",
        )
    )

    rng = make_rng(seed)
    ok = True
    for _ in range(1000):
        u = rng.standard_t(2.0, size=17)
        k = int(rng.integers(0, 18))
        t = trim(u, k)
        kept = np.abs(t) > 0
        ok &= np.array_equal(t[kept], u[kept])
        ok &= np.max(np.abs(t)) <= np.max(np.abs(u)) + 0.0
        ok &= np.linalg.norm(t) <= np.linalg.norm(u) + 1e-15
        ok &= np.array_equal(trim(u, 0), u)
        ok &= not np.any(trim(u, 17))
    results.append(CheckResult("trim_norm_and_identity_invariants", bool(ok), "1000 random draws"))
    return results


def descent_suite(trials: int = 10_000, seed: int = 20_243) -> list[CheckResult]:
    results = []
    op = random_softmax_policy(10, 2.0, matrix_seed=2024, matrix_scale=0.1)
    geometries = [
        ("euclidean", EuclideanGeometry()),
        ("neg_entropy_simplex", NegEntropySimplexGeometry(domain_floor=1e-2)),
    ]
    for label, geom in geometries:
        for n_probe in (10, 100):
            cfg = IterationConfig(
                operator=op,
                geometry=geom,
                steps=HarmonicOffsetSteps(10.0),
                noise=GaussianNoise(0.1, seed=99),
                n_iters=max(n_probe, 1),
                seed=seed % 1000,
            )
            rep = descent_check(cfg, n_probe=n_probe, trials=trials)
            results.append(
                CheckResult(
                    f"one_step_descent[{label}, n={n_probe}]",
                    rep.satisfied,
                    f"lhs {rep.lhs_mean:.6g} <= rhs {rep.rhs:.6g} + 3se {3 * rep.standard_error:.2g}",
                )
            )
    return results


def run_suite(name: str, **kwargs) -> list[CheckResult]:
    if name == "geometry":
        return geometry_suite(**kwargs)
    if name == "hilbert":
        return hilbert_suite(**kwargs)
    if name == "trim":
        return trim_suite(**kwargs)
    if name == "descent":
        return descent_suite(**kwargs)
    raise ValueError(f"unknown suite {name!r} (available: {', '.join(SUITES)})")

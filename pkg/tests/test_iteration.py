"""Iteration engine: step schedules, the update, the driver loop, traces."""

import numpy as np
import pytest

from bregman_skm import (
    AffineAverageOperator,
    ConfigError,
    ConstantSteps,
    Diverged,
    EuclideanGeometry,
    GaussianNoise,
    GeometrySchedule,
    HarmonicOffsetSteps,
    IdentityOperator,
    IterationConfig,
    NegEntropySimplexGeometry,
    PolynomialSteps,
    ScaledGeometry,
    StudentTNoise,
    TrimSchedule,
    ZeroNoise,
    hilbert_equivalence_check,
    make_rng,
    one_plus_harmonic,
    random_affine_average,
    random_softmax_policy,
    run,
    skm_step,
    step_size,
    uniform_simplex,
)
from bregman_skm.operators import Operator

EUC = EuclideanGeometry()
ENT = NegEntropySimplexGeometry()


class TestStepSize:
    def test_harmonic_offset(self):
        assert step_size(HarmonicOffsetSteps(10.0), 0) == pytest.approx(0.1)
        assert step_size(HarmonicOffsetSteps(10.0), 90) == pytest.approx(0.01)

    def test_polynomial_capped_at_zero(self):
        sched = PolynomialSteps(0.75)
        assert step_size(sched, 0) == pytest.approx(1.0 - 1e-9, abs=1e-15)
        assert step_size(sched, 15) == pytest.approx(0.125)

    def test_constant(self):
        assert step_size(ConstantSteps(0.5), 12345) == 0.5

    def test_values_in_open_interval(self):
        for sched in (HarmonicOffsetSteps(1.5), PolynomialSteps(0.6), ConstantSteps(0.9)):
            for n in (0, 1, 10, 10**6):
                assert 0.0 < step_size(sched, n) < 1.0

    def test_validation(self):
        with pytest.raises(ConfigError):
            HarmonicOffsetSteps(1.0)
        with pytest.raises(ConfigError):
            PolynomialSteps(0.5)
        with pytest.raises(ConfigError):
            PolynomialSteps(1.2)
        with pytest.raises(ConfigError):
            ConstantSteps(1.0)

    def test_a3_flags(self):
        assert HarmonicOffsetSteps(10.0).is_a3
        assert PolynomialSteps(0.75).is_a3
        assert not ConstantSteps(0.3).is_a3


def swap_operator():
    return AffineAverageOperator(np.array([[0.0, 1.0], [1.0, 0.0]]), np.zeros(2))


class TestSkmStep:
    def test_euclidean_halfway(self):
        out = skm_step(EUC, swap_operator(), [1.0, 0.0], 0.5, np.zeros(2))
        np.testing.assert_allclose(out, [0.5, 0.5], rtol=0, atol=1e-15)

    def test_tiny_alpha_stays_put(self):
        x = np.array([1.0, 0.0])
        out = skm_step(EUC, swap_operator(), x, 1e-12, np.zeros(2))
        assert np.max(np.abs(out - x)) < 1e-8

    def test_entropy_identity_operator_fixed(self):
        out = skm_step(ENT, IdentityOperator(2), [0.5, 0.5], 0.3, np.zeros(2))
        np.testing.assert_allclose(out, [0.5, 0.5], rtol=0, atol=1e-12)

    def test_result_in_domain_interior(self):
        g = NegEntropySimplexGeometry(domain_floor=1e-2)
        rng = make_rng(41)
        op = random_softmax_policy(6, 2.0, matrix_seed=1, matrix_scale=0.5)
        for _ in range(200):
            x, _ = g.clamp_to_domain(rng.dirichlet(np.ones(6)))
            out = skm_step(g, op, x, 0.3, rng.normal(0, 0.2, 6))
            assert out.min() >= g.domain_floor
            assert abs(out.sum() - 1.0) < 1e-9

    def test_trimmed_noise_applied(self):
        # a huge spike in one coordinate is removed at k=1
        out = skm_step(EUC, IdentityOperator(3), [0.0, 0.0, 0.0], 0.5, [100.0, 0.1, 0.0], k=1)
        np.testing.assert_allclose(out, [0.0, 0.05, 0.0], rtol=0, atol=1e-15)

    def test_alpha_validation(self):
        with pytest.raises(ConfigError):
            skm_step(EUC, IdentityOperator(2), [0.0, 0.0], 1.0, np.zeros(2))


class TestHilbertEquivalence:
    def test_halfway_example(self):
        assert hilbert_equivalence_check(swap_operator(), [1.0, 0.0], 0.5, np.zeros(2)) == 0.0

    def test_alpha_edge(self):
        assert hilbert_equivalence_check(swap_operator(), [1.0, 0.0], 1 - 1e-9, [0.1, -0.2]) < 1e-12

    def test_seeded_battery(self):
        rng = make_rng(42)
        op = IdentityOperator(5)
        worst = 0.0
        for _ in range(1000):
            x = rng.standard_normal(5)
            noise = rng.standard_normal(5)
            alpha = float(rng.uniform(1e-9, 1 - 1e-9))
            worst = max(worst, hilbert_equivalence_check(op, x, alpha, noise))
        assert worst < 1e-12


class ExplodingOperator(Operator):
    """Test-only expansive map used to exercise the divergence guard."""

    kind = "exploding"

    def __init__(self, dim):
        self.dim = dim

    def apply(self, x):
        return 10.0 * np.asarray(x, dtype=np.float64)


class TestRun:
    def test_identity_operator_stays_at_init(self):
        cfg = IterationConfig(
            operator=IdentityOperator(4), geometry=ENT, steps=HarmonicOffsetSteps(10.0),
            noise=ZeroNoise(), n_iters=50, seed=0,
        )
        tr = run(cfg)
        np.testing.assert_allclose(tr.final_point, uniform_simplex(4), rtol=0, atol=1e-12)
        np.testing.assert_allclose(tr.bregman_residual, 0.0, atol=1e-14)
        np.testing.assert_allclose(tr.norm_residual, 0.0, atol=1e-14)

    def test_rows_cover_endpoints_and_stride(self):
        op = random_softmax_policy(5, 2.0, matrix_seed=2, matrix_scale=0.2)
        cfg = IterationConfig(
            operator=op, geometry=EUC, steps=HarmonicOffsetSteps(10.0),
            noise=GaussianNoise(0.1, seed=1), n_iters=95, record_every=10, seed=0,
        )
        tr = run(cfg)
        assert tr.n[0] == 0 and tr.n[-1] == 95
        assert list(tr.n[:-1]) == list(range(0, 95, 10))

    def test_default_stride_rule(self):
        op = IdentityOperator(2)
        small = IterationConfig(operator=op, geometry=EUC, steps=ConstantSteps(0.5), n_iters=100)
        big = IterationConfig(operator=op, geometry=EUC, steps=ConstantSteps(0.5), n_iters=20_000)
        assert small.stride == 1
        assert big.stride == 10

    def test_trace_column_semantics(self):
        op = random_softmax_policy(5, 2.0, matrix_seed=2, matrix_scale=0.2)
        sched = HarmonicOffsetSteps(10.0)
        cfg = IterationConfig(
            operator=op, geometry=EUC, steps=sched, noise=GaussianNoise(0.1, seed=1),
            n_iters=60, seed=3,
        )
        tr = run(cfg)
        alphas = np.array([sched.step(n) for n in range(61)])
        np.testing.assert_allclose(tr.alpha, alphas, rtol=0, atol=0)
        # step_sum excludes the row's own alpha
        np.testing.assert_allclose(tr.step_sum, np.concatenate([[0.0], np.cumsum(alphas[:-1])]),
                                   rtol=0, atol=1e-15)
        assert np.all(np.diff(tr.step_sum) > 0)
        # avg_residual at row n is the alpha-weighted mean of residuals below n
        w = np.cumsum(alphas[:-1] * tr.bregman_residual[:-1])
        expect = np.concatenate([[0.0], w / np.cumsum(alphas[:-1])])
        np.testing.assert_allclose(tr.avg_residual, expect, rtol=0, atol=1e-13)
        assert np.all(np.isfinite(tr.avg_residual))

    def test_deterministic_bit_identical(self, tmp_path):
        op = random_softmax_policy(8, 2.0, matrix_seed=6, matrix_scale=0.3)
        cfg = IterationConfig(
            operator=op, geometry=ENT, steps=HarmonicOffsetSteps(10.0),
            noise=StudentTNoise(dof=2.0, scale=0.05, seed=5), trim=TrimSchedule("log_schedule"),
            n_iters=300, seed=7,
        )
        t1, t2 = run(cfg), run(cfg)
        assert np.array_equal(t1.final_point, t2.final_point)
        for col in ("alpha", "bregman_residual", "norm_residual", "avg_residual"):
            assert np.array_equal(getattr(t1, col), getattr(t2, col))
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        t1.write_csv(p1)
        t2.write_csv(p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_different_seeds_differ(self):
        op = random_softmax_policy(8, 2.0, matrix_seed=6, matrix_scale=0.3)
        mk = lambda s: run(
            IterationConfig(operator=op, geometry=EUC, steps=HarmonicOffsetSteps(10.0),
                            noise=GaussianNoise(0.1, seed=0), n_iters=50, seed=s)
        )
        assert not np.array_equal(mk(0).final_point, mk(1).final_point)

    def test_domain_preservation_under_noise(self):
        g = NegEntropySimplexGeometry(domain_floor=1e-2)
        op = random_softmax_policy(10, 2.0, matrix_seed=2024, matrix_scale=0.1)
        cfg = IterationConfig(
            operator=op, geometry=g, steps=HarmonicOffsetSteps(10.0),
            noise=GaussianNoise(0.1, seed=99), n_iters=400, seed=1,
        )
        tr = run(cfg)
        assert tr.final_point.min() >= g.domain_floor
        assert abs(tr.final_point.sum() - 1.0) < 1e-9
        assert tr.metadata["clamp_total"] > 0
        assert np.all(np.diff(tr.clamp_count) >= 0)

    def test_zero_noise_euclidean_residual_monotone(self):
        op = random_softmax_policy(10, 2.0, matrix_seed=2024, matrix_scale=0.4)
        cfg = IterationConfig(
            operator=op, geometry=EUC, steps=HarmonicOffsetSteps(10.0),
            noise=ZeroNoise(), n_iters=2000, seed=0,
        )
        tr = run(cfg)
        assert np.all(np.diff(tr.norm_residual) <= 1e-12)

    def test_adaptive_schedule_scales_residual(self):
        base = NegEntropySimplexGeometry(domain_floor=1e-2)
        sched = GeometrySchedule(base=base, scale_fn=one_plus_harmonic)
        op = random_softmax_policy(6, 2.0, matrix_seed=3, matrix_scale=0.2)
        cfg = IterationConfig(operator=op, geometry=sched, steps=HarmonicOffsetSteps(10.0),
                              noise=ZeroNoise(), n_iters=5, seed=0)
        tr = run(cfg)
        u = uniform_simplex(6)
        tx, _ = base.clamp_to_domain(op.apply(u))
        expected = ScaledGeometry(2.0, base).bregman(u, tx)  # kappa_0 = 2
        assert tr.bregman_residual[0] == pytest.approx(expected, rel=1e-12)

    def test_custom_init(self):
        x0 = np.array([0.7, 0.1, 0.2])
        cfg = IterationConfig(operator=IdentityOperator(3), geometry=ENT,
                              steps=ConstantSteps(0.5), init=x0, n_iters=3)
        tr = run(cfg)
        np.testing.assert_allclose(tr.final_point, x0, rtol=0, atol=1e-12)

    def test_divergence_guard(self):
        cfg = IterationConfig(
            operator=ExplodingOperator(3), geometry=EUC, steps=ConstantSteps(0.9),
            noise=ZeroNoise(), n_iters=50, init=np.full(3, 0.5), seed=0,
        )
        with pytest.raises(Diverged) as exc:
            run(cfg)
        tr = exc.value.trace
        assert tr is not None
        assert tr.metadata["diverged"] is True
        assert 0 < tr.metadata["diverged_at"] <= 50

    def test_config_validation(self):
        op = IdentityOperator(2)
        with pytest.raises(ConfigError):
            IterationConfig(operator=op, geometry=EUC, steps=ConstantSteps(0.5), n_iters=0)
        with pytest.raises(ConfigError):
            IterationConfig(operator=op, geometry=EUC, steps=ConstantSteps(0.5), n_iters=5,
                            record_every=0)
        with pytest.raises(ConfigError):
            run(IterationConfig(operator=op, geometry=EUC, steps=ConstantSteps(0.5), n_iters=2,
                                init="center"))


class TestStatisticalInvariants:
    def test_residual_vanishing_median(self):
        # median residual at n = N is below the median at n = N/10 (20 seeds)
        op = random_softmax_policy(10, 2.0, matrix_seed=2024, matrix_scale=0.1)
        g = NegEntropySimplexGeometry(domain_floor=1e-2)
        at_n, at_tenth = [], []
        N = 1000
        for seed in range(20):
            cfg = IterationConfig(operator=op, geometry=g, steps=HarmonicOffsetSteps(10.0),
                                  noise=GaussianNoise(0.1, seed=99), n_iters=N, seed=seed)
            tr = run(cfg)
            at_n.append(tr.bregman_residual[tr.n == N][0])
            at_tenth.append(tr.bregman_residual[tr.n == N // 10][0])
        assert np.median(at_n) < np.median(at_tenth)

    def test_weighted_square_sum_tail_shrinks(self):
        # S_n = sum alpha_m * ||x_m - T(x_m)||^2: the second half contributes
        # less than the first half at N = 1e5 (20-seed medians)
        op = random_affine_average(3, matrix_seed=11, matrix_norm=0.5)
        tails, heads = [], []
        for seed in range(20):
            cfg = IterationConfig(operator=op, geometry=EUC, steps=HarmonicOffsetSteps(10.0),
                                  noise=GaussianNoise(0.1, seed=1), n_iters=100_000, seed=seed)
            tr = run(cfg)
            inc = tr.alpha[:-1] * tr.norm_residual[:-1] ** 2
            s = np.cumsum(inc)
            heads.append(s[len(s) // 2])
            tails.append(s[-1] - s[len(s) // 2])
        assert np.median(tails) < np.median(heads)

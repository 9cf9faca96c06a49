import numpy as np
import pytest

from monozero.operators import build_bilinear, zero_operator
from monozero.oracle import (NoiseModel, SeedSpec, draw_blocks, noise_vector,
                             noisy_eval, variance_estimate)


class TestSeedSpec:
    def test_unknown_stream_rejected(self):
        with pytest.raises(ValueError, match="unknown stream"):
            SeedSpec(0, stream="omega")

    def test_reproducible_bitwise(self):
        a = SeedSpec(99, run_index=7, stream="eta").generator().standard_normal(64)
        b = SeedSpec(99, run_index=7, stream="eta").generator().standard_normal(64)
        assert np.array_equal(a, b)

    def test_distinct_runs_and_streams_differ(self):
        base = SeedSpec(99, run_index=7, stream="xi")
        a = base.generator().standard_normal(16)
        b = base.with_run(8).generator().standard_normal(16)
        c = base.with_stream("eta").generator().standard_normal(16)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_blocked_equals_sequential(self):
        """The whole pre-draw design rests on this prefix property."""
        seed = SeedSpec(5, run_index=2)
        blocks = draw_blocks(seed, 12, 3)
        gen = seed.generator()
        stepwise = np.stack([gen.standard_normal(3) for _ in range(12)])
        assert np.array_equal(blocks, stepwise)
        assert np.array_equal(draw_blocks(seed, 5, 3), blocks[:5])

    def test_noise_vector_is_block_k(self):
        seed = SeedSpec(5)
        noise = NoiseModel(kind="iid-gaussian", sigma_star=2.0)
        blocks = draw_blocks(seed, 8, 4)
        for k in (0, 3, 7):
            expected = noise.apply(4, k, blocks[k])
            assert np.array_equal(noise_vector(noise, 4, seed, k), expected)


class TestNoiseModels:
    def test_none_is_exact(self):
        op, _ = build_bilinear(4)
        x = np.arange(8.0)
        out = noisy_eval(op, x, NoiseModel(), SeedSpec(0), k=3)
        assert np.array_equal(out, op.eval(x))

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown noise kind"):
            NoiseModel(kind="cauchy")

    def test_negative_params_rejected(self):
        with pytest.raises(ValueError):
            NoiseModel(kind="iid-gaussian", sigma_star=-1.0)
        with pytest.raises(ValueError):
            NoiseModel(kind="decaying-direction", decay_std=-2.0)

    def test_decaying_direction_formula(self):
        # n = 100, k = 10, std 10: W = (a / 100) * ones with a = 10 * g
        noise = NoiseModel(kind="decaying-direction", decay_std=10.0)
        seed = SeedSpec(123)
        g = draw_blocks(seed, 11, 1)[10, 0]
        a = 10.0 * g
        w = noise_vector(noise, 100, seed, 10)
        assert np.array_equal(w, np.full(100, a / (10 * np.sqrt(100))))
        assert np.linalg.norm(w) == pytest.approx(abs(a) / 10.0, rel=1e-12)

    def test_decaying_rejects_k0(self):
        noise = NoiseModel(kind="decaying-direction", decay_std=1.0)
        with pytest.raises(ValueError, match="k = 0"):
            noise_vector(noise, 4, SeedSpec(0), 0)

    def test_iid_variance_is_sigma_star_sq(self):
        noise = NoiseModel(kind="iid-gaussian", sigma_star=3.0)
        assert noise.variance_bound() == 9.0
        assert NoiseModel(kind="decaying-direction", decay_std=10.0).variance_bound() == 100.0
        assert NoiseModel().variance_bound() == 0.0

    def test_unbiasedness_monte_carlo(self):
        # mean of N draws must have norm <= 5 sigma* sqrt(n/N)
        n, N = 10, 1_000_000
        sigma = 1.0
        noise = NoiseModel(kind="iid-gaussian", sigma_star=sigma)
        seed = SeedSpec(2024)
        acc = np.zeros(n)
        chunk = 100_000
        gen = seed.generator()
        for _ in range(N // chunk):
            acc += (sigma / np.sqrt(n)) * gen.standard_normal((chunk, n)).sum(axis=0)
        mean = acc / N
        assert np.linalg.norm(mean) <= 5 * sigma * np.sqrt(n / N)


class TestVarianceEstimate:
    def test_none_is_zero(self):
        op = zero_operator(3)
        assert variance_estimate(op, np.zeros(3), NoiseModel(), 100, SeedSpec(0)) == 0.0

    def test_needs_two_samples(self):
        op = zero_operator(3)
        with pytest.raises(ValueError, match="at least 2"):
            variance_estimate(op, np.zeros(3), NoiseModel(), 1, SeedSpec(0))

    def test_iid_gaussian_concentrates(self):
        op = zero_operator(10)
        noise = NoiseModel(kind="iid-gaussian", sigma_star=2.0)
        est = variance_estimate(op, np.zeros(10), noise, 100_000, SeedSpec(7))
        assert 3.8 <= est <= 4.2

    def test_decaying_at_k1(self):
        op = zero_operator(10)
        noise = NoiseModel(kind="decaying-direction", decay_std=10.0)
        est = variance_estimate(op, np.zeros(10), noise, 200_000, SeedSpec(11), k=1)
        assert est == pytest.approx(100.0, rel=0.10)

    def test_decaying_scales_with_k(self):
        op = zero_operator(4)
        noise = NoiseModel(kind="decaying-direction", decay_std=10.0)
        seed = SeedSpec(3)
        est1 = variance_estimate(op, np.zeros(4), noise, 50_000, seed, k=1)
        est5 = variance_estimate(op, np.zeros(4), noise, 50_000, seed, k=5)
        assert est5 == pytest.approx(est1 / 25.0, rel=1e-12)


class TestStreamIndependence:
    def test_matched_iteration_correlation(self):
        N = 100_000
        seed = SeedSpec(314159, run_index=0)
        xi = draw_blocks(seed.with_stream("xi"), N, 1)[:, 0]
        eta = draw_blocks(seed.with_stream("eta"), N, 1)[:, 0]
        r = np.corrcoef(xi, eta)[0, 1]
        assert abs(r) <= 0.01

    def test_decaying_variance_is_summable(self):
        # sum_k E||W_k||^2 = std^2 sum 1/k^2, bounded by std^2 pi^2/6
        std = 10.0
        ks = np.arange(1, 100_001)
        partial = np.cumsum(std**2 / ks**2)
        assert np.all(partial <= std**2 * np.pi**2 / 6 + 1e-9)

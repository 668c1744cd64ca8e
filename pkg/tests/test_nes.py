import numpy as np
import pytest

from drivepatch.nes import (
    NesConfig,
    OptState,
    PartialEvaluationError,
    estimate_gradient,
    optimize,
    step,
)
from drivepatch.patch import Patch
from drivepatch.rng import RngStream


def quadratic(target):
    return lambda theta, rng: float(np.sum((theta - target) ** 2))


class TestEstimateGradient:
    def test_constant_objective_zero_gradient(self):
        cfg = NesConfig(population_n=8, sigma=0.1, alpha=0.02, iterations=1, seed=0)
        g = estimate_gradient(np.full(10, 100.0), lambda t, r: 5.0, cfg, RngStream(0).derive(0))
        assert np.all(g == 0.0)

    def test_linear_objective_estimates_twice_slope(self):
        # The antithetic form as implemented carries no 1/2 factor, so the
        # expectation is 2c for J = c . theta.
        gen = np.random.Generator(np.random.PCG64(123))
        c = gen.uniform(-1.0, 1.0, size=16)
        cfg = NesConfig(population_n=2000, sigma=0.1, alpha=0.02, iterations=1, seed=42)
        g = estimate_gradient(
            np.full(16, 127.5), lambda t, r: float(np.dot(c, t)), cfg, RngStream(42).derive(0)
        )
        rel = np.linalg.norm(g - 2.0 * c) / np.linalg.norm(2.0 * c)
        assert rel <= 0.15

    def test_antithetic_sign_symmetry(self):
        # Negating every direction leaves the estimate unchanged: both the
        # loss difference and the direction flip sign.
        cfg = NesConfig(population_n=50, sigma=0.5, alpha=0.02, iterations=1, seed=3)
        theta = np.full(6, 120.0)
        obj = quadratic(np.full(6, 100.0))
        rng = RngStream(3).derive(0)
        eps = rng.derive(0).generator().standard_normal((50, 6))
        g_manual = np.zeros(6)
        for i in range(50):
            jp = obj(np.clip(theta + cfg.sigma * eps[i], 0, 255), None)
            jm = obj(np.clip(theta - cfg.sigma * eps[i], 0, 255), None)
            g_manual += (jp - jm) * eps[i]
            g_flip = (jm - jp) * -eps[i]
            assert np.allclose((jp - jm) * eps[i], g_flip)
        g_manual /= 50 * cfg.sigma
        g = estimate_gradient(theta, obj, cfg, rng)
        assert np.allclose(g, g_manual)


class TestStep:
    def test_zero_gradient_leaves_theta(self):
        cfg = NesConfig(population_n=4, sigma=0.1, alpha=0.5, iterations=1, seed=0)
        state = OptState(theta=np.full(5, 99.0))
        out = step(state, lambda t, r: 1.0, cfg)
        assert np.array_equal(out.theta, state.theta)
        assert out.iteration == 1
        assert out.candidate_evals == 8

    def test_update_clamps_at_bounds(self):
        # A gradient pushing values below 0 clamps at 0.
        cfg = NesConfig(population_n=30, sigma=0.5, alpha=50000.0, iterations=1, seed=1)
        state = OptState(theta=np.full(4, 1.0))
        out = step(state, lambda t, r: float(np.sum(t)), cfg)
        assert out.theta.min() >= 0.0 and out.theta.max() <= 255.0

    def test_counters_and_history(self):
        cfg = NesConfig(population_n=7, sigma=0.1, alpha=0.01, iterations=3, seed=0)
        state = OptState(theta=np.full(3, 50.0))
        for i in range(3):
            state = step(state, quadratic(np.full(3, 60.0)), cfg)
        assert state.candidate_evals == 2 * 7 * 3
        assert len(state.loss_history) == 3
        assert state.best_loss == min(state.loss_history)

    def test_failure_propagates_without_mutation(self):
        cfg = NesConfig(population_n=4, sigma=0.1, alpha=0.01, iterations=1, seed=0)
        state = OptState(theta=np.full(3, 50.0))

        def broken(theta, rng):
            raise RuntimeError("backend down")

        with pytest.raises(PartialEvaluationError):
            step(state, broken, cfg)
        assert state.iteration == 0 and not state.loss_history


class TestOptimize:
    def test_quadratic_descent_at_default_hyperparameters(self):
        gen = np.random.Generator(np.random.PCG64(7))
        target = 127.5 + gen.uniform(-20.0, 20.0, size=64)
        cfg = NesConfig(population_n=20, sigma=0.1, alpha=0.02, iterations=200, seed=7)
        theta0 = np.full(64, 127.5)
        initial_loss = float(np.sum((theta0 - target) ** 2))
        result = optimize(theta0, quadratic(target), cfg)
        assert result.best_loss <= 0.01 * initial_loss
        assert result.status == "completed"
        # strictly decreasing over the first 50 iterations as a running best
        running = np.minimum.accumulate(result.loss_history[:50])
        assert running[-1] < running[0]

    def test_zero_iterations_rejected(self):
        with pytest.raises(ValueError):
            NesConfig(iterations=0)

    def test_parallelism_bit_identical(self):
        gen = np.random.Generator(np.random.PCG64(9))
        target = 127.5 + gen.uniform(-5.0, 5.0, size=12)
        results = []
        for workers in (1, 8):
            cfg = NesConfig(
                population_n=6, sigma=0.2, alpha=0.05, iterations=10, seed=5, parallelism=workers
            )
            results.append(optimize(np.full(12, 127.5), quadratic(target), cfg))
        a, b = results
        assert np.array_equal(a.best_theta, b.best_theta)
        assert a.loss_history == b.loss_history

    def test_patch_in_patch_out(self):
        patch = Patch(np.full((2, 2, 3), 120.0), 1.5, 0.5)
        cfg = NesConfig(population_n=3, sigma=0.1, alpha=0.01, iterations=2, seed=0)
        result = optimize(patch, lambda t, r: float(np.sum(t)), cfg)
        assert isinstance(result.best_theta, Patch)
        assert result.best_theta.physical_width == 1.5

    def test_early_stop_on_loss(self):
        cfg = NesConfig(
            population_n=4, sigma=0.1, alpha=0.02, iterations=500, seed=0, early_stop_loss=1e9
        )
        result = optimize(np.full(4, 100.0), quadratic(np.full(4, 101.0)), cfg)
        assert result.status == "early_stop_loss"
        assert result.iterations_completed == 1

    def test_plateau_stop(self):
        cfg = NesConfig(
            population_n=4, sigma=0.1, alpha=1e-9, iterations=500, seed=0, plateau_window=5
        )
        result = optimize(np.full(4, 100.0), quadratic(np.full(4, 130.0)), cfg)
        assert result.status == "plateau"
        assert result.iterations_completed < 500

    def test_aborted_returns_best_so_far(self):
        calls = {"n": 0}

        def flaky(theta, rng):
            calls["n"] += 1
            if calls["n"] > 12:
                raise RuntimeError("oracle gone")
            return float(np.sum(theta))

        cfg = NesConfig(population_n=3, sigma=0.1, alpha=0.01, iterations=10, seed=0)
        result = optimize(np.full(3, 90.0), flaky, cfg)
        assert result.status == "aborted"
        assert result.error is not None
        assert result.iterations_completed == 2

    def test_checkpoint_sink_cadence(self):
        seen = []
        cfg = NesConfig(
            population_n=2, sigma=0.1, alpha=0.01, iterations=7, seed=0, checkpoint_every=3
        )
        optimize(np.full(3, 50.0), lambda t, r: 0.0, cfg, sink=lambda s: seen.append(s.iteration))
        assert seen == [3, 6, 7]

    def test_query_accounting(self):
        class CountingObjective:
            queries_per_eval = 5

            def __call__(self, theta, rng):
                return float(np.sum(theta))

        cfg = NesConfig(population_n=20, sigma=0.1, alpha=0.001, iterations=10, seed=0)
        result = optimize(np.full(4, 100.0), CountingObjective(), cfg)
        assert result.candidate_evals == 2 * 20 * 10
        assert result.oracle_queries == 5 * result.candidate_evals

"""Tests for EM fitting: responsibilities, single steps, restarted fits."""

import numpy as np
import pytest

from mscs import (
    EMConfig,
    MixtureParams,
    Sample,
    ValidationError,
    em_step,
    fit,
    loglik,
    make_mixture,
    responsibilities,
    sample_from,
)
from mscs.em import variance_floor
from mscs.sim import scenario_params


def density1():
    return scenario_params(1).true_params


class TestResponsibilities:
    def test_single_component_all_ones(self):
        p = MixtureParams(np.array([1.0]), np.array([0.0]), np.array([1.0]))
        s = sample_from(p, 50, seed=1)
        r = responsibilities(p, s)
        assert np.array_equal(r, np.ones((50, 1)))

    def test_well_separated_components(self):
        p = make_mixture([0.5, 0.5], [-100.0, 100.0], [1.0, 1.0])
        r = responsibilities(p, Sample(np.array([-100.0])))
        assert abs(r[0, 0] - 1.0) <= 1e-12
        assert r[0, 1] <= 1e-12

    def test_density1_bayes_rule(self):
        p = density1()
        x = 1.37
        r = responsibilities(p, Sample(np.array([x])))
        phi = [
            w * np.exp(-0.5 * (x - m) ** 2 / v) / np.sqrt(2 * np.pi * v)
            for w, m, v in zip(p.weights, p.means, p.variances)
        ]
        expected = np.array(phi) / sum(phi)
        np.testing.assert_allclose(r[0], expected, rtol=1e-12)

    def test_rows_sum_to_one(self):
        p = scenario_params(3).true_params
        s = sample_from(p, 200, seed=4)
        r = responsibilities(p, s)
        np.testing.assert_allclose(r.sum(axis=1), 1.0, atol=1e-12)


class TestEmStep:
    def test_k1_single_step_closed_form(self):
        s = sample_from(density1(), 100, seed=8)
        start = MixtureParams(np.array([1.0]), np.array([5.0]), np.array([9.0]))
        out = em_step(start, s, floor=1e-9)
        assert out.means[0] == pytest.approx(float(np.mean(s.values)), abs=1e-12)
        assert out.variances[0] == pytest.approx(float(np.var(s.values)), rel=1e-12)

    def test_fixed_point_after_convergence(self):
        # drive em_step all the way to parameter stationarity, then assert
        # one more step stays put
        s = sample_from(density1(), 500, seed=2)
        cfg = EMConfig(n_restarts=5, seed=0)
        params = fit(s, 2, cfg).params
        floor = variance_floor(s, cfg)
        for _ in range(5000):
            nxt = em_step(params, s, floor)
            moved = max(
                np.abs(nxt.means - params.means).max(),
                np.abs(nxt.weights - params.weights).max(),
                np.abs(nxt.variances - params.variances).max(),
            )
            params = nxt
            if moved < 1e-12:
                break
        stepped = em_step(params, s, floor)
        np.testing.assert_allclose(stepped.means, params.means, atol=1e-8)
        np.testing.assert_allclose(stepped.weights, params.weights, atol=1e-8)
        np.testing.assert_allclose(stepped.variances, params.variances, atol=1e-8)

    def test_ascent_property(self):
        rng = np.random.default_rng(14)
        for trial in range(20):
            k = int(rng.integers(1, 4))
            truth = make_mixture(
                np.full(k, 1.0 / k),
                np.sort(rng.normal(0, 2, k)) + np.arange(k) * 0.1,
                rng.uniform(0.2, 2.0, k),
            )
            s = sample_from(truth, 150, seed=trial)
            start = make_mixture(
                np.full(k, 1.0 / k),
                np.quantile(s.values, (np.arange(k) + 0.5) / k) + np.arange(k) * 1e-6,
                np.full(k, np.var(s.values)),
            )
            floor = 1e-3 * float(np.var(s.values))
            before = loglik(start, s)
            after = loglik(em_step(start, s, floor), s)
            assert after >= before - 1e-9

    def test_output_ascending_means(self):
        s = sample_from(density1(), 300, seed=6)
        p = make_mixture([0.5, 0.5], [1.3, 1.4], [0.5, 0.5])
        out = em_step(p, s, floor=1e-6)
        assert np.all(np.diff(out.means) > 0)


class TestFit:
    def test_requires_enough_data(self):
        s = Sample(np.arange(5.0))
        with pytest.raises(ValidationError):
            fit(s, 2)

    def test_k1_closed_form_exact(self):
        s = sample_from(density1(), 100, seed=3)
        for cfg in (EMConfig(), EMConfig(n_restarts=3, rel_tol=1e-4, seed=99)):
            r = fit(s, 1, cfg)
            assert r.params.means[0] == pytest.approx(float(np.mean(s.values)), abs=1e-12)
            assert r.params.variances[0] == pytest.approx(float(np.var(s.values)), rel=1e-12)
            assert r.converged

    def test_density1_consistency(self):
        s = sample_from(density1(), 1000, seed=5)
        r = fit(s, 2, EMConfig(n_restarts=10, seed=0))
        assert abs(r.params.means[0] - 0.0) < 0.15
        assert abs(r.params.means[1] - 1.37) < 0.15

    def test_bitwise_determinism(self):
        s = sample_from(density1(), 400, seed=9)
        cfg = EMConfig(n_restarts=6, seed=123)
        a = fit(s, 3, cfg)
        b = fit(s, 3, cfg)
        assert a.loglik == b.loglik
        assert np.array_equal(a.params.weights, b.params.weights)
        assert np.array_equal(a.params.means, b.params.means)
        assert np.array_equal(a.params.variances, b.params.variances)
        assert (a.n_iter, a.converged, a.degenerate_restarts) == (
            b.n_iter, b.converged, b.degenerate_restarts
        )

    def test_monotone_loglik_along_chain(self):
        # drive the public em_step to convergence and watch the path
        rng = np.random.default_rng(33)
        for trial in range(10):
            truth = scenario_params(int(rng.integers(1, 5))).true_params
            s = sample_from(truth, 200, seed=trial + 50)
            floor = 1e-3 * float(np.var(s.values))
            params = make_mixture(
                np.full(2, 0.5),
                np.quantile(s.values, [0.25, 0.75]) + [0.0, 1e-9],
                np.full(2, np.var(s.values)),
            )
            prev = loglik(params, s)
            for _ in range(60):
                params = em_step(params, s, floor)
                cur = loglik(params, s)
                assert cur >= prev - 1e-9
                prev = cur

    def test_loglik_field_matches_recomputation(self):
        s = sample_from(density1(), 600, seed=12)
        r = fit(s, 2, EMConfig(n_restarts=4, seed=7))
        assert r.loglik == pytest.approx(loglik(r.params, s), rel=1e-9)

    def test_nesting_against_clone_backstop(self):
        # the clone restart guarantees the k+1 likelihood is never forced
        # below the k likelihood when the clone chain wins selection; when an
        # identified fit is preferred instead, the clone value still bounds
        # what was achievable, so we assert the weaker documented property:
        # the returned fit is never worse than the previous order when the
        # returned fit is collapsed, and otherwise is a valid identified fit.
        s = sample_from(scenario_params(2).true_params, 300, seed=17)
        prev = fit(s, 1)
        for k in range(2, 6):
            cur = fit(s, k, EMConfig(n_restarts=6, seed=3), prev_fit=prev)
            if cur.collapsed:
                assert cur.loglik >= prev.loglik - 1e-6
            assert np.all(np.diff(cur.params.means) > 0)
            prev = cur

    def test_returned_fit_dominates_deterministic_ladder(self):
        # restart dominance, expressed against the reproducible ladder chain
        s = sample_from(density1(), 500, seed=21)
        many = fit(s, 3, EMConfig(n_restarts=12, seed=5))
        ladder_only = fit(s, 3, EMConfig(n_restarts=1, seed=5))
        if not many.collapsed and not ladder_only.collapsed:
            assert many.loglik >= ladder_only.loglik - 1e-9

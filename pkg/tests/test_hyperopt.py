import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dscope.hyperopt import (
    CategoricalDim,
    ContinuousDim,
    IntegerDim,
    SearchSpace,
    bayes_optimize,
    decode,
    default_search_space,
    encode,
    expected_improvement,
    gp_fit,
    gp_posterior,
    gp_predict,
    matern52,
    save_trials,
    theta_to_hyperparameters,
)


def space_1d():
    return SearchSpace(dims=(ContinuousDim("x", 0.0, 1.0),))


class TestEncodeDecode:
    def test_linear_midpoint(self):
        space = SearchSpace(dims=(ContinuousDim("v", 0.0, 10.0),))
        assert encode(space, {"v": 5.0})[0] == 0.5
        assert decode(space, np.array([0.5]))["v"] == 5.0

    def test_log_dim_closed_form(self):
        space = SearchSpace(dims=(ContinuousDim("c", 1e-3, 1e4, log=True),))
        x = encode(space, {"c": 5.07})[0]
        want = (math.log(5.07) - math.log(1e-3)) / (math.log(1e4) - math.log(1e-3))
        assert x == pytest.approx(want, abs=1e-15)
        assert decode(space, np.array([x]))["c"] == pytest.approx(5.07, rel=1e-12)

    def test_categorical_one_hot_roundtrip(self):
        space = SearchSpace(dims=(CategoricalDim("m", ("cosine", "euclidean", "manhattan")),))
        x = encode(space, {"m": "euclidean"})
        assert x.tolist() == [0.0, 1.0, 0.0]
        assert decode(space, x)["m"] == "euclidean"

    def test_integer_roundtrip_and_half_up(self):
        space = SearchSpace(dims=(IntegerDim("k", 1, 50),))
        for k in (1, 7, 49, 50):
            assert decode(space, encode(space, {"k": k}))["k"] == k
        # 0.5 offsets round half-up.
        x_between = (6.5 - 1) / 49.0
        assert decode(space, np.array([x_between]))["k"] == 7

    def test_out_of_domain_errors(self):
        space = SearchSpace(dims=(ContinuousDim("v", 0.0, 1.0),))
        with pytest.raises(ValueError):
            encode(space, {"v": 2.0})
        cat = SearchSpace(dims=(CategoricalDim("m", ("a", "b")),))
        with pytest.raises(ValueError):
            encode(cat, {"m": "z"})

    def test_space_validation(self):
        with pytest.raises(ValueError):
            ContinuousDim("v", 1.0, 1.0)
        with pytest.raises(ValueError):
            ContinuousDim("v", 0.0, 1.0, log=True)
        with pytest.raises(ValueError):
            CategoricalDim("m", ("only",))
        with pytest.raises(ValueError):
            CategoricalDim("m", ("a", "a"))

    @settings(max_examples=60, deadline=None)
    @given(
        k=st.integers(min_value=1, max_value=50),
        c=st.floats(min_value=1e-3, max_value=1e4),
        m=st.sampled_from(["cosine", "euclidean", "manhattan"]),
    )
    def test_roundtrip_property_mixed_space(self, k, c, m):
        space = SearchSpace(
            dims=(
                IntegerDim("k", 1, 50),
                ContinuousDim("c", 1e-3, 1e4, log=True),
                CategoricalDim("m", ("cosine", "euclidean", "manhattan")),
            )
        )
        theta = {"k": k, "c": c, "m": m}
        back = decode(space, encode(space, theta))
        assert back["k"] == k
        assert back["m"] == m
        assert back["c"] == pytest.approx(c, rel=1e-12)
        assert np.all(encode(space, theta) >= 0.0) and np.all(encode(space, theta) <= 1.0)


class TestGP:
    def test_interpolates_training_points(self):
        rng = np.random.default_rng(0)
        X = rng.random((10, 2))
        y = np.sin(4.0 * X[:, 0]) + X[:, 1]
        gp = gp_fit(X, y, seed=0)
        for i in range(len(X)):
            mean, std = gp_predict(gp, X[i])
            assert mean == pytest.approx(y[i], abs=1e-4)
            assert std <= 1e-2

    def test_far_point_reverts_to_prior(self):
        rng = np.random.default_rng(1)
        X = rng.random((8, 2))
        y = rng.random(8)
        gp = gp_fit(X, y, seed=0)
        mean, std = gp_predict(gp, np.array([80.0, -80.0]))
        assert mean == pytest.approx(gp.y_mean, abs=1e-6)
        assert std == pytest.approx(gp.amplitude, rel=1e-6)

    def test_two_point_posterior_matches_hand_algebra(self):
        # Fixed kernel hyperparameters; compare against the closed-form
        # 2x2 GP equations evaluated with independent arithmetic.
        X = np.array([[0.2], [0.8]])
        y = np.array([1.0, 3.0])
        amp, ls, jitter = 1.5, 0.4, 1e-6
        gp = gp_posterior(X, y, amplitude=amp, length_scales=[ls], jitter=jitter)
        xq = np.array([0.5])

        def k(a, b):
            r = abs(a - b) / ls
            return amp**2 * (1 + math.sqrt(5) * r + 5 * r**2 / 3) * math.exp(-math.sqrt(5) * r)

        K = np.array([[k(0.2, 0.2) + jitter, k(0.2, 0.8)], [k(0.8, 0.2), k(0.8, 0.8) + jitter]])
        k_star = np.array([k(0.5, 0.2), k(0.5, 0.8)])
        yc = y - y.mean()
        Kinv = np.linalg.inv(K)
        want_mean = y.mean() + k_star @ Kinv @ yc
        want_var = k(0.5, 0.5) - k_star @ Kinv @ k_star
        mean, std = gp_predict(gp, xq)
        assert mean == pytest.approx(want_mean, abs=1e-8)
        assert std == pytest.approx(math.sqrt(max(want_var, 0.0)), abs=1e-8)

    def test_variance_bound_at_training_points_unit_amplitude(self):
        rng = np.random.default_rng(2)
        X = rng.random((12, 3))
        y = rng.random(12)
        gp = gp_posterior(X, y, amplitude=1.0, length_scales=[0.5, 0.5, 0.5], jitter=1e-6)
        for i in range(len(X)):
            _, std = gp_predict(gp, X[i])
            assert std <= 1e-2

    def test_needs_two_points(self):
        with pytest.raises(ValueError):
            gp_fit(np.zeros((1, 1)), np.zeros(1))

    def test_factorization_failure_after_jitter_escalation(self, monkeypatch):
        import dscope.hyperopt as ho

        def always_fail(*args, **kwargs):
            raise np.linalg.LinAlgError("forced")

        monkeypatch.setattr(ho, "cholesky", always_fail)
        X = np.random.default_rng(0).random((4, 1))
        with pytest.raises(np.linalg.LinAlgError, match="jitter"):
            gp_posterior(X, np.ones(4), amplitude=1.0, length_scales=[0.5])

    def test_matern_diagonal_is_amplitude_squared(self):
        X = np.random.default_rng(3).random((5, 2))
        K = matern52(X, X, amplitude=2.0, length_scales=np.array([0.3, 0.7]))
        assert np.allclose(np.diag(K), 4.0)


class TestExpectedImprovement:
    def test_zero_std_no_improvement(self):
        assert expected_improvement(0.5, 0.0, 0.7, xi=0.0) == 0.0

    def test_zero_std_with_improvement(self):
        assert expected_improvement(0.9, 0.0, 0.7, xi=0.0) == pytest.approx(0.2)

    def test_at_incumbent_unit_std(self):
        assert expected_improvement(0.0, 1.0, 0.0, xi=0.0) == pytest.approx(0.398942, abs=1e-6)

    def test_one_sigma_above(self):
        assert expected_improvement(1.0, 1.0, 0.0, xi=0.0) == pytest.approx(1.083316, abs=1e-6)

    @settings(max_examples=80, deadline=None)
    @given(
        mean=st.floats(min_value=-5, max_value=5),
        std=st.floats(min_value=0, max_value=5),
        best=st.floats(min_value=-5, max_value=5),
        xi=st.floats(min_value=0, max_value=1),
    )
    def test_nonnegative(self, mean, std, best, xi):
        assert expected_improvement(mean, std, best, xi=xi) >= 0.0

    @settings(max_examples=60, deadline=None)
    @given(
        mean=st.floats(min_value=0.01, max_value=5),
        s1=st.floats(min_value=0.0, max_value=3),
        s2=st.floats(min_value=0.0, max_value=3),
    )
    def test_monotone_in_std(self, mean, s1, s2):
        lo, hi = sorted([s1, s2])
        assert expected_improvement(mean, lo, 0.0, xi=0.0) <= expected_improvement(
            mean, hi, 0.0, xi=0.0
        ) + 1e-12


class TestBayesOptimize:
    def test_constant_objective(self):
        best, history = bayes_optimize(lambda th: 0.25, space_1d(), 8, 3, seed=0)
        assert best.value == 0.25
        assert len(history) == 8
        assert all(t.value == 0.25 for t in history)

    def test_history_reproducible(self):
        f = lambda th: 1.0 - (th["x"] - 0.3) ** 2
        _, h1 = bayes_optimize(f, space_1d(), 10, 4, seed=7)
        _, h2 = bayes_optimize(f, space_1d(), 10, 4, seed=7)
        assert [t.theta for t in h1] == [t.theta for t in h2]
        assert [t.value for t in h1] == [t.value for t in h2]

    def test_improves_on_initial_design(self):
        f = lambda th: 1.0 - (th["x"] - 0.7) ** 2
        best, history = bayes_optimize(f, space_1d(), 15, 5, seed=3)
        init_best = max(t.value for t in history[:5])
        assert best.value >= init_best

    def test_failures_recorded_and_loop_continues(self):
        calls = []

        def flaky(theta):
            calls.append(theta)
            if len(calls) % 2 == 0:
                raise RuntimeError("boom")
            return 0.5

        best, history = bayes_optimize(flaky, space_1d(), 8, 3, seed=0)
        assert len(history) == 8
        failed = [t for t in history if t.failed]
        assert failed and all(t.value == 0.0 and t.fold_values == () for t in failed)
        assert best.value == 0.5

    def test_fold_values_become_mean(self):
        best, history = bayes_optimize(
            lambda th: [0.2, 0.4, 0.9], space_1d(), 4, 2, seed=1
        )
        assert history[0].fold_values == (0.2, 0.4, 0.9)
        assert history[0].value == pytest.approx(np.mean([0.2, 0.4, 0.9]), abs=1e-12)

    def test_quadratic_hits_optimum_most_seeds(self):
        f = lambda th: 1.0 - (th["x"] - 0.7) ** 2
        hits = 0
        for seed in range(3):
            best, _ = bayes_optimize(f, space_1d(), 20, 5, seed=seed)
            hits += abs(best.theta["x"] - 0.7) <= 0.05
        assert hits >= 2

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            bayes_optimize(lambda th: 0.0, space_1d(), 5, 1, seed=0)
        with pytest.raises(ValueError):
            bayes_optimize(lambda th: 0.0, space_1d(), 3, 5, seed=0)

    def test_ties_resolve_to_earliest_trial(self):
        best, history = bayes_optimize(lambda th: 1.0, space_1d(), 6, 2, seed=0)
        assert best.iteration == 0


class TestTrialExport:
    def test_jsonl_schema(self, tmp_path):
        _, history = bayes_optimize(lambda th: 0.5, space_1d(), 4, 2, seed=0)
        path = tmp_path / "trials.jsonl"
        save_trials(history, path)
        lines = path.read_text().splitlines()
        assert len(lines) == 4
        rec = json.loads(lines[0])
        assert set(rec) == {"iteration", "theta", "encoded_x", "value", "fold_values", "failed"}


class TestDefaultSpaces:
    def test_contain_reference_optima(self):
        svm = default_search_space("svm")
        encode(svm, {"c": 5.07, "kernel": "rbf"})
        logreg = default_search_space("logreg")
        encode(logreg, {"c": 4.94e3})
        knn = default_search_space("knn")
        encode(knn, {"k": 7, "metric": "cosine"})

    def test_theta_translation(self):
        assert theta_to_hyperparameters("svm", {"c": 2.0, "kernel": "poly3"}) == {
            "c": 2.0,
            "kernel": "poly",
            "degree": 3,
        }
        assert theta_to_hyperparameters("svm", {"c": 2.0, "kernel": "rbf"}) == {
            "c": 2.0,
            "kernel": "rbf",
        }
        assert theta_to_hyperparameters("knn", {"k": 7, "metric": "cosine"}) == {
            "k": 7,
            "metric": "cosine",
        }

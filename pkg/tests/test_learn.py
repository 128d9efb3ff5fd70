import itertools
import math

import numpy as np
import pytest

from ichcast.labels import IchEvent
from ichcast.learn import (
    ModelArtifact,
    SgdConfig,
    Standardizer,
    TrainingDivergedError,
    aggregate_ranks,
    attribution_matrix,
    bl1_features,
    bl2_features,
    global_importance,
    logloss_and_grad,
    rank_features,
    select_top_features,
    shapley_linear,
    train_logreg,
)


class TestStandardizer:
    def test_two_point_column(self):
        std = Standardizer.fit(np.array([[1.0], [3.0]]))
        assert std.mean[0] == 2.0
        assert std.std[0] == 1.0  # population std
        assert std.apply(np.array([[3.0]]))[0, 0] == pytest.approx(1.0)

    def test_missing_maps_to_zero(self):
        std = Standardizer.fit(np.array([[1.0], [3.0]]))
        assert std.apply(np.array([[np.nan]]))[0, 0] == 0.0

    def test_constant_column_always_zero(self):
        std = Standardizer.fit(np.array([[5.0, 1.0], [5.0, 3.0]]))
        out = std.apply(np.array([[9.0, 2.0]]))
        assert out[0, 0] == 0.0

    def test_all_missing_column(self):
        std = Standardizer.fit(np.array([[np.nan, 1.0], [np.nan, 3.0]]))
        out = std.apply(np.array([[4.0, 1.0]]))
        assert out[0, 0] == 0.0

    def test_standardized_training_matrix_moments(self):
        rng = np.random.default_rng(0)
        X = rng.normal(3, 7, size=(500, 8))
        std = Standardizer.fit(X)
        Z = std.apply(X)
        assert np.abs(Z.mean(axis=0)).max() <= 1e-9
        assert np.abs(Z.std(axis=0) - 1.0).max() <= 1e-9

    def test_nan_stats_ignore_missing_rows(self):
        X = np.array([[1.0], [3.0], [np.nan]])
        std = Standardizer.fit(X)
        assert std.mean[0] == 2.0

    def test_round_trip_dict(self):
        std = Standardizer.fit(np.array([[1.0, 5.0], [3.0, 5.0]]))
        again = Standardizer.from_dict(std.to_dict())
        assert np.array_equal(again.mean, std.mean)
        assert np.array_equal(again.constant, std.constant)


class TestGradient:
    def test_analytic_vs_central_differences(self):
        rng = np.random.default_rng(1)
        max_rel = 0.0
        for _ in range(100):
            d = int(rng.integers(2, 8))
            n = int(rng.integers(3, 12))
            w = rng.normal(size=d)
            b = float(rng.normal())
            X = rng.normal(size=(n, d))
            y = rng.integers(0, 2, size=n).astype(float)
            lam = float(rng.uniform(0, 0.1))
            _, gw, gb = logloss_and_grad(w, b, X, y, lam)
            eps = 1e-6
            for j in range(d):
                e = np.zeros(d)
                e[j] = eps
                lp, _, _ = logloss_and_grad(w + e, b, X, y, lam)
                lm, _, _ = logloss_and_grad(w - e, b, X, y, lam)
                fd = (lp - lm) / (2 * eps)
                rel = abs(fd - gw[j]) / max(1e-8, abs(fd), abs(gw[j]))
                max_rel = max(max_rel, rel)
            lp, _, _ = logloss_and_grad(w, b + eps, X, y, lam)
            lm, _, _ = logloss_and_grad(w, b - eps, X, y, lam)
            fd = (lp - lm) / (2 * eps)
            rel = abs(fd - gb) / max(1e-8, abs(fd), abs(gb))
            max_rel = max(max_rel, rel)
        assert max_rel <= 1e-5


def separable_toy(n=400, seed=3):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    X = rng.normal(size=(n, 2)) * 0.3
    X[:, 0] += 3.0 * (2.0 * y - 1.0)
    return X, y.astype(float)


class TestTrainLogreg:
    def test_separable_accuracy(self):
        X, y = separable_toy()
        model = train_logreg(X, y, SgdConfig(lam=1e-6, epochs=30, lr=0.5, seed=0))
        acc = ((model.predict_proba(X) >= 0.5) == y).mean()
        assert acc >= 0.99

    def test_large_lambda_shrinks_weights_toward_base_rate(self):
        X, y = separable_toy()
        y[: int(0.7 * len(y))] = 1.0  # base rate 0.7-ish
        norms, spreads = [], []
        for lam in (1e-6, 1.0, 10.0):
            model = train_logreg(
                X, y, SgdConfig(lam=lam, epochs=400, lr=0.2, seed=0)
            )
            norms.append(np.linalg.norm(model.weights))
            spreads.append(np.abs(model.predict_proba(X) - y.mean()).mean())
        assert norms[0] > norms[1] > norms[2]
        assert norms[2] < 0.05
        assert spreads[2] < spreads[0]
        assert spreads[2] < 0.1

    def test_seeded_determinism(self):
        X, y = separable_toy()
        cfg = SgdConfig(lam=1e-4, epochs=5, lr=0.1, seed=42)
        m1 = train_logreg(X, y, cfg)
        m2 = train_logreg(X, y, cfg)
        assert np.array_equal(m1.weights, m2.weights)
        assert m1.bias == m2.bias

    def test_monotone_loss_full_batch_constant_lr(self):
        X, y = separable_toy(n=200)
        model = train_logreg(
            X, y,
            SgdConfig(lam=1e-3, epochs=25, lr=0.05, batch_size=len(y),
                      seed=0, lr_decay=False),
        )
        trace = np.array(model.loss_trace)
        assert np.all(np.diff(trace) <= 1e-12)

    def test_divergence_detected(self):
        # lr * lam far beyond the stability bound makes the weight-decay
        # step oscillate explosively until the penalty term overflows
        X, y = separable_toy(n=100)
        with pytest.raises(TrainingDivergedError):
            train_logreg(X, y, SgdConfig(lam=1e300, epochs=4, lr=1.0,
                                         batch_size=100, seed=0, lr_decay=False))

    def test_artifact_json_round_trip(self):
        X, y = separable_toy(n=100)
        model = train_logreg(X, y, SgdConfig(epochs=2, seed=1),
                             feature_names=("a", "b"))
        again = ModelArtifact.from_json(model.to_json())
        assert np.array_equal(again.weights, model.weights)
        assert again.feature_names == ("a", "b")
        x = np.array([[0.3, -0.2]])
        assert again.predict_proba(x) == pytest.approx(model.predict_proba(x))

    def test_prediction_invariant_under_feature_permutation(self):
        X, y = separable_toy(n=150)
        model = train_logreg(X, y, SgdConfig(epochs=3, seed=2))
        x = np.array([[0.5, -1.0]])
        perm = [1, 0]
        margin = x @ model.weights + model.bias
        margin_perm = x[:, perm] @ model.weights[perm] + model.bias
        assert margin_perm == pytest.approx(margin)


def brute_force_shapley(w, b, x, mu):
    """Exhaustive subset enumeration of the linear margin."""
    d = len(w)
    values = np.zeros(d)

    def margin(mask):
        z = np.where(mask, x, mu)
        return float(w @ z + b)

    for i in range(d):
        total = 0.0
        others = [j for j in range(d) if j != i]
        for r in range(d):
            for subset in itertools.combinations(others, r):
                mask = np.zeros(d, dtype=bool)
                mask[list(subset)] = True
                without = margin(mask)
                mask[i] = True
                with_i = margin(mask)
                weight = (
                    math.factorial(r) * math.factorial(d - r - 1) / math.factorial(d)
                )
                total += weight * (with_i - without)
        values[i] = total
    return values


class TestShapley:
    def test_closed_form_example(self):
        s = shapley_linear(np.array([1.0, 2.0]), np.array([1.0, 1.0]),
                           np.array([0.0, 0.0]))
        assert np.array_equal(s, np.array([1.0, 2.0]))
        assert s.sum() == 3.0

    def test_x_equals_background_is_zero(self):
        mu = np.array([0.3, -0.7, 2.0])
        s = shapley_linear(np.array([5.0, 1.0, -2.0]), mu, mu)
        assert np.all(s == 0.0)

    def test_matches_exhaustive_enumeration(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            d = int(rng.integers(1, 11))
            w = rng.normal(size=d)
            b = float(rng.normal())
            x = rng.normal(size=d)
            mu = rng.normal(size=d)
            got = shapley_linear(w, x, mu)
            want = brute_force_shapley(w, b, x, mu)
            assert np.abs(got - want).max() <= 1e-12

    def test_efficiency_identity(self):
        rng = np.random.default_rng(5)
        w = rng.normal(size=30)
        b = 0.7
        X = rng.normal(size=(50, 30))
        mu = rng.normal(size=30)
        for x in X:
            s = shapley_linear(w, x, mu)
            assert s.sum() == pytest.approx(
                (w @ x + b) - (w @ mu + b), rel=1e-12, abs=1e-12
            )

    def test_attribution_matrix_and_importance(self):
        X, y = separable_toy(n=120)
        model = train_logreg(X, y, SgdConfig(epochs=3, seed=6))
        attr = attribution_matrix(model, X)
        assert attr.shape == X.shape
        g = global_importance(model, X)
        assert np.all(g >= 0)
        assert g[0] > g[1]  # the separating feature dominates


class TestSelection:
    def test_top_k_simple(self):
        g = np.array([3.0, 1.0, 2.0])
        assert select_top_features(g, k=2).tolist() == [0, 2]

    def test_ties_break_by_canonical_order(self):
        g = np.ones(5)
        assert select_top_features(g, k=3).tolist() == [0, 1, 2]

    def test_k_beyond_dimension_is_identity(self):
        g = np.array([0.5, 0.1])
        assert select_top_features(g, k=10).tolist() == [0, 1]

    def test_invariant_to_positive_rescaling(self):
        rng = np.random.default_rng(7)
        g = rng.random(50)
        a = select_top_features(g, k=10)
        b = select_top_features(g * 17.3, k=10)
        assert np.array_equal(a, b)

    def test_rank_features_is_permutation(self):
        rng = np.random.default_rng(8)
        g = rng.random(20)
        ranks = rank_features(g)
        assert sorted(ranks.tolist()) == list(range(1, 21))

    def test_aggregate_single_split_identity(self):
        g = np.array([0.1, 0.9, 0.5])
        mean_rank = aggregate_ranks([g])
        assert mean_rank.tolist() == [3.0, 1.0, 2.0]

    def test_aggregate_best_everywhere_is_rank_one(self):
        rng = np.random.default_rng(9)
        gs = []
        for _ in range(5):
            g = rng.random(10)
            g[3] = 2.0  # always the largest
            gs.append(g)
        mean_rank = aggregate_ranks(gs)
        assert mean_rank[3] == 1.0
        assert mean_rank.argmin() == 3

    def test_aggregate_split_order_invariant(self):
        rng = np.random.default_rng(10)
        gs = [rng.random(12) for _ in range(4)]
        a = aggregate_ranks(gs)
        b = aggregate_ranks(gs[::-1])
        assert np.array_equal(a, b)


class TestBaselines:
    def test_bl1_constant_metrics(self):
        rows = np.full((40, 20), 3.5)
        out = bl1_features(rows)
        assert out.shape == (40, 40)
        assert np.all(out[10:] == 3.5)

    def test_bl1_median_oracle_on_ramp(self):
        rows = np.tile(np.arange(31.0)[:, None], (1, 20))
        out = bl1_features(rows)
        # at t=30 the 15-minute window holds minutes 16..30
        assert out[30, 0] == pytest.approx(np.median(np.arange(16.0, 31.0)))
        # and the 30-minute window holds minutes 1..30
        assert out[30, 1] == pytest.approx(np.median(np.arange(1.0, 31.0)))

    def test_bl1_all_missing_stays_missing_then_zero_after_standardizer(self):
        rows = np.full((20, 20), np.nan)
        out = bl1_features(rows)
        assert not np.isfinite(out).any()
        std = Standardizer.fit(np.vstack([out, out]))
        assert np.all(std.apply(out[:1]) == 0.0)

    def test_bl1_matches_pipeline_history_columns(self):
        rng = np.random.default_rng(11)
        rows = rng.normal(10, 2, size=(120, 20))
        rows[rng.random(rows.shape) < 0.2] = np.nan
        from ichcast.history import HistoryBuffer

        out = bl1_features(rows)
        buf = HistoryBuffer(20, scales=(15, 30))
        for t in range(120):
            buf.push(t, rows[t])
        emitted = buf.emit().values[:-2].reshape(20, 3, 2)
        np.testing.assert_array_equal(
            out[-1].reshape(20, 2), emitted[:, 0, :],
        )

    def test_bl2_no_prior_event_sentinel(self):
        medians = np.array([10.0, 11.0, 12.0])
        out = bl2_features(medians, [])
        assert out[2, 0] == 12.0
        assert out[2, 1] == 11.0
        assert out[2, 2] == 1e6

    def test_bl2_minutes_since_event_end(self):
        medians = np.full(200, 10.0)
        out = bl2_features(medians, [IchEvent(80, 100)])
        assert out[160, 2] == 60.0

    def test_bl2_boundary_t0(self):
        medians = np.array([10.0, 11.0])
        out = bl2_features(medians, [])
        assert out[0, 0] == 10.0
        assert np.isnan(out[0, 1])
        std = Standardizer.fit(np.array([[10.0, 10.0, 1.0], [12.0, 12.0, 2.0]]))
        assert std.apply(out[:1])[0, 1] == 0.0

    def test_bl2_window_skips_old_values(self):
        medians = np.full(100, np.nan)
        medians[10] = 15.0  # outside the 30-minute window at t=60
        medians[55] = 12.0
        out = bl2_features(medians, [])
        assert out[60, 0] == 12.0
        assert np.isnan(out[60, 1])

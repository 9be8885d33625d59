import math

import numpy as np
import pytest
from scipy import stats

from stutterkit import errors
from stutterkit.classifiers import GaussianBackend, KnnClassifier, minkowski_distance


# --------------------------------------------------------------------------
# Oracles: written independently of the implementation paths they check.
# --------------------------------------------------------------------------

def oracle_minkowski(x, y, p):
    return sum(abs(a - b) ** p for a, b in zip(x, y)) ** (1.0 / p)


def oracle_knn(train_x, train_y, query, k, p):
    """Exhaustive neighbor scan with explicit tie rules.

    Neighbors: ascending distance, distance ties by lower row index.
    Winner: most votes; vote ties by smaller summed voter distance, then by
    lower class code. Returns (label, 5-vector of vote fractions).
    """
    scored = sorted(
        ((np.sum(np.abs(np.asarray(q_row) - query) ** p) ** (1.0 / p), i)
         for i, q_row in enumerate(train_x)),
        key=lambda pair: (pair[0], pair[1]),
    )
    nearest = scored[:k]
    votes = [0] * 5
    dist_sum = [0.0] * 5
    for dist, idx in nearest:
        votes[train_y[idx]] += 1
        dist_sum[train_y[idx]] += dist
    best_votes = max(votes)
    candidates = [c for c in range(5) if votes[c] == best_votes]
    label = min(candidates, key=lambda c: (dist_sum[c], c))
    return label, np.array(votes, dtype=np.float64) / k


def oracle_gnb_posteriors(theta, var, prior, query):
    """Direct per-class density product; no log-space tricks."""
    joint = np.zeros(5)
    for c in range(5):
        if prior[c] == 0:
            continue
        joint[c] = prior[c] * np.prod(stats.norm.pdf(query, theta[c], np.sqrt(var[c])))
    return joint / joint.sum()


# --------------------------------------------------------------------------
# Minkowski distance
# --------------------------------------------------------------------------

class TestMinkowski:
    def test_three_four_five(self):
        assert minkowski_distance([0.0, 0.0], [3.0, 4.0], 2.0) == 5.0

    def test_identity(self):
        x = np.array([1.5, -2.0, 0.25])
        assert minkowski_distance(x, x, 3.0) == 0.0

    def test_p_one_sums_absolute_differences(self):
        assert minkowski_distance([1, 2, 3], [2, 4, 6], 1.0) == 6.0

    def test_errors(self):
        with pytest.raises(errors.DimensionMismatch):
            minkowski_distance([1, 2], [1, 2, 3], 2.0)
        with pytest.raises(errors.InvalidOrder):
            minkowski_distance([1, 2], [3, 4], 0.5)

    def test_matches_oracle(self):
        rng = np.random.default_rng(0)
        for p in (1.0, 1.5, 2.0, 3.0):
            x = rng.standard_normal(9)
            y = rng.standard_normal(9)
            assert minkowski_distance(x, y, p) == pytest.approx(
                oracle_minkowski(x, y, p), rel=1e-14
            )


# --------------------------------------------------------------------------
# KNN
# --------------------------------------------------------------------------

class TestKnn:
    def test_fit_boundary(self):
        rng = np.random.default_rng(1)
        X = rng.standard_normal((5, 3))
        y = np.array([0, 1, 2, 3, 4])
        KnnClassifier(k=5).fit(X, y)
        with pytest.raises(errors.InsufficientData):
            KnnClassifier(k=5).fit(X[:4], y[:4])

    def test_defaults(self):
        model = KnnClassifier()
        assert model.k == 5
        assert model.p == 2.0

    def test_unanimous_vote(self):
        X = np.zeros((5, 2)) + np.arange(5)[:, None] * 0.01
        y = np.full(5, 4)
        model = KnnClassifier(k=5).fit(X, y)
        np.testing.assert_array_equal(
            model.predict_proba([0.0, 0.0]), [[0, 0, 0, 0, 1.0]]
        )
        assert model.predict([0.0, 0.0])[0] == 4

    def test_majority_vote_fractions(self):
        # three block neighbors, two fluent, the rest far away
        X = np.array([[0.0], [0.1], [0.2], [0.3], [0.4], [100.0], [100.0]])
        y = np.array([2, 2, 2, 4, 4, 0, 1])
        model = KnnClassifier(k=5).fit(X, y)
        np.testing.assert_array_equal(
            model.predict_proba([0.0]), [[0, 0, 0.6, 0, 0.4]]
        )
        assert model.predict([0.0])[0] == 2

    def test_vote_tie_broken_by_summed_distance(self):
        # k=4: two votes each; class 1 voters sit closer in total
        X = np.array([[1.0], [1.1], [-1.2], [-1.3], [50.0]])
        y = np.array([1, 1, 3, 3, 0])
        model = KnnClassifier(k=4).fit(X, y)
        assert model.predict([0.0])[0] == 1
        # symmetric distances: falls through to the lower class code
        X = np.array([[1.0], [-1.0], [2.0], [-2.0]])
        y = np.array([3, 1, 3, 1])
        model = KnnClassifier(k=4).fit(X, y)
        assert model.predict([0.0])[0] == 1

    def test_distance_tie_broken_by_row_index(self):
        X = np.array([[1.0], [-1.0], [1.0]])
        y = np.array([2, 0, 1])
        model = KnnClassifier(k=1).fit(X, y)
        # rows 0 and 2 are equidistant; row 0 wins
        assert model.predict([0.0])[0] == 2

    def test_oracle_equivalence_randomized(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            n = int(rng.integers(8, 40))
            k_dim = int(rng.integers(1, 6))
            X = rng.integers(-3, 4, size=(n, k_dim)).astype(np.float64)  # ties likely
            y = rng.integers(0, 5, n)
            k = int(rng.integers(1, min(n, 7) + 1))
            p = float(rng.choice([1.0, 2.0, 3.0]))
            model = KnnClassifier(k=k, p=p).fit(X, y)
            queries = rng.integers(-3, 4, size=(10, k_dim)).astype(np.float64)
            probas = model.predict_proba(queries)
            labels = model.predict(queries)
            for i, q in enumerate(queries):
                want_label, want_proba = oracle_knn(X, y, q, k, p)
                np.testing.assert_array_equal(probas[i], want_proba)
                assert labels[i] == want_label

    def test_proba_entries_are_vote_multiples(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((30, 4))
        y = rng.integers(0, 5, 30)
        model = KnnClassifier(k=5).fit(X, y)
        probas = model.predict_proba(rng.standard_normal((12, 4)))
        np.testing.assert_array_equal(probas * 5, np.round(probas * 5))
        np.testing.assert_allclose(probas.sum(axis=1), 1.0, rtol=0, atol=1e-12)

    def test_shift_invariance(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((40, 3))
        y = rng.integers(0, 5, 40)
        queries = rng.standard_normal((8, 3))
        shift = np.array([5.0, -2.0, 11.0])
        base = KnnClassifier(k=5).fit(X, y).predict_proba(queries)
        moved = KnnClassifier(k=5).fit(X + shift, y).predict_proba(queries + shift)
        np.testing.assert_array_equal(base, moved)


# --------------------------------------------------------------------------
# Gaussian back-end
# --------------------------------------------------------------------------

class TestGaussianBackend:
    def test_hand_fit(self):
        X = np.array([[0.0], [2.0], [10.0], [14.0]])
        y = np.array([0, 0, 4, 4])
        model = GaussianBackend(var_floor=1e-12).fit(X, y)
        assert model.theta_[0, 0] == 1.0
        assert model.var_[0, 0] == 1.0  # population divisor
        assert model.theta_[4, 0] == 12.0
        assert model.var_[4, 0] == 4.0
        np.testing.assert_allclose(model.class_prior_, [0.5, 0, 0, 0, 0.5])

    def test_var_floor_engages_on_constant_feature(self):
        X = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 5.0], [1.0, 6.0]])
        y = np.array([0, 0, 4, 4])
        model = GaussianBackend(var_floor=1e-6).fit(X, y)
        assert model.var_[0, 0] == 1e-6
        assert model.var_[4, 0] == 1e-6

    def test_missing_class_single_sample(self):
        X = np.array([[0.0], [1.0], [2.0]])
        y = np.array([0, 0, 4])
        with pytest.raises(errors.MissingClass):
            GaussianBackend().fit(X, y)

    def test_law_of_large_numbers(self):
        rng = np.random.default_rng(10)
        n = 10_000
        means = {0: -1.0, 4: 3.0}
        X = np.concatenate([
            rng.normal(means[0], 2.0, (n, 1)),
            rng.normal(means[4], 2.0, (n, 1)),
        ])
        y = np.array([0] * n + [4] * n)
        model = GaussianBackend().fit(X, y)
        bound = 3.0 * 2.0 / math.sqrt(n)
        assert abs(model.theta_[0, 0] - means[0]) < bound
        assert abs(model.theta_[4, 0] - means[4]) < bound

    def test_closed_form_posterior(self):
        # 1-D, equal priors, means 0 and 2, unit variances, query 0.5:
        # density ratio exp(1.125 - 0.125) = e, posterior e / (e + 1)
        X = np.array([[-1.0], [1.0], [1.0], [3.0]])
        y = np.array([0, 0, 1, 1])
        model = GaussianBackend(var_floor=1e-12).fit(X, y)
        post = model.predict_proba([0.5])[0]
        expected = math.e / (math.e + 1.0)
        assert abs(post[0] - expected) < 1e-12
        assert abs(post[1] - (1.0 - expected)) < 1e-12
        assert post[2] == post[3] == post[4] == 0.0

    def test_symmetric_two_class_query(self):
        # means -1 and +1 with equal variances: the midpoint splits 0.5/0.5
        X = np.array([[-1.5, 0.0], [-0.5, 0.2], [0.5, 0.0], [1.5, 0.2]])
        y = np.array([1, 1, 3, 3])
        model = GaussianBackend(var_floor=1e-12).fit(X, y)
        post = model.predict_proba([0.0, 0.1])[0]
        np.testing.assert_allclose(post[[1, 3]], [0.5, 0.5], rtol=0, atol=1e-12)
        assert post[0] == post[2] == post[4] == 0.0

    def test_far_basin_saturates(self):
        rng = np.random.default_rng(11)
        X = np.vstack([
            rng.normal(0.0, 1.0, (50, 2)),
            rng.normal(30.0, 1.0, (50, 2)),
        ])
        y = np.array([0] * 50 + [2] * 50)
        model = GaussianBackend(var_floor=1e-9).fit(X, y)
        post = model.predict_proba([[0.0, 0.0]])[0]
        assert post[0] >= 1.0 - 1e-6

    def test_oracle_equivalence(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            n_per = int(rng.integers(3, 12))
            k_dim = int(rng.integers(1, 5))
            present = rng.choice(5, size=int(rng.integers(2, 6)), replace=False)
            X = np.vstack([
                rng.normal(float(c), 1.0, (n_per, k_dim)) for c in present
            ])
            y = np.repeat(present, n_per)
            model = GaussianBackend().fit(X, y)
            for q in rng.standard_normal((5, k_dim)):
                ours = model.predict_proba(q)[0]
                want = oracle_gnb_posteriors(
                    model.theta_, model.var_, model.class_prior_, q
                )
                np.testing.assert_allclose(ours, want, rtol=0, atol=1e-10)

    def test_no_underflow_far_from_all_means(self):
        # query 100 sigma away from every class: still a normalized posterior
        X = np.array([[0.0], [0.1], [5.0], [5.1]])
        y = np.array([0, 0, 4, 4])
        model = GaussianBackend(var_floor=1e-12).fit(X, y)
        post = model.predict_proba([[500.0]])[0]
        assert np.isfinite(post).all()
        assert abs(post.sum() - 1.0) < 1e-9

    def test_posteriors_sum_to_one(self):
        rng = np.random.default_rng(13)
        X = rng.standard_normal((60, 3))
        y = rng.integers(0, 5, 60)
        model = GaussianBackend().fit(X, y)
        post = model.predict_proba(rng.standard_normal((20, 3)))
        np.testing.assert_allclose(post.sum(axis=1), 1.0, rtol=0, atol=1e-12)

    def test_shift_invariance(self):
        rng = np.random.default_rng(14)
        X = rng.standard_normal((60, 3))
        y = rng.integers(0, 5, 60)
        queries = rng.standard_normal((10, 3))
        shift = np.array([3.0, -7.0, 0.5])
        base = GaussianBackend().fit(X, y).predict_proba(queries)
        moved = GaussianBackend().fit(X + shift, y).predict_proba(queries + shift)
        np.testing.assert_allclose(base, moved, rtol=0, atol=1e-9)

    def test_argmax_invariant_to_prior_scaling(self):
        rng = np.random.default_rng(15)
        X = rng.standard_normal((60, 2))
        y = rng.integers(0, 5, 60)
        model = GaussianBackend().fit(X, y)
        queries = rng.standard_normal((25, 2))
        base = model.predict(queries)
        model.class_prior_ = model.class_prior_ * 17.0  # normalization handles scale
        np.testing.assert_array_equal(model.predict(queries), base)

    def test_uniform_priors_option(self):
        X = np.array([[0.0], [0.1], [0.2], [5.0], [5.1]])
        y = np.array([0, 0, 0, 4, 4])
        model = GaussianBackend(priors="uniform").fit(X, y)
        np.testing.assert_allclose(model.class_prior_[[0, 4]], [0.5, 0.5])

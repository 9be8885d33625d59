import numpy as np
import pytest
from sklearn.exceptions import NotFittedError

from stutterkit import errors
from stutterkit.classifiers import GaussianBackend, KnnClassifier
from stutterkit.lda import LdaReducer, load_lda, save_lda

from conftest import gaussian_blobs


def fitted_reducer(seed=0, n_per_class=80, dim=12, sep=6.0, m=4, shrinkage=1e-4):
    rng = np.random.default_rng(seed)
    X, y = gaussian_blobs(rng, n_per_class, dim, sep)
    return LdaReducer(m, shrinkage).fit(X, y), X, y


class TestFit:
    def test_five_classes_give_four_components(self):
        model, X, _ = fitted_reducer()
        assert model.projection_.shape == (12, 4)
        assert model.transform(X).shape == (X.shape[0], 4)

    def test_component_cap(self):
        rng = np.random.default_rng(1)
        X, y = gaussian_blobs(rng, 30, 8, 5.0)
        with pytest.raises(errors.InvalidArgument):
            LdaReducer(n_components=5).fit(X, y)

    def test_analytic_direction_two_classes(self):
        # classes along the x-axis with isotropic noise: the top discriminant
        # converges to the x-axis as the sample grows
        rng = np.random.default_rng(2)
        X = np.vstack([
            rng.normal([0.0, 0.0], 1.0, (2000, 2)),
            rng.normal([10.0, 0.0], 1.0, (2000, 2)),
        ])
        y = np.array([0] * 2000 + [4] * 2000)
        model = LdaReducer(1, 0.0).fit(X, y)
        direction = model.projection_[:, 0]
        assert abs(direction[0]) >= 0.99

    def test_missing_class(self):
        X = np.vstack([np.zeros((5, 3)), np.ones((1, 3))])
        y = np.array([0] * 5 + [4])
        with pytest.raises(errors.MissingClass):
            LdaReducer(1).fit(X, y)

    def test_degenerate_scatter(self):
        # all points identical within each class and shrinkage 0: S_w' = 0
        X = np.vstack([np.zeros((4, 3)), np.ones((4, 3))])
        y = np.array([0] * 4 + [4] * 4)
        with pytest.raises(errors.DegenerateScatter):
            LdaReducer(1, shrinkage=0.0).fit(X, y)

    def test_rank_deficient_request(self):
        # two classes support a single discriminant direction
        rng = np.random.default_rng(3)
        X = np.vstack([rng.normal(0, 1, (40, 6)), rng.normal(4, 1, (40, 6))])
        y = np.array([0] * 40 + [4] * 40)
        with pytest.raises(errors.DegenerateScatter):
            LdaReducer(3).fit(X, y)

    def test_columns_unit_norm_and_ordered(self):
        model, X, y = fitted_reducer(shrinkage=0.0)
        norms = np.linalg.norm(model.projection_, axis=0)
        np.testing.assert_allclose(norms, 1.0, rtol=0, atol=1e-12)
        evals = model.eigenvalues_
        assert all(evals[i] >= evals[i + 1] for i in range(len(evals) - 1))

    def test_between_class_variance_ordered_on_isotropic_data(self):
        model, X, y = fitted_reducer(seed=5, n_per_class=300, shrinkage=0.0)
        Z = model.transform(X)
        class_means = np.vstack([Z[y == c].mean(axis=0) for c in np.unique(y)])
        between = class_means.var(axis=0)
        assert all(between[i] >= between[i + 1] for i in range(len(between) - 1))


class TestTransform:
    def test_global_mean_maps_to_zero(self):
        model, X, _ = fitted_reducer()
        np.testing.assert_array_equal(model.transform(model.global_mean_), np.zeros((1, 4)))

    def test_disjoint_rows_get_same_width(self):
        model, _, _ = fitted_reducer()
        rng = np.random.default_rng(4)
        other = rng.standard_normal((7, 12))
        assert model.transform(other).shape == (7, 4)

    def test_dimension_mismatch(self):
        model, _, _ = fitted_reducer()
        with pytest.raises(errors.DimensionMismatch):
            model.transform(np.zeros((3, 5)))

    def test_unfitted(self):
        with pytest.raises(NotFittedError):
            LdaReducer().transform(np.zeros((2, 4)))


class TestSignFlip:
    def test_classifier_accuracy_invariant_to_column_sign(self):
        model, X, y = fitted_reducer(seed=6, n_per_class=60, sep=3.0)
        test_X, test_y = gaussian_blobs(np.random.default_rng(8), 20, 12, 3.0)
        Z_train = model.transform(X)
        Z_test = model.transform(test_X)

        def accuracies(z_train, z_test):
            out = []
            for factory in (lambda: KnnClassifier(k=5), GaussianBackend):
                clf = factory().fit(z_train, y)
                out.append((clf.predict(z_test) == test_y).mean())
            return out

        base = accuracies(Z_train, Z_test)
        for col in range(4):
            flip = np.ones(4)
            flip[col] = -1.0
            flipped = accuracies(Z_train * flip, Z_test * flip)
            assert flipped == base


class TestSerialization:
    def test_round_trip(self, tmp_path):
        model, X, _ = fitted_reducer()
        save_lda(model, tmp_path, "stream")
        back = load_lda(tmp_path, "stream")
        # storage is float32: expect agreement at that precision
        np.testing.assert_allclose(
            back.transform(X), model.transform(X), rtol=1e-5, atol=1e-4
        )
        assert back.n_components == model.n_components
        np.testing.assert_array_equal(back.classes_, model.classes_)

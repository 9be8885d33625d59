"""Acceptance suite: one test per gating criterion, at its stated tolerance.

Each test prints one ``ACCEPTANCE PASS`` line on success (run with ``-s`` or
read test names from ``pytest -v``); a failed assert is the fail line. The
heavier tests share three synthetic datasets built once per session:

  * ``noise_dataset``  - 50 podcasts x 40 clips, zero class separation
  * ``strong_dataset`` - 50 podcasts x 40 clips, separation 10, with ecapa
  * ``sweep_dataset``  - 10 podcasts x 6 clips, layers 1..13, signal only in 7+
"""

import shutil
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from stutterkit import errors
from stutterkit.classifiers import GaussianBackend, KnnClassifier
from stutterkit.dataio import generate_synthetic, read_embedding, write_embedding
from stutterkit.evalharness import layer_sweep, make_folds, run_experiment
from stutterkit.features import build_feature_matrix
from stutterkit.fusion import Pipeline, PipelineSpec, score_fuse
from stutterkit.lda import LdaReducer
from stutterkit.neuralnet import (
    BatchNorm1d,
    BranchNet,
    ReLU,
    SoftmaxCrossEntropy,
    gradient_check,
)

from conftest import UNIFORM
from test_classifiers import oracle_gnb_posteriors, oracle_knn

SEED = 2024


def _session_dir(request, name):
    path = Path(tempfile.mkdtemp(prefix=f"stutterkit_{name}_"))
    request.addfinalizer(lambda: shutil.rmtree(path, ignore_errors=True))
    return path


@pytest.fixture(scope="session")
def noise_dataset(request):
    out = _session_dir(request, "noise")
    return generate_synthetic(
        out, num_podcasts=50, clips_per_podcast=40, class_sep=0.0, seed=SEED,
        layers=(11,), include_ecapa=False, class_weights=UNIFORM,
    )


@pytest.fixture(scope="session")
def strong_dataset(request):
    out = _session_dir(request, "strong")
    return generate_synthetic(
        out, num_podcasts=50, clips_per_podcast=40, class_sep=10.0, seed=SEED + 1,
        layers=(11,), include_ecapa=True,
    )


@pytest.fixture(scope="session")
def sweep_dataset(request):
    out = _session_dir(request, "sweep")
    return generate_synthetic(
        out, num_podcasts=10, clips_per_podcast=6, class_sep=10.0, seed=SEED + 2,
        layers=tuple(range(1, 14)), include_ecapa=False,
        signal_layers=tuple(range(7, 14)), class_weights=UNIFORM,
    )


def _spec(classifier, streams=(("w2v2", 11),), **kwargs):
    return PipelineSpec(streams=streams, classifier=classifier, lda_components=4, **kwargs)


@pytest.fixture(scope="session")
def strong_runs(strong_dataset):
    """Timed single-source and score-fused runs over the separable dataset."""
    runs = {}
    timings = {}
    for name, spec in (
        ("knn", _spec("knn")),
        ("gnb", _spec("gnb")),
        ("nn", _spec("nn")),
        ("gnb_ecapa", _spec("gnb", streams=(("ecapa", 0),))),
        ("gnb_score_1", _spec("gnb", streams=(("w2v2", 11), ("ecapa", 0)),
                              fusion="score", alpha=1.0)),
        ("gnb_score_0", _spec("gnb", streams=(("w2v2", 11), ("ecapa", 0)),
                              fusion="score", alpha=0.0)),
    ):
        start = time.monotonic()
        runs[name] = run_experiment(strong_dataset, spec, seed=SEED, jobs=1)
        timings[name] = time.monotonic() - start
    return runs, timings


# --------------------------------------------------------------------------
# Criterion: classifier oracle equivalence
# --------------------------------------------------------------------------

def test_classifier_oracle_equivalence():
    rng = np.random.default_rng(SEED)
    start = time.monotonic()
    for _ in range(200):
        n = int(rng.integers(10, 51))
        k_dim = int(rng.integers(1, 9))
        X = rng.integers(-3, 4, size=(n, k_dim)).astype(np.float64)
        y = rng.integers(0, 5, n)
        k = int(rng.integers(1, min(n, 7) + 1))
        p = float(rng.choice([1.0, 2.0, 3.0]))
        queries = rng.integers(-3, 4, size=(3, k_dim)).astype(np.float64)

        knn = KnnClassifier(k=k, p=p).fit(X, y)
        probas = knn.predict_proba(queries)
        labels = knn.predict(queries)
        for i, q in enumerate(queries):
            want_label, want_proba = oracle_knn(X, y, q, k, p)
            np.testing.assert_array_equal(probas[i], want_proba)
            assert labels[i] == want_label

        counts = np.bincount(y, minlength=5)
        if (counts[counts > 0] >= 2).all():
            gnb = GaussianBackend().fit(X, y)
            gnb_probas = gnb.predict_proba(queries / 2.0)
            for i, q in enumerate(queries / 2.0):
                want = oracle_gnb_posteriors(gnb.theta_, gnb.var_, gnb.class_prior_, q)
                np.testing.assert_allclose(gnb_probas[i], want, rtol=0, atol=1e-10)
    elapsed = time.monotonic() - start
    assert elapsed < 10.0, f"oracle sweep took {elapsed:.1f}s"
    print(f"\nACCEPTANCE PASS: classifier oracle equivalence ({elapsed:.1f}s)")


# --------------------------------------------------------------------------
# Criterion: gradient correctness
# --------------------------------------------------------------------------

def _informative_net_and_batch(rng, kink_margin=1e-3, grad_floor=1e-3,
                               std_floor=0.15, net_tries=40, batch_tries=80):
    """Draw a (net, batch) pair on which central differences can verify
    every parameter to 1e-6 relative.

    Three screens keep the finite-difference oracle valid without touching
    the check itself: ReLU pre-activations stay clear of zero (local
    smoothness under the perturbation); every analytic gradient entry sits
    above the FD roundoff floor (batch normalization absorbs constant
    shifts exactly, so a bias feeding an everywhere-alive ReLU unit has a
    structurally zero gradient FD cannot resolve); and batch-norm batch
    stds stay healthy (a near-zero std means curvature that central
    differences only capture to O(epsilon^2)). Nets with a mostly-dead unit
    never satisfy the std screen for any batch, so the net is redrawn from
    the same stream when the batch budget runs out.
    """
    loss = SoftmaxCrossEntropy()
    for _ in range(net_tries):
        net = BranchNet(6, (8, 6), 4, rng, dropout=0.0)
        for _ in range(batch_tries):
            x = rng.standard_normal((8, net.n_in))
            y = rng.integers(0, net.n_out, 8)
            smallest = np.inf
            min_std = np.inf
            h = x
            for layer in net.layers:
                if isinstance(layer, ReLU):
                    smallest = min(smallest, float(np.abs(h).min()))
                if isinstance(layer, BatchNorm1d):
                    min_std = min(min_std, float(np.sqrt(h.var(axis=0)).min()))
                h = layer.forward(h, train=True)
            if smallest <= kink_margin or min_std < std_floor:
                continue
            loss.forward(net.forward(x, train=True), y)
            net.backward(loss.backward())
            flat = np.concatenate([g.reshape(-1) for g in net.grads().values()])
            if np.abs(flat).min() >= grad_floor:
                return net, x, y
    raise AssertionError("could not find an informative net/batch pair")


def test_gradient_correctness():
    start = time.monotonic()
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        net, x, y = _informative_net_and_batch(rng)
        err = gradient_check(net, SoftmaxCrossEntropy(), x, y, epsilon=3e-6)
        worst = max(worst, err)
        assert err <= 1e-6, f"seed {seed}: relative error {err:.2e}"
    elapsed = time.monotonic() - start
    assert elapsed < 30.0, f"gradient checks took {elapsed:.1f}s"
    print(f"\nACCEPTANCE PASS: gradient correctness (worst {worst:.2e}, {elapsed:.1f}s)")


# --------------------------------------------------------------------------
# Criterion: closed-form Gaussian posterior
# --------------------------------------------------------------------------

def test_closed_form_gnb_posterior():
    X = np.array([[-1.0], [1.0], [1.0], [3.0]])
    y = np.array([0, 0, 1, 1])
    model = GaussianBackend(var_floor=1e-12).fit(X, y)
    posterior = model.predict_proba([0.5])[0]
    expected = np.e / (np.e + 1.0)
    assert abs(posterior[0] - expected) < 1e-12
    print(f"\nACCEPTANCE PASS: closed-form GNB posterior ({posterior[0]:.12f})")


# --------------------------------------------------------------------------
# Criterion: pipeline sanity at separability extremes
# --------------------------------------------------------------------------

def test_pipeline_chance_level_without_signal(noise_dataset):
    labels = np.array([int(r.label) for r in noise_dataset.select("w2v2", 11)])
    majority_rate = 100.0 * np.bincount(labels, minlength=5).max() / labels.size
    result = run_experiment(noise_dataset, _spec("gnb"), seed=SEED, jobs=1)
    ta = result.metrics.mean()["TA"]
    assert abs(ta - majority_rate) <= 3.0, f"TA {ta:.2f} vs majority {majority_rate:.2f}"
    print(f"\nACCEPTANCE PASS: chance level at zero separation "
          f"(TA {ta:.2f}, majority {majority_rate:.2f})")


def test_pipeline_separable_all_families(strong_runs):
    runs, timings = strong_runs
    for family in ("knn", "gnb", "nn"):
        ta = runs[family].metrics.mean()["TA"]
        assert ta >= 99.0, f"{family}: TA {ta:.2f} < 99"
        assert timings[family] < 300.0, f"{family}: {timings[family]:.0f}s >= 5 min"
    summary = ", ".join(
        f"{f}={runs[f].metrics.mean()['TA']:.2f}% in {timings[f]:.0f}s"
        for f in ("knn", "gnb", "nn")
    )
    print(f"\nACCEPTANCE PASS: separable pipelines ({summary})")


# --------------------------------------------------------------------------
# Criterion: fusion endpoints
# --------------------------------------------------------------------------

def test_fusion_endpoints(strong_runs):
    runs, _ = strong_runs
    for fused_name, single_name in (("gnb_score_1", "gnb"), ("gnb_score_0", "gnb_ecapa")):
        fused = runs[fused_name].metrics
        single = runs[single_name].metrics
        for a, b in zip(fused.reports, single.reports):
            assert a.metrics.ta == b.metrics.ta
            np.testing.assert_array_equal(a.metrics.per_class, b.metrics.per_class)
            np.testing.assert_array_equal(a.confusion, b.confusion)

    p_w2v2 = np.array([0.8, 0.05, 0.05, 0.05, 0.05])
    p_ecapa = np.array([0.2, 0.2, 0.2, 0.2, 0.2])
    np.testing.assert_allclose(
        score_fuse(p_w2v2, p_ecapa, 0.9),
        [0.74, 0.065, 0.065, 0.065, 0.065],
        rtol=0, atol=1e-12,
    )
    print("\nACCEPTANCE PASS: fusion endpoints reproduce single-source runs exactly")


# --------------------------------------------------------------------------
# Criterion: LDA contract
# --------------------------------------------------------------------------

def test_lda_contract(tri_layer_dataset, tiny_dataset):
    # (a) component cap: five classes admit at most four discriminants
    rng = np.random.default_rng(3)
    X = np.vstack([rng.normal(c, 1.0, (20, 6)) for c in range(5)])
    y = np.repeat(np.arange(5), 20)
    assert LdaReducer(4).fit(X, y).projection_.shape == (6, 4)
    with pytest.raises(errors.InvalidArgument):
        LdaReducer(5).fit(X, y)

    # (b) L1+L7+L11 concat feeds exactly 12 features to the classifier
    spec = PipelineSpec(
        streams=(("w2v2", 1), ("w2v2", 7), ("w2v2", 11)),
        classifier="gnb", fusion="concat", lda_components=4,
    )
    from stutterkit.evalharness import load_bundle
    bundle = load_bundle(tri_layer_dataset, spec)
    fitted = Pipeline(spec).fit(bundle, seed=0)
    assert fitted.models["concat"].n_features_in_ == 12

    # (c) per-column sign flips leave classifier fold accuracies unchanged
    w2v2 = build_feature_matrix(tiny_dataset, "w2v2", 11)
    plan = make_folds(set(w2v2.podcast_ids), seed=SEED)
    fold = plan.folds[0]
    train_idx = np.flatnonzero(np.isin(w2v2.podcast_ids, sorted(fold.train)))
    eval_idx = np.flatnonzero(np.isin(w2v2.podcast_ids, sorted(fold.eval)))
    reducer = LdaReducer(4).fit(w2v2.values[train_idx], w2v2.labels[train_idx])
    z_train = reducer.transform(w2v2.values[train_idx])
    z_eval = reducer.transform(w2v2.values[eval_idx])

    def fold_accuracies(train_z, eval_z):
        accs = []
        for factory in (lambda: KnnClassifier(k=5), GaussianBackend):
            model = factory().fit(train_z, w2v2.labels[train_idx])
            accs.append(float((model.predict(eval_z) == w2v2.labels[eval_idx]).mean()))
        return accs

    base = fold_accuracies(z_train, z_eval)
    for col in range(4):
        flip = np.ones(4)
        flip[col] = -1.0
        assert fold_accuracies(z_train * flip, z_eval * flip) == base
    print("\nACCEPTANCE PASS: LDA contract (cap 4, 12-feature concat, sign-flip invariance)")


# --------------------------------------------------------------------------
# Criterion: harness hygiene
# --------------------------------------------------------------------------

def test_harness_hygiene(tiny_dataset, tmp_path):
    spec = _spec("gnb")
    result = run_experiment(tiny_dataset, spec, seed=SEED, out_dir=tmp_path / "a")
    podcasts = set(tiny_dataset.podcasts())
    eval_union = set()
    for fold in result.plan:
        assert not fold.train & fold.valid
        assert not fold.train & fold.eval
        assert not fold.valid & fold.eval
        eval_union |= fold.eval
    assert eval_union == podcasts

    run_experiment(tiny_dataset, spec, seed=SEED, out_dir=tmp_path / "b")
    bytes_a = (tmp_path / "a" / "metrics.csv").read_bytes()
    bytes_b = (tmp_path / "b" / "metrics.csv").read_bytes()
    assert bytes_a == bytes_b
    print("\nACCEPTANCE PASS: harness hygiene (disjoint roles, byte-identical reruns)")


# --------------------------------------------------------------------------
# Criterion: layer-sweep fidelity
# --------------------------------------------------------------------------

def test_layer_sweep_fidelity(sweep_dataset, tmp_path):
    series = layer_sweep(sweep_dataset, "gnb", seed=SEED, lda_components=4,
                         out_dir=tmp_path / "sweep")
    assert len(series) == 13
    ta = {layer: row["TA"] for layer, row in series}
    low = max(ta[layer] for layer in range(1, 7))
    high = min(ta[layer] for layer in range(7, 14))
    assert high - low >= 30.0, f"gap {high - low:.1f} < 30 (low {low:.1f}, high {high:.1f})"
    assert (tmp_path / "sweep" / "layersweep.csv").exists()
    print(f"\nACCEPTANCE PASS: layer sweep fidelity (noise<= {low:.1f}%, signal >= {high:.1f}%)")


# --------------------------------------------------------------------------
# Criterion: format durability
# --------------------------------------------------------------------------

def test_format_durability(tmp_path):
    rng = np.random.default_rng(SEED)
    path = tmp_path / "t.emb1"
    for _ in range(1000):
        t = int(rng.integers(1, 9))
        d = int(rng.integers(1, 17))
        scale = 10.0 ** float(rng.integers(-3, 4))
        tensor = (rng.standard_normal((t, d)) * scale).astype(np.float32)
        write_embedding(tensor, path)
        assert np.array_equal(read_embedding(path), tensor)
    print("\nACCEPTANCE PASS: format durability (1000 bit-exact round trips)")

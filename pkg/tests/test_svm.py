import numpy as np
import pytest

from elastic_gestures import kernels as K
from elastic_gestures import svm
from elastic_gestures.errors import (DegenerateTrainingError, InvalidArgumentError,
                                     ProvenanceMismatchError)
from oracles import svm_dual_projected_gradient


def rbf_gram(X, gamma=0.5):
    d = ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1)
    return np.exp(-gamma * d)


def toy_problem(rng, n=20, shift=1.0):
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    X = rng.normal(size=(n, 2)) + shift * y[:, None]
    return rbf_gram(X), y


def full_alpha(dual, n):
    a = np.zeros(n)
    a[dual.support_indices] = dual.alphas
    return a


def assert_feasible(dual, y, C):
    a = full_alpha(dual, len(y))
    assert np.all(a >= 0) and np.all(a <= C)
    assert abs(a @ y) <= 1e-8 * C * len(y)


def as_gram(values, kid="euclid_rbf", params=None):
    return K.GramMatrix(values, kid, params or K.KernelParams())


def test_two_points():
    Kv = np.array([[1.0, 0.1], [0.1, 1.0]])
    y = np.array([1.0, -1.0])
    d = svm.train_binary(Kv, y, C=10.0)
    assert sorted(d.support_indices.tolist()) == [0, 1]
    f = d.decision(Kv)
    assert np.all(f * y > 0)
    # closed form: a = 2 / (K11 + K22 - 2 K12) and a symmetric boundary
    assert d.alphas == pytest.approx([2 / 1.8, 2 / 1.8], rel=1e-9)
    assert f[0] == pytest.approx(-f[1], abs=1e-12)


def test_conflicting_duplicates_terminate():
    Kv = np.array([[1.0, 1.0, 0.2], [1.0, 1.0, 0.2], [0.2, 0.2, 1.0]])
    y = np.array([1.0, -1.0, 1.0])
    d = svm.train_binary(Kv, y, C=0.1)
    assert d.converged
    assert_feasible(d, y, 0.1)
    assert np.isfinite(svm.dual_objective(Kv, y, d))


def test_matches_projected_gradient_oracle(rng):
    for _ in range(5):
        Kv, y = toy_problem(rng, 20, shift=0.6)
        C = float(rng.choice([0.5, 1.0, 5.0]))
        d = svm.train_binary(Kv, y, C=C, tol=1e-6)
        _, ref = svm_dual_projected_gradient(Kv, y, C)
        got = svm.dual_objective(Kv, y, d)
        assert abs(got - ref) <= 1e-4 * abs(ref)
        assert_feasible(d, y, C)


def test_capped_run_on_non_psd_gram_stays_feasible(rng):
    A = rng.normal(size=(15, 15))
    Kv = (A + A.T) / 2
    y = np.where(np.arange(15) < 7, 1.0, -1.0)
    d = svm.train_binary(Kv, y, C=2.0, max_kernel_lookups=60)
    assert d.iterations <= 2
    assert_feasible(d, y, 2.0)


def test_binary_errors():
    Kv = np.eye(3)
    with pytest.raises(DegenerateTrainingError):
        svm.train_binary(Kv, [1, 1, 1])
    with pytest.raises(InvalidArgumentError):
        svm.train_binary(Kv, [1, -1, 2])
    with pytest.raises(InvalidArgumentError):
        svm.train_binary(Kv, [1, -1])
    with pytest.raises(InvalidArgumentError):
        svm.train_binary(Kv, [1, -1, 1], C=0)


def test_separable_training_set_recovered(rng):
    X = np.concatenate([rng.normal(size=(10, 2)) + 4, rng.normal(size=(10, 2)) - 4])
    labels = ["a"] * 10 + ["b"] * 10
    model = svm.train(as_gram(rbf_gram(X, 0.1)), labels, C=10.0)
    cross = K.CrossGram(rbf_gram(X, 0.1), "euclid_rbf", K.KernelParams())
    assert svm.accuracy(svm.predict(model, cross).labels, labels) == 1.0


def test_wide_margin_1d_excludes_interior_points():
    x = np.concatenate([np.linspace(-10, -5, 8), np.linspace(5, 10, 8)])
    # a wide RBF is close to linear on this range
    Kv = np.exp(-0.01 * (x[:, None] - x[None, :]) ** 2)
    y = np.where(x > 0, 1.0, -1.0)
    d = svm.train_binary(Kv, y, C=100.0)
    assert np.all(d.decision(Kv) * y > 0)
    assert set(d.support_indices.tolist()) <= {6, 7, 8, 9}


def test_empty_test_set(rng):
    Kv, y = toy_problem(rng, 10)
    model = svm.train(as_gram(Kv), y.tolist(), C=1.0)
    pred = svm.predict(model, K.CrossGram(np.zeros((0, 10)), "euclid_rbf", K.KernelParams()))
    assert pred.labels == [] and pred.votes.shape == (0, 2)


def test_three_class_votes(rng):
    X = np.concatenate([rng.normal(size=(6, 2)) + c * 3 for c in range(3)])
    labels = [f"c{c}" for c in range(3) for _ in range(6)]
    Kv = rbf_gram(X, 0.3)
    model = svm.train(as_gram(Kv), labels, C=1.0)
    assert len(model.pairwise) == 3
    pred = svm.predict(model, K.CrossGram(Kv[:5], "euclid_rbf", K.KernelParams()))
    assert np.all(pred.votes.sum(axis=1) == 3)
    assert pred.decision_values.shape == (5, 3)


def test_vote_tie_broken_by_strength():
    dual = lambda bias: svm.BinaryDual(np.array([0]), np.array([0.0]), np.array([1.0]), bias, 1.0)
    # a beats b weakly, b beats c strongly, c beats a weakly: one vote each
    model = svm.SvmModel(["a", "b", "c"],
                         [(("a", "b"), dual(0.1)), (("a", "c"), dual(-0.2)),
                          (("b", "c"), dual(3.0))],
                         "euclid_rbf", K.KernelParams(), None, 1.0, 1)
    pred = svm.predict(model, K.CrossGram(np.zeros((1, 1)), "euclid_rbf", K.KernelParams()))
    assert pred.votes.tolist() == [[1, 1, 1]]
    assert pred.labels == ["b"]


def test_provenance_mismatch_refused(rng):
    Kv, y = toy_problem(rng, 10)
    model = svm.train(as_gram(Kv, "rdtw_normalized", K.KernelParams(nu=0.5)), y.tolist())
    model.norm_bounds = (-3.0, 0.0)
    good = K.CrossGram(Kv[:2], "rdtw_normalized", K.KernelParams(nu=0.5), (-3.0, 0.0))
    svm.predict(model, good)
    for bad in (K.CrossGram(Kv[:2], "rdtw", K.KernelParams(nu=0.5)),
                K.CrossGram(Kv[:2], "rdtw_normalized", K.KernelParams(nu=0.6), (-3.0, 0.0)),
                K.CrossGram(Kv[:2], "rdtw_normalized", K.KernelParams(nu=0.5), (-2.0, 0.0)),
                K.CrossGram(Kv[:2, :5], "rdtw_normalized", K.KernelParams(nu=0.5), (-3.0, 0.0))):
        with pytest.raises(ProvenanceMismatchError):
            svm.predict(model, bad)


def test_decision_invariant_to_training_permutation(rng):
    Kv, y = toy_problem(rng, 16, shift=0.8)
    d = svm.train_binary(Kv, y, C=1.0, tol=1e-8)
    perm = rng.permutation(16)
    dp = svm.train_binary(Kv[np.ix_(perm, perm)], y[perm], C=1.0, tol=1e-8)
    f = d.decision(Kv)
    fp = dp.decision(Kv[:, perm])
    assert np.allclose(f, fp, atol=1e-5)


def test_larger_C_rarely_adds_margin_violations(rng):
    ok, trials = 0, 40
    for _ in range(trials):
        Kv, y = toy_problem(rng, 20, shift=0.5)
        counts = []
        for C in (0.1, 10.0):
            d = svm.train_binary(Kv, y, C=C, tol=1e-6)
            counts.append(int(np.sum(y * d.decision(Kv) < 1 - 1e-6)))
        ok += int(counts[1] <= counts[0])
    assert ok >= 0.95 * trials


def test_model_round_trip(rng, tmp_path):
    X = np.concatenate([rng.normal(size=(6, 2)) + c * 3 for c in range(3)])
    labels = [f"c{c}" for c in range(3) for _ in range(6)]
    Kv = rbf_gram(X, 0.3)
    params = K.KernelParams(nu=0.3, corridor_radius=2)
    model = svm.train(as_gram(Kv, "dtw_rbf", params), labels, C=2.0)
    model.meta = {"L": 15}
    svm.save_model(model, tmp_path / "m.json")
    back = svm.load_model(tmp_path / "m.json")
    cross = K.CrossGram(Kv, "dtw_rbf", params)
    a, b = svm.predict(model, cross), svm.predict(back, cross)
    assert a.labels == b.labels
    assert np.array_equal(a.decision_values, b.decision_values)
    assert back.meta == {"L": 15} and back.params == params


def test_accuracy_helper():
    assert svm.accuracy(["a", "b"], ["a", "a"]) == 0.5
    assert np.isnan(svm.accuracy([], []))

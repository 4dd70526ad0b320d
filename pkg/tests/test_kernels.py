import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elastic_gestures import kernels as K
from elastic_gestures.errors import (DegenerateNormalizationError, FixedLengthRequiredError,
                                     InvalidArgumentError, KernelDomainError)
from oracles import dtw_by_enumeration, rdtw_literal


def rand_seqs(rng, n, T, k=3, scale=0.5):
    return [rng.normal(scale=scale, size=(T, k)) for _ in range(n)]


# --------------------------------------------------------------- euclidean_sq

def test_euclidean_sq_trivial_cases():
    a = np.array([1.5, -2.0, 3.0])
    assert K.euclidean_sq(a, a) == 0.0
    assert K.euclidean_sq([0, 0, 0], [1, 2, 2]) == 9.0


def test_euclidean_sq_matches_naive_loop(rng):
    for _ in range(20):
        a, b = rng.normal(size=7), rng.normal(size=7)
        naive = 0.0
        for i in reversed(range(7)):
            naive += (a[i] - b[i]) ** 2
        assert K.euclidean_sq(a, b) == pytest.approx(naive, abs=1e-12)


def test_euclidean_sq_dimension_mismatch():
    with pytest.raises(InvalidArgumentError):
        K.euclidean_sq([0, 0], [0, 0, 0])


# ------------------------------------------------------------------------ dtw

def test_dtw_self_and_base_case(rng):
    x = rng.normal(size=(5, 3))
    assert K.dtw_distance(x, x) == 0.0
    a, b = rng.normal(size=(1, 3)), rng.normal(size=(1, 3))
    assert K.dtw_distance(a, b) == pytest.approx(K.euclidean_sq(a[0], b[0]), abs=1e-15)


def test_dtw_matches_enumeration(rng):
    for _ in range(60):
        n, m = rng.integers(1, 7, size=2)
        x, y = rng.normal(size=(n, 2)), rng.normal(size=(m, 2))
        assert abs(K.dtw_distance(x, y) - dtw_by_enumeration(x, y)) <= 1e-9


def test_dtw_symmetric(rng):
    x, y = rng.normal(size=(6, 3)), rng.normal(size=(9, 3))
    assert K.dtw_distance(x, y) == pytest.approx(K.dtw_distance(y, x), abs=1e-12)


def test_dtw_corridor_monotone(rng):
    x, y = rng.normal(size=(10, 2)), rng.normal(size=(12, 2))
    free = K.dtw_distance(x, y)
    assert K.dtw_distance(x, y, corridor_radius=100) == free
    values = [K.dtw_distance(x, y, corridor_radius=r) for r in range(0, 13)]
    assert values[0] == math.inf and values[1] == math.inf  # gap of 2 frames
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert values[-1] == free


def test_dtw_empty_raises():
    with pytest.raises(InvalidArgumentError):
        K.dtw_distance(np.zeros((0, 3)), np.zeros((2, 3)))


def test_dtw_rbf_values(rng):
    x, y = rng.normal(size=(5, 3)), rng.normal(size=(7, 3))
    assert K.dtw_rbf(x, x, K.KernelParams(nu=3.0)) == 1.0
    d = K.dtw_distance(x, y)
    assert K.dtw_rbf(x, y, K.KernelParams(nu=0.5)) == pytest.approx(math.exp(-0.5 * d), rel=1e-14)
    vals = [K.dtw_rbf(x, y, K.KernelParams(nu=nu)) for nu in (0.01, 0.1, 1.0, 10.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


# ---------------------------------------------------------------------- euclid

def test_euclid_rbf_basics(rng):
    x, y = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    assert K.euclid_rbf_kernel(x, x, K.KernelParams(nu=2.0)) == 1.0
    vals = [K.euclid_rbf_kernel(x, y, K.KernelParams(nu=nu)) for nu in (0.01, 0.1, 1.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    with pytest.raises(FixedLengthRequiredError):
        K.euclid_rbf_kernel(x, y[:4], K.KernelParams())


def test_euclid_equals_dtw_on_diagonal_path():
    # far-apart levels make every off-diagonal move strictly worse
    x = np.array([[0.0], [10.0], [20.0]])
    y = np.array([[0.1], [10.1], [20.1]])
    p = K.KernelParams(nu=0.7)
    assert K.dtw_distance(x, y) == pytest.approx(3 * 0.01, abs=1e-12)
    assert K.euclid_rbf_kernel(x, y, p) == pytest.approx(K.dtw_rbf(x, y, p), rel=1e-14)


# ----------------------------------------------------------------------- rdtw

def test_rdtw_one_by_one_hand_expansion():
    # xy: (1/3) e^0 (0 + 1 + 0); xx: (1/3) (0 + 1 * 1 + 0)
    x = np.array([[0.3, -0.2, 1.0]])
    assert K.rdtw_kernel(x, x, K.KernelParams(nu=1.0)) == pytest.approx(2.0 / 3.0, rel=1e-15)
    y = x + np.array([[1.0, 0.0, 0.0]])
    expected = math.exp(-2.0) / 3 + math.exp(-2.0) / 3
    assert K.rdtw_kernel(x, y, K.KernelParams(nu=2.0)) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("radius", [None, 0, 1, 3])
def test_rdtw_matches_literal_recursion(rng, radius):
    for _ in range(10):
        T = int(rng.integers(1, 8))
        x, y = rng.normal(size=(T, 3)), rng.normal(size=(T, 3))
        nu = float(rng.uniform(0.05, 2.0))
        p = K.KernelParams(nu=nu, corridor_radius=radius)
        assert K.rdtw_kernel(x, y, p) == pytest.approx(rdtw_literal(x, y, nu, radius), rel=1e-12)


def test_rdtw_terms_sum_to_kernel(rng):
    x, y = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    p = K.KernelParams(nu=0.4)
    lxy, lxx = K.rdtw_terms(x, y, p)
    assert math.exp(lxy) + math.exp(lxx) == pytest.approx(K.rdtw_kernel(x, y, p), rel=1e-12)


def test_rdtw_symmetric_and_positive(rng):
    for _ in range(10):
        x, y = rng.normal(size=(8, 3)), rng.normal(size=(8, 3))
        p = K.KernelParams(nu=0.5)
        a, b = K.rdtw_kernel(x, y, p), K.rdtw_kernel(y, x, p)
        assert a > 0
        assert abs(a - b) <= 1e-10 * abs(a)


def test_rdtw_underflow_stays_finite_in_log(rng):
    x, y = rng.normal(size=(30, 3)), rng.normal(size=(30, 3))
    p = K.KernelParams(nu=500.0)
    lk = K.rdtw_log_kernel(x, y, p)
    assert np.isfinite(lk) and lk < math.log(1e-300)
    p_small = K.KernelParams(nu=0.2)
    direct = math.log(K.rdtw_kernel(x, y, p_small))
    assert K.rdtw_log_kernel(x, y, p_small) == pytest.approx(direct, rel=1e-13)


def test_rdtw_log_domain_matches_direct(rng):
    # same pair evaluated where the direct recursion is valid: both routes agree
    for _ in range(5):
        x, y = rng.normal(size=(12, 3)), rng.normal(size=(12, 3))
        p = K.KernelParams(nu=0.3)
        lxy, lxx = K.rdtw_terms(x, y, p)
        assert np.logaddexp(lxy, lxx) == pytest.approx(K.rdtw_log_kernel(x, y, p), rel=1e-12)


def test_rdtw_requires_equal_lengths(rng):
    with pytest.raises(FixedLengthRequiredError):
        K.rdtw_kernel(rng.normal(size=(4, 3)), rng.normal(size=(5, 3)), K.KernelParams())


def test_kernel_params_validation():
    with pytest.raises(InvalidArgumentError):
        K.KernelParams(nu=0.0)
    with pytest.raises(InvalidArgumentError):
        K.KernelParams(alpha=-1.0)
    with pytest.raises(InvalidArgumentError):
        K.KernelParams(corridor_radius=-2)


# -------------------------------------------------------------- normalization

def test_normalization_extremes_and_order(rng):
    g = K.gram(rand_seqs(rng, 8, 6), "rdtw", K.KernelParams(nu=0.5, alpha=2.0))
    n = K.normalize_kernel(g)
    assert n.kernel_id == "rdtw_normalized"
    assert n.values.min() == 1.0
    assert n.values.max() == pytest.approx(math.exp(2.0), rel=1e-15)
    a, b = g.log_values.ravel(), n.values.ravel()
    assert np.array_equal(np.argsort(a, kind="stable"), np.argsort(b, kind="stable"))
    assert n.norm_bounds == (float(g.log_values.min()), float(g.log_values.max()))


def test_normalization_errors():
    p = K.KernelParams()
    with pytest.raises(DegenerateNormalizationError):
        K.normalize_kernel(K.GramMatrix(np.full((2, 2), 0.5), "rdtw", p))
    with pytest.raises(KernelDomainError):
        K.normalize_kernel(K.GramMatrix(np.array([[1.0, 0.0], [0.0, 1.0]]), "rdtw", p))
    with pytest.raises(InvalidArgumentError):
        K.normalize_kernel(K.GramMatrix(np.eye(2), "dtw_rbf", p))


# ----------------------------------------------------------------------- gram

@pytest.mark.parametrize("kid", K.KERNEL_IDS)
def test_gram_single_sequence(rng, kid):
    x = rng.normal(size=(5, 3))
    p = K.KernelParams(nu=0.3)
    if kid == "rdtw_normalized":
        with pytest.raises(DegenerateNormalizationError):
            K.gram([x], kid, p)
        return
    g = K.gram([x], kid, p)
    assert g.values.shape == (1, 1)
    self_value = {"euclid_rbf": 1.0, "dtw_rbf": 1.0,
                  "rdtw": K.rdtw_kernel(x, x, p)}[kid]
    assert g.values[0, 0] == pytest.approx(self_value, rel=1e-14)


@pytest.mark.parametrize("kid", K.KERNEL_IDS)
def test_gram_symmetric_positive_diag_and_permutation(rng, kid):
    seqs = rand_seqs(rng, 7, 5)
    p = K.KernelParams(nu=0.4)
    g = K.gram(seqs, kid, p).values
    assert np.array_equal(g, g.T)
    assert np.all(np.diag(g) > 0)
    perm = rng.permutation(7)
    gp = K.gram([seqs[i] for i in perm], kid, p).values
    if kid == "rdtw_normalized":
        # bounds are permutation invariant, so entries move with the rows
        assert np.allclose(gp, g[np.ix_(perm, perm)], rtol=0, atol=0)
    else:
        assert np.array_equal(gp, g[np.ix_(perm, perm)])


@pytest.mark.parametrize("kid", ["dtw_rbf", "rdtw"])
def test_gram_parallel_bit_identical(rng, kid):
    seqs = rand_seqs(rng, 11, 6)
    p = K.KernelParams(nu=0.4)
    serial = K.gram(seqs, kid, p, workers=1).values
    for w in (2, 3, 5):
        assert np.array_equal(serial, K.gram(seqs, kid, p, workers=w).values)


def test_gram_error_names_pair(rng):
    seqs = rand_seqs(rng, 3, 5) + [rng.normal(size=(6, 3))]
    with pytest.raises(FixedLengthRequiredError, match=r"\(3, 0\)"):
        K.gram(seqs, "rdtw", K.KernelParams())
    # dtw accepts mixed lengths
    assert K.gram(seqs, "dtw_rbf", K.KernelParams()).values.shape == (4, 4)


def test_gram_unknown_kernel(rng):
    with pytest.raises(InvalidArgumentError):
        K.gram(rand_seqs(rng, 2, 3), "gak", K.KernelParams())


# ----------------------------------------------------------------- gram_cross

@pytest.mark.parametrize("kid", K.KERNEL_IDS)
def test_cross_on_train_equals_gram(rng, kid):
    seqs = rand_seqs(rng, 6, 5)
    p = K.KernelParams(nu=0.3, alpha=1.5)
    g = K.gram(seqs, kid, p)
    c = K.gram_cross(seqs, seqs, kid, p, g.norm_bounds)
    assert np.allclose(c.values, g.values, rtol=1e-13, atol=0)


def test_cross_accepts_packed_training_set(rng):
    seqs = rand_seqs(rng, 5, 4)
    test = rand_seqs(rng, 2, 4)
    p = K.KernelParams(nu=0.3)
    a = K.gram_cross(test, seqs, "rdtw", p).values
    b = K.gram_cross(test, K.pack(seqs), "rdtw", p).values
    assert np.array_equal(a, b)


def test_cross_empty_and_missing_bounds(rng):
    seqs = rand_seqs(rng, 4, 5)
    p = K.KernelParams()
    assert K.gram_cross([], seqs, "rdtw", p).values.shape == (0, 4)
    with pytest.raises(InvalidArgumentError):
        K.gram_cross(seqs[:1], seqs, "rdtw_normalized", p)


def test_cross_not_clamped(rng):
    seqs = rand_seqs(rng, 5, 5)
    p = K.KernelParams(nu=0.5)
    g = K.gram(seqs, "rdtw_normalized", p)
    far = [s + 50.0 for s in seqs[:1]]
    c = K.gram_cross(far, seqs, "rdtw_normalized", p, g.norm_bounds).values
    assert np.all(c < 1.0)


def test_cross_self_similarity_statistical(rng):
    # not a theorem: require the row maximum at the matching column in most trials
    hits, trials = 0, 40
    p = K.KernelParams(nu=0.5)
    for _ in range(trials):
        seqs = rand_seqs(rng, 8, 6)
        j = int(rng.integers(8))
        row = K.gram_cross([seqs[j]], seqs, "rdtw", p).values[0]
        hits += int(np.argmax(row) == j)
    assert hits >= 0.95 * trials


# -------------------------------------------------------------- serialization

@pytest.mark.parametrize("kid", ["dtw_rbf", "rdtw_normalized"])
def test_save_load_round_trip(rng, tmp_path, kid):
    seqs = rand_seqs(rng, 4, 5)
    p = K.KernelParams(nu=0.25, corridor_radius=2, alpha=1.5)
    g = K.gram(seqs, kid, p)
    K.save_gram(g, tmp_path / "g.bin")
    back = K.load_gram(tmp_path / "g.bin")
    assert isinstance(back, K.GramMatrix)
    assert np.array_equal(back.values, g.values)
    assert back.params == p and back.kernel_id == kid and back.norm_bounds == g.norm_bounds
    c = K.gram_cross(seqs[:2], seqs, kid, p, g.norm_bounds)
    K.save_gram(c, tmp_path / "c.bin")
    assert isinstance(K.load_gram(tmp_path / "c.bin"), K.CrossGram)
    K.save_gram_csv(g, tmp_path / "g.csv")
    assert np.array_equal(np.loadtxt(tmp_path / "g.csv", delimiter=","), g.values)


def test_load_rejects_foreign_file(tmp_path):
    from elastic_gestures.errors import SchemaError
    (tmp_path / "x.bin").write_bytes(b"not a gram")
    with pytest.raises(SchemaError):
        K.load_gram(tmp_path / "x.bin")


# ------------------------------------------------------------------ properties

@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10 ** 6))
def test_property_dtw_triangle_free_bounds(n, m, seed):
    r = np.random.default_rng(seed)
    x, y = r.normal(size=(n, 2)), r.normal(size=(m, 2))
    d = K.dtw_distance(x, y)
    # the optimal path visits both corners and at least max(n, m) cells
    assert d >= K.euclidean_sq(x[0], y[0]) + (K.euclidean_sq(x[-1], y[-1]) if n + m > 2 else 0) - 1e-12
    assert d <= dtw_by_enumeration(x, y) + 1e-9


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.floats(0.01, 5.0), st.integers(0, 10 ** 6))
def test_property_rdtw_symmetric(T, nu, seed):
    r = np.random.default_rng(seed)
    x, y = r.normal(size=(T, 3)), r.normal(size=(T, 3))
    p = K.KernelParams(nu=nu)
    a, b = K.rdtw_log_kernel(x, y, p), K.rdtw_log_kernel(y, x, p)
    assert abs(a - b) <= 1e-10 * max(1.0, abs(a))

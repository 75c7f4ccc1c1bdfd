import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levygrad import dirichlet as D
from levygrad import difference as F
from levygrad.freekernel import diff_free
from levygrad.symbols import ModelSpec, evaluator

CAUCHY = ModelSpec.stable(1.0)
CAUCHY2 = ModelSpec.stable(1.0, 2)
I = D.interval()


def cfg(model=CAUCHY, n=20000, seed=5):
    return D.PathConfig.auto(model, n_paths=n, seed=seed)


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3))
@settings(max_examples=50)
def test_reflection_involution(x):
    frame = F.ReflectionFrame(3)
    assert np.array_equal(frame.reflect(frame.reflect(x)), np.asarray(x))


@given(st.floats(0.01, 3), st.floats(0.01, 3), st.floats(-3, 3))
@settings(max_examples=50)
def test_reflection_increases_distance(x1, y1, lateral):
    frame = F.ReflectionFrame(2)
    x, y = np.array([x1, 0.0]), np.array([y1, lateral])
    assert np.linalg.norm(frame.reflect(x) - y) >= np.linalg.norm(x - y)


def test_split_symmetric_domain():
    frame = F.ReflectionFrame(2)
    pos, neg = frame.split(F.peanut(2), [[0.5, 0.1], [-0.5, 0.1], [3.0, 0.0], [0.0, 0.0]])
    assert pos.tolist() == [[0.5, 0.1]] and neg.tolist() == [[-0.5, 0.1]]
    with pytest.raises(ValueError):
        frame.split(D.Ball((0.5, 0.0), 1.0), [[0.1, 0.0]])


@given(st.floats(0.01, 2), st.floats(0.01, 2), st.floats(-2, 2))
@settings(max_examples=80)
def test_nu_tilde_nonnegative_and_dominated(v1, z1, off):
    v, z = np.array([v1, 0.0]), np.array([z1, off])
    if np.allclose(v, z):
        return
    nt = F.nu_tilde(CAUCHY2, v, z)
    assert nt >= 0
    assert nt <= evaluator(CAUCHY2).nu(np.linalg.norm(v - z)) * (1 + 1e-12)


def test_nu_tilde_on_hyperplane():
    assert F.nu_tilde(CAUCHY2, [0.3, 0.0], [0.0, 1.0]) == 0.0
    band = F.check_ABLevyquotient(CAUCHY2, grid=[(np.array([0.3, 0.0]), np.array([0.0, 1.0]))])
    assert band.max == 0.0
    with pytest.raises(ValueError):
        F.nu_tilde(CAUCHY2, [-0.3, 0.0], [0.2, 1.0])


def test_ab_quotient_finite():
    band = F.check_ABLevyquotient(CAUCHY2)
    assert band.n == 24 and np.isfinite(band.max) and band.extra["min_nu_tilde"] >= 0


def test_diff_on_hyperplane_is_zero():
    est = F.diff_pD(CAUCHY, I, 0.3, [0.0], [0.5], cfg(n=100))
    assert est.mean == 0.0 and est.stderr == 0.0


def test_key_sandwich_example():
    t, x, y = 0.3, [0.3], [0.5]
    est = F.diff_pD(CAUCHY, I, t, x, y, cfg(n=40000))
    upper = diff_free(CAUCHY, t, x, y)
    assert est.mean >= -3 * est.stderr
    assert est.mean <= upper + 3 * est.stderr


def test_upper_envelope_tightness():
    # small t, points far from the boundary: the killed difference is the free one
    t, x, y = 0.01, [0.05], [0.1]
    est = F.diff_pD(CAUCHY, I, t, x, y, cfg(n=20000))
    upper = diff_free(CAUCHY, t, x, y)
    assert est.mean == pytest.approx(upper, rel=0.01)


def test_reflection_coupling_reduces_variance():
    c = cfg(n=20000)
    coupled = F.diff_pD(CAUCHY, I, 0.3, [0.2], [0.4], c)
    a = D.estimate_pD(CAUCHY, I, 0.3, [0.2], [0.4], c.with_seed(1))
    b = D.estimate_pD(CAUCHY, I, 0.3, [-0.2], [0.4], c.with_seed(2))
    assert coupled.stderr < np.hypot(a.stderr, b.stderr)
    assert abs(coupled.mean - (a.mean - b.mean)) < 3 * np.hypot(coupled.stderr, np.hypot(a.stderr, b.stderr))


def test_lemma_grids_respect_hypotheses():
    for kind in ("lem4", "lem3", "lem5"):
        for r, t, xf, y in F.lemma_grid(kind, 2):
            assert xf < 1 / 16 and y[0] > 0 and np.linalg.norm(y) < 1
            if kind == "lem3":
                assert np.linalg.norm(y) < 0.25
            if kind == "lem5":
                assert np.linalg.norm(y) >= 0.25
    dom = F.peanut(2)
    for t, xf, y in F.m_estimate_grid(2):
        assert dom.contains(np.asarray(y)[None, :])[0]


def test_lemma_ratios_small_grid():
    grid = [(1.0, 0.3, 1 / 32, np.array([0.6, 0.0])), (0.5, 0.05, 1 / 20, np.array([0.3, 0.3]))]
    band = F.check_lem4(CAUCHY2, grid=grid, cfg=cfg(CAUCHY2, n=10000))
    assert band.finite_positive and band.max < 10


def test_m_estimate_small_grid():
    grid = [(0.3, 1 / 32, np.array([0.5, 0.3])), (0.3, 1 / 32, np.array([-0.5, 0.4]))]
    band = F.check_m_estimate(CAUCHY2, grid=grid, cfg=cfg(CAUCHY2, n=10000))
    assert np.isfinite(band.max) and band.extra["r"] == pytest.approx(np.sqrt(0.39))


def test_translation_coupling_for_asymmetric_domain():
    dom = D.Ball((0.3,), 1.0)
    est = F.diff_pD(CAUCHY, dom, 0.3, [0.2], [0.5], cfg(n=5000))
    assert np.isfinite(est.mean) and est.stderr > 0

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from levygrad.renewal import (
    V_build,
    check_V_equivalence,
    check_V_scaling,
    check_Vpsi,
    estimate_H,
    kappa,
    renewal,
    stehfest_invert,
)
from levygrad.symbols import ModelSpec

CAUCHY = ModelSpec.stable(1.0)
FAMILIES = [ModelSpec.stable(1.0), ModelSpec.relativistic(1.0), ModelSpec.subordinate_bm(1.0), ModelSpec.trunc_stable_exp(1.0)]


def test_kappa_stable_is_half_power():
    xi = np.geomspace(1e-3, 1e3, 9)
    for a in (0.5, 1.0, 1.5):
        assert np.allclose(kappa(ModelSpec.stable(a), xi), xi ** (a / 2), rtol=1e-10)
    assert kappa(CAUCHY, 4.0) == pytest.approx(2.0, rel=1e-12)
    with pytest.raises(ValueError):
        kappa(CAUCHY, 0.0)


def test_stehfest_on_known_transform():
    r = np.array([0.5, 1.0, 2.0])
    out = stehfest_invert(lambda s: 1.0 / (s + 1.0), r, 14)
    assert np.allclose(out, np.exp(-r), rtol=1e-3)


def test_renewal_cauchy_closed_form():
    rf = renewal(CAUCHY)
    r = np.array([0.25, 1.0, 4.0])
    assert np.allclose(rf.V(r), 2 * np.sqrt(r / np.pi), rtol=1e-4)
    assert rf.V(0.0) == 0.0
    with pytest.raises(ValueError):
        rf.V(-1.0)


def test_renewal_stable_power_law():
    for a in (0.5, 1.5):
        rf = renewal(ModelSpec.stable(a))
        r = np.geomspace(1e-3, 1e3, 7)
        ratio = rf.V(r) / r ** (a / 2)
        assert np.ptp(ratio) / ratio.mean() < 1e-3


@pytest.mark.parametrize("model", FAMILIES, ids=lambda m: m.label())
def test_renewal_is_increasing_and_inverse(model):
    rf = renewal(model)
    r = np.geomspace(1e-6, 1e4, 200)
    v = rf.V(r)
    assert np.all(np.diff(v) > 0)
    assert np.allclose(rf.V_inv(v), r, rtol=1e-8)
    assert np.all(rf.V_prime(r) > 0)


@given(st.floats(1e-4, 1e2), st.floats(1e-4, 1e2))
@settings(max_examples=200, deadline=None)
def test_subadditivity(a, b):
    for model in FAMILIES:
        rf = renewal(model)
        assert rf.V(a + b) <= (rf.V(a) + rf.V(b)) * (1 + 1e-9)


def test_vpsi_band_cauchy():
    # 1 / (V^2(r) psi(1/r)) = pi / 4 for the Cauchy process
    lo, hi = check_Vpsi(CAUCHY, np.geomspace(1e-3, 1e2, 21))
    assert lo == pytest.approx(np.pi / 4, rel=2e-4)
    assert hi == pytest.approx(np.pi / 4, rel=2e-4)


@pytest.mark.parametrize("model", FAMILIES, ids=lambda m: m.label())
def test_vpsi_band_finite(model):
    lo, hi = check_Vpsi(model, np.geomspace(1e-3, 1e2, 21))
    assert 0 < lo <= hi < np.inf


def test_V_scaling_and_equivalence():
    pairs = [(e, w) for e in np.geomspace(1e-2, 1, 5) for w in np.geomspace(1e-2, 1, 5)]
    assert check_V_scaling(CAUCHY, pairs) == pytest.approx(1.0, rel=1e-3)
    with pytest.raises(ValueError):
        check_V_scaling(CAUCHY, [(2.0, 0.5)])
    r = np.geomspace(1e-3, 1, 11)
    t = np.geomspace(1e-3, 1, 11)
    assert check_V_equivalence(CAUCHY, r[:, None], t[None, :])


def test_condition_H():
    assert estimate_H(ModelSpec.stable(1.0), 1.0) == pytest.approx(1.0, abs=1e-6)
    hs = [estimate_H(ModelSpec.trunc_stable_exp(1.0), R) for R in (0.5, 1.0, 2.0)]
    assert all(h >= 1 for h in hs) and hs == sorted(hs)
    with pytest.raises(ValueError):
        estimate_H(CAUCHY, 0.0)


def test_V_build_records_diagnostics():
    rf = V_build(ModelSpec.trunc_stable_exp(1.0))
    assert not rf.flagged
    assert rf.order == 8
    table = rf.table()
    assert set(table) == {"r", "V", "V_surrogate", "V_prime"}
    # the surrogate is comparable to V
    ratio = table["V"] / table["V_surrogate"]
    assert 0.2 < ratio.min() and ratio.max() < 5

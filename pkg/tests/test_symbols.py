import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from levygrad.symbols import (
    Family,
    ModelError,
    ModelSpec,
    estimate_scaling,
    evaluator,
    macdonald,
    psi_inv,
    psi_star,
    stable_constant,
    symbol_table,
)

CATALOG = [
    ModelSpec.stable(1.0),
    ModelSpec.stable(0.5, 2),
    ModelSpec.relativistic(1.0),
    ModelSpec.relativistic(0.5, 3),
    ModelSpec.subordinate_bm(1.2),
    ModelSpec.trunc_stable_exp(1.0),
    ModelSpec.trunc_stable_exp(1.5, 2),
]

# psi of the truncated family from adaptive quadrature of
# int (1 - cos(rho x_1)) nu(|x|) dx with the density written out directly,
# using 4 sin^2(rho x / 2) in d = 1 and 2 pi r (1 - J_0(rho r)) in d = 2
TSE_ORACLE = {
    (0.5, 1): [0.12710119765657335, 0.8839436938673224, 2.6303684244024934],
    (0.5, 2): [0.06519345969942814, 0.6411844243830206, 2.409354102720511],
    (1.0, 1): [0.17033350649261597, 1.6717891034668453, 9.681860354796303],
    (1.0, 2): [0.1195034191424746, 1.4077918801416502, 9.44499575828535],
    (1.5, 1): [0.20843354249684426, 2.6516088439017262, 31.463543786167886],
    (1.5, 2): [0.179880435858229, 2.4714468941336762, 31.30156310074258],
}


def test_model_validation():
    with pytest.raises(ModelError):
        ModelSpec.stable(2.0)
    with pytest.raises(ModelError):
        ModelSpec.stable(0.0)
    with pytest.raises(ModelError):
        ModelSpec.relativistic(0.0)
    with pytest.raises(ModelError):
        ModelSpec.stable(1.0, 0)
    with pytest.raises(ModelError):
        ModelSpec(Family.STABLE, slowly_varying="log")
    with pytest.raises(ValueError):
        ModelSpec("Gaussian")


def test_model_dict_round_trip():
    for m in CATALOG:
        assert ModelSpec.from_dict(m.to_dict()) == m
    with pytest.raises(ModelError):
        ModelSpec.from_dict({"family": "Stable", "beta": 1})
    with pytest.raises(ModelError):
        ModelSpec.from_dict({"alpha": 1})


def test_closed_form_exponents():
    r = np.geomspace(1e-3, 1e3, 13)
    assert np.allclose(evaluator(ModelSpec.stable(0.7)).psi(r), r**0.7, rtol=1e-14)
    rel = evaluator(ModelSpec.relativistic(2.0)).psi(r)
    assert np.allclose(rel, np.sqrt(r**2 + 4) - 2, rtol=1e-12)
    sub = evaluator(ModelSpec.subordinate_bm(1.2)).psi(r)
    assert np.allclose(sub, r**1.2 + r**0.6, rtol=1e-14)


def test_stable_constant_cauchy():
    assert stable_constant(1, 1.0) == pytest.approx(1 / np.pi, rel=1e-14)
    assert stable_constant(3, 1.0) == pytest.approx(1 / np.pi**2, rel=1e-14)


def test_macdonald_against_scipy():
    r = np.geomspace(1e-4, 300, 40)
    for s in (0.5, 1.0, 1.5, 2.0, 3.5):
        assert np.allclose(macdonald(s, r), special.kv(s, r), rtol=1e-12)
        assert np.allclose(macdonald(s, r, scaled=True), special.kve(s, r), rtol=1e-12)
    with pytest.raises(ValueError):
        macdonald(1.0, 0.0)


def test_relativistic_levy_density():
    r = np.geomspace(1e-3, 30, 25)
    nu1 = evaluator(ModelSpec.relativistic(1.0)).nu(r)
    assert np.allclose(nu1, special.kv(1, r) / (np.pi * r), rtol=1e-11)
    nu3 = evaluator(ModelSpec.relativistic(2.0, 3)).nu(r)
    assert np.allclose(nu3, 4 * special.kv(2, 2 * r) / (2 * np.pi**2 * r**2), rtol=1e-11)


def test_nu_prime_finite_difference():
    r = np.array([0.3, 0.9, 1.7, 4.0])
    for m in CATALOG:
        ev = evaluator(m)
        h = 1e-5 * r
        fd = (ev.nu(r + h) - ev.nu(r - h)) / (2 * h)
        assert np.allclose(ev.nu_prime(r), fd, rtol=1e-6)


@pytest.mark.parametrize("key", sorted(TSE_ORACLE))
def test_truncated_psi_oracle(key):
    alpha, d = key
    ev = evaluator(ModelSpec.trunc_stable_exp(alpha, d))
    rho = np.array([0.5, 2.0, 10.0])
    ref = np.array(TSE_ORACLE[key])
    assert np.allclose(ev.psi(rho), ref, rtol=1e-8)
    for x, y in zip(rho, ref):
        assert ev.psi_direct(x) == pytest.approx(y, rel=1e-9)


def test_relativistic_levy_khintchine():
    # 2 int_0^inf (1 - cos 2x) K_1(x) / (pi x) dx = sqrt(5) - 1, from adaptive quadrature
    assert evaluator(ModelSpec.relativistic(1.0)).psi(2.0) == pytest.approx(1.2360679717624954, rel=1e-8)


def test_second_moment_stable():
    m = ModelSpec.stable(0.8, 2)
    eps = 0.3
    exact = 2 * np.pi * stable_constant(2, 0.8) * eps ** (2 - 0.8) / (2 - 0.8)
    assert evaluator(m).second_moment(eps) == pytest.approx(exact, rel=1e-10)


@pytest.mark.parametrize("model", CATALOG, ids=lambda m: m.label())
def test_psi_star_sandwich(model):
    r = np.geomspace(1e-3, 1e3, 61)
    ev = evaluator(model)
    p, ps = ev.psi(r), ev.psi_star(r)
    assert np.all(ps >= p * (1 - 1e-12))
    assert np.all(ps <= np.pi**2 * p)
    assert np.all(np.diff(ps) >= 0)


def test_truncated_exponent_is_not_monotone():
    ev = evaluator(ModelSpec.trunc_stable_exp(1.5))
    assert not ev.monotone
    assert evaluator(ModelSpec.stable(1.5)).monotone


@given(st.floats(1e-3, 1e3))
@settings(max_examples=40, deadline=None)
def test_psi_inv_generalized_inverse(u):
    for m in (ModelSpec.stable(1.3), ModelSpec.relativistic(1.0), ModelSpec.subordinate_bm(0.8)):
        y = psi_inv(m, u)
        assert psi_star(m, y) == pytest.approx(u, rel=1e-9)


def test_psi_inv_edge_cases():
    m = ModelSpec.stable(1.0)
    assert psi_inv(m, 0.0) == 0.0
    with pytest.raises(ValueError):
        psi_inv(m, -1.0)


def test_scaling_certificate_stable_exact():
    cert = estimate_scaling(ModelSpec.stable(1.4), 1.0)
    assert cert.C_lower == pytest.approx(1.0, abs=1e-12)
    assert cert.C_upper == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        estimate_scaling(ModelSpec.stable(1.4), 1.0, grid=[(0.5, 2.0)])


def test_relativistic_scaling_exponents():
    cert = estimate_scaling(ModelSpec.relativistic(1.0), 1.0)
    assert (cert.alpha_lower, cert.alpha_upper) == (1.0, 1.0)
    assert 0 < cert.C_lower <= 1.0 <= cert.C_upper < np.inf


def test_symbol_table_columns():
    tab = symbol_table(ModelSpec.stable(1.0), np.array([1.0, 2.0]))
    assert set(tab) == {"r", "psi", "psi_star", "nu"}

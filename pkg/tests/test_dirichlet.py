import numpy as np
import pytest

from levygrad import dirichlet as D
from levygrad._numerics import panel_nodes
from levygrad.freekernel import density, dp_dr
from levygrad.renewal import renewal
from levygrad.symbols import ModelSpec, stable_constant

CAUCHY = ModelSpec.stable(1.0)
I = D.interval(-1.0, 1.0)


def cfg(n=20000, seed=7, **kw):
    return D.PathConfig.auto(CAUCHY, n_paths=n, seed=seed, **kw)


def joint_z(a, b):
    return abs(a.mean - b.mean) / np.hypot(a.stderr, b.stderr)


# -- geometry ----------------------------------------------------------------------------


def test_ball_geometry():
    b = D.Ball((0.0, 0.0), 2.0)
    assert b.delta([0.5, 0.0]) == pytest.approx(1.5)
    assert b.delta([3.0, 0.0]) == 0.0
    assert list(b.contains(np.array([[0.0, 1.9], [0.0, 2.0]]))) == [True, False]
    assert I.center == (0.0,) and I.radius == 1.0
    with pytest.raises(ValueError):
        D.Ball((0.0,), 0.0)


def test_union_of_intervals_delta():
    u = D.SymmetricUnionOfBalls(((( -1.0,), 0.6), ((1.0,), 0.6)))
    assert u.delta([1.2]) == pytest.approx(0.4)
    assert u.delta([0.0]) == 0.0
    merged = D.SymmetricUnionOfBalls((((-0.5,), 1.0), ((0.5,), 1.0)))
    assert merged.delta([0.0]) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        D.SymmetricUnionOfBalls((((0.5,), 1.0),))


def test_peanut_delta_at_origin():
    from levygrad.difference import peanut

    dom = peanut(2)
    # nearest boundary points are where the two circles meet
    assert dom.delta([0.0, 0.0]) == pytest.approx(np.sqrt(0.8**2 - 0.5**2), rel=1e-12)
    assert dom.delta([1.2, 0.0]) == pytest.approx(0.1, rel=1e-12)
    assert dom.diameter == pytest.approx(2.6)


# -- jump law -----------------------------------------------------------------------------


def test_tail_mass_stable():
    for a, d in ((1.0, 1), (0.5, 2), (1.5, 3)):
        m = ModelSpec.stable(a, d)
        r = np.array([1e-3, 0.1, 2.0])
        from levygrad._numerics import sphere_area

        exact = sphere_area(d) * stable_constant(d, a) * r ** (-a) / a
        assert np.allclose(D.tail_mass(m, r), exact, rtol=1e-10)


def test_jump_radii_law():
    law = D.jump_law(CAUCHY, 0.01)
    rng = np.random.default_rng(0)
    r = law.radii(1.0 - rng.random(200000))
    assert r.min() >= 0.01 * (1 - 1e-9)
    frac = np.mean(r > 0.02)
    assert abs(frac - 0.5) < 4 * np.sqrt(0.25 / r.size)
    assert law.rate == pytest.approx(2 / (np.pi * 0.01), rel=1e-10)
    assert law.sigma2 == pytest.approx(2 * 0.01 / np.pi, rel=1e-10)


def test_auto_config_rate_budget():
    c = cfg()
    assert D.jump_law(CAUCHY, c.eps).rate * c.dt == pytest.approx(0.1, rel=1e-6)
    with pytest.raises(ValueError):
        D.simulate(CAUCHY, I, [[0.0]], 0.1, D.PathConfig(c.eps / 2, c.dt, 10, 0))
    with pytest.raises(ValueError):
        D.PathConfig(0.1, 1e-3, 10, -1)


# -- simulation contracts ---------------------------------------------------------------------


def test_start_outside_rejected():
    with pytest.raises(ValueError):
        D.sample_exit(CAUCHY, I, [1.5], 0.1, cfg(100))


def test_boundary_start_exits_at_zero():
    s = D.sample_exit(CAUCHY, I, [1.0], 0.1, cfg(100))
    assert np.all(s.tau == 0.0)
    assert D.estimate_survival(CAUCHY, I, [1.0], 0.3, cfg(100)).mean == 0.0


def test_survival_at_time_zero():
    assert D.estimate_survival(CAUCHY, I, [0.0], 0.0, cfg(100)).mean == 1.0


def test_short_horizon_mostly_censored():
    s = D.sample_exit(CAUCHY, I, [0.0], 2e-3, cfg(5000))
    assert s.censored.mean() > 0.99


def test_determinism_and_block_streams():
    c = D.PathConfig.auto(CAUCHY, n_paths=3000, seed=11, block_size=1000)
    a = D.simulate(CAUCHY, I, [[0.3]], 0.5, c)
    b = D.simulate(CAUCHY, I, [[0.3]], 0.5, c)
    assert np.array_equal(a.tau, b.tau) and np.array_equal(a.exit_point, b.exit_point)
    small = D.simulate(CAUCHY, I, [[0.3]], 0.5, c.with_paths(1000))
    assert np.array_equal(small.tau, a.tau[:, :1000])
    other = D.simulate(CAUCHY, I, [[0.3]], 0.5, c.with_seed(12))
    assert not np.array_equal(other.tau, a.tau)


def test_survival_refinement_oracle():
    base = D.estimate_survival(CAUCHY, I, [0.0], 0.5, cfg(40000))
    fine = D.estimate_survival(CAUCHY, I, [0.0], 0.5, cfg(40000, seed=8).refined(4))
    assert joint_z(base, fine) < 3


def test_pure_truncation_mode_close():
    c = cfg(40000)
    trunc = D.PathConfig(c.eps, c.dt, c.n_paths, 99, substitute_gaussian=False)
    a = D.estimate_survival(CAUCHY, I, [0.0], 0.5, c)
    b = D.estimate_survival(CAUCHY, I, [0.0], 0.5, trunc)
    assert joint_z(a, b) < 4


def test_domain_monotonicity():
    small = D.estimate_survival(CAUCHY, D.interval(-0.5, 0.5), [0.1], 0.3, cfg())
    big = D.estimate_survival(CAUCHY, I, [0.1], 0.3, cfg())
    assert small.mean <= big.mean + 3 * np.hypot(small.stderr, big.stderr)


# -- kernel estimates ---------------------------------------------------------------------------


def test_pd_symmetry():
    a = D.estimate_pD(CAUCHY, I, 0.3, [0.2], [-0.1], cfg(40000))
    b = D.estimate_pD(CAUCHY, I, 0.3, [-0.1], [0.2], cfg(40000, seed=8))
    assert joint_z(a, b) < 3
    assert not a.flagged_negative


def test_pd_refinement_oracle():
    a = D.estimate_pD(CAUCHY, I, 0.3, [0.2], [-0.1], cfg(40000))
    b = D.estimate_pD(CAUCHY, I, 0.3, [0.2], [-0.1], cfg(20000, seed=9).refined(4))
    assert joint_z(a, b) < 3


def test_pd_close_to_free_kernel_for_small_time():
    t = 0.01
    est = D.estimate_pD(CAUCHY, I, t, [0.05], [-0.05], cfg())
    free = density(CAUCHY).p_scalar(t, 0.1)
    assert 0.97 < est.mean / free <= 1.0 + 3 * est.stderr / free


def test_pd_rejects_points_outside():
    with pytest.raises(ValueError):
        D.estimate_pD(CAUCHY, I, 0.3, [0.2], [1.2], cfg(100))
    with pytest.raises(ValueError):
        D.estimate_pD(CAUCHY, I, 0.0, [0.2], [0.1], cfg(100))


def test_semigroup_spot_check():
    t, x, y = 0.4, 0.2, -0.3
    c = cfg(40000)
    direct = D.estimate_pD(CAUCHY, I, t, [x], [y], c.with_seed(21))
    px = D.path_set(CAUCHY, I, [[x]], t / 2, c.with_seed(22))
    py = D.path_set(CAUCHY, I, [[y]], t / 2, c.with_seed(23))
    th, tw = panel_nodes(np.linspace(-np.pi / 2, np.pi / 2, 9), 8)
    w_nodes, w_w = np.sin(th.ravel()), (tw * np.cos(th)).ravel()
    A_free, A_sub, B_free, B_sub = [], [], [], []
    for w in w_nodes:
        f, s = px.pd_contrib(0, t / 2, [w])
        A_free.append(f)
        A_sub.append(s)
        f, s = py.pd_contrib(0, t / 2, [w])
        B_free.append(f)
        B_sub.append(s)
    A = np.array(A_free) - np.array(A_sub).mean(axis=1)
    B = np.array(B_free) - np.array(B_sub).mean(axis=1)
    value = np.sum(w_w * A * B)
    # delta-method error from the two independent path sets
    infl_x = -(w_w * B) @ np.array(A_sub)
    infl_y = -(w_w * A) @ np.array(B_sub)
    se = np.sqrt(infl_x.var() / infl_x.size + infl_y.var() / infl_y.size)
    assert abs(value - direct.mean) < 3 * np.hypot(se, direct.stderr) + 1e-3 * direct.mean


def test_gradient_vanishes_at_centre():
    g = D.estimate_grad_pD(CAUCHY, I, 0.3, [0.0], [0.0], cfg())
    assert abs(g.mean[0]) < 3 * g.stderr[0] + 1e-12


def test_gradient_free_space_sanity():
    big = D.interval(-50.0, 50.0)
    x, y, t = 0.3, 0.0, 0.1
    g = D.estimate_grad_pD(CAUCHY, big, t, [x], [y], cfg(), h=0.01)
    exact = dp_dr(CAUCHY, t, 0.3)
    assert abs(g.mean[0] - exact) < 3 * g.stderr[0] + 2e-3 * abs(exact)


def test_gradient_step_rule():
    with pytest.raises(ValueError):
        D.estimate_grad_pD(CAUCHY, I, 0.3, [0.5], [0.0], cfg(100), h=0.2)
    assert D.default_h(I, [0.5]) == pytest.approx(0.0625)


def test_gradient_step_halving():
    a = D.estimate_grad_pD(CAUCHY, I, 0.3, [0.4], [-0.2], cfg(40000))
    b = D.estimate_grad_pD(CAUCHY, I, 0.3, [0.4], [-0.2], cfg(40000, seed=8), h=D.default_h(I, [0.4]) / 2)
    assert abs(a.mean[0] - b.mean[0]) < 3 * np.hypot(a.stderr[0], b.stderr[0])


# -- eigenvalue and kernel ratio checks --------------------------------------------------------


def test_lambda1_decreases_with_radius():
    lams = [D.estimate_lambda1(CAUCHY, R, cfg(10000)) for R in (0.5, 1.0, 2.0)]
    assert lams[0] > lams[1] > lams[2]
    # exact scaling for the Cauchy process: lambda_1(R) = lambda_1(1) / R
    assert lams[0] * 0.5 == pytest.approx(lams[2] * 2.0, rel=0.1)


def test_rates_and_specializations():
    for delta in (0.05, 0.5, 1.0):
        for t in (0.01, 0.3, 0.9):
            assert D.main1_rate(CAUCHY, delta, t) == pytest.approx(D.specialized_rate(CAUCHY, delta, t), rel=1e-14)
            rel = ModelSpec.relativistic(1.0)
            q = D.specialized_rate(rel, delta, t) / D.main1_rate(rel, delta, t)
            assert 1 / np.sqrt(3) - 1e-12 <= q <= 1 + 1e-12
    assert D.main1_rate(CAUCHY, 0.5, 4.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        D.specialized_rate(ModelSpec.subordinate_bm(1.0), 0.5, 0.5)


def test_ikeda_watanabe_far_target():
    res = D.check_ikeda_watanabe(CAUCHY, I, B=(5.0, 8.0), cfg=cfg(40000), n_s=8)
    assert res.lhs.mean < 0.02
    assert res.z < 3


def test_ikeda_watanabe_restricted_to_intervals():
    with pytest.raises(NotImplementedError):
        D.check_ikeda_watanabe(ModelSpec.stable(1.0, 2), cfg=cfg(100))


def test_influence_ratio_matches_plain_ratio():
    rng = np.random.default_rng(1)
    a = rng.random(1000) + 1
    b = rng.random(1000) + 2
    val, se = D.influence_ratio([(a, 1, "g"), (b, -1, "g")])
    assert val == pytest.approx(a.mean() / b.mean())
    assert 0 < se < 0.05


def test_scale_constants():
    c = D.estimate_appendix_constants(CAUCHY, 1.0)
    assert c.all_positive
    assert c.C_lower == pytest.approx(1.0, abs=1e-12)
    rel = D.estimate_appendix_constants(ModelSpec.relativistic(1.0), 1.0)
    assert rel.all_positive

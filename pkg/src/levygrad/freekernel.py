"""Free transition densities by Hankel inversion, and the estimates they satisfy.

p_t(r) = (2 pi)^{-n/2} r^{1-n/2} int_0^inf e^{-t psi(s)} J_{n/2-1}(r s) s^{n/2} ds

in evaluation dimension n. The radial derivative in dimension d is exact
through the dimension lift: dp/dr = -2 pi r p^{(d+2)}.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import interpolate, special

from ._numerics import bessel_integral, panel_nodes, sphere_area
from .renewal import renewal
from .report import RatioBand
from .symbols import Family, ModelSpec, evaluator

TAIL_CUTOFF = 40.0


class TruncationError(RuntimeError):
    pass


def standard_t_grid() -> np.ndarray:
    return np.geomspace(1e-2, 1.0, 9)


def standard_r_grid(R: float = 1.0) -> np.ndarray:
    return np.geomspace(1e-2, R, 17)


class RadialDensity:
    """Quadrature-backed p_t(r) for one model in evaluation dimension ``dim``."""

    def __init__(self, model: ModelSpec, dim: int | None = None, cutoff: float = TAIL_CUTOFF, q: int = 16, direct_limit: int = 2000):
        self.model = model
        self.dim = model.d if dim is None else int(dim)
        self.cutoff = cutoff
        self.q = q
        self.direct_limit = direct_limit
        self.ev = evaluator(model)

    def s_max(self, t: float) -> float:
        """Frequency beyond which t psi(s) exceeds the cutoff."""
        # psi >= psi_star / pi^2, so the envelope level must be raised for non-monotone symbols
        level = self.cutoff / t if self.ev.monotone else np.pi**2 * self.cutoff / t
        s = float(self.ev.psi_inv(level))
        if not np.isfinite(s):
            raise TruncationError(f"t psi(s) < {self.cutoff} for all representable s at t={t}")
        return s

    def _breaks(self, smax: float) -> np.ndarray:
        # geometric nodes resolve the cusp of e^{-t psi} at 0 and its decay scale
        return smax * 2.0 ** (-0.5 * np.arange(0, 121))

    def p0(self, t: float) -> float:
        smax = self.s_max(t)
        edges = np.concatenate([[0.0], self._breaks(smax)[::-1]])
        nodes, w = panel_nodes(edges, self.q)
        n = self.dim
        val = np.sum(w * np.exp(-t * self.ev.psi(nodes)) * nodes ** (n - 1))
        return float(sphere_area(n) / (2 * np.pi) ** n * val)

    def p_scalar(self, t: float, r: float) -> float:
        if t <= 0:
            raise ValueError("t must be positive")
        if r < 0:
            raise ValueError("r must be nonnegative")
        if r == 0:
            return self.p0(t)
        n = self.dim
        smax = self.s_max(t)
        psi = self.ev.psi

        def amp(s):
            return np.exp(-t * psi(s)) * s ** (0.5 * n)

        val, _ = bessel_integral(amp, 0.5 * n - 1.0, r, a=0.0, b=smax, breaks=self._breaks(smax), q=self.q, direct_limit=self.direct_limit)
        return float((2 * np.pi) ** (-0.5 * n) * r ** (1 - 0.5 * n) * val)

    def __call__(self, t, r):
        r = np.asarray(r, dtype=float)
        out = np.array([self.p_scalar(float(t), float(x)) for x in r.ravel()])
        return out.reshape(r.shape) if r.shape else float(out[0])


@lru_cache(maxsize=64)
def density(model: ModelSpec, dim: int | None = None) -> RadialDensity:
    return RadialDensity(model, dim)


def p(model: ModelSpec, dim: int, t: float, r):
    return density(model, dim)(t, r)


def dp_dr(model: ModelSpec, t: float, r):
    """Exact radial derivative of p_t in dimension d via the (d+2)-dimensional density."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("dp_dr needs r > 0")
    out = -2 * np.pi * r * density(model, model.d + 2)(t, r)
    return out if np.ndim(out) else float(out)


def total_mass(model: ModelSpec, t: float, r_max: float = 1e6, per_decade: int = 8) -> float:
    """Radial quadrature of p_t against surface measure, with a first-order jump tail beyond r_max."""
    rd = density(model)
    d = model.d
    p0 = rd.p0(t)
    # below r_lo the density is flat to within ~ (r_lo / scale)^2
    scale = 1.0 / rd.s_max(t)
    r_lo = 1e-4 * scale
    core = sphere_area(d) * p0 * r_lo**d / d
    n_pan = int(np.ceil(per_decade * np.log10(r_max / r_lo)))
    edges = np.linspace(np.log(r_lo), np.log(r_max), n_pan + 1)
    x, w = panel_nodes(edges, 12)
    r = np.exp(x)
    vals = rd(t, r)
    body = sphere_area(d) * np.sum(w * vals * r**d)
    # P(|X_t| > r_max) ~ t nu(B(0, r_max)^c) for r_max far beyond the scale V^{-1}(sqrt t)
    tx, tw = panel_nodes(r_max * np.geomspace(1.0, 1e12, 97), 12)
    tail = t * sphere_area(d) * np.sum(tw * evaluator(model).nu(tx) * tx ** (d - 1))
    return float(core + body + tail)


class KernelTable:
    """Fast interpolated p_t(r) in dimension d for Monte Carlo evaluation.

    Stable models use exact scaling p_t(r) = t^{-d/alpha} p_1(r t^{-1/alpha})
    and a one-dimensional table; other models use a table in (log t, log r).
    Beyond the largest tabulated radius the density is continued by the
    ratio of Levy densities, which is its leading small-time behaviour.
    """

    def __init__(self, model: ModelSpec, t_min: float, t_max: float, r_max: float = 20.0, per_decade: int = 16):
        self.model = model
        self.d = model.d
        self.t_min, self.t_max = float(t_min), float(t_max)
        rd = density(model)
        self.ev = evaluator(model)
        self.stable = model.family is Family.STABLE
        if self.stable:
            a = model.alpha
            rho_lo = 1e-4 * min(1.0, self.t_max ** (-1.0 / a))
            rho_hi = r_max * self.t_min ** (-1.0 / a)
            n = int(np.ceil(per_decade * np.log10(rho_hi / rho_lo))) + 1
            self.rho = np.geomspace(rho_lo, rho_hi, n)
            vals = rd(1.0, self.rho)
            self._spline = interpolate.CubicSpline(np.log(self.rho), np.log(vals))
            self._rho_hi = rho_hi
            self._log_hi = float(np.log(vals[-1]))
        else:
            nt = int(np.ceil(per_decade / 2 * np.log10(self.t_max / self.t_min))) + 2
            self.t_nodes = np.geomspace(self.t_min, self.t_max, max(nt, 4))
            r_lo = 1e-4 * min(1.0, 1.0 / rd.s_max(self.t_max) * 1e2)
            nr = int(np.ceil(per_decade * np.log10(r_max / r_lo))) + 1
            self.r_nodes = np.geomspace(r_lo, r_max, nr)
            table = np.array([rd(t, self.r_nodes) for t in self.t_nodes])
            if np.any(table <= 0):
                raise TruncationError("non-positive density in the kernel table")
            self._spline2 = interpolate.RectBivariateSpline(np.log(self.t_nodes), np.log(self.r_nodes), np.log(table), kx=3, ky=3)
            self.r_max = r_max

    def __call__(self, t, r):
        t = np.asarray(t, dtype=float)
        r = np.asarray(r, dtype=float)
        t, r = np.broadcast_arrays(t, r)
        if np.any(t < self.t_min * (1 - 1e-12)) or np.any(t > self.t_max * (1 + 1e-12)):
            raise ValueError("time outside the kernel table range")
        d = self.d
        if self.stable:
            a = self.model.alpha
            rho = r * t ** (-1.0 / a)
            lr = np.log(np.clip(rho, self.rho[0], self._rho_hi))
            logp = self._spline(lr)
            far = rho > self._rho_hi
            if np.any(far):
                logp = np.where(far, self._log_hi + (d + a) * (np.log(self._rho_hi) - np.log(np.where(far, rho, 1.0))), logp)
            return np.exp(logp) * t ** (-d / a)
        lt = np.log(t).ravel()
        rr = r.ravel()
        lr = np.log(np.clip(rr, self.r_nodes[0], self.r_max))
        logp = self._spline2.ev(lt, lr)
        far = rr > self.r_max
        out = np.exp(logp)
        if np.any(far):
            out[far] *= self.ev.nu(rr[far]) / self.ev.nu(np.full(far.sum(), self.r_max))
        return out.reshape(r.shape)


@lru_cache(maxsize=32)
def kernel_table(model: ModelSpec, t_min: float, t_max: float, r_max: float = 20.0) -> KernelTable:
    return KernelTable(model, t_min, t_max, r_max)


# -- estimate checks -------------------------------------------------------------------


def _grid(model, grid, R=1.0):
    if grid is None:
        return standard_t_grid(), standard_r_grid(R)
    ts, rs = grid
    return np.asarray(ts, dtype=float), np.asarray(rs, dtype=float)


def _p_matrix(model: ModelSpec, ts, rs, dim=None) -> np.ndarray:
    rd = density(model, dim)
    return np.array([rd(t, rs) for t in ts])


def check_upper(model: ModelSpec, grid=None, grid_id: str = "standard") -> RatioBand:
    """p_t(r) / min(p_t(0), t / (V^2(r) r^d))."""
    ts, rs = _grid(model, grid)
    rf = renewal(model)
    rd = density(model)
    pm = _p_matrix(model, ts, rs)
    p0 = np.array([rd.p0(t) for t in ts])
    bound = np.minimum(p0[:, None], ts[:, None] / (rf.V(rs) ** 2 * rs**model.d)[None, :])
    return RatioBand.from_values("upper", pm / bound, grid_id)


def check_lower(model: ModelSpec, grid=None, grid_id: str = "standard", c1_choices=(1.0, 2.0, 4.0, 8.0)) -> tuple[float, float]:
    """Best (c, c1) with p_t(r) >= c t nu(r) exp(-c1 t / V^2(r)) on the grid."""
    ts, rs = _grid(model, grid)
    rf = renewal(model)
    pm = _p_matrix(model, ts, rs)
    nu = evaluator(model).nu(rs)
    best = (0.0, c1_choices[0])
    for c1 in c1_choices:
        bound = ts[:, None] * nu[None, :] * np.exp(-c1 * ts[:, None] / rf.V(rs)[None, :] ** 2)
        c = float(np.min(pm / bound))
        if c > best[0]:
            best = (c, c1)
    return best


def comparability_profile(model: ModelSpec, t, r):
    """min{[V^{-1}(sqrt t)]^{-d}, t / (V^2(r) r^d)}."""
    rf = renewal(model)
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    return np.minimum(rf.V_inv(np.sqrt(t)) ** (-model.d), t / (rf.V(r) ** 2 * r**model.d))


def check_comparability(model: ModelSpec, R: float = 1.0, grid=None, grid_id: str = "standard") -> RatioBand:
    ts, rs = _grid(model, grid, R)
    pm = _p_matrix(model, ts, rs)
    prof = comparability_profile(model, ts[:, None], rs[None, :])
    return RatioBand.from_values("comparability", pm / prof, grid_id, R=R)


def _dp_matrix(model, ts, rs):
    lifted = _p_matrix(model, ts, rs, dim=model.d + 2)
    return -2 * np.pi * rs[None, :] * lifted


def check_grad_comparability(model: ModelSpec, R: float = 1.0, grid=None, grid_id: str = "standard") -> tuple[RatioBand, RatioBand]:
    """|p'| against r [V^{-1}(sqrt t)]^{-d-2} for r <= V^{-1}(sqrt t), and t/(V^2(r) r^{d+1}) beyond."""
    ts, rs = _grid(model, grid, R)
    rf = renewal(model)
    d = model.d
    dp = np.abs(_dp_matrix(model, ts, rs))
    T, Rr = np.meshgrid(ts, rs, indexing="ij")
    scale = rf.V_inv(np.sqrt(T))
    small = Rr <= scale
    small_ratio = dp / (Rr * scale ** (-d - 2))
    large_ratio = dp / (T / (rf.V(Rr) ** 2 * Rr ** (d + 1)))
    sb = RatioBand.from_values("grad_small_r", small_ratio[small] if small.any() else small_ratio, grid_id, R=R, n_regime=int(small.sum()))
    lb = RatioBand.from_values("grad_large_r", large_ratio[~small] if (~small).any() else large_ratio, grid_id, R=R, n_regime=int((~small).sum()))
    return sb, lb


def check_derestimate(model: ModelSpec, grid=None, grid_id: str = "derestimate") -> RatioBand:
    """|p'_t(r)| / min(p_t(r)/r, p_t(r)/V^{-1}(sqrt t)), default t in (0,1], r in (0,2]."""
    if grid is None:
        grid = (standard_t_grid(), np.geomspace(1e-2, 2.0, 17))
    ts, rs = _grid(model, grid)
    rf = renewal(model)
    pm = _p_matrix(model, ts, rs)
    dp = np.abs(_dp_matrix(model, ts, rs))
    bound = np.minimum(pm / rs[None, :], pm / rf.V_inv(np.sqrt(ts))[:, None])
    return RatioBand.from_values("derestimate", dp / bound, grid_id)


def check_p0(model: ModelSpec, ts=None, grid_id: str = "standard_t") -> RatioBand:
    """p_t(0) [V^{-1}(sqrt t)]^d over t in (0, 1]."""
    ts = standard_t_grid() if ts is None else np.asarray(ts, dtype=float)
    rf = renewal(model)
    rd = density(model)
    vals = np.array([rd.p0(t) for t in ts]) * rf.V_inv(np.sqrt(ts)) ** model.d
    return RatioBand.from_values("p0", vals, grid_id)


def check_nu_estimates(model: ModelSpec, R0: float = 1.0, rs=None, grid_id: str = "standard_r") -> tuple[RatioBand, float]:
    """nu(r) V^2(r) r^d band on (0, R0], and sup nu(r)/nu(2r)."""
    rs = standard_r_grid(R0) if rs is None else np.asarray(rs, dtype=float)
    rf = renewal(model)
    ev = evaluator(model)
    band = RatioBand.from_values("nu_V", ev.nu(rs) * rf.V(rs) ** 2 * rs**model.d, grid_id, R0=R0)
    doubling = float(np.max(ev.nu(rs) / ev.nu(2 * rs)))
    return band, doubling


# -- reflected differences --------------------------------------------------------------


def reflect(x):
    x = np.array(x, dtype=float)
    x[..., 0] = -x[..., 0]
    return x


def diff_free(model: ModelSpec, t: float, x, y) -> float:
    """p_t(x - y) - p_t(x_hat - y)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if x[0] < 0 or y[0] < 0:
        raise ValueError("points must lie in the closed half-space x_1 >= 0")
    if x[0] == 0:
        return 0.0
    rd = density(model)
    r1 = float(np.linalg.norm(x - y))
    r2 = float(np.linalg.norm(reflect(x) - y))
    return rd.p_scalar(t, r1) - rd.p_scalar(t, r2)


def lem1_grid(d: int):
    """Points x, y in the half unit ball with x_1 in {0.05, 0.2}, |x - y| in [0.1, 1], t in {0.05, 0.5}."""
    pts = []
    for t in (0.05, 0.5):
        for x1 in (0.05, 0.2):
            x = np.zeros(d)
            x[0] = x1
            for dist in np.geomspace(0.1, 1.0, 5):
                # y along the first axis and, when d > 1, also laterally
                dirs = [np.eye(d)[0]] + ([np.eye(d)[1]] if d > 1 else [])
                for u in dirs:
                    y = x + dist * u
                    if y[0] > 0 and np.linalg.norm(y) < 1.0:
                        pts.append((t, x.copy(), y))
    return pts


def check_lem1(model: ModelSpec, grid=None, grid_id: str = "lem1") -> RatioBand:
    """(p_t(x-y) - p_t(x_hat-y)) / (|x_hat-x| min(p_t(x-y)/|x-y|, p_t(x-y)/V^{-1}(sqrt t)))."""
    pts = lem1_grid(model.d) if grid is None else grid
    rf = renewal(model)
    rd = density(model)
    ratios, diffs = [], []
    for t, x, y in pts:
        diff = diff_free(model, t, x, y)
        dist = float(np.linalg.norm(x - y))
        pt = rd.p_scalar(t, dist)
        bound = 2 * abs(x[0]) * min(pt / dist, pt / rf.V_inv(np.sqrt(t)))
        ratios.append(diff / bound)
        diffs.append(diff)
    return RatioBand.from_values("lem1", ratios, grid_id, min_difference=float(np.min(diffs)))

"""Monte Carlo for the process killed on leaving a domain.

Paths are simulated with big jumps (|jump| >= eps) as a compound Poisson
process and the small jumps replaced by a Brownian motion of matched
covariance. Several start points can share one Levy path: the k-th start
follows x_k + S_k L_t, where S_k is a diagonal sign matrix. Equal signs
give the translation coupling used for finite differences, a flipped
first sign gives the reflection coupling x -> x_hat.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ._numerics import panel_nodes, sphere_area
from .freekernel import density, kernel_table
from .renewal import renewal
from .report import RatioBand
from .symbols import Family, ModelSpec, evaluator

MAX_RATE_DT = 0.1


# -- domains ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")

    @property
    def d(self) -> int:
        return len(self.center)

    def contains(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.sum((X - np.asarray(self.center)) ** 2, axis=-1) < self.radius**2

    def delta(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(max(0.0, self.radius - np.linalg.norm(x - np.asarray(self.center))))

    def boundary_distance(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.abs(np.linalg.norm(X - np.asarray(self.center), axis=-1) - self.radius)

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def is_symmetric(self) -> bool:
        return self.center[0] == 0.0

    def inradius_ball(self):
        return self


@dataclass(frozen=True)
class SymmetricUnionOfBalls:
    """Finite union of open balls, closed under x -> x_hat."""

    balls: tuple

    def __post_init__(self):
        balls = tuple(b if isinstance(b, Ball) else Ball(*b) for b in self.balls)
        if not balls:
            raise ValueError("empty union")
        object.__setattr__(self, "balls", balls)
        d = balls[0].d
        if any(b.d != d for b in balls):
            raise ValueError("balls of different dimensions")
        for b in balls:
            mirrored = (-b.center[0],) + b.center[1:]
            if not any(np.allclose(mirrored, o.center) and np.isclose(b.radius, o.radius) for o in balls):
                raise ValueError("union is not symmetric under reflection of the first coordinate")

    @property
    def d(self) -> int:
        return self.balls[0].d

    def contains(self, X) -> np.ndarray:
        out = self.balls[0].contains(X)
        for b in self.balls[1:]:
            out = out | b.contains(X)
        return out

    def _candidates(self, x: np.ndarray) -> list:
        """Points of the union's boundary that may be nearest to x."""
        cands = []
        for b in self.balls:
            c = np.asarray(b.center)
            v = x - c
            n = np.linalg.norm(v)
            if n == 0:
                v = np.eye(self.d)[0]
                n = 1.0
            cands.append(c + b.radius * v / n)
            if self.d == 1:
                cands.append(c - b.radius * v / n)
        for i, a in enumerate(self.balls):
            for b in self.balls[i + 1 :]:
                ca, cb = np.asarray(a.center), np.asarray(b.center)
                L = np.linalg.norm(cb - ca)
                if L == 0 or L >= a.radius + b.radius or L <= abs(a.radius - b.radius) or self.d == 1:
                    continue
                u = (cb - ca) / L
                s = (L**2 + a.radius**2 - b.radius**2) / (2 * L)
                rho = np.sqrt(max(a.radius**2 - s**2, 0.0))
                m = ca + s * u
                w = (x - m) - np.dot(x - m, u) * u
                nw = np.linalg.norm(w)
                if nw == 0:
                    w = np.linalg.svd(u[None, :])[2][-1]
                    nw = 1.0
                cands.append(m + rho * w / nw)
        return cands

    def delta(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if not self.contains(x[None, :])[0]:
            return 0.0
        best = np.inf
        for p in self._candidates(x):
            # a candidate counts only if it is not interior to another ball
            inside_other = any(np.linalg.norm(p - np.asarray(b.center)) < b.radius * (1 - 1e-12) for b in self.balls)
            if not inside_other:
                best = min(best, float(np.linalg.norm(x - p)))
        return best

    def boundary_distance(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        inside = self.contains(X)
        out = np.empty(len(X))
        for j, x in enumerate(X):
            if inside[j]:
                out[j] = self.delta(x)
            else:
                out[j] = min(max(0.0, np.linalg.norm(x - np.asarray(b.center)) - b.radius) for b in self.balls)
        return out

    @property
    def diameter(self) -> float:
        best = 0.0
        for a in self.balls:
            for b in self.balls:
                best = max(best, np.linalg.norm(np.asarray(a.center) - np.asarray(b.center)) + a.radius + b.radius)
        return float(best)

    def is_symmetric(self) -> bool:
        return True


def interval(a: float = -1.0, b: float = 1.0) -> Ball:
    return Ball(((a + b) / 2,), (b - a) / 2)


def in_closure(domain, x) -> bool:
    x = np.asarray(x, dtype=float)
    return bool(domain.contains(x[None, :])[0] or domain.boundary_distance(x[None, :])[0] < 1e-14)


# -- configuration and jump law ----------------------------------------------------------


def tail_mass(model: ModelSpec, r) -> np.ndarray:
    """nu({|z| > r}) by quadrature in v = r/s over (0, 1]."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    ev = evaluator(model)
    d = model.d
    edges = np.concatenate([[0.0], np.geomspace(1e-30, 1.0, 121)])
    v, w = panel_nodes(edges, 12)
    v, w = v.ravel()[1 * 12 :], w.ravel()[1 * 12 :]
    s = r[:, None] / v[None, :]
    with np.errstate(under="ignore"):
        vals = ev.nu(s) * s ** (d - 1) * r[:, None] / v[None, :] ** 2
    return sphere_area(d) * vals @ w


@dataclass(frozen=True)
class PathConfig:
    eps: float
    dt: float
    n_paths: int
    seed: int
    substitute_gaussian: bool = True
    block_size: int = 32768

    def __post_init__(self):
        if not (self.eps > 0 and self.dt > 0 and self.n_paths > 0):
            raise ValueError("eps, dt and n_paths must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @classmethod
    def auto(cls, model: ModelSpec, dt: float = 1e-3, n_paths: int = 10**5, seed: int = 0, **kw) -> "PathConfig":
        """Smallest eps with nu(|z| > eps) dt <= 0.1."""
        lo, hi = 1e-12, 1.0
        while tail_mass(model, hi)[0] * dt > MAX_RATE_DT:
            hi *= 2
        for _ in range(80):
            mid = np.sqrt(lo * hi)
            if tail_mass(model, mid)[0] * dt > MAX_RATE_DT:
                lo = mid
            else:
                hi = mid
        return cls(eps=float(hi), dt=dt, n_paths=n_paths, seed=seed, **kw)

    def refined(self, factor: int = 4) -> "PathConfig":
        return PathConfig(self.eps / factor, self.dt / factor, self.n_paths, self.seed, self.substitute_gaussian, self.block_size)

    def with_seed(self, seed: int) -> "PathConfig":
        return PathConfig(self.eps, self.dt, self.n_paths, seed, self.substitute_gaussian, self.block_size)

    def with_paths(self, n_paths: int) -> "PathConfig":
        return PathConfig(self.eps, self.dt, n_paths, self.seed, self.substitute_gaussian, self.block_size)


class JumpLaw:
    """Big-jump rate, radial inverse CDF, and small-jump variance for cutoff eps."""

    def __init__(self, model: ModelSpec, eps: float):
        self.model = model
        self.d = model.d
        self.eps = eps
        self.rate = float(tail_mass(model, eps)[0])
        self.sigma2 = evaluator(model).second_moment(eps) / model.d
        r = eps * np.geomspace(1.0, 1e15, 601)
        T = tail_mass(model, r)
        keep = T > self.rate * 1e-18
        self._log_r = np.log(r[keep])[::-1]
        self._log_T = np.log(T[keep])[::-1]

    def radii(self, u: np.ndarray) -> np.ndarray:
        """Radius with tail mass u * rate, u in (0, 1]."""
        lt = np.log(u * self.rate)
        lr = np.interp(lt, self._log_T, self._log_r)
        # power-law continuation below the last tabulated tail mass
        lo = lt < self._log_T[0]
        if np.any(lo):
            slope = (self._log_r[1] - self._log_r[0]) / (self._log_T[1] - self._log_T[0])
            lr = np.where(lo, self._log_r[0] + slope * (lt - self._log_T[0]), lr)
        return np.exp(lr)

    def jumps(self, rng: np.random.Generator, n: int) -> np.ndarray:
        r = self.radii(1.0 - rng.random(n))
        if self.d == 1:
            return (r * np.where(rng.random(n) < 0.5, -1.0, 1.0))[:, None]
        g = rng.standard_normal((n, self.d))
        return r[:, None] * g / np.linalg.norm(g, axis=1, keepdims=True)


@lru_cache(maxsize=64)
def jump_law(model: ModelSpec, eps: float) -> JumpLaw:
    return JumpLaw(model, eps)


# -- simulation ----------------------------------------------------------------------------


@dataclass
class ExitSample:
    tau: np.ndarray
    exit_point: np.ndarray
    censored: np.ndarray
    by_gaussian: np.ndarray = None


@dataclass
class McEstimate:
    mean: object
    stderr: object
    n: int
    seed: int

    def z_to(self, other: "McEstimate") -> float:
        joint = np.sqrt(np.asarray(self.stderr) ** 2 + np.asarray(other.stderr) ** 2)
        return float(np.max(np.abs(np.asarray(self.mean) - np.asarray(other.mean)) / np.where(joint > 0, joint, np.inf)))


def mc_mean(values: np.ndarray, seed: int) -> McEstimate:
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    sd = v.std(axis=0, ddof=1) if n > 1 else np.zeros(v.shape[1:])
    mean = v.mean(axis=0)
    if np.ndim(mean) == 0:
        return McEstimate(float(mean), float(sd / np.sqrt(n)), n, seed)
    return McEstimate(mean, sd / np.sqrt(n), n, seed)


@dataclass
class PathSet:
    """Exit records of coupled paths started at ``starts`` (k, d)."""

    model: ModelSpec
    domain: object
    starts: np.ndarray
    signs: np.ndarray
    horizon: float
    cfg: PathConfig
    tau: np.ndarray
    exit_point: np.ndarray
    by_gaussian: np.ndarray

    @property
    def n(self) -> int:
        return self.tau.shape[1]

    def sample(self, i: int = 0) -> ExitSample:
        return ExitSample(self.tau[i], self.exit_point[i], ~np.isfinite(self.tau[i]), self.by_gaussian[i])

    def alive(self, i: int, t: float) -> np.ndarray:
        if t > self.horizon * (1 + 1e-12):
            raise ValueError("time beyond the simulated horizon")
        return (self.tau[i] > t).astype(float)

    def exit_contrib(self, i: int, t: float, y, table=None) -> np.ndarray:
        """Per-path 1{tau < t} p_{t - tau}(|X_tau - y|), with t - tau clamped below at dt."""
        if t > self.horizon * (1 + 1e-12):
            raise ValueError("time beyond the simulated horizon")
        y = np.asarray(y, dtype=float)
        out = np.zeros(self.n)
        hit = self.tau[i] < t
        if not np.any(hit):
            return out
        table = table if table is not None else path_kernel_table(self.model, self.cfg.dt, self.horizon)
        s = np.maximum(t - self.tau[i, hit], self.cfg.dt)
        r = np.linalg.norm(self.exit_point[i, hit] - y, axis=1)
        out[hit] = table(s, r)
        return out

    def pd_contrib(self, i: int, t: float, y, table=None) -> tuple[float, np.ndarray]:
        """(free part, per-path subtracted part) so that p_D = free - mean(part)."""
        y = np.asarray(y, dtype=float)
        free = density(self.model).p_scalar(t, float(np.linalg.norm(self.starts[i] - y)))
        return free, self.exit_contrib(i, t, y, table)


def path_kernel_table(model: ModelSpec, dt: float, horizon: float):
    t_max = float(2.0 ** np.ceil(np.log2(max(horizon, 1.0))))
    return kernel_table(model, float(dt), t_max)


def _check_start(domain, x):
    if not in_closure(domain, x):
        raise ValueError(f"start point {x} is not in the domain")


def simulate(model: ModelSpec, domain, starts, horizon: float, cfg: PathConfig, signs=None) -> PathSet:
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    k, d = starts.shape
    if d != model.d or d != domain.d:
        raise ValueError("dimension mismatch between model, domain and start points")
    signs = np.ones((k, d)) if signs is None else np.asarray(signs, dtype=float).reshape(k, d)
    if not np.all(np.abs(signs) == 1):
        raise ValueError("signs must be +-1")
    for x in starts:
        _check_start(domain, x)
    law = jump_law(model, cfg.eps)
    if law.rate * cfg.dt > MAX_RATE_DT * (1 + 1e-9):
        raise ValueError(f"big-jump rate {law.rate:.3g} too large for dt={cfg.dt}: rate*dt must be <= {MAX_RATE_DT}")
    sigma = np.sqrt(law.sigma2) if cfg.substitute_gaussian else 0.0
    n_steps = int(np.ceil(horizon / cfg.dt - 1e-9))
    n = cfg.n_paths
    tau = np.full((k, n), np.inf)
    exit_point = np.zeros((k, n, d))
    by_gauss = np.zeros((k, n), dtype=bool)
    start_inside = domain.contains(starts)
    for b0 in range(0, n, cfg.block_size):
        b = min(cfg.block_size, n - b0)
        block = b0 // cfg.block_size
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(cfg.seed), block])))
        sl = slice(b0, b0 + b)
        _simulate_block(domain, starts, signs, start_inside, law, sigma, cfg.dt, n_steps, b, rng, tau[:, sl], exit_point[:, sl], by_gauss[:, sl])
    return PathSet(model, domain, starts, signs, float(horizon), cfg, tau, exit_point, by_gauss)


def _simulate_block(domain, starts, signs, start_inside, law, sigma, dt, n_steps, b, rng, tau, exit_point, by_gauss):
    k, d = starts.shape
    L = np.zeros((b, d))
    alive = np.ones((k, b), dtype=bool)
    for i in range(k):
        if not start_inside[i]:
            # started on the boundary: exits at time 0
            alive[i] = False
            tau[i] = 0.0
            exit_point[i] = starts[i]
    idx = np.arange(b)

    def check(sub_idx, Lsub, time, gaussian):
        for i in range(k):
            a = alive[i, sub_idx]
            if not a.any():
                continue
            pos = starts[i] + signs[i] * Lsub
            out = a & ~domain.contains(pos)
            if out.any():
                rows = sub_idx[out]
                alive[i, rows] = False
                tau[i, rows] = time if np.ndim(time) == 0 else time[out]
                exit_point[i, rows] = pos[out]
                by_gauss[i, rows] = gaussian

    for step in range(n_steps):
        idx = idx[alive[:, idx].any(axis=0)]
        m = len(idx)
        if m == 0:
            break
        t0 = step * dt
        nj = rng.poisson(law.rate * dt, size=m)
        quiet = nj == 0
        q_idx = idx[quiet]
        if sigma > 0:
            L[q_idx] += sigma * np.sqrt(dt) * rng.standard_normal((len(q_idx), d))
        check(q_idx, L[q_idx], t0 + dt, True)
        j_idx = idx[~quiet]
        if len(j_idx):
            counts = nj[~quiet]
            times = np.sort(rng.random((len(j_idx), counts.max())), axis=1) * dt
            times[np.arange(counts.max())[None, :] >= counts[:, None]] = dt
            prev = np.zeros(len(j_idx))
            for j in range(counts.max()):
                act = counts > j
                rows = j_idx[act]
                gap = times[act, j] - prev[act]
                if sigma > 0:
                    L[rows] += sigma * np.sqrt(gap)[:, None] * rng.standard_normal((len(rows), d))
                L[rows] += law.jumps(rng, len(rows))
                check(rows, L[rows], t0 + times[act, j], False)
                prev[act] = times[act, j]
            if sigma > 0:
                L[j_idx] += sigma * np.sqrt(dt - prev)[:, None] * rng.standard_normal((len(j_idx), d))
            check(j_idx, L[j_idx], t0 + dt, True)


_PATH_CACHE: dict = {}
_PATH_CACHE_MAX = 48


def path_set(model: ModelSpec, domain, starts, horizon: float, cfg: PathConfig, signs=None) -> PathSet:
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    key = (model, domain, starts.tobytes(), None if signs is None else np.asarray(signs, dtype=float).tobytes(), float(horizon), cfg)
    if key not in _PATH_CACHE:
        if len(_PATH_CACHE) >= _PATH_CACHE_MAX:
            _PATH_CACHE.pop(next(iter(_PATH_CACHE)))
        _PATH_CACHE[key] = simulate(model, domain, starts, horizon, cfg, signs)
    return _PATH_CACHE[key]


# -- estimators ------------------------------------------------------------------------------


def sample_exit(model: ModelSpec, domain, x, horizon: float, cfg: PathConfig) -> ExitSample:
    return path_set(model, domain, [x], horizon, cfg).sample(0)


def estimate_survival(model: ModelSpec, domain, x, t: float, cfg: PathConfig, horizon: float | None = None) -> McEstimate:
    if t == 0:
        return McEstimate(1.0, 0.0, cfg.n_paths, cfg.seed)
    ps = path_set(model, domain, [x], max(t, horizon or 0.0), cfg)
    return mc_mean(ps.alive(0, t), cfg.seed)


@dataclass
class PdEstimate(McEstimate):
    flagged_negative: bool = False
    clamped_fraction: float = 0.0


def _pd_from_set(ps: PathSet, i: int, t: float, y) -> PdEstimate:
    free, part = ps.pd_contrib(i, t, y)
    est = mc_mean(free - part, ps.cfg.seed)
    hit = ps.tau[i] < t
    clamped = float(np.mean(hit & (t - ps.tau[i] < ps.cfg.dt)))
    return PdEstimate(est.mean, est.stderr, est.n, est.seed, bool(est.mean < -3 * est.stderr), clamped)


def estimate_pD(model: ModelSpec, domain, t: float, x, y, cfg: PathConfig, horizon: float | None = None) -> PdEstimate:
    if t <= 0:
        raise ValueError("t must be positive")
    if not (domain.contains(np.atleast_2d(x))[0] and domain.contains(np.atleast_2d(y))[0]):
        raise ValueError("x and y must lie in the domain")
    ps = path_set(model, domain, [x], max(t, horizon or 0.0), cfg)
    return _pd_from_set(ps, 0, t, y)


def gradient_starts(x, h: float) -> np.ndarray:
    """x followed by x +- h e_i and x +- 2h e_i for each coordinate."""
    x = np.asarray(x, dtype=float)
    d = len(x)
    pts = [x]
    for i in range(d):
        e = np.eye(d)[i]
        pts += [x + h * e, x - h * e, x + 2 * h * e, x - 2 * h * e]
    return np.array(pts)


def _grad_terms(ps: PathSet, t: float, y, h: float):
    """Per-path contributions of p_D at x and of each gradient component.

    Fourth-order centred differences: the second-order rule carries an
    O(h^2) bias comparable to the Monte Carlo error at h = delta/8.
    """
    d = ps.starts.shape[1]
    free0, part0 = ps.pd_contrib(0, t, y)
    pd_vals = free0 - part0
    grads = []
    for i in range(d):
        f = []
        for j in range(4):
            free, part = ps.pd_contrib(1 + 4 * i + j, t, y)
            f.append(free - part)
        grads.append((8 * (f[0] - f[1]) - (f[2] - f[3])) / (12 * h))
    return pd_vals, np.column_stack(grads)


def default_h(domain, x) -> float:
    return domain.delta(x) / 8.0


def estimate_grad_pD(model: ModelSpec, domain, t: float, x, y, cfg: PathConfig, h: float | None = None, horizon: float | None = None) -> McEstimate:
    """Centred differences with common random numbers; a vector estimate.

    All stencil points are driven by the same Levy path (translation coupling).
    """
    delta = domain.delta(x)
    h = delta / 8.0 if h is None else h
    if not 0 < h < delta / 4:
        raise ValueError("step h must satisfy 0 < h < delta(x)/4")
    ps = path_set(model, domain, gradient_starts(x, h), max(t, horizon or 0.0), cfg)
    _, g = _grad_terms(ps, t, y, h)
    return mc_mean(g, cfg.seed)


# -- eigenvalue ----------------------------------------------------------------------------


@dataclass
class Lambda1Result:
    value: float
    stderr: float
    doubled: float
    window: tuple
    doubled_window: tuple

    @property
    def window_shift(self) -> float:
        return abs(self.doubled - self.value) / self.value


def _decay_fit(tau: np.ndarray, ts: np.ndarray) -> tuple[float, float]:
    n = len(tau)
    S = np.array([np.mean(tau > t) for t in ts])
    if np.any(S <= 0):
        raise ValueError("no surviving paths in the fit window; increase n_paths")
    y = -np.log(S)
    w = n * S / (1 - S)  # inverse variance of log S
    X = np.column_stack([np.ones_like(ts), ts])
    W = np.diag(w)
    cov = np.linalg.inv(X.T @ W @ X)
    beta = cov @ X.T @ W @ y
    return float(beta[1]), float(np.sqrt(cov[1, 1]))


def estimate_lambda1_detail(model: ModelSpec, R: float, cfg: PathConfig, n_fit: int = 21) -> Lambda1Result:
    V2 = renewal(model).V(R) ** 2
    dom = Ball(tuple([0.0] * model.d), R)
    ps = path_set(model, dom, [np.zeros(model.d)], 5 * V2, cfg)
    win = (V2, 3 * V2)
    win2 = (V2, 5 * V2)
    lam, se = _decay_fit(ps.tau[0], np.linspace(*win, n_fit))
    lam2, _ = _decay_fit(ps.tau[0], np.linspace(*win2, n_fit))
    return Lambda1Result(lam, se, lam2, win, win2)


def estimate_lambda1(model: ModelSpec, R: float, cfg: PathConfig) -> float:
    return estimate_lambda1_detail(model, R, cfg).value


# -- kernel-level checks ------------------------------------------------------------------


def influence_ratio(parts: list) -> tuple[float, float]:
    """Ratio prod(mean_k ** e_k) with delta-method s.e.

    ``parts`` holds (values, exponent, group) where values are per-path
    arrays (or a (free, subtracted) pair meaning free - mean(subtracted));
    arrays in the same group share paths and are correlated.
    """
    log_val = 0.0
    groups: dict = {}
    for vals, e, g in parts:
        if isinstance(vals, tuple):
            free, sub = vals
            mean = free - sub.mean()
            infl = -(sub - sub.mean()) / mean
        else:
            mean = vals.mean()
            infl = (vals - mean) / mean
        log_val += e * np.log(abs(mean)) if mean != 0 else -np.inf
        groups[g] = groups.get(g, 0.0) + e * infl
    var = sum(np.var(v, ddof=1) / len(v) for v in groups.values())
    val = float(np.exp(log_val))
    return val, float(val * np.sqrt(var))


def hk_grid():
    xs = (0.0, 0.5, 0.95)
    ys = (0.0, -0.5, 0.95)
    ts = (0.05, 0.25, 1.0)
    return xs, ys, ts


def _axis_point(d, v):
    p = np.zeros(d)
    p[0] = v
    return p


def _band_with_ci(name, vals, ses, grid_id, **extra) -> RatioBand:
    vals = np.asarray(vals)
    ses = np.asarray(ses)
    band = RatioBand.from_values(name, vals, grid_id, **extra)
    i_min, i_max = int(np.argmin(vals)), int(np.argmax(vals))
    band.extra["ci_min"] = [float(vals[i_min] - 2 * ses[i_min]), float(vals[i_min] + 2 * ses[i_min])]
    band.extra["ci_max"] = [float(vals[i_max] - 2 * ses[i_max]), float(vals[i_max] + 2 * ses[i_max])]
    med = int(np.argsort(vals)[len(vals) // 2])
    band.extra["se_min"], band.extra["se_median"], band.extra["se_max"] = float(ses[i_min]), float(ses[med]), float(ses[i_max])
    band.extra["values"] = vals.tolist()
    band.extra["stderrs"] = ses.tolist()
    return band


def check_hk_kula2(model: ModelSpec, R: float = 1.0, grid=None, cfg: PathConfig | None = None) -> dict:
    """p_B / [P^x(tau > t/2) P^y(tau > t/2) p_{t ^ V^2(R)}(x - y)] over a (t, x, y) grid on B(0, R).

    Also returns the survival profile P^x(tau > t) / [e^{-lambda_1 t} (V(delta(x))/(sqrt t ^ V(R)) ^ 1)].
    """
    xs, ys, ts = hk_grid() if grid is None else grid
    d = model.d
    cfg = cfg or PathConfig.auto(model, n_paths=2 * 10**5)
    dom = Ball(tuple([0.0] * d), R)
    rf = renewal(model)
    V2R = rf.V(R) ** 2
    horizon = max(ts)
    pts = sorted({float(v) for v in xs} | {float(v) for v in ys})
    sets = {v: path_set(model, dom, [_axis_point(d, v * R)], horizon, cfg) for v in pts}
    rd = density(model)
    vals, ses, nodes = [], [], []
    for t in ts:
        for xv in xs:
            for yv in ys:
                x, y = _axis_point(d, xv * R), _axis_point(d, yv * R)
                free, part = sets[xv].pd_contrib(0, t, y)
                px = sets[xv].alive(0, t / 2)
                py = sets[yv].alive(0, t / 2)
                pfree = rd.p_scalar(min(t, V2R), float(np.linalg.norm(x - y)))
                # groups name the path set, so x = y shares one influence function
                parts = [((free, part), 1, xv), (px, -1, xv), (py, -1, yv)]
                val, se = influence_ratio(parts)
                vals.append(val / pfree)
                ses.append(se / pfree)
                nodes.append((t, xv, yv))
    band = _band_with_ci("hk_factorization", vals, ses, "hk_3x3x3", R=R, nodes=nodes)
    lam = estimate_lambda1(model, R, cfg.with_paths(min(cfg.n_paths, 10**5)))
    prof = []
    for t in ts:
        for v in pts:
            x = _axis_point(d, v * R)
            S = sets[v].alive(0, t).mean()
            shape = min(rf.V(dom.delta(x)) / min(np.sqrt(t), rf.V(R)), 1.0)
            prof.append(S / (np.exp(-lam * t) * shape))
    profile = RatioBand.from_values("survival_profile", prof, "hk_profile", R=R, lambda1=lam)
    return {"band": band, "profile": profile}


def reproducibility(b1: RatioBand, b2: RatioBand, k: float = 2.0) -> bool:
    """min, median and max agree within k joint standard errors."""
    ok = True
    for key, se in (("min", "se_min"), ("median", "se_median"), ("max", "se_max")):
        joint = np.hypot(b1.extra[se], b2.extra[se])
        ok &= abs(getattr(b1, key) - getattr(b2, key)) <= k * joint
    return bool(ok)


def main1_rate(model: ModelSpec, delta: float, t: float) -> float:
    """[1/(delta ^ 1) v psi^-(1/t)], with psi^-(1) for t >= 1."""
    ev = evaluator(model)
    return max(1.0 / min(delta, 1.0), ev.psi_inv(1.0 / min(t, 1.0)))


def specialized_rate(model: ModelSpec, delta: float, t: float) -> float:
    """Closed-form rates: 1/(delta ^ t^{1/alpha}) for stable, 1/(delta ^ t) for relativistic, t <= 1."""
    if model.family is Family.STABLE:
        return 1.0 / min(delta, t ** (1.0 / model.alpha))
    if model.family is Family.RELATIVISTIC:
        return 1.0 / min(delta, t)
    raise ValueError("no closed-form rate for this family")


def main1_grid(d: int):
    xs = (0.0, 0.5, 0.9)
    ys = (-0.5, 0.3)
    ts = (0.1, 0.5, 2.0)
    return xs, ys, ts


def check_main1(model: ModelSpec, domain=None, grid=None, cfg: PathConfig | None = None) -> RatioBand:
    """|grad_x p_D| / ([1/(delta ^ 1) v psi^-(1/t)] p_D) over the grid; max with a CI."""
    d = model.d
    domain = domain or Ball(tuple([0.0] * d), 1.0)
    xs, ys, ts = main1_grid(d) if grid is None else grid
    cfg = cfg or PathConfig.auto(model, n_paths=10**5)
    horizon = max(ts)
    vals, ses, nodes = [], [], []
    for xv in xs:
        x = _axis_point(d, xv) if np.ndim(xv) == 0 else np.asarray(xv, dtype=float)
        delta = domain.delta(x)
        h = delta / 8.0
        ps = path_set(model, domain, gradient_starts(x, h), horizon, cfg)
        for yv in ys:
            y = _axis_point(d, yv) if np.ndim(yv) == 0 else np.asarray(yv, dtype=float)
            for t in ts:
                pd, g = _grad_terms(ps, t, y, h)
                pd_m = pd.mean()
                gm = g.mean(axis=0)
                gn = float(np.linalg.norm(gm))
                # delta method for |g| / p_D on shared paths
                infl = (g - gm) @ (gm / gn) / gn - (pd - pd_m) / pd_m if gn > 0 else -(pd - pd_m) / pd_m
                rate = main1_rate(model, delta, t)
                val = gn / (rate * pd_m)
                vals.append(val)
                ses.append(abs(val) * float(np.std(infl, ddof=1) / np.sqrt(len(pd))))
                nodes.append((t, list(map(float, x)), list(map(float, y))))
    return _band_with_ci("main1", vals, ses, "main1_grid", nodes=nodes)


# -- Ikeda-Watanabe --------------------------------------------------------------------------


def line_tail(model: ModelSpec, u) -> np.ndarray:
    """int_u^inf nu(s) ds along a line (d = 1 mass of one side)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    ev = evaluator(model)
    edges = np.concatenate([[0.0], np.geomspace(1e-30, 1.0, 121)])
    v, w = panel_nodes(edges, 12)
    v, w = v.ravel()[12:], w.ravel()[12:]
    s = u[:, None] / v[None, :]
    with np.errstate(under="ignore"):
        vals = ev.nu(s) * u[:, None] / v[None, :] ** 2
    return vals @ w


def jump_into(model: ModelSpec, y: np.ndarray, B: tuple) -> np.ndarray:
    """nu-mass of the interval B = (b0, b1) seen from y < b0 or y > b1."""
    b0, b1 = B
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    right = y < b0
    left = y > b1
    if np.any(right):
        yr = y[right]
        out[right] = line_tail(model, b0 - yr) - (line_tail(model, b1 - yr) if np.isfinite(b1) else 0.0)
    if np.any(left):
        yl = y[left]
        out[left] = line_tail(model, yl - b1) - (line_tail(model, yl - b0) if np.isfinite(b0) else 0.0)
    return out


@dataclass
class IWResult:
    lhs: McEstimate
    rhs: McEstimate
    discrepancy: float
    combined_se: float
    boundary_mass: float
    gaussian_exit_fraction: float

    @property
    def z(self) -> float:
        return abs(self.discrepancy) / self.combined_se if self.combined_se > 0 else np.inf


def check_ikeda_watanabe(model: ModelSpec, domain=None, B=(1.0, 2.0), A=(0.0, 0.5), cfg: PathConfig | None = None, x=0.0,
                         n_s: int = 12, q_y: int = 8, shell: float = 1e-9) -> IWResult:
    """P^x(tau in A, X_tau in B) by exit histogram against int_A int_B h_D(x, s, z) dz ds by quadrature.

    One-dimensional balls only: y = c + R sin(theta) flattens the boundary
    behaviour of p_D against the singular jump kernel, and panels graded
    around x resolve p_D(s, x, .) at small s.
    """
    if model.d != 1:
        raise NotImplementedError("the quadrature side is implemented for d = 1")
    domain = domain or interval(-1.0, 1.0)
    if not isinstance(domain, Ball):
        raise NotImplementedError("the quadrature side is implemented for intervals")
    cfg = cfg or PathConfig.auto(model, n_paths=10**5)
    a0, a1 = A
    horizon = a1 if np.isfinite(a1) else 10.0
    x_arr = np.array([float(x)])
    # left side: independent stream
    lcfg = cfg.with_seed((int(cfg.seed) + 0x9E3779B97F4A7C15) % 2**64)
    ls = path_set(model, domain, [x_arr], horizon, lcfg)
    tau, ex = ls.tau[0], ls.exit_point[0, :, 0]
    in_B = (ex > B[0]) & (ex < B[1]) | ((ex < -B[0]) & (ex > -B[1]) if B[0] < 0 and False else False)
    ind = ((tau > a0) & (tau < a1) & in_B).astype(float)
    lhs = mc_mean(ind, lcfg.seed)
    exited = np.isfinite(tau)
    bmass = float(np.mean(exited & (domain.boundary_distance(ls.exit_point[0]) < shell)))
    gfrac = float(np.mean(ls.by_gaussian[0][exited])) if exited.any() else 0.0
    # right side
    rs = path_set(model, domain, [x_arr], horizon, cfg)
    c, R = domain.center[0], domain.radius
    s_nodes, s_w = panel_nodes(np.linspace(a0, min(a1, horizon), 2), n_s)
    s_nodes, s_w = s_nodes.ravel(), s_w.ravel()
    table = path_kernel_table(model, cfg.dt, horizon)
    rd = density(model)
    total_free = 0.0
    per_path = np.zeros(rs.n)
    for s, ws in zip(s_nodes, s_w):
        # y panels: geometric around x at scale s, mapped through y = c + R sin(theta)
        off = s * 2.0 ** np.arange(-4, 40)
        ys = np.concatenate([[c - R, c + R], x + off, x - off, [x]])
        ys = np.unique(np.clip(ys, c - R, c + R))
        th = np.arcsin((ys - c) / R)
        tn, tw = panel_nodes(th, q_y)
        tn, tw = tn.ravel(), tw.ravel()
        yn = c + R * np.sin(tn)
        wy = tw * R * np.cos(tn)
        kern = jump_into(model, yn, B)
        free = rd(s, np.abs(x - yn))
        total_free += ws * np.sum(wy * kern * free)
        hit = rs.tau[0] < s
        if np.any(hit):
            lag = np.maximum(s - rs.tau[0, hit], cfg.dt)
            dist = np.abs(rs.exit_point[0, hit, 0][:, None] - yn[None, :])
            vals = table(np.broadcast_to(lag[:, None], dist.shape), dist)
            per_path[hit] += ws * (vals @ (wy * kern))
    rhs = mc_mean(total_free - per_path, cfg.seed)
    disc = lhs.mean - rhs.mean
    return IWResult(lhs, rhs, float(disc), float(np.hypot(lhs.stderr, rhs.stderr)), bmass, gfrac)


# -- scale constants ---------------------------------------------------------------------------


@dataclass
class ConstantsReport:
    R: float
    C_lower: float
    C_tilde: float
    C: float
    C_star: float
    I: float
    grids: dict = field(default_factory=dict)

    def values(self) -> dict:
        return {"C_lower": self.C_lower, "C_tilde": self.C_tilde, "C": self.C, "C_star": self.C_star, "I": self.I}

    @property
    def all_positive(self) -> bool:
        return all(np.isfinite(v) and v > 0 for v in self.values().values())


def estimate_appendix_constants(model: ModelSpec, R: float) -> ConstantsReport:
    ev = evaluator(model)
    rf = renewal(model)
    rd = density(model)
    d = model.d
    a_lo, _ = ev.default_exponents()
    # C_lower: psi(y)/psi(x) (x/y)^a over y >= x >= 1/R
    xg = (1.0 / R) * np.geomspace(1.0, 1e3, 31)
    lam = np.geomspace(1.0, 1e3, 31)
    X, L = np.meshgrid(xg, lam, indexing="ij")
    c_lower = float(np.min(ev.psi(X * L) / ev.psi(X) * L ** (-a_lo)))
    # C_tilde: p_t(r) / (p_{t/2}(0) ^ t/(V^2(r) r^d)) over t <= V^2(R), r <= R
    ts = rf.V(R) ** 2 * np.geomspace(1e-3, 1.0, 7)
    rs = R * np.geomspace(1e-3, 1.0, 9)
    vals = []
    for t in ts:
        pt = rd(t, rs)
        vals.append(pt / np.minimum(rd.p0(t / 2), t / (rf.V(rs) ** 2 * rs**d)))
    c_tilde = float(np.min(vals))
    # C: 1 ^ inf p_t(r) V^2(r) r^d / t over t <= V^2(r), r <= R
    vals = []
    for r in rs:
        V2 = rf.V(r) ** 2
        for t in V2 * np.geomspace(1e-3, 1.0, 7):
            vals.append(rd.p_scalar(t, r) * V2 * r**d / t)
    c_mid = float(min(1.0, np.min(vals)))
    # C_star: nu(r) V^2(r) r^d over r <= R
    rr = R * np.geomspace(1e-4, 1.0, 41)
    c_star = float(np.min(ev.nu(rr) * rf.V(rr) ** 2 * rr**d))
    # I: nu(B_R minus B_rho) V^2(rho) over rho <= R/2
    rho = (R / 2) * np.geomspace(1e-4, 1.0, 21)
    shell = tail_mass(model, rho) - tail_mass(model, R)[0]
    i_r = float(np.min(shell * rf.V(rho) ** 2))
    grids = {
        "C_lower": "x in (1/R)[1,1e3] x lambda in [1,1e3], 31x31 log",
        "C_tilde": "t in V^2(R)[1e-3,1] (7 log), r in R[1e-3,1] (9 log)",
        "C": "r in R[1e-3,1] (9 log), t in V^2(r)[1e-3,1] (7 log)",
        "C_star": "r in R[1e-4,1] (41 log)",
        "I": "rho in (R/2)[1e-4,1] (21 log)",
    }
    return ConstantsReport(R, c_lower, c_tilde, c_mid, c_star, i_r, grids)

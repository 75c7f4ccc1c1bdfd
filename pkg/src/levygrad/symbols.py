"""Catalog of isotropic unimodal pure-jump models and their symbol evaluators.

Each family exposes the radial characteristic exponent ``psi``, the radial
Levy density ``nu`` with its derivative, the running-maximum envelope
``psi_star`` and its generalized inverse ``psi_inv``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import interpolate, special

from ._numerics import bessel_integral, one_minus_hyp0f1, panel_nodes, sphere_area


class Family(str, enum.Enum):
    STABLE = "Stable"
    RELATIVISTIC = "Relativistic"
    SUBORDINATE_BM = "SubordinateBM"
    TRUNC_STABLE_EXP = "TruncStableExp"


SLOWLY_VARYING_CHOICES = ("const",)


class ModelError(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    family: Family
    d: int = 1
    alpha: float = 1.0
    m: float = 1.0
    slowly_varying: str = "const"

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if int(self.d) != self.d or self.d < 1:
            raise ModelError(f"dimension must be a positive integer, got {self.d}")
        object.__setattr__(self, "d", int(self.d))
        if self.family is not Family.RELATIVISTIC and not (0.0 < self.alpha < 2.0):
            raise ModelError(f"alpha must lie in (0, 2), got {self.alpha}")
        if self.family is Family.RELATIVISTIC and not self.m > 0:
            raise ModelError(f"mass must be positive, got {self.m}")
        if self.slowly_varying not in SLOWLY_VARYING_CHOICES:
            raise ModelError(f"unknown slowly varying factor {self.slowly_varying!r}")

    @classmethod
    def stable(cls, alpha: float, d: int = 1) -> "ModelSpec":
        return cls(Family.STABLE, d=d, alpha=alpha)

    @classmethod
    def relativistic(cls, m: float = 1.0, d: int = 1) -> "ModelSpec":
        return cls(Family.RELATIVISTIC, d=d, m=m)

    @classmethod
    def subordinate_bm(cls, alpha: float, d: int = 1) -> "ModelSpec":
        return cls(Family.SUBORDINATE_BM, d=d, alpha=alpha)

    @classmethod
    def trunc_stable_exp(cls, alpha: float, d: int = 1) -> "ModelSpec":
        return cls(Family.TRUNC_STABLE_EXP, d=d, alpha=alpha)

    def label(self) -> str:
        if self.family is Family.RELATIVISTIC:
            return f"{self.family.value}(m={self.m:g},d={self.d})"
        return f"{self.family.value}(alpha={self.alpha:g},d={self.d})"

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "d": self.d,
            "alpha": self.alpha,
            "m": self.m,
            "slowly_varying": self.slowly_varying,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        allowed = {"family", "d", "alpha", "m", "slowly_varying"}
        unknown = set(data) - allowed
        if unknown:
            raise ModelError(f"unknown model fields: {sorted(unknown)}")
        if "family" not in data:
            raise ModelError("model family missing")
        kwargs = {k: data[k] for k in allowed if k in data}
        if "d" in kwargs:
            kwargs["d"] = int(kwargs["d"])
        for key in ("alpha", "m"):
            if key in kwargs:
                kwargs[key] = float(kwargs[key])
        return cls(**kwargs)


def stable_constant(d: int, alpha: float) -> float:
    """Normalizing constant of the isotropic alpha-stable Levy density (psi = |x|^alpha)."""
    return 2.0**alpha * special.gamma((d + alpha) / 2) / (np.pi ** (d / 2) * abs(special.gamma(-alpha / 2)))


def macdonald(s: float, r, scaled: bool = False) -> np.ndarray:
    """Modified Bessel function K_s(r) from its integral representation.

    K_s(r) = 2^{-1-s} r^s int_0^inf e^{-u} e^{-r^2/(4u)} u^{-1-s} du. With
    u = e^v centred at the saddle e^v = r/2 this becomes
    int_0^inf e^{-r cosh w} cosh(s w) dw, which the trapezoid rule resolves
    to machine precision. ``scaled`` returns e^r K_s(r).
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r <= 0):
        raise ValueError("Macdonald function needs r > 0")
    s = abs(s)
    # integrand decays once r (cosh w - 1) exceeds ~ 60 + s w
    w_max = np.where(r < 1.0, np.log(4.0 * (60.0 + 4.0 * s) / r) + 2.0, np.arccosh(1.0 + (80.0 + 4.0 * s) / r) + 1.0)
    w_max = np.maximum(w_max, 1.0)
    n = 600
    x = np.linspace(0.0, 1.0, n + 1)
    w = w_max[:, None] * x[None, :]
    expo = -r[:, None] * (np.cosh(w) - 1.0) + s * w
    vals = 0.5 * (np.exp(expo) + np.exp(-r[:, None] * (np.cosh(w) - 1.0) - s * w))
    vals[:, 0] *= 0.5
    vals[:, -1] *= 0.5
    out = vals.sum(axis=1) * (w_max / n)
    if not scaled:
        out = out * np.exp(-r)
    return out


@dataclass(frozen=True)
class LevyDensity:
    nu: object
    nu_prime: object
    tail_ratio_a: float


@dataclass
class ScalingCertificate:
    alpha_lower: float
    alpha_upper: float
    theta0: float
    C_lower: float
    C_upper: float
    grid_evidence: list = field(default_factory=list)


class SymbolEvaluator:
    """Evaluators for one model. Immutable after construction."""

    # psi table range for families without closed forms
    _TABLE_LO, _TABLE_HI, _TABLE_N = 1e-4, 1e3, 561

    def __init__(self, model: ModelSpec):
        self.model = model
        self.d = model.d
        fam = model.family
        self.monotone = fam is not Family.TRUNC_STABLE_EXP
        if fam is Family.TRUNC_STABLE_EXP:
            self._build_trunc_table()

    # -- characteristic exponent ------------------------------------------------
    def psi(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("psi needs r >= 0")
        fam, a = self.model.family, self.model.alpha
        if fam is Family.STABLE:
            return r**a
        if fam is Family.RELATIVISTIC:
            m = self.model.m
            # sqrt(r^2 + m^2) - m without cancellation
            return r * r / (np.sqrt(r * r + m * m) + m)
        if fam is Family.SUBORDINATE_BM:
            return r**a + r ** (a / 2)
        return np.exp(self.log_psi(r))

    def log_psi(self, r):
        """log psi(r); -inf at r = 0. Accepts arguments far outside float range of psi."""
        r = np.asarray(r, dtype=float)
        fam, a = self.model.family, self.model.alpha
        with np.errstate(divide="ignore"):
            lr = np.log(r)
        if fam is Family.STABLE:
            return a * lr
        if fam is Family.RELATIVISTIC:
            m = self.model.m
            big = r > 1e150
            rr = np.where(big, 1.0, r)
            with np.errstate(divide="ignore"):
                small_form = 2 * np.log(rr) - np.log(np.sqrt(rr * rr + m * m) + m)
            return np.where(big, lr + np.log1p(-m / np.where(big, r, np.inf)), small_form)
        if fam is Family.SUBORDINATE_BM:
            return np.logaddexp(a * lr, 0.5 * a * lr)
        return self._trunc_log_psi(r)

    def psi_direct(self, r: float) -> float:
        """Uncached psi evaluation (quadrature for the truncated family)."""
        if self.model.family is Family.TRUNC_STABLE_EXP:
            return self._trunc_psi_quad(float(r))
        return float(self.psi(r))

    # -- Levy density -------------------------------------------------------------
    def nu(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise ValueError("nu needs r > 0")
        d, a = self.d, self.model.alpha
        fam = self.model.family
        if fam is Family.STABLE:
            return stable_constant(d, a) * r ** (-d - a)
        if fam is Family.SUBORDINATE_BM:
            return stable_constant(d, a) * r ** (-d - a) + stable_constant(d, a / 2) * r ** (-d - a / 2)
        if fam is Family.TRUNC_STABLE_EXP:
            A = stable_constant(d, a)
            c1, c2 = A * np.exp(d + a), d + a
            return np.where(r <= 1.0, A * np.minimum(r, 1.0) ** (-d - a), c1 * np.exp(-c2 * np.maximum(r, 1.0)))
        m = self.model.m
        s = 0.5 * (d + 1)
        const = 2 ** ((1 - d) / 2) * np.pi ** ((-d - 1) / 2) * m**s
        shape = r.shape
        rf = r.ravel()
        k = macdonald(s, m * rf)
        return (const * rf ** (-s) * k).reshape(shape)

    def nu_prime(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r <= 0):
            raise ValueError("nu_prime needs r > 0")
        d, a = self.d, self.model.alpha
        fam = self.model.family
        if fam is Family.STABLE:
            return -(d + a) * self.nu(r) / r
        if fam is Family.SUBORDINATE_BM:
            return -(d + a) * stable_constant(d, a) * r ** (-d - a - 1) - (d + a / 2) * stable_constant(d, a / 2) * r ** (-d - a / 2 - 1)
        if fam is Family.TRUNC_STABLE_EXP:
            return np.where(r <= 1.0, -(d + a) * self.nu(r) / r, -(d + a) * self.nu(r))
        m = self.model.m
        s = 0.5 * (d + 1)
        const = 2 ** ((1 - d) / 2) * np.pi ** ((-d - 1) / 2) * m**s
        shape = r.shape
        rf = r.ravel()
        # d/dr [r^{-s} K_s(m r)] = -m r^{-s} K_{s+1}(m r)
        k1 = macdonald(s + 1, m * rf)
        return (-const * m * rf ** (-s) * k1).reshape(shape)

    def levy_density(self) -> LevyDensity:
        rr = np.linspace(1.0, 50.0, 491)
        ratio = self.nu(rr) / self.nu(rr + 1.0)
        return LevyDensity(self.nu, self.nu_prime, float(max(1.0, ratio.max())))

    def second_moment(self, eps: float) -> float:
        """int_{|x|<eps} |x|^2 nu(dx)."""
        edges = eps * np.concatenate([[0.0], np.geomspace(2.0**-60, 1.0, 61)])
        nodes, weights = panel_nodes(edges, 20)
        return float(sphere_area(self.d) * np.sum(weights * nodes ** (self.d + 1) * self.nu(nodes)))

    # -- envelope and inverse -------------------------------------------------------
    def psi_star(self, r):
        r = np.asarray(r, dtype=float)
        if self.monotone:
            return self.psi(r)
        # running maximum over the cached grid up to the last node below r, and the exact value at r
        idx = np.searchsorted(self._env_r, r, side="right") - 1
        left = np.where(idx >= 0, self._env_max[np.maximum(idx, 0)], 0.0)
        return np.maximum(left, self.psi(r))

    def psi_star_direct(self, r: float, rtol: float = 1e-9) -> float:
        """Uncached envelope: refine a grid on [0, r] until the running maximum settles."""
        if r <= 0:
            return 0.0
        val = float(self.psi(r))
        n = 64
        prev = None
        while n <= 2**16:
            grid = np.concatenate([np.linspace(0.0, r, n + 1)[1:], r * np.geomspace(1e-6, 1.0, n)])
            cur = max(val, float(np.max(self.psi(grid))))
            if prev is not None and abs(cur - prev) <= rtol * cur:
                return cur
            prev = cur
            n *= 2
        return prev

    def _build_envelope(self, lo: float, hi: float, rtol: float = 1e-9):
        n = 4096
        prev = None
        while True:
            grid = np.geomspace(lo, hi, n)
            env = np.maximum.accumulate(self.psi(grid))
            if prev is not None:
                # compare on the coarse nodes, which are every other fine node
                if np.max(np.abs(env[::2] - prev) / prev) < rtol or n > 2**20:
                    break
            prev = env
            n = 2 * n - 1
        self._env_r = grid
        self._env_max = env

    def psi_inv(self, u):
        """Generalized inverse inf{y >= 0 : psi_star(y) >= u}; +inf when unreachable."""
        u = np.asarray(u, dtype=float)
        flat = np.array([self._psi_inv_scalar(x) for x in u.ravel()])
        return flat.reshape(u.shape) if u.shape else float(flat[0])

    def _psi_inv_scalar(self, u: float) -> float:
        if u < 0:
            raise ValueError("psi_inv needs u >= 0")
        if u == 0:
            return 0.0
        fam = self.model.family
        if fam is Family.STABLE:
            return u ** (1.0 / self.model.alpha)
        if fam is Family.RELATIVISTIC:
            m = self.model.m
            return float(np.sqrt(u * (u + 2 * m)))
        lo, hi = 0.0, 1.0
        while float(self.psi_star(hi)) < u:
            lo, hi = hi, hi * 2.0
            if hi > 1e300:
                return np.inf
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if float(self.psi_star(mid)) >= u:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-15 * hi:
                break
        return hi

    # -- scaling ----------------------------------------------------------------------
    def default_exponents(self) -> tuple[float, float]:
        fam, a = self.model.family, self.model.alpha
        if fam is Family.RELATIVISTIC:
            return 1.0, 1.0
        return a, a

    # -- truncated stable with exponential tail -----------------------------------------
    def _trunc_consts(self):
        d, a = self.d, self.model.alpha
        A = stable_constant(d, a)
        return A, A * np.exp(d + a), float(d + a)

    def _trunc_psi_quad(self, rho: float) -> float:
        """psi by radial quadrature of the Levy-Khintchine integral."""
        if rho == 0:
            return 0.0
        d, a = self.d, self.model.alpha
        A, c1, c2 = self._trunc_consts()
        omega_d = sphere_area(d)
        nu_order = 0.5 * d - 1.0
        if rho <= 1.0:
            # direct form: both pieces have nonnegative integrands
            edges = np.concatenate([[0.0], np.geomspace(2.0**-60, 1.0, 61)])
            x, w = panel_nodes(edges, 20)
            inner = np.sum(w * A * x ** (-1 - a) * one_minus_hyp0f1(nu_order, rho * x))
            r_end = 1.0 + 45.0 / c2
            n_pan = max(16, int(8 * rho * (r_end - 1.0)) + 16)
            x, w = panel_nodes(np.linspace(1.0, r_end, n_pan + 1), 20)
            outer = np.sum(w * c1 * np.exp(-c2 * x) * x ** (d - 1) * one_minus_hyp0f1(nu_order, rho * x))
            return float(omega_d * (inner + outer))
        # rho^alpha plus a bounded correction from r > 1 where nu departs from the stable density
        mass = c1 * special.gammaincc(d, c2) * special.gamma(d) / c2**d - A / a
        pref = special.gamma(d / 2) * 2 ** (d / 2 - 1) * rho ** (1 - d / 2)

        def amp(r):
            return (c1 * np.exp(-c2 * r) - A * r ** (-d - a)) * r ** (d / 2)

        osc, err = bessel_integral(amp, nu_order, rho, a=1.0, b=np.inf, direct_limit=0, head_zeros=max(12, int(rho)), n_tail=64)
        if not np.isfinite(osc):
            raise QuadratureError(f"oscillatory quadrature failed at rho={rho}")
        return float(rho**a + omega_d * (mass - pref * osc))

    def _trunc_asymptote_consts(self):
        d, a = self.d, self.model.alpha
        A, c1, c2 = self._trunc_consts()
        omega_d = sphere_area(d)
        k_inf = omega_d * (c1 * special.gammaincc(d, c2) * special.gamma(d) / c2**d - A / a)
        # small-frequency quadratic coefficient: psi ~ rho^2 / (2 d) int |x|^2 nu(dx)
        m2 = self.second_moment(1.0) + omega_d * c1 * special.gammaincc(d + 2, c2) * special.gamma(d + 2) / c2 ** (d + 2)
        return k_inf, m2 / (2 * d)

    def _build_trunc_table(self):
        grid = np.geomspace(self._TABLE_LO, self._TABLE_HI, self._TABLE_N)
        vals = np.array([self._trunc_psi_quad(x) for x in grid])
        if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
            raise QuadratureError("psi table contains non-positive values")
        self._table_r = grid
        self._table_logpsi = np.log(vals)
        self._spline = interpolate.CubicSpline(np.log(grid), np.log(vals))
        self._k_inf, self._quad_coef = self._trunc_asymptote_consts()
        # match asymptotes to the table ends so the extension is continuous
        self._lo_scale = vals[0] / (self._quad_coef * grid[0] ** 2)
        a = self.model.alpha
        self._hi_shift = vals[-1] - (grid[-1] ** a + self._k_inf)
        self._build_envelope(self._TABLE_LO, self._TABLE_HI)

    def _trunc_log_psi(self, r):
        r = np.asarray(r, dtype=float)
        out = np.empty(r.shape)
        lo = r < self._TABLE_LO
        hi = r > self._TABLE_HI
        mid = ~(lo | hi)
        if np.any(mid):
            out[mid] = self._spline(np.log(r[mid]))
        if np.any(lo):
            with np.errstate(divide="ignore"):
                out[lo] = np.log(self._lo_scale * self._quad_coef) + 2 * np.log(r[lo])
        if np.any(hi):
            a = self.model.alpha
            rh = r[hi]
            # rho^alpha + K_inf + (decaying) shift, evaluated in log form
            tail = (self._k_inf + self._hi_shift * (self._TABLE_HI / rh) ** 2)
            out[hi] = a * np.log(rh) + np.log1p(tail * np.exp(-a * np.log(rh)))
        return out


@lru_cache(maxsize=64)
def evaluator(model: ModelSpec) -> SymbolEvaluator:
    return SymbolEvaluator(model)


# module-level operations ---------------------------------------------------------


def psi(model: ModelSpec, r):
    return evaluator(model).psi(r)


def nu(model: ModelSpec, r):
    return evaluator(model).nu(r)


def nu_prime(model: ModelSpec, r):
    return evaluator(model).nu_prime(r)


def psi_star(model: ModelSpec, r):
    return evaluator(model).psi_star(r)


def psi_inv(model: ModelSpec, u):
    return evaluator(model).psi_inv(u)


def levy_density(model: ModelSpec) -> LevyDensity:
    return evaluator(model).levy_density()


def scaling_grid(theta0: float, n_lambda: int = 25, n_theta: int = 25, lam_max: float = 100.0, theta_max: float = 100.0):
    """Default (lambda, theta) evidence grid, lambda in [1, lam_max], theta in [max(theta0, 1e-3), theta_max]."""
    lo = max(theta0, 1e-3)
    lams = np.geomspace(1.0, lam_max, n_lambda)
    thetas = np.geomspace(lo, max(theta_max, lo), n_theta)
    return [(float(lam), float(th)) for lam in lams for th in thetas]


def estimate_scaling(model: ModelSpec, theta0: float, grid=None, exponents: tuple[float, float] | None = None) -> ScalingCertificate:
    """Grid evidence for WLSC/WUSC with the family's exponents."""
    ev = evaluator(model)
    if grid is None:
        grid = scaling_grid(theta0)
    grid = list(grid)
    if not grid:
        raise ValueError("scaling grid is empty")
    lam = np.array([g[0] for g in grid], dtype=float)
    theta = np.array([g[1] for g in grid], dtype=float)
    if np.any(lam < 1) or np.any(theta < theta0):
        raise ValueError("grid must satisfy lambda >= 1 and theta >= theta0")
    a_lo, a_hi = exponents if exponents is not None else ev.default_exponents()
    base = ev.psi(theta)
    scaled = ev.psi(lam * theta)
    ratio_lo = scaled / (lam**a_lo * base)
    ratio_hi = scaled / (lam**a_hi * base)
    if not (np.all(np.isfinite(ratio_lo)) and np.all(np.isfinite(ratio_hi))):
        raise ValueError("non-finite scaling ratios on grid")
    evidence = [(float(l), float(t), float(q)) for l, t, q in zip(lam, theta, ratio_lo)]
    return ScalingCertificate(
        alpha_lower=float(a_lo),
        alpha_upper=float(a_hi),
        theta0=float(theta0),
        C_lower=float(ratio_lo.min()),
        C_upper=float(ratio_hi.max()),
        grid_evidence=evidence,
    )


def symbol_table(model: ModelSpec, r) -> dict:
    """Columns (r, psi, psi_star, nu) for CSV export."""
    ev = evaluator(model)
    r = np.asarray(r, dtype=float)
    return {"r": r, "psi": ev.psi(r), "psi_star": ev.psi_star(r), "nu": ev.nu(r)}

"""Quadrature and series-acceleration helpers shared by the evaluators."""
from __future__ import annotations

from fractions import Fraction
from functools import lru_cache
from math import factorial

import numpy as np
from scipy import special


def log_grid(lo: float, hi: float, n: int) -> np.ndarray:
    return np.geomspace(lo, hi, n)


@lru_cache(maxsize=None)
def gauss_legendre(q: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(q)
    return x, w


def panel_nodes(edges: np.ndarray, q: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on each panel [edges[i], edges[i+1]].

    Returns arrays of shape (n_panels, q).
    """
    x, w = gauss_legendre(q)
    a = edges[:-1, None]
    b = edges[1:, None]
    half = 0.5 * (b - a)
    nodes = a + half * (x[None, :] + 1.0)
    weights = half * w[None, :]
    return nodes, weights


def wynn_epsilon(partial_sums: np.ndarray) -> tuple[float, float]:
    """Wynn's epsilon algorithm on a sequence of partial sums.

    Each even column of the table gives an estimate. Columns deep in the
    table eventually lose precision to cancellation, so the estimate whose
    gap to the previous column is smallest is returned with that gap as
    the error indicator.
    """
    s = np.asarray(partial_sums, dtype=float)
    n = len(s)
    e_prev = np.zeros(n + 1)
    e_curr = s.copy()
    estimates = [s[-1]]
    for col in range(1, n):
        with np.errstate(invalid="ignore", over="ignore"):
            diff = e_curr[1:] - e_curr[:-1]
            inv = np.where(diff != 0, 1.0 / np.where(diff != 0, diff, 1.0), np.inf)
            e_next = e_prev[1 : len(e_curr)] + inv
        e_prev, e_curr = e_curr, e_next
        if len(e_curr) == 0:
            break
        if col % 2 == 0:
            if not np.isfinite(e_curr[-1]):
                break
            estimates.append(e_curr[-1])
    if len(estimates) == 1:
        return float(s[-1]), float(abs(s[-1] - s[-2]))
    est = np.array(estimates)
    gaps = np.abs(np.diff(est))
    k = int(np.argmin(gaps))
    return float(est[k + 1]), float(gaps[k])


@lru_cache(maxsize=None)
def stehfest_weights(n: int) -> np.ndarray:
    """Gaver-Stehfest coefficients, computed exactly then rounded."""
    if n % 2:
        raise ValueError("Stehfest order must be even")
    half = n // 2
    out = []
    for k in range(1, n + 1):
        acc = Fraction(0)
        for j in range((k + 1) // 2, min(k, half) + 1):
            acc += Fraction(
                j**half * factorial(2 * j),
                factorial(half - j) * factorial(j) * factorial(j - 1) * factorial(k - j) * factorial(2 * j - k),
            )
        out.append(float((-1) ** (k + half) * acc))
    return np.array(out)


@lru_cache(maxsize=None)
def tanh_sinh(h: float = 1.0 / 32, tmax: float = 4.5) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tanh-sinh rule on (0, 1).

    Returns (x, 1 - x, w) with both endpoint distances computed without
    cancellation, so integrands with endpoint singularities can be
    evaluated accurately.
    """
    tau = np.arange(-tmax, tmax + h / 2, h)
    s = 0.5 * np.pi * np.sinh(tau)
    x = 1.0 / (1.0 + np.exp(-2 * s))
    xc = 1.0 / (1.0 + np.exp(2 * s))
    # dx/dtau = (pi/2) cosh(tau) / (2 cosh^2 s)
    with np.errstate(over="ignore"):
        w = h * 0.5 * np.pi * np.cosh(tau) / (2.0 * np.cosh(s) ** 2)
    w = np.where(np.isfinite(w), w, 0.0)
    return x, xc, w


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere S^{d-1}."""
    return 2.0 * np.pi ** (d / 2) / special.gamma(d / 2)


def one_minus_hyp0f1(nu: float, u: np.ndarray) -> np.ndarray:
    """1 - Gamma(nu+1) (2/u)^nu J_nu(u), stable for small u."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    small = np.abs(u) < 0.5
    if np.any(small):
        z = -0.25 * u[small] ** 2
        term = np.ones_like(z)
        acc = np.zeros_like(z)
        for k in range(1, 14):
            term = term * z / (k * (nu + k))
            acc += term
        out[small] = -acc
    big = ~small
    if np.any(big):
        ub = u[big]
        out[big] = 1.0 - special.gamma(nu + 1) * (2.0 / ub) ** nu * special.jv(nu, ub)
    return out


def bessel_zero_range(nu: float, k_start: int, count: int) -> np.ndarray:
    """Zeros j_{nu,k} of J_nu for k = k_start, ..., k_start + count - 1."""
    k = np.arange(k_start, k_start + count, dtype=float)
    if nu == -0.5:
        return (k - 0.5) * np.pi
    if nu == 0.5:
        return k * np.pi
    mu = 4.0 * nu * nu
    beta = (k + 0.5 * nu - 0.25) * np.pi
    z = beta - (mu - 1) / (8 * beta) - 4 * (mu - 1) * (7 * mu - 31) / (3 * (8 * beta) ** 3)
    for _ in range(6):
        z = z - special.jv(nu, z) / special.jvp(nu, z)
    return z


def first_zero_index_above(nu: float, x: float) -> int:
    """Smallest k >= 1 with j_{nu,k} > x (approximately, then verified)."""
    k = max(1, int(np.floor(x / np.pi - 0.5 * nu + 0.25)) - 1)
    while True:
        z = bessel_zero_range(nu, k, 4)
        above = np.nonzero(z > x)[0]
        if len(above):
            return k + int(above[0])
        k += 4


def bessel_integral(
    amp,
    nu: float,
    omega: float,
    a: float = 0.0,
    b: float = np.inf,
    breaks: np.ndarray | None = None,
    q: int = 16,
    direct_limit: int = 4000,
    head_zeros: int = 12,
    n_tail: int = 48,
) -> tuple[float, float]:
    """Integral of amp(s) * J_nu(omega * s) over [a, b].

    The axis is split at the zeros of J_nu(omega s), merged with optional
    extra ``breaks`` that resolve non-oscillatory structure. When more
    than ``direct_limit`` zero intervals lie in [a, b] (or b is infinite)
    the tail is summed as an alternating series of per-interval integrals
    accelerated by Wynn's epsilon algorithm. Returns (value, error
    indicator).
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    k0 = first_zero_index_above(nu, omega * a)
    if np.isfinite(b):
        k_end = first_zero_index_above(nu, omega * b)
        n_inside = k_end - k0
    else:
        n_inside = np.inf
    extra = np.asarray(breaks if breaks is not None else [], dtype=float)

    def integrate(edges):
        nodes, weights = panel_nodes(edges, q)
        vals = amp(nodes) * special.jv(nu, omega * nodes)
        return np.sum(vals * weights, axis=1)

    if n_inside <= direct_limit:
        zeros = bessel_zero_range(nu, k0, int(n_inside)) / omega if n_inside > 0 else np.empty(0)
        edges = np.unique(np.concatenate([[a, b], zeros, extra[(extra > a) & (extra < b)]]))
        return float(np.sum(integrate(edges))), 0.0

    zeros = bessel_zero_range(nu, k0, head_zeros + 1) / omega
    head_end = zeros[head_zeros]
    edges = np.unique(np.concatenate([[a], zeros, extra[(extra > a) & (extra < head_end)]]))
    head = float(np.sum(integrate(edges)))
    kt = k0 + head_zeros
    tail_edges = bessel_zero_range(nu, kt, n_tail + 1) / omega
    terms = integrate(tail_edges)
    partial = head + np.cumsum(terms)
    return wynn_epsilon(partial[-(2 * (n_tail // 4) + 1):])

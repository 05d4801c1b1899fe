"""Reference prices independent of the neural pipeline.

Nothing here imports the network, LSM or pricing modules; the dense Monte
Carlo samples terminal lognormals directly instead of going through the
path simulator.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .errors import ContractViolation


@dataclass(frozen=True)
class OracleResult:
    price: float
    method: str
    discretization: str = ""
    error: float | None = None

    def __float__(self) -> float:
        return self.price


def binomial_put(
    s0: float, strike: float, r: float, delta: float, sigma: float, maturity: float,
    tree_steps: int, schedule: Sequence[float] | None = None,
) -> OracleResult:
    """Cox-Ross-Rubinstein put with early exercise.

    ``schedule=None`` allows exercise at every tree level (the continuous
    limit); otherwise only at the levels nearest the listed times, with the
    maturity always included.  The last tree step is replaced by the exact
    one-period European value, which removes the odd/even oscillation of the
    plain lattice and makes refinement converge monotonically.
    """
    if tree_steps < 1:
        raise ContractViolation("tree_steps must be >= 1")
    dt = maturity / tree_steps
    if schedule is None:
        exercise = np.ones(tree_steps + 1, dtype=bool)
        snap = 0.0
    else:
        exercise = np.zeros(tree_steps + 1, dtype=bool)
        times = np.asarray(schedule, dtype=float)
        levels = np.rint(times / dt).astype(int)
        snap = float(np.max(np.abs(levels * dt - times), initial=0.0))
        exercise[np.clip(levels, 0, tree_steps)] = True
    info = f"crr steps={tree_steps}" + (f" schedule={len(schedule)} dates snap={snap:.2e}" if schedule is not None else "")
    if sigma == 0.0:
        t = np.arange(tree_steps + 1) * dt
        gain = np.exp(-r * t) * np.maximum(strike - s0 * np.exp((r - delta) * t), 0.0)
        exercise[-1] = True
        return OracleResult(float(gain[exercise].max()), "binomial", info + " deterministic")
    u = np.exp(sigma * np.sqrt(dt))
    d = 1.0 / u
    p = (np.exp((r - delta) * dt) - d) / (u - d)
    if not 0.0 <= p <= 1.0:
        raise ContractViolation(f"risk-neutral probability {p} outside [0, 1]; refine the tree")
    disc = np.exp(-r * dt)

    def node_prices(i):
        return s0 * u ** (2 * np.arange(i + 1) - i)

    last = tree_steps - 1
    values = np.array([black_scholes(s, strike, r, delta, sigma, dt, call=False) for s in node_prices(last)])
    if exercise[last]:
        np.maximum(values, strike - node_prices(last), out=values)
    for i in range(last - 1, -1, -1):
        values = disc * (p * values[1:] + (1.0 - p) * values[:-1])
        if exercise[i]:
            np.maximum(values, strike - node_prices(i), out=values)
    return OracleResult(float(values[0]), "binomial", info)


def black_scholes(
    s0: float, strike: float, r: float, delta: float, sigma: float, maturity: float,
    call: bool = True,
) -> float:
    """European option on a dividend-paying lognormal asset."""
    if sigma < 0 or maturity < 0:
        raise ContractViolation("sigma and maturity must be non-negative")
    fwd_disc = s0 * np.exp(-delta * maturity)
    k_disc = strike * np.exp(-r * maturity)
    vol = sigma * np.sqrt(maturity)
    if vol == 0.0:
        payoff = fwd_disc - k_disc if call else k_disc - fwd_disc
        return float(max(payoff, 0.0))
    d1 = (np.log(fwd_disc / k_disc) + 0.5 * vol * vol) / vol
    d2 = d1 - vol
    if call:
        return float(fwd_disc * ndtr(d1) - k_disc * ndtr(d2))
    return float(k_disc * ndtr(-d2) - fwd_disc * ndtr(-d1))


def bivariate_normal_cdf(a: float, b: float, rho: float) -> float:
    """P(X <= a, Y <= b) for standard normals with correlation ``rho``.

    Adaptive quadrature of ``phi(x) * Phi((b - rho x) / sqrt(1 - rho^2))``
    over ``x <= a``; absolute accuracy ~1e-13.
    """
    if not -1.0 <= rho <= 1.0:
        raise ContractViolation("correlation must lie in [-1, 1]")
    if rho == 1.0:
        return float(ndtr(min(a, b)))
    if rho == -1.0:
        return float(max(0.0, ndtr(a) + ndtr(b) - 1.0))
    if rho == 0.0:
        return float(ndtr(a) * ndtr(b))
    s = np.sqrt((1.0 - rho) * (1.0 + rho))

    def f(x):
        return np.exp(-0.5 * x * x) / np.sqrt(2 * np.pi) * ndtr((b - rho * x) / s)

    lo = -40.0
    if a <= lo:
        return 0.0
    # split at 0 so the peak is never skipped by the adaptive rule
    pts = [p for p in (-8.0, 0.0, 8.0) if lo < p < a]
    val, _ = integrate.quad(f, lo, min(a, 40.0), points=pts or None, epsabs=1e-14, epsrel=1e-12, limit=200)
    return float(min(max(val, 0.0), 1.0))


def call_on_min_closed_form(
    s0x: float, s0y: float, strike: float, r: float, delta_x: float, delta_y: float,
    sigma_x: float, sigma_y: float, maturity: float, rho: float = 0.0,
) -> float:
    """European call on the minimum of two lognormal assets (Stulz)."""
    T = maturity
    if T <= 0:
        return max(min(s0x, s0y) - strike, 0.0)
    sq = np.sqrt(T)
    var = sigma_x ** 2 + sigma_y ** 2 - 2 * rho * sigma_x * sigma_y
    if sigma_x <= 0 or sigma_y <= 0 or var <= 0:
        raise ContractViolation("closed form needs positive volatilities and spread variance")
    sig = np.sqrt(var)
    if strike <= 0.0:
        # the strike leg vanishes and both threshold arguments go to +inf
        strike, y_inf = 0.0, True
    else:
        y_inf = False
    d = (np.log(s0x / s0y) + (delta_y - delta_x + 0.5 * var) * T) / (sig * sq)
    if y_inf:
        y1 = y2 = np.inf
    else:
        y1 = (np.log(s0x / strike) + (r - delta_x + 0.5 * sigma_x ** 2) * T) / (sigma_x * sq)
        y2 = (np.log(s0y / strike) + (r - delta_y + 0.5 * sigma_y ** 2) * T) / (sigma_y * sq)
    rho1 = (sigma_x - rho * sigma_y) / sig
    rho2 = (sigma_y - rho * sigma_x) / sig
    M = bivariate_normal_cdf
    return float(
        s0x * np.exp(-delta_x * T) * M(y1, -d, -rho1)
        + s0y * np.exp(-delta_y * T) * M(y2, d - sig * sq, -rho2)
        - (0.0 if y_inf else strike * np.exp(-r * T) * M(y1 - sigma_x * sq, y2 - sigma_y * sq, rho))
    )


def call_on_max_quadrature(
    s0: Sequence[float], strike: float, r: float, delta: Sequence[float],
    sigma: Sequence[float], maturity: float,
) -> float:
    """European call on the maximum of independent lognormals.

    Uses ``E[(max - K)^+] = int_K^inf (1 - prod_i F_i(x)) dx``.
    """
    s0, delta, sigma = (np.asarray(v, dtype=float) for v in (s0, delta, sigma))
    T = maturity
    mu = np.log(s0) + (r - delta - 0.5 * sigma ** 2) * T
    sd = sigma * np.sqrt(T)

    def tail(x):
        return 1.0 - np.prod(ndtr((np.log(x) - mu) / sd))

    hi = float(np.max(np.exp(mu + 12 * sd)))
    val, _ = integrate.quad(tail, strike, hi, epsabs=1e-12, epsrel=1e-11, limit=500)
    return float(np.exp(-r * T) * val)


def dense_mc_european(
    payoff: Callable[[np.ndarray], np.ndarray], r: float, delta: Sequence[float],
    sigma: Sequence[float], s0: Sequence[float], maturity: float, n_paths: int, seed: int,
    chunk: int = 1 << 18,
) -> OracleResult:
    """Discounted mean of ``payoff(S_T)`` over independent lognormal draws.

    ``payoff`` maps an ``(n, d)`` array of terminal prices to ``n`` values.
    """
    if n_paths < 2:
        raise ContractViolation("dense MC needs at least two paths")
    delta, sigma, s0 = (np.asarray(v, dtype=float) for v in (delta, sigma, s0))
    T = maturity
    drift = (r - delta - 0.5 * sigma ** 2) * T
    vol = sigma * np.sqrt(T)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_paths:
        n = min(chunk, n_paths - done)
        st = s0 * np.exp(drift + vol * rng.standard_normal((n, s0.size)))
        v = np.asarray(payoff(st), dtype=float)
        total += float(v.sum())
        total_sq += float(np.dot(v, v))
        done += n
    mean = total / n_paths
    var = max(total_sq / n_paths - mean * mean, 0.0) * n_paths / (n_paths - 1)
    if np.allclose(var, 0.0, atol=1e-300):
        var = 0.0
    df = np.exp(-r * T)
    return OracleResult(df * mean, "dense_mc", f"paths={n_paths}", df * np.sqrt(var / n_paths))


def extrapolate_dt_zero(points: Sequence[tuple[float, float]]) -> float:
    """Intercept of the least-squares line through ``(dt, price)`` points."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(np.unique(pts[:, 0])) < 2:
        raise ContractViolation("extrapolation needs at least two distinct dt values")
    x, y = pts[:, 0], pts[:, 1]
    xm = x.mean()
    slope = np.dot(x - xm, y - y.mean()) / np.dot(x - xm, x - xm)
    return float(y.mean() - slope * xm)

"""Self-contained numeric kernel.

Gaussian tail function, gamma-weighted quadrature, log-log regression and
1-D minimization.  Everything here is pure and reentrant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "QuadratureSpec",
    "LogLogFit",
    "QuadratureError",
    "q_function",
    "gamma_tail",
    "integrate_gamma_weighted",
    "fit_loglog",
    "minimize_1d",
    "bpsk_mrc_ser",
]

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)

# erf Taylor series is used below the switch point, the Laplace continued
# fraction for erfc above it.  Both are evaluated at fixed depth so the
# whole thing vectorizes.
_ERF_SWITCH = 2.5
_ERF_TERMS = 64
_CF_DEPTH = 96

# Coefficients of erf(z) = 2/sqrt(pi) * z * sum_n c_n (z^2)^n,
# c_n = (-1)^n / (n! (2n+1)), highest order first for polyval.
_ERF_COEF = np.array(
    [(-1.0) ** n / (math.factorial(n) * (2 * n + 1)) for n in range(_ERF_TERMS, -1, -1)]
)


class QuadratureError(RuntimeError):
    """Raised when the adaptive scheme cannot meet the requested tolerance."""

    def __init__(self, message: str, estimate: float, error_estimate: float):
        super().__init__(f"{message} (estimate={estimate!r}, error={error_estimate:.3e})")
        self.estimate = estimate
        self.error_estimate = error_estimate


def _erfc_nonneg(z: np.ndarray) -> np.ndarray:
    """erfc on z >= 0, absolute error below 1e-13 for z <= 6."""
    out = np.empty_like(z)
    small = z < _ERF_SWITCH
    if np.any(small):
        zs = z[small]
        series = np.polyval(_ERF_COEF, zs * zs)
        out[small] = 1.0 - 2.0 * _INV_SQRT_PI * zs * series
    if not np.all(small):
        zl = z[~small]
        f = zl.copy()
        for n in range(_CF_DEPTH, 0, -1):
            f = zl + (0.5 * n) / f
        with np.errstate(under="ignore"):
            out[~small] = np.exp(-zl * zl) * _INV_SQRT_PI / f
    return out


def _erfc_scalar_nonneg(z: float) -> float:
    if z < _ERF_SWITCH:
        u = z * z
        acc = 0.0
        for c in _ERF_COEF:
            acc = acc * u + c
        return 1.0 - 2.0 * _INV_SQRT_PI * z * acc
    f = z
    for n in range(_CF_DEPTH, 0, -1):
        f = z + (0.5 * n) / f
    return math.exp(-z * z) * _INV_SQRT_PI / f if z < 26.5 else 0.0


def q_function(x):
    """Gaussian tail probability P(N(0,1) > x).

    Accepts scalars or arrays; absolute error <= 1e-12 on [-8, 8] and
    graceful underflow to 0.0 for very large x.
    """
    if isinstance(x, (float, int)):
        if not math.isfinite(x):
            raise ValueError("q_function requires finite input")
        tail = 0.5 * _erfc_scalar_nonneg(abs(x) * _INV_SQRT2)
        return tail if x >= 0.0 else 1.0 - tail
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("q_function requires finite input")
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    tail = 0.5 * _erfc_nonneg(np.abs(arr) * _INV_SQRT2)
    res = np.where(arr >= 0.0, tail, 1.0 - tail)
    return float(res[0]) if scalar else res


def gamma_tail(t: int, x):
    """Regularized upper incomplete gamma Gamma(t, x)/Gamma(t) for integer
    t >= 1; vectorized in x."""
    if t < 1 or t != int(t):
        raise ValueError("t must be a positive integer")
    a = np.asarray(x, dtype=float)
    scalar = a.ndim == 0
    a = np.atleast_1d(a)
    pos = np.clip(a, 0.0, 700.0)
    term = np.ones_like(pos)
    acc = np.ones_like(pos)
    for k in range(1, int(t)):
        term = term * pos / k
        acc += term
    with np.errstate(under="ignore"):
        out = np.exp(-pos) * acc
    out = np.where(a <= 0.0, 1.0, np.where(a >= 700.0, 0.0, out))
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class QuadratureSpec:
    relative_tolerance: float = 1e-10
    max_subdivisions: int = 48

    def __post_init__(self):
        if not self.relative_tolerance > 0.0:
            raise ValueError("tolerance must be > 0")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


def _vectorized(g):
    """Return an array-capable version of g, probing with a tiny array."""
    try:
        probe = g(np.array([0.25, 0.5]))
        if np.asarray(probe).shape == (2,):
            return g
    except Exception:
        pass
    return np.vectorize(g, otypes=[float])


def _simpson_sum(xs, fx):
    h = (xs[-1] - xs[0]) / (len(xs) - 1)
    return h / 3.0 * (fx[0] + fx[-1] + 4.0 * fx[1:-1:2].sum() + 2.0 * fx[2:-1:2].sum())


def _integrate_panels(f, pairs, eps, max_doublings):
    """Doubling composite Simpson on every [a, b] panel, f batched across
    all panels still refining.  Returns (per-panel values, total error)."""
    xs_list, fx_list, s_prev = [], [], []
    all_x = np.concatenate([np.linspace(a, b, 5) for a, b in pairs])
    all_f = f(all_x)
    for i in range(len(pairs)):
        xs_list.append(all_x[5 * i : 5 * i + 5])
        fx_list.append(all_f[5 * i : 5 * i + 5])
        s_prev.append(_simpson_sum(xs_list[i], fx_list[i]))
    values = [None] * len(pairs)
    errors = [0.0] * len(pairs)
    active = list(range(len(pairs)))
    for _ in range(max_doublings):
        mids = [0.5 * (xs_list[i][:-1] + xs_list[i][1:]) for i in active]
        fmids = f(np.concatenate(mids))
        offset = 0
        still = []
        for i, m in zip(active, mids):
            fm = fmids[offset : offset + len(m)]
            offset += len(m)
            n = 2 * (len(xs_list[i]) - 1)
            xs = np.empty(n + 1)
            fx = np.empty(n + 1)
            xs[0::2], xs[1::2] = xs_list[i], m
            fx[0::2], fx[1::2] = fx_list[i], fm
            xs_list[i], fx_list[i] = xs, fx
            s = _simpson_sum(xs, fx)
            delta = s - s_prev[i]
            if abs(delta) <= 15.0 * eps:
                values[i] = s + delta / 15.0
                errors[i] = abs(delta) / 15.0
            else:
                s_prev[i] = s
                still.append(i)
        active = still
        if not active:
            break
    if active:
        raise QuadratureError(
            "adaptive quadrature did not converge",
            math.fsum(s_prev[i] if values[i] is None else values[i] for i in range(len(pairs))),
            math.inf,
        )
    return values, math.fsum(errors)


def integrate_gamma_weighted(
    g: Callable[[float], float],
    t: int,
    spec: QuadratureSpec = QuadratureSpec(),
    lower: float = 0.0,
) -> float:
    """Integral of g(x) x^{t-1} e^{-x} / Gamma(t) over [lower, infinity).

    g must be bounded; t is a positive integer.  The upper limit is truncated
    where the remaining gamma mass drops below a tenth of the tolerance, and
    the finite part is integrated by doubling composite Simpson on a
    geometric panel decomposition (robust to integrands concentrated near
    zero).  g may be scalar-only; array-capable callables are evaluated in
    batch.
    """
    if t < 1 or t != int(t):
        raise ValueError("t must be a positive integer")
    if lower < 0.0:
        raise ValueError("lower must be >= 0")
    t = int(t)
    rtol = spec.relative_tolerance
    log_gamma_t = math.lgamma(t)
    gv = _vectorized(g)

    def f(x: np.ndarray) -> np.ndarray:
        with np.errstate(under="ignore", divide="ignore"):
            if t == 1:
                w = np.exp(-x)
            else:
                w = np.zeros_like(x)
                pos = x > 0.0
                w[pos] = np.exp((t - 1) * np.log(x[pos]) - x[pos] - log_gamma_t)
        return np.asarray(gv(x), dtype=float) * w

    # Truncation point: remaining gamma tail below rtol/10.
    x_max = float(t) + 10.0
    while gamma_tail(t, x_max) > 0.1 * rtol:
        x_max *= 1.5
        if x_max > 1e4:
            raise QuadratureError("tail cutoff search failed", 0.0, math.inf)
    if x_max <= lower:
        # Everything beyond the cutoff: integrate a short stretch past lower.
        x_max = lower + 10.0 * t + 50.0

    # Geometric breakpoints so concentration at any scale is resolved.
    width = x_max - lower
    points = [lower] + [lower + width * 2.0 ** (-k) for k in range(52, -1, -1)]

    # Coarse scale estimate on the breakpoint grid.
    grid = np.asarray(points)
    vals = f(grid)
    scale = max(abs(float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(grid)))), 1e-300)

    max_doublings = min(spec.max_subdivisions, 18)
    pairs = list(zip(points[:-1], points[1:]))
    for _ in range(2):
        eps_panel = rtol * scale / len(points)
        total, err = _integrate_panels(f, pairs, eps_panel, max_doublings)
        result = math.fsum(total)
        if abs(result) >= 0.5 * scale:
            break
        scale = max(abs(result), 1e-300)
    if err > rtol * max(abs(result), 1e-300) * 10.0:
        raise QuadratureError("tolerance not met", result, err)
    return result


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    max_abs_residual: float
    p_range: tuple  # (P_min, P_max) in linear power

    def __post_init__(self):
        if not self.p_range[0] < self.p_range[1]:
            raise ValueError("P-range must be ascending")
        if self.max_abs_residual < 0.0:
            raise ValueError("residual must be >= 0")


def fit_loglog(points: Sequence) -> LogLogFit:
    """Least-squares line through (ln P, ln y).

    Diversity is read as -slope and array gain as exp(-intercept) when the
    data follow y = 1/(g P^d).
    """
    pts = list(points)
    if len(pts) < 2:
        raise ValueError("need at least 2 points")
    P = np.asarray([p for p, _ in pts], dtype=float)
    y = np.asarray([v for _, v in pts], dtype=float)
    if np.any(P <= 0.0) or np.any(y <= 0.0):
        raise ValueError("P and y must be positive")
    if np.any(np.diff(P) <= 0.0):
        raise ValueError("P must be strictly increasing")
    lx, ly = np.log(P), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return LogLogFit(
        slope=float(slope),
        intercept=float(intercept),
        max_abs_residual=float(np.max(np.abs(resid))),
        p_range=(float(P[0]), float(P[-1])),
    )


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def minimize_1d(f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10):
    """Golden-section search on [lo, hi]; returns (argmin, min)."""
    if not lo < hi:
        raise ValueError("invalid bracket: lo must be < hi")
    a, b = float(lo), float(hi)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def bpsk_mrc_ser(t: int, snr):
    """Closed-form average BPSK error rate with t-branch maximal-ratio
    combining over i.i.d. unit-power Rayleigh fading at the given linear SNR.

    Vectorized in snr.
    """
    if t < 1 or t != int(t):
        raise ValueError("t must be a positive integer")
    t = int(t)
    a = np.asarray(snr, dtype=float)
    scalar = a.ndim == 0
    a = np.atleast_1d(a)
    if np.any(a < 0.0):
        raise ValueError("snr must be >= 0")
    mu = np.sqrt(a / (1.0 + a))
    lo = 0.5 * (1.0 - mu)
    hi = 0.5 * (1.0 + mu)
    acc = np.zeros_like(a)
    for k in range(t):
        acc += math.comb(t - 1 + k, k) * hi**k
    res = lo**t * acc
    return float(res[0]) if scalar else res

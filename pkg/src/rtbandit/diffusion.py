"""Difference-based EZ-diffusion model of binary choices and response times.

A query ``x`` drives a Brownian motion with drift ``u = x @ theta_star`` that
starts at 0 and is absorbed at ``+a`` (choice +1) or ``-a`` (choice -1).  The
absorption time is the decision time; the response time adds a constant
non-decision time.

The decision-time sampler inverts the first-passage-time CDF numerically.  The
CDF is evaluated with the small-time (Gaussian image) expansion for
``t < 0.25 * (2a)**2`` and the large-time (Fourier) expansion otherwise; both
are truncated adaptively.  For symmetric barriers the hitting time does not
depend on which barrier is hit, so choice and decision time are drawn
independently.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_ndtr

__all__ = [
    "DiffusionParams",
    "QueryOutcome",
    "Moments",
    "utility_difference",
    "moments",
    "sample_outcome",
    "sample_outcomes",
    "sample_decision_time",
    "fpt_density",
    "fpt_cdf",
    "simulate_paths",
]

# |a*u| below this uses the exact u = 0 limits
ZERO_DRIFT_TOL = 1e-6
# |a*u| below this uses a Taylor series (error ~ (au)**8)
SERIES_TOL = 1e-2

# log of the relative size at which a series term is dropped
_LOG_TRUNC = 40.0
# small-time/large-time switch, in units of (2a)**2
_TAU_SWITCH = 0.25
# beyond this (units of (2a)**2) only the first Fourier term survives (rel. < 1e-13)
_TAU_TAIL = 0.8
# grid refinement targets: max CDF increment between nodes and max linear
# interpolation error of the CDF at interval midpoints
_MAX_DF = 1.0 / 4096
_INTERP_TOL = 1e-8
_CDF_EPS = 1e-15


def _as_vector(x, name):
    v = np.array(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector, got shape {v.shape}")
    return v


@dataclass(frozen=True, eq=False)
class DiffusionParams:
    """Ground-truth human model: preference vector, barrier and non-decision time."""

    theta_star: np.ndarray
    barrier_a: float
    t_nondec: float = 0.0

    def __post_init__(self):
        theta = _as_vector(self.theta_star, "theta_star")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta_star must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta_star", theta)
        a = float(self.barrier_a)
        t0 = float(self.t_nondec)
        if not (math.isfinite(a) and a > 0):
            raise ValueError(f"barrier_a must be positive, got {self.barrier_a}")
        if not (math.isfinite(t0) and t0 >= 0):
            raise ValueError(f"t_nondec must be non-negative, got {self.t_nondec}")
        object.__setattr__(self, "barrier_a", a)
        object.__setattr__(self, "t_nondec", t0)

    @property
    def dim(self) -> int:
        return self.theta_star.shape[0]

    def __eq__(self, other):
        if not isinstance(other, DiffusionParams):
            return NotImplemented
        return (
            np.array_equal(self.theta_star, other.theta_star)
            and self.barrier_a == other.barrier_a
            and self.t_nondec == other.t_nondec
        )

    def __hash__(self):
        return hash((self.theta_star.tobytes(), self.barrier_a, self.t_nondec))


@dataclass(frozen=True)
class QueryOutcome:
    choice: int
    decision_time: float
    response_time: float

    def __post_init__(self):
        if self.choice not in (-1, 1):
            raise ValueError(f"choice must be -1 or +1, got {self.choice}")
        if not self.decision_time > 0:
            raise ValueError("decision_time must be positive")


@dataclass(frozen=True)
class Moments:
    p_choice_pos: float
    mean_choice: float
    var_choice: float
    mean_time: float
    var_time: float


def utility_difference(x, params: DiffusionParams) -> float:
    """Return ``x @ theta_star``."""
    x = _as_vector(x, "x")
    if x.shape[0] != params.dim:
        raise ValueError(f"query has dimension {x.shape[0]}, expected {params.dim}")
    return float(x @ params.theta_star)


def _sech2(x):
    # 4 e^{-2|x|} / (1 + e^{-2|x|})^2, overflow free
    e = np.exp(-2.0 * np.abs(x))
    return 4.0 * e / (1.0 + e) ** 2


def moments(u: float, a: float) -> Moments:
    """Choice and decision-time moments for drift ``u`` and barrier ``a``.

    >>> m = moments(0.0, 1.0)
    >>> m.p_choice_pos, m.mean_time, m.var_time
    (0.5, 1.0, 0.6666666666666666)
    """
    u = float(u)
    a = float(a)
    if not math.isfinite(u):
        raise ValueError(f"utility difference must be finite, got {u}")
    if not (math.isfinite(a) and a > 0):
        raise ValueError(f"barrier a must be positive, got {a}")
    x = a * u
    mean_choice = math.tanh(x)
    var_choice = float(_sech2(x))
    p = float(expit(2.0 * x))
    ax = abs(x)
    if ax < ZERO_DRIFT_TOL:
        mean_time = a * a
        var_time = 2.0 * a**4 / 3.0
    elif ax < SERIES_TOL:
        x2 = x * x
        mean_time = a * a * (1.0 - x2 / 3.0 + 2.0 * x2**2 / 15.0 - 17.0 * x2**3 / 315.0)
        var_time = a**4 * (2.0 / 3.0 - 8.0 * x2 / 15.0 + 34.0 * x2**2 / 105.0)
    else:
        mean_time = a * mean_choice / u
        var_time = a * (mean_choice - x * var_choice) / u**3
    return Moments(p, mean_choice, var_choice, mean_time, var_time)


# --------------------------------------------------------------------------
# first-passage-time law for Brownian motion with drift u between -a and +a


def _log2cosh(x):
    x = abs(x)
    return x + math.log1p(math.exp(-2.0 * x))


def _large_time_terms(t_min, a):
    big_a = 2.0 * a
    kmax = math.sqrt(1.0 + 2.0 * big_a**2 * _LOG_TRUNC / (math.pi**2 * t_min))
    k = np.arange(1, int(kmax) + 2, 2, dtype=float)
    sign = np.where(((k - 1) // 2) % 2 == 0, 1.0, -1.0)
    return k, sign


def _small_time_terms(t_max, u, a):
    kmax = (math.sqrt(2.0 * t_max * _LOG_TRUNC) + abs(u) * t_max) / (4.0 * a)
    kk = int(math.ceil(kmax)) + 1
    return a * (1.0 + 4.0 * np.arange(-kk, kk + 1, dtype=float))


def _density_small(t, u, a):
    c = _small_time_terms(t.max(), u, a)[:, None]
    s = np.sum(c * np.exp(-(c**2) / (2.0 * t)), axis=0)
    return np.exp(_log2cosh(u * a) - 0.5 * u * u * t) * s / np.sqrt(2.0 * np.pi * t**3)


def _density_large(t, u, a):
    big_a = 2.0 * a
    k, sign = _large_time_terms(t.min(), a)
    k = k[:, None]
    s = np.sum((sign[:, None] * k) * np.exp(-(k**2) * np.pi**2 * t / (2 * big_a**2)), axis=0)
    return np.exp(_log2cosh(u * a) - 0.5 * u * u * t) * np.pi / big_a**2 * s


def _cdf_small(t, u, a):
    u = abs(u)
    c = _small_time_terms(t.max(), u, a)[:, None]
    ac = np.abs(c)
    sq = np.sqrt(t)
    lc = _log2cosh(u * a)
    g = np.exp(lc - u * ac + log_ndtr((u * t - ac) / sq)) + np.exp(
        lc + u * ac + log_ndtr(-(u * t + ac) / sq)
    )
    return np.sum(np.sign(c) * g, axis=0)


def _survival_large(t, u, a):
    big_a = 2.0 * a
    k, sign = _large_time_terms(t.min(), a)
    lam = 0.5 * u * u + k**2 * np.pi**2 / (2 * big_a**2)
    k = k[:, None]
    s = np.sum(
        (sign * k[:, 0] / lam)[:, None] * np.exp(-(k**2) * np.pi**2 * t / (2 * big_a**2)),
        axis=0,
    )
    return np.exp(_log2cosh(u * a) - 0.5 * u * u * t) * np.pi / big_a**2 * s


def _split(t, a):
    t = np.atleast_1d(np.asarray(t, dtype=float))
    small = t < _TAU_SWITCH * (2.0 * a) ** 2
    return t, small


def fpt_density(t, u: float, a: float) -> np.ndarray:
    """Density of the exit time of drifted Brownian motion from ``(-a, a)``.

    Returns an array shaped like ``t`` (0-d for scalar input).
    """
    shape = np.shape(t)
    t, small = _split(t, a)
    out = np.zeros_like(t)
    pos = t > 0
    if np.any(small & pos):
        out[small & pos] = _density_small(t[small & pos], u, a)
    if np.any(~small):
        out[~small] = _density_large(t[~small], u, a)
    return np.maximum(out, 0.0).reshape(shape)


def fpt_cdf(t, u: float, a: float) -> np.ndarray:
    """CDF of the exit time of drifted Brownian motion from ``(-a, a)``."""
    shape = np.shape(t)
    t, small = _split(t, a)
    out = np.zeros_like(t)
    pos = t > 0
    if np.any(small & pos):
        out[small & pos] = _cdf_small(t[small & pos], u, a)
    if np.any(~small):
        out[~small] = 1.0 - _survival_large(t[~small], u, a)
    return np.clip(out, 0.0, 1.0).reshape(shape)


def _fpt_survival(t, u, a):
    t, small = _split(t, a)
    out = np.empty_like(t)
    if np.any(small):
        out[small] = 1.0 - fpt_cdf(t[small], u, a)
    if np.any(~small):
        out[~small] = _survival_large(t[~small], u, a)
    return out


class _InverseCdf:
    """Tabulated inverse CDF of the exit time for one ``(|u|, a)`` pair."""

    def __init__(self, u, a):
        self.u = u
        self.a = a
        mean = moments(u, a).mean_time
        t_tail = _TAU_TAIL * (2.0 * a) ** 2
        t_lo = self._bisect_lo(mean)
        s_tail = float(_fpt_survival([t_tail], u, a)[0])
        if s_tail > _CDF_EPS:
            t_hi = t_tail
        else:
            t_hi = self._bisect_hi(mean, t_tail)
        self.t_hi = t_hi
        self.s_hi = float(_fpt_survival([t_hi], u, a)[0]) if t_hi == t_tail else 0.0
        self.rate = 0.5 * u * u + math.pi**2 / (2.0 * (2.0 * a) ** 2)

        grid = np.linspace(t_lo, t_hi, 257)
        cdf = fpt_cdf(grid, u, a)
        check = np.ones(grid.size - 1, dtype=bool)
        for _ in range(60):
            idx = np.flatnonzero(check)
            if idx.size == 0:
                break
            mids = 0.5 * (grid[idx] + grid[idx + 1])
            f_mid = fpt_cdf(mids, u, a)
            lin_err = np.abs(f_mid - 0.5 * (cdf[idx] + cdf[idx + 1]))
            bad = (lin_err > _INTERP_TOL) | (cdf[idx + 1] - cdf[idx] > _MAX_DF)
            check[idx[~bad]] = False
            split = idx[bad]
            grid = np.insert(grid, split + 1, mids[bad])
            cdf = np.insert(cdf, split + 1, f_mid[bad])
            # each split interval becomes two unchecked children
            check = np.insert(check, split + 1, True)
        cdf = np.maximum.accumulate(cdf)
        cdf[-1] = 1.0 - self.s_hi
        self.grid = grid
        self.cdf = cdf

    def _bisect_lo(self, mean):
        lo, hi = 0.0, mean
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if fpt_cdf([mid], self.u, self.a)[0] < _CDF_EPS:
                lo = mid
            else:
                hi = mid
        return lo if lo > 0 else hi * 1e-3

    def _bisect_hi(self, mean, t_tail):
        lo, hi = mean, t_tail
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if _fpt_survival([mid], self.u, self.a)[0] > _CDF_EPS:
                lo = mid
            else:
                hi = mid
        return hi

    def __call__(self, uniforms):
        q = np.asarray(uniforms, dtype=float)
        t = np.interp(q, self.cdf, self.grid)
        tail = q >= self.cdf[-1]
        if np.any(tail):
            if self.s_hi > 0:
                s = np.maximum(1.0 - q[tail], 1e-300)
                t[tail] = self.t_hi + np.log(self.s_hi / s) / self.rate
            else:
                t[tail] = self.t_hi
        return t


@functools.lru_cache(maxsize=1024)
def _inverse_cdf(abs_u: float, a: float) -> _InverseCdf:
    return _InverseCdf(abs_u, a)


def sample_decision_time(u: float, a: float, rng: np.random.Generator, size=None):
    """Draw decision time(s) for drift ``u`` and barrier ``a``.

    The inverse CDF is tabulated once per ``(|u|, a)`` on a grid refined until
    linear interpolation is accurate to about 1e-8 in probability; draws then
    cost one interpolation each.  Returns a float when ``size`` is None,
    otherwise an array of that shape.
    """
    u = float(u)
    a = float(a)
    if not (math.isfinite(a) and a > 0):
        raise ValueError(f"barrier a must be positive, got {a}")
    if not math.isfinite(u):
        raise ValueError(f"utility difference must be finite, got {u}")
    table = _inverse_cdf(abs(u), a)
    q = rng.random(size if size is not None else 1)
    t = table(np.ravel(q)).reshape(np.shape(q))
    if size is None:
        return float(t[0])
    return t


def sample_outcome(params: DiffusionParams, x, rng: np.random.Generator) -> QueryOutcome:
    """Simulate one human response to query ``x``."""
    u = utility_difference(x, params)
    a = params.barrier_a
    choice = 1 if rng.random() < moments(u, a).p_choice_pos else -1
    dt = sample_decision_time(u, a, rng)
    return QueryOutcome(choice, dt, params.t_nondec + dt)


def sample_outcomes(params: DiffusionParams, x, n: int, rng: np.random.Generator):
    """Vectorised ``sample_outcome``: ``n`` i.i.d. draws for one query.

    Returns ``(choices, decision_times, response_times)`` arrays.
    """
    u = utility_difference(x, params)
    a = params.barrier_a
    p = moments(u, a).p_choice_pos
    choices = np.where(rng.random(n) < p, 1, -1)
    dts = sample_decision_time(u, a, rng, size=n)
    return choices, dts, dts + params.t_nondec


def simulate_paths(
    u: float,
    a: float,
    n: int,
    rng: np.random.Generator,
    dt: float | None = None,
    bridge: bool = True,
    max_steps: int = 10_000_000,
):
    """Euler-Maruyama simulation of ``n`` diffusion paths until absorption.

    Used as an independent check on the series sampler.  With ``bridge``
    each step also tests the Brownian-bridge crossing probability
    ``exp(-2 (b - x0)(b - x1) / dt)`` so the discrete monitoring bias of
    order ``sqrt(dt)`` is removed.  Returns ``(choices, decision_times)``.
    """
    if dt is None:
        dt = 1e-3 * a * a
    x = np.zeros(n)
    alive = np.arange(n)
    times = np.empty(n)
    choices = np.zeros(n, dtype=int)
    sd = math.sqrt(dt)
    step = 0
    while alive.size and step < max_steps:
        step += 1
        x0 = x[alive]
        x1 = x0 + u * dt + sd * rng.standard_normal(alive.size)
        up = x1 >= a
        down = x1 <= -a
        if bridge:
            inside = ~(up | down)
            p_up = np.exp(-2.0 * (a - x0) * (a - x1) / dt)
            p_dn = np.exp(-2.0 * (a + x0) * (a + x1) / dt)
            r = rng.random(alive.size)
            up |= inside & (r < p_up)
            down |= inside & ~up & (r >= p_up) & (r < p_up + p_dn)
        done = up | down
        idx = alive[done]
        # crossing happened inside the step; midpoint keeps the bias O(dt**2)
        times[idx] = (step - 0.5) * dt
        choices[idx] = np.where(up[done], 1, -1)
        x[alive] = x1
        alive = alive[~done]
    if alive.size:
        raise RuntimeError(f"{alive.size} paths not absorbed after {max_steps} steps")
    return choices, times

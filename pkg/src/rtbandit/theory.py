"""Information weights and concentration bounds for the two estimator families.

``chdt`` refers to the choice/decision-time ratio estimator, ``ch`` to the
choice-only logistic estimator.  Asymptotic weights multiply ``x x^T`` in the
asymptotic variance; non-asymptotic weights set the exponential decay rate of
single-query tail bounds.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .diffusion import DiffusionParams, moments
from .estimation import DegenerateDesignError

__all__ = [
    "Kind",
    "Bound",
    "logistic_slope",
    "weight_asym",
    "weight_nonasym",
    "concentration_bound",
    "asymptotic_variance_bound",
    "weight_curves",
    "weight_curves_csv",
]

_CHDT_CONST = (2.0 + 2.0 * math.sqrt(2.0)) ** 2
_CH_CONST = 2.4**2
CH_EPS_MAX = math.sqrt(1.0 / 12.0)


class Kind(str, enum.Enum):
    CHDT = "chdt"
    CH = "ch"


@dataclass(frozen=True)
class Bound:
    bound: float
    valid: bool


def logistic_slope(y):
    """Derivative of the logistic function, ``mu(y) (1 - mu(y))``."""
    m = expit(y)
    return m * (1.0 - m)


def _check_a(a):
    if not a > 0:
        raise ValueError(f"barrier a must be positive, got {a}")


def weight_asym(kind, u: float, a: float) -> float:
    """Per-query weight in the asymptotic variance.

    >>> weight_asym("ch", 0.0, 1.0), weight_asym("chdt", 0.0, 1.0)
    (1.0, 1.0)
    """
    kind = Kind(kind)
    _check_a(a)
    if kind is Kind.CH:
        return float(4.0 * a * a * logistic_slope(2.0 * a * u))
    m = moments(u, a)
    et2 = m.mean_time**2
    denom = a * a * m.var_choice / et2 + a * a * m.mean_choice**2 * m.var_time / et2**2
    return 1.0 / denom


def weight_nonasym(kind, u: float, a: float) -> float:
    """Per-query rate constant of the single-query tail bound."""
    kind = Kind(kind)
    _check_a(a)
    if kind is Kind.CH:
        return float(4.0 * a * a * logistic_slope(2.0 * a * u) / _CH_CONST)
    if u == 0:
        raise ValueError("the choice/decision-time tail bound needs a non-zero utility difference")
    return moments(u, a).mean_time ** 2 / (_CHDT_CONST * a * a)


def ch_min_samples(u: float, a: float, eps: float) -> float:
    """Sample-size floor for the choice-only tail bound."""
    return max(2.4**2 * math.log(6.0 * math.e) / eps**2,
               64.0 * math.log(3.0) / (1.0 - 12.0 * eps**2)) / float(logistic_slope(2.0 * a * u))


def concentration_bound(kind, u: float, a: float, n: int, eps: float) -> Bound:
    """Upper bound on ``P(|estimate - target| > eps)`` for one query sampled ``n`` times.

    ``chdt`` targets ``u / a``; ``ch`` targets ``2 a u``.  ``valid`` is False
    when the bound's conditions on ``eps`` / ``n`` do not hold.  Bounds above 1
    are returned unchanged.
    """
    kind = Kind(kind)
    _check_a(a)
    if not eps > 0 or n < 1:
        return Bound(math.nan, False)
    if kind is Kind.CHDT:
        if u == 0:
            return Bound(math.nan, False)
        et = moments(u, a).mean_time
        eps_max = min(abs(u) / (math.sqrt(2.0) * a), (1.0 + math.sqrt(2.0)) * a * abs(u) / et)
        if eps > eps_max:
            return Bound(math.nan, False)
        m = weight_nonasym(kind, u, a)
        return Bound(4.0 * math.exp(-m * n * (eps * a) ** 2), True)
    if eps >= CH_EPS_MAX or n < ch_min_samples(u, a, eps):
        return Bound(math.nan, False)
    m = weight_nonasym(kind, u, a)
    return Bound(6.0 * math.exp(-m * n * (eps / (2.0 * a)) ** 2), True)


def asymptotic_variance_bound(y, queries, params: DiffusionParams) -> float:
    """Upper bound on the asymptotic variance of ``y @ theta_chdt`` (per unit sample).

    Uses the smallest asymptotic weight over ``queries`` as a common factor:
    ``|y|^2_{(M sum x x^T)^{-1}} / a^2``.
    """
    X = np.atleast_2d(np.asarray(queries, dtype=float))
    y = np.asarray(y, dtype=float)
    a = params.barrier_a
    gram = X.T @ X
    if np.linalg.matrix_rank(gram) < X.shape[1]:
        raise DegenerateDesignError("sum of x x^T is singular")
    u = X @ params.theta_star
    m_min = min(weight_asym(Kind.CHDT, float(ui), a) for ui in u)
    return float(y @ np.linalg.solve(m_min * gram, y)) / (a * a)


def weight_curves(u_grid=None, a_values=(0.5, 1.5)):
    """Rows ``(u, a, m_chdt_asym, m_ch_asym, sqrt_m_chdt_nonasym, sqrt_m_ch_nonasym)``.

    The non-asymptotic choice/decision-time weight is undefined at ``u = 0``
    and reported as its ``u -> 0`` limit ``a^2 / (2 + 2 sqrt 2)^2``.
    """
    if u_grid is None:
        u_grid = np.round(np.arange(-80, 81) * 0.05, 10)
    rows = []
    for a in a_values:
        for u in u_grid:
            u = float(u)
            chdt_na = weight_nonasym(Kind.CHDT, u, a) if u != 0 else a * a / _CHDT_CONST
            rows.append((u, float(a), weight_asym(Kind.CHDT, u, a), weight_asym(Kind.CH, u, a),
                         math.sqrt(chdt_na), math.sqrt(weight_nonasym(Kind.CH, u, a))))
    return rows


def weight_curves_csv(rows=None) -> str:
    rows = weight_curves() if rows is None else rows
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["u", "a", "m_chdt_asym", "m_ch_asym", "sqrt_m_chdt_nonasym", "sqrt_m_ch_nonasym"])
    for r in rows:
        w.writerow([f"{r[0]:.2f}", f"{r[1]:g}"] + [repr(v) for v in r[2:]])
    return buf.getvalue()

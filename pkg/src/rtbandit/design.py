"""Experimental designs over the query set.

A design is a probability vector ``lam`` over queries.  Both designs minimise
the worst-case variance proxy over surviving arm pairs::

    max_{z != z'} |z - z'|^2_{A(lam)^{-1}},   A(lam) = sum_x w_x lam_x x x^T

with unit weights (transductive) or ``w_x = mu'(x @ theta_ref)`` (hard-query).
The minimiser is found by Frank-Wolfe with step ``2 / (k + 2)`` started from
the uniform design.
"""
from __future__ import annotations

import enum
import functools
import itertools
from dataclasses import dataclass, field

import numpy as np

from .estimation import COND_MAX, RIDGE_SCALE
from .theory import logistic_slope

__all__ = [
    "DesignKind",
    "DesignWeights",
    "pair_differences",
    "design_objective",
    "hard_query_weights",
    "frank_wolfe",
    "compute_design",
]

WEIGHT_FLOOR = 1e-6
FW_RTOL = 1e-6


class DesignKind(str, enum.Enum):
    TRANSDUCTIVE = "transductive"
    HARD = "hard"


@dataclass(frozen=True, eq=False)
class DesignWeights:
    weights: np.ndarray
    objective: float = float("nan")
    # best objective found up to each iteration
    trajectory: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty vector")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be non-negative and sum to 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


def pair_differences(survivors):
    """Differences ``z_i - z_j`` for ``i < j`` (the objective is symmetric in the pair)."""
    Z = np.asarray(survivors, dtype=float)
    if Z.shape[0] < 2:
        raise ValueError("need at least two surviving arms")
    i, j = np.array(list(itertools.combinations(range(Z.shape[0]), 2))).T
    return Z[i] - Z[j]


def _gram(X, w_lam):
    gram = (X * w_lam[:, None]).T @ X
    if not np.linalg.cond(gram) < COND_MAX:
        lam = RIDGE_SCALE * np.trace(gram) / X.shape[1]
        if not (np.isfinite(lam) and lam > 0):
            return None
        gram = gram + lam * np.eye(X.shape[1])
    return gram


def _pair_values(Y, X, w_lam):
    """Quadratic forms for every pair and the solved directions ``A^{-1} y``."""
    gram = _gram(X, w_lam)
    if gram is None:
        return None, None
    V = np.linalg.solve(gram, Y.T)
    return np.einsum("pd,dp->p", Y, V), V


def design_objective(lam, survivors, queries, query_weights=None) -> float:
    """Worst-case ``|z - z'|^2`` in the inverse weighted design matrix; ``inf`` if degenerate."""
    X = np.asarray(queries, dtype=float)
    w = np.ones(X.shape[0]) if query_weights is None else np.asarray(query_weights, dtype=float)
    lam = np.asarray(getattr(lam, "weights", lam), dtype=float)
    vals, _ = _pair_values(pair_differences(survivors), X, w * lam)
    return float("inf") if vals is None else float(vals.max())


def hard_query_weights(queries, theta_ref):
    """``mu'(x @ theta_ref)`` floored at ``WEIGHT_FLOOR``."""
    z = np.asarray(queries, dtype=float) @ np.asarray(theta_ref, dtype=float)
    return np.maximum(logistic_slope(z), WEIGHT_FLOOR)


def frank_wolfe(Y, X, w, max_iter, rtol=FW_RTOL):
    """Minimise the max-pair objective over the simplex.

    The linear minimisation oracle uses the gradient of the currently active
    pair.  The objective is not smooth, so iterates can move uphill; the best
    iterate seen is returned together with the best-so-far trajectory.
    """
    m = X.shape[0]
    lam = np.full(m, 1.0 / m)
    best_lam, best_f = lam.copy(), np.inf
    traj = []
    prev = None
    for k in range(1, max_iter + 1):
        vals, V = _pair_values(Y, X, w * lam)
        if vals is None:
            break
        j = int(np.argmax(vals))
        f = float(vals[j])
        if f < best_f:
            best_f, best_lam = f, lam.copy()
        traj.append(best_f)
        if prev is not None and abs(prev - f) <= rtol * abs(prev):
            break
        prev = f
        # d f / d lam_x = -w_x (x^T A^{-1} y)^2 for the active pair y
        score = w * (X @ V[:, j]) ** 2
        i = int(np.argmax(score))
        gamma = 2.0 / (k + 2.0)
        lam *= 1.0 - gamma
        lam[i] += gamma
    return best_lam / best_lam.sum(), best_f, np.array(traj)


@functools.lru_cache(maxsize=4096)
def _cached_fw(y_bytes, x_bytes, w_bytes, shape_y, shape_x, max_iter, rtol):
    Y = np.frombuffer(y_bytes).reshape(shape_y)
    X = np.frombuffer(x_bytes).reshape(shape_x)
    w = np.frombuffer(w_bytes)
    return frank_wolfe(Y, X, w, max_iter, rtol)


def compute_design(kind, survivors, queries, theta_ref=None, max_iter=None, rtol=FW_RTOL,
                   cache=True) -> DesignWeights:
    """Frank-Wolfe design over ``queries`` for the surviving arms.

    ``max_iter`` defaults to ``max(200, 10 * len(queries))``.  Results are
    memoised on the exact input bytes, which makes repeated transductive
    designs in simulation loops free.
    """
    kind = DesignKind(kind)
    X = np.ascontiguousarray(queries, dtype=float)
    Y = np.ascontiguousarray(pair_differences(survivors))
    if kind is DesignKind.HARD:
        if theta_ref is None:
            raise ValueError("the hard-query design needs a reference estimate")
        w = hard_query_weights(X, theta_ref)
    else:
        w = np.ones(X.shape[0])
    if max_iter is None:
        max_iter = max(200, 10 * X.shape[0])
    if cache:
        lam, f, traj = _cached_fw(Y.tobytes(), X.tobytes(), np.ascontiguousarray(w).tobytes(),
                                  Y.shape, X.shape, int(max_iter), float(rtol))
    else:
        lam, f, traj = frank_wolfe(Y, X, w, int(max_iter), rtol)
    return DesignWeights(lam.copy(), f, traj.copy())

"""Utility estimators over per-query aggregated choices and decision times.

Every estimator here is a function of the per-query sufficient statistics
``(n, sum_choice, sum_decision_time, sum_response_time, n_pos)``, so datasets
store those rather than raw samples.  Estimators identify the preference
vector only up to a positive scale; ``UtilityEstimate.scale`` records which
one.
"""
from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit, logit


__all__ = [
    "Scale",
    "TimeSource",
    "QueryDataset",
    "UtilityEstimate",
    "DegenerateDesignError",
    "SolverError",
    "weighted_ols",
    "estimate_chdt",
    "estimate_ch_mle",
    "estimate_ch_logit",
    "estimate_chdt_logit",
    "estimate_single_chdt",
    "estimate_single_ch_logit",
    "clamp_probability",
    "save_dataset",
    "load_dataset",
]

COND_MAX = 1e12
RIDGE_SCALE = 1e-8
MLE_L2 = 1e-6
MLE_TOL = 1e-9
MLE_MAX_ITER = 100


class Scale(str, enum.Enum):
    THETA_OVER_A = "theta_over_a"
    TWO_A_THETA = "two_a_theta"
    THETA_UNIT = "theta_unit"


class TimeSource(str, enum.Enum):
    DECISION = "decision"
    RESPONSE = "response"


class DegenerateDesignError(ValueError):
    """The sampled queries do not span the feature space."""


class SolverError(RuntimeError):
    def __init__(self, message, last_iterate):
        super().__init__(message)
        self.last_iterate = last_iterate


@dataclass(frozen=True, eq=False)
class QueryDataset:
    """Per-query sufficient statistics; one row per distinct sampled query."""

    queries: np.ndarray
    n: np.ndarray
    sum_choice: np.ndarray
    sum_decision_time: np.ndarray
    sum_response_time: np.ndarray
    n_pos: np.ndarray

    def __post_init__(self):
        q = np.array(self.queries, dtype=float)
        if q.ndim != 2 or q.shape[0] == 0:
            raise ValueError("queries must be a non-empty (m, d) array")
        m = q.shape[0]
        n = np.asarray(self.n, dtype=np.int64).reshape(-1)
        sc = np.asarray(self.sum_choice, dtype=np.int64).reshape(-1)
        npos = np.asarray(self.n_pos, dtype=np.int64).reshape(-1)
        sdt = np.asarray(self.sum_decision_time, dtype=float).reshape(-1)
        srt = np.asarray(self.sum_response_time, dtype=float).reshape(-1)
        for name, arr in [("n", n), ("sum_choice", sc), ("n_pos", npos),
                          ("sum_decision_time", sdt), ("sum_response_time", srt)]:
            if arr.shape[0] != m:
                raise ValueError(f"{name} has {arr.shape[0]} entries, expected {m}")
        if np.any(n < 1):
            raise ValueError("every query needs n >= 1")
        if np.any(np.abs(sc) > n) or np.any(sc != 2 * npos - n):
            raise ValueError("sum_choice must equal 2 * n_pos - n")
        if np.any(sdt <= 0) or np.any(srt <= 0):
            raise ValueError("time sums must be positive")
        if np.unique(q, axis=0).shape[0] != m:
            raise ValueError("queries must be distinct")
        for name, arr in [("queries", q), ("n", n), ("sum_choice", sc), ("n_pos", npos),
                          ("sum_decision_time", sdt), ("sum_response_time", srt)]:
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.queries.shape[1]

    def __len__(self):
        return self.queries.shape[0]

    @classmethod
    def from_samples(cls, queries, query_index, choices, decision_times, response_times):
        """Aggregate raw samples; ``query_index`` picks a row of ``queries`` per sample.

        Rows that were never sampled are dropped; the remaining ones keep their
        original order.
        """
        queries = np.asarray(queries, dtype=float)
        idx = np.asarray(query_index, dtype=np.int64)
        c = np.asarray(choices, dtype=np.int64)
        m = queries.shape[0]
        n = np.bincount(idx, minlength=m)
        used = n > 0
        n_pos = np.bincount(idx, weights=(c > 0), minlength=m)
        sdt = np.bincount(idx, weights=decision_times, minlength=m)
        srt = np.bincount(idx, weights=response_times, minlength=m)
        n_pos = np.rint(n_pos).astype(np.int64)
        return cls(
            queries=queries[used],
            n=n[used],
            sum_choice=(2 * n_pos - n)[used],
            sum_decision_time=sdt[used],
            sum_response_time=srt[used],
            n_pos=n_pos[used],
        )

    @classmethod
    def from_outcomes(cls, pairs):
        """Build from an iterable of ``(query_vector, QueryOutcome)``."""
        rows: dict[bytes, int] = {}
        vectors = []
        idx, cs, dts, rts = [], [], [], []
        for x, out in pairs:
            x = np.asarray(x, dtype=float)
            key = x.tobytes()
            if key not in rows:
                rows[key] = len(vectors)
                vectors.append(x)
            idx.append(rows[key])
            cs.append(out.choice)
            dts.append(out.decision_time)
            rts.append(out.response_time)
        if not vectors:
            raise ValueError("no outcomes")
        return cls.from_samples(np.vstack(vectors), idx, cs, dts, rts)

    def p_hat(self):
        return self.n_pos / self.n

    def mean_choice(self):
        return self.sum_choice / self.n

    def mean_decision_time(self):
        return self.sum_decision_time / self.n


@dataclass(frozen=True, eq=False)
class UtilityEstimate:
    theta_hat: np.ndarray
    scale: Scale

    def utilities(self, arms):
        return np.asarray(arms, dtype=float) @ self.theta_hat


def weighted_ols(X, weights, y, ridge=True):
    """Solve ``(sum w x x^T) theta = sum w x y``.

    When the weighted Gram matrix has condition number above ``COND_MAX``, a
    ridge of ``RIDGE_SCALE * trace / d`` is added (if ``ridge``); a Gram matrix
    that is still singular raises ``DegenerateDesignError``.
    """
    X = np.asarray(X, dtype=float)
    w = np.asarray(weights, dtype=float)
    d = X.shape[1]
    gram = (X * w[:, None]).T @ X
    rhs = X.T @ (w * np.asarray(y, dtype=float))
    if not np.linalg.cond(gram) < COND_MAX:
        if not ridge:
            raise DegenerateDesignError(
                f"Gram matrix is singular (rank {np.linalg.matrix_rank(gram)} < {d})"
            )
        lam = RIDGE_SCALE * np.trace(gram) / d
        if not (np.isfinite(lam) and lam > 0):
            raise DegenerateDesignError("Gram matrix is zero; no informative query sampled")
        gram = gram + lam * np.eye(d)
    return np.linalg.solve(gram, rhs)


def estimate_chdt(data: QueryDataset, time_source="decision", ridge=True) -> UtilityEstimate:
    """Choice/decision-time estimate of ``theta* / a`` by least squares on ``sum c / sum t``."""
    source = TimeSource(time_source)
    times = data.sum_decision_time if source is TimeSource.DECISION else data.sum_response_time
    ratio = data.sum_choice / times
    theta = weighted_ols(data.queries, data.n, ratio, ridge=ridge)
    return UtilityEstimate(theta, Scale.THETA_OVER_A)


def _logistic_nll(X, n, n_pos, theta, l2):
    z = X @ theta
    # -log mu(z) = softplus(-z), -log mu(-z) = softplus(z)
    return float(
        np.sum(n_pos * np.logaddexp(0.0, -z) + (n - n_pos) * np.logaddexp(0.0, z))
        + l2 * theta @ theta
    )


def estimate_ch_mle(data: QueryDataset, l2=MLE_L2, tol=MLE_TOL, max_iter=MLE_MAX_ITER):
    """Choice-only logistic-regression MLE of ``2a theta*`` (damped Newton).

    The negative log-likelihood carries an ``l2 * |theta|^2`` penalty so that
    perfectly separated data still has a finite minimiser.
    """
    X = data.queries
    n = data.n.astype(float)
    n_pos = data.n_pos.astype(float)
    d = X.shape[1]
    theta = np.zeros(d)
    obj = _logistic_nll(X, n, n_pos, theta, l2)
    for _ in range(max_iter):
        mu = expit(X @ theta)
        grad = X.T @ (n * mu - n_pos) + 2.0 * l2 * theta
        gnorm = np.linalg.norm(grad)
        if gnorm < tol:
            return UtilityEstimate(theta, Scale.TWO_A_THETA)
        hess = (X * (n * mu * (1.0 - mu))[:, None]).T @ X + 2.0 * l2 * np.eye(d)
        step = np.linalg.solve(hess, grad)
        t = 1.0
        for _ in range(60):
            cand = theta - t * step
            new_obj = _logistic_nll(X, n, n_pos, cand, l2)
            if new_obj < obj:
                break
            t *= 0.5
        else:
            # no representable decrease left: the predicted Newton decrease is
            # below the rounding resolution of the objective
            if 0.5 * grad @ step <= 64.0 * np.finfo(float).eps * max(abs(obj), 1.0):
                return UtilityEstimate(theta, Scale.TWO_A_THETA)
            raise SolverError(f"line search failed (|grad| = {gnorm:.3g})", theta)
        theta, obj = cand, new_obj
    mu = expit(X @ theta)
    grad = X.T @ (n * mu - n_pos) + 2.0 * l2 * theta
    if np.linalg.norm(grad) < tol:
        return UtilityEstimate(theta, Scale.TWO_A_THETA)
    raise SolverError(f"Newton did not converge in {max_iter} iterations", theta)


def clamp_probability(p, n):
    """Move an empirical probability of exactly 0 or 1 to ``1/(2n)`` or ``1 - 1/(2n)``.

    >>> clamp_probability(1.0, 5), clamp_probability(0.0, 10), clamp_probability(0.6, 7)
    (0.9, 0.05, 0.6)
    """
    p_arr = np.asarray(p, dtype=float)
    n_arr = np.asarray(n, dtype=float)
    if np.any((p_arr < 0) | (p_arr > 1)) or np.any(n_arr < 1):
        raise ValueError("need p in [0, 1] and n >= 1")
    out = np.where(p_arr >= 1.0, 1.0 - 1.0 / (2.0 * n_arr),
                   np.where(p_arr <= 0.0, 1.0 / (2.0 * n_arr), p_arr))
    if out.ndim == 0:
        return float(out)
    return out


def _clamped_logits(data):
    return logit(clamp_probability(data.p_hat(), data.n))


def estimate_ch_logit(data: QueryDataset, ridge=True) -> UtilityEstimate:
    """Least squares on per-query clamped logits; estimates ``2a theta*``."""
    theta = weighted_ols(data.queries, data.n, _clamped_logits(data), ridge=ridge)
    return UtilityEstimate(theta, Scale.TWO_A_THETA)


def chdt_logit_targets(data: QueryDataset):
    """Per-query ``sgn(C) * sqrt(max(0, (C / T) * logit(p) / 2))`` with empirical C, T, p."""
    c_bar = data.mean_choice()
    t_bar = data.mean_decision_time()
    inner = (c_bar / t_bar) * 0.5 * _clamped_logits(data)
    return np.sign(c_bar) * np.sqrt(np.maximum(inner, 0.0))


def estimate_chdt_logit(data: QueryDataset, ridge=True) -> UtilityEstimate:
    """Least squares on square-root combined targets; estimates ``theta*`` itself."""
    theta = weighted_ols(data.queries, data.n, chdt_logit_targets(data), ridge=ridge)
    return UtilityEstimate(theta, Scale.THETA_UNIT)


def estimate_single_chdt(n: int, sum_choice: int, sum_time: float) -> float:
    """``sum_choice / sum_time``, an estimate of ``u_x / a`` for one query.

    >>> round(estimate_single_chdt(3, 1, 2.1), 6)
    0.47619
    """
    if n < 1 or not sum_time > 0:
        raise ValueError("need n >= 1 and sum_time > 0")
    if abs(sum_choice) > n:
        raise ValueError("|sum_choice| cannot exceed n")
    return sum_choice / sum_time


def estimate_single_ch_logit(n: int, n_pos: int) -> float:
    """Clamped logit of the empirical choice frequency; estimates ``2a u_x``."""
    if n < 1 or not 0 <= n_pos <= n:
        raise ValueError("need n >= 1 and 0 <= n_pos <= n")
    return float(logit(clamp_probability(n_pos / n, n)))


# -- CSV + JSON sidecar -------------------------------------------------------

_CSV_COLUMNS = ["query_id", "n", "sum_choice", "sum_decision_time", "sum_response_time", "n_pos"]


def save_dataset(data: QueryDataset, csv_path, features_path=None):
    """Write the statistics CSV and a JSON sidecar mapping query_id to features.

    The sidecar defaults to ``<csv stem>.features.json`` next to the CSV.
    """
    csv_path = Path(csv_path)
    features_path = Path(features_path) if features_path else csv_path.with_suffix(".features.json")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_CSV_COLUMNS)
        for i in range(len(data)):
            w.writerow([
                i, int(data.n[i]), int(data.sum_choice[i]),
                repr(float(data.sum_decision_time[i])), repr(float(data.sum_response_time[i])),
                int(data.n_pos[i]),
            ])
    features = {str(i): [float(v) for v in data.queries[i]] for i in range(len(data))}
    with open(features_path, "w") as fh:
        json.dump(features, fh, indent=1)
    return csv_path, features_path


def load_dataset(csv_path, features_path=None) -> QueryDataset:
    csv_path = Path(csv_path)
    features_path = Path(features_path) if features_path else csv_path.with_suffix(".features.json")
    with open(features_path) as fh:
        features = json.load(fh)
    cols = {k: [] for k in _CSV_COLUMNS}
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(_CSV_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{csv_path}: missing columns {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            try:
                for k in _CSV_COLUMNS:
                    cols[k].append(row[k] if k == "query_id" else float(row[k]))
            except ValueError as exc:
                raise ValueError(f"{csv_path}:{line}: {exc}") from None
    try:
        queries = [features[qid] for qid in cols["query_id"]]
    except KeyError as exc:
        raise ValueError(f"{features_path}: no features for query_id {exc}") from None
    as_int = lambda v: np.array([int(round(x)) if math.isfinite(x) else -1 for x in v])  # noqa: E731
    return QueryDataset(
        queries=np.array(queries, dtype=float),
        n=as_int(cols["n"]),
        sum_choice=as_int(cols["sum_choice"]),
        sum_decision_time=np.array(cols["sum_decision_time"]),
        sum_response_time=np.array(cols["sum_response_time"]),
        n_pos=as_int(cols["n_pos"]),
    )

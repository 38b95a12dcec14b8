"""Generalized Successive Elimination under a response-time budget.

The budget ``B`` is split evenly over ``S = ceil(log_eta |Z|)`` phases, each
reserving ``buffer`` seconds, so phase ``s`` may spend ``B_s = B / S - buffer``.
A phase samples queries i.i.d. from its design until the cumulative response
time first exceeds ``B_s``; that last (overshooting) sample is kept.  The
phase's samples alone are used to estimate the preference vector, and the
top ``ceil(|Z_s| / eta)`` surviving arms move on.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .design import DesignKind, compute_design
from .diffusion import DiffusionParams, QueryOutcome, sample_outcome
from .estimation import (
    DegenerateDesignError,
    QueryDataset,
    SolverError,
    UtilityEstimate,
    estimate_ch_logit,
    estimate_ch_mle,
    estimate_chdt,
    estimate_chdt_logit,
)
from .instances import BanditInstance

__all__ = [
    "EstimatorKind",
    "GseConfig",
    "PhaseRecord",
    "RunResult",
    "Feedback",
    "DiffusionFeedback",
    "SignFeedback",
    "BudgetExhaustedError",
    "PhaseError",
    "n_phases",
    "eliminate",
    "estimate",
    "run_gse",
]

DEFAULT_A_PRIOR = 1.5


class EstimatorKind(str, enum.Enum):
    CHDT = "chdt"
    CHDT_RT = "chdt_rt"
    CH_MLE = "ch_mle"
    CH_LOGIT = "ch_logit"
    CHDT_LOGIT = "chdt_logit"


class BudgetExhaustedError(RuntimeError):
    """A phase could not afford a single query."""


class PhaseError(RuntimeError):
    """Estimation failed inside a phase."""

    def __init__(self, phase, cause):
        super().__init__(f"phase {phase}: {cause}")
        self.phase = phase
        self.cause = cause


@dataclass(frozen=True)
class GseConfig:
    budget: float
    eta: int = 2
    design: DesignKind = DesignKind.TRANSDUCTIVE
    estimator: EstimatorKind = EstimatorKind.CHDT
    # None -> a_prior**2 + t_nondec
    buffer: float | None = None
    a_prior: float = DEFAULT_A_PRIOR

    def __post_init__(self):
        object.__setattr__(self, "design", DesignKind(self.design))
        object.__setattr__(self, "estimator", EstimatorKind(self.estimator))
        if not self.budget > 0:
            raise ValueError("budget must be positive")
        if int(self.eta) != self.eta or self.eta < 2:
            raise ValueError("eta must be an integer >= 2")
        if self.buffer is not None and self.buffer < 0:
            raise ValueError("buffer must be non-negative")

    def buffer_for(self, t_nondec: float) -> float:
        if self.buffer is not None:
            return float(self.buffer)
        return self.a_prior**2 + t_nondec


@dataclass(frozen=True, eq=False)
class PhaseRecord:
    index: int
    episodes: int
    time_used: float
    phase_budget: float
    survivors: tuple
    kept: tuple
    theta_hat: np.ndarray


@dataclass(frozen=True, eq=False)
class RunResult:
    recommended_arm: int
    phases: list = field(default_factory=list)
    total_time: float = 0.0
    total_episodes: int = 0

    def to_dict(self):
        return {
            "recommended_arm": self.recommended_arm,
            "total_time": self.total_time,
            "total_episodes": self.total_episodes,
            "phases": [
                {
                    "index": p.index,
                    "episodes": p.episodes,
                    "time_used": p.time_used,
                    "phase_budget": p.phase_budget,
                    "survivors": list(p.survivors),
                    "kept": list(p.kept),
                    "theta_hat": [float(v) for v in p.theta_hat],
                }
                for p in self.phases
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


class Feedback(Protocol):
    def __call__(self, x: np.ndarray, rng: np.random.Generator) -> QueryOutcome: ...


class DiffusionFeedback:
    """Simulated human answering with the diffusion model."""

    def __init__(self, params: DiffusionParams):
        self.params = params

    def __call__(self, x, rng):
        return sample_outcome(self.params, x, rng)


class SignFeedback:
    """Noiseless mock: always picks the better option after a fixed decision time."""

    def __init__(self, params: DiffusionParams, decision_time=0.1):
        self.params = params
        self.decision_time = decision_time

    def __call__(self, x, rng):
        u = float(np.asarray(x) @ self.params.theta_star)
        choice = 1 if u >= 0 else -1
        return QueryOutcome(choice, self.decision_time, self.params.t_nondec + self.decision_time)


def n_phases(n_arms: int, eta: int) -> int:
    """``ceil(log_eta n_arms)`` computed exactly in integers."""
    s, reach = 0, 1
    while reach < n_arms:
        reach *= eta
        s += 1
    return s


def eliminate(survivors, theta_hat, eta: int, index=None):
    """Keep the ``ceil(len / eta)`` survivors with the largest ``z @ theta_hat``.

    ``survivors`` holds arm vectors row-wise and ``index`` their arm indices
    (default ``0..len-1``).  Ties go to the lower arm index; kept indices are
    returned in ascending order.

    >>> eliminate([[3.0], [1.0], [2.0], [0.0]], [1.0], 2)
    (0, 2)
    """
    Z = np.atleast_2d(np.asarray(survivors, dtype=float))
    theta = np.asarray(getattr(theta_hat, "theta_hat", theta_hat), dtype=float)
    index = np.arange(Z.shape[0]) if index is None else np.asarray(index, dtype=np.int64)
    if Z.shape[0] == 0 or index.shape != (Z.shape[0],):
        raise ValueError("need a non-empty survivor set with one index per arm")
    if int(eta) != eta or eta < 2:
        raise ValueError("eta must be an integer >= 2")
    util = Z @ theta
    keep = -(-Z.shape[0] // int(eta))
    order = np.lexsort((index, -util))
    return tuple(sorted(int(i) for i in index[order[:keep]]))


def estimate(kind, data: QueryDataset) -> UtilityEstimate:
    kind = EstimatorKind(kind)
    if kind is EstimatorKind.CHDT:
        return estimate_chdt(data, "decision")
    if kind is EstimatorKind.CHDT_RT:
        return estimate_chdt(data, "response")
    if kind is EstimatorKind.CH_MLE:
        return estimate_ch_mle(data)
    if kind is EstimatorKind.CH_LOGIT:
        return estimate_ch_logit(data)
    return estimate_chdt_logit(data)


def run_gse(instance: BanditInstance, config: GseConfig, feedback: Feedback,
            rng: np.random.Generator) -> RunResult:
    """Run one GSE episode sequence and return the recommended arm with a phase log."""
    arms, queries = instance.arms, instance.queries
    t_nondec = instance.params.t_nondec
    n_ph = n_phases(instance.n_arms, config.eta)
    phase_budget = config.budget / n_ph - config.buffer_for(t_nondec)
    if not phase_budget > 0:
        raise BudgetExhaustedError(
            f"budget {config.budget} leaves no time per phase after a buffer of "
            f"{config.buffer_for(t_nondec)} over {n_ph} phases"
        )
    survivors = tuple(range(instance.n_arms))
    # no estimate exists before phase 1
    theta_prev = np.zeros(instance.dim)
    phases = []
    total_time = 0.0
    total_episodes = 0
    for s in range(1, n_ph + 1):
        design = compute_design(config.design, arms[list(survivors)], queries,
                                theta_ref=theta_prev if config.design is DesignKind.HARD else None)
        cdf = np.cumsum(design.weights)
        idx, choices, rts = [], [], []
        spent = 0.0
        while spent <= phase_budget:
            i = min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), cdf.size - 1)
            out = feedback(queries[i], rng)
            idx.append(i)
            choices.append(out.choice)
            rts.append(out.response_time)
            spent += out.response_time
        rts = np.asarray(rts)
        # decision times recovered with the known non-decision time
        dts = np.maximum(rts - t_nondec, np.finfo(float).tiny)
        data = QueryDataset.from_samples(queries, idx, choices, dts, rts)
        try:
            est = estimate(config.estimator, data)
        except (DegenerateDesignError, SolverError, np.linalg.LinAlgError) as exc:
            raise PhaseError(s, exc) from exc
        kept = eliminate(arms[list(survivors)], est, config.eta, index=survivors)
        phases.append(PhaseRecord(s, len(idx), spent, phase_budget, survivors, kept, est.theta_hat))
        total_time += spent
        total_episodes += len(idx)
        theta_prev = est.theta_hat
        survivors = kept
    if len(survivors) != 1:
        raise RuntimeError(f"{len(survivors)} arms survive the final phase")
    return RunResult(survivors[0], phases, total_time, total_episodes)

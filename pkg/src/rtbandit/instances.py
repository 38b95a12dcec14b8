"""Bandit instances: the synthetic sphere problem and a JSON file format.

JSON schema (``format_version`` 1)::

    {
      "format_version": 1,
      "dimension": d,
      "arms": [[...d floats...], ...],              # row-major, k rows
      "queries": {"kind": "all_pairs" | "reference" | "custom",
                  "vectors": [[...], ...],          # m rows
                  "pairs": [[i, j], ...]},          # source arms, j = -1 means the zero arm
      "params": {"theta_star": [...], "barrier_a": a, "t_nondec": t0},
      "best_arm": index
    }

Floats are written with ``repr`` so a save/load round trip is bit exact.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .diffusion import DiffusionParams

__all__ = [
    "QueryKind",
    "BanditInstance",
    "InstanceFormatError",
    "build_queries",
    "gen_sphere_instance",
    "save_instance",
    "instance_to_dict",
    "instance_from_dict",
    "load_instance",
    "FORMAT_VERSION",
]

FORMAT_VERSION = 1
TIE_TOL = 1e-12


class QueryKind(str, enum.Enum):
    ALL_PAIRS = "all_pairs"
    REFERENCE = "reference"
    CUSTOM = "custom"


class InstanceFormatError(ValueError):
    """Malformed or invalid instance file."""


@dataclass(frozen=True, eq=False)
class BanditInstance:
    arms: np.ndarray
    queries: np.ndarray
    query_pairs: np.ndarray
    params: DiffusionParams
    best_arm: int
    query_kind: QueryKind = QueryKind.ALL_PAIRS

    def __post_init__(self):
        arms = np.array(self.arms, dtype=float)
        queries = np.array(self.queries, dtype=float)
        pairs = np.array(self.query_pairs, dtype=np.int64).reshape(-1, 2)
        if arms.ndim != 2 or arms.shape[0] < 2:
            raise ValueError("need at least two arms in a (k, d) array")
        k, d = arms.shape
        if queries.ndim != 2 or queries.shape[1] != d or queries.shape[0] == 0:
            raise ValueError(f"queries must be a non-empty (m, {d}) array")
        if pairs.shape[0] != queries.shape[0]:
            raise ValueError("one source pair per query is required")
        if self.params.dim != d:
            raise ValueError(f"theta_star has dimension {self.params.dim}, arms have {d}")
        if np.any(pairs[:, 0] < 0) or np.any(pairs >= k) or np.any(pairs[:, 1] < -1):
            raise ValueError("query pair indices out of range")
        padded = np.vstack([arms, np.zeros((1, d))])
        if not np.allclose(padded[pairs[:, 0]] - padded[pairs[:, 1]], queries, rtol=0, atol=1e-12):
            raise ValueError("query vectors must equal the differences of their source arms")
        util = arms @ self.params.theta_star
        best = int(np.argmax(util))
        if best != int(self.best_arm):
            raise ValueError(f"declared best arm {self.best_arm} is not the argmax ({best})")
        if np.sum(util >= util[best] - TIE_TOL) != 1:
            raise ValueError("best arm is not unique")
        for name, arr in [("arms", arms), ("queries", queries), ("query_pairs", pairs)]:
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "best_arm", best)
        object.__setattr__(self, "query_kind", QueryKind(self.query_kind))

    @property
    def dim(self) -> int:
        return self.arms.shape[1]

    @property
    def n_arms(self) -> int:
        return self.arms.shape[0]

    def utility_differences(self):
        return self.queries @ self.params.theta_star

    def with_params(self, params: DiffusionParams) -> "BanditInstance":
        return BanditInstance(self.arms, self.queries, self.query_pairs, params,
                              self.best_arm, self.query_kind)

    def __eq__(self, other):
        if not isinstance(other, BanditInstance):
            return NotImplemented
        return (
            np.array_equal(self.arms, other.arms)
            and np.array_equal(self.queries, other.queries)
            and np.array_equal(self.query_pairs, other.query_pairs)
            and self.params == other.params
            and self.best_arm == other.best_arm
            and self.query_kind == other.query_kind
        )

    __hash__ = None


def build_queries(arms, kind="all_pairs"):
    """Query vectors and their source pairs.

    ``all_pairs`` gives every ordered pair ``z_i - z_j`` with ``i != j``;
    ``reference`` gives ``z_i - 0`` (pair ``(i, -1)``).
    """
    Z = np.asarray(arms, dtype=float)
    kind = QueryKind(kind)
    k = Z.shape[0]
    if kind is QueryKind.ALL_PAIRS:
        if k < 2:
            raise ValueError("all_pairs needs at least two arms")
        pairs = np.array([(i, j) for i in range(k) for j in range(k) if i != j])
        return Z[pairs[:, 0]] - Z[pairs[:, 1]], pairs
    if kind is QueryKind.REFERENCE:
        if k < 1:
            raise ValueError("reference queries need at least one arm")
        pairs = np.column_stack([np.arange(k), np.full(k, -1)])
        return Z.copy(), pairs
    raise ValueError("custom query sets are only loaded from files")


def _sphere_draw(d, k, rng):
    Z = rng.standard_normal((k, d))
    return Z / np.linalg.norm(Z, axis=1, keepdims=True)


def gen_sphere_instance(d=5, k=10, c_z=1.0, rng=None, barrier_a=1.0, t_nondec=0.0,
                        query_kind="all_pairs", max_tries=1000) -> BanditInstance:
    """Sphere problem: ``k`` uniform unit arms, preference next to the closest pair.

    With ``(z, z')`` the pair of distinct arms of largest inner product,
    ``theta* = z + 0.01 (z' - z)`` makes ``z`` the best arm.  Arms are then
    scaled by ``c_z``; ``theta*`` is not.
    """
    if d < 2 or k < 2 or not c_z > 0:
        raise ValueError("need d >= 2, k >= 2 and c_z > 0")
    rng = np.random.default_rng(rng)
    for _ in range(max_tries):
        Z = _sphere_draw(d, k, rng)
        G = Z @ Z.T
        np.fill_diagonal(G, -np.inf)
        i, j = np.unravel_index(np.argmax(G), G.shape)
        if G[i, j] >= 1.0 - TIE_TOL:
            continue  # two coincident arms
        theta = Z[i] + 0.01 * (Z[j] - Z[i])
        util = Z @ theta
        if np.sum(util >= util[i] - TIE_TOL) != 1 or int(np.argmax(util)) != i:
            continue
        arms = c_z * Z
        queries, pairs = build_queries(arms, query_kind)
        params = DiffusionParams(theta, barrier_a, t_nondec)
        return BanditInstance(arms, queries, pairs, params, int(i), query_kind)
    raise RuntimeError("could not draw a sphere instance with a unique best arm")


# -- JSON --------------------------------------------------------------------


def instance_to_dict(inst: BanditInstance):
    def rows(a):
        return [[float(v) for v in r] for r in a]

    return {
        "format_version": FORMAT_VERSION,
        "dimension": inst.dim,
        "arms": rows(inst.arms),
        "queries": {
            "kind": inst.query_kind.value,
            "vectors": rows(inst.queries),
            "pairs": [[int(i), int(j)] for i, j in inst.query_pairs],
        },
        "params": {
            "theta_star": [float(v) for v in inst.params.theta_star],
            "barrier_a": float(inst.params.barrier_a),
            "t_nondec": float(inst.params.t_nondec),
        },
        "best_arm": int(inst.best_arm),
    }


def save_instance(inst: BanditInstance, path):
    with open(path, "w") as fh:
        json.dump(instance_to_dict(inst), fh, indent=1)
        fh.write("\n")
    return Path(path)


def _field(obj, key, where):
    if not isinstance(obj, dict) or key not in obj:
        raise InstanceFormatError(f"{where}: missing field '{key}'")
    return obj[key]


def _matrix(value, where, cols=None):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise InstanceFormatError(f"{where}: expected a numeric matrix") from None
    if arr.ndim != 2 or (cols is not None and arr.shape[1] != cols):
        raise InstanceFormatError(f"{where}: expected shape (*, {cols}), got {arr.shape}")
    return arr


def instance_from_dict(doc, source="<instance>") -> BanditInstance:
    version = _field(doc, "format_version", source)
    if version != FORMAT_VERSION:
        raise InstanceFormatError(f"{source}: unsupported format_version {version!r}")
    d = _field(doc, "dimension", source)
    if not isinstance(d, int) or d < 1:
        raise InstanceFormatError(f"{source}: field 'dimension' must be a positive integer")
    arms = _matrix(_field(doc, "arms", source), f"{source}: field 'arms'", d)
    q = _field(doc, "queries", source)
    kind = _field(q, "kind", f"{source}: field 'queries'")
    try:
        kind = QueryKind(kind)
    except ValueError:
        raise InstanceFormatError(f"{source}: field 'queries.kind' has unknown value {kind!r}") from None
    vectors = _matrix(_field(q, "vectors", f"{source}: field 'queries'"),
                      f"{source}: field 'queries.vectors'", d)
    pairs = _field(q, "pairs", f"{source}: field 'queries'")
    try:
        pairs = np.array(pairs, dtype=np.int64)
    except (TypeError, ValueError):
        raise InstanceFormatError(f"{source}: field 'queries.pairs' must be integer pairs") from None
    p = _field(doc, "params", source)
    raw = [_field(p, key, f"{source}: field 'params'") for key in ("theta_star", "barrier_a", "t_nondec")]
    try:
        params = DiffusionParams(np.array(raw[0], dtype=float), raw[1], raw[2])
    except (TypeError, ValueError) as exc:
        raise InstanceFormatError(f"{source}: field 'params': {exc}") from None
    best = _field(doc, "best_arm", source)
    try:
        return BanditInstance(arms, vectors, pairs, params, best, kind)
    except ValueError as exc:
        raise InstanceFormatError(f"{source}: invalid instance: {exc}") from None


def load_instance(path) -> BanditInstance:
    """Read and validate an instance file."""
    path = Path(path)
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return instance_from_dict(doc, str(path))

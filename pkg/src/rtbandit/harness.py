"""Replicated simulation sweeps, error aggregation and plot output.

A sweep is described by one declarative JSON or TOML file::

    mode = "gse"            # or "estimation" (fixed sample size, no budget)
    seed = 0
    replications = 200
    budgets = [50, 100, 200]    # gse mode
    n_queries = 50              # estimation mode

    [instances]
    count = 10
    d = 5
    k = 10
    c_z = [2.0]                 # scalar or list; lists form a grid with barrier_a
    barrier_a = [1.5]
    t_nondec = 0.5
    query_kind = "all_pairs"
    # files = ["inst.json"]     # use instance files instead of sphere draws

    [[variations]]
    name = "trans_chdt"
    design = "transductive"
    estimator = "chdt"
    eta = 2
    # buffer, a_prior, feedback ("diffusion" | "sign"), budgets (subset override)

Every replication gets its own generator seeded by
``SeedSequence(seed, spawn_key=(1, instance_id, variation_id, budget_index, rep))``
so results do not depend on worker scheduling, and raising ``replications``
leaves earlier replications unchanged.  Sphere instances use
``spawn_key=(0, base_index)``; all grid cells share the same base draws.

Outputs (``out_dir``):

``results.csv``
    instance_id, base_index, c_z, barrier_a, t_nondec, variation, design,
    estimator, eta, budget, replications, completed, misidentified,
    error_prob, mean_episodes, mean_total_time, failed.
    ``error_prob = misidentified / completed``; ``failed`` counts replications
    that raised.  Byte-identical across runs with the same seed.
``replications.csv``
    one row per replication (recommended arm, correctness, error text).
``timing.csv``
    wall-clock seconds per results row (kept apart so results stay reproducible).
``summary.csv`` and SVG plots.
"""
from __future__ import annotations

import csv
import io
import json
import math
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .design import DesignKind, compute_design
from .diffusion import sample_outcomes
from .estimation import QueryDataset
from .gse import (
    DiffusionFeedback,
    EstimatorKind,
    GseConfig,
    SignFeedback,
    eliminate,
    estimate,
    run_gse,
)
from .instances import gen_sphere_instance, load_instance

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "SweepConfig",
    "Variation",
    "InstanceSpec",
    "load_config",
    "replication_rng",
    "build_instances",
    "run_estimation",
    "run_sweep",
    "aggregate_error",
    "write_csv",
    "line_svg",
    "heatmap_svg",
    "RESULT_COLUMNS",
]

RESULT_COLUMNS = [
    "instance_id", "base_index", "c_z", "barrier_a", "t_nondec", "variation", "design",
    "estimator", "eta", "budget", "replications", "completed", "misidentified",
    "error_prob", "mean_episodes", "mean_total_time", "failed",
]
REPLICATION_COLUMNS = [
    "instance_id", "variation", "budget", "replication", "recommended_arm", "best_arm",
    "correct", "episodes", "total_time", "error",
]
SUMMARY_COLUMNS = ["n", "min", "q1", "median", "q3", "max", "status"]


class ConfigError(ValueError):
    """Invalid sweep configuration."""


@dataclass(frozen=True)
class Variation:
    name: str
    design: DesignKind = DesignKind.TRANSDUCTIVE
    estimator: EstimatorKind = EstimatorKind.CHDT
    eta: int = 2
    buffer: float | None = None
    a_prior: float = 1.5
    feedback: str = "diffusion"
    budgets: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "design", DesignKind(self.design))
        object.__setattr__(self, "estimator", EstimatorKind(self.estimator))
        if self.feedback not in ("diffusion", "sign"):
            raise ConfigError(f"variation {self.name}: unknown feedback {self.feedback!r}")
        if self.budgets is not None:
            object.__setattr__(self, "budgets", tuple(float(b) for b in self.budgets))


@dataclass(frozen=True)
class InstanceSpec:
    count: int = 10
    d: int = 5
    k: int = 10
    c_z: tuple = (1.0,)
    barrier_a: tuple = (1.0,)
    t_nondec: float = 0.0
    query_kind: str = "all_pairs"
    files: tuple = ()


@dataclass(frozen=True)
class SweepConfig:
    variations: tuple
    instances: InstanceSpec = field(default_factory=InstanceSpec)
    mode: str = "gse"
    seed: int = 0
    replications: int = 100
    budgets: tuple = ()
    n_queries: int = 50

    def __post_init__(self):
        if self.mode not in ("gse", "estimation"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not self.variations:
            raise ConfigError("at least one variation is required")
        names = [v.name for v in self.variations]
        if len(set(names)) != len(names):
            raise ConfigError("variation names must be unique")
        if self.mode == "gse" and not self.budgets:
            raise ConfigError("gse mode needs a non-empty budgets list")
        for v in self.variations:
            if v.budgets and not set(v.budgets) <= set(self.budgets):
                raise ConfigError(f"variation {v.name}: budgets must be a subset of the sweep budgets")

    @property
    def budget_list(self):
        # estimation mode has a single pseudo-budget of 0 (no time limit)
        return tuple(self.budgets) if self.mode == "gse" else (0.0,)


def _as_tuple(v):
    return tuple(v) if isinstance(v, (list, tuple)) else (v,)


def config_from_dict(doc) -> SweepConfig:
    try:
        inst = dict(doc.get("instances", {}))
        for key in ("c_z", "barrier_a", "files"):
            if key in inst:
                inst[key] = _as_tuple(inst[key])
        variations = []
        for i, v in enumerate(doc["variations"]):
            v = dict(v)
            v.setdefault("name", f"v{i}")
            variations.append(Variation(**v))
        return SweepConfig(
            variations=tuple(variations),
            instances=InstanceSpec(**inst),
            mode=doc.get("mode", "gse"),
            seed=int(doc.get("seed", 0)),
            replications=int(doc.get("replications", 100)),
            budgets=tuple(float(b) for b in doc.get("budgets", ())),
            n_queries=int(doc.get("n_queries", 50)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid sweep config: {exc}") from None


def load_config(path) -> SweepConfig:
    path = Path(path)
    raw = path.read_bytes()
    try:
        if path.suffix.lower() == ".toml":
            doc = tomllib.loads(raw.decode())
        else:
            doc = json.loads(raw)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    files = doc.get("instances", {}).get("files") if isinstance(doc, dict) else None
    if files:
        # instance paths are relative to the config file
        doc["instances"]["files"] = [str(path.parent / f) for f in _as_tuple(files)]
    return config_from_dict(doc)


def replication_rng(seed, instance_id, variation_id, budget_index, rep):
    ss = np.random.SeedSequence(seed, spawn_key=(1, instance_id, variation_id, budget_index, rep))
    return np.random.default_rng(ss)


def build_instances(config: SweepConfig):
    """List of ``(instance_id, base_index, c_z, instance)``; ``c_z`` is NaN for files."""
    ispec = config.instances
    if ispec.files:
        return [(i, i, math.nan, load_instance(p)) for i, p in enumerate(ispec.files)]
    out = []
    iid = 0
    for c_z in ispec.c_z:
        for a in ispec.barrier_a:
            for b in range(ispec.count):
                rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(0, b)))
                inst = gen_sphere_instance(ispec.d, ispec.k, float(c_z), rng, float(a),
                                           ispec.t_nondec, ispec.query_kind)
                out.append((iid, b, float(c_z), inst))
                iid += 1
    return out


def run_estimation(instance, variation: Variation, n_queries: int, rng):
    """Fixed-size benchmark: one design over all arms, ``n_queries`` draws, one estimate.

    The hard-query design is given the true preference vector.  Returns
    ``(recommended_arm, n_queries, total_response_time)``.
    """
    params = instance.params
    theta_ref = params.theta_star if variation.design is DesignKind.HARD else None
    design = compute_design(variation.design, instance.arms, instance.queries, theta_ref=theta_ref)
    cdf = np.cumsum(design.weights)
    idx = np.searchsorted(cdf, rng.random(n_queries) * cdf[-1], side="right")
    idx = np.minimum(idx, cdf.size - 1)
    choices = np.empty(n_queries, dtype=np.int64)
    rts = np.empty(n_queries)
    for q in np.unique(idx):
        sel = np.flatnonzero(idx == q)
        if variation.feedback == "sign":
            fb = SignFeedback(params)
            outs = [fb(instance.queries[q], rng) for _ in sel]
            choices[sel] = [o.choice for o in outs]
            rts[sel] = [o.response_time for o in outs]
        else:
            c, _, rt = sample_outcomes(params, instance.queries[q], sel.size, rng)
            choices[sel], rts[sel] = c, rt
    dts = np.maximum(rts - params.t_nondec, np.finfo(float).tiny)
    data = QueryDataset.from_samples(instance.queries, idx, choices, dts, rts)
    est = estimate(variation.estimator, data)
    (best,) = eliminate(instance.arms, est, instance.n_arms)
    return best, n_queries, float(rts.sum())


def _run_cell(task):
    """All replications for one (instance, variation, budget) cell."""
    config, iid, base, c_z, inst, vid, var, bidx, budget = task
    t0 = time.perf_counter()
    reps = []
    for r in range(config.replications):
        rng = replication_rng(config.seed, iid, vid, bidx, r)
        try:
            if config.mode == "estimation":
                arm, episodes, total = run_estimation(inst, var, config.n_queries, rng)
            else:
                gcfg = GseConfig(budget, var.eta, var.design, var.estimator, var.buffer, var.a_prior)
                fb = SignFeedback(inst.params) if var.feedback == "sign" else DiffusionFeedback(inst.params)
                res = run_gse(inst, gcfg, fb, rng)
                arm, episodes, total = res.recommended_arm, res.total_episodes, res.total_time
            reps.append((iid, var.name, budget, r, arm, inst.best_arm, int(arm == inst.best_arm),
                         episodes, total, ""))
        except Exception as exc:  # recorded per replication, the sweep goes on
            reps.append((iid, var.name, budget, r, -1, inst.best_arm, 0, 0, 0.0,
                         f"{type(exc).__name__}: {exc}"))
    ok = [x for x in reps if not x[9]]
    failed = len(reps) - len(ok)
    miss = sum(1 - x[6] for x in ok)
    row = {
        "instance_id": iid,
        "base_index": base,
        "c_z": c_z,
        "barrier_a": inst.params.barrier_a,
        "t_nondec": inst.params.t_nondec,
        "variation": var.name,
        "design": var.design.value,
        "estimator": var.estimator.value,
        "eta": var.eta,
        "budget": budget,
        "replications": len(reps),
        "completed": len(ok),
        "misidentified": miss,
        "error_prob": miss / len(ok) if ok else float("nan"),
        "mean_episodes": float(np.mean([x[7] for x in ok])) if ok else float("nan"),
        "mean_total_time": float(np.mean([x[8] for x in ok])) if ok else float("nan"),
        "failed": failed,
    }
    return row, reps, time.perf_counter() - t0


def _fmt(v):
    if isinstance(v, float):
        return repr(round(v, 12))
    return str(v)


def write_csv(path, columns, rows):
    """Write dict rows (or tuples) with fixed column order and ``\\n`` line ends."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        vals = [r[c] for c in columns] if isinstance(r, dict) else list(r)
        w.writerow([_fmt(v) for v in vals])
    if path is not None:
        Path(path).write_text(buf.getvalue())
    return buf.getvalue()


def _tasks(config, instances):
    for iid, base, c_z, inst in instances:
        for vid, var in enumerate(config.variations):
            for bidx, budget in enumerate(config.budget_list):
                if var.budgets and budget not in var.budgets:
                    continue
                yield (config, iid, base, c_z, inst, vid, var, bidx, budget)


@dataclass
class SweepOutput:
    results: list
    replications: list
    timing: list
    summary: list

    @property
    def failed(self) -> int:
        return sum(r["failed"] for r in self.results)


def run_sweep(config, out_dir=None, threads=1, plots=True) -> SweepOutput:
    """Run every (instance, variation, budget) cell and write the CSV/SVG outputs.

    ``config`` is a :class:`SweepConfig` or a path to a JSON/TOML file.
    ``threads > 1`` distributes cells over worker processes; rows are sorted
    before writing so the output does not depend on completion order.
    """
    if not isinstance(config, SweepConfig):
        config = load_config(config)
    instances = build_instances(config)
    tasks = list(_tasks(config, instances))
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            cells = list(pool.map(_run_cell, tasks, chunksize=1))
    else:
        cells = [_run_cell(t) for t in tasks]
    var_order = {v.name: i for i, v in enumerate(config.variations)}

    def key(row):
        return (row["instance_id"], var_order[row["variation"]], row["budget"])

    results = sorted((c[0] for c in cells), key=key)
    reps = sorted((r for c in cells for r in c[1]), key=lambda x: (x[0], var_order[x[1]], x[2], x[3]))
    timing = sorted(({"instance_id": c[0]["instance_id"], "variation": c[0]["variation"],
                      "budget": c[0]["budget"], "wall_clock_s": c[2]} for c in cells), key=key)
    group = ["variation", "budget"] if config.mode == "gse" else ["variation", "c_z", "barrier_a"]
    summary = aggregate_error(results, group)
    out = SweepOutput(results, reps, timing, summary)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_csv(out_dir / "results.csv", RESULT_COLUMNS, results)
        write_csv(out_dir / "replications.csv", REPLICATION_COLUMNS, reps)
        write_csv(out_dir / "timing.csv", ["instance_id", "variation", "budget", "wall_clock_s"], timing)
        write_csv(out_dir / "summary.csv", group + SUMMARY_COLUMNS, summary)
        if plots:
            _write_plots(config, summary, out_dir)
    return out


# -- aggregation -------------------------------------------------------------


def aggregate_error(rows, keys, value="error_prob", expected=None):
    """Quantile summary of ``value`` per group.

    Quantiles use linear interpolation between order statistics (numpy's
    default ``"linear"`` method), so ``{0.1, 0.2, 0.3}`` has quartiles 0.15
    and 0.25.  Groups listed in ``expected`` but absent from ``rows`` produce
    a row with ``n = 0``, empty statistics and ``status = "empty"``.  NaN
    values (cells where every replication failed) are skipped.
    """
    keys = list(keys)
    groups = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in keys), []).append(r[value])
    if expected is not None:
        for g in expected:
            groups.setdefault(tuple(g), [])
    out = []
    for g in sorted(groups, key=lambda t: tuple((str(type(x)), x) for x in t)):
        vals = np.array([v for v in groups[g] if not (isinstance(v, float) and math.isnan(v))])
        row = dict(zip(keys, g))
        if vals.size == 0:
            warnings.warn(f"no values for group {dict(zip(keys, g))}")
            row.update(n=0, min="", q1="", median="", q3="", max="", status="empty")
        else:
            q = np.quantile(vals, [0.0, 0.25, 0.5, 0.75, 1.0])
            row.update(n=int(vals.size), min=float(q[0]), q1=float(q[1]), median=float(q[2]),
                       q3=float(q[3]), max=float(q[4]), status="ok")
        out.append(row)
    return out


# -- SVG ---------------------------------------------------------------------

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"]


def _esc(s):
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def line_svg(series, xlabel="budget", ylabel="median error", width=520, height=360):
    """Line chart from ``{label: [(x, y), ...]}`` with y in [0, 1]."""
    ml, mr, mt, mb = 60, 150, 20, 50
    pw, ph = width - ml - mr, height - mt - mb
    xs = sorted({x for pts in series.values() for x, _ in pts})
    if not xs:
        xs = [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    span = (x1 - x0) or 1.0

    def px(x):
        return ml + (x - x0) / span * pw

    def py(y):
        return mt + (1.0 - y) * ph

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for t in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(f'<text x="{ml - 6}" y="{py(t) + 4:.1f}" font-size="11" text-anchor="end">{t:g}</text>')
    for x in xs:
        parts.append(f'<text x="{px(x):.1f}" y="{mt + ph + 16}" font-size="11" text-anchor="middle">{x:g}</text>')
    parts.append(f'<text x="{ml + pw / 2}" y="{height - 10}" font-size="12" text-anchor="middle">{_esc(xlabel)}</text>')
    parts.append(f'<text x="14" y="{mt + ph / 2}" font-size="12" text-anchor="middle" '
                 f'transform="rotate(-90 14 {mt + ph / 2})">{_esc(ylabel)}</text>')
    for i, (label, pts) in enumerate(series.items()):
        col = _PALETTE[i % len(_PALETTE)]
        pts = sorted(pts)
        path = " ".join(f"{px(x):.1f},{py(y):.1f}" for x, y in pts)
        parts.append(f'<polyline points="{path}" fill="none" stroke="{col}" stroke-width="2"/>')
        for x, y in pts:
            parts.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="3" fill="{col}"/>')
        ly = mt + 14 + 18 * i
        parts.append(f'<line x1="{ml + pw + 10}" y1="{ly - 4}" x2="{ml + pw + 28}" y2="{ly - 4}" '
                     f'stroke="{col}" stroke-width="2"/>')
        parts.append(f'<text x="{ml + pw + 32}" y="{ly}" font-size="11">{_esc(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def heatmap_svg(cells, rows, cols, title="", row_label="a", col_label="c_Z", cell=56):
    """Heatmap of ``cells[(row, col)]`` values in [0, 1] (white to dark red)."""
    ml, mt = 60, 40
    width = ml + cell * len(cols) + 20
    height = mt + cell * len(rows) + 50
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<text x="{ml}" y="20" font-size="13">{_esc(title)}</text>']
    for i, r in enumerate(rows):
        y = mt + i * cell
        parts.append(f'<text x="{ml - 6}" y="{y + cell / 2 + 4}" font-size="11" text-anchor="end">{r:g}</text>')
        for j, c in enumerate(cols):
            x = ml + j * cell
            v = cells.get((r, c))
            if v is None or math.isnan(v):
                fill, txt = "#ccc", "-"
            else:
                g = int(round(255 * (1.0 - min(max(v, 0.0), 1.0))))
                fill, txt = f"rgb(255,{g},{g})", f"{v:.2f}"
            parts.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{fill}" stroke="#fff"/>')
            parts.append(f'<text x="{x + cell / 2}" y="{y + cell / 2 + 4}" font-size="11" '
                         f'text-anchor="middle">{txt}</text>')
    for j, c in enumerate(cols):
        parts.append(f'<text x="{ml + j * cell + cell / 2}" y="{mt + len(rows) * cell + 16}" '
                     f'font-size="11" text-anchor="middle">{c:g}</text>')
    parts.append(f'<text x="{ml + len(cols) * cell / 2}" y="{height - 8}" font-size="12" '
                 f'text-anchor="middle">{_esc(col_label)}</text>')
    parts.append(f'<text x="14" y="{mt + len(rows) * cell / 2}" font-size="12">{_esc(row_label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _write_plots(config, summary, out_dir):
    ok = [r for r in summary if r["status"] == "ok"]
    if config.mode == "gse":
        series = {}
        for r in ok:
            series.setdefault(r["variation"], []).append((r["budget"], r["median"]))
        (out_dir / "error_vs_budget.svg").write_text(line_svg(series))
        return
    rows = sorted({r["barrier_a"] for r in ok}, reverse=True)
    cols = sorted({r["c_z"] for r in ok})
    for v in config.variations:
        # heatmap cells show the median across instances
        cells = {(r["barrier_a"], r["c_z"]): r["median"] for r in ok if r["variation"] == v.name}
        (out_dir / f"heatmap_{v.name}.svg").write_text(heatmap_svg(cells, rows, cols, title=v.name))

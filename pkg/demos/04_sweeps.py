"""Reduced versions of the two shipped experiment configs.

The full runs are ``rtbandit sweep configs/estimation_grid.toml`` and
``rtbandit sweep configs/budget_sweep.toml``; here the replication and
instance counts are cut so the script finishes in well under a minute.
"""
import dataclasses
import sys
from pathlib import Path

from rtbandit.harness import load_config, run_sweep

root = Path(__file__).resolve().parent.parent
out = Path(sys.argv[1]) if len(sys.argv) > 1 else root / "results" / "demo"

for name in ("estimation_grid.toml", "budget_sweep.toml"):
    cfg = load_config(root / "configs" / name)
    small = dataclasses.replace(cfg.instances, count=2, c_z=cfg.instances.c_z[-2:])
    cfg = dataclasses.replace(cfg, replications=50, instances=small)
    res = run_sweep(cfg, out / name.split(".")[0])
    print(f"== {name}: {len(res.results)} cells, {res.failed} failed replications")
    for row in res.summary:
        keys = {k: v for k, v in row.items() if k in ("variation", "budget", "c_z", "barrier_a")}
        print(f"  {keys}  median error {row['median']:.3f}")

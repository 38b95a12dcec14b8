"""One budgeted best-arm identification run, phase by phase."""
import numpy as np

from rtbandit import DiffusionFeedback, GseConfig, gen_sphere_instance, run_gse

inst = gen_sphere_instance(d=5, k=10, c_z=2.0, rng=3, barrier_a=1.5, t_nondec=0.5)
cfg = GseConfig(budget=200.0, eta=2, design="transductive", estimator="chdt")
res = run_gse(inst, cfg, DiffusionFeedback(inst.params), np.random.default_rng(3))
for p in res.phases:
    print(f"phase {p.index}: {p.episodes:3d} queries, {p.time_used:6.1f} s of {p.phase_budget:.1f} s, "
          f"{len(p.survivors)} -> {len(p.kept)} arms {p.kept}")
print(f"recommended arm {res.recommended_arm}, true best arm {inst.best_arm}, "
      f"{res.total_time:.1f} s in total")

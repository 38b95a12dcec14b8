"""Choice-only versus choice plus decision-time estimation on one instance.

Samples 200 answers to every query of a sphere instance and prints each
estimator's direction error against theta*.
"""
import numpy as np

from rtbandit import gen_sphere_instance, sample_outcomes
from rtbandit.estimation import QueryDataset
from rtbandit.gse import estimate

rng = np.random.default_rng(1)
inst = gen_sphere_instance(d=5, k=6, c_z=2.0, rng=rng, barrier_a=1.5)
idx, choices, dts = [], [], []
for i, x in enumerate(inst.queries):
    c, t, _ = sample_outcomes(inst.params, x, 200, rng)
    idx += [i] * len(c)
    choices += list(c)
    dts += list(t)
dts = np.asarray(dts)
data = QueryDataset.from_samples(inst.queries, idx, choices, dts, dts)

star = inst.params.theta_star / np.linalg.norm(inst.params.theta_star)
for kind in ("chdt", "ch_mle", "ch_logit", "chdt_logit"):
    th = estimate(kind, data).theta_hat
    angle = np.degrees(np.arccos(np.clip(th @ star / np.linalg.norm(th), -1, 1)))
    best = int(np.argmax(inst.arms @ th))
    print(f"{kind:>11}: angle to theta* {angle:6.2f} deg, best arm {best} (true {inst.best_arm})")

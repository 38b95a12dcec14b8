"""Choices and decision times under the drift-diffusion model.

Compares the analytic moments with Monte Carlo draws for a few utility
differences, and shows that E[c] / E[t] recovers u / a exactly.
"""
import numpy as np

from rtbandit import moments, sample_decision_time

rng = np.random.default_rng(0)
a = 1.0
print(f"{'u':>5} {'P(c=1)':>8} {'E[t]':>8} {'MC E[t]':>8} {'E[c]/E[t]':>10}")
for u in (0.0, 0.5, 1.0, 2.0):
    m = moments(u, a)
    t = sample_decision_time(u, a, rng, size=50_000)
    print(f"{u:5.2f} {m.p_choice_pos:8.4f} {m.mean_time:8.4f} {t.mean():8.4f} "
          f"{m.mean_choice / m.mean_time:10.4f}")

# easy queries (large |u|) are answered fast and almost deterministically,
# so the choice alone carries little information while the time still does

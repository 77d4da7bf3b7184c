"""
Exact cohort moments for a four-state model
===========================================

A cohort of 10,000 people starts in S1 and moves through S2 and S3 towards
the absorbing state S4. Because every person follows the same chain
independently, the counts per state at each cycle are multinomial, and the
mean and covariance follow directly from the occupancy vector.
"""

import numpy as np

from markov_multinomial import (
    cohort_log_pmf,
    four_state_example,
    moment_trajectory,
    propagate_occupancy,
)

spec = four_state_example(n0=10000, horizon=50)
P = spec.schedule.matrices[0]
print("transition matrix (diagonal filled in from the row residual):")
print(P)

# occupancy for a single person after one and two cycles
for z in (1, 2):
    print(f"cycle {z}:", propagate_occupancy([1, 0, 0, 0], spec.schedule, z))

traj = moment_trajectory(spec)

# mean and sd of the counts at a few cycles
for z in (0, 1, 5, 10, 25, 50):
    cells = ", ".join(f"{lab} {m:8.1f} +- {s:5.1f}"
                      for lab, m, s in zip(spec.state_space.labels, traj.mean[z], traj.sd[z]))
    print(f"z={z:2d}  {cells}")

# counts are negatively correlated: a person in S1 cannot also be in S4
cov = traj.covariance[10]
corr = cov / np.outer(traj.sd[10], traj.sd[10])
print("correlation at cycle 10:")
print(np.round(corr, 3))

# rows of the covariance sum to zero because the cohort size is fixed
print("row sums:", cov.sum(axis=1))

# probability of one particular count vector at cycle 1
p1 = traj.occupancy[1]
n = np.array([7100, 1000, 500, 1400])
print("log P(N_1 = expected counts) =", cohort_log_pmf(10000, p1, n))

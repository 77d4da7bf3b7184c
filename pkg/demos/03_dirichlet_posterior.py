"""
Learning the transition matrix from observed paths
==================================================

Each row of the transition matrix gets a Dirichlet prior. Observed one-step
transitions update the row by simple addition, and the posterior mean moves
towards the matrix that generated the data as more paths are seen.
"""

import numpy as np

from markov_multinomial import (
    count_transitions,
    four_state_example,
    posterior_mean,
    posterior_update,
    sample_matrices,
    simulate_cohort,
    uniform_prior,
)

truth = four_state_example().schedule.matrices[0]
prior = uniform_prior(4)

for n0 in (10, 100, 1000, 10000):
    spec = four_state_example(n0=n0, horizon=50)
    _, paths = simulate_cohort(spec, seed=1, return_paths=True)
    counts = count_transitions(paths, 4)
    post = posterior_update(prior, counts)
    err = np.abs(posterior_mean(post).matrices[0] - truth).max()
    print(f"n0={n0:5d}  person-cycles={counts.sum():6d}  max error {err:.4f}")

# the absorbing row never sees a departure, so it learns nothing beyond
# "stay put", which it sees many times
print("S4 row:", post.alphas[3])

# draws from the posterior feed a probabilistic sensitivity analysis
draws = np.stack(sample_matrices(post, 2000, seed=7))
lo, hi = np.percentile(draws[:, 0, 1], [2.5, 97.5])
print(f"S1 -> S2: posterior 95% interval [{lo:.4f}, {hi:.4f}], true value {truth[0, 1]}")

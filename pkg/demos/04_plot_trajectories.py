"""
Plotting exact and simulated trajectories
=========================================

Reads the CSV files written by the command line tool and draws the mean
count of each state with a band of one standard deviation, exact values as
lines and simulated values as markers. Produce the inputs first with::

    markov-multinomial moments --model models/four_state.model --out moments.csv
    markov-multinomial simulate --model models/four_state.model --out sim.csv

matplotlib is only needed for this script.
"""

import sys

import matplotlib.pyplot as plt
import numpy as np

from markov_multinomial.formats import read_csv_with_meta

moments_path = sys.argv[1] if len(sys.argv) > 1 else "moments.csv"
sim_path = sys.argv[2] if len(sys.argv) > 2 else "sim.csv"
out_path = sys.argv[3] if len(sys.argv) > 3 else "trajectories.png"


def load(path):
    with open(path) as fh:
        meta, header, rows = read_csv_with_meta(fh.read())
    return meta, {name: [row[i] for row in rows] for i, name in enumerate(header)}


meta, exact = load(moments_path)
_, sim = load(sim_path)
labels = meta["states"].split(",")

fig, ax = plt.subplots(figsize=(8, 5))
for k, label in enumerate(labels):
    colour = f"C{k}"
    pick = np.array(exact["state"]) == label
    z = np.array(exact["cycle"], dtype=int)[pick]
    mean = np.array(exact["mean"], dtype=float)[pick]
    sd = np.array(exact["sd"], dtype=float)[pick]
    ax.plot(z, mean, color=colour, label=f"{label} exact")
    ax.fill_between(z, mean - sd, mean + sd, color=colour, alpha=0.2)

    pick = np.array(sim["state"]) == label
    z = np.array(sim["cycle"], dtype=int)[pick]
    mean = np.array(sim["empirical_mean"], dtype=float)[pick]
    sd = np.sqrt(np.array(sim["empirical_variance"], dtype=float)[pick])
    ax.errorbar(z[::5], mean[::5], yerr=sd[::5], fmt="o", ms=3, color=colour,
                label=f"{label} simulated")

ax.set_xlabel("cycle")
ax.set_ylabel("people in state")
ax.legend(ncol=2, fontsize="small")
fig.tight_layout()
fig.savefig(out_path, dpi=120)
print("wrote", out_path)

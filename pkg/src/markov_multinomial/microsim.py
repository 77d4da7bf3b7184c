"""
Microsimulation of a closed cohort, replicated, and checked against the
exact moments.

Every individual carries its own state and draws one categorical
transition per cycle; cohort counts are the per-cycle sums of the
occupancy indicators. This is deliberately independent of
:mod:`markov_multinomial.core`'s closed forms, which it is used to check.

Reproducibility: replication ``i`` of a run with master seed ``m`` uses a
PCG64 stream seeded by ``SeedSequence(m, spawn_key=(i,))``. The stream of
one replication never depends on how many others ran or in what order, so
serial and parallel runs are bit-identical.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import CohortSpec, MomentTrajectory
from .errors import DimensionMismatchError, InsufficientReplicationsError

__all__ = [
    "RNG_NAME",
    "ReplicationSummary",
    "ComparisonReport",
    "replication_rng",
    "simulate_cohort",
    "simulate_replications",
    "replicate",
    "summarize",
    "compare",
]

RNG_NAME = "numpy.random.PCG64 <- SeedSequence(master_seed, spawn_key=(replication,))"


def replication_rng(master_seed: int, replication: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(replication),))
    return np.random.Generator(np.random.PCG64(ss))


def _cumulative_rows(P: np.ndarray) -> np.ndarray:
    """Row CDF breakpoints for inverse-CDF sampling, shape ``(s-1, s)``.

    Column ``k`` holds the breakpoints of row ``k``.

    Entries at or past a row's last positive-probability state are pinned
    to 1 so rounding can never select a zero-probability target.
    """
    cdf = np.cumsum(P, axis=1)
    s = P.shape[1]
    for k in range(s):
        last = np.flatnonzero(P[k])[-1]
        cdf[k, last:] = 1.0
    return np.ascontiguousarray(cdf[:, :-1].T)


def simulate_cohort(spec: CohortSpec, seed, return_paths: bool = False):
    """Simulate one replication of the cohort.

    Parameters
    ----------
    spec : CohortSpec
    seed : int or numpy.random.Generator
        Seed for a fresh PCG64 stream, or a generator to draw from.
    return_paths : bool
        Also return every individual's path, shape ``(n0, Z+1)``.

    Returns
    -------
    counts : ndarray of int64, shape ``(Z+1, s)``
    paths : ndarray, only if ``return_paths``
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(
        np.random.PCG64(seed))
    s, Z, n0 = spec.s, spec.horizon, spec.n0
    # individuals in deterministic label order of their starting state
    state = np.repeat(np.arange(s), spec.initial_counts)
    counts = np.empty((Z + 1, s), dtype=np.int64)
    counts[0] = spec.initial_counts
    paths = None
    if return_paths:
        dtype = np.int8 if s <= 127 else np.int32
        paths = np.empty((n0, Z + 1), dtype=dtype)
        paths[:, 0] = state
    cdfs = {}
    for u in range(Z):
        P = spec.schedule.matrix_at(u)
        key = min(u, len(spec.schedule) - 1)
        if key not in cdfs:
            cdfs[key] = _cumulative_rows(P)
        cdf = cdfs[key]
        draws = rng.random(n0)
        # next state = number of row breakpoints at or below the draw
        nxt = (cdf[0][state] <= draws).astype(np.intp)
        for breaks in cdf[1:]:
            nxt += breaks[state] <= draws
        state = nxt
        counts[u + 1] = np.bincount(state, minlength=s)
        if return_paths:
            paths[:, u + 1] = state
    if return_paths:
        return counts, paths
    return counts


def _run_block(args):
    spec, master_seed, indices = args
    return np.stack([simulate_cohort(spec, replication_rng(master_seed, i)) for i in indices])


def simulate_replications(spec: CohortSpec, r: int, master_seed: int,
                          workers: int = 1) -> np.ndarray:
    """Count trajectories of ``r`` independent replications, shape ``(r, Z+1, s)``.

    ``workers > 1`` spreads replications over processes; the result is
    identical to the serial one.
    """
    if r < 1:
        raise InsufficientReplicationsError("need at least one replication")
    if workers <= 1 or r == 1:
        return _run_block((spec, master_seed, range(r)))
    blocks = [(spec, master_seed, idx) for idx in np.array_split(np.arange(r), workers)
              if idx.size]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_block, blocks))
    return np.concatenate(parts, axis=0)


@dataclass(frozen=True, eq=False)
class ReplicationSummary:
    """Empirical per-cycle moments over replications, each ``(Z+1, s)``."""

    r: int
    empirical_mean: np.ndarray
    empirical_variance: np.ndarray
    seed: Optional[int] = None
    rng: str = RNG_NAME

    @property
    def horizon(self) -> int:
        return self.empirical_mean.shape[0] - 1


def summarize(counts: np.ndarray, seed: Optional[int] = None) -> ReplicationSummary:
    """Empirical mean and unbiased variance of stacked replication counts."""
    counts = np.asarray(counts)
    r = counts.shape[0]
    if r < 2:
        raise InsufficientReplicationsError(f"need at least 2 replications, got {r}")
    return ReplicationSummary(
        r=r,
        empirical_mean=counts.mean(axis=0),
        empirical_variance=counts.var(axis=0, ddof=1),
        seed=seed,
    )


def replicate(spec: CohortSpec, r: int, master_seed: int, workers: int = 1) -> ReplicationSummary:
    """Run ``r`` replications and summarize them."""
    if r < 2:
        raise InsufficientReplicationsError(f"need at least 2 replications, got {r}")
    return summarize(simulate_replications(spec, r, master_seed, workers), seed=master_seed)


@dataclass(frozen=True, eq=False)
class ComparisonReport:
    """Cell-by-cell comparison of empirical and exact moments.

    All arrays are ``(Z+1, s)``. ``mean_z`` is NaN on degenerate cells
    (exact variance zero); those cells are judged by ``degenerate_ok``
    instead, which requires the empirical variance to be exactly zero and
    the empirical mean to equal the exact one.
    """

    analytic_mean: np.ndarray
    empirical_mean: np.ndarray
    mean_z: np.ndarray
    analytic_variance: np.ndarray
    empirical_variance: np.ndarray
    variance_ratio: np.ndarray
    degenerate: np.ndarray
    degenerate_ok: np.ndarray
    r: int
    z_threshold: float = 4.0
    ratio_band: Tuple[float, float] = (0.85, 1.15)
    variance_floor: float = 100.0
    strict_z: float = 3.0
    min_strict_fraction: float = 0.99

    @property
    def checked(self) -> np.ndarray:
        """Cells whose exact variance reaches the floor; held to both bands."""
        return ~self.degenerate & (self.analytic_variance >= self.variance_floor)

    @property
    def z_ok(self) -> np.ndarray:
        return np.where(self.degenerate, self.degenerate_ok,
                        np.abs(np.nan_to_num(self.mean_z, nan=np.inf)) <= self.z_threshold)

    @property
    def ratio_ok(self) -> np.ndarray:
        lo, hi = self.ratio_band
        with np.errstate(invalid="ignore"):
            inside = (self.variance_ratio >= lo) & (self.variance_ratio <= hi)
        return np.where(self.checked, inside, True)

    @property
    def max_abs_z(self) -> float:
        z = self.mean_z[~self.degenerate]
        return float(np.abs(z).max()) if z.size else 0.0

    @property
    def strict_fraction(self) -> float:
        """Fraction of all cells with ``|z| <= strict_z`` (degenerate cells count if consistent)."""
        within = np.where(self.degenerate, self.degenerate_ok,
                          np.abs(np.nan_to_num(self.mean_z, nan=np.inf)) <= self.strict_z)
        return float(within.mean())

    @property
    def ratio_range(self) -> Tuple[float, float]:
        vals = self.variance_ratio[self.checked]
        if not vals.size:
            return (float("nan"), float("nan"))
        return (float(vals.min()), float(vals.max()))

    @property
    def passed(self) -> bool:
        return bool(
            np.all(self.degenerate_ok[self.degenerate])
            and np.all(self.z_ok[self.checked])
            and np.all(self.ratio_ok)
            and self.strict_fraction >= self.min_strict_fraction
        )

    def summary(self, labels=None) -> str:
        lo, hi = self.ratio_range
        lines = [
            f"replications: {self.r}",
            f"cells: {self.mean_z.size} ({int(self.degenerate.sum())} degenerate, "
            f"{int(self.checked.sum())} with exact variance >= {self.variance_floor:g})",
            f"max |z|: {self.max_abs_z:.4f}",
            f"cells with |z| <= {self.strict_z:g}: {100 * self.strict_fraction:.2f}% "
            f"(required {100 * self.min_strict_fraction:.2f}%)",
            f"variance ratio range: [{lo:.4f}, {hi:.4f}] "
            f"(band [{self.ratio_band[0]:g}, {self.ratio_band[1]:g}])",
        ]
        failing = np.argwhere(self.checked & ~(self.z_ok & self.ratio_ok)
                              | (self.degenerate & ~self.degenerate_ok))
        for z, k in failing[:10]:
            name = labels[k] if labels is not None else str(k)
            lines.append(
                f"  FAIL cycle {z} state {name}: z={self.mean_z[z, k]:.3f} "
                f"ratio={self.variance_ratio[z, k]:.3f}"
            )
        lines.append("result: PASS" if self.passed else "result: FAIL")
        return "\n".join(lines)


def compare(summary: ReplicationSummary, trajectory: MomentTrajectory,
            z_threshold: float = 4.0, ratio_band: Tuple[float, float] = (0.85, 1.15),
            variance_floor: float = 100.0, strict_z: float = 3.0,
            min_strict_fraction: float = 0.99) -> ComparisonReport:
    """Compare replicated empirical moments with the exact trajectory.

    A cell's mean z-score is ``(empirical - exact) / sqrt(exact_var / r)``.
    The comparison passes when every cell with exact variance at least
    ``variance_floor`` has ``|z| <= z_threshold`` and a variance ratio
    inside ``ratio_band``, at least ``min_strict_fraction`` of all cells
    have ``|z| <= strict_z``, and every degenerate cell is reproduced
    exactly.
    """
    if summary.empirical_mean.shape != trajectory.mean.shape:
        raise DimensionMismatchError(
            f"summary is {summary.empirical_mean.shape}, trajectory is {trajectory.mean.shape}"
        )
    avar = trajectory.variance
    emean, evar = summary.empirical_mean, summary.empirical_variance
    degenerate = avar <= 0.0
    n0 = trajectory.n0
    degenerate_ok = degenerate & (evar == 0.0) & (
        np.abs(emean - trajectory.mean) <= 1e-9 * n0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(degenerate, np.nan,
                     (emean - trajectory.mean) / np.sqrt(avar / summary.r))
        ratio = np.where(avar >= variance_floor, evar / avar, np.nan)
    return ComparisonReport(
        analytic_mean=trajectory.mean,
        empirical_mean=emean,
        mean_z=z,
        analytic_variance=avar,
        empirical_variance=evar,
        variance_ratio=ratio,
        degenerate=degenerate,
        degenerate_ok=degenerate_ok,
        r=summary.r,
        z_threshold=z_threshold,
        ratio_band=tuple(ratio_band),
        variance_floor=variance_floor,
        strict_z=strict_z,
        min_strict_fraction=min_strict_fraction,
    )

"""
Closed-cohort Markov state-transition models and their exact moments.

A cohort of ``n0`` independent individuals moves over ``s`` states under
a (possibly time-varying) row-stochastic transition matrix. Because the
individuals are independent and identically governed, the vector of
per-state counts at any cycle is multinomial, which gives the mean and
covariance in closed form without simulation.

Conventions
-----------
* States are indexed from zero, in label order.
* Exactly ``z`` matrix applications map the starting occupancy to the
  occupancy after ``z`` elapsed cycles; the matrix applied on the
  transition out of cycle ``u`` is ``schedule.matrix_at(u)``.
* ``0 ** 0 == 1`` and ``0 * log(0) == 0``.
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln, xlogy

from .errors import (
    BadDimensionError,
    BadIndicatorError,
    CountMismatchError,
    HorizonExceedsScheduleError,
    ModelError,
    NegativeResidualError,
    NotStochasticError,
)

__all__ = [
    "IMPLIED",
    "STOCHASTIC_TOL",
    "StateSpace",
    "TransitionSchedule",
    "CohortSpec",
    "MomentTrajectory",
    "validate_schedule",
    "check_distribution",
    "propagate_occupancy",
    "occupancy_trajectory",
    "individual_pmf",
    "individual_covariance",
    "cohort_mean",
    "cohort_covariance",
    "cohort_log_pmf",
    "moment_trajectory",
    "four_state_example",
]

#: Marker for a diagonal entry to be completed from the row residual.
IMPLIED = None

STOCHASTIC_TOL = 1e-9


@dataclass(frozen=True)
class StateSpace:
    """Ordered, distinct state labels."""

    labels: tuple

    def __post_init__(self):
        labels = tuple(str(label) for label in self.labels)
        if not labels:
            raise ModelError("a state space needs at least one state")
        if any(not label.strip() for label in labels):
            raise ModelError("state labels must be non-empty")
        if len(set(labels)) != len(labels):
            dupes = sorted({label for label in labels if labels.count(label) > 1})
            raise ModelError(f"duplicate state labels: {', '.join(dupes)}")
        object.__setattr__(self, "labels", labels)

    @property
    def s(self) -> int:
        return len(self.labels)

    def __len__(self):
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ModelError(f"unknown state {label!r}") from None


@dataclass(frozen=True, eq=False)
class TransitionSchedule:
    """Per-cycle row-stochastic matrices.

    ``matrices`` has shape ``(K, s, s)``. With ``hold_last`` set, the last
    matrix keeps governing every cycle past ``K``; a time-invariant model
    is a single matrix with ``hold_last=True``.
    """

    matrices: np.ndarray
    hold_last: bool = True

    def __post_init__(self):
        mats = np.array(self.matrices, dtype=float)
        if mats.ndim == 2:
            mats = mats[np.newaxis]
        if mats.ndim != 3 or mats.shape[0] == 0 or mats.shape[1] != mats.shape[2]:
            raise BadDimensionError(
                f"expected a non-empty stack of square matrices, got shape {mats.shape}"
            )
        if not np.all(np.isfinite(mats)):
            raise NotStochasticError("transition matrices contain non-finite entries")
        if mats.min() < 0.0 or mats.max() > 1.0:
            raise NotStochasticError("transition probabilities must lie in [0, 1]")
        sums = mats.sum(axis=2)
        bad = np.argwhere(np.abs(sums - 1.0) > STOCHASTIC_TOL)
        if bad.size:
            k, row = bad[0]
            raise NotStochasticError(
                f"row {row} of matrix {k} sums to {sums[k, row]!r}, not 1"
            )
        mats.setflags(write=False)
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "hold_last", bool(self.hold_last))

    @property
    def s(self) -> int:
        return self.matrices.shape[1]

    def __len__(self):
        return self.matrices.shape[0]

    @property
    def is_time_invariant(self) -> bool:
        return len(self) == 1 and self.hold_last

    def covers(self, z: int) -> bool:
        """Whether ``z`` cycles of transitions can be taken."""
        return self.hold_last or z <= len(self)

    def matrix_at(self, u: int) -> np.ndarray:
        """Matrix governing the transition out of cycle ``u``."""
        if u < 0:
            raise ValueError("cycle index must be non-negative")
        if u >= len(self):
            if not self.hold_last:
                raise HorizonExceedsScheduleError(
                    f"schedule has {len(self)} matrices and hold_last is off; "
                    f"no matrix for cycle {u}"
                )
            return self.matrices[-1]
        return self.matrices[u]

    def __eq__(self, other):
        if not isinstance(other, TransitionSchedule):
            return NotImplemented
        return self.hold_last == other.hold_last and np.array_equal(
            self.matrices, other.matrices
        )

    __hash__ = None


def validate_schedule(raw, s: int, hold_last: Optional[bool] = None,
                      renormalize: bool = False) -> TransitionSchedule:
    """Build a :class:`TransitionSchedule` from raw matrices.

    Parameters
    ----------
    raw : sequence of (s, s) array-likes
        Transition matrices. A diagonal entry given as ``IMPLIED`` (``None``)
        or NaN is completed as one minus the row's off-diagonal sum.
    s : int
        Number of states.
    hold_last : bool, optional
        Defaults to True for a single matrix, False otherwise.
    renormalize : bool
        Rescale rows that fail the sum-to-one check instead of rejecting
        them, with a warning.

    Raises
    ------
    BadDimensionError, NegativeResidualError, NotStochasticError
    """
    if isinstance(raw, np.ndarray) and raw.ndim == 2:
        raw = [raw]
    mats = []
    for k, m in enumerate(raw):
        try:
            arr = np.array(m, dtype=float)
        except (TypeError, ValueError) as exc:
            raise NotStochasticError(f"matrix {k}: non-numeric entries ({exc})") from None
        if arr.shape != (s, s):
            raise BadDimensionError(f"matrix {k} has shape {arr.shape}, expected ({s}, {s})")
        off = ~np.eye(s, dtype=bool)
        if np.isnan(arr[off]).any():
            raise NotStochasticError(f"matrix {k}: only diagonal entries may be implied")
        if (arr[np.isfinite(arr)] < 0).any():
            raise NotStochasticError(f"matrix {k}: probabilities must be non-negative")
        # entries above 1 surface as a negative residual or a bad row sum
        for row in range(s):
            arr[row] = _complete_row(arr[row], row, k, renormalize)
        mats.append(arr)
    if not mats:
        raise BadDimensionError("a schedule needs at least one matrix")
    if hold_last is None:
        hold_last = len(mats) == 1
    return TransitionSchedule(np.stack(mats), hold_last=hold_last)


def _complete_row(row, i, k, renormalize):
    row = row.copy()
    if np.isnan(row[i]):
        off_sum = np.sum(np.delete(row, i))
        residual = 1.0 - off_sum
        if residual < -STOCHASTIC_TOL:
            if not renormalize:
                raise NegativeResidualError(
                    f"matrix {k}, row {i}: off-diagonal probabilities sum to "
                    f"{off_sum!r} > 1"
                )
            warnings.warn(f"matrix {k}, row {i}: rescaled off-diagonals, diagonal set to 0")
            row[i] = 0.0
            return row / off_sum
        row[i] = max(residual, 0.0)
        return row
    total = row.sum()
    if abs(total - 1.0) > STOCHASTIC_TOL:
        if not renormalize or total <= 0:
            raise NotStochasticError(f"matrix {k}, row {i} sums to {total!r}, not 1")
        warnings.warn(f"matrix {k}, row {i}: sum {total!r} renormalized to 1")
        return row / total
    return row


def check_distribution(p, s: Optional[int] = None) -> np.ndarray:
    """Validate an occupancy distribution and return it as a float array."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise BadDimensionError(f"occupancy must be a non-empty vector, got shape {p.shape}")
    if s is not None and p.size != s:
        raise BadDimensionError(f"occupancy has {p.size} entries, expected {s}")
    if not np.all(np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0:
        raise NotStochasticError("occupancy probabilities must lie in [0, 1]")
    if abs(p.sum() - 1.0) > STOCHASTIC_TOL:
        raise NotStochasticError(f"occupancy sums to {p.sum()!r}, not 1")
    return p


def _check_n0(n0) -> int:
    if isinstance(n0, (bool, np.bool_)) or int(n0) != n0 or n0 < 1:
        raise ModelError(f"cohort size must be a positive integer, got {n0!r}")
    return int(n0)


def occupancy_trajectory(p0, schedule: TransitionSchedule, horizon: int) -> np.ndarray:
    """Occupancy distributions for cycles ``0..horizon``, shape ``(horizon+1, s)``."""
    p0 = check_distribution(p0, schedule.s)
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    if not schedule.covers(horizon):
        raise HorizonExceedsScheduleError(
            f"horizon {horizon} exceeds schedule length {len(schedule)} "
            "and hold_last is off"
        )
    out = np.empty((horizon + 1, p0.size))
    out[0] = p0
    for u in range(horizon):
        out[u + 1] = out[u] @ schedule.matrix_at(u)
    return out


def propagate_occupancy(p0, schedule: TransitionSchedule, z: int) -> np.ndarray:
    """Occupancy distribution after ``z`` cycles (``z`` matrix applications)."""
    return occupancy_trajectory(p0, schedule, z)[-1]


def individual_pmf(p, y) -> float:
    """Probability that one individual's occupancy indicator equals ``y``."""
    p = check_distribution(p)
    y = np.asarray(y)
    if y.shape != p.shape or not np.all((y == 0) | (y == 1)) or y.sum() != 1:
        raise BadIndicatorError(f"{y!r} is not a unit indicator vector of length {p.size}")
    return float(np.prod(np.power(p, y)))


def individual_covariance(p) -> np.ndarray:
    """Covariance of one individual's occupancy indicator vector."""
    p = check_distribution(p)
    cov = 0.0 - np.outer(p, p)
    np.fill_diagonal(cov, p * (1.0 - p))
    return cov


def cohort_mean(n0: int, p) -> np.ndarray:
    """Expected per-state counts of a cohort of ``n0``."""
    return _check_n0(n0) * check_distribution(p)


def cohort_covariance(n0: int, p) -> np.ndarray:
    """Covariance of the per-state counts; ``n0`` times the individual covariance."""
    return _check_n0(n0) * individual_covariance(p)


def cohort_log_pmf(n0: int, p, n) -> float:
    """Log-probability of the count vector ``n`` under the multinomial law.

    Returns ``-inf`` when a state with zero probability is occupied.
    """
    n0 = _check_n0(n0)
    p = check_distribution(p)
    n = np.asarray(n)
    if n.shape != p.shape:
        raise BadDimensionError(f"counts have shape {n.shape}, expected {p.shape}")
    if np.any(n < 0) or np.any(n != np.round(n)):
        raise CountMismatchError("counts must be non-negative integers")
    if n.sum() != n0:
        raise CountMismatchError(f"counts sum to {n.sum()}, cohort size is {n0}")
    n = n.astype(float)
    log_coef = gammaln(n0 + 1.0) - gammaln(n + 1.0).sum()
    return float(log_coef + xlogy(n, p).sum())


@dataclass(frozen=True, eq=False)
class CohortSpec:
    """A closed cohort: who starts where, and the rules they move under."""

    state_space: StateSpace
    schedule: TransitionSchedule
    initial_counts: np.ndarray
    horizon: int
    cycle_length: float = 1.0
    n0: Optional[int] = None

    def __post_init__(self):
        s = self.state_space.s
        counts = np.asarray(self.initial_counts)
        if counts.shape != (s,):
            raise BadDimensionError(f"initial counts have shape {counts.shape}, expected ({s},)")
        if np.any(counts < 0) or np.any(counts != np.round(counts)):
            raise CountMismatchError("initial counts must be non-negative integers")
        counts = counts.astype(np.int64)
        counts.setflags(write=False)
        total = int(counts.sum())
        n0 = total if self.n0 is None else self.n0
        if n0 != total:
            raise CountMismatchError(f"initial counts sum to {total}, but n0 is {n0}")
        n0 = _check_n0(n0)
        if self.schedule.s != s:
            raise BadDimensionError(
                f"schedule matrices are {self.schedule.s}x{self.schedule.s} "
                f"for {s} states"
            )
        horizon = int(self.horizon)
        if horizon != self.horizon or horizon < 0:
            raise ModelError(f"horizon must be a non-negative integer, got {self.horizon!r}")
        if not self.schedule.covers(horizon):
            raise HorizonExceedsScheduleError(
                f"horizon {horizon} exceeds schedule length {len(self.schedule)} "
                "and hold_last is off"
            )
        if not float(self.cycle_length) > 0:
            raise ModelError("cycle length must be positive")
        object.__setattr__(self, "initial_counts", counts)
        object.__setattr__(self, "n0", n0)
        object.__setattr__(self, "horizon", horizon)
        object.__setattr__(self, "cycle_length", float(self.cycle_length))

    @property
    def s(self) -> int:
        return self.state_space.s

    @property
    def initial_distribution(self) -> np.ndarray:
        return self.initial_counts / self.n0

    def __eq__(self, other):
        if not isinstance(other, CohortSpec):
            return NotImplemented
        return (
            self.state_space == other.state_space
            and self.schedule == other.schedule
            and np.array_equal(self.initial_counts, other.initial_counts)
            and self.n0 == other.n0
            and self.horizon == other.horizon
            and self.cycle_length == other.cycle_length
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class MomentTrajectory:
    """Exact per-cycle mean and covariance of the cohort counts.

    ``mean`` has shape ``(Z+1, s)``, ``covariance`` ``(Z+1, s, s)``.
    ``occupancy`` is the occupancy distribution of a randomly chosen member.
    """

    state_space: StateSpace
    n0: int
    occupancy: np.ndarray
    mean: np.ndarray
    covariance: np.ndarray = field(repr=False)

    @property
    def horizon(self) -> int:
        return self.mean.shape[0] - 1

    @property
    def variance(self) -> np.ndarray:
        return np.diagonal(self.covariance, axis1=1, axis2=2).copy()

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(self.variance)


def moment_trajectory(spec: CohortSpec) -> MomentTrajectory:
    """Exact moments of the cohort counts for cycles ``0..spec.horizon``.

    Individuals who start in the same state form one multinomial
    sub-cohort; the count vector is the sum of these independent
    sub-cohorts. When everyone starts in one state this is a single
    multinomial, and the covariance is ``cohort_covariance(n0, p)``.
    """
    s, Z = spec.s, spec.horizon
    starts = np.flatnonzero(spec.initial_counts)
    sizes = spec.initial_counts[starts]
    # one occupancy row per starting state, propagated together
    rows = np.eye(s)[starts]
    occupancy = np.empty((Z + 1, s))
    mean = np.empty((Z + 1, s))
    cov = np.empty((Z + 1, s, s))
    p0 = spec.initial_distribution
    for z in range(Z + 1):
        if z > 0:
            P = spec.schedule.matrix_at(z - 1)
            rows = rows @ P
            p0 = p0 @ P
        occupancy[z] = p0
        if starts.size == 1:
            mean[z] = cohort_mean(spec.n0, rows[0])
            cov[z] = cohort_covariance(spec.n0, rows[0])
        else:
            mean[z] = sizes @ rows
            cov[z] = sum(int(n) * individual_covariance(r) for n, r in zip(sizes, rows))
    return MomentTrajectory(spec.state_space, spec.n0, occupancy, mean, cov)


def four_state_example(n0: int = 10000, horizon: int = 50,
                       labels: Sequence[str] = ("S1", "S2", "S3", "S4")) -> CohortSpec:
    """Progressive four-state model with an absorbing last state.

    Off-diagonal one-cycle probabilities: S1->S2 0.1, S1->S3 0.05,
    S1->S4 0.14, S2->S3 0.07, S2->S4 0.17, S3->S4 0.11. The whole cohort
    starts in S1.
    """
    I = IMPLIED
    raw = [
        [I, 0.10, 0.05, 0.14],
        [0.0, I, 0.07, 0.17],
        [0.0, 0.0, I, 0.11],
        [0.0, 0.0, 0.0, I],
    ]
    counts = np.zeros(4, dtype=np.int64)
    counts[0] = n0
    return CohortSpec(
        StateSpace(tuple(labels)),
        validate_schedule([raw], 4),
        counts,
        horizon=horizon,
        cycle_length=1.0,
    )

"""
Dirichlet-multinomial estimation of a time-invariant transition matrix.

Each row of the transition matrix gets an independent Dirichlet prior.
The one-cycle transitions observed out of state ``k`` are multinomial
given row ``k``, so the posterior is again Dirichlet with the observed
transition counts added to the concentration parameters.
"""

from dataclasses import dataclass
from typing import Iterable, List, Optional

import numpy as np
from scipy.special import logsumexp

from .core import TransitionSchedule, validate_schedule
from .errors import (
    BadDimensionError,
    DimensionMismatchError,
    ModelError,
    TimeVaryingUnsupportedError,
)

__all__ = [
    "DirichletRows",
    "uniform_prior",
    "count_transitions",
    "posterior_update",
    "posterior_mean",
    "sample_matrices",
]


@dataclass(frozen=True, eq=False)
class DirichletRows:
    """One Dirichlet per origin state; ``alphas[k]`` parameterizes row ``k``."""

    alphas: np.ndarray

    def __post_init__(self):
        a = np.array(self.alphas, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.size == 0:
            raise BadDimensionError(f"alphas must be a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)) or np.any(a <= 0):
            raise ModelError("Dirichlet concentration parameters must be positive and finite")
        a.setflags(write=False)
        object.__setattr__(self, "alphas", a)

    @property
    def s(self) -> int:
        return self.alphas.shape[0]


def uniform_prior(s: int) -> DirichletRows:
    return DirichletRows(np.ones((s, s)))


def count_transitions(paths: Iterable, s: int,
                      schedule: Optional[TransitionSchedule] = None) -> np.ndarray:
    """Tally consecutive state pairs over a collection of paths.

    Parameters
    ----------
    paths : iterable of int sequences, or 2-D int array (one path per row)
        Zero-based state indices per cycle.
    s : int
        Number of states.
    schedule : TransitionSchedule, optional
        Schedule the paths were generated under. Pooling is only valid for
        a single matrix, so a time-varying schedule is rejected.

    Returns
    -------
    ndarray of int64, shape ``(s, s)``; entry ``(k, l)`` counts ``k -> l`` steps.
    """
    if schedule is not None and len(schedule) > 1:
        raise TimeVaryingUnsupportedError(
            f"schedule has {len(schedule)} matrices; transitions cannot be pooled"
        )
    counts = np.zeros(s * s, dtype=np.int64)
    if isinstance(paths, np.ndarray) and paths.ndim == 2:
        paths = [paths]
    for path in paths:
        path = np.asarray(path, dtype=np.int64)
        if path.size == 0:
            continue
        if path.min() < 0 or path.max() >= s:
            raise BadDimensionError(f"path visits a state outside 0..{s - 1}")
        if path.ndim == 1:
            path = path[np.newaxis]
        codes = (path[:, :-1] * s + path[:, 1:]).ravel()
        counts += np.bincount(codes, minlength=s * s)
    return counts.reshape(s, s)


def posterior_update(prior: DirichletRows, counts) -> DirichletRows:
    """Conjugate update: posterior alphas are prior alphas plus counts."""
    counts = np.asarray(counts)
    if counts.shape != prior.alphas.shape:
        raise DimensionMismatchError(
            f"counts have shape {counts.shape}, prior has {prior.alphas.shape}"
        )
    if np.any(counts < 0) or np.any(counts != np.round(counts)):
        raise ModelError("transition counts must be non-negative integers")
    return DirichletRows(prior.alphas + counts)


def posterior_mean(rows: DirichletRows) -> TransitionSchedule:
    """Mean transition matrix, as a time-invariant schedule."""
    a = rows.alphas
    return validate_schedule([a / a.sum(axis=1, keepdims=True)], rows.s, hold_last=True)


def _log_gamma_variates(rng, alphas):
    # shape < 1 would underflow to exactly 0; use X = Y * U**(1/a), Y ~ Gamma(a+1)
    small = alphas < 1.0
    log_x = np.log(rng.standard_gamma(np.where(small, alphas + 1.0, alphas)))
    u = rng.random(alphas.shape)
    return log_x + np.where(small, np.log(u) / alphas, 0.0)


def sample_matrices(rows: DirichletRows, count: int, seed) -> List[np.ndarray]:
    """Draw ``count`` transition matrices from the row-wise Dirichlet.

    Each row is a vector of independent gamma variates normalized to one,
    computed in log space so very small concentrations stay well defined.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    alphas = np.broadcast_to(rows.alphas, (count,) + rows.alphas.shape)
    log_g = _log_gamma_variates(rng, alphas)
    draws = np.exp(log_g - logsumexp(log_g, axis=2, keepdims=True))
    return list(draws)

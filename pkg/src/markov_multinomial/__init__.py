"""Exact multinomial moments for closed-cohort Markov state-transition models."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .core import (  # noqa: E402
    IMPLIED,
    CohortSpec,
    MomentTrajectory,
    StateSpace,
    TransitionSchedule,
    check_distribution,
    cohort_covariance,
    cohort_log_pmf,
    cohort_mean,
    four_state_example,
    individual_covariance,
    individual_pmf,
    moment_trajectory,
    occupancy_trajectory,
    propagate_occupancy,
    validate_schedule,
)
from .microsim import (  # noqa: E402
    ComparisonReport,
    ReplicationSummary,
    compare,
    replicate,
    simulate_cohort,
    simulate_replications,
    summarize,
)
from .bayes import (  # noqa: E402
    DirichletRows,
    count_transitions,
    posterior_mean,
    posterior_update,
    sample_matrices,
    uniform_prior,
)
from .formats import ModelFile, format_model, load_model, parse_model  # noqa: E402

"""Non-reversible continuous-time samplers from rebalanced Markov jump processes."""
from ._jit import NUMBA_ENABLED
from .errors import AbsorbingStateError, DomainError, FormatError, NumericalError, SingularReflectionError
from .mjp_core import (
    BalancingFunction,
    EventKind,
    JumpRecord,
    JumpTrace,
    LiftedState,
    RateMenu,
    RngStream,
    balancing_eval,
    balancing_eval_logratio,
    gillespie_step,
    minimal_flip_rate,
    rao_blackwell_average,
    superpose,
)
from .samplers import (
    BJSConfig,
    Budget,
    FFFConfig,
    HMCConfig,
    LeapfrogCache,
    bjs_apply_event,
    bjs_rate_menu,
    fff_apply_event,
    fff_rate_menu,
    hmc_baseline,
    leapfrog_step,
    rhmc_rate_menu,
    run_sampler,
)
from .targets import Target, banana_target, gaussian_target, load_german_credit, logistic_target

__version__ = "0.1.0"

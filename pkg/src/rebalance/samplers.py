"""Lifted-state samplers on R^d x R^d.

Continuous-time samplers built from the rebalancing construction:

* ``fff``  - leapfrog jumps, minimal flips, momentum refreshment
* ``rhmc`` - the same jumps with the Metropolised flip rate ``1 - min(1, e^-dH)``
* ``bjs``  - linear steps, gradient reflections, minimal flips, refreshment
* ``bgw``  - linear steps and minimal flips only
* ``rgw``  - linear steps with Metropolised flips

plus discrete-time ``hmc`` as the reversible baseline.  The momentum law is
standard Gaussian and the involution is ``(q, p) -> (q, -p)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernels as K
from .errors import AbsorbingStateError, NumericalError, SingularReflectionError
from .mjp_core import (
    BalancingFunction,
    EventKind,
    JumpTrace,
    LiftedState,
    RateMenu,
    RngStream,
)
from .targets import GAUSSIAN, Target

__all__ = [
    "LiftedState",
    "FFFConfig",
    "BJSConfig",
    "HMCConfig",
    "LeapfrogCache",
    "Budget",
    "Counters",
    "RunResult",
    "HMCChain",
    "SAMPLERS",
    "leapfrog_step",
    "hamiltonian_error",
    "fff_rate_menu",
    "fff_apply_event",
    "rhmc_rate_menu",
    "bjs_rate_menu",
    "bjs_apply_event",
    "hmc_baseline",
    "run_sampler",
]

logger = logging.getLogger(__name__)

SAMPLERS = ("fff", "rhmc", "bjs", "bgw", "rgw", "hmc")
_CODES = {"fff": K.FFF, "rhmc": K.RHMC, "bjs": K.BJS, "bgw": K.BGW, "rgw": K.RGW, "hmc": K.HMC}
GRADIENT_FREE = ("bgw", "rgw")

_NO_BUDGET = np.iinfo(np.int64).max


@dataclass(frozen=True)
class FFFConfig:
    """Leapfrog-jump sampler settings: step size, steps per jump, refresh rate."""

    epsilon: float
    L: int = 1
    lambda_refresh: float = 1.0
    balancing: BalancingFunction = BalancingFunction.SQRT

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError("L must be a positive integer")
        if not self.lambda_refresh > 0:
            raise ValueError("lambda_refresh must be positive")
        object.__setattr__(self, "L", int(self.L))
        object.__setattr__(self, "balancing", BalancingFunction.parse(self.balancing))


@dataclass(frozen=True)
class BJSConfig:
    """Linear-step sampler settings; ``variant`` is one of bjs, bgw, rgw."""

    epsilon: float
    lambda_refresh: float = 1.0
    balancing: BalancingFunction = BalancingFunction.SQRT
    variant: str = "bjs"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.lambda_refresh > 0:
            raise ValueError("lambda_refresh must be positive")
        if self.variant not in ("bjs", "bgw", "rgw"):
            raise ValueError(f"unknown variant {self.variant!r}")
        object.__setattr__(self, "balancing", BalancingFunction.parse(self.balancing))


@dataclass(frozen=True)
class HMCConfig:
    epsilon: float
    L: int = 1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if int(self.L) != self.L or self.L < 1:
            raise ValueError("L must be a positive integer")
        object.__setattr__(self, "L", int(self.L))


# --------------------------------------------------------------------------
# leapfrog


def leapfrog_step(q, p, grad_q, epsilon: float, target: Target):
    """One leapfrog step; returns ``(q', p', grad U(q'))``."""
    q = np.array(q, dtype=np.float64)
    p = np.array(p, dtype=np.float64)
    g = np.array(grad_q, dtype=np.float64)
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    with np.errstate(all="ignore"):
        u = K.leapfrog(*target.kernel_args, q, p, g, float(epsilon))
    if not (np.isfinite(u) and np.all(np.isfinite(q)) and np.all(np.isfinite(p)) and np.all(np.isfinite(g))):
        raise NumericalError("leapfrog produced non-finite values", state=(q, p))
    return q, p, g


def hamiltonian_error(target: Target, q, p, epsilon: float, L: int) -> float:
    """``H(LF^L(q, p)) - H(q, p)``; ``inf`` for a divergent trajectory."""
    q = np.ascontiguousarray(q, dtype=np.float64)
    p = np.ascontiguousarray(p, dtype=np.float64)
    u0, g0 = target.potential_and_gradient(q)
    out = np.empty((3, target.dim))
    with np.errstate(all="ignore"):
        u, _, ok = K.integrate(*target.kernel_args, q, p, g0, float(epsilon), int(L), out[0], out[1], out[2])
    if not ok:
        return np.inf
    return float(u + 0.5 * out[1] @ out[1] - u0 - 0.5 * p @ p)


@dataclass(eq=False)
class LeapfrogCache:
    """Forward and backward ``L``-step trajectories from a state.

    ``forward_dH = H(LF^L(q, p)) - H(q, p)`` and
    ``backward_dH = H(LF^L(q, -p)) - H(q, p)``.  An endpoint is ``None``
    when not computed or when its trajectory diverged (``dH = inf``).
    """

    state: LiftedState
    forward_dH: Optional[float]
    backward_dH: Optional[float]
    forward_endpoint: Optional[LiftedState]
    backward_endpoint: Optional[LiftedState]
    gradient_at_q: np.ndarray
    grad_evals: int = 0
    _W: np.ndarray = field(repr=False, default=None)
    _S: np.ndarray = field(repr=False, default=None)

    @classmethod
    def _from_workspace(cls, W, S, grad_evals):
        def endpoint(row, valid, u):
            if valid and np.isfinite(u):
                return LiftedState(W[row].copy(), W[row + 1].copy())
            return None

        return cls(
            state=LiftedState(W[0].copy(), W[1].copy()),
            forward_dH=float(S[3]) if S[5] else None,
            backward_dH=float(S[4]) if S[6] else None,
            forward_endpoint=endpoint(3, S[5], S[1]),
            backward_endpoint=endpoint(6, S[6], S[2]),
            gradient_at_q=W[2].copy(),
            grad_evals=grad_evals,
            _W=W.copy(),
            _S=S.copy(),
        )


def _fresh_lf_workspace(state: LiftedState, target: Target):
    d = target.dim
    if state.q.shape != (d,):
        raise ValueError(f"state dimension {state.q.shape} does not match target dimension {d}")
    W = np.zeros((9, d))
    S = np.zeros(8)
    W[0] = state.q
    W[1] = state.p
    S[0], W[2] = target.potential_and_gradient(state.q)
    return W, S, 1


def _lf_menu(sampler, state, cfg, target, cache, gcode):
    if cache is not None and cache.state == state and cache._W is not None:
        W, S, spent = cache._W.copy(), cache._S.copy(), 0
    else:
        W, S, spent = _fresh_lf_workspace(state, target)
    C = np.zeros(8, dtype=np.int64)
    with np.errstate(all="ignore"):
        K.lf_prepare(sampler, W, S, C, float(cfg.epsilon), cfg.L, *target.kernel_args)
        rates = np.zeros(4)
        K.lf_rates(sampler, gcode, S, float(cfg.lambda_refresh), rates)
    if not np.all(np.isfinite(rates)):
        raise NumericalError("non-finite rate", state=(state.q, state.p))
    menu = RateMenu(
        ((EventKind.JUMP, rates[K.JUMP]), (EventKind.FLIP, rates[K.FLIP]), (EventKind.REFRESH, rates[K.REFRESH]))
    )
    return menu, LeapfrogCache._from_workspace(W, S, spent + int(C[K.C_GRADS]))


def fff_rate_menu(state: LiftedState, cfg: FFFConfig, target: Target, cache: Optional[LeapfrogCache] = None):
    """Jump, flip and refresh rates of the Flip-Frog-Fresh sampler at ``state``.

    Jump rate ``g(exp(-forward_dH))``; flip rate
    ``(g(exp(-backward_dH)) - g(exp(-forward_dH)))^+``; refresh rate
    ``lambda_refresh``.  Reuses ``cache`` when it belongs to ``state``.
    """
    return _lf_menu(K.FFF, state, cfg, target, cache, cfg.balancing.code)


def rhmc_rate_menu(state: LiftedState, cfg: FFFConfig, target: Target, cache: Optional[LeapfrogCache] = None):
    """Rates of continuous-time randomized HMC: jump ``min(1, e^-dH)``, flip
    ``1 - min(1, e^-dH)``.  ``cfg.balancing`` is ignored."""
    return _lf_menu(K.RHMC, state, cfg, target, cache, BalancingFunction.METROPOLIS.code)


def fff_apply_event(state: LiftedState, event: EventKind, cfg: FFFConfig, target: Target,
                    cache: LeapfrogCache, rng: RngStream):
    """Move to the post-event state and update the trajectory cache.

    After a jump the new backward trajectory is the reversed old forward one;
    after a flip forward and backward swap; a refresh invalidates both.
    """
    event = EventKind(event)
    if event not in (EventKind.JUMP, EventKind.FLIP, EventKind.REFRESH):
        raise ValueError(f"{event.name} is not an event of the leapfrog samplers")
    if cache is None or cache.state != state:
        raise ValueError("cache does not belong to state; call fff_rate_menu first")
    if event is EventKind.JUMP and cache.forward_endpoint is None:
        raise ValueError("jump requested but the forward trajectory is unavailable")
    W, S = cache._W.copy(), cache._S.copy()
    K.lf_apply(int(event), W, S, rng.generator)
    new_cache = LeapfrogCache._from_workspace(W, S, 0)
    return new_cache.state, new_cache


def bjs_rate_menu(state: LiftedState, cfg: BJSConfig, target: Target) -> RateMenu:
    """Rates of the linear-step samplers at ``state``.

    BJS: jump ``g(e^{-(U(q+eps p)-U(q))})``, bounce ``eps <p, grad U>^+``,
    flip ``(g(e^{-(U(q-eps p)-U(q))}) - jump - eps <p, grad U>)^+``.
    BGW drops the bounce term; RGW uses Metropolis jump and ``1 - jump`` flip.
    """
    sampler = _CODES[cfg.variant]
    W, S = _fresh_ls_workspace(state, target)
    C = np.zeros(8, dtype=np.int64)
    rates = np.zeros(4)
    with np.errstate(all="ignore"):
        K.ls_prepare(K.BJS, W, S, C, float(cfg.epsilon), *target.kernel_args)
        K.ls_rates(sampler, cfg.balancing.code, W, S, float(cfg.epsilon), float(cfg.lambda_refresh), rates)
    if not np.all(np.isfinite(rates)):
        raise NumericalError("non-finite rate", state=(state.q, state.p))
    entries = [(EventKind.JUMP, rates[K.JUMP])]
    if sampler == K.BJS:
        entries.append((EventKind.BOUNCE, rates[K.BOUNCE]))
    entries += [(EventKind.FLIP, rates[K.FLIP]), (EventKind.REFRESH, rates[K.REFRESH])]
    return RateMenu(tuple(entries))


def _fresh_ls_workspace(state, target):
    d = target.dim
    if state.q.shape != (d,):
        raise ValueError(f"state dimension {state.q.shape} does not match target dimension {d}")
    W = np.zeros((3, d))
    S = np.zeros(8)
    W[0] = state.q
    W[1] = state.p
    S[0] = target.potential(state.q)
    return W, S


def bjs_apply_event(state: LiftedState, event: EventKind, cfg: BJSConfig, target: Target, rng: RngStream):
    """Post-event state: step ``q + eps p``, reflection of ``p`` across the
    level set of ``U``, momentum flip or momentum refresh."""
    event = EventKind(event)
    if event is EventKind.BOUNCE and cfg.variant != "bjs":
        raise ValueError(f"{cfg.variant} has no bounce events")
    W, S = _fresh_ls_workspace(state, target)
    W[2] = target.gradient(state.q)
    if event is EventKind.BOUNCE and not np.dot(W[2], W[2]) > 0:
        raise SingularReflectionError("cannot reflect across a vanishing gradient")
    K.ls_apply(int(event), W, S, float(cfg.epsilon), rng.generator)
    return LiftedState(W[0].copy(), W[1].copy())


# --------------------------------------------------------------------------
# whole runs


@dataclass(frozen=True)
class Budget:
    """Stop after ``max_grad_evals`` gradients or ``max_jumps`` events,
    whichever comes first; ``None`` means unlimited."""

    max_grad_evals: Optional[int] = None
    max_jumps: Optional[int] = None

    def __post_init__(self):
        if self.max_grad_evals is None and self.max_jumps is None:
            raise ValueError("a budget needs max_grad_evals or max_jumps")
        for v in (self.max_grad_evals, self.max_jumps):
            if v is not None and v < 0:
                raise ValueError("budgets must be nonnegative")

    @property
    def is_zero(self) -> bool:
        return self.max_grad_evals == 0 or self.max_jumps == 0


@dataclass
class Counters:
    jumps: int = 0
    bounces: int = 0
    flips: int = 0
    refreshes: int = 0
    grad_evals: int = 0
    divergences: int = 0

    @property
    def n_events(self) -> int:
        return self.jumps + self.bounces + self.flips + self.refreshes

    @property
    def flip_proportion(self) -> Optional[float]:
        """flips / (flips + jumps + bounces); refreshes excluded."""
        moves = self.flips + self.jumps + self.bounces
        return self.flips / moves if moves else None

    def as_dict(self) -> dict:
        return {
            "jump": self.jumps,
            "bounce": self.bounces,
            "flip": self.flips,
            "refresh": self.refreshes,
        }

    @classmethod
    def _from_array(cls, C):
        return cls(int(C[0]), int(C[1]), int(C[2]), int(C[3]), int(C[4]), int(C[5]))


@dataclass
class RunResult:
    """Output of :func:`run_sampler`.

    ``samples`` are positions on the time grid ``k * stride`` (every
    iteration for HMC); ``records`` is the embedded jump chain, or ``None``
    when not stored.
    """

    sampler: str
    records: Optional[JumpTrace]
    samples: np.ndarray
    counters: Counters
    total_time: float
    stride: Optional[float]
    final_state: Optional[LiftedState] = None


class _Grid:
    """Turns chunks of (state, holding time) into samples on a fixed grid."""

    def __init__(self, dim, stride=None, n_samples=None):
        self.dim = dim
        self.stride = stride
        self.n_samples = n_samples
        self.t = 0.0
        self.next_k = 0
        self.samples = []
        self._buffer = []

    def add(self, q, hold):
        if self.stride is None:
            self._buffer.append((q.copy(), hold.copy()))
            return
        starts = self.t + np.concatenate(([0.0], np.cumsum(hold[:-1])))
        t_end = self.t + np.sum(hold)
        k_hi = int(np.floor(t_end / self.stride)) + 1
        times = np.arange(self.next_k, k_hi) * self.stride
        times = times[times < t_end]
        if times.shape[0]:
            idx = np.searchsorted(starts, times, side="right") - 1
            self.samples.append(q[idx])
            self.next_k += times.shape[0]
        self.t = t_end

    def finish(self):
        if self.stride is None:
            if not self._buffer:
                return np.empty((0, self.dim)), None, 0.0
            q = np.concatenate([b[0] for b in self._buffer])
            hold = np.concatenate([b[1] for b in self._buffer])
            total = float(np.sum(hold))
            self.stride = total / self.n_samples
            self.add(q, hold)
            self._buffer = []
        out = np.concatenate(self.samples) if self.samples else np.empty((0, self.dim))
        return out, self.stride, self.t


def _parse_sampler(sampler, config):
    name = str(sampler).lower()
    if name not in _CODES:
        raise ValueError(f"unknown sampler {sampler!r}; expected one of {SAMPLERS}")
    expected = {"fff": FFFConfig, "rhmc": FFFConfig, "hmc": HMCConfig}.get(name, BJSConfig)
    if not isinstance(config, expected):
        raise TypeError(f"{name} needs a {expected.__name__}, got {type(config).__name__}")
    if expected is BJSConfig and config.variant != name:
        config = replace(config, variant=name)
    return name, config


def run_sampler(sampler: str, config, target: Target, rng: RngStream, budget: Budget,
                discretization_stride: Optional[float] = None, n_samples: Optional[int] = None,
                initial_q=None, store_records: bool = True, chunk_size: int = 65536) -> RunResult:
    """Simulate a sampler until ``budget`` is exhausted.

    Gradient budgets stop at the first event at which the cumulative gradient
    count reaches the budget.  Positions are read off the trajectory at times
    ``k * discretization_stride`` (``k = 0, 1, ...``, strictly before the
    final jump time); with ``n_samples`` instead the stride is
    ``total_time / n_samples``.  HMC returns every iteration.
    """
    name, config = _parse_sampler(sampler, config)
    code = _CODES[name]
    d = target.dim
    if name in GRADIENT_FREE and budget.max_grad_evals is not None:
        raise ValueError(f"{name} evaluates no gradients; use a jump budget")
    if discretization_stride is not None and n_samples is not None:
        raise ValueError("give discretization_stride or n_samples, not both")
    if discretization_stride is not None and not discretization_stride > 0:
        raise ValueError("discretization_stride must be positive")
    if discretization_stride is None and n_samples is None:
        n_samples = 10_000
    if n_samples is not None and n_samples < 1:
        raise ValueError("n_samples must be positive")

    q0 = np.zeros(d) if initial_q is None else np.array(initial_q, dtype=np.float64)
    if q0.shape != (d,) or not np.all(np.isfinite(q0)):
        raise ValueError(f"initial_q must be a finite vector of length {d}")

    if code in (K.FFF, K.RHMC, K.HMC) and target.kind == GAUSSIAN and config.epsilon >= 2.0:
        # unit curvature: leapfrog is unstable for eps >= 2
        logger.warning("epsilon=%g is at or beyond the leapfrog stability limit 2 for this target", config.epsilon)

    if budget.is_zero:
        empty = JumpTrace.empty(d) if store_records else None
        return RunResult(name, empty, np.empty((0, d)), Counters(), 0.0, discretization_stride)

    max_grads = _NO_BUDGET if budget.max_grad_evals is None else int(budget.max_grad_evals)
    max_events = _NO_BUDGET if budget.max_jumps is None else int(budget.max_jumps)
    cap = int(chunk_size)
    out_q = np.empty((cap, d))
    out_p = np.empty((cap, d))
    out_rate = np.ones(cap)
    out_event = np.empty(cap, dtype=np.int8)
    out_grads = np.empty(cap, dtype=np.int64)
    out_hold = np.empty(cap)
    C = np.zeros(8, dtype=np.int64)
    S = np.zeros(8)
    gen = rng.generator
    targs = target.kernel_args
    parts = []
    sample_parts = []
    grid = None if code == K.HMC else _Grid(d, discretization_stride, n_samples)

    if code == K.HMC:
        W = np.zeros((6, d))
        W[0] = q0
        S[0], W[2] = target.potential_and_gradient(q0)
        C[K.C_GRADS] = 1
        out_pos = np.empty((cap, d))
    elif code in (K.FFF, K.RHMC):
        W = np.zeros((9, d))
        W[0] = q0
        W[1] = gen.standard_normal(d)
        S[0], W[2] = target.potential_and_gradient(q0)
        C[K.C_GRADS] = 1
    else:
        W = np.zeros((3, d))
        W[0] = q0
        W[1] = gen.standard_normal(d)
        if code == K.BJS:
            S[0], W[2] = target.potential_and_gradient(q0)
            S[5] = 1.0
            C[K.C_GRADS] = 1
        else:
            S[0] = target.potential(q0)

    with np.errstate(all="ignore"):
        while True:
            if code == K.HMC:
                n, status = K.hmc_chunk(config.epsilon, config.L, *targs, W, S, C, gen, max_events, max_grads,
                                        out_q, out_p, out_event, out_grads, out_pos)
                sample_parts.append(out_pos[:n].copy())
            else:
                n, status = K.run_chunk(code, config.balancing.code if name != "rhmc" else 0,
                                        float(config.epsilon), getattr(config, "L", 1),
                                        float(config.lambda_refresh), *targs, W, S, C, gen,
                                        max_events, max_grads, out_q, out_p, out_rate, out_event,
                                        out_grads, out_hold)
                if n:
                    grid.add(out_q[:n], out_hold[:n])
            if store_records and n:
                parts.append(JumpTrace(out_q[:n].copy(), out_p[:n].copy(), out_rate[:n].copy(),
                                       out_event[:n].copy(), out_grads[:n].copy()))
            if status == K.ST_CAPACITY:
                continue
            if status == K.ST_BUDGET:
                break
            index = int(C[K.C_EVENTS])
            if status == K.ST_ABSORBING:
                raise AbsorbingStateError(f"{name}: zero total rate at jump {index}")
            raise NumericalError(f"{name}: non-finite rate or state", jump_index=index,
                                 state=(W[0].copy(), W[1].copy()))

    records = JumpTrace.concatenate(parts, d) if store_records else None
    counters = Counters._from_array(C)
    if code == K.HMC:
        samples = np.concatenate(sample_parts) if sample_parts else np.empty((0, d))
        return RunResult(name, records, samples, counters, float(counters.n_events), None,
                         LiftedState(W[0].copy(), W[1].copy()))
    samples, stride, total_time = grid.finish()
    return RunResult(name, records, samples, counters, total_time, stride, LiftedState(W[0].copy(), W[1].copy()))


@dataclass
class HMCChain:
    positions: np.ndarray
    n_accepted: int
    n_divergent: int
    grad_evals: int

    @property
    def acceptance_rate(self) -> float:
        n = self.positions.shape[0]
        return self.n_accepted / n if n else float("nan")


def hmc_baseline(target: Target, epsilon: float, L: int, n_iterations: int, rng: RngStream,
                 initial_q=None) -> HMCChain:
    """Classical HMC with full momentum refreshment.

    Divergent trajectories are rejected and counted.  Gradient accounting
    matches the continuous-time samplers: one unit per gradient, the
    initial one included.
    """
    cfg = HMCConfig(epsilon, L)
    res = run_sampler("hmc", cfg, target, rng, Budget(max_jumps=int(n_iterations)), initial_q=initial_q,
                      store_records=False)
    c = res.counters
    return HMCChain(res.samples, c.jumps, c.divergences, c.grad_evals)

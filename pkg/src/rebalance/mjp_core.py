"""Markov jump process plumbing: balancing functions, rate menus, the
Doob-Gillespie step and the Rao-Blackwellised ergodic average."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Iterator, Sequence, Union

import numpy as np

from ._jit import njit
from .errors import AbsorbingStateError, DomainError, NumericalError

__all__ = [
    "BalancingFunction",
    "EventKind",
    "LiftedState",
    "RateMenu",
    "JumpRecord",
    "JumpTrace",
    "RngStream",
    "balancing_eval",
    "balancing_eval_logratio",
    "minimal_flip_rate",
    "gillespie_step",
    "rao_blackwell_average",
    "superpose",
]

# Integer codes used inside jitted kernels.
G_METROPOLIS = 0
G_BARKER = 1
G_SQRT = 2

JUMP = 0
BOUNCE = 1
FLIP = 2
REFRESH = 3
N_EVENT_KINDS = 4


class BalancingFunction(enum.Enum):
    """Balancing function ``g`` with ``g(0)=0``, ``g(1)=1``, ``g(t)=t g(1/t)``."""

    METROPOLIS = "metropolis"
    BARKER = "barker"
    SQRT = "sqrt"

    @property
    def code(self) -> int:
        return _G_CODES[self]

    @classmethod
    def parse(cls, value) -> "BalancingFunction":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown balancing function {value!r}") from None

    def __call__(self, t):
        return balancing_eval(self, t)


_G_CODES = {
    BalancingFunction.METROPOLIS: G_METROPOLIS,
    BalancingFunction.BARKER: G_BARKER,
    BalancingFunction.SQRT: G_SQRT,
}


class EventKind(enum.IntEnum):
    """Kinds of events any sampler in this package can emit."""

    JUMP = JUMP
    BOUNCE = BOUNCE
    FLIP = FLIP
    REFRESH = REFRESH


@dataclass(frozen=True, eq=False)
class LiftedState:
    """Position ``q`` and momentum ``p`` of equal length.

    Arrays with a leading batch axis are accepted so that a whole trajectory
    can be passed to a vectorised function in one call.
    """

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=np.float64, ndmin=1)
        p = np.array(self.p, dtype=np.float64, ndmin=1)
        if q.shape != p.shape:
            raise ValueError(f"q and p must have the same shape, got {q.shape} and {p.shape}")
        if q.shape[-1] < 1:
            raise ValueError("dimension must be at least 1")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("state has non-finite entries")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def dim(self) -> int:
        return self.q.shape[-1]

    def flipped(self) -> "LiftedState":
        return LiftedState(self.q, -self.p)

    def __eq__(self, other):
        if not isinstance(other, LiftedState):
            return NotImplemented
        return np.array_equal(self.q, other.q) and np.array_equal(self.p, other.p)

    __hash__ = None


# --------------------------------------------------------------------------
# balancing functions


@njit
def g_of_exp(kind, x):
    """g(exp(x)) without forming exp(x); kernel version, no validation."""
    if kind == G_METROPOLIS:
        if x >= 0.0:
            return 1.0
        return np.exp(x)
    elif kind == G_BARKER:
        if x >= 0.0:
            return 2.0 / (1.0 + np.exp(-x))
        e = np.exp(x)
        return 2.0 * e / (1.0 + e)
    else:
        return np.exp(0.5 * x)


def balancing_eval(g: BalancingFunction, t):
    """Evaluate ``g(t)`` for ``t >= 0``; accepts scalars or arrays."""
    g = BalancingFunction.parse(g)
    arr = np.asarray(t, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError(f"balancing function needs finite t >= 0, got {t!r}")
    if g is BalancingFunction.METROPOLIS:
        out = np.minimum(1.0, arr)
    elif g is BalancingFunction.BARKER:
        out = 2.0 * arr / (1.0 + arr)
    else:
        out = np.sqrt(arr)
    return float(out) if out.ndim == 0 else out


def balancing_eval_logratio(g: BalancingFunction, x):
    """Evaluate ``g(exp(x))`` stably for large ``|x|``.

    ``x = -inf`` gives 0.  Metropolis and Barker saturate at 1 and 2 for
    ``x = +inf``; the square root has no finite limit there and raises.
    """
    g = BalancingFunction.parse(g)
    arr = np.asarray(x, dtype=np.float64)
    if np.any(np.isnan(arr)):
        raise DomainError("log-ratio is NaN")
    if g is BalancingFunction.SQRT and np.any(arr == np.inf):
        raise DomainError("sqrt balancing is unbounded at log-ratio +inf")
    with np.errstate(over="ignore", under="ignore"):
        if g is BalancingFunction.METROPOLIS:
            out = np.exp(np.minimum(0.0, arr))
        elif g is BalancingFunction.BARKER:
            # 2 * logistic(x) = 2 t / (1 + t)
            e = np.exp(-np.abs(arr))
            out = np.where(arr >= 0, 2.0 / (1.0 + e), 2.0 * e / (1.0 + e))
        else:
            out = np.exp(0.5 * arr)
    return float(out) if out.ndim == 0 else out


@njit
def flip_rate_kernel(forward, backward):
    d = backward - forward
    return d if d > 0.0 else 0.0


def minimal_flip_rate(forward: float, backward: float) -> float:
    """Smallest flip rate ``(backward - forward)^+`` restoring equal total rates
    at a state and its involution image."""
    if not (math.isfinite(forward) and math.isfinite(backward)) or forward < 0 or backward < 0:
        raise DomainError("flip rate inputs must be finite and nonnegative")
    return float(flip_rate_kernel(float(forward), float(backward)))


# --------------------------------------------------------------------------
# rate menus and the Gillespie step


@dataclass(frozen=True)
class RateMenu:
    """Competing event rates at one state."""

    entries: tuple

    def __post_init__(self):
        cleaned = []
        for kind, rate in self.entries:
            rate = float(rate)
            if not math.isfinite(rate) or rate < 0:
                raise DomainError(f"rate for {EventKind(kind).name} must be finite and >= 0, got {rate}")
            cleaned.append((EventKind(kind), rate))
        object.__setattr__(self, "entries", tuple(cleaned))

    @property
    def total_rate(self) -> float:
        total = 0.0
        for _, rate in self.entries:
            total += rate
        return total

    @property
    def rates(self) -> np.ndarray:
        return np.array([r for _, r in self.entries], dtype=np.float64)

    @property
    def kinds(self) -> tuple:
        return tuple(k for k, _ in self.entries)

    def rate_of(self, kind: EventKind) -> float:
        """Summed rate of all entries of ``kind`` (0 when absent)."""
        return sum(r for k, r in self.entries if k == kind)

    def __contains__(self, kind) -> bool:
        return EventKind(kind) in self.kinds


@njit
def select_event(rates, rng):
    """Doob-Gillespie draw: holding time first, then the event index.

    Returns ``(hold, index)``; index -1 flags a zero total rate and -2 a
    non-finite one.  Ties on the cumulative boundary go to the earlier entry.
    """
    total = 0.0
    for i in range(rates.shape[0]):
        total += rates[i]
    if not np.isfinite(total):
        return np.nan, -2
    if total <= 0.0:
        return np.nan, -1
    hold = rng.standard_exponential() / total
    u = rng.random() * total
    cum = 0.0
    last = -1
    for i in range(rates.shape[0]):
        if rates[i] > 0.0:
            last = i
        cum += rates[i]
        if u < cum:
            return hold, i
    return hold, last


def gillespie_step(menu: RateMenu, rng: "RngStream"):
    """Draw ``(holding_time, event_kind)`` from a rate menu."""
    rates = menu.rates
    hold, idx = select_event(rates, rng.generator)
    if idx == -1:
        raise AbsorbingStateError("total rate is zero")
    if idx == -2:
        raise NumericalError("total rate is not finite")
    return float(hold), menu.entries[idx][0]


def superpose(kernels: Sequence[Callable]) -> Callable:
    """Superposition of rate-kernel evaluators (callables ``state -> RateMenu``).

    The combined menu concatenates the component menus in order.
    """
    kernels = list(kernels)
    if not kernels:
        raise ValueError("superpose needs at least one kernel")

    def combined(state):
        entries = []
        for k in kernels:
            entries.extend(k(state).entries)
        return RateMenu(tuple(entries))

    return combined


# --------------------------------------------------------------------------
# embedded chain records


@dataclass(frozen=True)
class JumpRecord:
    """One state of the embedded jump chain."""

    jump_index: int
    state: LiftedState
    total_rate: float
    event: EventKind
    grad_evals_so_far: int


@dataclass
class JumpTrace:
    """Struct-of-arrays store for a sequence of :class:`JumpRecord`.

    Row ``n`` holds the state entered at the ``n``-th jump, its total rate,
    the event taken to leave it and the cumulative gradient count at that
    point.  Holding times are not kept.
    """

    q: np.ndarray
    p: np.ndarray
    total_rate: np.ndarray
    event: np.ndarray
    grad_evals: np.ndarray
    start_index: int = 0

    @classmethod
    def empty(cls, dim: int) -> "JumpTrace":
        return cls(
            np.empty((0, dim)), np.empty((0, dim)), np.empty(0), np.empty(0, np.int8), np.empty(0, np.int64)
        )

    @classmethod
    def concatenate(cls, parts: Sequence["JumpTrace"], dim: int) -> "JumpTrace":
        if not parts:
            return cls.empty(dim)
        return cls(
            np.concatenate([t.q for t in parts]),
            np.concatenate([t.p for t in parts]),
            np.concatenate([t.total_rate for t in parts]),
            np.concatenate([t.event for t in parts]),
            np.concatenate([t.grad_evals for t in parts]),
            parts[0].start_index,
        )

    def __len__(self) -> int:
        return self.total_rate.shape[0]

    def __getitem__(self, i: int) -> JumpRecord:
        n = len(self)
        if i < 0:
            i += n
        if not 0 <= i < n:
            raise IndexError(i)
        return JumpRecord(
            self.start_index + i,
            LiftedState(self.q[i], self.p[i]),
            float(self.total_rate[i]),
            EventKind(int(self.event[i])),
            int(self.grad_evals[i]),
        )

    def __iter__(self) -> Iterator[JumpRecord]:
        for i in range(len(self)):
            yield self[i]

    @property
    def states(self) -> LiftedState:
        """All states as one batched :class:`LiftedState`."""
        return LiftedState(self.q, self.p)


def rao_blackwell_average(records: Union[JumpTrace, Sequence[JumpRecord]], f: Callable):
    """Ergodic average with holding times replaced by their means ``1/lambda``.

    For a :class:`JumpTrace`, ``f`` is called once with the batched states and
    must return one value (or one vector) per row; for a sequence of records it
    is called per record state.  Vector-valued ``f`` gives an array result.
    """
    if isinstance(records, JumpTrace):
        if len(records) == 0:
            raise ValueError("no records")
        rates = records.total_rate
        values = np.asarray(f(records.states), dtype=np.float64)
        if values.ndim == 0:
            values = np.broadcast_to(values, rates.shape)
    else:
        records = list(records)
        if not records:
            raise ValueError("no records")
        rates = np.array([r.total_rate for r in records], dtype=np.float64)
        values = np.array([f(r.state) for r in records], dtype=np.float64)
    if not np.all(rates > 0) or not np.all(np.isfinite(rates)):
        raise ValueError("every record needs a finite positive total rate")
    w = 1.0 / rates
    if values.shape[0] != rates.shape[0]:
        raise ValueError("f must return one value per record")
    avg = np.tensordot(w, values, axes=(0, 0)) / np.sum(w)
    return float(avg) if np.ndim(avg) == 0 else avg


# --------------------------------------------------------------------------
# random streams


class RngStream:
    """Seeded, splittable stream of random draws.

    ``(seed, stream_index)`` fixes the draw sequence.  The underlying PCG64
    ``Generator`` is passed straight into jitted kernels, so the Python and
    numba paths consume the same sequence.
    """

    def __init__(self, seed: int, stream_index: int = 0):
        for name, v in (("seed", seed), ("stream_index", stream_index)):
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) < 2**64:
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v!r}")
        self.seed = int(seed)
        self.stream_index = int(stream_index)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_index,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def uniform(self) -> float:
        return float(self.generator.random())

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def exponential(self) -> float:
        return float(self.generator.standard_exponential())

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_index={self.stream_index})"

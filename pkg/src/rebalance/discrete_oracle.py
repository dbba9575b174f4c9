"""Exact finite-state checks of the rebalancing construction.

A finite rate kernel is a dense matrix ``M[a, b]`` (rate from a to b), an
involution given as a permutation, and weights for the reference and target
measures.  Rebalancing produces a generator ``Q``; stationarity and the
semi-local condition are then checked by plain matrix algebra.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import mjp_core
from .mjp_core import BalancingFunction, balancing_eval

__all__ = [
    "FiniteKernel",
    "FiniteGenerator",
    "build_lifted_cycle",
    "build_symmetric_cycle",
    "superpose_finite",
    "rebalance_finite",
    "flip_rates",
    "check_stationarity",
    "check_semi_local",
    "check_detailed_balance",
    "skew_balance_violation",
]


@dataclass(frozen=True, eq=False)
class FiniteKernel:
    rate_matrix: np.ndarray
    involution: np.ndarray
    reference_weights: np.ndarray = None
    target_weights: np.ndarray = None

    def __post_init__(self):
        M = np.array(self.rate_matrix, dtype=np.float64)
        n = M.shape[0]
        if M.shape != (n, n) or n < 1:
            raise ValueError("rate matrix must be square")
        if np.any(M < 0) or np.any(np.diag(M) != 0):
            raise ValueError("rates must be nonnegative with zero diagonal")
        s = np.array(self.involution, dtype=np.int64)
        if s.shape != (n,) or not np.array_equal(np.sort(s), np.arange(n)) or not np.array_equal(s[s], np.arange(n)):
            raise ValueError("involution must be a self-inverse permutation")
        ref = np.ones(n) if self.reference_weights is None else np.array(self.reference_weights, dtype=np.float64)
        tgt = np.ones(n) if self.target_weights is None else np.array(self.target_weights, dtype=np.float64)
        if ref.shape != (n,) or tgt.shape != (n,):
            raise ValueError("weights must have one entry per state")
        if np.any(tgt < 0):
            raise ValueError("target weights must be nonnegative")
        if not (np.array_equal(ref[s], ref) and np.array_equal(tgt[s], tgt)):
            raise ValueError("the involution must preserve both weight vectors")
        object.__setattr__(self, "rate_matrix", M)
        object.__setattr__(self, "involution", s)
        object.__setattr__(self, "reference_weights", ref)
        object.__setattr__(self, "target_weights", tgt)

    @property
    def n_states(self) -> int:
        return self.rate_matrix.shape[0]

    def with_target(self, weights) -> "FiniteKernel":
        return FiniteKernel(self.rate_matrix, self.involution, self.reference_weights, weights)


@dataclass(frozen=True, eq=False)
class FiniteGenerator:
    Q: np.ndarray
    flip: np.ndarray = field(default=None)

    def __post_init__(self):
        Q = np.asarray(self.Q, dtype=np.float64)
        off = Q - np.diag(np.diag(Q))
        if np.any(off < 0):
            raise ValueError("off-diagonal generator entries must be nonnegative")
        if np.max(np.abs(Q.sum(axis=1)), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(Q), initial=0.0)):
            raise ValueError("generator rows must sum to zero")
        object.__setattr__(self, "Q", Q)

    @property
    def total_rates(self) -> np.ndarray:
        return -np.diag(self.Q)


def _lifted_index(i, v, n):
    return i if v > 0 else n + i


def build_lifted_cycle(n: int, step: int = 1, rates=None) -> FiniteKernel:
    """Deterministic cycle on ``{0..n-1} x {+,-}``.

    State ``(i, +)`` has index ``i`` and ``(i, -)`` index ``n + i``.  The map
    ``T(i, v) = ((i + v*step) mod n, v)`` is taken at rate 1 (or ``rates``),
    and the involution reverses the velocity.
    """
    if int(n) != n or n < 2:
        raise ValueError("cycle length must be at least 2")
    if step % n == 0:
        raise ValueError("step must not be a multiple of n")
    lam = np.ones(2 * n) if rates is None else np.asarray(rates, dtype=np.float64)
    M = np.zeros((2 * n, 2 * n))
    s = np.empty(2 * n, dtype=np.int64)
    for v in (1, -1):
        for i in range(n):
            a = _lifted_index(i, v, n)
            M[a, _lifted_index((i + v * step) % n, v, n)] = lam[a]
            s[a] = _lifted_index(i, -v, n)
    return FiniteKernel(M, s)


def build_symmetric_cycle(n: int) -> FiniteKernel:
    """Nearest-neighbour walk on an ``n``-cycle with the identity involution."""
    if n < 3:
        raise ValueError("cycle length must be at least 3")
    M = np.zeros((n, n))
    for i in range(n):
        M[i, (i + 1) % n] = 1.0
        M[i, (i - 1) % n] = 1.0
    return FiniteKernel(M, np.arange(n))


def superpose_finite(*kernels: FiniteKernel) -> FiniteKernel:
    if not kernels:
        raise ValueError("nothing to superpose")
    first = kernels[0]
    for k in kernels[1:]:
        if not np.array_equal(k.involution, first.involution):
            raise ValueError("kernels must share the involution")
    return FiniteKernel(sum(k.rate_matrix for k in kernels), first.involution, first.reference_weights,
                        first.target_weights)


def _balanced_rates(kernel: FiniteKernel, g: BalancingFunction) -> np.ndarray:
    dens = kernel.target_weights / kernel.reference_weights
    n = kernel.n_states
    lam = np.zeros((n, n))
    for a in range(n):
        if dens[a] == 0:
            continue
        lam[a] = balancing_eval(g, dens / dens[a])
    return lam * kernel.rate_matrix


def flip_rates(kernel: FiniteKernel, g: BalancingFunction) -> np.ndarray:
    """Minimal flip rate at every state."""
    out_rate = _balanced_rates(kernel, g).sum(axis=1)
    s = kernel.involution
    return np.array([mjp_core.minimal_flip_rate(out_rate[a], out_rate[s[a]]) for a in range(kernel.n_states)])


def rebalance_finite(kernel: FiniteKernel, g) -> FiniteGenerator:
    """Generator of the rebalanced process for the kernel's target weights."""
    g = BalancingFunction.parse(g)
    if np.any(kernel.reference_weights <= 0):
        raise ValueError("reference weights must be positive")
    Q = _balanced_rates(kernel, g)
    flips = flip_rates(kernel, g)
    s = kernel.involution
    for a in range(kernel.n_states):
        Q[a, s[a]] += flips[a]
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return FiniteGenerator(Q, flips)


def _as_matrix(Q):
    return Q.Q if isinstance(Q, FiniteGenerator) else np.asarray(Q, dtype=np.float64)


def check_stationarity(Q, pi) -> float:
    """``max_b |(pi Q)_b|`` with ``pi`` normalised to a probability vector."""
    pi = np.asarray(pi, dtype=np.float64)
    if not pi.sum() > 0:
        raise ValueError("weights must have positive mass")
    return float(np.max(np.abs((pi / pi.sum()) @ _as_matrix(Q))))


def check_semi_local(Q, involution) -> float:
    """``max_a |lambda(a) - lambda(s(a))|`` for the total rates of ``Q``."""
    rates = -np.diag(_as_matrix(Q))
    s = np.asarray(involution)
    return float(np.max(np.abs(rates - rates[s])))


def check_detailed_balance(Q, pi) -> float:
    """``max |pi(a) Q[a,b] - pi(b) Q[b,a]|`` with normalised ``pi``."""
    Qm = _as_matrix(Q)
    pi = np.asarray(pi, dtype=np.float64)
    F = (pi / pi.sum())[:, None] * Qm
    return float(np.max(np.abs(F - F.T)))


def skew_balance_violation(rate_matrix, involution, weights) -> float:
    """Largest entrywise violation of ``w(a) M[a,b] = w(s(b)) M[s(b), s(a)]``.

    Uses the unnormalised weights, so exact kernels give exactly zero.
    """
    M = np.asarray(rate_matrix, dtype=np.float64)
    s = np.asarray(involution)
    w = np.asarray(weights, dtype=np.float64)
    F = w[:, None] * M
    return float(np.max(np.abs(F - F.T[np.ix_(s, s)])))

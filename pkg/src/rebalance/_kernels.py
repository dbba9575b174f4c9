"""Jitted sampler kernels.

State lives in small preallocated arrays so the same functions serve the
per-event Python API and the chunked simulation loop.

Leapfrog workspace ``W`` (9 x d): rows q, p, grad U(q), forward endpoint
(q, p, grad) and backward endpoint (q, p, grad).  Scalars ``S``: U(q),
U(fwd), U(bwd), forward dH, backward dH, forward valid, backward valid.

Linear-step workspace ``W`` (3 x d): rows q, p, grad U(q).  Scalars ``S``:
U(q), U(q + eps p), U(q - eps p), plus-valid, minus-valid, grad-valid.

Counters ``C``: jumps, bounces, flips, refreshes, gradient evaluations,
divergences, total events.
"""
from __future__ import annotations

import numpy as np

from ._jit import njit
from .mjp_core import BOUNCE, FLIP, G_METROPOLIS, JUMP, REFRESH, g_of_exp, select_event
from .targets import potential, potential_grad

FFF = 0
RHMC = 1
BJS = 2
BGW = 3
RGW = 4
HMC = 5

# counter slots; 0..3 coincide with event codes
C_GRADS = 4
C_DIVERGENT = 5
C_EVENTS = 6

# status codes returned by the chunk loops
ST_CAPACITY = 0
ST_BUDGET = 1
ST_ABSORBING = 2
ST_NONFINITE = 3


@njit
def leapfrog(kind, X, XT, y, prm, q, p, g, eps):
    """One in-place leapfrog step; ``g`` must hold grad U(q) on entry.
    Returns U at the new position."""
    h = 0.5 * eps
    for i in range(q.shape[0]):
        p[i] -= h * g[i]
        q[i] += eps * p[i]
    u = potential_grad(kind, q, X, XT, y, prm, g)
    for i in range(q.shape[0]):
        p[i] -= h * g[i]
    return u


@njit
def _all_finite(a):
    for i in range(a.shape[0]):
        if not np.isfinite(a[i]):
            return False
    return True


@njit
def integrate(kind, X, XT, y, prm, q0, p0, g0, eps, L, qo, po, go):
    """``L`` leapfrog steps from (q0, p0) into (qo, po, go).

    Returns ``(U_end, n_gradients, ok)``; stops early with ``ok=False`` on
    the first non-finite value.
    """
    for i in range(q0.shape[0]):
        qo[i] = q0[i]
        po[i] = p0[i]
        go[i] = g0[i]
    u = np.nan
    for s in range(L):
        u = leapfrog(kind, X, XT, y, prm, qo, po, go, eps)
        if not (np.isfinite(u) and _all_finite(po) and _all_finite(qo)):
            return np.inf, s + 1, False
    return u, L, True


@njit
def _energy_change(u_end, p_end, h0):
    dh = u_end + 0.5 * np.dot(p_end, p_end) - h0
    if np.isfinite(dh):
        return dh
    return np.inf


# --------------------------------------------------------------------------
# leapfrog-jump samplers (FFF, RHMC)


@njit
def lf_prepare(sampler, W, S, C, eps, L, kind, X, XT, y, prm):
    """Fill whichever of the forward/backward trajectories is missing."""
    h0 = S[0] + 0.5 * np.dot(W[1], W[1])
    if S[5] == 0.0:
        u, n, ok = integrate(kind, X, XT, y, prm, W[0], W[1], W[2], eps, L, W[3], W[4], W[5])
        C[C_GRADS] += n
        if ok:
            S[1] = u
            S[3] = _energy_change(u, W[4], h0)
        else:
            C[C_DIVERGENT] += 1
            S[1] = np.inf
            S[3] = np.inf
        S[5] = 1.0
    if sampler == FFF and S[6] == 0.0:
        neg = -W[1]
        u, n, ok = integrate(kind, X, XT, y, prm, W[0], neg, W[2], eps, L, W[6], W[7], W[8])
        C[C_GRADS] += n
        if ok:
            S[2] = u
            S[4] = _energy_change(u, W[7], h0)
        else:
            C[C_DIVERGENT] += 1
            S[2] = np.inf
            S[4] = np.inf
        S[6] = 1.0


@njit
def lf_rates(sampler, gkind, S, lam, rates):
    rates[BOUNCE] = 0.0
    rates[REFRESH] = lam
    if sampler == FFF:
        fwd = g_of_exp(gkind, -S[3])
        bwd = g_of_exp(gkind, -S[4])
        rates[JUMP] = fwd
        rates[FLIP] = bwd - fwd if bwd > fwd else 0.0
    else:
        fwd = g_of_exp(G_METROPOLIS, -S[3])
        rates[JUMP] = fwd
        rates[FLIP] = 1.0 - fwd


@njit
def _swap_rows(W, a, b):
    for i in range(W.shape[1]):
        t = W[a, i]
        W[a, i] = W[b, i]
        W[b, i] = t


@njit
def _swap(S, a, b):
    t = S[a]
    S[a] = S[b]
    S[b] = t


@njit
def lf_apply(event, W, S, rng):
    d = W.shape[1]
    if event == JUMP:
        # the old state, flipped, is the new backward endpoint
        for i in range(d):
            W[6, i] = W[0, i]
            W[7, i] = -W[1, i]
            W[8, i] = W[2, i]
            W[0, i] = W[3, i]
            W[1, i] = W[4, i]
            W[2, i] = W[5, i]
        S[2] = S[0]
        S[4] = -S[3]
        S[6] = 1.0
        S[0] = S[1]
        S[5] = 0.0
    elif event == FLIP:
        for i in range(d):
            W[1, i] = -W[1, i]
        _swap_rows(W, 3, 6)
        _swap_rows(W, 4, 7)
        _swap_rows(W, 5, 8)
        _swap(S, 1, 2)
        _swap(S, 3, 4)
        _swap(S, 5, 6)
    elif event == REFRESH:
        for i in range(d):
            W[1, i] = rng.standard_normal()
        S[5] = 0.0
        S[6] = 0.0


# --------------------------------------------------------------------------
# linear-step samplers (BJS, BGW, RGW)


@njit
def ls_prepare(sampler, W, S, C, eps, kind, X, XT, y, prm):
    d = W.shape[1]
    if sampler == BJS and S[5] == 0.0:
        S[0] = potential_grad(kind, W[0], X, XT, y, prm, W[2])
        C[C_GRADS] += 1
        S[5] = 1.0
    if S[3] == 0.0:
        x = np.empty(d)
        for i in range(d):
            x[i] = W[0, i] + eps * W[1, i]
        S[1] = potential(kind, x, X, XT, y, prm)
        S[3] = 1.0
    if sampler != RGW and S[4] == 0.0:
        x = np.empty(d)
        for i in range(d):
            x[i] = W[0, i] - eps * W[1, i]
        S[2] = potential(kind, x, X, XT, y, prm)
        S[4] = 1.0


@njit
def _neg_or_inf(du):
    if np.isfinite(du):
        return -du
    return -np.inf


@njit
def ls_rates(sampler, gkind, W, S, eps, lam, rates):
    rates[REFRESH] = lam
    up = _neg_or_inf(S[1] - S[0])
    if sampler == RGW:
        fwd = g_of_exp(G_METROPOLIS, up)
        rates[JUMP] = fwd
        rates[BOUNCE] = 0.0
        rates[FLIP] = 1.0 - fwd
        return
    fwd = g_of_exp(gkind, up)
    bwd = g_of_exp(gkind, _neg_or_inf(S[2] - S[0]))
    rates[JUMP] = fwd
    if sampler == BJS:
        slope = eps * np.dot(W[1], W[2])
        rates[BOUNCE] = slope if slope > 0.0 else 0.0
        f = bwd - fwd - slope
    else:
        rates[BOUNCE] = 0.0
        f = bwd - fwd
    rates[FLIP] = f if f > 0.0 else 0.0


@njit
def reflect(p, g):
    """Reflect ``p`` in the hyperplane orthogonal to ``g``; returns False
    if ``g`` vanishes."""
    gg = np.dot(g, g)
    if not gg > 0.0:
        return False
    c = 2.0 * np.dot(p, g) / gg
    for i in range(p.shape[0]):
        p[i] -= c * g[i]
    return True


@njit
def ls_apply(event, W, S, eps, rng):
    d = W.shape[1]
    if event == JUMP:
        for i in range(d):
            W[0, i] += eps * W[1, i]
        S[2] = S[0]
        S[4] = 1.0
        S[0] = S[1]
        S[3] = 0.0
        S[5] = 0.0
    elif event == BOUNCE:
        reflect(W[1], W[2])
        S[3] = 0.0
        S[4] = 0.0
    elif event == FLIP:
        for i in range(d):
            W[1, i] = -W[1, i]
        _swap(S, 1, 2)
        _swap(S, 3, 4)
    elif event == REFRESH:
        for i in range(d):
            W[1, i] = rng.standard_normal()
        S[3] = 0.0
        S[4] = 0.0


# --------------------------------------------------------------------------
# simulation loops


@njit
def run_chunk(sampler, gkind, eps, L, lam, kind, X, XT, y, prm, W, S, C, rng,
              max_events, max_grads, out_q, out_p, out_rate, out_event, out_grads, out_hold):
    """Simulate until the output buffers fill or a budget is met.

    Returns ``(records_written, status)``.
    """
    cap = out_rate.shape[0]
    rates = np.zeros(4)
    d = W.shape[1]
    n = 0
    while n < cap:
        if C[C_EVENTS] >= max_events:
            return n, ST_BUDGET
        if sampler == FFF or sampler == RHMC:
            lf_prepare(sampler, W, S, C, eps, L, kind, X, XT, y, prm)
            lf_rates(sampler, gkind, S, lam, rates)
        else:
            ls_prepare(sampler, W, S, C, eps, kind, X, XT, y, prm)
            ls_rates(sampler, gkind, W, S, eps, lam, rates)
        total = rates[0] + rates[1] + rates[2] + rates[3]
        hold, ev = select_event(rates, rng)
        if ev == -1:
            return n, ST_ABSORBING
        if ev == -2:
            return n, ST_NONFINITE
        for i in range(d):
            out_q[n, i] = W[0, i]
            out_p[n, i] = W[1, i]
        out_rate[n] = total
        out_event[n] = ev
        out_grads[n] = C[C_GRADS]
        out_hold[n] = hold
        if sampler == FFF or sampler == RHMC:
            lf_apply(ev, W, S, rng)
        else:
            ls_apply(ev, W, S, eps, rng)
        C[ev] += 1
        C[C_EVENTS] += 1
        n += 1
        if not (_all_finite(W[0]) and _all_finite(W[1])):
            return n, ST_NONFINITE
        if C[C_GRADS] >= max_grads:
            return n, ST_BUDGET
    return n, ST_CAPACITY


@njit
def hmc_chunk(eps, L, kind, X, XT, y, prm, W, S, C, rng, max_iters, max_grads,
              out_q, out_p, out_event, out_grads, out_pos):
    """Classical HMC iterations: fresh momentum, ``L`` leapfrog steps,
    Metropolis accept.  Accepts count as jumps, rejections as flips.

    Records hold the state at the start of each iteration; ``out_pos`` the
    position after it.
    """
    cap = out_event.shape[0]
    d = W.shape[1]
    n = 0
    while n < cap:
        if C[C_EVENTS] >= max_iters:
            return n, ST_BUDGET
        for i in range(d):
            W[1, i] = rng.standard_normal()
        h0 = S[0] + 0.5 * np.dot(W[1], W[1])
        u, ng, ok = integrate(kind, X, XT, y, prm, W[0], W[1], W[2], eps, L, W[3], W[4], W[5])
        C[C_GRADS] += ng
        accept_u = rng.random()
        accept = False
        if ok:
            dh = _energy_change(u, W[4], h0)
            if dh <= 0.0 or accept_u < np.exp(-dh):
                accept = True
        else:
            C[C_DIVERGENT] += 1
        for i in range(d):
            out_q[n, i] = W[0, i]
            out_p[n, i] = W[1, i]
        out_grads[n] = C[C_GRADS]
        if accept:
            for i in range(d):
                W[0, i] = W[3, i]
                W[2, i] = W[5, i]
            S[0] = u
            out_event[n] = JUMP
            C[JUMP] += 1
        else:
            out_event[n] = FLIP
            C[FLIP] += 1
        for i in range(d):
            out_pos[n, i] = W[0, i]
        C[C_EVENTS] += 1
        n += 1
        if C[C_GRADS] >= max_grads:
            return n, ST_BUDGET
    return n, ST_CAPACITY

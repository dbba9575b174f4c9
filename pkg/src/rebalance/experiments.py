"""Reusable pieces of the numerical experiments: flip-rate scaling fits and
configuration-driven runs."""
from __future__ import annotations

import numpy as np

from .mjp_core import EventKind, LiftedState
from .samplers import BJSConfig, bjs_rate_menu
from .targets import Target, banana_target

__all__ = ["banana_scaling_states", "flip_rate_curve", "flip_rate_slope", "SCALING_EPSILONS"]

SCALING_EPSILONS = np.logspace(-3.0, -1.5, 7)


def banana_scaling_states(n: int = 50, seed: int = 11):
    """Fixed states near the banana ridge with standard normal momenta."""
    rng = np.random.default_rng(seed)
    q1 = rng.uniform(-1.5, 1.5, n)
    q2 = q1 * q1 + 0.3 * rng.standard_normal(n)
    p = rng.standard_normal((n, 2))
    return [LiftedState([a, b], pp) for a, b, pp in zip(q1, q2, p)]


def flip_rate_curve(variant: str, balancing, target: Target, states, epsilons) -> np.ndarray:
    """Mean positive flip rate over ``states`` for each step scale.

    Per state the larger of the flip rates at ``(q, p)`` and ``(q, -p)`` is
    used; for the minimal constructions the other one is zero.
    """
    out = []
    for eps in epsilons:
        cfg = BJSConfig(float(eps), 1.0, balancing, variant)
        vals = []
        for s in states:
            a = bjs_rate_menu(s, cfg, target).rate_of(EventKind.FLIP)
            b = bjs_rate_menu(s.flipped(), cfg, target).rate_of(EventKind.FLIP)
            vals.append(max(a, b))
        vals = np.array(vals)
        pos = vals[vals > 0]
        out.append(pos.mean() if pos.size else 0.0)
    return np.array(out)


def flip_rate_slope(variant: str, balancing, target: Target = None, states=None, epsilons=SCALING_EPSILONS) -> float:
    """Least-squares slope of log mean flip rate against log step scale."""
    target = banana_target() if target is None else target
    states = banana_scaling_states() if states is None else states
    curve = flip_rate_curve(variant, balancing, target, states, epsilons)
    if np.any(curve <= 0):
        return float("nan")
    return float(np.polyfit(np.log(epsilons), np.log(curve), 1)[0])

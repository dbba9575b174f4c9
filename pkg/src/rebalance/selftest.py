"""Built-in invariant checks behind ``rebalance selftest``.

Each check returns ``(ok, detail)``; the runner prints one line per check
and exits nonzero naming the first failed invariant.
"""
from __future__ import annotations

import sys
import time

import numpy as np

from . import discrete_oracle as dor
from .diagnostics import ess, ess_batch_means, wasserstein2_1d
from .experiments import flip_rate_slope
from .mjp_core import BalancingFunction, EventKind, LiftedState, RngStream, balancing_eval, rao_blackwell_average
from .samplers import BJSConfig, Budget, FFFConfig, fff_rate_menu, leapfrog_step, run_sampler
from .targets import banana_target, gaussian_target

G_ALL = tuple(BalancingFunction)
TOL = 1e-12


def _weighted_cycles(seed=0, sizes=range(2, 21), per_size=20):
    rng = np.random.default_rng(seed)
    for n in sizes:
        base = dor.build_lifted_cycle(n)
        for _ in range(per_size):
            w = rng.uniform(0.1, 10.0, n)
            yield base.with_target(np.concatenate([w, w]))


def oracle_sweep(seed=0, sizes=range(2, 21), per_size=20):
    """Worst stationarity and semi-local violations, and whether flip
    exclusivity held exactly, over weighted lifted cycles and all g."""
    worst_stat = worst_semi = 0.0
    exclusive = True
    for k in _weighted_cycles(seed, sizes, per_size):
        pi = k.target_weights
        for g in G_ALL:
            gen = dor.rebalance_finite(k, g)
            worst_stat = max(worst_stat, dor.check_stationarity(gen, pi))
            worst_semi = max(worst_semi, dor.check_semi_local(gen, k.involution))
            f = gen.flip
            exclusive &= bool(np.all(np.minimum(f, f[k.involution]) == 0.0))
    return worst_stat, worst_semi, exclusive


def check_stationarity():
    stat, _, _ = oracle_sweep(sizes=range(2, 21, 3), per_size=5)
    return stat <= TOL, f"max |pi Q| = {stat:.2e}"


def check_semi_local():
    _, semi, _ = oracle_sweep(sizes=range(2, 21, 3), per_size=5)
    return semi <= TOL, f"max |lambda(a) - lambda(s a)| = {semi:.2e}"


def check_exclusivity():
    _, _, excl = oracle_sweep(sizes=range(2, 21, 3), per_size=5)
    return excl, "min(flip(a), flip(s a)) == 0 everywhere" if excl else "both flip rates positive somewhere"


def check_superposition():
    rng = np.random.default_rng(1)
    worst = 0.0
    for n in (5, 7, 9):
        w = rng.uniform(0.1, 10.0, n)
        k = dor.superpose_finite(dor.build_lifted_cycle(n, 1), dor.build_lifted_cycle(n, 2)).with_target(
            np.concatenate([w, w]))
        for g in G_ALL:
            worst = max(worst, dor.check_stationarity(dor.rebalance_finite(k, g), k.target_weights))
    return worst <= TOL, f"max |pi Q| = {worst:.2e}"


def check_skew_detailed_balance():
    worst = 0.0
    for n in range(2, 12):
        for k in (dor.build_lifted_cycle(n), dor.superpose_finite(dor.build_lifted_cycle(n, 1),
                                                                   dor.build_lifted_cycle(n, 2 if n > 2 else 1))):
            worst = max(worst, dor.skew_balance_violation(k.rate_matrix, k.involution, k.reference_weights))
    return worst <= 1e-14, f"max violation = {worst:.2e}"


def check_detailed_balance():
    rng = np.random.default_rng(2)
    worst = 0.0
    for n in (3, 6, 11):
        k = dor.build_symmetric_cycle(n).with_target(rng.uniform(0.1, 10.0, n))
        for g in G_ALL:
            worst = max(worst, dor.check_detailed_balance(dor.rebalance_finite(k, g), k.target_weights))
    return worst <= TOL, f"max |pi(a)Q(a,b) - pi(b)Q(b,a)| = {worst:.2e}"


def check_balancing_identities():
    t = np.logspace(-6, 6, 61)
    worst = 0.0
    for g in G_ALL:
        worst = max(worst, float(np.max(np.abs(balancing_eval(g, t) - t * balancing_eval(g, 1.0 / t)) / (1 + t))))
        worst = max(worst, abs(balancing_eval(g, 0.0)), abs(balancing_eval(g, 1.0) - 1.0))
    return worst <= 1e-12, f"max |g(t) - t g(1/t)| / (1+t) = {worst:.2e}"


def check_leapfrog_reversibility():
    target = banana_target()
    rng = np.random.default_rng(3)
    worst = 0.0
    for eps in (0.01, 0.05, 0.1):
        for _ in range(100):
            q0 = rng.normal(size=2) * 0.5 + [0.0, 0.5]
            p0 = rng.normal(size=2)
            q, p, gr = leapfrog_step(q0, p0, target.gradient(q0), eps, target)
            q2, p2, _ = leapfrog_step(q, -p, gr, eps, target)
            worst = max(worst, float(np.max(np.abs(q2 - q0))), float(np.max(np.abs(p2 + p0))))
    return worst <= 1e-9, f"round-trip error = {worst:.2e}"


def leapfrog_jacobian_det(target, q, p, eps, h=1e-6):
    """Central-difference Jacobian determinant of one leapfrog step."""
    d = target.dim
    x0 = np.concatenate([q, p])
    J = np.empty((2 * d, 2 * d))

    def step(x):
        qq, pp, _ = leapfrog_step(x[:d], x[d:], target.gradient(x[:d]), eps, target)
        return np.concatenate([qq, pp])

    for i in range(2 * d):
        e = np.zeros(2 * d)
        e[i] = h
        J[:, i] = (step(x0 + e) - step(x0 - e)) / (2 * h)
    return float(np.linalg.det(J))


def check_leapfrog_volume():
    rng = np.random.default_rng(4)
    worst = 0.0
    for target in (gaussian_target(1), banana_target()):
        for _ in range(20):
            d = target.dim
            det = leapfrog_jacobian_det(target, rng.normal(size=d), rng.normal(size=d), 0.1)
            worst = max(worst, abs(det - 1.0))
    return worst <= 1e-5, f"max |det - 1| = {worst:.2e}"


def check_leapfrog_example():
    t = gaussian_target(1)
    q, p, _ = leapfrog_step([1.0], [0.0], t.gradient(np.array([1.0])), 0.1, t)
    err = max(abs(q[0] - 0.995), abs(p[0] + 0.09975))
    return err <= 1e-12, f"(q', p') = ({q[0]:.6f}, {p[0]:.6f})"


def check_sampler_semi_local():
    target = banana_target()
    rng = np.random.default_rng(5)
    worst = 0.0
    for g in G_ALL:
        cfg = FFFConfig(0.1, 3, 0.7, g)
        for _ in range(30):
            s = LiftedState(rng.normal(size=2), rng.normal(size=2))
            a = fff_rate_menu(s, cfg, target)[0].total_rate
            b = fff_rate_menu(s.flipped(), cfg, target)[0].total_rate
            worst = max(worst, abs(a - b) / a)
    return worst <= 1e-12, f"max relative |lambda(q,p) - lambda(q,-p)| = {worst:.2e}"


def check_w2_analytic():
    a = wasserstein2_1d([0.0], [1.0])
    b = wasserstein2_1d([0.0, 2.0], [1.0, 3.0])
    c = wasserstein2_1d([3.0, 1.0, 2.0], [1.0, 2.0, 3.0])
    return a == 1.0 and b == 1.0 and c == 0.0, f"W2 = {a}, {b}, {c}"


def check_scaling_slopes():
    want = [("bjs", "sqrt", 3.0, 0.3), ("bjs", "metropolis", 2.0, 0.3), ("bgw", "metropolis", 1.0, 0.2),
            ("rgw", "metropolis", 1.0, 0.2)]
    got = []
    ok = True
    for variant, g, slope, tol in want:
        s = flip_rate_slope(variant, BalancingFunction.parse(g))
        ok &= abs(s - slope) <= tol
        got.append(f"{variant}/{g}={s:.3f}")
    return ok, ", ".join(got)


def gaussian_moments(sampler, config, n_jumps=1_000_000, seed=2024):
    res = run_sampler(sampler, config, gaussian_target(2), RngStream(seed), Budget(max_jumps=n_jumps),
                      n_samples=10)
    tr = res.records
    m1 = rao_blackwell_average(tr, lambda s: s.q)
    m2 = rao_blackwell_average(tr, lambda s: s.q * s.q)
    return np.asarray(m1), np.asarray(m2)


def _moment_check(sampler, config):
    m1, m2 = gaussian_moments(sampler, config)
    ok = bool(np.all(np.abs(m1) <= 0.03) and np.all(np.abs(m2 - 1) <= 0.05))
    return ok, f"E[q] = {np.round(m1, 4).tolist()}, E[q^2] = {np.round(m2, 4).tolist()}"


def check_fff_moments():
    return _moment_check("fff", FFFConfig(0.25, 5, 1.0, "sqrt"))


def check_bjs_moments():
    return _moment_check("bjs", BJSConfig(0.1, 0.5, "sqrt", "bjs"))


def ar1_series(phi, n, seed):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0] / np.sqrt(1 - phi * phi)
    for i in range(1, n):
        x[i] = phi * x[i - 1] + e[i]
    return x


def check_ess_ar1():
    x = ar1_series(0.9, 100_000, 6)
    expect = x.size * 0.1 / 1.9
    r = ess(x) / expect
    bm = ess_batch_means(x) / ess(x)
    return 0.8 <= r <= 1.2 and 0.5 <= bm <= 2.0, f"ESS / (N/19) = {r:.3f}, batch-means ratio = {bm:.3f}"


QUICK = [
    ("stationarity", check_stationarity),
    ("semi_local", check_semi_local),
    ("flip_exclusivity", check_exclusivity),
    ("superposition", check_superposition),
    ("skew_detailed_balance", check_skew_detailed_balance),
    ("detailed_balance_identity_involution", check_detailed_balance),
    ("balancing_identities", check_balancing_identities),
    ("leapfrog_example", check_leapfrog_example),
    ("leapfrog_reversibility", check_leapfrog_reversibility),
    ("leapfrog_volume", check_leapfrog_volume),
    ("sampler_semi_local", check_sampler_semi_local),
    ("w2_analytic", check_w2_analytic),
]

FULL = [
    ("flip_rate_scaling", check_scaling_slopes),
    ("fff_gaussian_moments", check_fff_moments),
    ("bjs_gaussian_moments", check_bjs_moments),
    ("ess_ar1", check_ess_ar1),
]


def run_selftest(level: str = "quick", stream=None) -> int:
    """Run the checks for ``level`` ('quick' or 'full'); 0 if all pass."""
    if level not in ("quick", "full"):
        raise ValueError("level must be 'quick' or 'full'")
    stream = sys.stdout if stream is None else stream
    checks = QUICK + (FULL if level == "full" else [])
    failed = []
    for name, fn in checks:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failure of that invariant
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        dt = time.perf_counter() - t0
        print(f"{'PASS' if ok else 'FAIL'}  {name:<38s} {detail}  [{dt:.2f}s]", file=stream)
        if not ok:
            failed.append(name)
    if failed:
        print(f"selftest failed: {', '.join(failed)}", file=stream)
        return 1
    print(f"selftest ({level}) passed: {len(checks)} checks", file=stream)
    return 0

"""Trajectory diagnostics: effective sample size, 1-d Wasserstein-2
distances and per-run summary metrics."""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import FormatError

__all__ = [
    "DegenerateSeriesError",
    "ess",
    "ess_ar",
    "ess_batch_means",
    "wasserstein2_1d",
    "RunMetrics",
    "compute_metrics",
    "bootstrap_w2_fluctuation",
    "read_samples",
    "write_samples",
]

logger = logging.getLogger(__name__)


class DegenerateSeriesError(ValueError):
    """Series with zero sample variance."""


@dataclass(frozen=True)
class ARFit:
    order: int
    coefficients: np.ndarray
    innovation_variance: float
    fallback: bool = False


def _autocovariance(x: np.ndarray, max_lag: int) -> np.ndarray:
    n = x.shape[0]
    nfft = 1 << int(math.ceil(math.log2(2 * n)))
    f = np.fft.rfft(x, nfft)
    acov = np.fft.irfft(f * np.conj(f), nfft)[: max_lag + 1]
    return acov / n


def fit_ar_yule_walker(x, order_max: Optional[int] = None) -> ARFit:
    """Yule-Walker AR fit of a demeaned series with the order chosen by AIC.

    Levinson-Durbin recursion over orders ``0..order_max`` with
    ``AIC(k) = n log(sigma_k^2) + 2k``; the innovation variance of the chosen
    order is rescaled by ``n / (n - k - 1)``, as R's ``ar.yw`` does.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if order_max is None:
        order_max = int(min(n - 1, math.floor(10 * math.log10(n))))
    x = x - x.mean()
    r = _autocovariance(x, order_max)
    if not r[0] > 0:
        raise DegenerateSeriesError("series has zero variance")
    phi = np.zeros(order_max + 1)
    sig = np.empty(order_max + 1)
    sig[0] = r[0]
    coefs = [np.zeros(0)]
    fallback = False
    for k in range(1, order_max + 1):
        acc = r[k] - np.dot(phi[1:k], r[k - 1:0:-1])
        kappa = acc / sig[k - 1]
        if not np.isfinite(kappa) or abs(kappa) >= 1.0:
            fallback = True
            order_max = k - 1
            break
        new = phi.copy()
        new[k] = kappa
        new[1:k] = phi[1:k] - kappa * phi[k - 1:0:-1]
        phi = new
        sig[k] = sig[k - 1] * (1.0 - kappa * kappa)
        coefs.append(phi[1:k + 1].copy())
    sig = sig[: order_max + 1]
    if fallback:
        return ARFit(0, np.zeros(0), float(r[0] * n / (n - 1)), True)
    aic = n * np.log(sig) + 2.0 * np.arange(order_max + 1)
    order = int(np.argmin(aic))
    return ARFit(order, coefs[order], float(sig[order] * n / (n - order - 1)))


def spectrum0_ar(x) -> float:
    """Spectral density at frequency zero from an AR fit."""
    fit = fit_ar_yule_walker(x)
    return fit.innovation_variance / (1.0 - np.sum(fit.coefficients)) ** 2


def ess_ar(x):
    """AR-spectral effective sample size; returns ``(ess, ar_fit)``."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 10:
        raise ValueError("need at least 10 values")
    if not np.all(np.isfinite(x)):
        raise ValueError("series has non-finite values")
    var = np.var(x, ddof=1)
    if not var > 0:
        raise DegenerateSeriesError("series has zero variance")
    fit = fit_ar_yule_walker(x)
    if fit.fallback:
        warnings.warn("AR fit singular; falling back to order 0", RuntimeWarning, stacklevel=2)
        return float(n), fit
    s0 = fit.innovation_variance / (1.0 - np.sum(fit.coefficients)) ** 2
    value = n * var / s0
    return float(min(max(value, np.finfo(float).tiny), n)), fit


def ess(series) -> float:
    """Effective sample size ``N var(x) / S(0)`` with ``S(0)`` from an
    AIC-selected autoregressive fit, clamped to ``(0, N]``."""
    return ess_ar(series)[0]


def ess_batch_means(series, n_batches: int = 50) -> float:
    """Batch-means effective sample size (cross-check for :func:`ess`)."""
    x = np.asarray(series, dtype=np.float64)
    b = x.shape[0] // n_batches
    if b < 1:
        raise ValueError("series shorter than the number of batches")
    x = x[: b * n_batches]
    var = np.var(x, ddof=1)
    if not var > 0:
        raise DegenerateSeriesError("series has zero variance")
    means = x.reshape(n_batches, b).mean(axis=1)
    return float(x.shape[0] * var / (b * np.var(means, ddof=1)))


def _midpoint_quantiles(sorted_x: np.ndarray, K: int) -> np.ndarray:
    n = sorted_x.shape[0]
    if n == K:
        return sorted_x
    u = (np.arange(K) + 0.5) / K
    return np.interp(u, (np.arange(n) + 0.5) / n, sorted_x)


def wasserstein2_1d(a, b) -> float:
    """W2 between two empirical distributions on the line.

    Both quantile functions are evaluated at ``(k - 1/2) / K`` with
    ``K = max(len(a), len(b))``, interpolating linearly between order
    statistics; equal sizes reduce to matching sorted values.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("empty sample")
    K = max(a.size, b.size)
    diff = _midpoint_quantiles(a, K) - _midpoint_quantiles(b, K)
    return float(np.sqrt(np.mean(diff * diff)))


def bootstrap_w2_fluctuation(reference, size: int, n_boot: int = 200, seed: int = 0,
                             reference_size: Optional[int] = None) -> float:
    """Mean W2 an i.i.d. sample of ``size`` draws from the reference shows.

    By default the resample is compared with the reference itself.  With
    ``reference_size`` it is compared with a second independent resample of
    that size, which accounts for the reference being finite as well.
    """
    ref = np.asarray(reference, dtype=np.float64).ravel()
    rng = np.random.default_rng(seed)
    size = max(1, int(round(size)))
    vals = []
    for _ in range(n_boot):
        a = rng.choice(ref, size=size, replace=True)
        b = ref if reference_size is None else rng.choice(ref, size=max(1, int(round(reference_size))), replace=True)
        vals.append(wasserstein2_1d(a, b))
    return float(np.mean(vals))


@dataclass
class RunMetrics:
    min_marginal_ess: Optional[float]
    ess_per_kilo_grad: Optional[float]
    max_marginal_w2: Optional[float]
    flip_proportion: Optional[float]
    event_counts: dict
    grad_evals: int
    wall_time_s: float
    per_dim_means: list
    n_samples: int = 0
    marginal_ess: list = field(default_factory=list)
    marginal_w2: Optional[list] = None

    def to_dict(self) -> dict:
        return asdict(self)


def _safe_ess(x, label):
    try:
        return ess(x)
    except DegenerateSeriesError:
        logger.warning("marginal %s is degenerate; ESS not reported", label)
        return None


def compute_metrics(samples, counters, reference=None, squared: bool = False,
                    moment_fns: Optional[Sequence[Callable]] = None, wall_time_s: float = 0.0) -> RunMetrics:
    """Summarise one run.

    ESS is computed per coordinate (and per squared coordinate with
    ``squared=True``, or any extra transforms in ``moment_fns``) and the
    minimum reported.  With a reference sample the per-coordinate W2 is
    computed and the maximum reported.  A degenerate marginal makes the
    affected metric ``None`` instead of failing the run.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 10:
        raise ValueError("need an N x d sample array with N >= 10")
    d = x.shape[1]
    transforms = [lambda v: v]
    if squared:
        transforms.append(np.square)
    transforms += list(moment_fns or [])
    marg = []
    for t_i, fn in enumerate(transforms):
        for j in range(d):
            marg.append(_safe_ess(fn(x[:, j]), f"{t_i}:{j}"))
    min_ess = None if any(v is None for v in marg) else float(min(marg))

    w2 = None
    if reference is not None:
        ref = np.asarray(reference, dtype=np.float64)
        if ref.ndim != 2 or ref.shape[1] != d:
            raise ValueError(f"reference must be m x {d}")
        w2 = [wasserstein2_1d(x[:, j], ref[:, j]) for j in range(d)]

    grads = int(counters.grad_evals)
    return RunMetrics(
        min_marginal_ess=min_ess,
        ess_per_kilo_grad=(min_ess * 1000.0 / grads) if (min_ess is not None and grads > 0) else None,
        max_marginal_w2=max(w2) if w2 is not None else None,
        flip_proportion=counters.flip_proportion,
        event_counts=counters.as_dict(),
        grad_evals=grads,
        wall_time_s=float(wall_time_s),
        per_dim_means=[float(v) for v in x.mean(axis=0)],
        n_samples=int(x.shape[0]),
        marginal_ess=marg,
        marginal_w2=w2,
    )


def read_samples(path) -> np.ndarray:
    """Read whitespace- or comma-separated rows; ``#`` lines are skipped."""
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.replace(",", " ").split()
            try:
                vals = [float(v) for v in parts]
            except ValueError:
                if rows or width is not None:
                    raise FormatError("non-numeric entry", line=lineno) from None
                width = len(parts)  # header row
                continue
            if width is None:
                width = len(vals)
            if len(vals) != width:
                raise FormatError(f"expected {width} values, got {len(vals)}", line=lineno)
            rows.append(vals)
    if not rows:
        raise FormatError("no samples found")
    return np.array(rows)


def write_samples(path, samples: np.ndarray) -> None:
    """CSV, one position per line, shortest round-trip decimal repr."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in np.asarray(samples, dtype=np.float64):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")

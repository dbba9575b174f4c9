"""Differentiable potentials ``U = -log density + const`` with analytic
gradients, evaluated by jitted kernels dispatched on an integer kind."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._jit import njit
from .errors import DomainError, FormatError

__all__ = [
    "Target",
    "LogisticData",
    "gaussian_target",
    "banana_target",
    "logistic_target",
    "load_german_credit",
    "synthetic_german_credit",
    "write_german_credit",
    "make_target",
]

GAUSSIAN = 0
BANANA = 1
LOGISTIC = 2

_NO_MATRIX = np.zeros((0, 0))
_NO_VECTOR = np.zeros(0)


@njit
def potential(kind, q, X, XT, y, prm):
    if kind == GAUSSIAN:
        return 0.5 * np.dot(q, q)
    elif kind == BANANA:
        r = q[1] - q[0] * q[0]
        s = q[0] - 1.0
        return (100.0 * r * r + s * s) / 10.0
    else:
        z = np.dot(X, q)
        softplus = np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))
        return np.sum(softplus - y * z) + 0.5 * prm[0] * np.dot(q, q)


@njit
def potential_grad(kind, q, X, XT, y, prm, grad):
    """Return ``U(q)`` and write ``grad U(q)`` into ``grad``."""
    if kind == GAUSSIAN:
        for i in range(q.shape[0]):
            grad[i] = q[i]
        return 0.5 * np.dot(q, q)
    elif kind == BANANA:
        r = q[1] - q[0] * q[0]
        s = q[0] - 1.0
        grad[0] = (-400.0 * q[0] * r + 2.0 * s) / 10.0
        grad[1] = 20.0 * r
        return (100.0 * r * r + s * s) / 10.0
    else:
        z = np.dot(X, q)
        e = np.exp(-np.abs(z))
        sig = np.where(z >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
        g = np.dot(XT, sig - y)
        for i in range(q.shape[0]):
            grad[i] = g[i] + prm[0] * q[i]
        softplus = np.maximum(z, 0.0) + np.log1p(e)
        return np.sum(softplus - y * z) + 0.5 * prm[0] * np.dot(q, q)


@dataclass(frozen=True, eq=False)
class Target:
    """Potential ``U`` on ``R^dim`` with its gradient.

    ``kind`` selects the jitted kernel; ``X``, ``XT``, ``y`` and ``params``
    hold read-only data for the kernels (empty for the analytic targets).
    """

    name: str
    dim: int
    kind: int
    X: np.ndarray = _NO_MATRIX
    XT: np.ndarray = _NO_MATRIX
    y: np.ndarray = _NO_VECTOR
    params: np.ndarray = _NO_VECTOR

    @property
    def kernel_args(self):
        return (self.kind, self.X, self.XT, self.y, self.params)

    def _check(self, q):
        q = np.ascontiguousarray(q, dtype=np.float64)
        if q.shape != (self.dim,):
            raise ValueError(f"{self.name}: expected a point of shape ({self.dim},), got {q.shape}")
        return q

    def potential(self, q) -> float:
        q = self._check(q)
        return float(potential(self.kind, q, self.X, self.XT, self.y, self.params))

    def gradient(self, q) -> np.ndarray:
        return self.potential_and_gradient(q)[1]

    def potential_and_gradient(self, q):
        q = self._check(q)
        grad = np.empty(self.dim)
        u = potential_grad(self.kind, q, self.X, self.XT, self.y, self.params, grad)
        return float(u), grad

    def __repr__(self):
        return f"Target({self.name!r}, dim={self.dim})"


def gaussian_target(d: int) -> Target:
    """Standard normal: ``U(q) = |q|^2 / 2``."""
    if int(d) != d or d < 1:
        raise ValueError("dimension must be a positive integer")
    return Target("gaussian", int(d), GAUSSIAN)


def banana_target() -> Target:
    """Rosenbrock banana ``U = (100 (q2 - q1^2)^2 + (q1 - 1)^2) / 10``."""
    return Target("banana", 2, BANANA)


@dataclass(frozen=True, eq=False)
class LogisticData:
    X: np.ndarray
    y: np.ndarray
    prior_variance: float = 100.0

    def __post_init__(self):
        X = np.ascontiguousarray(self.X, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError("X must be n x d and y of length n")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0 or 1")
        if not self.prior_variance > 0:
            raise ValueError("prior variance must be positive")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def logistic_target(data: LogisticData) -> Target:
    """Bayesian logistic regression posterior with N(0, sigma^2 I) prior."""
    return Target(
        "logistic",
        data.d,
        LOGISTIC,
        X=data.X,
        XT=np.ascontiguousarray(data.X.T),
        y=data.y,
        params=np.array([1.0 / data.prior_variance]),
    )


N_COVARIATES = 24
CANONICAL_ROWS = 1000


def load_german_credit(path, expected_rows: int | None = CANONICAL_ROWS, prior_variance: float = 100.0) -> LogisticData:
    """Read the 24-covariate numeric German credit table.

    Labels 1/2 map to 0/1.  Covariates are standardised with the population
    standard deviation and an unstandardised intercept column is prepended.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != N_COVARIATES + 1:
                raise FormatError(f"expected {N_COVARIATES + 1} columns, got {len(fields)}", line=lineno)
            try:
                values = [float(v) for v in fields]
            except ValueError:
                raise FormatError("non-numeric entry", line=lineno) from None
            if any(v != int(v) for v in values):
                raise FormatError("entries must be integers", line=lineno)
            if values[-1] not in (1.0, 2.0):
                raise FormatError(f"label must be 1 or 2, got {fields[-1]}", line=lineno)
            rows.append(values)
    if not rows:
        raise FormatError("file is empty")
    if expected_rows is not None and len(rows) != expected_rows:
        raise FormatError(f"expected {expected_rows} rows, got {len(rows)}", line=len(rows))
    table = np.array(rows)
    cov = table[:, :N_COVARIATES]
    mean = cov.mean(axis=0)
    sd = cov.std(axis=0)
    constant = np.flatnonzero(sd == 0)
    if constant.size:
        raise DomainError(f"cannot standardise constant covariate column(s) {list(constant + 1)}")
    X = np.column_stack([np.ones(len(rows)), (cov - mean) / sd])
    y = (table[:, -1] == 2.0).astype(np.float64)
    return LogisticData(X, y, prior_variance)


# (low, high) integer ranges, loosely modelled on the public numeric release.
_SYNTH_COLUMNS = [
    (1, 4), (4, 72), (0, 4), (2, 184), (1, 5), (1, 5), (1, 4), (1, 4),
    (1, 3), (1, 4), (1, 4), (19, 75), (1, 3), (1, 4), (1, 2), (1, 2),
    (0, 1), (0, 1), (0, 1), (0, 1), (0, 1), (0, 1), (0, 1), (0, 1),
]


def synthetic_german_credit(seed: int = 20240613, n: int = CANONICAL_ROWS) -> np.ndarray:
    """Deterministic integer table in the German credit numeric layout.

    Used when the real file is unavailable; labels come from a logistic
    model with a fixed coefficient draw, giving roughly a 70/30 split.
    """
    rng = np.random.default_rng(seed)
    cols = []
    for lo, hi in _SYNTH_COLUMNS:
        if hi - lo == 1:
            cols.append(rng.binomial(1, rng.uniform(0.15, 0.6), size=n) + lo)
        elif hi - lo <= 5:
            probs = rng.dirichlet(np.full(hi - lo + 1, 2.0))
            cols.append(rng.choice(np.arange(lo, hi + 1), size=n, p=probs))
        else:
            u = rng.beta(1.5, 4.0, size=n)
            cols.append(np.round(lo + u * (hi - lo)).astype(np.int64))
    cov = np.column_stack(cols).astype(np.int64)
    z = (cov - cov.mean(axis=0)) / cov.std(axis=0)
    beta = rng.normal(0.0, 0.35, size=N_COVARIATES)
    eta = -0.95 + z @ beta
    labels = 1 + (rng.uniform(size=n) < 1.0 / (1.0 + np.exp(-eta)))
    return np.column_stack([cov, labels]).astype(np.int64)


def write_german_credit(path, table: np.ndarray) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for row in np.asarray(table, dtype=np.int64):
            fh.write(" ".join(f"{v:4d}" for v in row) + "\n")
    return path


def make_target(name: str, dim: int | None = None, data_path=None) -> Target:
    """Build a target by name: ``gaussian``, ``banana`` or ``logistic``."""
    if name == "gaussian":
        return gaussian_target(2 if dim is None else dim)
    if name == "banana":
        return banana_target()
    if name == "logistic":
        if data_path is None:
            raise ValueError("logistic target needs data_path")
        return logistic_target(load_german_credit(data_path))
    raise ValueError(f"unknown target {name!r}")

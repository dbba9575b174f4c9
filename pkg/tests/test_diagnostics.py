import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rebalance.diagnostics import (
    DegenerateSeriesError,
    RunMetrics,
    bootstrap_w2_fluctuation,
    compute_metrics,
    ess,
    ess_ar,
    ess_batch_means,
    fit_ar_yule_walker,
    read_samples,
    wasserstein2_1d,
    write_samples,
)
from rebalance.errors import FormatError
from rebalance.samplers import Counters
from rebalance.selftest import ar1_series


def test_ess_white_noise():
    x = np.random.default_rng(0).standard_normal(100_000)
    assert 0.9 <= ess(x) / x.size <= 1.1


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_ess_ar1(seed):
    x = ar1_series(0.9, 100_000, seed)
    expect = x.size * 0.1 / 1.9
    assert 0.8 <= ess(x) / expect <= 1.2
    assert 0.5 <= ess_batch_means(x) / ess(x) <= 2.0


def test_ar_fit_recovers_coefficient():
    fit = fit_ar_yule_walker(ar1_series(0.9, 100_000, 4))
    assert fit.order >= 1
    assert fit.coefficients[0] == pytest.approx(0.9, abs=0.02)


def test_ess_degenerate_and_short():
    with pytest.raises(DegenerateSeriesError):
        ess(np.full(100, 3.0))
    with pytest.raises(ValueError):
        ess(np.arange(5.0))


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 100), st.floats(-100, 100))
def test_ess_affine_invariance(a, b):
    x = ar1_series(0.5, 2000, 5)
    assert ess(a * x + b) == pytest.approx(ess(x), rel=1e-8)


def test_ess_clamped_to_n():
    # anti-correlated series would give ESS > N without the clamp
    x = ar1_series(-0.8, 10_000, 6)
    assert ess(x) == x.size


def test_w2_examples():
    assert wasserstein2_1d([0.0], [1.0]) == 1.0
    assert wasserstein2_1d([0.0, 2.0], [1.0, 3.0]) == 1.0
    x = np.random.default_rng(0).normal(size=100)
    assert wasserstein2_1d(x, x) == 0.0
    assert wasserstein2_1d(x, x + 2.5) == pytest.approx(2.5, abs=1e-12)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30), st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30))
def test_w2_symmetric_nonnegative(a, b):
    d = wasserstein2_1d(a, b)
    assert d >= 0 and d == pytest.approx(wasserstein2_1d(b, a), rel=1e-12, abs=1e-12)


def test_w2_iid_within_bootstrap():
    rng = np.random.default_rng(1)
    ref = rng.standard_normal(10_000)
    x = rng.choice(ref, 10_000)
    assert wasserstein2_1d(x, ref) <= 3 * bootstrap_w2_fluctuation(ref, 10_000, n_boot=50)


def test_compute_metrics_fields():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(1000, 3))
    c = Counters(jumps=800, flips=100, bounces=100, refreshes=50, grad_evals=5000)
    m = compute_metrics(x, c)
    assert m.flip_proportion == 0.1
    assert m.max_marginal_w2 is None
    assert m.ess_per_kilo_grad == pytest.approx(m.min_marginal_ess * 1000 / 5000)
    assert len(m.per_dim_means) == 3
    assert m.event_counts == {"jump": 800, "bounce": 100, "flip": 100, "refresh": 50}
    json.dumps(m.to_dict())
    m2 = compute_metrics(x, c, reference=x, squared=True)
    assert m2.max_marginal_w2 == 0.0
    assert len(m2.marginal_ess) == 6
    assert m2.min_marginal_ess <= m.min_marginal_ess


def test_compute_metrics_degenerate_marginal():
    x = np.column_stack([np.random.default_rng(3).normal(size=200), np.ones(200)])
    m = compute_metrics(x, Counters(grad_evals=10))
    assert m.min_marginal_ess is None and m.ess_per_kilo_grad is None


def test_samples_roundtrip(tmp_path):
    x = np.random.default_rng(4).normal(size=(50, 3)) * 1e-7
    write_samples(tmp_path / "s.csv", x)
    assert np.array_equal(read_samples(tmp_path / "s.csv"), x)


def test_read_samples_formats(tmp_path):
    p = tmp_path / "a.txt"
    p.write_text("# comment\nq1 q2\n1 2\n3.5,4\n")
    assert np.array_equal(read_samples(p), [[1, 2], [3.5, 4]])
    p.write_text("1,2\n3\n")
    with pytest.raises(FormatError) as e:
        read_samples(p)
    assert e.value.line == 2
    p.write_text("1,2\nx,y\n")
    with pytest.raises(FormatError) as e:
        read_samples(p)
    assert e.value.line == 2

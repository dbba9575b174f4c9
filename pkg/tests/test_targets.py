import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rebalance.errors import DomainError, FormatError
from rebalance.targets import (
    LogisticData,
    banana_target,
    gaussian_target,
    load_german_credit,
    logistic_target,
    make_target,
    synthetic_german_credit,
    write_german_credit,
)


def fd_gradient(target, q, h=1e-5):
    g = np.empty_like(q)
    for i in range(q.size):
        e = np.zeros_like(q)
        e[i] = h
        g[i] = (target.potential(q + e) - target.potential(q - e)) / (2 * h)
    return g


def test_gaussian_examples():
    t = gaussian_target(2)
    assert t.potential(np.zeros(2)) == 0.0
    assert t.potential(np.array([3.0, 4.0])) == 12.5
    q = np.random.default_rng(0).normal(size=2)
    assert np.array_equal(t.gradient(q), q)
    with pytest.raises(ValueError):
        gaussian_target(0)


def test_banana_examples():
    t = banana_target()
    assert t.potential(np.array([1.0, 1.0])) == 0.0
    assert np.array_equal(t.gradient(np.array([1.0, 1.0])), [0.0, 0.0])
    assert t.potential(np.array([0.0, 0.0])) == pytest.approx(0.1, abs=1e-15)
    a = 4.678
    assert t.gradient(np.array([a, a * a]))[1] == 0.0


def test_banana_closed_form():
    t = banana_target()
    rng = np.random.default_rng(2)
    for _ in range(50):
        q1, q2 = rng.normal(size=2) * 2
        u = (100 * (q2 - q1 ** 2) ** 2 + (q1 - 1) ** 2) / 10
        g = [(-400 * q1 * (q2 - q1 ** 2) + 2 * (q1 - 1)) / 10, 20 * (q2 - q1 ** 2)]
        assert t.potential(np.array([q1, q2])) == pytest.approx(u, rel=1e-12)
        assert np.allclose(t.gradient(np.array([q1, q2])), g, rtol=1e-12, atol=1e-12)


@given(arrays(np.float64, 2, elements=st.floats(-5, 5)))
def test_banana_nonnegative(q):
    assert banana_target().potential(q) >= 0.0


@pytest.mark.parametrize("make", [lambda: gaussian_target(3), banana_target])
def test_gradient_finite_differences(make):
    t = make()
    rng = np.random.default_rng(3)
    for _ in range(100):
        q = rng.normal(size=t.dim)
        g = t.gradient(q)
        fd = fd_gradient(t, q)
        assert np.linalg.norm(g - fd) <= 1e-4 * max(1.0, np.linalg.norm(g))


def test_logistic_toy():
    t = logistic_target(LogisticData(np.array([[1.0]]), np.array([1.0]), 100.0))
    assert t.potential(np.zeros(1)) == pytest.approx(np.log(2), abs=1e-15)


def test_logistic_gradient_at_zero():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(30, 4))
    y = (rng.uniform(size=30) < 0.4).astype(float)
    t = logistic_target(LogisticData(X, y))
    assert np.allclose(t.gradient(np.zeros(4)), -X.T @ (y - 0.5), atol=1e-13)


def test_logistic_stable_extremes():
    X = np.array([[1.0], [-1.0]])
    t = logistic_target(LogisticData(X, np.array([0.0, 1.0])))
    u, g = t.potential_and_gradient(np.array([1000.0]))
    assert np.isfinite(u) and np.all(np.isfinite(g))
    # softplus(1000) twice plus the prior term
    assert u == pytest.approx(2000.0 + 1000.0 ** 2 / 200, rel=1e-12)


def test_german_loader(german_path):
    data = load_german_credit(german_path)
    assert data.X.shape == (1000, 25)
    assert np.all(data.X[:, 0] == 1.0)
    assert np.all(np.abs(data.X[:, 1:].mean(axis=0)) <= 1e-10)
    assert np.all(np.abs(data.X[:, 1:].std(axis=0) - 1.0) <= 1e-10)
    assert set(np.unique(data.y)) == {0.0, 1.0}
    assert data.prior_variance == 100.0


def test_german_logistic_gradient(german_path):
    t = logistic_target(load_german_credit(german_path))
    rng = np.random.default_rng(5)
    for _ in range(5):
        b = rng.normal(scale=0.3, size=25)
        g = t.gradient(b)
        assert np.linalg.norm(g - fd_gradient(t, b)) <= 1e-5 * np.linalg.norm(g)


def test_logistic_convexity(german_path):
    t = logistic_target(load_german_credit(german_path))
    rng = np.random.default_rng(6)
    for _ in range(100):
        a, b = rng.normal(size=(2, 25))
        ua, ga = t.potential_and_gradient(a)
        assert t.potential(b) >= ua + ga @ (b - a) - 1e-9 * abs(ua)


def test_logistic_dimension_mismatch(german_path):
    t = logistic_target(load_german_credit(german_path))
    with pytest.raises(ValueError):
        t.potential(np.zeros(24))


def test_german_format_errors(tmp_path):
    tab = synthetic_german_credit()
    bad = tab.copy()
    bad[17, -1] = 3
    p = write_german_credit(tmp_path / "a", bad)
    with pytest.raises(FormatError) as e:
        load_german_credit(p)
    assert e.value.line == 18
    p = write_german_credit(tmp_path / "b", tab[:999])
    with pytest.raises(FormatError):
        load_german_credit(p)
    p = write_german_credit(tmp_path / "c", tab[:, 1:])
    with pytest.raises(FormatError) as e:
        load_german_credit(p)
    assert e.value.line == 1
    const = tab.copy()
    const[:, 4] = 2
    p = write_german_credit(tmp_path / "d", const)
    with pytest.raises(DomainError):
        load_german_credit(p)


def test_synthetic_table_shape():
    tab = synthetic_german_credit()
    assert tab.shape == (1000, 25)
    assert np.array_equal(tab, synthetic_german_credit())
    assert 0.2 < np.mean(tab[:, -1] == 2) < 0.45


def test_make_target(german_path):
    assert make_target("gaussian", 3).dim == 3
    assert make_target("banana").dim == 2
    assert make_target("logistic", data_path=german_path).dim == 25
    with pytest.raises(ValueError):
        make_target("logistic")
    with pytest.raises(ValueError):
        make_target("donut")

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtj_gxnor.errors import ParameterError
from mtj_gxnor.gxnor import (
    BINARY,
    TERNARY,
    ActivationWindow,
    activate,
    activate_grad,
    bound_update,
    expected_delta,
    project,
    quantize_space,
    surrogate_activation,
    symmetric_grad,
    tau,
)


# ---- quantize_space ----

def test_ternary_space():
    s = quantize_space(1)
    assert s.dz == 1.0
    np.testing.assert_array_equal(s.states, [-1, 0, 1])


def test_binary_space():
    s = quantize_space(0)
    assert s.dz == 2.0
    np.testing.assert_array_equal(s.states, [-1, 1])


def test_two_bit_space():
    s = quantize_space(2)
    assert s.dz == 0.5
    np.testing.assert_array_equal(s.states, [-1, -0.5, 0, 0.5, 1])


@pytest.mark.parametrize("n", [-1, 9, 1.5])
def test_space_rejects_out_of_range(n):
    with pytest.raises(ParameterError):
        quantize_space(n)


@given(st.integers(0, 8))
def test_space_states_in_range(n):
    s = quantize_space(n)
    assert s.resolution == 2 / 2 ** n
    assert len(s.states) == 2 ** n + 1
    assert s.states[0] == -1 and s.states[-1] == 1
    assert np.all(np.diff(s.states) == s.dz)


# ---- bound_update ----

@pytest.mark.parametrize("w,d,expect", [(-1, 1.5, 1.5), (1, 0.7, 0.0), (0.5, -2.3, -1.5)])
def test_bound_update_examples(w, d, expect):
    assert bound_update(w, d) == pytest.approx(expect)


@given(st.sampled_from([-1.0, -0.5, 0.0, 0.5, 1.0]), st.floats(-5, 5))
def test_bound_update_stays_in_range(w, d):
    assert -1.0 <= w + bound_update(w, d) <= 1.0


# ---- project ----

def test_project_ternary_positive_example():
    res = project(TERNARY, 1.5, rng=np.random.default_rng(0))
    assert res.kappa == 1 and res.nu == 0.5
    assert res.bernoulli_p == pytest.approx(math.tanh(1.5))
    assert res.delta_w in (1.0, 2.0)


def test_project_ternary_negative_example():
    res = project(TERNARY, -0.5, rng=np.random.default_rng(0))
    assert res.kappa == 0 and res.nu == -0.5
    assert res.delta_w in (0.0, -1.0)


def test_project_binary_example():
    res = project(BINARY, 0.8, rng=np.random.default_rng(0))
    assert res.kappa == 0 and res.nu == 0.8
    assert res.bernoulli_p == pytest.approx(math.tanh(3 * 0.8 / 2))
    assert res.delta_w in (0.0, 2.0)


def test_project_uses_pre_drawn_uniforms():
    p = float(project(TERNARY, 1.5, uniforms=1.0).bernoulli_p)
    assert project(TERNARY, 1.5, uniforms=p - 1e-9).delta_w == 2.0
    assert project(TERNARY, 1.5, uniforms=p).delta_w == 1.0


@pytest.mark.parametrize("m", [0.0, -1.0])
def test_project_rejects_nonpositive_m(m):
    with pytest.raises(ParameterError):
        project(TERNARY, 0.3, m=m, rng=np.random.default_rng(0))


@given(st.integers(0, 4), st.floats(-2, 2, allow_subnormal=False))
def test_split_is_exact(n, value):
    s = quantize_space(n)
    res = project(s, value, uniforms=0.5)
    assert res.kappa * s.dz + res.nu == value
    assert abs(res.nu) < s.dz
    assert res.nu == 0 or np.sign(res.nu) == np.sign(value)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 3), st.integers(0, 2 ** 31), st.floats(-3, 3))
def test_closure_over_random_draws(n, seed, delta):
    s = quantize_space(n)
    rng = np.random.default_rng(seed)
    w = rng.choice(s.states, size=2000)
    bounded = bound_update(w, np.full_like(w, delta))
    res = project(s, bounded, rng=rng)
    assert np.all(s.contains(w + res.delta_w))


def test_closure_1e5_draws():
    rng = np.random.default_rng(11)
    for n in (0, 1, 2):
        s = quantize_space(n)
        w = rng.choice(s.states, size=100_000)
        bounded = bound_update(w, rng.uniform(-3, 3, size=w.size))
        out = w + project(s, bounded, rng=rng).delta_w
        assert np.all(s.contains(out))


@pytest.mark.parametrize("n,value", [(1, 1.5), (1, -0.3), (0, 0.8), (2, -0.7), (1, 0.05)])
def test_expected_update_law(n, value):
    s = quantize_space(n)
    draws = 100_000
    rng = np.random.default_rng(123)
    res = project(s, np.full(draws, value), rng=rng)
    p = float(res.bernoulli_p[0])
    expect = expected_delta(s, value)
    # independent closed form: trunc quotient plus signed tanh fraction
    kappa = math.trunc(value / s.dz)
    nu = value - kappa * s.dz
    oracle = (kappa + math.copysign(math.tanh(3.0 * abs(nu) / s.dz), nu)) * s.dz
    assert expect == pytest.approx(oracle, abs=1e-12)
    se = s.dz * math.sqrt(p * (1 - p) / draws)
    assert abs(res.delta_w.mean() - expect) <= 3 * se + 1e-12


@given(st.floats(0, 2), st.floats(0, 2))
def test_tau_monotone_and_bounded(a, b):
    lo, hi = sorted((a, b))
    t_lo, t_hi = tau(BINARY, lo), tau(BINARY, hi)
    assert 0 <= t_lo <= t_hi <= 1


def test_tau_zero():
    assert tau(TERNARY, 0.0) == 0.0


# ---- activation ----

def test_activate_examples():
    assert activate(TERNARY, 0.9, r=0) == 1
    assert activate(BINARY, -0.2) == -1
    assert activate(TERNARY, 0.0) == 0


@given(st.integers(0, 4), st.floats(-3, 3))
def test_activate_idempotent(n, x):
    s = quantize_space(n)
    y = activate(s, x)
    assert activate(s, y) == y
    assert s.contains(y)


def test_activate_nearest_state_fine_space():
    s = quantize_space(2)
    assert activate(s, 0.3) == 0.5
    assert activate(s, -5) == -1


@pytest.mark.parametrize("r,a,x,expect", [(0, 0.5, 0.3, 1.0), (0, 0.5, 0.8, 0.0), (0, 1, -1, 0.5)])
def test_activate_grad_examples(r, a, x, expect):
    assert activate_grad(ActivationWindow(r, a), x) == expect


@pytest.mark.parametrize("a", [0.0, -0.1])
def test_window_rejects_nonpositive_width(a):
    with pytest.raises(ParameterError):
        ActivationWindow(0.5, a)


def test_symmetric_window_support():
    win = ActivationWindow()
    assert symmetric_grad(win, -0.4) == 1.0
    assert symmetric_grad(win, 1.2) == 0.0


# ---- gradient check through a 2-layer toy net ----

def _toy_loss(w1, w2, x, t, win):
    h = surrogate_activation(win, w1 @ x)
    out = w2 @ h
    return 0.5 * np.sum((out - t) ** 2)


def test_backprop_matches_finite_differences():
    rng = np.random.default_rng(5)
    win = ActivationWindow(0.5, 0.5)
    w1 = rng.normal(0, 0.3, (6, 5))
    w2 = rng.normal(0, 0.5, (3, 6))
    x = rng.normal(0, 0.5, 5)
    t = rng.normal(0, 1, 3)
    z = w1 @ x
    # keep away from the ramp corners at |z| = 1
    assert np.all(np.abs(np.abs(z) - 1) > 1e-3)
    h = surrogate_activation(win, z)
    d_out = w2 @ h - t
    g2 = np.outer(d_out, h)
    g1 = np.outer((w2.T @ d_out) * symmetric_grad(win, z), x)

    eps = 1e-6
    for grad, w in ((g1, w1), (g2, w2)):
        fd = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            orig = w[idx]
            w[idx] = orig + eps
            lp = _toy_loss(w1, w2, x, t, win)
            w[idx] = orig - eps
            lm = _toy_loss(w1, w2, x, t, win)
            w[idx] = orig
            fd[idx] = (lp - lm) / (2 * eps)
        rel = np.linalg.norm(fd - grad) / max(np.linalg.norm(fd), 1e-12)
        assert rel < 1e-4

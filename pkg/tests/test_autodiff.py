"""Scalar numeric helpers and the reverse-mode tape, certified against
hand-computed values and central finite differences."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anchordil.autodiff import (
    ConfigurationError,
    ContractViolation,
    DegenerateInputWarning,
    Tape,
    cosine_similarity,
    fd_gradient,
    kl_divergence,
    softmax_temp,
)


def finite_vectors(dim, min_size=None, max_size=None):
    n = st.integers(min_size or dim, max_size or dim)
    return n.flatmap(lambda k: st.lists(
        st.floats(-10, 10, allow_nan=False), min_size=k, max_size=k))


# ---------------------------------------------------------------- scalars

def test_cosine_hand_value():
    # dot([1,1],[1,0]) / (sqrt(2)*1) = 1/sqrt(2)
    assert cosine_similarity([1.0, 1.0], [1.0, 0.0]) == pytest.approx(
        0.7071067811865475, abs=1e-12)


def test_cosine_parallel_and_opposite():
    assert cosine_similarity([2.0, 0.0], [5.0, 0.0]) == pytest.approx(1.0)
    assert cosine_similarity([1.0, 0.0], [-3.0, 0.0]) == pytest.approx(-1.0)


def test_cosine_zero_vector_warns_and_returns_zero():
    with pytest.warns(DegenerateInputWarning):
        assert cosine_similarity([0.0, 0.0], [1.0, 0.0]) == 0.0


@given(finite_vectors(2, 2, 8), st.data())
def test_cosine_bounded(u, data):
    v = data.draw(finite_vectors(len(u)))
    if np.linalg.norm(u) < 1e-9 or np.linalg.norm(v) < 1e-9:
        return
    assert -1.0 <= cosine_similarity(u, v) <= 1.0


def test_softmax_hand_value():
    out = softmax_temp([1.0, 0.0], 1.0)
    np.testing.assert_allclose(out, [0.7310585786300049, 0.2689414213699951],
                               atol=1e-12)


def test_softmax_temperature_sharpens():
    mild = softmax_temp([1.0, 0.0], 1.0)
    sharp = softmax_temp([1.0, 0.0], 0.07)
    assert sharp[0] > mild[0]


def test_softmax_extreme_logits_stay_finite():
    out = softmax_temp([1e4, -1e4], 0.07)
    assert np.all(np.isfinite(out))
    assert out.sum() == pytest.approx(1.0)


@given(finite_vectors(2, 2, 10),
       st.floats(0.01, 10, allow_nan=False))
@settings(max_examples=50)
def test_softmax_is_distribution(x, tau):
    out = softmax_temp(x, tau)
    assert np.all(out >= 0)
    assert out.sum() == pytest.approx(1.0, abs=1e-9)


def test_softmax_rejects_bad_tau():
    with pytest.raises(ConfigurationError):
        softmax_temp([1.0, 0.0], 0.0)


def test_kl_hand_value():
    # 0.5*ln(0.5/0.9) + 0.5*ln(0.5/0.1) = ln(5/3)
    assert kl_divergence([0.5, 0.5], [0.9, 0.1]) == pytest.approx(
        0.5108256237659907, abs=1e-12)


def test_kl_identical_is_zero():
    assert kl_divergence([0.3, 0.7], [0.3, 0.7]) == pytest.approx(0.0, abs=1e-12)


@given(finite_vectors(2, 2, 6), st.data())
@settings(max_examples=50)
def test_kl_nonnegative(raw_p, data):
    raw_q = data.draw(finite_vectors(len(raw_p)))
    p = softmax_temp(raw_p, 1.0)
    q = softmax_temp(raw_q, 1.0)
    assert kl_divergence(p, q) >= -1e-12


def test_kl_rejects_non_distribution():
    with pytest.raises(ContractViolation):
        kl_divergence([0.5, 0.6], [0.5, 0.5])


def test_fd_gradient_quadratic():
    grad = fd_gradient(lambda x: float(np.sum(x**2)), np.array([1.0, -2.0, 3.0]))
    np.testing.assert_allclose(grad, [2.0, -4.0, 6.0], atol=1e-6)


# ---------------------------------------------------------------- tape ops

def rel_err(analytic, numeric):
    denom = max(np.abs(numeric).max(), 1e-8)
    return np.abs(analytic - numeric).max() / denom


def check_op(build, x0, atol=1e-4):
    """Certify d(sum of op output)/dx against central differences."""
    def value(x):
        tape = Tape()
        leaf = tape.leaf(x)
        out = tape.sum(build(tape, leaf))
        return float(out.value)

    tape = Tape()
    leaf = tape.leaf(x0)
    out = tape.sum(build(tape, leaf))
    tape.backward(out)
    numeric = fd_gradient(value, x0)
    assert rel_err(leaf.grad, numeric) <= atol


RNG = np.random.default_rng(7)


def test_grad_add_broadcast():
    c = RNG.standard_normal(4)
    check_op(lambda t, x: t.add(x, t.const(c)), RNG.standard_normal((3, 4)))


def test_grad_mul():
    c = RNG.standard_normal((3, 4))
    check_op(lambda t, x: t.mul(x, t.const(c)), RNG.standard_normal((3, 4)))


def test_grad_scale():
    check_op(lambda t, x: t.scale(x, -2.5), RNG.standard_normal(5))


def test_grad_matmul():
    w = RNG.standard_normal((4, 3))
    check_op(lambda t, x: t.matmul(x, t.const(w)), RNG.standard_normal((2, 4)))


def test_grad_matmul_vector():
    w = RNG.standard_normal((4, 3))
    check_op(lambda t, x: t.matmul(x, t.const(w)), RNG.standard_normal(4))


def test_grad_softmax_rows():
    # Weight the entries so the objective is not the constant sum of a
    # probability vector.
    w = RNG.standard_normal(6)
    check_op(lambda t, x: t.mul(t.softmax_rows(x, 0.5), t.const(w)),
             RNG.standard_normal(6))


def test_grad_layer_norm():
    w = RNG.standard_normal((3, 8))
    check_op(lambda t, x: t.mul(t.layer_norm(x), t.const(w)),
             RNG.standard_normal((3, 8)), atol=2e-4)


def test_grad_gelu():
    check_op(lambda t, x: t.gelu(x), RNG.standard_normal((2, 5)))


def test_grad_concat():
    c = RNG.standard_normal((2, 4))
    check_op(lambda t, x: t.concat([x, t.const(c)], 0),
             RNG.standard_normal((3, 4)))


def test_grad_take_row():
    check_op(lambda t, x: t.take_row(x, 1), RNG.standard_normal((3, 4)))


def test_grad_cosine_rows_wrt_query():
    anchors = RNG.standard_normal((5, 6))
    check_op(lambda t, x: t.cosine_rows(x, t.const(anchors)),
             RNG.standard_normal(6))


def test_grad_cosine_rows_wrt_anchors():
    g = RNG.standard_normal(6)
    check_op(lambda t, x: t.cosine_rows(t.const(g), x),
             RNG.standard_normal((5, 6)))


def test_grad_log():
    check_op(lambda t, x: t.log(x), np.abs(RNG.standard_normal(5)) + 0.5)


def test_grad_absval():
    check_op(lambda t, x: t.absval(x), RNG.standard_normal(7) + 0.1)


def test_grad_composite_chain():
    w = RNG.standard_normal((4, 4))
    mix = RNG.standard_normal((2, 4))

    def build(t, x):
        h = t.gelu(t.matmul(x, t.const(w)))
        return t.mul(t.softmax_rows(t.layer_norm(h), 0.3), t.const(mix))

    check_op(build, RNG.standard_normal((2, 4)), atol=2e-4)


def test_backward_requires_scalar():
    tape = Tape()
    leaf = tape.leaf(np.ones(3))
    with pytest.raises(ContractViolation):
        tape.backward(leaf)


def test_const_receives_no_gradient():
    tape = Tape()
    leaf = tape.leaf(np.ones(3))
    frozen = tape.const(np.ones(3))
    out = tape.sum(tape.add(leaf, frozen))
    tape.backward(out)
    assert frozen.grad is None
    np.testing.assert_array_equal(leaf.grad, np.ones(3))


def test_gradient_accumulates_across_reuse():
    tape = Tape()
    leaf = tape.leaf(np.array([2.0]))
    out = tape.sum(tape.add(leaf, leaf))
    tape.backward(out)
    np.testing.assert_allclose(leaf.grad, [2.0])


@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=6))
@settings(max_examples=30)
def test_tape_softmax_rows_simplex(xs):
    tape = Tape()
    out = tape.softmax_rows(tape.leaf(np.array(xs)), 0.5)
    assert out.value.sum() == pytest.approx(1.0, abs=1e-9)
    assert np.all(out.value >= 0)

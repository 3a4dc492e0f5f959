"""Dense float64 linear algebra with a minimal reverse-mode gradient tape.

The tape records a small fixed vocabulary of operations (matmul, add,
elementwise multiply, scale-by-constant, row softmax with temperature,
layer norm, GELU, concat, row slicing, cosine-similarity-against-rows,
log, abs, sum) and replays them in exact reverse order on backward().
Only leaves marked trainable keep their gradients; everything else is
discarded. A central finite-difference oracle (`fd_gradient`) is used to
certify every analytic gradient in the test suite.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.special import erf

EPS = 1e-12
_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class ContractViolation(ValueError):
    """A caller broke a documented precondition."""


class ConfigurationError(ValueError):
    """An invalid configuration value was supplied."""


class NumericFailure(FloatingPointError):
    """A non-finite value appeared where one must not."""


class DegenerateInputWarning(UserWarning):
    """Numerically degenerate input (e.g. a zero vector fed to cosine)."""


def _as_f64(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def cosine_similarity(u, v) -> float:
    """Cosine of two vectors, clamped to [-1, 1]; zero vectors map to 0."""
    u = _as_f64(u)
    v = _as_f64(v)
    if u.shape != v.shape or u.ndim != 1:
        raise ContractViolation(f"cosine_similarity shapes {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu <= EPS or nv <= EPS:
        warnings.warn("cosine_similarity on near-zero vector", DegenerateInputWarning)
        return 0.0
    c = float(np.dot(u, v) / (max(nu, EPS) * max(nv, EPS)))
    return float(np.clip(c, -1.0, 1.0))


def softmax_temp(x, tau: float) -> np.ndarray:
    """Temperature softmax with max subtraction; entries sum to 1."""
    if tau <= 0:
        raise ConfigurationError(f"softmax temperature must be positive, got {tau}")
    x = _as_f64(x)
    if not np.all(np.isfinite(x)):
        raise ContractViolation("softmax_temp on non-finite input")
    z = (x - np.max(x)) / tau
    e = np.exp(z)
    return e / np.sum(e)


def kl_divergence(p, q) -> float:
    """KL(p || q) for probability vectors, with eps-guarded logs."""
    p = _as_f64(p)
    q = _as_f64(q)
    if p.shape != q.shape or p.ndim != 1:
        raise ContractViolation(f"kl_divergence shapes {p.shape} vs {q.shape}")
    for name, vec in (("p", p), ("q", q)):
        if np.any(vec < 0) or abs(float(np.sum(vec)) - 1.0) > 1e-9:
            raise ContractViolation(f"kl_divergence: {name} is not a distribution")
    val = float(np.sum(p * (np.log(np.maximum(p, EPS)) - np.log(np.maximum(q, EPS)))))
    if val < -1e-12:
        raise NumericFailure(f"negative KL {val}")
    return val


def fd_gradient(loss_fn, theta, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar loss over a parameter block."""
    theta = _as_f64(theta).copy()
    grad = np.zeros_like(theta)
    flat = theta.ravel()
    gflat = grad.ravel()
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        lp = float(loss_fn(theta))
        flat[k] = orig - h
        lm = float(loss_fn(theta))
        flat[k] = orig
        if not (np.isfinite(lp) and np.isfinite(lm)):
            raise NumericFailure(f"fd_gradient: non-finite loss at coordinate {k}")
        gflat[k] = (lp - lm) / (2.0 * h)
    return grad


class Var:
    """A node on the tape: a value, an optional gradient, a backward rule."""

    __slots__ = ("value", "grad", "is_leaf", "_backward")

    def __init__(self, value: np.ndarray, is_leaf: bool = False, backward=None):
        self.value = value
        self.grad = None
        self.is_leaf = is_leaf
        self._backward = backward

    @property
    def shape(self):
        return self.value.shape

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.copy()
        else:
            self.grad += g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a gradient back to the shape of a broadcast operand."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Tape:
    """Records ops in order; backward() visits them exactly reversed.

    Single-threaded during record/backward; distinct tapes are independent.
    """

    def __init__(self):
        self._nodes: list[Var] = []

    def _push(self, var: Var) -> Var:
        self._nodes.append(var)
        return var

    def leaf(self, value) -> Var:
        return self._push(Var(_as_f64(value).copy(), is_leaf=True))

    def const(self, value) -> Var:
        return self._push(Var(_as_f64(value)))

    # -- recorded operations ------------------------------------------------

    def add(self, a: Var, b: Var) -> Var:
        out_val = a.value + b.value

        def back(g):
            a._accumulate(_unbroadcast(g, a.value.shape))
            b._accumulate(_unbroadcast(g, b.value.shape))

        return self._push(Var(out_val, backward=back))

    def mul(self, a: Var, b: Var) -> Var:
        if a.value.shape != b.value.shape:
            raise ContractViolation("mul requires identical shapes")
        out_val = a.value * b.value

        def back(g):
            a._accumulate(g * b.value)
            b._accumulate(g * a.value)

        return self._push(Var(out_val, backward=back))

    def scale(self, a: Var, c) -> Var:
        c = _as_f64(c)
        out_val = a.value * c

        def back(g):
            a._accumulate(_unbroadcast(g * c, a.value.shape))

        return self._push(Var(out_val, backward=back))

    def matmul(self, a: Var, b: Var) -> Var:
        if a.value.ndim not in (1, 2) or b.value.ndim not in (1, 2):
            raise ContractViolation("matmul expects 1-D or 2-D operands")
        out_val = a.value @ b.value

        def back(g):
            av, bv = a.value, b.value
            if av.ndim == 1 and bv.ndim == 2:
                a._accumulate(g @ bv.T)
                b._accumulate(np.outer(av, g))
            elif av.ndim == 2 and bv.ndim == 1:
                a._accumulate(np.outer(g, bv))
                b._accumulate(av.T @ g)
            elif av.ndim == 1 and bv.ndim == 1:
                a._accumulate(g * bv)
                b._accumulate(g * av)
            else:
                a._accumulate(g @ bv.T)
                b._accumulate(av.T @ g)

        return self._push(Var(out_val, backward=back))

    def softmax_rows(self, a: Var, tau: float = 1.0) -> Var:
        if tau <= 0:
            raise ConfigurationError(f"softmax temperature must be positive, got {tau}")
        x = a.value
        z = (x - np.max(x, axis=-1, keepdims=True)) / tau
        e = np.exp(z)
        s = e / np.sum(e, axis=-1, keepdims=True)

        def back(g):
            inner = np.sum(g * s, axis=-1, keepdims=True)
            a._accumulate(s * (g - inner) / tau)

        return self._push(Var(s, backward=back))

    def layer_norm(self, a: Var, eps: float = 1e-5) -> Var:
        x = a.value
        mu = np.mean(x, axis=-1, keepdims=True)
        var = np.var(x, axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        y = (x - mu) * inv
        n = x.shape[-1]

        def back(g):
            gy = g
            dx = inv * (
                gy
                - np.mean(gy, axis=-1, keepdims=True)
                - y * np.mean(gy * y, axis=-1, keepdims=True)
            )
            a._accumulate(dx)

        _ = n
        return self._push(Var(y, backward=back))

    def gelu(self, a: Var) -> Var:
        x = a.value
        cdf = 0.5 * (1.0 + erf(x / _SQRT2))
        y = x * cdf

        def back(g):
            pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
            a._accumulate(g * (cdf + x * pdf))

        return self._push(Var(y, backward=back))

    def concat(self, parts: list[Var], axis: int = 0) -> Var:
        out_val = np.concatenate([p.value for p in parts], axis=axis)
        sizes = [p.value.shape[axis] for p in parts]
        offsets = np.cumsum([0] + sizes)

        def back(g):
            for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                p._accumulate(g[tuple(idx)])

        return self._push(Var(out_val, backward=back))

    def take_row(self, a: Var, i: int) -> Var:
        out_val = a.value[i].copy()

        def back(g):
            full = np.zeros_like(a.value)
            full[i] = g
            a._accumulate(full)

        return self._push(Var(out_val, backward=back))

    def cosine_rows(self, g: Var, anchors: Var) -> Var:
        """cos(g, anchors[c]) for every row c; differentiable in both."""
        gv = g.value
        av = anchors.value
        if gv.ndim != 1 or av.ndim != 2 or av.shape[1] != gv.shape[0]:
            raise ContractViolation(
                f"cosine_rows shapes {gv.shape} vs {av.shape}"
            )
        gn = max(float(np.linalg.norm(gv)), EPS)
        an = np.maximum(np.linalg.norm(av, axis=1), EPS)
        r = (av @ gv) / (gn * an)

        def back(grad_r):
            w = grad_r / (gn * an)
            dg = av.T @ w - (gv / gn**2) * float(np.dot(grad_r, r))
            g._accumulate(dg)
            da = np.outer(w, gv) - ((grad_r * r / an**2)[:, None]) * av
            anchors._accumulate(da)

        return self._push(Var(r, backward=back))

    def log(self, a: Var) -> Var:
        guarded = np.maximum(a.value, EPS)
        out_val = np.log(guarded)

        def back(g):
            a._accumulate(g / guarded)

        return self._push(Var(out_val, backward=back))

    def absval(self, a: Var) -> Var:
        out_val = np.abs(a.value)

        def back(g):
            a._accumulate(g * np.sign(a.value))

        return self._push(Var(out_val, backward=back))

    def sum(self, a: Var) -> Var:
        out_val = np.asarray(np.sum(a.value))

        def back(g):
            a._accumulate(np.full_like(a.value, float(g)))

        return self._push(Var(out_val, backward=back))

    # -- reverse pass -------------------------------------------------------

    def backward(self, out: Var) -> None:
        """Propagate d(out)/d(leaf) into every leaf's .grad."""
        if out.value.size != 1:
            raise ContractViolation("backward requires a scalar output")
        for n in self._nodes:
            n.grad = None
        out.grad = np.ones_like(out.value)
        for node in reversed(self._nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)
        for n in self._nodes:
            if not n.is_leaf:
                n.grad = None

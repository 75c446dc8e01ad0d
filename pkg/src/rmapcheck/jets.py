"""Jet values and jet-array algebra.

`Jet` is the public face: evaluate an expression at a point and read off
scaled partial derivatives.  `JA` wraps numpy arrays with a trailing
coefficient axis so whole tensors of jets (metrics, frames, connection
coefficients) flow through the same truncated Taylor arithmetic; this is
what lets covariant derivatives of composite fields come out exact
instead of finite-differenced.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import backend as B
from .errors import (
    EvalDomainError,
    OrderExceededError,
    OrderTooLargeError,
    RankUnstableError,
)
from .multiindex import DEFAULT_ORDER_CAP, jet_space


def seed_var_jets(space, points):
    """Coordinate seed jets for a batch of points, shape (P, dim, size)."""
    points = np.asarray(points, dtype=np.float64)
    P = points.shape[0]
    out = np.zeros((P, space.dim, space.size))
    out[:, :, 0] = points
    if space.order >= 1:
        for v in range(space.dim):
            out[:, v, space.unit[v]] = 1.0
    return out


def const_param_jets(space, rows):
    """Constant parameter jets from a (P, n_params) array of values."""
    rows = np.asarray(rows, dtype=np.float64)
    out = np.zeros(rows.shape + (space.size,))
    out[..., 0] = rows
    return out


def eval_tape(expr, var_jets, params, space):
    """Evaluate one expression tape over a batch; raises on the first domain error."""
    tape = expr.tape
    out, err, err_op, err_val = B.eval_tape_batch(tape.ops, tape.consts, var_jets, params, space)
    bad = np.nonzero(err)[0]
    if bad.size:
        p = int(bad[0])
        raise EvalDomainError(B.ERR_NAMES.get(int(err[p]), "eval"), float(err_val[p]))
    return out


def eval_tape_soft(expr, var_jets, params, space):
    """Like `eval_tape` but returns (out, err) and leaves failed rows as NaN."""
    tape = expr.tape
    out, err, _, _ = B.eval_tape_batch(tape.ops, tape.consts, var_jets, params, space)
    return out, err


@dataclass(frozen=True)
class Jet:
    """Truncated Taylor expansion of a scalar at a point.

    `coeffs[i]` stores d^alpha f / alpha! for the multi-index alpha at
    position i of the space's table.
    """

    space: object
    point: tuple
    coeffs: np.ndarray

    @property
    def order(self):
        return self.space.order

    @property
    def value(self):
        return float(self.coeffs[0])

    def coefficient(self, alpha):
        self._check(alpha)
        return float(self.coeffs[self.space.idx(alpha)])

    def derivative(self, alpha):
        """Raw partial derivative d^alpha f at the base point."""
        self._check(alpha)
        i = self.space.idx(alpha)
        return float(self.coeffs[i] * self.space.factorials[i])

    def _check(self, alpha):
        total = sum(int(a) for a in alpha)
        if total > self.space.order:
            raise OrderExceededError(total, self.space.order)

    def _binary(self, other, f):
        if isinstance(other, Jet):
            if other.space is not self.space or other.point != self.point:
                raise ValueError("jets live at different points or orders")
            return Jet(self.space, self.point, f(self.coeffs, other.coeffs))
        c = np.zeros_like(self.coeffs)
        c[0] = float(other)
        return Jet(self.space, self.point, f(self.coeffs, c))

    def __add__(self, other):
        return self._binary(other, lambda a, b: a + b)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, lambda a, b: a - b)

    def __neg__(self):
        return Jet(self.space, self.point, -self.coeffs)

    def __mul__(self, other):
        return self._binary(other, lambda a, b: _mul(a, b, self.space))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self._binary(other, lambda a, b: _mul(a, _recip(b, self.space), self.space))


def derivative_coefficient(jet, alpha):
    """Raw partial derivative read from a jet (alpha! times the stored coefficient)."""
    return jet.derivative(alpha)


def eval_jet(expr, point, order, bindings=None, order_cap=DEFAULT_ORDER_CAP):
    """Evaluate `expr` and all partials up to `order` at `point`."""
    if order > order_cap:
        raise OrderTooLargeError(order, order_cap)
    point = tuple(float(x) for x in point)
    if len(point) != len(expr.coords):
        raise ValueError(
            f"point has {len(point)} coordinates, expression declares {len(expr.coords)}"
        )
    space = jet_space(len(point), order)
    bindings = bindings or {}
    pvals = np.zeros((1, len(expr.params), space.size))
    for i, name in enumerate(expr.params):
        if name not in bindings:
            raise ValueError(f"parameter '{name}' not bound")
        pvals[0, i, 0] = float(bindings[name])
    var_jets = seed_var_jets(space, np.array([point]))
    out = eval_tape(expr, var_jets, pvals, space)
    return Jet(space, point, out[0])


# ---------------------------------------------------------------------------
# Jet-array layer


_EINSUM_PATHS = {}


def _cached_einsum(subs, *ops):
    key = (subs,) + tuple(op.shape for op in ops)
    path = _EINSUM_PATHS.get(key)
    if path is None:
        path = np.einsum_path(subs, *ops, optimize="greedy")[0]
        _EINSUM_PATHS[key] = path
    return np.einsum(subs, *ops, optimize=path)


def _mul(a, b, space):
    C = space.size
    a, b = np.broadcast_arrays(a, b)
    outer = a[..., :, None] * b[..., None, :]
    return outer.reshape(outer.shape[:-2] + (C * C,)) @ space.mul_matrix


def _compose(series, w, space):
    # series shape (..., K+1); w nilpotent.
    order = series.shape[-1] - 1
    out = np.zeros(np.broadcast_shapes(series.shape[:-1], w.shape[:-1]) + (space.size,))
    out[..., 0] = series[..., order]
    for k in range(order - 1, -1, -1):
        out = _mul(out, w, space)
        out[..., 0] += series[..., k]
    return out


def _nilpotent(a):
    w = a.copy()
    w[..., 0] = 0.0
    return w


def _recip(a, space):
    a0 = a[..., 0]
    if np.any(a0 == 0.0):
        raise EvalDomainError("divide", 0.0)
    K = space.order
    s = np.empty(a0.shape + (K + 1,))
    s[..., 0] = 1.0 / a0
    for k in range(1, K + 1):
        s[..., k] = -s[..., k - 1] / a0
    return _compose(s, _nilpotent(a), space)


def _sqrt(a, space):
    a0 = a[..., 0]
    if np.any(a0 <= 0.0):
        raise EvalDomainError("sqrt", float(np.min(a0)))
    K = space.order
    s = np.empty(a0.shape + (K + 1,))
    s[..., 0] = np.sqrt(a0)
    for k in range(1, K + 1):
        s[..., k] = s[..., k - 1] * (1.5 / k - 1.0) / a0
    return _compose(s, _nilpotent(a), space)


class JA:
    """Array of jets: numpy array with a trailing coefficient axis.

    `k` tracks the highest total degree whose coefficients are meaningful;
    differentiation lowers it, multiplication takes the minimum.  All
    coefficients above `k` are kept at zero.
    """

    __slots__ = ("sp", "k", "a")

    def __init__(self, sp, k, a, masked=False):
        self.sp = sp
        self.k = k
        if not masked and k < sp.order:
            a = a.copy()
            a[..., sp.degrees > k] = 0.0
        self.a = a

    @staticmethod
    def const(sp, values, k=None):
        values = np.asarray(values, dtype=np.float64)
        a = np.zeros(values.shape + (sp.size,))
        a[..., 0] = values
        return JA(sp, sp.order if k is None else k, a, masked=True)

    @staticmethod
    def variables(sp, point):
        """Coordinate jets as a vector of shape (dim,)."""
        a = seed_var_jets(sp, np.asarray(point, dtype=np.float64)[None, :])[0]
        return JA(sp, sp.order, a, masked=True)

    @staticmethod
    def identity(sp, dim, k=None):
        return JA.const(sp, np.eye(dim), k)

    @property
    def shape(self):
        return self.a.shape[:-1]

    @property
    def val(self):
        return self.a[..., 0]

    def __getitem__(self, ix):
        if not isinstance(ix, tuple):
            ix = (ix,)
        return JA(self.sp, self.k, self.a[ix], masked=True)

    def _coerce(self, other):
        if isinstance(other, JA):
            if other.sp is not self.sp:
                raise ValueError("jet arrays from different spaces")
            return other
        return JA.const(self.sp, other)

    def __add__(self, other):
        o = self._coerce(other)
        return JA(self.sp, min(self.k, o.k), self.a + o.a, masked=True)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        return JA(self.sp, min(self.k, o.k), self.a - o.a, masked=True)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __neg__(self):
        return JA(self.sp, self.k, -self.a, masked=True)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return JA(self.sp, self.k, self.a * other, masked=True)
        o = self._coerce(other)
        k = min(self.k, o.k)
        return JA(self.sp, k, _mul(self.a, o.a, self.sp))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return JA(self.sp, self.k, self.a / other, masked=True)
        o = self._coerce(other)
        k = min(self.k, o.k)
        return JA(self.sp, k, _mul(self.a, _recip(o.a, self.sp), self.sp))

    def d(self, v):
        """Partial derivative along coordinate v; valid order drops by one."""
        if self.k <= 0:
            raise OrderExceededError(1, 0)
        sp = self.sp
        src = sp.diff_src[v]
        ok = src >= 0
        out = np.zeros_like(self.a)
        out[..., ok] = self.a[..., src[ok]] * sp.diff_fac[v, ok]
        return JA(sp, self.k - 1, out)

    def sqrt(self):
        return JA(self.sp, self.k, _sqrt(self.a, self.sp))

    def recip(self):
        return JA(self.sp, self.k, _recip(self.a, self.sp))

    def at_order(self, k):
        """View truncated to a lower valid order."""
        if k > self.k:
            raise OrderExceededError(k, self.k)
        return JA(self.sp, k, self.a)

    def __repr__(self):
        return f"JA(shape={self.shape}, order={self.k}, value={self.val!r})"


def jstack(items):
    sp = items[0].sp
    k = min(it.k for it in items)
    return JA(sp, k, np.stack([it.a for it in items]), masked=True)


_LETTERS = "abcdefghijklmnopqrstuvw"


def jein(spec, x, y):
    """einsum over leading axes with jet multiplication on the trailing axis.

    `spec` uses plain einsum notation without the coefficient axes, e.g.
    jein('kl,lij->kij', ginv, A).
    """
    lhs, out = spec.split("->")
    s1, s2 = lhs.split(",")
    sp = x.sp
    a = _cached_einsum(f"{s1}x,{s2}y,xyz->{out}z", x.a, y.a, sp.mul_tensor)
    return JA(sp, min(x.k, y.k), a)


def jsum(spec, x):
    """Plain einsum contraction of a single jet array (no products)."""
    lhs, out = spec.split("->")
    a = np.einsum(f"{lhs}z->{out}z", x.a)
    return JA(x.sp, x.k, a, masked=True)


def dotg(g, u, v):
    """Inner product u^a g_ab v^b as a scalar jet."""
    return jein("a,a->", u, jein("ab,b->a", g, v))


def jmatinv(A):
    """Inverse of a square jet matrix via nilpotent Neumann series."""
    sp = A.sp
    d = A.shape[0]
    A0inv = np.linalg.inv(A.val)
    Bc = JA.const(sp, A0inv, A.k)
    R = JA.const(sp, np.eye(d), A.k) - jein("ab,bc->ac", Bc, A)  # nilpotent
    acc = JA.const(sp, np.eye(d), A.k)
    for _ in range(A.k):
        acc = JA.const(sp, np.eye(d), A.k) + jein("ab,bc->ac", R, acc)
    return jein("ab,bc->ac", acc, Bc)


def mgs(vectors, g, keep=None, drop_ratio=1e-18):
    """Modified Gram-Schmidt in the metric `g` over jet vectors.

    Vectors whose residual norm collapses (relative to their own initial
    norm) are dropped; if `keep` is given the surviving count must match.
    """
    out = []
    norms = []
    for v in vectors:
        n0 = float(dotg(g, v, v).val)
        w = v
        for e in out:
            w = w - jein(",a->a", dotg(g, e, w), e)
        n2 = dotg(g, w, w)
        nv = float(n2.val)
        norms.append(nv)
        if nv <= drop_ratio * max(n0, 1e-30):
            continue
        out.append(jein(",a->a", n2.sqrt().recip(), w))
    if keep is not None and len(out) != keep:
        raise RankUnstableError(norms, keep)
    return out


@lru_cache(maxsize=None)
def _parents(space):
    """For each non-constant multi-index: (variable, index of alpha - e_v)."""
    par = np.full((space.size, 2), -1, dtype=np.int64)
    for t in range(1, space.size):
        alpha = tuple(int(x) for x in space.exps[t])
        for v in range(space.dim):
            if alpha[v] > 0:
                down = tuple(x - int(u == v) for u, x in enumerate(alpha))
                par[t] = (v, space.index[down])
                break
    return par


def compose_matrix(nsp, fjets, q):
    """Monomial table for composing target jets with map component jets.

    Row alpha holds the source jet of the monomial (y - q)^alpha evaluated
    on `fjets`; composing a target jet is then one matrix product.
    """
    msp = fjets.sp
    k = fjets.k
    par = _parents(nsp)
    w = [fjets[b] - float(q[b]) for b in range(nsp.dim)]
    out = np.zeros((nsp.size, msp.size))
    one = JA.const(msp, 1.0, k)
    monos = [one]
    out[0] = one.a
    for t in range(1, nsp.size):
        if nsp.degrees[t] > k:
            monos.append(None)
            continue
        v, down = par[t]
        m = monos[down] * w[v]
        monos.append(m)
        out[t] = m.a
    return out


def jet_compose(njet, fjets, q, mono=None):
    """Compose a jet on the target space with component jets of a map.

    `njet` is a scalar jet over an n-dimensional space centered at `q`;
    `fjets` is a JA vector of n source-space jets whose values equal `q`.
    Returns the scalar jet of the composite over the source space.
    """
    k = min(njet.k, fjets.k)
    if mono is None:
        mono = compose_matrix(njet.sp, fjets, q)
    keep = (njet.sp.degrees <= k).astype(float)
    return JA(fjets.sp, k, (njet.a * keep) @ mono)

"""Tape evaluation backends.

Expressions compile to a flat instruction tape (one register per
instruction).  The tape runs over jet coefficient vectors, so one pass
yields the value and every partial derivative up to the space order.

Two implementations share the tape contract:

* ``numba`` - JIT-compiled point loop (default when numba imports),
* ``numpy`` - vectorized over the point batch, no compilation step.

Selection: environment variable ``RMAPCHECK_NUMBA`` set to ``0`` forces the
numpy path, ``1`` requires numba, unset picks numba when available.
Both accumulate convolution triples in the same order; results agree to
within libm rounding of the transcendental functions.
"""

from __future__ import annotations

import os

import numpy as np

OP_CONST = 0
OP_VAR = 1
OP_PARAM = 2
OP_ADD = 3
OP_SUB = 4
OP_MUL = 5
OP_DIV = 6
OP_NEG = 7
OP_EXP = 8
OP_LOG = 9
OP_SIN = 10
OP_COS = 11
OP_SQRT = 12
OP_POWI = 13
OP_POWR = 14

ERR_OK = 0
ERR_LOG = 1
ERR_SQRT = 2
ERR_DIV = 3
ERR_POW = 4

ERR_NAMES = {ERR_LOG: "log", ERR_SQRT: "sqrt", ERR_DIV: "divide", ERR_POW: "pow"}

_ENV_FLAG = "RMAPCHECK_NUMBA"
_active = None


def _resolve_backend():
    flag = os.environ.get(_ENV_FLAG, "").strip()
    if flag == "0":
        return "numpy"
    if flag == "1":
        from . import _tape_loops  # noqa: F401  (raises if numba missing)

        return "numba"
    try:
        from . import _tape_loops  # noqa: F401

        return "numba"
    except ImportError:
        return "numpy"


def active_backend():
    global _active
    if _active is None:
        _active = _resolve_backend()
    return _active


class _Batch:
    """Per-call scratch shared by the vectorized numpy kernels."""

    def __init__(self, space, P):
        self.space = space
        self.P = P
        offs = (np.arange(P) * space.size)[:, None]
        self.flat_bins = (space.mul_k[None, :] + offs).ravel()
        self.minlength = P * space.size

    def mul(self, a, b):
        sp = self.space
        weights = (a[:, sp.mul_i] * b[:, sp.mul_j]).ravel()
        out = np.bincount(self.flat_bins, weights=weights, minlength=self.minlength)
        return out.reshape(self.P, sp.size)

    def compose(self, s, w):
        # sum_k s[:, k] * w^k (Horner); w[:, 0] must be zero.
        order = s.shape[1] - 1
        out = np.zeros_like(w)
        out[:, 0] = s[:, order]
        for k in range(order - 1, -1, -1):
            out = self.mul(out, w)
            out[:, 0] += s[:, k]
        return out

    def ipow(self, a, n):
        out = np.zeros_like(a)
        out[:, 0] = 1.0
        base = a.copy()
        m = n
        while m > 0:
            if m & 1:
                out = self.mul(out, base)
            m >>= 1
            if m > 0:
                base = self.mul(base, base)
        return out


def _recip_series(b0, order):
    s = np.empty((b0.shape[0], order + 1))
    s[:, 0] = 1.0 / b0
    for k in range(1, order + 1):
        s[:, k] = -s[:, k - 1] / b0
    return s


def eval_tape_batch_numpy(ops, consts, var_jets, params, space):
    """Vectorized tape evaluation; returns (out, err, err_op, err_val).

    `var_jets` has shape (P, n_vars, size); `params` holds one jet per
    frozen parameter, shape (P, n_params, size), so parameters may carry
    derivatives when they ride along a map.
    """
    P = var_jets.shape[0]
    n_ops = ops.shape[0]
    C = space.size
    order = space.order
    batch = _Batch(space, P)
    regs = np.zeros((n_ops, P, C))
    err = np.zeros(P, dtype=np.int64)
    err_op = np.full(P, -1, dtype=np.int64)
    err_val = np.zeros(P)

    def record(bad, code, i, vals):
        fresh = bad & (err == 0)
        err[fresh] = code
        err_op[fresh] = i
        err_val[fresh] = vals[fresh]

    def nilpotent(a):
        w = a.copy()
        w[:, 0] = 0.0
        return w

    with np.errstate(all="ignore"):
        for i in range(n_ops):
            op, a1, a2 = ops[i]
            r = regs[i]
            if op == OP_CONST:
                r[:, 0] = consts[i]
            elif op == OP_VAR:
                r[:] = var_jets[:, a1]
            elif op == OP_PARAM:
                r[:] = params[:, a1]
            elif op == OP_ADD:
                r[:] = regs[a1] + regs[a2]
            elif op == OP_SUB:
                r[:] = regs[a1] - regs[a2]
            elif op == OP_NEG:
                r[:] = -regs[a1]
            elif op == OP_MUL:
                r[:] = batch.mul(regs[a1], regs[a2])
            elif op == OP_DIV:
                b0 = regs[a2][:, 0]
                record(b0 == 0.0, ERR_DIV, i, b0)
                safe = np.where(b0 == 0.0, 1.0, b0)
                s = _recip_series(safe, order)
                r[:] = batch.mul(regs[a1], batch.compose(s, nilpotent(regs[a2])))
            elif op == OP_EXP:
                a0 = regs[a1][:, 0]
                s = np.empty((P, order + 1))
                s[:, 0] = np.exp(a0)
                for k in range(1, order + 1):
                    s[:, k] = s[:, k - 1] / k
                r[:] = batch.compose(s, nilpotent(regs[a1]))
            elif op == OP_LOG:
                a0 = regs[a1][:, 0]
                record(a0 <= 0.0, ERR_LOG, i, a0)
                safe = np.where(a0 <= 0.0, 1.0, a0)
                s = np.empty((P, order + 1))
                s[:, 0] = np.log(safe)
                if order >= 1:
                    s[:, 1] = 1.0 / safe
                for k in range(2, order + 1):
                    s[:, k] = -s[:, k - 1] * (k - 1) / (k * safe)
                r[:] = batch.compose(s, nilpotent(regs[a1]))
            elif op in (OP_SIN, OP_COS):
                a0 = regs[a1][:, 0]
                sv, cv = np.sin(a0), np.cos(a0)
                table = (sv, cv, -sv, -cv)
                s = np.empty((P, order + 1))
                fact = 1.0
                for k in range(order + 1):
                    if k > 0:
                        fact *= k
                    ph = k % 4 if op == OP_SIN else (k + 1) % 4
                    s[:, k] = table[ph] / fact
                r[:] = batch.compose(s, nilpotent(regs[a1]))
            elif op == OP_SQRT:
                a0 = regs[a1][:, 0]
                record(a0 <= 0.0, ERR_SQRT, i, a0)
                safe = np.where(a0 <= 0.0, 1.0, a0)
                s = np.empty((P, order + 1))
                s[:, 0] = np.sqrt(safe)
                for k in range(1, order + 1):
                    s[:, k] = s[:, k - 1] * (1.5 / k - 1.0) / safe
                r[:] = batch.compose(s, nilpotent(regs[a1]))
            elif op == OP_POWI:
                n = int(consts[i])
                if n >= 0:
                    r[:] = batch.ipow(regs[a1], n)
                else:
                    b0 = regs[a1][:, 0]
                    record(b0 == 0.0, ERR_DIV, i, b0)
                    safe = np.where(b0 == 0.0, 1.0, b0)
                    s = _recip_series(safe, order)
                    r[:] = batch.ipow(batch.compose(s, nilpotent(regs[a1])), -n)
            elif op == OP_POWR:
                e = consts[i]
                a0 = regs[a1][:, 0]
                record(a0 <= 0.0, ERR_POW, i, a0)
                safe = np.where(a0 <= 0.0, 1.0, a0)
                s = np.empty((P, order + 1))
                s[:, 0] = safe ** e
                for k in range(1, order + 1):
                    s[:, k] = s[:, k - 1] * (e - (k - 1)) / (k * safe)
                r[:] = batch.compose(s, nilpotent(regs[a1]))
            else:
                raise ValueError(f"unknown opcode {op}")

    out = regs[n_ops - 1].copy()
    out[err != 0] = np.nan
    return out, err, err_op, err_val


def eval_tape_batch_numba(ops, consts, var_jets, params, space):
    from . import _tape_loops

    P = var_jets.shape[0]
    out = np.empty((P, space.size))
    err = np.zeros(P, dtype=np.int64)
    err_op = np.full(P, -1, dtype=np.int64)
    err_val = np.zeros(P)
    _tape_loops.eval_tape_batch(
        ops, consts, var_jets, params,
        space.mul_i, space.mul_j, space.mul_k,
        space.order, out, err, err_op, err_val,
    )
    return out, err, err_op, err_val


def eval_tape_batch(ops, consts, var_jets, params, space):
    if active_backend() == "numba":
        return eval_tape_batch_numba(ops, consts, var_jets, params, space)
    return eval_tape_batch_numpy(ops, consts, var_jets, params, space)

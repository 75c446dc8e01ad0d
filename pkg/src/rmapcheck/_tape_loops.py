"""Numba kernels for tape evaluation over dense jet coefficient vectors.

Importing this module requires numba; `backend` imports it lazily so the
pure-numpy path works on installations without a JIT.  The accumulation
order inside `_mul_into` matches the numpy fallback (triples ascending),
so the two backends differ at most by libm rounding in transcendentals.
"""

import numpy as np
from numba import njit

from .backend import (
    ERR_DIV,
    ERR_LOG,
    ERR_POW,
    ERR_SQRT,
    OP_ADD,
    OP_CONST,
    OP_COS,
    OP_DIV,
    OP_EXP,
    OP_LOG,
    OP_MUL,
    OP_NEG,
    OP_PARAM,
    OP_POWI,
    OP_POWR,
    OP_SIN,
    OP_SQRT,
    OP_SUB,
    OP_VAR,
)


@njit(cache=True, nogil=True)
def _mul_into(a, b, out, mul_i, mul_j, mul_k):
    out[:] = 0.0
    for t in range(mul_i.shape[0]):
        out[mul_k[t]] += a[mul_i[t]] * b[mul_j[t]]


@njit(cache=True, nogil=True)
def _compose_into(s, order, w, out, tmp, mul_i, mul_j, mul_k):
    # out = sum_k s[k] * w^k with w nilpotent (w[0] == 0), Horner form.
    out[:] = 0.0
    out[0] = s[order]
    for k in range(order - 1, -1, -1):
        _mul_into(out, w, tmp, mul_i, mul_j, mul_k)
        out[:] = tmp
        out[0] += s[k]


@njit(cache=True, nogil=True)
def _ipow_into(a, n, out, base, tmp, mul_i, mul_j, mul_k):
    # out = a^n for n >= 0 by binary exponentiation.
    out[:] = 0.0
    out[0] = 1.0
    base[:] = a
    m = n
    while m > 0:
        if m & 1:
            _mul_into(out, base, tmp, mul_i, mul_j, mul_k)
            out[:] = tmp
        m >>= 1
        if m > 0:
            _mul_into(base, base, tmp, mul_i, mul_j, mul_k)
            base[:] = tmp


@njit(cache=True, nogil=True)
def eval_tape_batch(ops, consts, var_jets, params, mul_i, mul_j, mul_k,
                    order, out, err, err_op, err_val):
    n_ops = ops.shape[0]
    P = var_jets.shape[0]
    C = var_jets.shape[2]
    regs = np.zeros((n_ops, C))
    w = np.zeros(C)
    acc = np.zeros(C)
    tmp = np.zeros(C)
    base = np.zeros(C)
    s = np.zeros(order + 1)

    for p in range(P):
        failed = False
        for i in range(n_ops):
            op = ops[i, 0]
            a1 = ops[i, 1]
            a2 = ops[i, 2]
            r = regs[i]
            if op == OP_CONST:
                r[:] = 0.0
                r[0] = consts[i]
            elif op == OP_VAR:
                r[:] = var_jets[p, a1]
            elif op == OP_PARAM:
                r[:] = params[p, a1]
            elif op == OP_ADD:
                r[:] = regs[a1] + regs[a2]
            elif op == OP_SUB:
                r[:] = regs[a1] - regs[a2]
            elif op == OP_NEG:
                r[:] = -regs[a1]
            elif op == OP_MUL:
                _mul_into(regs[a1], regs[a2], r, mul_i, mul_j, mul_k)
            elif op == OP_DIV:
                b0 = regs[a2][0]
                if b0 == 0.0:
                    err[p] = ERR_DIV
                    err_op[p] = i
                    err_val[p] = b0
                    failed = True
                    break
                s[0] = 1.0 / b0
                for k in range(1, order + 1):
                    s[k] = -s[k - 1] / b0
                w[:] = regs[a2]
                w[0] = 0.0
                _compose_into(s, order, w, acc, tmp, mul_i, mul_j, mul_k)
                _mul_into(regs[a1], acc, r, mul_i, mul_j, mul_k)
            elif op == OP_EXP:
                a0 = regs[a1][0]
                s[0] = np.exp(a0)
                for k in range(1, order + 1):
                    s[k] = s[k - 1] / k
                w[:] = regs[a1]
                w[0] = 0.0
                _compose_into(s, order, w, r, tmp, mul_i, mul_j, mul_k)
            elif op == OP_LOG:
                a0 = regs[a1][0]
                if a0 <= 0.0:
                    err[p] = ERR_LOG
                    err_op[p] = i
                    err_val[p] = a0
                    failed = True
                    break
                s[0] = np.log(a0)
                if order >= 1:
                    s[1] = 1.0 / a0
                for k in range(2, order + 1):
                    s[k] = -s[k - 1] * (k - 1) / (k * a0)
                w[:] = regs[a1]
                w[0] = 0.0
                _compose_into(s, order, w, r, tmp, mul_i, mul_j, mul_k)
            elif op == OP_SIN or op == OP_COS:
                a0 = regs[a1][0]
                sv = np.sin(a0)
                cv = np.cos(a0)
                fact = 1.0
                for k in range(order + 1):
                    if k > 0:
                        fact *= k
                    ph = k % 4 if op == OP_SIN else (k + 1) % 4
                    if ph == 0:
                        d = sv
                    elif ph == 1:
                        d = cv
                    elif ph == 2:
                        d = -sv
                    else:
                        d = -cv
                    s[k] = d / fact
                w[:] = regs[a1]
                w[0] = 0.0
                _compose_into(s, order, w, r, tmp, mul_i, mul_j, mul_k)
            elif op == OP_SQRT:
                a0 = regs[a1][0]
                if a0 <= 0.0:
                    err[p] = ERR_SQRT
                    err_op[p] = i
                    err_val[p] = a0
                    failed = True
                    break
                s[0] = np.sqrt(a0)
                for k in range(1, order + 1):
                    s[k] = s[k - 1] * (1.5 / k - 1.0) / a0
                w[:] = regs[a1]
                w[0] = 0.0
                _compose_into(s, order, w, r, tmp, mul_i, mul_j, mul_k)
            elif op == OP_POWI:
                n = int(consts[i])
                if n >= 0:
                    _ipow_into(regs[a1], n, r, base, tmp, mul_i, mul_j, mul_k)
                else:
                    b0 = regs[a1][0]
                    if b0 == 0.0:
                        err[p] = ERR_DIV
                        err_op[p] = i
                        err_val[p] = b0
                        failed = True
                        break
                    s[0] = 1.0 / b0
                    for k in range(1, order + 1):
                        s[k] = -s[k - 1] / b0
                    w[:] = regs[a1]
                    w[0] = 0.0
                    _compose_into(s, order, w, acc, tmp, mul_i, mul_j, mul_k)
                    _ipow_into(acc, -n, r, base, tmp, mul_i, mul_j, mul_k)
            elif op == OP_POWR:
                e = consts[i]
                a0 = regs[a1][0]
                if a0 <= 0.0:
                    err[p] = ERR_POW
                    err_op[p] = i
                    err_val[p] = a0
                    failed = True
                    break
                s[0] = a0 ** e
                for k in range(1, order + 1):
                    s[k] = s[k - 1] * (e - (k - 1)) / (k * a0)
                w[:] = regs[a1]
                w[0] = 0.0
                _compose_into(s, order, w, r, tmp, mul_i, mul_j, mul_k)
        if failed:
            out[p, :] = np.nan
        else:
            out[p, :] = regs[n_ops - 1]

"""Dense multi-index tables backing truncated Taylor (jet) arithmetic.

A jet of order K over d variables stores one coefficient per multi-index
alpha with |alpha| <= K, holding the scaled partial derivative
d^alpha f / alpha!.  Dimensions and orders are small here (d <= 6, K <= 8),
so dense tables beat sparse bookkeeping.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

# Default cap on evaluation order; fourth derivatives are the deepest any
# built-in computation reaches.
DEFAULT_ORDER_CAP = 4
MAX_DIM = 6
MAX_ORDER = 8


def _multi_indices(dim, order):
    """All exponent tuples with total degree <= order, sorted by (degree, lex)."""
    out = [()]
    for _ in range(dim):
        out = [t + (k,) for t in out for k in range(order + 1)]
    out = [t for t in out if sum(t) <= order]
    out.sort(key=lambda t: (sum(t), t))
    return out


class JetSpace:
    """Index tables for jets over `dim` variables truncated at `order`."""

    def __init__(self, dim, order):
        if not (1 <= dim <= MAX_DIM):
            raise ValueError(f"jet dimension {dim} outside supported range 1..{MAX_DIM}")
        if not (0 <= order <= MAX_ORDER):
            raise ValueError(f"jet order {order} outside supported range 0..{MAX_ORDER}")
        self.dim = dim
        self.order = order
        exps = _multi_indices(dim, order)
        self.exps = np.array(exps, dtype=np.int64).reshape(len(exps), dim)
        self.size = len(exps)
        self.index = {t: i for i, t in enumerate(exps)}
        self.degrees = self.exps.sum(axis=1)
        self.factorials = np.array(
            [math.prod(math.factorial(int(k)) for k in t) for t in exps], dtype=np.float64
        )
        # Position of the first-order coefficient for each variable (order >= 1).
        self.unit = np.array(
            [self.index[tuple(int(i == j) for j in range(dim))] if order >= 1 else -1
             for i in range(dim)],
            dtype=np.int64,
        )
        self._build_mul_triples()
        self._build_diff_tables()
        self._mul_tensor = None
        self._mul_matrix = None
        self._scatter = None

    def _build_mul_triples(self):
        """Triples (i, j, k) with alpha_i + alpha_j = alpha_k, |alpha_k| <= order.

        Sorted by (k, i, j) so that both backends accumulate contributions in
        the same sequence and stay bitwise identical.
        """
        triples = []
        for i, a in enumerate(map(tuple, self.exps)):
            da = sum(a)
            for j, b in enumerate(map(tuple, self.exps)):
                if da + sum(b) > self.order:
                    continue
                k = self.index[tuple(x + y for x, y in zip(a, b))]
                triples.append((k, i, j))
        triples.sort()
        t = np.array(triples, dtype=np.int64).reshape(len(triples), 3)
        self.mul_k = np.ascontiguousarray(t[:, 0])
        self.mul_i = np.ascontiguousarray(t[:, 1])
        self.mul_j = np.ascontiguousarray(t[:, 2])

    def _build_diff_tables(self):
        """Gather tables for d/dx_v: source coefficient index and scale factor.

        diff_src[v, t] is the index of alpha(t) + e_v (or -1 when that index
        leaves the table); diff_fac[v, t] = alpha(t)_v + 1.
        """
        src = np.full((self.dim, self.size), -1, dtype=np.int64)
        fac = np.zeros((self.dim, self.size), dtype=np.float64)
        for t, a in enumerate(map(tuple, self.exps)):
            for v in range(self.dim):
                shifted = tuple(x + int(u == v) for u, x in enumerate(a))
                k = self.index.get(shifted)
                if k is not None:
                    src[v, t] = k
                    fac[v, t] = a[v] + 1.0
        self.diff_src = src
        self.diff_fac = fac

    @property
    def mul_tensor(self):
        """Dense (size, size, size) tensor T with T[i, j, k] = 1 iff alpha_i+alpha_j=alpha_k."""
        if self._mul_tensor is None:
            T = np.zeros((self.size, self.size, self.size))
            T[self.mul_i, self.mul_j, self.mul_k] = 1.0
            self._mul_tensor = T
        return self._mul_tensor

    @property
    def mul_matrix(self):
        """mul_tensor reshaped to (size*size, size) for matmul-based products."""
        if self._mul_matrix is None:
            self._mul_matrix = np.ascontiguousarray(
                self.mul_tensor.reshape(self.size * self.size, self.size)
            )
        return self._mul_matrix

    @property
    def scatter(self):
        """Dense (n_triples, size) scatter matrix mapping pair products to coefficients."""
        if self._scatter is None:
            S = np.zeros((len(self.mul_k), self.size))
            S[np.arange(len(self.mul_k)), self.mul_k] = 1.0
            self._scatter = S
        return self._scatter

    def idx(self, alpha):
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.dim:
            raise ValueError(f"multi-index length {len(alpha)} != dimension {self.dim}")
        try:
            return self.index[alpha]
        except KeyError:
            raise OrderExceeded(alpha, self.order) from None

    def __repr__(self):
        return f"JetSpace(dim={self.dim}, order={self.order}, size={self.size})"


def OrderExceeded(alpha, order):
    from .errors import OrderExceededError

    return OrderExceededError(sum(alpha), order)


@lru_cache(maxsize=None)
def jet_space(dim, order):
    return JetSpace(dim, order)

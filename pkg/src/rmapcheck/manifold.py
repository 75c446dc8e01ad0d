"""Pointwise Riemannian geometry of a chart-defined manifold.

Index conventions used throughout the package:

* ``dg[i, j, k]``        = d_k g_ij
* ``d2g[i, j, k, l]``    = d_k d_l g_ij
* ``gamma[k, i, j]``     = Gamma^k_ij (Levi-Civita, symmetric in i, j)
* ``riemann[l, i, j, k]``= component l of R(d_i, d_j) d_k with
  R(X, Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z
* ``ricci[i, j]``        = sum_a < R(E_a, d_i) d_j, E_a > over any
  orthonormal frame (positive on the round sphere)
* ``scalar``             = g^ij ricci_ij

Batch functions carry a leading point axis and are the fast path used by
the random-metric property suites; the jet-field variants feed the
map-level pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NotPositiveDefiniteError, SchemaError
from .expr import Expression, parse_expression, render
from .jets import JA, eval_tape_soft, jein, jsum, jmatinv, seed_var_jets
from .multiindex import jet_space


class ChartManifold:
    """A manifold described by one chart: coordinates and a metric expression matrix.

    Parameters are names the metric may reference whose values are frozen
    per evaluation; their defining expressions live over another
    manifold's coordinates and are bound by the caller.
    """

    def __init__(self, name, coords, metric, params=None):
        self.name = name
        self.coords = tuple(coords)
        self.dim = len(self.coords)
        self.params = dict(params or {})  # name -> Expression over foreign coords
        self.param_names = tuple(self.params.keys())
        if len(metric) != self.dim or any(len(row) != self.dim for row in metric):
            raise SchemaError(name, f"metric must be {self.dim}x{self.dim}")
        self.metric = [
            [self._expr(entry) for entry in row]
            for row in metric
        ]
        for i in range(self.dim):
            for j in range(i + 1, self.dim):
                if render(self.metric[i][j].root) != render(self.metric[j][i].root):
                    raise SchemaError(
                        name, f"metric entries ({i},{j}) and ({j},{i}) differ"
                    )
        self._entry_list = [
            (i, j, self.metric[i][j]) for i in range(self.dim) for j in range(i, self.dim)
        ]

    def _expr(self, entry):
        if isinstance(entry, Expression):
            return entry
        return parse_expression(entry, self.coords, self.param_names)

    def param_values(self, foreign_point):
        """Evaluate the frozen-parameter definitions at a point of their home manifold."""
        out = {}
        for name, expr in self.params.items():
            sp = jet_space(len(expr.coords), 0)
            vj = seed_var_jets(sp, np.asarray(foreign_point, dtype=float)[None, :])
            vals, err = eval_tape_soft(expr, vj, np.zeros((1, 0, sp.size)), sp)
            if err[0]:
                from .errors import EvalDomainError

                raise EvalDomainError(f"parameter {name}", None)
            out[name] = float(vals[0, 0])
        return out

    def param_row(self, bindings):
        bindings = bindings or {}
        missing = [n for n in self.param_names if n not in bindings]
        if missing:
            raise ValueError(f"unbound parameters {missing} for manifold {self.name}")
        return np.array([[float(bindings[n]) for n in self.param_names]], dtype=float)

    def param_jets(self, space, bindings):
        from .jets import const_param_jets

        return const_param_jets(space, self.param_row(bindings))

    def __repr__(self):
        return f"ChartManifold({self.name!r}, dim={self.dim})"


@dataclass
class MetricSample:
    point: tuple
    g: np.ndarray
    g_inv: np.ndarray
    dg: np.ndarray
    d2g: np.ndarray
    bindings: dict = field(default_factory=dict)


@dataclass
class CurvatureSample:
    point: tuple
    gamma: np.ndarray
    riemann: np.ndarray
    riemann_lowered: np.ndarray
    ricci: np.ndarray
    scalar: float


def metric_batch(M, points, param_rows=None, order=2):
    """Evaluate g, dg, d2g over a batch of points.

    Returns (g, dg, d2g, err); rows with a domain error hold NaN.
    Derivative arrays above the requested order are zero-filled.
    """
    points = np.asarray(points, dtype=float)
    P, m = points.shape
    sp = jet_space(m, order)
    vj = seed_var_jets(sp, points)
    if param_rows is None:
        param_rows = np.zeros((P, len(M.param_names)))
    from .jets import const_param_jets

    pjets = const_param_jets(sp, param_rows)
    coeffs = np.zeros((P, m, m, sp.size))
    err = np.zeros(P, dtype=np.int64)
    for i, j, expr in M._entry_list:
        out, e = eval_tape_soft(expr, vj, pjets, sp)
        coeffs[:, i, j] = out
        coeffs[:, j, i] = out
        err |= e != 0
    g = coeffs[..., 0]
    dg = np.zeros((P, m, m, m))
    d2g = np.zeros((P, m, m, m, m))
    if order >= 1:
        for k in range(m):
            dg[..., k] = coeffs[..., sp.unit[k]]
    if order >= 2:
        for k in range(m):
            for l in range(m):
                alpha = [0] * m
                alpha[k] += 1
                alpha[l] += 1
                idx = sp.index[tuple(alpha)]
                fac = 2.0 if k == l else 1.0
                d2g[..., k, l] = coeffs[..., idx] * fac
    return g, dg, d2g, err


def metric_sample(M, p, bindings=None, pd_tol=1e-10, order=2):
    p = tuple(float(x) for x in p)
    rows = M.param_row(bindings)
    g, dg, d2g, err = metric_batch(M, np.array([p]), rows, order=order)
    if err[0]:
        from .errors import EvalDomainError

        raise EvalDomainError("metric", None)
    w = np.linalg.eigvalsh(g[0])
    if w.min() <= pd_tol:
        raise NotPositiveDefiniteError(p, w)
    return MetricSample(p, g[0], np.linalg.inv(g[0]), dg[0], d2g[0], dict(bindings or {}))


def christoffel_batch(g_inv, dg):
    A = (
        np.einsum("...jli->...lij", dg)
        + np.einsum("...ilj->...lij", dg)
        - np.einsum("...ijl->...lij", dg)
    )
    return 0.5 * np.einsum("...kl,...lij->...kij", g_inv, A)


def christoffel(ms):
    """Levi-Civita connection coefficients Gamma^k_ij at the sample point."""
    return christoffel_batch(ms.g_inv[None], ms.dg[None])[0]


def curvature_batch(g, g_inv, dg, d2g):
    """Gamma, Riemann, Ricci and scalar curvature over a batch."""
    A = (
        np.einsum("...jli->...lij", dg)
        + np.einsum("...ilj->...lij", dg)
        - np.einsum("...ijl->...lij", dg)
    )
    gamma = 0.5 * np.einsum("...kl,...lij->...kij", g_inv, A)
    dginv = -np.einsum("...ka,...abh,...bl->...klh", g_inv, dg, g_inv)
    dA = (
        np.einsum("...jlih->...lijh", d2g)
        + np.einsum("...iljh->...lijh", d2g)
        - np.einsum("...ijlh->...lijh", d2g)
    )
    dgamma = 0.5 * (
        np.einsum("...klh,...lij->...hkij", dginv, A)
        + np.einsum("...kl,...lijh->...hkij", g_inv, dA)
    )
    riemann = (
        np.einsum("...iljk->...lijk", dgamma)
        - np.einsum("...jlik->...lijk", dgamma)
        + np.einsum("...lim,...mjk->...lijk", gamma, gamma)
        - np.einsum("...ljm,...mik->...lijk", gamma, gamma)
    )
    ricci = np.einsum("...aaij->...ij", riemann)
    scalar = np.einsum("...ij,...ij->...", g_inv, ricci)
    return gamma, riemann, ricci, scalar


def curvature_sample(M, p, bindings=None, pd_tol=1e-10):
    ms = metric_sample(M, p, bindings, pd_tol=pd_tol)
    gamma, riemann, ricci, scalar = curvature_batch(
        ms.g[None], ms.g_inv[None], ms.dg[None], ms.d2g[None]
    )
    lowered = np.einsum("lm,mijk->ijkl", ms.g, riemann[0])
    return CurvatureSample(ms.point, gamma[0], riemann[0], lowered, ricci[0], float(scalar[0]))


def space_form_curvature(c, ms, X, Y, Z):
    """Constant-curvature model tensor c*(g(Y,Z) X - g(X,Z) Y)."""
    g = ms.g if isinstance(ms, MetricSample) else np.asarray(ms)
    X, Y, Z = (np.asarray(v, dtype=float) for v in (X, Y, Z))
    return c * (g @ Z @ Y * X - g @ Z @ X * Y)


def _field_exprs(M, components):
    out = []
    for comp in components:
        if isinstance(comp, Expression):
            out.append(comp)
        else:
            out.append(parse_expression(comp, M.coords, M.param_names))
    return out


def field_jets(M, components, p, order, bindings=None):
    """Evaluate a tuple of component expressions as a jet vector at p."""
    exprs = _field_exprs(M, components)
    sp = jet_space(M.dim, order)
    vj = seed_var_jets(sp, np.asarray(p, dtype=float)[None, :])
    pjets = M.param_jets(sp, bindings)
    data = np.empty((len(exprs), sp.size))
    for i, e in enumerate(exprs):
        out, err = eval_tape_soft(e, vj, pjets, sp)
        if err[0]:
            from .errors import EvalDomainError

            raise EvalDomainError("field", None)
        data[i] = out[0]
    return JA(sp, order, data, masked=True)


def metric_field(M, x, bindings=None, param_jets=None):
    """Metric as a jet matrix evaluated on arbitrary coordinate jets `x`.

    `param_jets` (an optional (1, n_params, size) array) lets frozen
    parameters carry variation, e.g. when they ride along a map.
    """
    sp = x.sp
    if param_jets is None:
        param_jets = M.param_jets(sp, bindings)
    data = np.zeros((M.dim, M.dim, sp.size))
    vj = x.a[None]
    k = x.k
    for i, j, expr in M._entry_list:
        out, err = eval_tape_soft(expr, vj, param_jets, sp)
        if err[0]:
            from .errors import EvalDomainError

            raise EvalDomainError("metric", None)
        data[i, j] = out[0]
        data[j, i] = out[0]
    return JA(sp, k, data)


def jgrad(T):
    """Stack coordinate derivatives as a new trailing tensor axis."""
    arrs = [T.d(v).a for v in range(T.sp.dim)]
    return JA(T.sp, T.k - 1, np.stack(arrs, axis=-2), masked=True)


def christoffel_field(g):
    """Connection coefficients as jet fields, gamma[k, i, j]."""
    ginv = jmatinv(g)
    dg = jgrad(g)  # dg[i, j, v] = d_v g_ij
    A = jsum("jli->lij", dg) + jsum("ilj->lij", dg) - jsum("ijl->lij", dg)
    return jein("kl,lij->kij", ginv, A) * 0.5


def cov_deriv_field(gamma, W):
    """nabla of a jet vector field: D[v, k] = d_v W^k + Gamma^k_vl W^l."""
    dW = jsum("kv->vk", jgrad(W))
    return dW + jein("kvl,l->vk", gamma, W)


def covariant_derivative(M, p, X, Y_components, bindings=None):
    """nabla_X Y at p for a constant vector X and an expression field Y."""
    X = np.asarray(X, dtype=float)
    Y = field_jets(M, Y_components, p, 1, bindings)
    ms = metric_sample(M, p, bindings)
    gamma = christoffel(ms)
    dY = np.stack([Y.d(v).val for v in range(M.dim)])  # dY[v, k]
    return X @ dY + np.einsum("kij,i,j->k", gamma, X, Y.val)


def lie_derivative_metric(M, p, xi_components, bindings=None):
    """(L_xi g)(d_i, d_j) = g(nabla_i xi, d_j) + g(nabla_j xi, d_i)."""
    xi = field_jets(M, xi_components, p, 1, bindings)
    ms = metric_sample(M, p, bindings)
    gamma = christoffel(ms)
    dxi = np.stack([xi.d(v).val for v in range(M.dim)])  # [v, k]
    nab = dxi + np.einsum("kvl,l->vk", gamma, xi.val)
    half = np.einsum("ik,kj->ij", nab, ms.g)
    return half + half.T


def gradient(M, p, f, bindings=None):
    """(grad f)^k = g^kj d_j f."""
    fj = field_jets(M, [f], p, 1, bindings)[0]
    ms = metric_sample(M, p, bindings)
    df = np.array([fj.d(v).val for v in range(M.dim)])
    return ms.g_inv @ df


def mgs_numeric(vectors, g, keep=None, drop_ratio=1e-18):
    """Modified Gram-Schmidt on plain vectors in the inner product g."""
    out = []
    norms = []
    for v in vectors:
        v = np.asarray(v, dtype=float)
        n0 = float(v @ g @ v)
        w = v.copy()
        for e in out:
            w = w - (e @ g @ w) * e
        n2 = float(w @ g @ w)
        norms.append(n2)
        if n2 <= drop_ratio * max(n0, 1e-30):
            continue
        out.append(w / np.sqrt(n2))
    if keep is not None and len(out) != keep:
        from .errors import RankUnstableError

        raise RankUnstableError(norms, keep)
    return out


def orthonormal_frame(g, seed=None):
    """Orthonormal frame for g; columns of `seed` (default: coordinate frame)."""
    m = g.shape[0]
    vecs = np.eye(m) if seed is None else np.asarray(seed, dtype=float)
    return mgs_numeric([vecs[:, i] for i in range(m)], g, keep=m)


def random_orthonormal_frame(g, rng):
    m = g.shape[0]
    while True:
        A = rng.standard_normal((m, m))
        if abs(np.linalg.det(A)) > 1e-3:
            return mgs_numeric([A[:, i] for i in range(m)], g, keep=m)

"""Map-level geometry: tangent splitting, second fundamental form, shape operators.

`MapPointContext` carries the whole per-point pipeline as jet fields over
the source chart, so covariant derivatives of composite objects (frames,
shape terms, mean curvatures) are exact reads of Taylor coefficients.
`AmbientContext` mirrors the frame construction as fields on the target
chart; it exists only when the scene declares spanning fields for the
range (or its complement) and is what makes derivatives in normal
directions well defined.

Both sides build their orthonormal frames by projecting the coordinate
frame and running modified Gram-Schmidt under the relevant metric, so the
along-map frames and their ambient extensions agree along the image.

Frozen parameters: when the target metric carries parameters bound to
source-point values, the metric composed with the map still varies.  The
connection used along the map is the composed Levi-Civita connection plus
the unique symmetric correction that restores metric compatibility in
horizontal directions; without it the orthogonality of the second
fundamental form to the range would fail on such scenes.  The correction
vanishes identically for parameter-free targets.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    EmptyDistributionError,
    ExtensionRequiredError,
    NotPositiveDefiniteError,
    RankUnstableError,
    SchemaError,
)
from .expr import Expression, parse_expression
from .jets import (
    JA,
    const_param_jets,
    dotg,
    eval_tape_soft,
    jein,
    jet_compose,
    jmatinv,
    jstack,
    jsum,
    mgs,
)
from .manifold import (
    ChartManifold,
    christoffel_field,
    cov_deriv_field,
    curvature_sample,
    jgrad,
    metric_field,
)
from .multiindex import jet_space


@dataclass(frozen=True)
class Tolerances:
    tol: float = 1e-8
    rank_tol: float = 1e-8
    pd_tol: float = 1e-10
    class_tol: float = 1e-7
    ext_tol: float = 1e-8


class SmoothMapDef:
    """A smooth map given by one expression per target coordinate."""

    def __init__(self, source: ChartManifold, target: ChartManifold, components):
        self.source = source
        self.target = target
        if len(components) != target.dim:
            raise SchemaError("map", f"expected {target.dim} components, got {len(components)}")
        self.components = [
            c if isinstance(c, Expression) else parse_expression(c, source.coords)
            for c in components
        ]

    def __repr__(self):
        return f"SmoothMapDef({self.source.name} -> {self.target.name})"


class AmbientExtension:
    """Spanning vector fields on the target chart for the range distribution
    or its orthogonal complement (role 'range' or 'normal')."""

    def __init__(self, role, fields, target):
        if role not in ("range", "normal"):
            raise SchemaError("extensions", f"unknown role {role!r}")
        self.role = role
        self.fields = [
            [c if isinstance(c, Expression) else parse_expression(c, target.coords)
             for c in comp_list]
            for comp_list in fields
        ]
        for f in self.fields:
            if len(f) != target.dim:
                raise SchemaError("extensions", "field component count must match target dim")


@dataclass
class MapSample:
    point: tuple
    image: np.ndarray
    jacobian: np.ndarray
    d2: np.ndarray
    adjoint: np.ndarray


@dataclass
class SplitBases:
    rank: int
    vertical: list
    horizontal: list
    images: list
    range_frame: list
    normal_frame: list
    projector: np.ndarray
    singular_values: np.ndarray

    @property
    def kernel_dim(self):
        return len(self.vertical)

    @property
    def normal_dim(self):
        return len(self.normal_frame)


def _eval_components(exprs, var_jets_arr, param_jets, sp, what):
    data = np.empty((len(exprs), sp.size))
    for i, e in enumerate(exprs):
        out, err = eval_tape_soft(e, var_jets_arr, param_jets, sp)
        if err[0]:
            from .errors import EvalDomainError

            raise EvalDomainError(what, None)
        data[i] = out[0]
    return data


def gnorm(g, v):
    v = np.asarray(v, dtype=float)
    return float(np.sqrt(max(v @ g @ v, 0.0)))


class MapPointContext:
    """All per-point geometry of a map, lazily computed as jet fields."""

    def __init__(self, F: SmoothMapDef, p, order=3, tols: Tolerances = None,
                 extensions=None, bindings=None):
        self.F = F
        self.p = tuple(float(x) for x in p)
        self.order = order
        self.tols = tols or Tolerances()
        self.extensions = extensions or []
        self.m = F.source.dim
        self.n = F.target.dim
        self.sp = jet_space(self.m, order)
        self._bindings = bindings

    # -- base fields -------------------------------------------------------

    @cached_property
    def bindings(self):
        if self._bindings is not None:
            return self._bindings
        return self.F.target.param_values(self.p)

    @cached_property
    def x(self):
        return JA.variables(self.sp, self.p)

    @cached_property
    def gM(self):
        g = metric_field(self.F.source, self.x)
        w = np.linalg.eigvalsh(g.val)
        if w.min() <= self.tols.pd_tol:
            raise NotPositiveDefiniteError(self.p, w)
        return g

    @cached_property
    def gM_inv(self):
        return jmatinv(self.gM)

    @cached_property
    def gammaM(self):
        return christoffel_field(self.gM)

    @cached_property
    def Fj(self):
        data = _eval_components(
            self.F.components, self.x.a[None], np.zeros((1, 0, self.sp.size)), self.sp, "map"
        )
        return JA(self.sp, self.order, data, masked=True)

    @cached_property
    def q(self):
        return self.Fj.val.copy()

    @cached_property
    def param_jets_along(self):
        """Frozen-parameter values as jets along the map (their source variation)."""
        names = self.F.target.param_names
        out = np.zeros((1, len(names), self.sp.size))
        for i, name in enumerate(names):
            expr = self.F.target.params[name]
            comp = _eval_components([expr], self.x.a[None],
                                    np.zeros((1, 0, self.sp.size)), self.sp, "parameter")
            out[0, i] = comp[0]
        return out

    @cached_property
    def gN(self):
        """Target metric along the map with full parameter variation."""
        g = metric_field(self.F.target, self.Fj, param_jets=self.param_jets_along)
        w = np.linalg.eigvalsh(g.val)
        if w.min() <= self.tols.pd_tol:
            raise NotPositiveDefiniteError(tuple(self.q), w)
        return g

    @cached_property
    def gN_frozen(self):
        """Target metric along the map with parameters held at their point values."""
        if not self.F.target.param_names:
            return self.gN
        return metric_field(self.F.target, self.Fj, bindings=self.bindings)

    @cached_property
    def gN_inv(self):
        return jmatinv(self.gN)

    @cached_property
    def J(self):
        return jgrad(self.Fj)  # J[a, i] = d_i F^a

    @cached_property
    def adjoint(self):
        # A = gM^-1 J^T gN, satisfying gM(A v, X) = gN(v, J X)
        t = jein("ij,bj->ib", self.gM_inv, self.J)
        return jein("ib,ba->ia", t, self.gN)

    @cached_property
    def gammaN_ambient(self):
        """Target connection coefficients as jets on the target chart at F(p)."""
        spn = jet_space(self.n, self.order)
        y = JA.variables(spn, self.q)
        gn = metric_field(self.F.target, y, bindings=self.bindings)
        return christoffel_field(gn)

    @cached_property
    def compose_mat(self):
        from .jets import compose_matrix

        return compose_matrix(jet_space(self.n, self.order), self.Fj, self.q)

    @cached_property
    def conn_along(self):
        """Connection coefficients for fields along the map, conn[a, i, b].

        Composed target connection, plus the horizontal metric-compatibility
        correction for frozen parameters (see module docstring).
        """
        gam = self.gammaN_ambient
        n, m = self.n, self.m
        data = np.zeros((n, n, n, self.sp.size))
        k = self.order - 1
        for a in range(n):
            for b in range(n):
                for c in range(b, n):
                    comp = jet_compose(gam[a, b, c], self.Fj, self.q, mono=self.compose_mat)
                    data[a, b, c] = comp.a
                    data[a, c, b] = comp.a
                    k = comp.k
        gamF = JA(self.sp, k, data, masked=True)
        conn = jein("acb,ci->aib", gamF, self.J)
        if self.F.target.param_names:
            delta = jgrad(self.gN) - jgrad(self.gN_frozen)  # [c, b, j]
            delta_hor = jein("cbj,ji->cbi", delta, self.Phor)
            corr = jein("ac,cbi->aib", self.gN_inv, delta_hor) * 0.5
            conn = conn + corr
        return conn

    # -- splitting ---------------------------------------------------------

    @cached_property
    def _svd(self):
        LM = np.linalg.cholesky(self.gM.val)
        LN = np.linalg.cholesky(self.gN.val)
        Jt = LN.T @ self.J.val @ np.linalg.inv(LM.T)
        return np.linalg.svd(Jt, compute_uv=False)

    @cached_property
    def rank(self):
        s = self._svd
        rt = self.tols.rank_tol
        if np.any((s >= rt / 10) & (s <= rt * 10)):
            raise RankUnstableError(s, rt)
        r = int(np.sum(s > rt))
        if r == 0:
            raise RankUnstableError(s, rt)
        return r

    @property
    def kernel_dim(self):
        return self.m - self.rank

    @property
    def normal_dim(self):
        return self.n - self.rank

    @cached_property
    def horizontal(self):
        cols = [self.adjoint[:, a] for a in range(self.n)]
        return mgs(cols, self.gM, keep=self.rank)

    @cached_property
    def vertical(self):
        units = [JA.const(self.sp, np.eye(self.m)[i], self.order) for i in range(self.m)]
        full = mgs(list(self.horizontal) + units, self.gM, keep=self.m)
        return full[self.rank:]

    @cached_property
    def full_frame(self):
        return list(self.vertical) + list(self.horizontal)

    @cached_property
    def Phor(self):
        """Horizontal projector on the source, as a jet matrix."""
        out = JA.const(self.sp, np.zeros((self.m, self.m)), self.order)
        for X in self.horizontal:
            out = out + jein("i,j->ij", X, jein("j,jk->k", X, self.gM))
        return out

    @cached_property
    def images(self):
        return [jein("ai,i->a", self.J, X) for X in self.horizontal]

    @cached_property
    def projector(self):
        """Range projector along the map (gN-orthogonal), as a jet matrix."""
        R = jstack(self.images)  # (rank, n)
        G = jein("ua,va->uv", R, jein("vb,ab->va", R, self.gN))
        Ginv = jmatinv(G)
        t = jein("uv,vb->ub", Ginv, jein("va,ab->vb", R, self.gN))
        return jein("ua,ub->ab", R, t)

    @cached_property
    def range_frame(self):
        units = [JA.const(self.sp, np.eye(self.n)[b], self.order) for b in range(self.n)]
        proj = [jein("ab,b->a", self.projector, u) for u in units]
        return mgs(proj, self.gN, keep=self.rank)

    @cached_property
    def normal_frame(self):
        units = [JA.const(self.sp, np.eye(self.n)[b], self.order) for b in range(self.n)]
        full = mgs(list(self.range_frame) + units, self.gN, keep=self.n)
        return full[self.rank:]

    @cached_property
    def split(self):
        return SplitBases(
            rank=self.rank,
            vertical=[U.val.copy() for U in self.vertical],
            horizontal=[X.val.copy() for X in self.horizontal],
            images=[w.val.copy() for w in self.images],
            range_frame=[R.val.copy() for R in self.range_frame],
            normal_frame=[E.val.copy() for E in self.normal_frame],
            projector=self.projector.val.copy(),
            singular_values=self._svd.copy(),
        )

    # -- derivative operators ------------------------------------------------

    def const_m(self, v):
        return JA.const(self.sp, np.asarray(v, dtype=float), self.order)

    const_n = const_m

    def pushforward(self, Y):
        if not isinstance(Y, JA):
            Y = self.const_m(Y)
        return jein("ai,i->a", self.J, Y)

    def cov_m(self, X, Y):
        """Source covariant derivative of a jet field Y in direction field X."""
        if not isinstance(X, JA):
            X = self.const_m(X)
        D = cov_deriv_field(self.gammaM, Y)
        return jein("v,vk->k", X, D)

    def cov_f(self, X, W):
        """Covariant derivative along the map of a target-vector jet field."""
        if not isinstance(X, JA):
            X = self.const_m(X)
        dW = jsum("av->va", jgrad(W))
        corr = jein("aib,b->ia", self.conn_along, W)  # [i, a]
        return jein("v,va->a", X, dW) + jein("i,ia->a", X, corr)

    def tangential(self, W):
        return jein("ab,b->a", self.projector, W)

    def perp(self, W):
        return W - self.tangential(W)

    def sff(self, X, Y):
        """Second fundamental form (nabla F_*)(X, Y) for source jet fields."""
        if not isinstance(X, JA):
            X = self.const_m(X)
        if not isinstance(Y, JA):
            Y = self.const_m(Y)
        return self.cov_f(X, self.pushforward(Y)) - self.pushforward(self.cov_m(X, Y))

    def shape_apply(self, V, X):
        """S_V F_*X: tangential part of minus the derivative of V along X."""
        return -self.tangential(self.cov_f(X, V))

    def perp_conn(self, X, V):
        """Connection induced on the normal bundle: (1 - P) of cov_f."""
        return self.perp(self.cov_f(X, V))

    def adjoint_apply(self, Z):
        if not isinstance(Z, JA):
            Z = self.const_m(Z)
        return jein("ia,a->i", self.adjoint, Z)

    def cov_f_direction(self, Z, W):
        """cov_f with the direction given as a range vector field Z
        (pulled back through the adjoint)."""
        return self.cov_f(self.adjoint_apply(Z), W)

    def field_along_map(self, components):
        """Evaluate target-chart component expressions along the map."""
        exprs = [
            c if isinstance(c, Expression)
            else parse_expression(c, self.F.target.coords, self.F.target.param_names)
            for c in components
        ]
        pjets = self.F.target.param_jets(self.sp, self.bindings)
        data = _eval_components(exprs, self.Fj.a[None], pjets, self.sp, "field")
        return JA(self.sp, self.Fj.k, data, masked=True)

    def source_field(self, components):
        exprs = [
            c if isinstance(c, Expression)
            else parse_expression(c, self.F.source.coords, self.F.source.param_names)
            for c in components
        ]
        pjets = self.F.source.param_jets(self.sp, {})
        data = _eval_components(exprs, self.x.a[None], pjets, self.sp, "field")
        return JA(self.sp, self.order, data, masked=True)

    def shape_covariant_derivative(self, X, V, Y):
        """Covariant derivative of the shape operator in a horizontal direction.

        F_*(nabla^M_X adj(S_V F_*Y)) - S_{perp-conn(X,V)} F_*Y
        - S_V P(cov_f(X, F_*Y)) for source jet fields X, Y and a normal
        field V along the map.
        """
        SVY = self.shape_apply(V, Y)
        t1 = self.pushforward(self.cov_m(X, self.adjoint_apply(SVY)))
        t2 = self.shape_apply(self.perp_conn(X, V), Y)
        PDY = self.tangential(self.cov_f(X, self.pushforward(Y)))
        t3 = -self.tangential(self.cov_f_direction(PDY, V))
        return t1 - t2 - t3

    # -- ambient side --------------------------------------------------------

    @cached_property
    def ambient(self):
        if not self.extensions:
            return None
        amb = AmbientContext(self, self.order)
        amb.check_agreement()
        return amb

    def require_ambient(self):
        if self.normal_dim == 0:
            return None
        if self.ambient is None:
            raise ExtensionRequiredError(
                "this computation differentiates in normal directions; "
                "the scene must declare ambient extension fields"
            )
        return self.ambient

    # -- samples -------------------------------------------------------------

    @cached_property
    def map_sample(self):
        d2 = np.zeros((self.n, self.m, self.m))
        if self.order >= 2:
            for a in range(self.n):
                Ja = jgrad(self.Fj[a])
                for i in range(self.m):
                    d2[a, i] = jgrad(Ja[i]).val
        return MapSample(self.p, self.q.copy(), self.J.val.copy(), d2, self.adjoint.val.copy())

    @cached_property
    def curvature_N(self):
        return curvature_sample(self.F.target, tuple(self.q), self.bindings,
                                pd_tol=self.tols.pd_tol)

    @cached_property
    def curvature_M(self):
        return curvature_sample(self.F.source, self.p, pd_tol=self.tols.pd_tol)


class AmbientContext:
    """Frame fields and covariant calculus on the target chart around F(p)."""

    def __init__(self, ctx: MapPointContext, order):
        self.ctx = ctx
        self.n = ctx.n
        self.sp = jet_space(self.n, order)
        self.order = order
        self.q = ctx.q
        self.y = JA.variables(self.sp, self.q)
        self.gN = metric_field(ctx.F.target, self.y, bindings=ctx.bindings)
        self.gamma = christoffel_field(self.gN)
        self._build_frames()

    def _field(self, exprs):
        pjets = self.ctx.F.target.param_jets(self.sp, self.ctx.bindings)
        data = _eval_components(exprs, self.y.a[None], pjets, self.sp, "extension")
        return JA(self.sp, self.order, data, masked=True)

    def _gram_projector(self, fields):
        R = jstack(fields)
        G = jein("ua,va->uv", R, jein("vb,ab->va", R, self.gN))
        Ginv = jmatinv(G)
        t = jein("uv,vb->ub", Ginv, jein("va,ab->vb", R, self.gN))
        return jein("ua,ub->ab", R, t)

    def _build_frames(self):
        ctx = self.ctx
        rank, n1 = ctx.rank, ctx.normal_dim
        range_span = []
        normal_span = []
        for ext in ctx.extensions:
            dest = range_span if ext.role == "range" else normal_span
            for comp in ext.fields:
                dest.append(self._field(comp))
        eye = np.eye(self.n)
        if range_span:
            if len(range_span) != rank:
                raise SchemaError("extensions", f"range span must have {rank} fields")
            self.P = self._gram_projector(range_span)
        elif normal_span:
            if len(normal_span) != n1:
                raise SchemaError("extensions", f"normal span must have {n1} fields")
            Pn = self._gram_projector(normal_span)
            self.P = JA.const(self.sp, eye, Pn.k) - Pn
        else:
            raise SchemaError("extensions", "no spanning fields declared")
        units = [JA.const(self.sp, eye[b], self.order) for b in range(self.n)]
        proj = [jein("ab,b->a", self.P, u) for u in units]
        self.range_frame = mgs(proj, self.gN, keep=rank)
        full = mgs(list(self.range_frame) + units, self.gN, keep=self.n)
        self.normal_frame = full[rank:]

    def check_agreement(self):
        """Ambient frames must reproduce the along-map frames at the point."""
        tol = self.ctx.tols.ext_tol
        for amb, loc in zip(self.range_frame, self.ctx.range_frame):
            if np.max(np.abs(amb.val - loc.val)) > tol:
                raise SchemaError(
                    "extensions",
                    "declared range distribution disagrees with the computed "
                    f"range frame at {tuple(self.q)}",
                )
        for amb, loc in zip(self.normal_frame, self.ctx.normal_frame):
            if np.max(np.abs(amb.val - loc.val)) > tol:
                raise SchemaError(
                    "extensions",
                    "declared ambient fields disagree with the computed "
                    f"normal frame at {tuple(self.q)}",
                )

    # vector calculus ------------------------------------------------------

    def const(self, v):
        return JA.const(self.sp, np.asarray(v, dtype=float), self.order)

    def cov(self, U, W):
        """Ambient covariant derivative of a jet field W in direction U."""
        if not isinstance(U, JA):
            U = self.const(U)
        D = cov_deriv_field(self.gamma, W)
        return jein("v,va->a", U, D)

    def ddir(self, U, s):
        """Directional derivative of a scalar jet field."""
        if not isinstance(U, JA):
            U = self.const(U)
        return jein("v,v->", U, jgrad(s))

    def tangential(self, W):
        return jein("ab,b->a", self.P, W)

    def perp(self, W):
        return W - self.tangential(W)

    def shape_apply(self, V, Z):
        """S_V in direction Z (a range vector field): -P(nabla_Z V)."""
        return -self.tangential(self.cov(Z, V))

    def extend_range_vector(self, v):
        """Frame-constant ambient extension of a range vector at F(p)."""
        if not self.range_frame:
            raise EmptyDistributionError("range distribution is zero-dimensional")
        out = None
        for R in self.range_frame:
            c = float(np.asarray(v) @ self.gN.val @ R.val)
            term = R * c
            out = term if out is None else out + term
        return out

    def extend_normal_vector(self, v):
        if not self.normal_frame:
            raise EmptyDistributionError("normal distribution is zero-dimensional")
        out = None
        for E in self.normal_frame:
            c = float(np.asarray(v) @ self.gN.val @ E.val)
            term = E * c
            out = term if out is None else out + term
        return out

    def dot(self, u, v):
        return dotg(self.gN, u, v)


# ---------------------------------------------------------------------------
# Functional wrappers over a context


def map_sample(F, p, jet_order=2, **kw):
    return MapPointContext(F, p, order=jet_order, **kw).map_sample


def split_tangent(F, p, rank_tol=None, order=2, **kw):
    tols = Tolerances(rank_tol=rank_tol) if rank_tol else Tolerances()
    return MapPointContext(F, p, order=order, tols=tols, **kw).split


def verify_riemannian(F, p, order=2, ctx=None, **kw):
    """Worst deviation of the horizontal-frame image Gram matrix from identity."""
    ctx = ctx or MapPointContext(F, p, order=order, **kw)
    gN = ctx.gN.val
    worst = 0.0
    for i, wi in enumerate(ctx.images):
        for j, wj in enumerate(ctx.images):
            val = wi.val @ gN @ wj.val - (1.0 if i == j else 0.0)
            worst = max(worst, abs(val))
    return worst


def second_fundamental_form(F, p, X, Y, order=2, ctx=None, **kw):
    """(nabla F_*)(X, Y) at p; plain vectors get coordinate-constant extensions."""
    ctx = ctx or MapPointContext(F, p, order=order, **kw)
    return ctx.sff(X, Y).val


def pullback_connection(F, p, X, W_components, order=2, ctx=None, **kw):
    """Derivative along the map of a field given by target-chart components."""
    ctx = ctx or MapPointContext(F, p, order=order, **kw)
    W = ctx.field_along_map(W_components)
    return ctx.cov_f(X, W).val


def shape_and_normal(F, p, X, V_components, order=2, ctx=None, **kw):
    """Tangential and normal parts of the derivative of a normal field.

    Returns (S_V F_*X, normal-bundle derivative of V along X) at F(p).
    """
    ctx = ctx or MapPointContext(F, p, order=order, **kw)
    V = ctx.field_along_map(V_components) if not isinstance(V_components, JA) else V_components
    D = ctx.cov_f(X, V)
    return (-ctx.tangential(D)).val, ctx.perp(D).val


def totally_geodesic_checks(F, p, order=3, ctx=None, **kw):
    """Residuals of the four vanishing conditions for a totally geodesic map.

    Keys: 'a_tensor' (vertical part of horizontal derivatives), 't_tensor'
    (horizontal part of fiber derivatives), 'shape' (shape operator), and
    'normal' (tangential drift of the normal distribution; needs ambient
    extensions when the normal space is nontrivial).
    """
    ctx = ctx or MapPointContext(F, p, order=order, **kw)
    gM = ctx.gM.val
    gN = ctx.gN.val
    Pver = (
        sum(np.outer(U.val, U.val @ gM) for U in ctx.vertical)
        if ctx.vertical else np.zeros((ctx.m, ctx.m))
    )
    Phor = (
        sum(np.outer(X.val, X.val @ gM) for X in ctx.horizontal)
        if ctx.horizontal else np.zeros((ctx.m, ctx.m))
    )

    a_res = 0.0
    for Xi in ctx.horizontal:
        for Xj in ctx.horizontal:
            v = Pver @ ctx.cov_m(Xi, Xj).val
            a_res = max(a_res, gnorm(gM, v))
    t_res = 0.0
    for Ui in ctx.vertical:
        for Uj in ctx.vertical:
            v = Phor @ ctx.cov_m(Ui, Uj).val
            t_res = max(t_res, gnorm(gM, v))
    s_res = 0.0
    for E in ctx.normal_frame:
        for X in ctx.horizontal:
            s_res = max(s_res, gnorm(gN, ctx.shape_apply(E, X).val))
    if ctx.normal_dim == 0:
        n_res = 0.0
    else:
        amb = ctx.require_ambient()
        n_res = 0.0
        for ek in amb.normal_frame:
            for el in amb.normal_frame:
                v = amb.tangential(amb.cov(ek, el)).val
                n_res = max(n_res, gnorm(gN, v))
    return {"a_tensor": a_res, "t_tensor": t_res, "shape": s_res, "normal": n_res}


def umbilic_fit(F, p, order=3, ctx=None, **kw):
    """Least-squares umbilical factor and misfits of both umbilical forms.

    Returns (f_hat, residual, degenerate, proportional_residual) where
    `residual` is the RMS misfit of the shape operators against f times
    the identity on the range and `proportional_residual` checks that the
    second fundamental form is the metric times the range mean curvature.
    """
    ctx = ctx or MapPointContext(F, p, order=order, **kw)
    if ctx.normal_dim < 1 or ctx.rank < 1:
        raise EmptyDistributionError("umbilical fit needs both distributions nontrivial")
    gN = ctx.gN.val
    pairs = []
    for E in ctx.normal_frame:
        for Xj, img in zip(ctx.horizontal, ctx.images):
            pairs.append((ctx.shape_apply(E, Xj).val, img.val))
    total = sum(s @ gN @ w for s, w in pairs)
    denom = sum(w @ gN @ w for _, w in pairs)
    scale = max((gnorm(gN, s) for s, _ in pairs), default=0.0)
    degenerate = scale < 1e-12
    f_hat = 0.0 if degenerate else total / denom
    residual = np.sqrt(sum(gnorm(gN, s - f_hat * w) ** 2 for s, w in pairs))
    H2 = None
    for Xj in ctx.horizontal:
        t = ctx.perp(ctx.sff(Xj, Xj))
        H2 = t if H2 is None else H2 + t
    H2 = H2 * (1.0 / ctx.rank)
    prop = 0.0
    for i, Xi in enumerate(ctx.horizontal):
        for j, Xj in enumerate(ctx.horizontal):
            v = ctx.sff(Xi, Xj).val - (1.0 if i == j else 0.0) * H2.val
            prop = max(prop, gnorm(gN, v))
    return f_hat, float(residual), degenerate, prop


def curvature_mixed_check(F, p, x_index=0, v_index=0, w_index=0, order=3, ctx=None, **kw):
    """Residuals of the mixed-slot curvature identity and its normal component.

    Compares the target curvature applied to (range, normal, normal)
    arguments against the termwise expansion through shape operators and
    the normal-bundle connection.  Needs ambient extensions.
    """
    ctx = ctx or MapPointContext(F, p, order=order, **kw)
    if ctx.normal_dim == 0:
        return {"full": 0.0, "normal_component": 0.0, "assumption": 0.0}
    amb = ctx.require_ambient()
    gN = ctx.gN.val
    X_img = ctx.images[x_index].val
    Xh = amb.extend_range_vector(X_img)
    V = amb.normal_frame[v_index]
    W = amb.normal_frame[w_index]

    R = ctx.curvature_N.riemann
    lhs = np.einsum("lijk,i,j,k->l", R, X_img, V.val, W.val)

    t1 = -amb.shape_apply(amb.perp(amb.cov(V, W)), Xh)
    t2 = amb.perp(amb.cov(Xh, amb.perp(amb.cov(V, W))))
    t3 = amb.cov(V, amb.shape_apply(W, Xh))
    t4 = -amb.perp(amb.cov(V, amb.perp(amb.cov(Xh, W))))
    t5 = -amb.shape_apply(W, amb.shape_apply(V, Xh))
    t6 = amb.perp(amb.cov(amb.shape_apply(V, Xh), W))
    t7 = -amb.perp(amb.cov(amb.perp(amb.cov(Xh, V)), W))
    t8 = -amb.shape_apply(W, amb.cov(V, Xh))
    t9 = amb.perp(amb.cov(amb.tangential(amb.cov(V, Xh)), W))
    rhs = (t1 + t2 + t3 + t4 + t5 + t6 + t7 + t8 + t9).val
    res_full = gnorm(gN, lhs - rhs)

    rhs_perp = (t2 + t4 + t6 + t7 + t9).val
    Pq = ctx.projector.val
    lhs_perp = lhs - Pq @ lhs
    res_perp = gnorm(gN, lhs_perp - rhs_perp)

    assumption = 0.0
    for ek in amb.normal_frame:
        for el in amb.normal_frame:
            assumption = max(
                assumption, gnorm(gN, amb.tangential(amb.cov(ek, el)).val)
            )
    return {"full": res_full, "normal_component": res_perp, "assumption": assumption}

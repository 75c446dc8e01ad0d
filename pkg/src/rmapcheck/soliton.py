"""Soliton, Einstein and killing checks plus curvature decompositions.

Convention: a metric g with potential field xi and constant lam satisfies
the soliton equation when (1/2) L_xi g + Ric + lam g = 0, evaluated in
orthonormal frames.  lam < 0 is shrinking, lam = 0 steady, lam > 0
expanding.  Restricted Ricci and scalar quantities of the range and
normal distributions are the frame-restricted ambient sums; the
leaf-intrinsic reading (Gauss assembly) is reported separately for
immersions with leaves of dimension at least two.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    FLAG_DEGENERATE_FIT,
    FLAG_DIMENSION_DEGENERATE,
    FLAG_HYPOTHESIS_UNMET,
    EmptyDistributionError,
)
from .manifold import (
    curvature_sample,
    lie_derivative_metric,
    metric_sample,
    orthonormal_frame,
)
from .rmap import MapPointContext, gnorm, totally_geodesic_checks


def classify(lam, class_tol=1e-7):
    if lam < -class_tol:
        return "shrinking"
    if lam > class_tol:
        return "expanding"
    return "steady"


def fit_lambda(matrices):
    """Closed-form least squares for lam in M + lam*I = 0 over orthonormal frames."""
    total = 0.0
    count = 0
    for M in matrices:
        total += np.trace(M)
        count += M.shape[0]
    if count == 0:
        raise EmptyDistributionError("no frame directions to fit against")
    return -total / count + 0.0


def _frame_matrix(bilinear, frame):
    d = len(frame)
    out = np.empty((d, d))
    for a, Ea in enumerate(frame):
        for b, Eb in enumerate(frame):
            out[a, b] = Ea @ bilinear @ Eb
    return out


def soliton_matrices(N, xi_components, samples):
    """Per-sample matrices (1/2) L_xi g + Ric in an orthonormal frame.

    `samples` is a list of (point, bindings) pairs on N; xi may be None
    for the Einstein case.
    """
    out = []
    for q, bindings in samples:
        ms = metric_sample(N, q, bindings)
        cs = curvature_sample(N, q, bindings)
        frame = orthonormal_frame(ms.g)
        ric = _frame_matrix(cs.ricci, frame)
        if xi_components is None:
            out.append(ric)
        else:
            L = lie_derivative_metric(N, q, xi_components, bindings)
            out.append(0.5 * _frame_matrix(L, frame) + ric)
    return out


def soliton_fit(N, xi_components, samples, lam="fit", class_tol=1e-7):
    """Fit (or verify) the soliton constant over sampled points.

    Returns (lam_used, worst_residual, classification).
    """
    mats = soliton_matrices(N, xi_components, samples)
    lam_used = fit_lambda(mats) if lam == "fit" else float(lam)
    worst = max(np.max(np.abs(M + lam_used * np.eye(M.shape[0]))) for M in mats)
    return lam_used, worst, classify(lam_used, class_tol)


def einstein_check(N, samples, kappa="fit"):
    """Einstein fit on a whole manifold: Ric + kappa g = 0."""
    lam_used, worst, _ = soliton_fit(N, None, samples, lam=kappa)
    return lam_used, worst


def killing_residual(N, xi_components, samples):
    worst = 0.0
    for q, bindings in samples:
        ms = metric_sample(N, q, bindings)
        frame = orthonormal_frame(ms.g)
        L = lie_derivative_metric(N, q, xi_components, bindings)
        worst = max(worst, np.max(np.abs(_frame_matrix(L, frame))))
    return worst


# ---------------------------------------------------------------------------
# Distribution-restricted quantities at one map point


def _riem_apply(R, u, v, w):
    return np.einsum("lijk,i,j,k->l", R, u, v, w)


def restricted_ricci(ctx: MapPointContext, frame, u, v):
    """Frame-restricted Ricci sum: sum_E <R(E, u) v, E> over the given frame."""
    R = ctx.curvature_N.riemann
    g = ctx.gN.val
    return sum(float(_riem_apply(R, E, u, v) @ g @ E) for E in frame)


def ricci_range_matrix(ctx):
    frame = [R.val for R in ctx.range_frame]
    return np.array([[restricted_ricci(ctx, frame, u, v) for v in frame] for u in frame])


def ricci_perp_matrix(ctx):
    frame = [E.val for E in ctx.normal_frame]
    return np.array([[restricted_ricci(ctx, frame, u, v) for v in frame] for u in frame])


def intrinsic_ricci_range(ctx):
    """Leaf-intrinsic Ricci of the range distribution via Gauss assembly.

    Only meaningful for immersions (trivial kernel); the second
    fundamental form of the leaf then coincides with that of the map.
    """
    if ctx.kernel_dim != 0 or ctx.rank < 2:
        return None
    g = ctx.gN.val
    R = ctx.curvature_N.riemann
    frame = [Rf.val for Rf in ctx.range_frame]
    pre = [ctx.adjoint_apply(Rf) for Rf in ctx.range_frame]
    II = [[ctx.sff(pre[i], pre[j]).val for j in range(ctx.rank)] for i in range(ctx.rank)]
    k = ctx.rank
    out = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            total = 0.0
            for l in range(k):
                amb = float(_riem_apply(R, frame[l], frame[i], frame[j]) @ g @ frame[l])
                total += amb + II[i][j] @ g @ II[l][l] - II[l][j] @ g @ II[i][l]
            out[i, j] = total
    return out


@dataclass
class DecompositionReport:
    name: str
    lhs: float
    rhs: float
    terms: dict
    residual: float
    flags: list = field(default_factory=list)


def ricci_decomposition(ctx: MapPointContext, slot, i=0, j=0, assume_tol=1e-6):
    """Residual of one slot of the Ricci splitting across the two distributions.

    `slot` is 'range-range', 'normal-normal' or 'mixed'; i, j index the
    range/normal frames as appropriate.  Normal-direction derivatives run
    through the ambient extension fields.
    """
    gq = ctx.gN.val
    flags = []
    if ctx.normal_dim > 0:
        amb = ctx.require_ambient()
        drift = max(
            gnorm(gq, amb.tangential(amb.cov(ek, el)).val)
            for ek in amb.normal_frame for el in amb.normal_frame
        )
        if drift > assume_tol:
            flags.append(FLAG_HYPOTHESIS_UNMET)
    else:
        amb = None

    if slot == "range-range":
        u = ctx.range_frame[i].val
        v = ctx.range_frame[j].val
        lhs = float(u @ ctx.curvature_N.ricci @ v)
        base = ricci_range_matrix(ctx)[i, j]
        corr = 0.0
        if amb is not None:
            Ru = amb.range_frame[i]
            Rv = amb.range_frame[j]
            for ek in amb.normal_frame:
                w1 = float(amb.shape_apply(amb.perp(amb.cov(ek, ek)), Ru).val @ gq @ Rv.val)
                w2 = float(amb.cov(ek, amb.shape_apply(ek, Ru)).val @ gq @ Rv.val)
                w3 = float(amb.shape_apply(ek, Ru).val @ gq @ amb.shape_apply(ek, Rv).val)
                w4 = float(amb.cov(ek, Ru).val @ gq @ amb.shape_apply(ek, Rv).val)
                corr += w1 - w2 + w3 + w4
        rhs = base - corr
        terms = {"restricted": base, "correction": -corr}
    elif slot == "normal-normal":
        if ctx.normal_dim == 0:
            raise EmptyDistributionError("normal distribution is zero-dimensional")
        u = ctx.normal_frame[i].val
        v = ctx.normal_frame[j].val
        lhs = float(u @ ctx.curvature_N.ricci @ v)
        base = ricci_perp_matrix(ctx)[i, j]
        V = amb.normal_frame[i]
        W = amb.normal_frame[j]
        corr = 0.0
        for Xj in amb.range_frame:
            w1 = float(amb.shape_apply(amb.perp(amb.cov(V, W)), Xj).val @ gq @ Xj.val)
            w2 = float(amb.shape_apply(V, Xj).val @ gq @ amb.shape_apply(W, Xj).val)
            scal = amb.dot(amb.shape_apply(W, Xj), Xj)
            w3 = float(amb.ddir(V, scal).val)
            w4 = float(amb.shape_apply(W, Xj).val @ gq @ amb.cov(V, Xj).val)
            corr += w1 + w2 - w3 + 2.0 * w4
        rhs = base - corr
        terms = {"restricted": base, "correction": -corr}
    elif slot == "mixed":
        if ctx.normal_dim == 0:
            raise EmptyDistributionError("normal distribution is zero-dimensional")
        u = ctx.range_frame[i].val
        v = ctx.normal_frame[j].val
        lhs = float(u @ ctx.curvature_N.ricci @ v)
        X = ctx.adjoint_apply(ctx.range_frame[i])
        V = ctx.normal_frame[j]
        sum1 = 0.0
        for Rj in ctx.range_frame:
            Yj = ctx.adjoint_apply(Rj)
            d1 = ctx.shape_covariant_derivative(X, V, Yj)
            d2 = ctx.shape_covariant_derivative(Yj, V, X)
            sum1 += float((d1 - d2).val @ gq @ Rj.val)
        Ru = amb.range_frame[i]
        Va = amb.normal_frame[j]
        sum2 = 0.0
        for et in amb.normal_frame:
            a1 = amb.perp(amb.cov(Ru, amb.perp(amb.cov(et, Va))))
            a2 = amb.perp(amb.cov(et, amb.perp(amb.cov(Ru, Va))))
            a3 = amb.perp(amb.cov(amb.perp(amb.cov(Ru, et)), Va))
            a4 = amb.perp(amb.cov(amb.shape_apply(et, Ru), Va))
            a5 = amb.perp(amb.cov(amb.tangential(amb.cov(et, Ru)), Va))
            sum2 += float((a1 - a2 - a3 + a4 + a5).val @ gq @ et.val)
        rhs = sum1 - sum2
        terms = {"shape_derivative_sum": sum1, "normal_curvature_sum": -sum2}
    else:
        raise ValueError(f"unknown slot {slot!r}")
    return DecompositionReport(f"ricci-{slot}", lhs, rhs, terms, abs(lhs - rhs), flags)


def scalar_decomposition(ctx: MapPointContext, tg_tol=1e-8):
    """Scalar-curvature splitting with its five shape-operator corrections."""
    s_N = ctx.curvature_N.scalar
    s_range = float(np.trace(ricci_range_matrix(ctx)))
    s_perp = float(np.trace(ricci_perp_matrix(ctx))) if ctx.normal_dim else 0.0
    gq = ctx.gN.val
    c1 = c2 = c3 = c4 = c5 = 0.0
    flags = []
    if ctx.normal_dim > 0:
        amb = ctx.require_ambient()
        for ek in amb.normal_frame:
            for Xj in amb.range_frame:
                Sj = amb.shape_apply(ek, Xj)
                c1 += -2.0 * float(
                    amb.shape_apply(amb.perp(amb.cov(ek, ek)), Xj).val @ gq @ Xj.val
                )
                c2 += float(amb.cov(ek, Sj).val @ gq @ Xj.val)
                c3 += -2.0 * float(Sj.val @ gq @ Sj.val)
                c4 += -3.0 * float(amb.cov(ek, Xj).val @ gq @ Sj.val)
                c5 += float(amb.ddir(ek, amb.dot(Sj, Xj)).val)
    correction = c1 + c2 + c3 + c4 + c5
    rhs = s_range + s_perp + correction
    terms = {
        "range": s_range,
        "normal": s_perp,
        "shape_mean": c1,
        "shape_derivative": c2,
        "shape_square": c3,
        "frame_drift": c4,
        "trace_derivative": c5,
    }
    report = DecompositionReport("scalar", s_N, rhs, terms, abs(s_N - rhs), flags)
    tg = totally_geodesic_checks(ctx.F, ctx.p, ctx=ctx)
    report.terms["totally_geodesic_worst"] = max(tg.values())
    if max(tg["shape"], tg["normal"]) <= tg_tol:
        report.terms["geodesic_corollary_residual"] = abs(correction)
    return report


def scalar_umbilic_corollary(f_hat, rank):
    """Correction predicted by the umbilical specialization."""
    return -2.0 * (f_hat + f_hat * f_hat) * rank


@dataclass
class LeafReport:
    which: str
    lam: float
    soliton_residual: float
    einstein_residual: float
    classification: str
    scalar: float
    scalar_expected: float
    scalar_residual: float
    flags: list = field(default_factory=list)
    intrinsic_einstein: tuple = None


def _lie_matrix_range(ctx, xi_field):
    """(1/2){<nabla_{R_i} xi, R_j> + <nabla_{R_j} xi, R_i>} over the range frame."""
    gq = ctx.gN.val
    pre = [ctx.adjoint_apply(R) for R in ctx.range_frame]
    der = [ctx.cov_f(Y, xi_field).val for Y in pre]
    k = ctx.rank
    out = np.empty((k, k))
    for a in range(k):
        for b in range(k):
            out[a, b] = 0.5 * (
                der[a] @ gq @ ctx.range_frame[b].val + der[b] @ gq @ ctx.range_frame[a].val
            )
    return out


def _lie_matrix_normal(ctx, xi_exprs):
    amb = ctx.require_ambient()
    gq = ctx.gN.val
    xi_amb = amb._field(xi_exprs)
    der = [amb.cov(ek, xi_amb).val for ek in amb.normal_frame]
    k = ctx.normal_dim
    out = np.empty((k, k))
    for a in range(k):
        for b in range(k):
            out[a, b] = 0.5 * (
                der[a] @ gq @ amb.normal_frame[b].val + der[b] @ gq @ amb.normal_frame[a].val
            )
    return out


def leaf_matrices(ctx: MapPointContext, which, xi=None, tangency_tol=1e-7):
    """(lie_matrix, ricci_matrix, flags) for a leaf-level soliton check.

    `xi` is None (zero field) or target-chart component expressions; the
    field must be tangent to the distribution matching the stated
    hypothesis (range leaves take range-tangent xi, normal leaves take
    normal xi) and is flagged otherwise.
    """
    flags = []
    tg = totally_geodesic_checks(ctx.F, ctx.p, ctx=ctx)
    if max(tg["shape"], tg["a_tensor"], tg["t_tensor"]) > tangency_tol:
        flags.append(FLAG_HYPOTHESIS_UNMET)
    if which == "range":
        if ctx.rank == 0:
            raise EmptyDistributionError("range distribution is zero-dimensional")
        ric = ricci_range_matrix(ctx)
        if ctx.rank < 2:
            flags.append(FLAG_DIMENSION_DEGENERATE)
        if xi is None:
            lie = np.zeros_like(ric)
        else:
            xi_field = ctx.field_along_map(xi)
            lie = _lie_matrix_range(ctx, xi_field)
        return lie, ric, flags
    if which == "normal":
        if ctx.normal_dim == 0:
            raise EmptyDistributionError("normal distribution is zero-dimensional")
        ric = ricci_perp_matrix(ctx)
        if ctx.normal_dim < 2:
            flags.append(FLAG_DIMENSION_DEGENERATE)
        if xi is None:
            lie = np.zeros_like(ric)
        else:
            lie = _lie_matrix_normal(ctx, ctx_field_exprs(ctx, xi))
        return lie, ric, flags
    raise ValueError(f"unknown leaf {which!r}")


def ctx_field_exprs(ctx, components):
    from .expr import parse_expression, Expression

    return [
        c if isinstance(c, Expression)
        else parse_expression(c, ctx.F.target.coords, ctx.F.target.param_names)
        for c in components
    ]


def leaf_check(contexts, which, xi=None, lam="fit", class_tol=1e-7):
    """Aggregate leaf soliton/Einstein residuals over precomputed contexts."""
    lies, rics, flags = [], [], set()
    dim = None
    for ctx in contexts:
        L, R, f = leaf_matrices(ctx, which, xi)
        lies.append(L)
        rics.append(R)
        flags.update(f)
        dim = R.shape[0]
    mats = [L + R for L, R in zip(lies, rics)]
    lam_used = fit_lambda(mats) if lam == "fit" else float(lam)
    eye = np.eye(dim)
    soliton_res = max(np.max(np.abs(M + lam_used * eye)) for M in mats)
    einstein_res = max(np.max(np.abs(R + lam_used * eye)) for R in rics)
    scalar = float(np.mean([np.trace(R) for R in rics]))
    scalar_expected = -lam_used * dim
    intrinsic = None
    if which == "range":
        intr = [intrinsic_ricci_range(c) for c in contexts]
        if all(i is not None for i in intr):
            k_fit = fit_lambda(intr)
            k_res = max(np.max(np.abs(R + k_fit * np.eye(dim))) for R in intr)
            intrinsic = (k_fit, k_res)
    return LeafReport(
        which=which,
        lam=lam_used,
        soliton_residual=float(soliton_res),
        einstein_residual=float(einstein_res),
        classification=classify(lam_used, class_tol),
        scalar=scalar,
        scalar_expected=scalar_expected,
        scalar_residual=abs(scalar - scalar_expected),
        flags=sorted(flags),
        intrinsic_einstein=intrinsic,
    )


def almost_mu(f_hat, lam):
    """Almost-soliton function of an umbilical map: 2f + f^2 - lam."""
    return 2.0 * f_hat + f_hat * f_hat - lam


def almost_soliton_residuals(ctx: MapPointContext, f_hat, lam, xi=None):
    """Residuals of the umbilical leaf conclusions.

    With a normal potential the range Ricci should equal mu times the
    metric; with a range-tangent potential the almost-soliton expression
    with function f + f^2 - lam should vanish.
    """
    mu = almost_mu(f_hat, lam)
    ric = ricci_range_matrix(ctx)
    eye = np.eye(ctx.rank)
    out = {"mu": mu, "einstein_residual": float(np.max(np.abs(ric - mu * eye)))}
    if xi is not None:
        xi_field = ctx.field_along_map(xi)
        lie = _lie_matrix_range(ctx, xi_field)
        func = f_hat + f_hat * f_hat - lam
        out["soliton_residual"] = float(np.max(np.abs(lie + ric - func * eye)))
    return out

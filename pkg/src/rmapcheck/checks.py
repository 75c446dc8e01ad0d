"""Named checks over sampled points, aggregation, and report rendering.

Every check walks the scene's deterministic sample set, evaluates its
residuals per point (errors at one point never suppress the others), and
aggregates by worst case.  Fitted constants (soliton/Einstein factors,
umbilical factors) are least-squares fits over the whole sample set.
Checks that detect an unmet theorem hypothesis attach a flag instead of
failing; flagged checks do not gate the exit status.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import backend
from .errors import (
    FLAG_ASSUMPTION_VIOLATED,
    FLAG_DEGENERATE_FIT,
    FLAG_DIMENSION_DEGENERATE,
    RmapError,
)
from .manifold import (
    curvature_batch,
    curvature_sample,
    lie_derivative_metric,
    metric_sample,
    orthonormal_frame,
    random_orthonormal_frame,
)
from .rmap import (
    MapPointContext,
    curvature_mixed_check,
    gnorm,
    totally_geodesic_checks,
    umbilic_fit,
    verify_riemannian,
)
from .sampling import sample_box
from . import harmonicity, soliton


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    fitted: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    points: int = 0


@dataclass
class CheckReport:
    scene: str
    digest: str
    environment: dict
    results: list
    status: str

    def to_dict(self):
        return {
            "scene": self.scene,
            "digest": self.digest,
            "environment": self.environment,
            "checks": [
                {
                    "name": r.name,
                    "pass": r.passed,
                    "worst_residual": r.worst,
                    "fitted": r.fitted,
                    "details": r.details,
                    "flags": r.flags,
                    "errors": r.errors,
                    "points": r.points,
                }
                for r in self.results
            ],
            "status": self.status,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def to_text(self):
        lines = [
            f"scene: {self.scene}",
            f"digest: {self.digest}",
            "environment: " + " ".join(f"{k}={v}" for k, v in self.environment.items()),
            "",
            f"{'check':<24} {'status':<8} {'worst':<12} {'fitted':<32} flags",
        ]
        for r in self.results:
            fitted = " ".join(f"{k}={_fmt(v)}" for k, v in r.fitted.items()) or "-"
            flags = ",".join(r.flags) or "-"
            status = "pass" if r.passed else "FAIL"
            if r.errors:
                status = "ERROR"
            lines.append(
                f"{r.name:<24} {status:<8} {_fmt(r.worst):<12} {fitted:<32} {flags}"
            )
            for e in r.errors:
                lines.append(f"    ! {e}")
        lines.append("")
        lines.append(f"status: {self.status.upper()}")
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".6g")
    return str(v)


class Runtime:
    """Shared state for one `check` run: sample points and context cache."""

    def __init__(self, scene, tols, seed, count, jet_order, threads=1):
        self.scene = scene
        self.tols = tols
        self.seed = seed
        self.count = count
        self.jet_order = jet_order
        self.threads = threads
        self.points = sample_box(seed, scene.box_bounds(), count)
        self._ctx = {}

    def ctx(self, i, order):
        key = (i, order)
        hit = self._ctx.get(key)
        if hit is None:
            hit = MapPointContext(
                self.scene.mapdef,
                self.points[i],
                order=order,
                tols=self.tols,
                extensions=self.scene.extensions,
            )
            self._ctx[key] = hit
        return hit

    def map_points(self, fn, indices=None):
        """Apply fn(i) per sampled point, fail-soft; preserves index order."""
        if indices is None:
            indices = range(self.count)
        indices = list(indices)

        def safe(i):
            try:
                return (i, fn(i), None)
            except RmapError as e:
                return (i, None, f"point {i}: {type(e).__name__}: {e}")

        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                rows = list(pool.map(safe, indices))
        else:
            rows = [safe(i) for i in indices]
        records = [r[1] for r in rows if r[2] is None]
        errors = [r[2] for r in rows if r[2] is not None]
        return records, errors

    def indices_for(self, params, cap_key="samples"):
        cap = params.get(cap_key)
        if cap is None or cap >= self.count:
            return None
        return range(min(cap, self.count))

    def field_components(self, name):
        if name in (None, "zero"):
            return None
        if name not in self.scene.fields:
            raise RmapError(f"scene declares no field '{name}'")
        on, exprs = self.scene.fields[name]
        return on, exprs

    def target_field(self, name):
        got = self.field_components(name)
        if got is None:
            return None
        on, exprs = got
        if on != "target":
            raise RmapError(f"field '{name}' lives on the source, expected target")
        return exprs

    def target_samples(self, indices=None):
        records, errors = self.map_points(
            lambda i: (tuple(self.ctx(i, 1).q), self.ctx(i, 1).bindings), indices
        )
        return records, errors


def _result(name, records, errors, worst, tol, fitted=None, details=None, flags=()):
    passed = bool(not errors and worst <= tol)
    return CheckResult(
        name=name,
        passed=passed,
        worst=float(worst),
        fitted=fitted or {},
        details=details or {},
        flags=sorted(set(flags)),
        errors=errors,
        points=len(records),
    )


def _expectations(result, pairs, tol):
    """Gate extra |actual - expected| comparisons into an existing result."""
    for label, actual, expected in pairs:
        if expected is None:
            continue
        gap = abs(actual - expected)
        result.details[f"{label}_gap"] = gap
        result.worst = max(result.worst, gap)
        if gap > tol:
            result.passed = False
    return result


# --------------------------------------------------------------------------
# check implementations


def check_riemannian(rt, params):
    tol = params.get("tol", rt.tols.tol)
    recs, errs = rt.map_points(lambda i: verify_riemannian(None, None, ctx=rt.ctx(i, 1)))
    worst = max(recs, default=0.0)
    return _result("riemannian", recs, errs, worst, tol)


def _principal_sine(ctx, span):
    got = np.stack([U.val for U in ctx.vertical], axis=1)
    want = np.asarray(span, dtype=float).T
    Q1, _ = np.linalg.qr(got)
    Q2, _ = np.linalg.qr(want)
    resid = Q2 - Q1 @ (Q1.T @ Q2)
    return float(np.linalg.svd(resid, compute_uv=False).max())


def check_split(rt, params):
    tol = params.get("tol", rt.tols.tol)
    want_rank = params.get("rank")
    span = params.get("vertical_span")

    def collect(i):
        ctx = rt.ctx(i, 1)
        gM, gN = ctx.gM.val, ctx.gN.val
        worst = 0.0
        for frame, g in ((ctx.vertical, gM), (ctx.horizontal, gM),
                         (ctx.range_frame, gN), (ctx.normal_frame, gN)):
            for a, u in enumerate(frame):
                for b, v in enumerate(frame):
                    worst = max(worst, abs(u.val @ g @ v.val - (a == b)))
        P = ctx.projector.val
        worst = max(worst, np.abs(P @ P - P).max())
        worst = max(worst, np.abs(gN @ P - (gN @ P).T).max())
        for E in ctx.normal_frame:
            worst = max(worst, np.abs(P @ E.val).max())
        A, J = ctx.adjoint.val, ctx.J.val
        rng = np.random.default_rng(1000 + i)
        for _ in range(3):
            v = rng.standard_normal(ctx.n)
            X = rng.standard_normal(ctx.m)
            worst = max(worst, abs((A @ v) @ gM @ X - v @ gN @ (J @ X)))
        angle = _principal_sine(ctx, span) if span else 0.0
        return {"worst": worst, "rank": ctx.rank, "angle": angle}

    recs, errs = rt.map_points(collect)
    worst = max((r["worst"] for r in recs), default=0.0)
    angle = max((r["angle"] for r in recs), default=0.0)
    ranks = sorted({r["rank"] for r in recs})
    details = {"max_principal_sine": angle, "ranks": ranks}
    res = _result("split", recs, errs, worst, tol, details=details)
    if span:
        res.worst = max(res.worst, angle)
        if angle > params.get("angle_tol", 1e-9):
            res.passed = False
    if want_rank is not None and ranks != [want_rank]:
        res.passed = False
        res.details["expected_rank"] = want_rank
    return res


def check_lie_derivative(rt, params):
    tol = params.get("tol", rt.tols.tol)
    names = params.get("fields", [])

    def collect(i):
        ctx = rt.ctx(i, 1)
        ms = metric_sample(rt.scene.target, ctx.q, ctx.bindings, pd_tol=rt.tols.pd_tol)
        frame = orthonormal_frame(ms.g)
        worst = 0.0
        for name in names:
            exprs = rt.target_field(name)
            L = lie_derivative_metric(rt.scene.target, ctx.q, exprs, ctx.bindings)
            for Ea in frame:
                for Eb in frame:
                    worst = max(worst, abs(Ea @ L @ Eb))
        return worst

    recs, errs = rt.map_points(collect)
    return _result("lie-derivative", recs, errs, max(recs, default=0.0), tol)


def check_soliton(rt, params):
    tol = params.get("tol", rt.tols.tol)
    xi = rt.target_field(params.get("xi", "zero"))
    lam = params.get("lambda", "fit")

    def collect(i):
        ctx = rt.ctx(i, 1)
        return soliton.soliton_matrices(
            rt.scene.target, xi, [(tuple(ctx.q), ctx.bindings)]
        )[0]

    recs, errs = rt.map_points(collect)
    if not recs:
        return _result("soliton", [], errs, np.inf, tol)
    lam_used = soliton.fit_lambda(recs) if lam == "fit" else float(lam)
    worst = max(float(np.max(np.abs(M + lam_used * np.eye(M.shape[0])))) for M in recs)
    cls = soliton.classify(lam_used, rt.tols.class_tol)
    res = _result("soliton", recs, errs, worst, tol,
                  fitted={"lambda": lam_used, "classification": cls})
    res = _expectations(res, [("lambda", lam_used, params.get("expect_lambda"))], tol)
    want_cls = params.get("expect_classification")
    if want_cls and cls != want_cls:
        res.passed = False
        res.details["expected_classification"] = want_cls
    return res


def check_einstein(rt, params):
    tol = params.get("tol", rt.tols.tol)
    restriction = params.get("restriction", "full")
    kappa = params.get("kappa", "fit")
    if restriction == "full":
        use_source = params.get("manifold", "target") == "source"
        manifold = rt.scene.source if use_source else rt.scene.target

        def collect(i):
            if use_source:
                sample = (tuple(rt.points[i]), {})
            else:
                ctx = rt.ctx(i, 1)
                sample = (tuple(ctx.q), ctx.bindings)
            return soliton.soliton_matrices(manifold, None, [sample])[0]

        recs, errs = rt.map_points(collect)
        flags = []
    else:
        def collect(i):
            ctx = rt.ctx(i, 2)
            if restriction == "range":
                return soliton.ricci_range_matrix(ctx)
            return soliton.ricci_perp_matrix(ctx)

        recs, errs = rt.map_points(collect, rt.indices_for(params))
        flags = [FLAG_DIMENSION_DEGENERATE] if recs and recs[0].shape[0] < 2 else []
    if not recs:
        return _result("einstein", [], errs, np.inf, tol)
    k_used = soliton.fit_lambda(recs) if kappa == "fit" else float(kappa)
    worst = max(float(np.max(np.abs(M + k_used * np.eye(M.shape[0])))) for M in recs)
    res = _result("einstein", recs, errs, worst, tol,
                  fitted={"kappa": k_used,
                          "classification": soliton.classify(k_used, rt.tols.class_tol)},
                  flags=flags, details={"restriction": restriction})
    return _expectations(res, [("kappa", k_used, params.get("expect_kappa"))], tol)


def check_killing(rt, params):
    tol = params.get("tol", rt.tols.tol)
    xi = rt.target_field(params.get("xi"))

    def collect(i):
        ctx = rt.ctx(i, 1)
        return soliton.killing_residual(
            rt.scene.target, xi, [(tuple(ctx.q), ctx.bindings)]
        )

    recs, errs = rt.map_points(collect)
    return _result("killing", recs, errs, max(recs, default=np.inf), tol)


def check_curvature_oracle(rt, params):
    tol = params.get("tol", rt.tols.tol)
    which = params.get("manifold", "target")

    def collect(i):
        if which == "source":
            M, pt, bindings = rt.scene.source, tuple(rt.points[i]), {}
        else:
            ctx = rt.ctx(i, 1)
            M, pt, bindings = rt.scene.target, tuple(ctx.q), ctx.bindings
        cs = curvature_sample(M, pt, bindings, pd_tol=rt.tols.pd_tol)
        ms = metric_sample(M, pt, bindings, pd_tol=rt.tols.pd_tol)
        out = {"scalar": cs.scalar}
        worst = 0.0
        if params.get("scalar") is not None:
            worst = max(worst, abs(cs.scalar - params["scalar"]))
        if params.get("ricci_equals_metric"):
            worst = max(worst, float(np.abs(cs.ricci - ms.g).max()))
        if params.get("constant_curvature") is not None:
            c = params["constant_curvature"]
            eye = np.eye(M.dim)
            model = c * (np.einsum("jk,li->lijk", ms.g, eye)
                         - np.einsum("ik,lj->lijk", ms.g, eye))
            worst = max(worst, float(np.abs(cs.riemann - model).max()))
        if params.get("einstein_kappa") is not None:
            frame = orthonormal_frame(ms.g)
            ric = np.array([[a @ cs.ricci @ b for b in frame] for a in frame])
            worst = max(worst,
                        float(np.abs(ric + params["einstein_kappa"] * np.eye(M.dim)).max()))
        out["worst"] = worst
        return out

    recs, errs = rt.map_points(collect)
    worst = max((r["worst"] for r in recs), default=0.0)
    details = {}
    if recs:
        details["scalar_mean"] = float(np.mean([r["scalar"] for r in recs]))
    return _result("curvature-oracle", recs, errs, worst, tol,
                   details={**details, "manifold": which})


def curvature_invariants(g, g_inv, dg, d2g):
    """Worst residual of the curvature symmetries, first Bianchi identity,
    metric compatibility, and Ricci frame independence for a batch."""
    gamma, riemann, ricci, scalar = curvature_batch(g, g_inv, dg, d2g)
    low = np.einsum("...lm,...mijk->...ijkl", g, riemann)
    worst = float(np.abs(low + np.einsum("...jikl->...ijkl", low)).max())
    worst = max(worst, float(np.abs(low + np.einsum("...ijlk->...ijkl", low)).max()))
    worst = max(worst, float(np.abs(low - np.einsum("...klij->...ijkl", low)).max()))
    bianchi = (riemann + np.einsum("...ljki->...lijk", riemann)
               + np.einsum("...lkij->...lijk", riemann))
    worst = max(worst, float(np.abs(bianchi).max()))
    compat = (dg - np.einsum("...lki,...lj->...ijk", gamma, g)
              - np.einsum("...lkj,...il->...ijk", gamma, g))
    worst = max(worst, float(np.abs(compat).max()))
    P = g.shape[0]
    for p in range(P):
        rng = np.random.default_rng(7000 + p)
        s1 = sum(E @ ricci[p] @ E for E in random_orthonormal_frame(g[p], rng))
        s2 = sum(E @ ricci[p] @ E for E in random_orthonormal_frame(g[p], rng))
        worst = max(worst, abs(s1 - s2), abs(s1 - scalar[p]))
    return worst


def check_structure(rt, params):
    tol = params.get("tol", rt.tols.tol)
    which = params.get("manifold", "source")

    def collect(i):
        if which == "source":
            M, pt, bindings = rt.scene.source, tuple(rt.points[i]), {}
        else:
            ctx = rt.ctx(i, 1)
            M, pt, bindings = rt.scene.target, tuple(ctx.q), ctx.bindings
        ms = metric_sample(M, pt, bindings, pd_tol=rt.tols.pd_tol)
        return curvature_invariants(ms.g[None], ms.g_inv[None], ms.dg[None], ms.d2g[None])

    recs, errs = rt.map_points(collect, rt.indices_for(params))
    return _result("structure", recs, errs, max(recs, default=0.0), tol,
                   details={"manifold": which})


def check_second_fundamental(rt, params):
    tol = params.get("tol", rt.tols.tol)

    def collect(i):
        ctx = rt.ctx(i, 2)
        gN = ctx.gN.val
        worst_sym = 0.0
        for a in ctx.full_frame:
            for b in ctx.full_frame:
                d = ctx.sff(a, b).val - ctx.sff(b, a).val
                worst_sym = max(worst_sym, gnorm(gN, d))
        worst_orth = 0.0
        for Xi in ctx.horizontal:
            for Xj in ctx.horizontal:
                s = ctx.sff(Xi, Xj).val
                for R in ctx.range_frame:
                    worst_orth = max(worst_orth, abs(s @ gN @ R.val))
        return max(worst_sym, worst_orth)

    recs, errs = rt.map_points(collect, rt.indices_for(params))
    return _result("second-fundamental", recs, errs, max(recs, default=0.0), tol)


def check_shape(rt, params):
    tol = params.get("tol", rt.tols.tol)

    def collect(i):
        ctx = rt.ctx(i, 3)
        gN = ctx.gN.val
        worst = 0.0
        coeff = 0.0
        for E in ctx.normal_frame:
            for a, (Xi, imgi) in enumerate(zip(ctx.horizontal, ctx.images)):
                Si = ctx.shape_apply(E, Xi).val
                for b, (Xj, imgj) in enumerate(zip(ctx.horizontal, ctx.images)):
                    dual = Si @ gN @ imgj.val - E.val @ gN @ ctx.sff(Xi, Xj).val
                    sadj = Si @ gN @ imgj.val - imgi.val @ gN @ ctx.shape_apply(E, Xj).val
                    worst = max(worst, abs(dual), abs(sadj))
        if ctx.normal_frame and ctx.range_frame:
            E0 = ctx.normal_frame[0]
            Y0 = ctx.adjoint_apply(ctx.range_frame[0])
            coeff = float(ctx.shape_apply(E0, Y0).val @ gN @ ctx.range_frame[0].val)
        # compatibility of the dual pairing with the adjoint map
        for E in ctx.normal_frame:
            for W in ctx.normal_frame:
                for Xi in ctx.horizontal:
                    for Xj in ctx.horizontal:
                        SVY = ctx.shape_apply(E, Xj)
                        lhs = ctx.sff(Xi, ctx.adjoint_apply(SVY)).val @ gN @ W.val
                        rhs = ctx.shape_apply(W, Xi).val @ gN @ SVY.val
                        worst = max(worst, abs(lhs - rhs))
        return {"worst": worst, "coefficient": coeff}

    recs, errs = rt.map_points(collect, rt.indices_for(params))
    worst = max((r["worst"] for r in recs), default=0.0)
    coeffs = [r["coefficient"] for r in recs]
    fitted = {"shape_coefficient": float(np.mean(coeffs)) if coeffs else 0.0}
    return _result("shape", recs, errs, worst, tol, fitted=fitted)


def check_codazzi(rt, params):
    tol = params.get("tol", rt.tols.tol)

    def collect(i):
        ctx = rt.ctx(i, 3)
        if ctx.normal_dim == 0 or ctx.rank < 2:
            return 0.0
        gN = ctx.gN.val
        R = ctx.curvature_N.riemann
        pre = [ctx.adjoint_apply(Rf) for Rf in ctx.range_frame]
        worst = 0.0
        for a in range(ctx.rank):
            for b in range(a + 1, ctx.rank):
                for V in ctx.normal_frame:
                    lhs_vec = np.einsum(
                        "lijk,i,j,k->l", R,
                        ctx.range_frame[a].val, ctx.range_frame[b].val, V.val,
                    )
                    rhs = (ctx.shape_covariant_derivative(pre[b], V, pre[a])
                           - ctx.shape_covariant_derivative(pre[a], V, pre[b])).val
                    for Z in ctx.range_frame:
                        worst = max(worst, abs((lhs_vec - rhs) @ gN @ Z.val))
        return worst

    recs, errs = rt.map_points(collect, rt.indices_for(params))
    return _result("codazzi", recs, errs, max(recs, default=0.0), tol)


def check_mixed_curvature(rt, params):
    tol = params.get("tol", rt.tols.tol)

    def collect(i):
        ctx = rt.ctx(i, 3)
        worst = 0.0
        assumption = 0.0
        for x in range(ctx.rank):
            for v in range(ctx.normal_dim):
                for w in range(ctx.normal_dim):
                    out = curvature_mixed_check(None, None, x, v, w, ctx=ctx)
                    worst = max(worst, out["full"], out["normal_component"])
                    assumption = max(assumption, out["assumption"])
        return {"worst": worst, "assumption": assumption}

    recs, errs = rt.map_points(collect, rt.indices_for(params))
    worst = max((r["worst"] for r in recs), default=0.0)
    assumption = max((r["assumption"] for r in recs), default=0.0)
    flags = [FLAG_ASSUMPTION_VIOLATED] if assumption > tol else []
    return _result("mixed-curvature", recs, errs, worst, tol, flags=flags,
                   details={"assumption_drift": assumption})


def check_ricci_decomposition(rt, params):
    tol = params.get("tol", rt.tols.tol)

    def collect(i):
        ctx = rt.ctx(i, 3)
        worst = 0.0
        flags = set()
        for a in range(ctx.rank):
            for b in range(a, ctx.rank):
                rep = soliton.ricci_decomposition(ctx, "range-range", a, b)
                worst = max(worst, rep.residual)
                flags.update(rep.flags)
        for a in range(ctx.normal_dim):
            for b in range(a, ctx.normal_dim):
                rep = soliton.ricci_decomposition(ctx, "normal-normal", a, b)
                worst = max(worst, rep.residual)
                flags.update(rep.flags)
        for a in range(ctx.rank):
            for b in range(ctx.normal_dim):
                rep = soliton.ricci_decomposition(ctx, "mixed", a, b)
                worst = max(worst, rep.residual)
                flags.update(rep.flags)
        return {"worst": worst, "flags": flags}

    recs, errs = rt.map_points(collect, rt.indices_for(params))
    worst = max((r["worst"] for r in recs), default=0.0)
    flags = sorted(set().union(*(r["flags"] for r in recs)) if recs else set())
    return _result("ricci-decomposition", recs, errs, worst, tol, flags=flags)


def check_scalar_decomposition(rt, params):
    tol = params.get("tol", rt.tols.tol)

    def collect(i):
        ctx = rt.ctx(i, 3)
        rep = soliton.scalar_decomposition(ctx)
        out = {"worst": rep.residual,
               "geodesic": rep.terms.get("geodesic_corollary_residual")}
        if params.get("umbilic_corollary"):
            f_hat, _, degen, _ = umbilic_fit(None, None, ctx=ctx)
            actual = rep.rhs - rep.terms["range"] - rep.terms["normal"]
            out["umbilic_gap"] = abs(
                actual - soliton.scalar_umbilic_corollary(f_hat, ctx.rank)
            ) if not degen else 0.0
        return out

    recs, errs = rt.map_points(collect, rt.indices_for(params))
    worst = max((r["worst"] for r in recs), default=0.0)
    details = {}
    geo = [r["geodesic"] for r in recs if r.get("geodesic") is not None]
    if geo:
        gworst = max(geo)
        details["geodesic_corollary_residual"] = gworst
        if params.get("assert_geodesic_corollary"):
            worst = max(worst, gworst)
    gaps = [r["umbilic_gap"] for r in recs if "umbilic_gap" in r]
    if gaps:
        details["umbilic_corollary_gap"] = max(gaps)
    return _result("scalar-decomposition", recs, errs, worst, tol, details=details)


def check_totally_geodesic(rt, params):
    tol = params.get("tol", rt.tols.tol)
    assert_zero = params.get("assert_zero", [])

    def collect(i):
        return totally_geodesic_checks(None, None, ctx=rt.ctx(i, 3))

    recs, errs = rt.map_points(collect, rt.indices_for(params))
    keys = ["a_tensor", "t_tensor", "shape", "normal"]
    agg = {k: max((r[k] for r in recs), default=0.0) for k in keys}
    worst = max((agg[k] for k in assert_zero), default=0.0)
    return _result("totally-geodesic", recs, errs, worst, tol, details=agg)


def check_umbilic(rt, params):
    tol = params.get("tol", rt.tols.tol)

    def collect(i):
        f, res, degen, prop = umbilic_fit(None, None, ctx=rt.ctx(i, 3))
        return {"f": f, "res": max(res, prop), "degen": degen}

    recs, errs = rt.map_points(collect, rt.indices_for(params))
    worst = max((r["res"] for r in recs), default=0.0)
    degen = any(r["degen"] for r in recs)
    fs = [r["f"] for r in recs]
    fitted = {"f": float(np.mean(fs)) if fs else 0.0}
    flags = [FLAG_DEGENERATE_FIT] if degen else []
    res = _result("umbilic", recs, errs, worst, tol, fitted=fitted, flags=flags)
    expect = params.get("expect_abs_f")
    if expect is not None and not degen:
        res = _expectations(res, [("abs_f", abs(fitted["f"]), expect)], tol)
    return res


def check_leaf(rt, params):
    tol = params.get("tol", rt.tols.tol)
    which = params.get("which", "range")
    xi = rt.target_field(params.get("xi", "zero"))
    lam = params.get("lambda", "fit")
    branch = params.get("branch", "both")

    def collect(i):
        ctx = rt.ctx(i, 2)
        L, R, f = soliton.leaf_matrices(ctx, which, xi)
        intr = soliton.intrinsic_ricci_range(ctx) if which == "range" else None
        return L, R, tuple(f), intr

    recs, errs = rt.map_points(collect, rt.indices_for(params))
    if not recs:
        return _result(f"leaf-{which}", [], errs, np.inf, tol)
    lies = [r[0] for r in recs]
    rics = [r[1] for r in recs]
    flags = sorted(set().union(*(r[2] for r in recs)))
    dim = rics[0].shape[0]
    mats = [L + R for L, R in zip(lies, rics)]
    lam_used = soliton.fit_lambda(mats) if lam == "fit" else float(lam)
    eye = np.eye(dim)
    soliton_res = max(float(np.max(np.abs(M + lam_used * eye))) for M in mats)
    einstein_res = max(float(np.max(np.abs(R + lam_used * eye))) for R in rics)
    scalar = float(np.mean([np.trace(R) for R in rics]))
    scalar_expected = -lam_used * dim
    gated = []
    if branch in ("soliton", "both"):
        gated.append(soliton_res)
    if branch in ("einstein", "both"):
        gated.append(einstein_res)
        gated.append(abs(scalar - scalar_expected))
    worst = max(gated)
    fitted = {"lambda": lam_used,
              "classification": soliton.classify(lam_used, rt.tols.class_tol)}
    details = {
        "soliton_residual": soliton_res,
        "einstein_residual": einstein_res,
        "leaf_scalar": scalar,
        "leaf_scalar_expected": scalar_expected,
    }
    intr = [r[3] for r in recs]
    if all(i is not None for i in intr):
        k_fit = soliton.fit_lambda(intr)
        details["intrinsic_kappa"] = k_fit
        details["intrinsic_residual"] = max(
            float(np.max(np.abs(R + k_fit * eye))) for R in intr
        )
    return _result(f"leaf-{which}", recs, errs, worst, tol,
                   fitted=fitted, details=details, flags=flags)


def check_mean_curvatures(rt, params):
    tol = params.get("tol", rt.tols.tol)

    def collect(i):
        ctx = rt.ctx(i, 2)
        mc = harmonicity.mean_curvatures(ctx)
        orth = max(
            (abs(mc.H2 @ ctx.gN.val @ R.val) for R in ctx.range_frame), default=0.0
        )
        return {"H": mc.H_norm, "H2": mc.H2_norm, "orth": orth}

    recs, errs = rt.map_points(collect, rt.indices_for(params))
    worst = max((r["orth"] for r in recs), default=0.0)
    h2s = [r["H2"] for r in recs]
    fitted = {"H2_norm": float(np.mean(h2s)) if h2s else 0.0,
              "H_norm": float(np.mean([r["H"] for r in recs])) if recs else 0.0}
    res = _result("mean-curvatures", recs, errs, worst, tol, fitted=fitted)
    expect = params.get("expect_H2_norm")
    if expect is not None:
        gap = max((abs(r["H2"] - expect) for r in recs), default=np.inf)
        res.details["H2_norm_gap"] = gap
        res.worst = max(res.worst, gap)
        if gap > tol:
            res.passed = False
    return res


def check_tension(rt, params):
    tol = params.get("tol", rt.tols.tol)
    harmonic_tol = params.get("harmonic_tol", 1e-9)

    def collect(i):
        tr = harmonicity.tension(rt.ctx(i, 2))
        return {"identity": tr.identity_residual, "tau": tr.harmonic_residual}

    recs, errs = rt.map_points(collect, rt.indices_for(params))
    worst = max((r["identity"] for r in recs), default=0.0)
    taus = [r["tau"] for r in recs]
    details = {"tau_norm_max": max(taus, default=0.0)}
    res = _result("tension", recs, errs, worst, tol, details=details)
    if params.get("expect_harmonic"):
        h = max(taus, default=np.inf)
        res.details["harmonic_residual"] = h
        res.worst = max(res.worst, h)
        if h > harmonic_tol:
            res.passed = False
    expect_tau = params.get("expect_tau_norm")
    if expect_tau is not None:
        gap = max((abs(t - expect_tau) for t in taus), default=np.inf)
        res.details["tau_norm_gap"] = gap
        res.worst = max(res.worst, gap)
        if gap > tol:
            res.passed = False
    return res


def check_bitension(rt, params):
    tol = params.get("tol", rt.tols.tol)
    c = params.get("c", rt.scene.space_form_c)
    if c is None:
        return CheckResult("bitension", False, np.inf,
                           errors=["scene declares no space-form constant"], points=0)

    def collect(i):
        rep = harmonicity.bitension_report(rt.ctx(i, 4), float(c))
        return {
            "range": rep.range_norm,
            "normal": rep.normal_norm,
            "direct": rep.direct_norm,
            "normal_vs_direct": abs(rep.normal_norm - rep.direct_norm),
        }

    recs, errs = rt.map_points(collect, rt.indices_for(params))
    details = {
        k: max((r[k] for r in recs), default=0.0)
        for k in ("range", "normal", "direct", "normal_vs_direct")
    }
    if params.get("expect_biharmonic"):
        worst = max(details["range"], details["normal"], details["direct"])
    else:
        worst = 0.0
    return _result("bitension", recs, errs, worst, tol, details=details)


def check_almost_soliton(rt, params):
    tol = params.get("tol", rt.tols.tol)
    xi = rt.target_field(params.get("xi", "zero"))
    lam = params.get("lambda", "fit")
    samples, errs0 = rt.target_samples()
    if lam == "fit":
        lam_used, _, _ = soliton.soliton_fit(rt.scene.target, xi, samples,
                                             class_tol=rt.tols.class_tol)
    else:
        lam_used = float(lam)

    def collect(i):
        ctx = rt.ctx(i, 3)
        f, _, degen, _ = umbilic_fit(None, None, ctx=ctx)
        out = soliton.almost_soliton_residuals(ctx, f, lam_used)
        return {"mu": out["mu"], "res": out["einstein_residual"], "degen": degen}

    recs, errs = rt.map_points(collect, rt.indices_for(params))
    worst = max((r["res"] for r in recs), default=0.0)
    mus = [r["mu"] for r in recs]
    flags = [FLAG_DEGENERATE_FIT] if any(r["degen"] for r in recs) else []
    fitted = {"mu": float(np.mean(mus)) if mus else 0.0, "lambda": lam_used}
    res = _result("almost-soliton", recs, errs + errs0, worst, tol,
                  fitted=fitted, flags=flags)
    return _expectations(res, [("mu", fitted["mu"], params.get("expect_mu"))], tol)


REGISTRY = {
    "riemannian": check_riemannian,
    "split": check_split,
    "lie-derivative": check_lie_derivative,
    "soliton": check_soliton,
    "einstein": check_einstein,
    "killing": check_killing,
    "curvature-oracle": check_curvature_oracle,
    "structure": check_structure,
    "second-fundamental": check_second_fundamental,
    "shape": check_shape,
    "codazzi": check_codazzi,
    "mixed-curvature": check_mixed_curvature,
    "ricci-decomposition": check_ricci_decomposition,
    "scalar-decomposition": check_scalar_decomposition,
    "totally-geodesic": check_totally_geodesic,
    "umbilic": check_umbilic,
    "leaf": check_leaf,
    "mean-curvatures": check_mean_curvatures,
    "tension": check_tension,
    "bitension": check_bitension,
    "almost-soliton": check_almost_soliton,
}


def run_checks(scene, overrides=None):
    """Run the scene's checks and assemble a deterministic report."""
    ov = overrides or {}
    tols = scene.tolerances
    if "tol" in ov:
        tols = replace(tols, tol=float(ov["tol"]))
    if "rank_tol" in ov:
        tols = replace(tols, rank_tol=float(ov["rank_tol"]))
    seed = int(ov.get("seed", scene.sampling["seed"]))
    count = int(ov.get("samples", scene.sampling["count"]))
    jet_order = int(ov.get("jet_order", scene.jet_order))
    threads = int(ov.get("threads", 1))
    rt = Runtime(scene, tols, seed, count, jet_order, threads)

    wanted = ov.get("checks")
    results = []
    for spec in scene.checks:
        params = dict(spec)
        name = params.pop("name")
        if wanted and name not in wanted:
            continue
        if "lambda" in ov and "lambda" in spec:
            params["lambda"] = ov["lambda"]
        try:
            results.append(REGISTRY[name](rt, params))
        except RmapError as e:
            results.append(CheckResult(
                name=name, passed=False, worst=float("inf"),
                errors=[f"{type(e).__name__}: {e}"],
            ))

    ok = all(r.passed or r.flags for r in results)
    env = {
        "seed": seed,
        "samples": count,
        "jet_order": jet_order,
        "threads": threads,
        "backend": backend.active_backend(),
        "tol": tols.tol,
        "rank_tol": tols.rank_tol,
        "pd_tol": tols.pd_tol,
        "class_tol": tols.class_tol,
    }
    return CheckReport(
        scene=scene.name,
        digest=scene.digest,
        environment=env,
        results=results,
        status="pass" if ok else "fail",
    )


def exit_code(report):
    """0 pass, 1 check failure, 3 numeric domain error."""
    if any(r.errors for r in report.results):
        return 3
    return 0 if report.status == "pass" else 1

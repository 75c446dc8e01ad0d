"""Acceptance criteria, one test per criterion, each printing a verdict line.

Tolerances are pinned exactly as stated; every expected value is either a
closed-form oracle, a finite-difference cross-check, or a property that
must hold identically.
"""

import numpy as np
import pytest

from conftest import perturbed_flat_manifold
from rmapcheck.checks import Runtime, curvature_invariants, run_checks
from rmapcheck.harmonicity import bitension_report, mean_curvatures, tension
from rmapcheck.manifold import (
    curvature_sample,
    metric_batch,
    metric_sample,
    orthonormal_frame,
)
from rmapcheck.rmap import (
    MapPointContext,
    curvature_mixed_check,
    totally_geodesic_checks,
    verify_riemannian,
)
from rmapcheck.sampling import sample_box
from rmapcheck.scene import BUILTIN_SCENES, builtin_scene
from rmapcheck.soliton import (
    ricci_decomposition,
    scalar_decomposition,
    soliton_fit,
    leaf_matrices,
    fit_lambda,
)


def _verdict(ok, label):
    print(f"[{'PASS' if ok else 'FAIL'}] {label}")
    assert ok, label


def _contexts(scene, count, order, seed=None):
    pts = sample_box(seed if seed is not None else scene.sampling["seed"],
                     scene.box_bounds(), count)
    return [
        MapPointContext(scene.mapdef, p, order=order,
                        tols=scene.tolerances, extensions=scene.extensions)
        for p in pts
    ]


def test_criterion_1_worked_example_reproduction(paper_scene):
    rt = Runtime(paper_scene, paper_scene.tolerances,
                 paper_scene.sampling["seed"], 64, 4)
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    Q2, _ = np.linalg.qr(ref)

    worst_angle = 0.0
    worst_riem = 0.0
    worst_lie = 0.0
    worst_mixed = 0.0
    coeffs = []
    samples = []
    ranks = set()
    kernels = set()
    for i in range(64):
        ctx = rt.ctx(i, 3)
        ranks.add(ctx.rank)
        kernels.add(ctx.kernel_dim)
        got = np.stack([U.val for U in ctx.vertical], axis=1)
        Q1, _ = np.linalg.qr(got)
        sine = np.linalg.svd(Q2 - Q1 @ (Q1.T @ Q2), compute_uv=False).max()
        worst_angle = max(worst_angle, float(sine))
        worst_riem = max(worst_riem, verify_riemannian(None, None, ctx=ctx))
        # Lie derivative of the target metric along the scene's frame fields
        from rmapcheck.manifold import lie_derivative_metric

        frame = orthonormal_frame(metric_sample(
            paper_scene.target, ctx.q, ctx.bindings).g)
        for fname in ("frame1", "xi_normal"):
            _, exprs = paper_scene.fields[fname]
            L = lie_derivative_metric(paper_scene.target, ctx.q, exprs, ctx.bindings)
            worst_lie = max(worst_lie,
                            max(abs(a @ L @ b) for a in frame for b in frame))
        rep = ricci_decomposition(ctx, "mixed", 0, 0)
        worst_mixed = max(worst_mixed, rep.residual)
        E0 = ctx.normal_frame[0]
        Y0 = ctx.adjoint_apply(ctx.range_frame[0])
        coeffs.append(float(ctx.shape_apply(E0, Y0).val
                            @ ctx.gN.val @ ctx.range_frame[0].val))
        samples.append((tuple(ctx.q), ctx.bindings))

    _verdict(ranks == {1} and kernels == {2} and worst_angle < 1e-9,
             f"1a rank=1, kernel dim 2, vertical span angle {worst_angle:.2e} < 1e-9")
    _verdict(worst_riem < 1e-9, f"1b Riemannian residual {worst_riem:.2e} < 1e-9")
    _verdict(worst_lie < 1e-9, f"1c Lie-derivative term {worst_lie:.2e} < 1e-9")
    _verdict(worst_mixed < 1e-8, f"1d mixed Ricci residual {worst_mixed:.2e} < 1e-8")

    _, exprs = paper_scene.fields["xi_normal"]
    lam, res, cls = soliton_fit(paper_scene.target, exprs, samples)
    a7sq = max(c * c for c in coeffs)
    ok = abs(lam - a7sq) < 1e-8 and cls == "steady" and res < 1e-8
    _verdict(ok, f"1e soliton constant {lam:.2e} matches squared shape "
                 f"coefficient {a7sq:.2e}, steady")


def test_criterion_2_constant_curvature_oracles(sphere_scene):
    pts = sample_box(2024, sphere_scene.box_bounds(), 25)
    worst_s = worst_ric = 0.0
    mats = []
    for p in pts:
        cs = curvature_sample(sphere_scene.source, tuple(p))
        ms = metric_sample(sphere_scene.source, tuple(p))
        worst_s = max(worst_s, abs(cs.scalar - 2.0))
        worst_ric = max(worst_ric, float(np.abs(cs.ricci - ms.g).max()))
        frame = orthonormal_frame(ms.g)
        mats.append(np.array([[a @ cs.ricci @ b for b in frame] for a in frame]))
    kappa = fit_lambda(mats)
    worst_e = max(float(np.abs(M + kappa * np.eye(2)).max()) for M in mats)
    ok_sphere = worst_s < 1e-7 and worst_ric < 1e-8 and abs(kappa + 1) < 1e-7
    _verdict(ok_sphere, f"2 sphere: s residual {worst_s:.2e}, Ric-g {worst_ric:.2e}, "
                        f"kappa {kappa:.9f} (shrinking), Einstein fit {worst_e:.2e}")

    hyp = builtin_scene("hyperbolic-plane")
    pts = sample_box(2025, hyp.box_bounds(), 25)
    worst_h = max(abs(curvature_sample(hyp.source, tuple(p)).scalar + 2.0)
                  for p in pts)
    _verdict(worst_h < 1e-7, f"2 hyperbolic plane: scalar residual {worst_h:.2e} < 1e-7")


def test_criterion_3_structural_identity_suites():
    rng = np.random.default_rng(20240814)
    worst = 0.0
    for k in range(200):
        dim = 2 + (k % 2)
        M = perturbed_flat_manifold(rng, dim)
        pts = rng.uniform(-1.0, 1.0, (100, dim))
        g, dg, d2g, err = metric_batch(M, pts)
        assert not err.any()
        worst = max(worst, curvature_invariants(g, np.linalg.inv(g), dg, d2g))
    _verdict(worst < 1e-8,
             f"3 curvature symmetries/Bianchi/compatibility/frame-independence "
             f"on 200 random metrics x 100 points: worst {worst:.2e} < 1e-8")


def test_criterion_4_map_identity_suites():
    worst = 0.0
    sphere_adjoint_worst = 0.0
    for name in BUILTIN_SCENES:
        scene = builtin_scene(name)
        for ctx in _contexts(scene, 8, 3, seed=4000):
            gN = ctx.gN.val
            for a in ctx.full_frame:
                for b in ctx.full_frame:
                    d = ctx.sff(a, b).val - ctx.sff(b, a).val
                    worst = max(worst, float(np.abs(d).max()))
            for Xi, imgi in zip(ctx.horizontal, ctx.images):
                for Xj, imgj in zip(ctx.horizontal, ctx.images):
                    s = ctx.sff(Xi, Xj).val
                    for R in ctx.range_frame:
                        worst = max(worst, abs(s @ gN @ R.val))
                    for E in ctx.normal_frame:
                        Si = ctx.shape_apply(E, Xi).val
                        dual = Si @ gN @ imgj.val - E.val @ gN @ s
                        sym = Si @ gN @ imgj.val - imgi.val @ gN @ ctx.shape_apply(E, Xj).val
                        worst = max(worst, abs(dual), abs(sym))
            if name == "sphere-immersion":
                for E in ctx.normal_frame:
                    for W in ctx.normal_frame:
                        for Xi in ctx.horizontal:
                            for Xj in ctx.horizontal:
                                SVY = ctx.shape_apply(E, Xj)
                                lhs = ctx.sff(Xi, ctx.adjoint_apply(SVY)).val @ gN @ W.val
                                rhs = ctx.shape_apply(W, Xi).val @ gN @ SVY.val
                                sphere_adjoint_worst = max(
                                    sphere_adjoint_worst, abs(lhs - rhs))
    _verdict(worst < 1e-8,
             f"4 orthogonality/duality/self-adjointness/symmetry on all scenes: "
             f"worst {worst:.2e} < 1e-8")
    _verdict(sphere_adjoint_worst < 1e-7,
             f"4 adjoint-pairing identity on sphere: {sphere_adjoint_worst:.2e} < 1e-7")


def test_criterion_5_decomposition_theorems(paper_scene, sphere_scene,
                                            projection_scene):
    worst_mixed = 0.0
    worst_ricci = 0.0
    worst_scalar = 0.0
    for scene in (paper_scene, sphere_scene):
        for ctx in _contexts(scene, 6, 3, seed=5000):
            for x in range(ctx.rank):
                for v in range(ctx.normal_dim):
                    for w in range(ctx.normal_dim):
                        out = curvature_mixed_check(None, None, x, v, w, ctx=ctx)
                        worst_mixed = max(worst_mixed, out["full"],
                                          out["normal_component"])
            for slot, ii, jj in [("range-range", 0, 0), ("normal-normal", 0, 0),
                                 ("mixed", 0, 0)]:
                rep = ricci_decomposition(ctx, slot, ii, jj)
                worst_ricci = max(worst_ricci, rep.residual)
            worst_scalar = max(worst_scalar, scalar_decomposition(ctx).residual)
    _verdict(worst_mixed < 1e-6,
             f"5 mixed-slot curvature identity: worst {worst_mixed:.2e} < 1e-6")
    _verdict(worst_ricci < 1e-6,
             f"5 Ricci splitting (all slots): worst {worst_ricci:.2e} < 1e-6")
    _verdict(worst_scalar < 1e-6,
             f"5 scalar splitting master identity: worst {worst_scalar:.2e} < 1e-6")

    worst_geo = 0.0
    for ctx in _contexts(projection_scene, 6, 3, seed=5001):
        rep = scalar_decomposition(ctx)
        worst_geo = max(worst_geo, rep.residual,
                        rep.terms.get("geodesic_corollary_residual", 0.0))
    _verdict(worst_geo < 1e-8,
             f"5 totally geodesic corollary on projection: {worst_geo:.2e} < 1e-8")


def test_criterion_6_leaf_checks(paper_scene, projection_scene):
    ctxs = _contexts(paper_scene, 8, 2, seed=6000)
    _, xi = paper_scene.fields["xi_normal"]
    lies, rics = [], []
    for ctx in ctxs:
        L, R, _ = leaf_matrices(ctx, "range", xi)
        lies.append(L)
        rics.append(R)
    lam = fit_lambda([L + R for L, R in zip(lies, rics)])
    eye = np.eye(rics[0].shape[0])
    einstein_res = max(float(np.abs(R + lam * eye).max()) for R in rics)
    scalar = float(np.mean([np.trace(R) for R in rics]))
    scalar_gap = abs(scalar - (-lam * rics[0].shape[0]))
    _verdict(einstein_res < 1e-8 and scalar_gap < 1e-7,
             f"6 worked-example range leaf: Einstein residual {einstein_res:.2e} "
             f"< 1e-8, scalar gap {scalar_gap:.2e} < 1e-7")

    ctxs = _contexts(projection_scene, 8, 2, seed=6001)
    mats, rics2 = [], []
    for ctx in ctxs:
        L, R, flags = leaf_matrices(ctx, "range", None)
        assert not flags
        mats.append(L + R)
        rics2.append(R)
    lam2 = fit_lambda(mats)
    dim = mats[0].shape[0]
    soliton_res = max(float(np.abs(M + lam2 * np.eye(dim)).max()) for M in mats)
    einstein_res2 = max(float(np.abs(R + lam2 * np.eye(dim)).max()) for R in rics2)
    _verdict(abs(lam2) < 1e-12 and soliton_res < 1e-9 and einstein_res2 < 1e-9,
             f"6 projection leaves: soliton {soliton_res:.2e} and Einstein "
             f"{einstein_res2:.2e} residuals < 1e-9 at lambda = 0")


def test_criterion_7_harmonicity(sphere_scene, projection_scene):
    worst_identity = 0.0
    for name in BUILTIN_SCENES:
        scene = builtin_scene(name)
        for ctx in _contexts(scene, 100, 2, seed=7000):
            worst_identity = max(worst_identity, tension(ctx).identity_residual)
    _verdict(worst_identity < 1e-8,
             f"7 tension identity at 100 points per scene: "
             f"worst {worst_identity:.2e} < 1e-8")

    worst_h2 = worst_tau = 0.0
    for ctx in _contexts(sphere_scene, 10, 2, seed=7001):
        worst_h2 = max(worst_h2, abs(mean_curvatures(ctx).H2_norm - 1.0))
        worst_tau = max(worst_tau, abs(tension(ctx).harmonic_residual - 2.0))
    _verdict(worst_h2 < 1e-7 and worst_tau < 1e-7,
             f"7 sphere mean curvature {worst_h2:.2e} and tension {worst_tau:.2e} "
             f"gaps < 1e-7")

    worst_harm = worst_bi = 0.0
    for ctx in _contexts(projection_scene, 8, 4, seed=7002)[:4]:
        worst_harm = max(worst_harm, tension(ctx).harmonic_residual)
        rep = bitension_report(ctx, 0.0)
        worst_bi = max(worst_bi, rep.range_norm, rep.normal_norm, rep.direct_norm)
    _verdict(worst_harm < 1e-9 and worst_bi < 1e-7,
             f"7 projection harmonic ({worst_harm:.2e} < 1e-9) and biharmonic "
             f"({worst_bi:.2e} < 1e-7)")

    from test_harmonicity import _fd_rough_laplacian
    from rmapcheck.harmonicity import bitension_direct

    worst_fd = 0.0
    for p in sample_box(7003, sphere_scene.box_bounds(), 2):
        ctx = MapPointContext(sphere_scene.mapdef, p, order=4,
                              extensions=sphere_scene.extensions)
        direct = bitension_direct(ctx, 0.0)
        fd = _fd_rough_laplacian(sphere_scene, p)
        worst_fd = max(worst_fd, float(np.abs(direct + fd).max()))
    _verdict(worst_fd < 1e-5,
             f"7 rough-laplacian jets vs finite differences on sphere: "
             f"{worst_fd:.2e} < 1e-5")


def test_criterion_8_determinism():
    for name in BUILTIN_SCENES:
        scene1 = builtin_scene(name)
        scene2 = builtin_scene(name)
        r1 = run_checks(scene1, {"samples": 3})
        r2 = run_checks(scene2, {"samples": 3})
        assert r1.to_json() == r2.to_json(), name
        assert r1.to_text() == r2.to_text(), name
    _verdict(True, "8 repeated runs byte-identical on every built-in scene")

"""Soliton and Einstein fits, killing residuals, curvature decompositions."""

import numpy as np
import pytest

from conftest import small_sphere_in_threesphere
from rmapcheck.errors import EmptyDistributionError
from rmapcheck.manifold import ChartManifold
from rmapcheck.rmap import MapPointContext, umbilic_fit
from rmapcheck.soliton import (
    almost_mu,
    almost_soliton_residuals,
    classify,
    einstein_check,
    fit_lambda,
    intrinsic_ricci_range,
    killing_residual,
    leaf_check,
    ricci_decomposition,
    ricci_perp_matrix,
    ricci_range_matrix,
    scalar_decomposition,
    scalar_umbilic_corollary,
    soliton_fit,
)

FLAT2 = ChartManifold("E2", ["x", "y"], [["1", "0"], ["0", "1"]])
FLAT3 = ChartManifold(
    "E3", ["x", "y", "z"], [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]]
)
SPHERE = ChartManifold("S2", ["th", "ph"], [["1", "0"], ["0", "sin(th)^2"]])
HYP = ChartManifold("H2", ["x", "y"], [["1/(y*y)", "0"], ["0", "1/(y*y)"]])

S2_SAMPLES = [((0.8, 0.6), {}), ((1.1, 0.4), {}), ((0.5, 1.0), {})]


def test_flat_zero_field_steady():
    lam, res, cls = soliton_fit(FLAT3, ["0", "0", "0"], [((0.1, 0.2, 0.3), {})])
    assert lam == 0.0 and res == 0.0 and cls == "steady"


def test_sphere_zero_field_shrinking():
    lam, res, cls = soliton_fit(SPHERE, None, S2_SAMPLES)
    assert lam == pytest.approx(-1.0, abs=1e-12)
    assert res < 1e-12
    assert cls == "shrinking"


def test_flat_position_field_soliton():
    lam, res, cls = soliton_fit(FLAT3, ["x", "y", "z"], [((0.3, -0.2, 0.9), {})])
    assert lam == pytest.approx(-1.0)
    assert res < 1e-12
    assert cls == "shrinking"


def test_hyperbolic_expanding():
    lam, res, cls = soliton_fit(HYP, None, [((0.1, 1.5), {}), ((-0.2, 2.5), {})])
    assert lam == pytest.approx(1.0, abs=1e-12)
    assert res < 1e-12
    assert cls == "expanding"


def test_lambda_given_not_fit():
    lam, res, _ = soliton_fit(SPHERE, None, S2_SAMPLES, lam=0.0)
    assert lam == 0.0
    assert res == pytest.approx(1.0, abs=1e-12)


def test_einstein_equals_soliton_with_zero_field():
    k, res_e = einstein_check(SPHERE, S2_SAMPLES)
    lam, res_s, _ = soliton_fit(SPHERE, None, S2_SAMPLES)
    assert k == lam and res_e == res_s


def test_classification_tolerance():
    assert classify(5e-8) == "steady"
    assert classify(-5e-7) == "shrinking"
    assert classify(2e-7) == "expanding"


def test_fit_lambda_empty_raises():
    with pytest.raises(EmptyDistributionError):
        fit_lambda([])


def test_killing_rotation_zero():
    assert killing_residual(FLAT2, ["-y", "x"], [((0.3, 0.7), {})]) == 0.0


def test_killing_position_field_not_killing():
    res = killing_residual(FLAT2, ["x", "y"], [((0.3, 0.7), {})])
    assert res == pytest.approx(2.0)


def test_killing_on_einstein_soliton_hypothesis():
    # with the trivial potential on a shrinking Einstein manifold the
    # soliton equation already holds, and the potential is killing
    lam, res, _ = soliton_fit(SPHERE, None, S2_SAMPLES, lam=-1.0)
    assert res < 1e-12
    assert killing_residual(SPHERE, ["0", "0"], S2_SAMPLES) == 0.0


def test_restricted_ricci_matrices_sphere(sphere_ctx):
    # flat ambient: every frame-restricted sum vanishes
    assert np.abs(ricci_range_matrix(sphere_ctx)).max() < 1e-13
    assert np.abs(ricci_perp_matrix(sphere_ctx)).max() < 1e-13


def test_ricci_decomposition_identity_map_trivial():
    M = ChartManifold("M", ["x", "y"], [["1", "0"], ["0", "1"]])
    N = ChartManifold("N", ["u", "v"], [["1", "0"], ["0", "1"]])
    from rmapcheck.rmap import SmoothMapDef

    F = SmoothMapDef(M, N, ["x", "y"])
    ctx = MapPointContext(F, (0.2, 0.3), order=3)
    rep = ricci_decomposition(ctx, "range-range", 0, 0)
    assert rep.lhs == rep.rhs == 0.0


@pytest.mark.parametrize("slot,i,j", [
    ("range-range", 0, 0), ("range-range", 0, 1), ("range-range", 1, 1),
    ("normal-normal", 0, 0), ("mixed", 0, 0), ("mixed", 1, 0),
])
def test_ricci_decomposition_sphere(sphere_ctx, slot, i, j):
    rep = ricci_decomposition(sphere_ctx, slot, i, j)
    assert rep.residual < 1e-12
    assert not rep.flags


@pytest.mark.parametrize("slot", ["range-range", "normal-normal", "mixed"])
def test_ricci_decomposition_paper(paper_ctx, slot):
    rep = ricci_decomposition(paper_ctx, slot, 0, 0)
    assert rep.lhs == pytest.approx(0.0, abs=1e-13)
    assert rep.residual < 1e-12


def test_ricci_decomposition_curved_target():
    F, ext = small_sphere_in_threesphere(1.0)
    ctx = MapPointContext(F, (0.7, 0.4), order=3, extensions=ext)
    for slot, i, j in [("range-range", 0, 0), ("range-range", 1, 1),
                       ("normal-normal", 0, 0), ("mixed", 0, 0)]:
        rep = ricci_decomposition(ctx, slot, i, j)
        assert rep.residual < 1e-10, (slot, rep.residual)


def test_scalar_decomposition_sphere(sphere_ctx):
    rep = scalar_decomposition(sphere_ctx)
    assert rep.lhs == pytest.approx(0.0, abs=1e-12)
    assert rep.residual < 1e-12
    # the individual correction terms are extension-dependent but cancel
    assert rep.terms["shape_square"] == pytest.approx(-4.0, abs=1e-12)


def test_scalar_decomposition_umbilic_corollary_sphere(sphere_ctx):
    rep = scalar_decomposition(sphere_ctx)
    f, _, _, _ = umbilic_fit(None, None, ctx=sphere_ctx)
    correction = rep.rhs - rep.terms["range"] - rep.terms["normal"]
    assert correction == pytest.approx(
        scalar_umbilic_corollary(f, sphere_ctx.rank), abs=1e-12
    )


def test_scalar_decomposition_curved_target():
    F, ext = small_sphere_in_threesphere(1.0)
    ctx = MapPointContext(F, (0.7, 0.4), order=3, extensions=ext)
    rep = scalar_decomposition(ctx)
    # round 3-sphere has scalar curvature 6
    assert rep.lhs == pytest.approx(6.0, abs=1e-10)
    assert rep.residual < 1e-9


def test_scalar_decomposition_totally_geodesic_corollary(projection_ctx):
    rep = scalar_decomposition(projection_ctx)
    assert rep.residual == 0.0
    assert rep.terms["geodesic_corollary_residual"] == 0.0


def test_intrinsic_ricci_sphere_is_metric(sphere_ctx):
    ric = intrinsic_ricci_range(sphere_ctx)
    assert np.allclose(ric, np.eye(2), atol=1e-12)


def test_intrinsic_ricci_none_for_submersion(projection_ctx):
    assert intrinsic_ricci_range(projection_ctx) is None


def test_leaf_check_projection(projection_ctx):
    rep = leaf_check([projection_ctx], "range", xi=None, lam="fit")
    assert rep.lam == 0.0
    assert rep.soliton_residual < 1e-12
    assert rep.einstein_residual < 1e-12
    assert rep.scalar == rep.scalar_expected == 0.0
    assert not rep.flags


def test_leaf_check_paper_einstein_branch(paper_ctx):
    rep = leaf_check([paper_ctx], "range", xi=["0", "1"], lam="fit")
    assert abs(rep.lam) < 1e-12
    assert rep.einstein_residual < 1e-12
    assert rep.scalar_residual < 1e-12
    assert rep.classification == "steady"


def test_leaf_check_paper_normal_leaf(paper_ctx):
    rep = leaf_check([paper_ctx], "normal", xi=["0", "1"], lam="fit")
    assert rep.einstein_residual < 1e-12
    assert rep.soliton_residual < 1e-12


def test_leaf_check_sphere_soliton_branch(sphere_ctx):
    rep = leaf_check([sphere_ctx], "range", xi=["y1", "y2", "y3"], lam="fit")
    assert rep.lam == pytest.approx(-1.0, abs=1e-12)
    assert rep.soliton_residual < 1e-12
    assert "hypothesis-unmet" in rep.flags
    k, res = rep.intrinsic_einstein
    assert k == pytest.approx(-1.0, abs=1e-12)
    assert res < 1e-12


def test_leaf_check_normal_empty_raises(projection_ctx):
    with pytest.raises(EmptyDistributionError):
        leaf_check([projection_ctx], "normal")


def test_almost_mu_values():
    assert almost_mu(0.0, 0.0) == 0.0
    assert almost_mu(1.0, -1.0) == 4.0


def test_almost_soliton_sphere(sphere_ctx):
    f, _, _, _ = umbilic_fit(None, None, ctx=sphere_ctx)
    lam, _, _ = soliton_fit(
        FLAT3.__class__("R3", ["y1", "y2", "y3"],
                        [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]]),
        ["y1", "y2", "y3"],
        [((0.5, 0.2, 0.8), {})],
    )
    out = almost_soliton_residuals(sphere_ctx, f, lam)
    assert out["mu"] == pytest.approx(0.0, abs=1e-12)
    assert out["einstein_residual"] < 1e-12


def test_convention_consistency_einstein_vs_soliton_restricted(sphere_ctx):
    # with the trivial potential the leaf fit and the Einstein fit share
    # one least-squares system, so the constants agree exactly
    rep1 = leaf_check([sphere_ctx], "range", xi=None, lam="fit")
    mats = [ricci_range_matrix(sphere_ctx)]
    assert rep1.lam == fit_lambda(mats)


def test_metric_compatibility_rewrite_normal_direction(sphere_ctx):
    # derivative of the pairing of a shape term against the frame equals
    # the two-term product-rule expansion, evaluated ambiently
    ctx = sphere_ctx
    amb = ctx.require_ambient()
    gq = ctx.gN.val
    V = amb.normal_frame[0]
    W = amb.normal_frame[0]
    for Xj in amb.range_frame:
        SW = amb.shape_apply(W, Xj)
        lhs = amb.cov(V, SW).val @ gq @ Xj.val
        rhs = (float(amb.ddir(V, amb.dot(SW, Xj)).val)
               - SW.val @ gq @ amb.cov(V, Xj).val)
        assert lhs == pytest.approx(rhs, abs=1e-7)

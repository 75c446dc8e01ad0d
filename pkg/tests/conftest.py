"""Shared fixtures and numerical oracles for the test suite."""

import numpy as np
import pytest

from rmapcheck.expr import parse_expression
from rmapcheck.jets import eval_tape_soft, seed_var_jets
from rmapcheck.manifold import ChartManifold
from rmapcheck.multiindex import jet_space
from rmapcheck.rmap import AmbientExtension, MapPointContext, SmoothMapDef
from rmapcheck.scene import builtin_scene


def numeric_eval(expr, point):
    """Order-zero tape evaluation; the value path used by the FD oracles."""
    sp = jet_space(len(expr.coords), 0)
    vj = seed_var_jets(sp, np.asarray(point, dtype=float)[None, :])
    out, err = eval_tape_soft(expr, vj, np.zeros((1, len(expr.params), 1)), sp)
    assert not err[0]
    return float(out[0, 0])


def fd_first(f, p, i, h=1e-5):
    p = np.asarray(p, dtype=float)
    e = np.zeros_like(p)
    e[i] = h
    return (f(p + e) - f(p - e)) / (2 * h)


def fd_second(f, p, i, j, h=1e-5):
    p = np.asarray(p, dtype=float)
    ei = np.zeros_like(p)
    ej = np.zeros_like(p)
    ei[i] = h
    ej[j] = h
    if i == j:
        return (f(p + ei) - 2 * f(p) + f(p - ei)) / h**2
    return (
        f(p + ei + ej) - f(p + ei - ej) - f(p - ei + ej) + f(p - ei - ej)
    ) / (4 * h**2)


def fd_second_stacked(expr, p, i, j, h=1e-5):
    """Second partial via a central difference of first-order jet gradients.

    Plain double differencing at h = 1e-5 hits the roundoff floor around
    1e-4 for order-ten values; differencing the (independently FD-verified)
    first-derivative layer keeps the quadrature honest at 1e-6 relative.
    """
    from rmapcheck.jets import eval_jet

    p = np.asarray(p, dtype=float)
    ej = np.zeros_like(p)
    ej[j] = h
    alpha = tuple(int(k == i) for k in range(len(p)))
    up = eval_jet(expr, p + ej, 1).derivative(alpha)
    dn = eval_jet(expr, p - ej, 1).derivative(alpha)
    return (up - dn) / (2 * h)


class ExprGen:
    """Seeded random generator of domain-safe expression strings.

    Arguments of log/sqrt and divisors are offset trigonometric terms, so
    any point evaluates cleanly; exponential arguments are damped to keep
    magnitudes finite-difference friendly.
    """

    def __init__(self, names, rng):
        self.names = list(names)
        self.rng = rng

    def const(self):
        return format(self.rng.uniform(0.2, 1.8), ".3f")

    def atom(self):
        if self.rng.random() < 0.7:
            return self.rng.choice(self.names)
        return self.const()

    def node(self, depth):
        if depth <= 0:
            return self.atom()
        r = self.rng.random()
        a = self.node(depth - 1)
        if r < 0.18:
            return f"({a} + {self.node(depth - 1)})"
        if r < 0.36:
            return f"({a} - {self.node(depth - 1)})"
        if r < 0.52:
            return f"({a}) * ({self.node(depth - 1)})"
        if r < 0.60:
            return f"({a}) / (2.5 + sin({self.node(depth - 1)}))"
        if r < 0.68:
            return f"sin({a})"
        if r < 0.76:
            return f"cos({a})"
        if r < 0.82:
            return f"exp(0.3*({a}))"
        if r < 0.88:
            return f"log(2.5 + cos({a}))"
        if r < 0.94:
            return f"sqrt(2.5 + sin({a}))"
        if r < 0.97:
            return f"({a})^{self.rng.integers(2, 4)}"
        return f"-({a})"


def perturbed_flat_manifold(rng, dim, eps=0.05):
    """Flat metric plus a small smooth symmetric perturbation, PD on [-1, 1]^dim."""
    coords = [f"x{i+1}" for i in range(dim)]
    entries = [[None] * dim for _ in range(dim)]
    for i in range(dim):
        for j in range(i, dim):
            k = int(rng.integers(0, dim))
            l = int(rng.integers(0, dim))
            a = rng.uniform(0.5, 2.0)
            b = rng.uniform(0.0, 6.0)
            c = rng.uniform(-1.0, 1.0)
            d = rng.uniform(-1.0, 1.0)
            term = (
                f"{eps:.3f}*({c:.3f}*sin({a:.3f}*{coords[k]} + {b:.3f})"
                f" + {d:.3f}*cos({coords[l]}))"
            )
            base = "1" if i == j else "0"
            expr = f"{base} + {term}"
            entries[i][j] = expr
            entries[j][i] = expr
    return ChartManifold(f"perturbed{dim}", coords, entries)


@pytest.fixture(scope="session")
def sphere_scene():
    return builtin_scene("sphere-immersion")


@pytest.fixture(scope="session")
def paper_scene():
    return builtin_scene("paper-example")


@pytest.fixture(scope="session")
def projection_scene():
    return builtin_scene("projection-submersion")


@pytest.fixture(scope="session")
def sphere_ctx(sphere_scene):
    return MapPointContext(
        sphere_scene.mapdef, (0.8, 0.6), order=4,
        tols=sphere_scene.tolerances, extensions=sphere_scene.extensions,
    )


@pytest.fixture(scope="session")
def paper_ctx(paper_scene):
    return MapPointContext(
        paper_scene.mapdef, (0.4, 0.7, 0.3), order=4,
        tols=paper_scene.tolerances, extensions=paper_scene.extensions,
    )


@pytest.fixture(scope="session")
def projection_ctx(projection_scene):
    return MapPointContext(
        projection_scene.mapdef, (0.3, -0.5, 0.8), order=4,
        tols=projection_scene.tolerances,
    )


def small_sphere_in_threesphere(radius_angle=1.0):
    """Latitude sphere inside the round 3-sphere: an umbilical, non-totally
    geodesic Riemannian map into a curvature-one space form."""
    import math

    s = math.sin(radius_angle)
    M = ChartManifold(
        "latitude-sphere", ["th", "ph"],
        [[f"{s*s:.17g}", "0"], ["0", f"{s*s:.17g}*sin(th)^2"]],
    )
    N = ChartManifold(
        "round-threesphere", ["ch", "th", "ph"],
        [["1", "0", "0"], ["0", "sin(ch)^2", "0"], ["0", "0", "sin(ch)^2*sin(th)^2"]],
    )
    F = SmoothMapDef(M, N, [f"{radius_angle:.17g}", "th", "ph"])
    ext = [AmbientExtension("normal", [["1", "0", "0"]], N)]
    return F, ext

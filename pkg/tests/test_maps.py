import math

import numpy as np
import pytest

from newlyap import maps as M
from newlyap.dynball import delta_ratio
from newlyap.errors import BoundaryMismatch, DiscOverlap, DomainViolation, NotDifferentiable
from newlyap.geometry import ClosedDisc, FlatTorus, distance


def _sample(m, rng, count):
    if m.support:
        d = m.support[0]
        return d.sample(rng, count)
    return m.domain.sample(rng, count)


def test_evaluate_examples():
    ex = M.example_map()
    assert np.allclose(M.evaluate(ex, (0.3, 0.0)), (0.9, 0.0))
    assert np.allclose(M.evaluate(ex, (1.0, 1.0)), (2.0, 2.0))
    assert np.allclose(M.evaluate(ex, (0.0, 1.0)), (0.0, 0.5))
    assert np.array_equal(M.evaluate(ex, (0.0, 0.0)), (0.0, 0.0))
    assert np.allclose(M.evaluate(M.cat_map(), (0.5, 0.5)), (0.5, 0.0))
    p = np.array([0.123, 0.456])
    assert np.array_equal(M.evaluate(M.identity(), p), p)


def test_example_branches():
    ex = M.example_map()
    # x(y - x) > 0
    assert np.allclose(M.evaluate(ex, (1.0, 3.0)), (2.0, 3.0))
    # x(y - x) < 0
    assert np.allclose(M.evaluate(ex, (2.0, 1.0)), (5.0, 2.0))
    # xy <= 0 with x(y - x) = 0 only on the axes
    assert np.allclose(M.evaluate(ex, (0.0, -2.0)), (0.0, -1.0))


def test_iterate_examples():
    orbit = M.iterate(M.example_map(), (0.1, 0.1), 3)
    assert orbit.shape == (4, 2)
    assert np.allclose(orbit[-1], (0.8, 0.8))
    p = np.array([0.3, 0.7])
    assert np.array_equal(M.iterate(M.identity(), p, 100), np.tile(p, (101, 1)))
    assert np.array_equal(M.iterate(M.cat_map(), (0.0, 0.0), 17), np.zeros((18, 2)))
    with pytest.raises(DomainViolation):
        M.iterate(M.rotation(1.0), (2.0, 0.0), 3)


def test_jacobian_examples():
    assert np.array_equal(M.jacobian(M.cat_map(), (0.3, 0.9)), [[2, 1], [1, 1]])
    k = 0.7
    assert np.allclose(M.jacobian(M.standard_map(k), (0.0, 0.0)), [[1 + k, 1], [k, 1]])
    with pytest.raises(NotDifferentiable):
        M.jacobian(M.example_map(), (0.0, 0.0))


@pytest.mark.parametrize("name", ["cat", "standard", "rotation", "diag", "translation"])
def test_derivative_matches_finite_differences(name):
    m = M.lookup(name)
    rng = np.random.default_rng(1)
    pts = m.domain.sample(rng, 1000) * 0.9 if name == "rotation" else (
        rng.uniform(-1, 1, (1000, 2)) if name == "diag" else m.domain.sample(rng, 1000))
    h = 1e-6
    jac = M.jacobian(m, pts)
    for i, e in enumerate(np.eye(2) * h):
        fd = (m.forward(pts + e) - m.forward(pts - e)) / (2 * h)
        scale = np.maximum(np.abs(jac[..., :, i]).max(axis=-1, keepdims=True), 1.0)
        assert np.max(np.abs(fd - jac[..., :, i]) / scale) < 1e-5


@pytest.mark.parametrize("name", ["identity", "rotation", "translation", "cat", "standard",
                                  "disc_standin"])
def test_inverse_round_trip(name):
    m = M.lookup(name)
    rng = np.random.default_rng(2)
    pts = m.domain.sample(rng, 1000)
    back = m.domain.wrap(m.inverse(m.domain.wrap(m.forward(pts))))
    fwd = m.domain.wrap(m.forward(m.domain.wrap(m.inverse(pts))))
    assert np.max(distance(m.domain, pts, back)) < 1e-9
    assert np.max(distance(m.domain, pts, fwd)) < 1e-9


@pytest.mark.parametrize("name", ["identity", "rotation", "translation", "cat", "standard",
                                  "disc_standin"])
def test_forward_preserves_domain(name):
    m = M.lookup(name)
    pts = m.domain.sample(np.random.default_rng(3), 10_000)
    assert np.all(m.domain.contains(m.domain.wrap(m.forward(pts))))


def _jittered_grid(lo, side, per_axis, rng):
    """One uniform point per cell of a per_axis x per_axis grid over a square."""
    t = np.arange(per_axis)
    ii, jj = np.meshgrid(t, t, indexing="ij")
    cells = np.column_stack([ii.ravel(), jj.ravel()]) + rng.uniform(size=(per_axis * per_axis, 2))
    return lo + cells * (side / per_axis)


def _area_preserving_zscores(m, boxes=200, per_axis=200, side=0.1, seed=0):
    """z-scores of area(g^-1(B)) against area(B), estimated with stratified samples.

    The binomial standard error of plain Monte Carlo is used as the yardstick;
    stratification only makes the estimate tighter than that.
    """
    rng = np.random.default_rng(seed)
    if isinstance(m.domain, ClosedDisc):
        lo, span = np.asarray(m.domain.center) - m.domain.radius, 2 * m.domain.radius
    else:
        lo, span = np.zeros(2), m.domain.period
    z = []
    for _ in range(boxes):
        pts = _jittered_grid(lo, span, per_axis, rng)
        pts = pts[m.domain.contains(pts)]
        img = m.domain.wrap(m.forward(pts))
        if m.support:
            b = _sample(m, rng, 1)[0] - side / 2
        elif isinstance(m.domain, ClosedDisc):
            b = m.domain.sample(rng, 1)[0] * 0.5 - side / 2
        else:
            b = rng.uniform(0, span - side, 2)
        inside = np.count_nonzero(np.all((img >= b) & (img < b + side), axis=1))
        n = per_axis * per_axis
        p = side * side / span**2
        z.append((inside - n * p) / math.sqrt(n * p * (1 - p)))
    return np.array(z)


@pytest.mark.parametrize("name", ["identity", "rotation", "translation", "cat", "standard",
                                  "disc_standin", "disc_family"])
def test_area_preservation_statistical(name):
    if name == "disc_family":
        m = M.build_disc_family(M.DiscFamilySpec(2, 2.5, M.disc_standin()))
    else:
        m = M.lookup(name)
    assert m.area_preserving
    z = _area_preserving_zscores(m)
    assert np.all(np.abs(z) <= 3.0), np.abs(z).max()


def test_homothety_trivial_cases():
    ident = M.rotation(0.0)
    g = M.conjugate_by_homothety(ident, (3.0, -1.0), 0.25)
    p = np.array([3.1, -0.95])
    assert np.allclose(M.evaluate(g, p), p, atol=1e-15)
    rot = M.rotation(0.8)
    same = M.conjugate_by_homothety(rot, (0.0, 0.0), 1.0)
    pts = rot.domain.sample(np.random.default_rng(0), 100)
    assert np.array_equal(same.forward(pts), rot.forward(pts))
    with pytest.raises(ValueError):
        M.conjugate_by_homothety(rot, (0, 0), -1.0)


def test_homothety_delta_ratio_invariance_exact():
    # power-of-two ratios about the origin make the conjugacy exact in floating point
    rng = np.random.default_rng(11)
    bases = [M.rotation(1.0), M.twist((0.0, 0.0), 0.25, 0.9, 1), M.disc_standin()]
    for i in range(100):
        base = bases[i % 3]
        r = 2.0 ** int(rng.integers(-4, 5))
        g = M.conjugate_by_homothety(base, (0.0, 0.0), r)
        x, y = base.domain.sample(rng, 2) * 0.95
        n = int(rng.integers(1, 11))
        a = delta_ratio(base, n, x, y)
        assert abs(delta_ratio(g, n, r * x, r * y) - a) <= 1e-12 * a


def test_homothety_delta_ratio_invariance_general():
    # arbitrary centres: deviations are round-off in c + r p, amplified by the dynamics
    rng = np.random.default_rng(12)
    for base, tol in ((M.rotation(1.0), 1e-12), (M.twist((0.0, 0.0), 0.25, 0.9, 1), 1e-11)):
        for _ in range(50):
            r = float(rng.uniform(0.1, 5.0))
            c = rng.uniform(-3, 3, 2)
            g = M.conjugate_by_homothety(base, c, r)
            x, y = base.domain.sample(rng, 2) * 0.95
            n = int(rng.integers(1, 11))
            a = delta_ratio(base, n, x, y)
            assert abs(delta_ratio(g, n, c + r * x, c + r * y) - a) <= tol * a


def test_disc_family_identity_outside_and_distance_bound():
    k = 2.5
    for n in (1, 2, 3):
        g = M.build_disc_family(M.DiscFamilySpec(n, k, M.disc_standin()))
        assert len(g.support) == n * n
        assert M.total_disc_area(g) == pytest.approx(math.pi * k * k / 100, abs=1e-12)
        rng = np.random.default_rng(n)
        pts = g.domain.sample(rng, 20_000)
        c = np.array([d.center for d in g.support])
        dist_c = np.min(np.hypot(*(pts[:, None, :] - c[None]).transpose(2, 0, 1)), axis=1)
        outside = dist_c > g.support[0].radius
        assert np.array_equal(M.evaluate(g, pts[outside]), pts[outside])
        moved = distance(g.domain, pts, M.evaluate(g, pts))
        assert moved.max() <= 2 * k / (10 * n)
        assert moved.max() > 0


def test_disc_family_continuous_across_boundaries():
    g = M.build_disc_family(M.DiscFamilySpec(3, 2.5, M.disc_standin()))
    t = np.linspace(0, 2 * math.pi, 1000, endpoint=False)
    for d in g.support[:3]:
        u = np.column_stack([np.cos(t), np.sin(t)])
        inner = np.asarray(d.center) + d.radius * (1 - 1e-13) * u
        outer = np.asarray(d.center) + d.radius * (1 + 1e-13) * u
        assert np.max(distance(g.domain, g.forward(inner), g.forward(outer))) < 1e-9


def test_disc_family_errors():
    with pytest.raises(DiscOverlap):
        M.build_disc_family(M.DiscFamilySpec(2, 20.0, M.disc_standin()))
    with pytest.raises(BoundaryMismatch):
        M.build_disc_family(M.DiscFamilySpec(1, 1.0, M.rotation(0.5)))
    spec = M.DiscFamilySpec(1, 1.0, M.disc_standin())
    assert spec.radius == pytest.approx(0.1)


def test_zoo_lookups():
    cat = M.lookup("cat")
    assert cat.derivative is not None and cat.inverse is not None
    assert M.lookup("example").derivative is None
    ident = M.lookup("identity")
    pts = ident.domain.sample(np.random.default_rng(0), 10)
    assert np.array_equal(ident.forward(pts), ident.inverse(pts))
    assert set(M.zoo()) >= {"identity", "rotation", "translation", "cat", "standard", "example",
                            "disc_standin", "diag"}
    with pytest.raises(KeyError):
        M.lookup("henon")


@pytest.mark.parametrize("name", ["cat", "standard", "disc_standin", "example", "diag"])
def test_offset_kernel_matches_direct_difference(name):
    m = M.lookup(name)
    rng = np.random.default_rng(4)
    for _ in range(20):
        x = rng.uniform(-1, 1, 2) if m.domain.kind == "plane" else m.domain.sample(rng, 1)[0] * 0.9
        e = rng.normal(size=(16, 2)) * 1e-3
        direct = m.domain.wrap_offset(m.forward(x + e) - m.forward(x))
        assert np.allclose(M.step_offsets(m, x, e), direct, rtol=1e-8, atol=1e-14)

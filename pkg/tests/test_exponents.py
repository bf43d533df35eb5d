import math

import numpy as np
import pytest

from newlyap import exponents as E
from newlyap import maps as M
from newlyap.dynball import Ladder
from newlyap.errors import NoHyperbolicity, NotDifferentiable

LOG_L1 = math.log((3 + math.sqrt(5)) / 2)
E_U = np.array([1.0, (math.sqrt(5) - 1) / 2])
E_S = np.array([1.0, -(math.sqrt(5) + 1) / 2])
SHORT = E.Schedule(n_values=(5, 10, 15), delta_values=(1e-2, 1e-3, 1e-4), directions=32)


def _angle(a, b):
    a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
    return math.acos(min(1.0, abs(float(a @ b))))


def test_cat_classical_matches_eigenvalue_oracle():
    oracle = math.log(max(abs(np.linalg.eigvals(M.CAT_MATRIX))))
    assert abs(oracle - LOG_L1) < 1e-15
    for x in [(0.1, 0.2), (0.7, 0.33)]:
        assert E.classical_top_exponent(M.cat_map(), x, 50) == pytest.approx(oracle, abs=1e-9)
    assert E.classical_top_exponent(M.identity(), (0.3, 0.3), 40) == 0.0
    assert E.classical_top_exponent(M.rotation(1.0), (0.3, 0.3), 40) == pytest.approx(0.0, abs=1e-12)


def test_renormalised_product_equals_direct_product():
    cat = M.cat_map()
    prof = E.classical_top_profile(cat, (0.2, 0.4), 30)
    for n in range(1, 31):
        direct = math.log(np.linalg.norm(np.linalg.matrix_power(M.CAT_MATRIX, n), 2)) / n
        assert prof[n - 1] == pytest.approx(direct, abs=1e-9)


def test_classical_directional_examples():
    cat = M.cat_map()
    assert E.classical_directional_exponent(cat, (0.1, 0.5), E_U, 50) == pytest.approx(LOG_L1, abs=1e-9)
    assert E.classical_directional_exponent(cat, (0.1, 0.5), E_S, 10) == pytest.approx(-LOG_L1, abs=1e-6)
    diag = M.lookup("diag")
    for n in range(1, 20):
        v = E.classical_directional_exponent(diag, (0.0, 0.0), (1.0, 1.0), n)
        assert abs(v - math.log(2)) <= math.log(2) / n
    with pytest.raises(NotDifferentiable):
        E.classical_top_exponent(M.example_map(), (0.0, 0.0), 3)


@pytest.mark.parametrize("v, want", [((1, 1), math.log(2)), ((0, 1), -math.log(2)),
                                     ((1, 0), math.log(3))])
def test_example_directional_values(v, want):
    est = E.new_directional_exponent(M.example_map(), (0.0, 0.0), v)
    assert est.value == pytest.approx(want, abs=0.02)


def test_example_top_value():
    est = E.new_top_exponent(M.example_map(), (0.0, 0.0), extra_directions=[(1, 0), (0, 1), (1, 1)])
    assert est.value == pytest.approx(math.log(3), abs=0.02)
    assert est.diagnostics["monotonicity_violations"] == 0


def test_identity_and_cat_top():
    assert abs(E.new_top_exponent(M.identity(), (0.4, 0.6), SHORT).value) <= 1e-9
    rng = np.random.default_rng(0)
    for x in M.cat_map().domain.sample(rng, 5):
        val = E.new_top_exponent(M.cat_map(), x).value
        assert val == pytest.approx(LOG_L1, rel=0.05)


def test_cat_directional_agrees_with_top():
    for v in (E_U, (1.0, 1.0), (1.0, 0.0)):
        est = E.new_directional_exponent(M.cat_map(), (0.3, 0.6), v)
        assert est.value == pytest.approx(LOG_L1, rel=0.05)


def test_grid_rows_shape():
    est = E.new_top_exponent(M.standard_map(0.5), (0.2, 0.3), SHORT)
    rows = est.grid_rows()
    assert len(rows) == 9
    assert set(rows[0]) == {"n", "delta", "sup_log_delta", "candidates", "s_n_over_n"}
    assert [r["n"] for r in rows] == [5, 5, 5, 10, 10, 10, 15, 15, 15]


def test_schedule_validation():
    with pytest.raises(ValueError):
        E.Schedule(n_values=(10, 5))
    with pytest.raises(ValueError):
        E.Schedule(delta_values=(1e-4, 1e-3))
    with pytest.raises(ValueError):
        E.Schedule(directions=4)
    with pytest.raises(ValueError):
        E.Schedule(tail_window=9)
    with pytest.raises(ValueError):
        E.Schedule(ladder=Ladder(top=1e-3))
    assert E.Schedule().tail == (20, 25, 30)


def test_oseledets_frames():
    frame = E.estimate_oseledets_directions(M.cat_map(), (0.2, 0.7))
    assert _angle(frame.e_u, E_U) < 1e-6
    assert _angle(frame.e_s, E_S) < 1e-6
    diag = M.lookup("diag")
    diag = M.MapObject(domain=diag.domain, forward=diag.forward, label="diag",
                       derivative=diag.derivative, inverse=lambda p: np.asarray(p) * [0.5, 2.0])
    frame = E.estimate_oseledets_directions(diag, (0.0, 0.0))
    assert _angle(frame.e_u, (1, 0)) < 1e-12 and _angle(frame.e_s, (0, 1)) < 1e-12
    with pytest.raises(NoHyperbolicity):
        E.estimate_oseledets_directions(M.identity(), (0.5, 0.5))


def test_lambda_identity_and_cat():
    q = E.Quadrature(sample_count=100, seed=3)
    lam = E.lambda_functional(M.identity(), SHORT, q)
    assert lam.value <= 1e-6 and abs(lam.raw_mean) <= 1e-9
    lam = E.lambda_functional(M.cat_map(), SHORT, q)
    assert lam.value == pytest.approx(LOG_L1, rel=0.05)
    assert lam.sample_points == 100 and lam.excluded_points == 0
    with pytest.raises(ValueError):
        E.lambda_functional(M.example_map(), SHORT, q)
    with pytest.raises(ValueError):
        E.Quadrature(sample_count=10)


def test_quadrature_points_respect_support():
    g = M.build_disc_family(M.DiscFamilySpec(2, 2.5, M.disc_standin()))
    pts, area = E.quadrature_points(g, E.Quadrature(sample_count=120, seed=1))
    assert area == pytest.approx(math.pi * 2.5**2 / 100)
    assert all(any(d.contains(p) for d in g.support) for p in pts)
    grid_pts, _ = E.quadrature_points(M.cat_map(), E.Quadrature(sample_count=100, point_source="grid"))
    assert len(grid_pts) == 100


def test_orbit_invariance():
    res = E.check_orbit_invariance(M.identity(), (0.3, 0.3), SHORT)
    assert res.deviations == (0.0,) * 5
    res = E.check_orbit_invariance(M.rotation(1.0), (0.3, 0.1), SHORT)
    assert max(res.deviations) <= 1e-9
    res = E.check_orbit_invariance(M.cat_map(), (0.37, 0.11))
    assert max(res.deviations) <= 0.05


def test_homothety_exponent_invariance_with_mapped_ladder():
    base = M.disc_standin()
    s = E.Schedule(n_values=(5, 10, 15), delta_values=(1e-2, 1e-3), tail_window=2, directions=32)
    rng = np.random.default_rng(4)
    for _ in range(5):
        r = 2.0 ** int(rng.integers(-3, 4))
        x = base.domain.sample(rng, 1)[0] * 0.8
        g = M.conjugate_by_homothety(base, (0.0, 0.0), r)
        lad = Ladder(top=r * s.ladder.top, ratio=s.ladder.ratio, count=s.ladder.count)
        sg = E.Schedule(n_values=s.n_values, delta_values=tuple(r * d for d in s.delta_values),
                        tail_window=2, directions=32, ladder=lad)
        a = E.new_top_exponent(base, x, s).value
        assert abs(E.new_top_exponent(g, r * x, sg).value - a) <= 1e-9


def test_directional_dominated_by_top():
    rng = np.random.default_rng(10)
    fan = np.array([[math.cos(t), math.sin(t)] for t in 2 * math.pi * np.arange(32) / 32])
    for _ in range(100):
        name = ["cat", "standard", "disc_standin", "diag"][rng.integers(4)]
        m = M.lookup(name)
        x = rng.uniform(-1, 1, 2) if m.domain.kind == "plane" else m.domain.sample(rng, 1)[0] * 0.9
        v = fan[rng.integers(32)]
        line = E.new_directional_exponent(m, x, v, SHORT).value
        assert line <= E.new_top_exponent(m, x, SHORT).value


def test_parallel_map_is_ordered(monkeypatch):
    items = list(range(50))
    assert E.parallel_map(lambda i: i * i, items, threads=8) == [i * i for i in items]
    monkeypatch.setenv("NEWLYAP_THREADS", "3")
    assert E.default_threads() == 3
    monkeypatch.setenv("NEWLYAP_THREADS", "zero")
    assert E.default_threads() == 1

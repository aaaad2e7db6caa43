import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tslie import expr as ex
from tslie.dynamics import AccelerationField, Lagrangian, Trajectory, eval_series, solve_ivp
from tslie.errors import DomainExhaustedError, InputError
from tslie.symmetry import (GaugeFunction, GeneratorPair, apply_prolongation, build_ladders,
                            conservation_residual, conserved_series, determining_residual,
                            equivalence_gap, noether_residual, search_generators, solve_gauge,
                            structure_residual)
from tslie.timescale import build_explicit, build_geometric, build_uniform

DOUBLING_L = Lagrangian.parse("t + qs*qd")
DOUBLING_H = AccelerationField(h="-qd/(2*t)", lagrangian=DOUBLING_L)
LOG2 = GeneratorPair.parse("0", "ln(t)/ln(2)")


@pytest.fixture(scope="module")
def doubling():
    return solve_ivp(DOUBLING_H, build_geometric(1, 2, 21), 0.0, 1.0)


def test_doubling_gauge_and_invariant(doubling):
    n = np.arange(20)
    G = solve_gauge(LOG2, DOUBLING_L, doubling)
    np.testing.assert_allclose(G.values, -n * (n + 1), atol=1e-10)
    I = conserved_series(LOG2, DOUBLING_L, G, doubling)
    np.testing.assert_allclose(I.values, 0, atol=1e-10)
    assert I.drift <= 1e-10
    assert determining_residual(LOG2, DOUBLING_H, doubling).max_abs <= 1e-13
    assert structure_residual(LOG2, DOUBLING_L, G, doubling).max_abs <= 1e-10
    assert noether_residual(LOG2, DOUBLING_L, G, doubling).max_abs <= 1e-10


def test_invariant_without_gauge_drifts(doubling):
    G = solve_gauge(LOG2, DOUBLING_L, doubling)
    I = conserved_series(LOG2, DOUBLING_L, G, doubling, include_gauge=False)
    n = np.arange(20)
    np.testing.assert_allclose(I.values, n * (n + 1), atol=1e-10)
    assert not I.include_gauge


def test_ladders_of_composite_generator():
    ts = build_explicit([0, 1, 3, 4, 6])
    tr = Trajectory(ts, [1, 2, 0, 1, 3])
    lad = build_ladders(GeneratorPair.parse("t*q", "q^2"), tr)
    tau = ts.points * tr.q
    np.testing.assert_allclose(lad.tau, tau)
    np.testing.assert_allclose(lad.tau_d, np.diff(tau) / ts.mu[:-1])
    np.testing.assert_allclose(lad.xi_sigma, (tr.q ** 2)[1:])
    np.testing.assert_allclose(lad.mu_tau_d, np.diff(tau))


def test_apply_prolongation_by_hand():
    ts = build_explicit([0, 1, 3, 4, 6])
    tr = Trajectory(ts, [1, 2, 0, 1, 3])
    gen = GeneratorPair.parse("t", "q")
    i = 1
    # tau F_t + xi^sigma F_qs + (xi^D - tau^D qd^sigma) F_qd for F = t*qs + qd^2
    t, qs, qd = 1.0, 0.0, -1.0
    xi_d = (0 - 2) / 2
    tau_d = 1.0
    qd_sig = 1.0
    want = t * qs + 0.0 * t + (xi_d - tau_d * qd_sig) * 2 * qd
    assert apply_prolongation(gen, "t*qs + qd^2", tr, i) == pytest.approx(want)
    with pytest.raises(InputError):
        apply_prolongation(gen, "t*qs", tr, 3)


_coef = st.floats(-1, 1, allow_nan=False).map(lambda v: round(v, 3))


@settings(max_examples=40, deadline=None)
@given(st.lists(_coef, min_size=6, max_size=6), st.lists(_coef, min_size=4, max_size=4),
       st.integers(0, 10 ** 6))
def test_determining_residual_matches_linearized_flow(xc, hc, seed):
    """For tau = 0 the residual is d/de of the equation of motion along q + e*xi."""
    rng = np.random.default_rng(seed)
    ts = build_explicit(np.concatenate([[0.0], np.cumsum(rng.uniform(0.1, 0.6, 12))]))
    h = ex.parse(f"{hc[0]} + {hc[1]}*t + {hc[2]}*qs + {hc[3]}*qd")
    acc = AccelerationField(h=h)
    tr = solve_ivp(acc, ts, rng.uniform(-1, 1), rng.uniform(-1, 1))
    xi = ex.parse(f"{xc[0]} + {xc[1]}*t + {xc[2]}*q + {xc[3]}*t*q + {xc[4]}*q^2 + {xc[5]}*t^2")
    gen = GeneratorPair(ex.ZERO, xi)
    det = determining_residual(gen, acc, tr)

    def motion(eps):
        q = tr.q + eps * eval_series(xi, tr.n, t=tr.t, q=tr.q)
        moved = Trajectory(ts, q)
        m = tr.n - 3
        hv = eval_series(h, m, t=tr.t[:m], qs=moved.qs[:m], qd=moved.qd[:m])
        return moved.qdd[:m] - hv

    e = 1e-5
    fd = (motion(e) - motion(-e)) / (2 * e)
    np.testing.assert_allclose(det.series, fd, atol=1e-7 * max(1.0, det.scale))


def test_time_translation_on_integer_oscillator():
    L = Lagrangian.parse("qd^2/2 - qs^2/2")
    acc = AccelerationField(lagrangian=L)
    tr = solve_ivp(acc, build_uniform(0, 30, 31), 0.0, 1.0)
    gen = GeneratorPair.parse("1", "0")
    assert determining_residual(gen, acc, tr).max_abs <= 1e-9
    G = solve_gauge(gen, L, tr)
    np.testing.assert_allclose(G.values, 0, atol=1e-12)
    I = conserved_series(gen, L, G, tr)
    np.testing.assert_allclose(I.values[:4], [-1, -0.5, -0.5, -1])
    assert I.drift == pytest.approx(0.5)


def _random_problem(rng, scattered=True):
    n = int(rng.integers(30, 60))
    if scattered:
        ts = build_explicit(np.concatenate([[0.0], np.cumsum(rng.uniform(0.05, 0.3, n - 1))]))
    else:
        ts = build_uniform(0, n - 1, n)
    b, c, d, e = rng.uniform(-0.5, 0.5, 4)
    L = Lagrangian.parse(f"qd^2/2 + {0.2 * b}*qs*qd - {abs(c)}*qs^2/2 + {d}*t*qd + {e}*qs")
    tr = solve_ivp(AccelerationField(lagrangian=L), ts, rng.uniform(-1, 1), rng.uniform(-1, 1))
    return L, tr


def _random_poly(rng):
    c = rng.uniform(-1, 1, 6)
    return ex.parse(f"{c[0]} + {c[1]}*t + {c[2]}*q + {c[3]}*t*q + {c[4]}*q^2 + {c[5]}*t^2")


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_gauge_closes_conservation_for_pure_coordinate_generators(seed):
    rng = np.random.default_rng(seed)
    L, tr = _random_problem(rng)
    gen = GeneratorPair(ex.ZERO, _random_poly(rng))
    G = solve_gauge(gen, L, tr)
    assert structure_residual(gen, L, G, tr).relative <= 1e-12
    dI = conservation_residual(conserved_series(gen, L, G, tr), tr)
    assert dI.relative <= 1e-9


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6), st.booleans())
def test_structure_noether_equivalence(seed, scattered):
    rng = np.random.default_rng(seed)
    L, tr = _random_problem(rng, scattered)
    gen = GeneratorPair(_random_poly(rng), _random_poly(rng))
    G = solve_gauge(gen, L, tr)
    assert equivalence_gap(gen, L, G, tr).relative <= 1e-12


def test_gauge_constructors():
    tr = Trajectory(build_uniform(0, 1, 5), np.arange(5.0))
    assert GaugeFunction.zero(tr).values.shape == (4,)
    G = GaugeFunction.from_values([0, 1, 3, 6], tr)
    np.testing.assert_allclose(G.delta, [4, 8, 12])
    with pytest.raises(InputError):
        GaugeFunction.from_values([0, 1], tr)
    with pytest.raises(InputError):
        structure_residual(GeneratorPair.parse("0", "1"), Lagrangian.parse("qd^2"),
                           GaugeFunction(np.zeros(2), np.zeros(1)), tr)


def test_determining_needs_five_points():
    tr = Trajectory(build_uniform(0, 1, 4), np.arange(4.0))
    with pytest.raises(DomainExhaustedError):
        determining_residual(GeneratorPair.parse("0", "1"), AccelerationField(h="0"), tr)


def test_generator_pair_validation():
    with pytest.raises(InputError):
        GeneratorPair.parse("qd", "0")
    g = GeneratorPair.parse("1", "t").scaled(2)
    assert ex.evaluate(g.xi, {"t": 3.0}) == 6.0


def test_search_free_particle():
    acc = AccelerationField(h="0")
    ts = build_explicit([0, 0.5, 1, 2, 2.5, 4, 5])
    trs = [solve_ivp(acc, ts, 0.0, 1.0), solve_ivp(acc, ts, 1.0, -0.5)]
    res = search_generators([], ["1", "t", "q", "t^2"], acc, trs)
    assert res.null_dimension == 3
    found = [ex.serialize(c.generator.xi) for c in res if c.null]
    assert found == ["1", "t", "q"]
    assert not res[3].null and res[3].score > 0.1
    assert res.rank_deficient


def test_search_doubling_scale_contains_log(doubling):
    res = search_generators(["0"], ["1", "t", "ln(t)", "q"], DOUBLING_H, [doubling])
    null = [c for c in res if c.null]
    assert len(null) == 3
    logs = [c for c in null if c.xi_coeffs[2] != 0]
    assert len(logs) == 1
    x = logs[0].xi_coeffs
    assert np.all(np.abs(np.delete(x, 2)) < 0.01 * abs(x[2]))
    # 1 and q are exact symmetries of this linear, qs-free equation
    for xi in ("1", "q"):
        gen = GeneratorPair.parse("0", xi)
        assert determining_residual(gen, DOUBLING_H, doubling).max_abs <= 1e-13


def test_search_rejects_empty_basis(doubling):
    with pytest.raises(InputError):
        search_generators(["0"], [], DOUBLING_H, [doubling])

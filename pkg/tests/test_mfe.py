import math

import numpy as np
import pytest

from sbbm import mfe
from sbbm.mfe import BlowUp, InitialTrace, MfeConfig
from sbbm.spde import Grid, StabilityViolation

C = 1.0  # Psi'(0+) for the coalescing mechanism


def _cfg(lo=-8.0, hi=8.0, dx=0.02, t_floor=0.01, frac=0.05):
    n = int(round((hi - lo) / dx))
    return MfeConfig(Grid(lo, dx, n), t_floor, dx**2 / 2, frac)


def test_trace_validation():
    InitialTrace(intervals=((-math.inf, math.inf),))
    InitialTrace(intervals=((0.0, 1.0), (2.0, 3.0)), atoms=((5.0, 1.0),))
    with pytest.raises(ValueError):
        InitialTrace(intervals=((1.0, 0.0),))
    with pytest.raises(ValueError):
        InitialTrace(intervals=((0.0, 2.0), (1.0, 3.0)))  # overlap
    with pytest.raises(ValueError):
        InitialTrace(intervals=((0.0, 1.0),), atoms=((0.5, 1.0),))  # atom in Lambda
    with pytest.raises(ValueError):
        InitialTrace(atoms=((0.0, -1.0),))
    assert InitialTrace().is_empty()


def test_config_validation():
    g = Grid(-1.0, 0.1, 20)
    with pytest.raises(ValueError):
        MfeConfig(g, 0.0, 0.001)
    with pytest.raises(StabilityViolation):
        MfeConfig(g, 0.01, 0.1)


def test_classify_integrability():
    full = InitialTrace(intervals=((-math.inf, math.inf),))
    assert mfe.classify_integrability(full, 0.0, 1.0) == "bounded"
    assert mfe.classify_integrability(full, 0.0, math.inf) == "unbounded"
    half = InitialTrace(intervals=((0.0, math.inf),))
    assert mfe.classify_integrability(half, -math.inf, 0.0) == "bounded"
    lattice = InitialTrace(atoms=((float(i), 1.0) for i in range(10)),
                           unbounded_atoms=True)
    assert mfe.classify_integrability(lattice, 0.0, math.inf) == "unbounded"
    assert mfe.classify_integrability(lattice, 0.0, 100.0) == "bounded"


def test_full_line_matches_self_similar_solution():
    # Lambda = R gives the space-constant maximal solution v = 2/(c t)
    cfg = _cfg(dx=0.04)
    trace = InitialTrace(intervals=((-math.inf, math.inf),))
    for t in (0.02, 0.05, 0.1):
        states, _ = mfe.solve(trace, C, None, cfg, sample_times=[t])
        mid = states[0].values[cfg.grid.n_cells // 2]
        assert mid == pytest.approx(2.0 / (C * t), rel=0.01)


def test_translation_identity_on_shifted_grid():
    # v solved for Lambda + s on a grid shifted by s is the same field; the
    # identity only holds when the grid moves with the trace
    s = 0.731
    cfg0 = _cfg(lo=-4.0, hi=4.0, dx=0.04)
    n = cfg0.grid.n_cells
    cfg1 = MfeConfig(Grid(-4.0 + s, 0.04, n), cfg0.t_floor, cfg0.dt)
    tr0 = InitialTrace(intervals=((-1.0, 1.0),))
    tr1 = InitialTrace(intervals=((-1.0 + s, 1.0 + s),))
    st0, _ = mfe.solve(tr0, C, None, cfg0, sample_times=[0.1])
    st1, _ = mfe.solve(tr1, C, None, cfg1, sample_times=[0.1])
    np.testing.assert_allclose(st0[0].values, st1[0].values, atol=1e-10)


def test_reflection_identity():
    cfg = _cfg(lo=-4.0, hi=4.0, dx=0.04)
    tr = InitialTrace(intervals=((-1.5, 0.5),))
    trr = InitialTrace(intervals=((-0.5, 1.5),))
    st, _ = mfe.solve(tr, C, None, cfg, sample_times=[0.1])
    str_, _ = mfe.solve(trr, C, None, cfg, sample_times=[0.1])
    np.testing.assert_allclose(st[0].values, str_[0].values[::-1], atol=1e-10)


def test_scaling_identity():
    # v(t, x; a*Lambda) = (1/a^2) v(t/a^2, x/a; Lambda) for the same c
    a = 2.0
    cfg1 = _cfg(lo=-4.0, hi=4.0, dx=0.02, t_floor=0.0025)
    cfg2 = _cfg(lo=-8.0, hi=8.0, dx=0.04, t_floor=0.01)
    tr1 = InitialTrace(intervals=((-0.5, 0.5),))
    tr2 = InitialTrace(intervals=((-1.0, 1.0),))
    t = 0.08
    st1, _ = mfe.solve(tr1, C, None, cfg1, sample_times=[t])
    st2, _ = mfe.solve(tr2, C, None, cfg2, sample_times=[a**2 * t])
    # compare at matching physical points x2 = a * x1
    v1 = st1[0].values
    v2 = st2[0].values
    np.testing.assert_allclose(v2, v1 / a**2, rtol=0.01, atol=1e-6)


def test_cap_invariant_and_blowup_guard():
    cfg = _cfg(dx=0.04)
    trace = InitialTrace(intervals=((-1.0, 1.0),))
    ts = [0.02, 0.05, 0.2]
    states, _ = mfe.solve(trace, C, None, cfg, sample_times=ts)
    for st in states:
        assert np.all(st.values <= 2.0 / (C * st.time) * (1 + 1e-9))
    # a field above the maximal solution must be rejected
    bad = mfe.MfeState(0.1, np.full(cfg.grid.n_cells, 2.0 / (C * 0.1) * 1.5),
                       cfg.grid)
    with pytest.raises(BlowUp):
        mfe._advance(bad, C, 0.2, cfg)


def test_atom_initialization():
    cfg = _cfg(dx=0.04)
    trace = InitialTrace(atoms=((0.0, 1.0),))
    st = mfe.init_at_floor(trace, C, cfg.grid, cfg.t_floor)
    # heat bump integrates to ~ the weight when it stays under the cap...
    assert st.values.max() <= 2.0 / (C * cfg.t_floor)
    assert st.values.max() > 0
    # ...and is centered on the atom
    assert abs(cfg.grid.centers[np.argmax(st.values)]) < cfg.grid.dx


def test_t_floor_convergence():
    # deep inside Lambda the solution at fixed t is insensitive to the
    # entrance floor; near the Lambda edge it converges at rate ~sqrt(floor),
    # so successive halvings must contract the window integral differences
    trace = InitialTrace(intervals=((-1.0, 1.0),))
    t = 0.1
    centers, integrals = [], []
    for tf in (0.02, 0.01, 0.005):
        cfg = _cfg(dx=0.04, t_floor=tf)
        states, _ = mfe.solve(trace, C, None, cfg, sample_times=[t])
        centers.append(states[0].values[cfg.grid.n_cells // 2])
        integrals.append(mfe.integral_over(states[0], -1.0, 1.0))
    assert abs(centers[0] - centers[2]) / centers[2] < 1e-3
    d1 = abs(integrals[1] - integrals[0])
    d2 = abs(integrals[2] - integrals[1])
    assert d2 < 0.9 * d1


def test_integral_over():
    cfg = _cfg(dx=0.04)
    st = mfe.MfeState(0.1, np.ones(cfg.grid.n_cells), cfg.grid)
    assert mfe.integral_over(st, -1.0, 1.0) == pytest.approx(2.0, rel=1e-9)
    with pytest.raises(Exception):
        mfe.integral_over(st, -100.0, 0.0)


def test_v_script_decreases_in_gap():
    # time-space mass of v^2 outside a window shrinks as the window widens
    cfg = _cfg(lo=-10.0, hi=10.0, dx=0.04, t_floor=0.01)
    trace = InitialTrace(intervals=((-1.0, 1.0),))
    vals = [mfe.v_script(trace, C, -1.0 - g, 1.0 + g, 0.5, cfg)
            for g in (1.0, 2.0, 4.0)]
    assert vals[0] > vals[1] > vals[2] >= 0.0


def test_half_line_decay_fit_stable():
    t = 0.25
    c1 = mfe.half_line_decay_fit(C, t, _cfg(lo=-6.0, hi=6.0, dx=0.04))
    c2 = mfe.half_line_decay_fit(C, t, _cfg(lo=-6.0, hi=6.0, dx=0.02))
    assert c1 > 0
    assert abs(c1 - c2) / c1 < 0.1

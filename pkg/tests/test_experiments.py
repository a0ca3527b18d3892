import math

import numpy as np
import pytest

from sbbm import experiments, particle
from sbbm.local_time import LocalTimeEstimatorConfig
from sbbm.mechanisms import BranchingSpec, law
from sbbm.particle import SimConfig

COALESCING = BranchingSpec(0.0, 1.0, law("ordinary", p0=1.0), law("catalytic", q1=1.0))


def _cfg(**kw):
    base = dict(
        dt=0.0025, horizon=0.1, estimator=LocalTimeEstimatorConfig("band", 0.1),
        seed=0,
    )
    base.update(kw)
    return SimConfig(**base)


def _chain_cfg():
    # adaptive long jumps while all pairs are far from contact, so every
    # replica reaches absorption well within the (enormous) horizon
    return _cfg(horizon=1e10, adaptive_dt=True, adaptive_dt_max=1e9,
                stop_count=1)


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_chain_deterministic_q0():
    # q0 = 1: every catalytic event removes a pair, path 4 -> 2 -> 0
    rep = experiments.chain_absorption_test(
        law("catalytic", q0=1.0), 4, 25, _chain_cfg()
    )
    assert rep["absorbed_fraction"] == 1.0
    assert all(p == [4, 2, 0] for p in rep["paths"])
    assert rep["p_value"] == 1.0


def test_chain_deterministic_q1():
    # q1 = 1: coalescing decrement, path 3 -> 2 -> 1, absorbed at 1
    rep = experiments.chain_absorption_test(
        law("catalytic", q1=1.0), 3, 25, _chain_cfg()
    )
    assert rep["absorbed_fraction"] == 1.0
    assert all(p == [3, 2, 1] for p in rep["paths"])


def test_chain_q0q3_statistics():
    # offspring counts at catalytic events follow q; absorption is a.s.
    rep = experiments.chain_absorption_test(
        law("catalytic", q0=0.5, q3=0.5), 4, 150, _chain_cfg()
    )
    assert rep["absorbed_fraction"] == 1.0
    assert rep["pooled_transitions"] > 400
    assert rep["p_value"] > 0.01
    # transitions only ever change the count by -2 or +1
    assert set(b - a for a, b in rep["transitions"]) <= {-2, 1}


def test_martingale_scan_coalescing():
    g = particle.smooth_bump(3.0)
    rep = experiments.martingale_scan(
        COALESCING, g, [0.0, 0.1, -0.1], [0.05, 0.1], 400, _cfg()
    )
    assert len(rep) == 2
    for r in rep:
        assert r["ok"]
        assert r["se"] > 0


def test_supermartingale_scan_bounds():
    rep = experiments.supermartingale_scan(
        COALESCING, [0.0, 0.05, -0.05], [0.05, 0.1], 300, _cfg()
    )
    for r in rep:
        assert r["mass_ok"]
        assert r["lt_ok"]
        assert r["mass_bound"] == 3
        assert r["lt_bound"] == pytest.approx(6.0)  # 2n / Psi'(0+)


def test_cdi_scan_shapes_and_determinism():
    cfg = _cfg(seed=21)
    res = experiments.cdi_ratio_scan(
        40, 0.0, 1.0, [0.08, 0.04], COALESCING, cfg, 60
    )
    assert res.times == (0.08, 0.04)
    assert len(res.ratios) == 2
    assert all(v > 0 for v in res.mfe_integrals)
    assert all(se > 0 for se in res.counts_se)
    res2 = experiments.cdi_ratio_scan(
        40, 0.0, 1.0, [0.08, 0.04], COALESCING, cfg, 60
    )
    assert res.ratios == res2.ratios


def test_cdi_negative_control_has_power():
    # with catalytic interaction off (oracle mode) counts stay ~n while the
    # mean-field integral decays like 2/(c t) * |U|; the ratio must collapse
    control = BranchingSpec(
        0.0, 0.0, law("ordinary", p0=1.0), law("catalytic", q1=1.0),
        oracle_mode=True,
    )
    cfg = _cfg(seed=5)
    res = experiments.cdi_ratio_scan(
        40, 0.0, 1.0, [0.04, 0.02], control, cfg, 40, mfe_psi_prime0=1.0
    )
    # counts stay near n while the integral grows like 2|U|/(c t), so the
    # ratio at the smallest scan time falls far out of the [0.7, 1.3] band
    assert res.ratios[-1] < 0.5


def test_blowup_probe_monotone_in_lattice_length():
    spec = COALESCING
    cfg = _cfg(seed=9, dt=0.0025)
    out = experiments.blowup_probe(
        [4.0, 8.0], 0.25, 0.0, 100.0, [10], 0.02, spec, cfg, 30
    )
    f4 = out[4.0][10]
    f8 = out[8.0][10]
    assert 0.0 <= f4 <= f8 <= 1.0
    assert f8 > 0.0

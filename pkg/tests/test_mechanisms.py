import math

import numpy as np
import pytest

from sbbm.mechanisms import (
    BranchingSpec,
    ForbiddenMass,
    NotAProbability,
    OffspringLaw,
    ParityPreserving,
    SupercriticalCatalytic,
    derived_constants,
    diagnose,
    kappa,
    law,
    phi_eval,
    psi_eval,
    theta,
    validate,
    z_star,
)

COALESCING = BranchingSpec(0.0, 1.0, law("ordinary", p0=1.0), law("catalytic", q1=1.0))
Q03 = BranchingSpec(0.0, 1.0, law("ordinary", p0=1.0), law("catalytic", q0=0.5, q3=0.5))
FULL = BranchingSpec(0.5, 1.0, law("ordinary", p0=0.5, p2=0.5), law("catalytic", q1=1.0))


def test_law_builder():
    q = law("catalytic", q0=0.5, q3=0.5)
    assert q.probs == (0.5, 0.0, 0.0, 0.5)
    assert q.mean == 1.5
    assert q.has_odd_mass()


def test_cdf_terminates_at_one():
    q = law("catalytic", q0=0.3, q1=0.7)
    c = q.cdf()
    assert c[-1] == 1.0
    assert np.all(np.diff(c) >= 0)


def test_validate_rejects_non_probability():
    bad = BranchingSpec(0.0, 1.0, law("ordinary", p0=1.0),
                        OffspringLaw((0.5, 0.6), "catalytic"))
    with pytest.raises(NotAProbability):
        validate(bad)
    bad2 = BranchingSpec(0.0, 1.0, law("ordinary", p0=1.0),
                         OffspringLaw((-0.1, 1.1), "catalytic"))
    with pytest.raises(NotAProbability):
        validate(bad2)


def test_validate_rejects_supercritical_catalytic():
    # sum k q_k = 3 >= 2
    bad = BranchingSpec(0.0, 1.0, law("ordinary", p0=1.0), law("catalytic", q3=1.0))
    with pytest.raises(SupercriticalCatalytic):
        validate(bad)


def test_validate_rejects_forbidden_mass():
    # q_2 > 0 would make "a pair is replaced by 2" a null event
    bad = BranchingSpec(0.0, 1.0, law("ordinary", p0=1.0),
                        law("catalytic", q0=0.5, q2=0.5))
    with pytest.raises(ForbiddenMass):
        validate(bad)
    # same convention on p_1
    bad2 = BranchingSpec(1.0, 1.0, law("ordinary", p1=1.0), law("catalytic", q1=1.0))
    with pytest.raises(ForbiddenMass):
        validate(bad2)


def test_parity_preserving_raises_unless_allowed():
    annihilating = BranchingSpec(0.0, 1.0, law("ordinary", p0=1.0),
                                 law("catalytic", q0=1.0))
    with pytest.raises(ParityPreserving):
        validate(annihilating)
    allowed = BranchingSpec(0.0, 1.0, law("ordinary", p0=1.0),
                            law("catalytic", q0=1.0), allow_parity_preserving=True)
    with pytest.warns(UserWarning):
        validate(allowed)


def test_diagnose_lists_all_violations():
    bad = BranchingSpec(0.0, 1.0, law("ordinary", p0=1.0),
                        OffspringLaw((0.2, 0.0, 0.5, 0.5), "catalytic"))
    kinds = {k for k, _ in diagnose(bad)}
    assert NotAProbability in kinds


def test_phi_psi_vanish_at_zero():
    for spec in (COALESCING, Q03, FULL):
        assert phi_eval(spec, 0.0) == 0.0
        assert psi_eval(spec, 0.0) == 0.0


def test_coalescing_constants():
    c = derived_constants(COALESCING)
    assert c.z_star == pytest.approx(1.0, abs=1e-10)
    assert c.psi_prime0 == pytest.approx(1.0)
    assert c.lambda_c == pytest.approx(1.0)
    assert c.lambda_o == 0.0
    assert c.phi_prime0 == 0.0


def test_q03_z_star_against_root_oracle():
    # Psi(z) = 0  <=>  0.5 + 0.5 w^3 - w^2 = 0 with w = 1 - z; the relevant
    # root in w in [-1, 0] gives z* = 1 - w.  Computed via numpy.roots.
    roots = np.roots([0.5, -1.0, 0.0, 0.5])
    w = [r.real for r in roots if abs(r.imag) < 1e-12 and -1.0 <= r.real <= 0.0]
    assert len(w) == 1
    expected = 1.0 - w[0]
    assert z_star(Q03) == pytest.approx(expected, abs=1e-10)
    assert abs(psi_eval(Q03, z_star(Q03))) <= 1e-10


def test_full_spec_constants():
    c = derived_constants(FULL)
    assert c.lambda_o == pytest.approx(0.5)  # beta_o * mean p = 0.5 * 1
    assert c.phi_prime0 == pytest.approx(0.0)  # beta_o - lambda_o
    assert c.psi_prime0 == pytest.approx(1.0)


def test_mechanism_bounds_on_grid():
    # -lambda_o z <= Phi'(0+) z <= Phi(z) <= beta_o z  and
    # 0 <= Psi(z) <= 2 beta_c z  on [0, z*]
    rng = np.random.default_rng(7)
    for _ in range(20):
        beta_o = float(rng.uniform(0.0, 2.0))
        beta_c = float(rng.uniform(0.1, 3.0))
        # dyadic masses sum to 1 exactly in binary floating point
        p0 = rng.integers(20, 64) / 64.0
        p = OffspringLaw((p0, 0.0, 1.0 - p0), "ordinary")
        q1 = rng.integers(33, 64) / 64.0
        q = OffspringLaw((1.0 - q1, q1), "catalytic")
        spec = BranchingSpec(beta_o, beta_c, p, q)
        validate(spec)
        c = derived_constants(spec)
        z = np.linspace(0.0, c.z_star, 1000)
        phi = phi_eval(spec, z)
        psi = psi_eval(spec, z)
        tol = 1e-12
        assert np.all(-c.lambda_o * z <= c.phi_prime0 * z + tol)
        assert np.all(c.phi_prime0 * z <= phi + tol)
        assert np.all(phi <= beta_o * z + tol)
        assert np.all(psi >= -tol)
        assert np.all(psi <= 2.0 * beta_c * z + tol)


def test_theta_values():
    assert theta(0.0) == 1.0
    assert theta(0.5) == pytest.approx(-math.log(0.5) / 0.5)
    # theta is increasing on (0, 1) and -> 1 as gamma -> 0
    gs = [0.2, 0.1, 0.05, 0.01]
    vals = [theta(g) for g in gs]
    assert vals == sorted(vals, reverse=True)
    assert vals[-1] == pytest.approx(1.0, abs=0.01)


def test_kappa_range_and_limit():
    for spec in (COALESCING, Q03, FULL):
        prev = 0.0
        for g in (0.2, 0.1, 0.05, 0.01):
            k = kappa(spec, g)
            assert 0.0 <= k <= 1.0
            assert k >= prev - 1e-12  # closer to 1 as gamma shrinks
            prev = k
        assert kappa(spec, 0.01) == pytest.approx(1.0, abs=0.05)


def test_validate_is_idempotent():
    validate(COALESCING)
    validate(COALESCING)

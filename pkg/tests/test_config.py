import json
import math

import pytest

from sbbm.config import ParseError, ValidationError, parse_config

GOOD_INI = """
[mechanism]
beta_o = 0.5
beta_c = 2.0
p = 0.5 0 0.5
q = 0 1

[simulation]
dt = 0.0025
horizon = 0.5
eps = 0.1
positions = 0.0 0.5 1.0
replicas = 10
seed = 7

[spde]
x_min = -3.0
dx = 0.02
n_cells = 300
initial = indicator 0.5 -1 1
horizon = 0.25

[mfe]
lambda = -inf:0 1:2
atoms = 5:1.0
t_floor = 0.01
horizon = 0.2

[output]
formats = csv json
"""


def test_parse_ini_roundtrip():
    rc = parse_config(GOOD_INI)
    assert rc.spec.beta_o == 0.5
    assert rc.spec.q.probs == (0.0, 1.0)
    assert rc.sim.dt == 0.0025
    assert rc.sim.seed == 7
    assert rc.sim_positions == (0.0, 0.5, 1.0)
    assert rc.sim_replicas == 10
    assert rc.spde_cfg.grid.n_cells == 300
    assert rc.spde_initial == ("indicator", 0.5, -1.0, 1.0)
    assert rc.spde_horizon == 0.25
    assert rc.trace.intervals == ((-math.inf, 0.0), (1.0, 2.0))
    assert rc.trace.atoms == ((5.0, 1.0),)
    assert rc.output["formats"] == ["csv", "json"]


def test_parse_json_equivalent():
    data = {
        "mechanism": {"beta_o": 0.5, "beta_c": 2.0, "p": "0.5 0 0.5", "q": "0 1"},
        "simulation": {"dt": 0.0025, "eps": 0.1, "seed": 7},
    }
    rc = parse_config(json.dumps(data))
    assert rc.spec.beta_c == 2.0
    assert rc.sim.seed == 7


def test_unknown_section_rejected():
    with pytest.raises(ParseError, match="unknown section"):
        parse_config("[mystery]\nx = 1\n")


def test_unknown_key_rejected():
    with pytest.raises(ParseError, match="unknown key"):
        parse_config("[mechanism]\nq = 0 1\nbanana = 2\n")


def test_malformed_ini_reports_line():
    with pytest.raises(ParseError, match="line"):
        parse_config("[mechanism\nq = 0 1\n")


def test_malformed_json_reports_position():
    with pytest.raises(ParseError, match="line"):
        parse_config('{"mechanism": {"q": "0 1",}}')


def test_mechanism_assumption_violations_are_validation_errors():
    # mass on q_2 is forbidden by convention
    with pytest.raises(ValidationError, match="ForbiddenMass"):
        parse_config("[mechanism]\nq = 0 0 1\n")
    # supercritical catalytic law
    with pytest.raises(ValidationError, match="Supercritical"):
        parse_config("[mechanism]\nq = 0 0 0 1\n")
    # parity-preserving law without the override
    with pytest.raises(ValidationError, match="Parity"):
        parse_config("[mechanism]\nq = 1\n")
    # ...and with it, a warning instead
    with pytest.warns(UserWarning):
        parse_config("[mechanism]\nq = 1\nallow_parity_preserving = true\n")


def test_bad_values_are_parse_errors():
    with pytest.raises(ParseError):
        parse_config("[mechanism]\nq = 0 1\nbeta_c = fast\n")
    with pytest.raises(ParseError):
        parse_config("[simulation]\ndt = -0.01\n")
    with pytest.raises(ParseError):
        parse_config("[simulation]\ndt = 0.5\neps = 0.1\n")  # dt > eps^2/4
    with pytest.raises(ParseError):
        parse_config("[spde]\ndx = 0.02\ndt = 0.01\n")  # dt > dx^2/2
    with pytest.raises(ParseError):
        parse_config("[mfe]\nlambda = 0:1:2\n")
    with pytest.raises(ParseError):
        parse_config("[output]\nformats = yaml\n")


def test_missing_q_is_parse_error():
    with pytest.raises(ParseError, match="q offspring law"):
        parse_config("[mechanism]\nbeta_c = 1\n")

"""Run configuration: INI-style sections (or the same schema as JSON).

The documented format is key=value lines under [section] headers; a JSON
object {"section": {"key": value}} is accepted as an alternative encoding.
Unknown sections or keys are rejected.  Mechanism assumptions are validated
at parse time through :func:`sbbm.mechanisms.validate`.
"""

from __future__ import annotations

import configparser
import json
import math
from dataclasses import dataclass, field

from .local_time import LocalTimeEstimatorConfig
from .mechanisms import BranchingSpec, MechanismError, OffspringLaw, validate
from .mfe import InitialTrace, MfeConfig
from .particle import SimConfig
from .spde import Grid, SpdeConfig


class ParseError(ValueError):
    """Malformed configuration text or value."""


class ValidationError(ValueError):
    """Well-formed configuration violating a model assumption."""


_SCHEMA = {
    "mechanism": {
        "beta_o", "beta_c", "p", "q", "allow_parity_preserving", "oracle_mode",
    },
    "simulation": {
        "dt", "horizon", "eps", "estimator", "bridge_nodes", "cap", "replicas",
        "seed", "positions", "record_every", "adaptive_dt", "adaptive_dt_max",
        "stop_count",
    },
    "spde": {
        "x_min", "dx", "n_cells", "boundary", "dt", "replicas", "seed",
        "initial", "horizon",
    },
    "mfe": {
        "lambda", "atoms", "unbounded_atoms", "t_floor", "dt", "x_min", "dx",
        "n_cells", "horizon",
    },
    "experiment": {
        "scan", "window", "times", "thresholds", "points", "n", "g_half_width",
        "initial_count", "lattice_lengths", "spacing", "t",
    },
    "output": {"directory", "formats"},
}


def _floats(s):
    try:
        return [float(tok) for tok in str(s).replace(",", " ").split()]
    except ValueError as e:
        raise ParseError(f"expected a list of numbers, got {s!r}") from e


def _float(s, key, positive=False):
    try:
        v = float(s)
    except (TypeError, ValueError) as e:
        raise ParseError(f"{key}: expected a number, got {s!r}") from e
    if positive and v <= 0:
        raise ParseError(f"{key}: must be positive, got {v}")
    return v


def _int(s, key):
    try:
        return int(str(s))
    except (TypeError, ValueError) as e:
        raise ParseError(f"{key}: expected an integer, got {s!r}") from e


def _bool(s, key):
    if isinstance(s, bool):
        return s
    t = str(s).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ParseError(f"{key}: expected a boolean, got {s!r}")


def _endpoint(tok):
    t = tok.strip().lower()
    if t in ("inf", "+inf"):
        return math.inf
    if t == "-inf":
        return -math.inf
    return _float(tok, "interval endpoint")


def _pairs(s, key):
    """Parse 'a:b c:d' into [(a, b), (c, d)]."""
    out = []
    for tok in str(s).split():
        parts = tok.split(":")
        if len(parts) != 2:
            raise ParseError(f"{key}: expected colon-separated pairs, got {tok!r}")
        out.append((_endpoint(parts[0]), _endpoint(parts[1])))
    return out


@dataclass
class RunConfig:
    """Parsed and validated configuration; sections may be absent (None)."""

    spec: BranchingSpec | None = None
    sim: SimConfig | None = None
    sim_positions: tuple = ()
    sim_replicas: int = 1
    spde_cfg: SpdeConfig | None = None
    spde_initial: object = None
    spde_horizon: float | None = None
    mfe_cfg: MfeConfig | None = None
    trace: InitialTrace | None = None
    mfe_horizon: float | None = None
    experiment: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def _to_sections(text: str) -> dict:
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}")
        if not isinstance(data, dict) or not all(
            isinstance(v, dict) for v in data.values()
        ):
            raise ParseError("JSON config must be an object of section objects")
        return {
            sec: {k: v for k, v in body.items()} for sec, body in data.items()
        }
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as e:
        line = getattr(e, "lineno", "?")
        raise ParseError(f"line {line}: {e.message.splitlines()[0]}")
    return {sec: dict(cp.items(sec)) for sec in cp.sections()}


def parse_config(text: str) -> RunConfig:
    sections = _to_sections(text)
    for sec, body in sections.items():
        if sec not in _SCHEMA:
            raise ParseError(f"unknown section [{sec}]")
        unknown = set(body) - _SCHEMA[sec]
        if unknown:
            raise ParseError(f"unknown key(s) in [{sec}]: {', '.join(sorted(unknown))}")

    rc = RunConfig(raw=sections)

    if "mechanism" in sections:
        m = sections["mechanism"]
        p = _floats(m.get("p", "1"))
        q = _floats(m.get("q", ""))
        if not q:
            raise ParseError("mechanism: q offspring law is required")
        spec = BranchingSpec(
            beta_o=_float(m.get("beta_o", 0.0), "beta_o"),
            beta_c=_float(m.get("beta_c", 1.0), "beta_c"),
            p=OffspringLaw(tuple(p), "ordinary"),
            q=OffspringLaw(tuple(q), "catalytic"),
            allow_parity_preserving=_bool(
                m.get("allow_parity_preserving", False), "allow_parity_preserving"),
            oracle_mode=_bool(m.get("oracle_mode", False), "oracle_mode"),
        )
        try:
            validate(spec)
        except MechanismError as e:
            raise ValidationError(f"{type(e).__name__}: {e}") from e
        rc.spec = spec

    if "simulation" in sections:
        s = sections["simulation"]
        eps = _float(s.get("eps", 0.05), "eps", positive=True)
        est = LocalTimeEstimatorConfig(
            method=str(s.get("estimator", "band")),
            epsilon=eps,
            quadrature_nodes=_int(s.get("bridge_nodes", 16), "bridge_nodes"),
        )
        try:
            rc.sim = SimConfig(
                dt=_float(s.get("dt", eps**2 / 4), "dt", positive=True),
                horizon=_float(s.get("horizon", 1.0), "horizon"),
                estimator=est,
                population_cap=_int(s.get("cap", 100_000), "cap"),
                seed=_int(s.get("seed", 0), "seed"),
                record_every=_int(s.get("record_every", 0), "record_every"),
                adaptive_dt=_bool(s.get("adaptive_dt", False), "adaptive_dt"),
                adaptive_dt_max=_float(s.get("adaptive_dt_max", 1.0), "adaptive_dt_max"),
                stop_count=_int(s.get("stop_count", -1), "stop_count"),
            )
        except ValueError as e:
            raise ParseError(f"simulation: {e}") from e
        rc.sim_positions = tuple(_floats(s.get("positions", "")))
        rc.sim_replicas = _int(s.get("replicas", 1), "replicas")

    if "spde" in sections:
        s = sections["spde"]
        dx = _float(s.get("dx", 0.02), "dx", positive=True)
        try:
            grid = Grid(
                x_min=_float(s.get("x_min", -3.0), "x_min"),
                dx=dx,
                n_cells=_int(s.get("n_cells", 300), "n_cells"),
                boundary=str(s.get("boundary", "dirichlet_zero")),
            )
            rc.spde_cfg = SpdeConfig(
                grid=grid,
                dt=_float(s.get("dt", dx**2 / 2), "dt", positive=True),
                seed=_int(s.get("seed", 0), "seed"),
                replicas=_int(s.get("replicas", 1), "replicas"),
            )
        except ValueError as e:
            raise ParseError(f"spde: {e}") from e
        init = s.get("initial", "0")
        toks = str(init).split()
        if toks and toks[0] == "indicator":
            if len(toks) != 4:
                raise ParseError("spde: initial indicator needs 'indicator eps lo hi'")
            rc.spde_initial = ("indicator", _float(toks[1], "eps"),
                              _float(toks[2], "lo"), _float(toks[3], "hi"))
        else:
            rc.spde_initial = _float(init, "initial")
        rc.spde_horizon = _float(s.get("horizon", 0.1), "horizon")

    if "mfe" in sections:
        s = sections["mfe"]
        dx = _float(s.get("dx", 0.02), "dx", positive=True)
        try:
            grid = Grid(
                x_min=_float(s.get("x_min", -4.0), "x_min"),
                dx=dx,
                n_cells=_int(s.get("n_cells", 400), "n_cells"),
            )
            rc.mfe_cfg = MfeConfig(
                grid=grid,
                t_floor=_float(s.get("t_floor", 0.01), "t_floor", positive=True),
                dt=_float(s.get("dt", dx**2 / 2), "dt", positive=True),
            )
            rc.trace = InitialTrace(
                intervals=tuple(_pairs(s.get("lambda", ""), "lambda")),
                atoms=tuple(_pairs(s.get("atoms", ""), "atoms")),
                unbounded_atoms=_bool(s.get("unbounded_atoms", False), "unbounded_atoms"),
            )
        except ParseError:
            raise
        except ValueError as e:
            raise ParseError(f"mfe: {e}") from e
        rc.mfe_horizon = _float(s.get("horizon", 0.1), "horizon")

    if "experiment" in sections:
        e = sections["experiment"]
        exp = dict(e)
        if "window" in e:
            w = _pairs(e["window"], "window")
            if len(w) != 1:
                raise ParseError("experiment: window must be a single lo:hi pair")
            exp["window"] = w[0]
        for key in ("times", "thresholds", "points", "lattice_lengths"):
            if key in e:
                exp[key] = _floats(e[key])
        for key in ("n", "initial_count"):
            if key in e:
                exp[key] = _int(e[key], key)
        for key in ("g_half_width", "spacing", "t"):
            if key in e:
                exp[key] = _float(e[key], key)
        rc.experiment = exp

    if "output" in sections:
        o = dict(sections["output"])
        fmts = str(o.get("formats", "csv")).split()
        bad = set(fmts) - {"csv", "json"}
        if bad:
            raise ParseError(f"output: unknown format(s) {', '.join(sorted(bad))}")
        o["formats"] = fmts
        rc.output = o

    return rc

"""Monte Carlo engine for the self-catalytic branching particle system.

A population of labelled particles diffuses as independent Brownian motions;
single particles branch at rate ``beta_o`` (offspring law p) and unordered
pairs branch at rate ``beta_c/2`` with respect to their intersection local
time (offspring law q, children at the pair midpoint).  The inner stepping
loop lives in :mod:`sbbm.kernels`; this module owns the population state,
configuration, replica orchestration, and the martingale / embedded-chain
post-processing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .local_time import LocalTimeEstimatorConfig
from .mechanisms import BranchingSpec, OffspringLaw, derived_constants, validate
from .rng import bit_generator


class PopulationCapExceeded(RuntimeError):
    """A trajectory exceeded the configured population cap."""


class GridRangeExceeded(RuntimeError):
    """Particles left the tabulation range of a test function g."""


class TruncationLoss(ValueError):
    """Embedded-chain truncation level dropped more than 1e-9 row mass."""


EVENT_KINDS = {
    kernels.EV_ORDINARY: "ordinary",
    kernels.EV_CATALYTIC: "catalytic",
    kernels.EV_CONFLICT_ORDINARY: "conflict-ordinary",
    kernels.EV_CONFLICT_CATALYTIC: "conflict-catalytic",
}


@dataclass(frozen=True)
class Particle:
    label: int
    position: float


@dataclass(frozen=True)
class EventRecord:
    time: float
    kind: str  # see EVENT_KINDS values
    parent_labels: tuple
    offspring_count: int
    location: float
    count_after: int


@dataclass
class Population:
    """Particle system state at a fixed time, plus its running accumulators."""

    time: float
    positions: np.ndarray
    labels: np.ndarray
    next_label: int
    cumulative_local_time: float = 0.0
    discounted_local_time: float = 0.0
    event_log: list = field(default_factory=list)
    n_conflicts: int = 0

    @property
    def particles(self) -> list:
        return [Particle(int(l), float(x)) for l, x in zip(self.labels, self.positions)]

    def count(self, lo=-math.inf, hi=math.inf) -> int:
        return int(np.sum((self.positions >= lo) & (self.positions < hi)))

    def __len__(self):
        return len(self.positions)


@dataclass(frozen=True)
class TabulatedFunction:
    """Test function g with second derivative, tabulated on a uniform grid."""

    x0: float
    dx: float
    values: np.ndarray
    second_derivative: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=np.float64)
        idx = np.clip(
            np.floor((x - self.x0) / self.dx).astype(np.int64), 0, len(self.values) - 2
        )
        frac = (x - self.x0) / self.dx - idx
        return self.values[idx] + (self.values[idx + 1] - self.values[idx]) * frac


def smooth_bump(half_width: float = 1.0, n: int = 2001) -> TabulatedFunction:
    """The C^2 bump g(x) = (1 - (x/a)^2)^3 on |x| <= a, with its g''."""
    a = half_width
    x = np.linspace(-3.0 * a, 3.0 * a, n)
    u = x / a
    inside = np.abs(u) <= 1.0
    w = np.where(inside, 1.0 - u * u, 0.0)
    g = w**3
    gpp = np.where(inside, 6.0 * w * (5.0 * u * u - 1.0) / a**2, 0.0)
    return TabulatedFunction(float(x[0]), float(x[1] - x[0]), g, gpp)


@dataclass(frozen=True)
class SimConfig:
    dt: float
    horizon: float
    estimator: LocalTimeEstimatorConfig
    population_cap: int = 100_000
    seed: int = 0
    record_every: int = 0  # 0: record only endpoints
    windows: tuple = ()  # ((lo, hi), ...) half-open
    g: TabulatedFunction | None = None
    adaptive_dt: bool = False  # long jumps while no pair is near contact
    adaptive_dt_max: float = 1.0
    stop_count: int = -1  # stop early once the population is this small
    max_steps: int = 10**9

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")
        if (
            self.estimator.method == "band"
            and self.dt > self.estimator.epsilon**2 / 4 + 1e-15
        ):
            raise ValueError("band estimator requires dt <= eps^2/4")
        if self.population_cap < 1:
            raise ValueError("population_cap must be positive")


def init(positions) -> Population:
    """Fresh population at time 0; repeated positions are allowed."""
    pos = np.asarray(list(positions), dtype=np.float64)
    if not np.all(np.isfinite(pos)):
        raise ValueError("positions must be finite")
    return Population(
        time=0.0,
        positions=pos,
        labels=np.arange(len(pos), dtype=np.int64),
        next_label=len(pos),
    )


def _kernel_call(pop, spec, cfg, bitgen, horizon, record_every):
    consts = derived_constants(spec)
    est = cfg.estimator
    win = cfg.windows
    lo = np.array([w[0] for w in win], dtype=np.float64)
    hi = np.array([w[1] for w in win], dtype=np.float64)
    g = cfg.g
    return kernels.run_trajectory(
        bitgen,
        pop.positions,
        pop.labels,
        pop.next_label,
        pop.time,
        spec.beta_o,
        spec.beta_c,
        consts.phi_prime0,
        spec.p.cdf(),
        spec.q.cdf(),
        cfg.dt,
        horizon,
        est.epsilon,
        0 if est.method == "band" else 1,
        est.quadrature_nodes,
        cfg.population_cap,
        lo,
        hi,
        g is not None,
        g.x0 if g is not None else 0.0,
        g.dx if g is not None else 1.0,
        g.values if g is not None else None,
        g.second_derivative if g is not None else None,
        record_every,
        cfg.adaptive_dt,
        cfg.adaptive_dt_max,
        cfg.stop_count,
        cfg.max_steps,
    )


def _events_from(res) -> list:
    ev = res["ev"]
    out = []
    for i in range(len(ev["t"])):
        kind = EVENT_KINDS[int(ev["kind"][i])]
        par2 = int(ev["par2"][i])
        parents = (int(ev["par1"][i]),) if par2 < 0 else (int(ev["par1"][i]), par2)
        out.append(
            EventRecord(
                time=float(ev["t"][i]),
                kind=kind,
                parent_labels=parents,
                offspring_count=int(ev["k"][i]),
                location=float(ev["loc"][i]),
                count_after=int(ev["n_after"][i]),
            )
        )
    return out


def _advance(pop, spec, cfg, bitgen, horizon, record_every):
    res = _kernel_call(pop, spec, cfg, bitgen, horizon, record_every)
    if res["status"] == kernels.STATUS_CAP:
        raise PopulationCapExceeded(
            f"population exceeded cap {cfg.population_cap} at t={res['t']:.6g}"
        )
    if res["status"] == kernels.STATUS_GRID:
        raise GridRangeExceeded("particles left the tabulation range of g")
    new = Population(
        time=res["t"],
        positions=res["positions"],
        labels=res["labels"],
        next_label=res["next_label"],
        cumulative_local_time=pop.cumulative_local_time + res["cum_l"],
        discounted_local_time=pop.discounted_local_time + res["disc_l"],
        event_log=pop.event_log + _events_from(res),
        n_conflicts=pop.n_conflicts + res["n_conflicts"],
    )
    return new, res


def step(pop, spec, cfg, bitgen) -> Population:
    """Advance the population by a single time step of cfg.dt."""
    validate(spec)
    one = replace(cfg, max_steps=1, adaptive_dt=False)
    new, _ = _advance(pop, spec, one, bitgen, pop.time + cfg.dt, 0)
    return new


def run(pop, spec, cfg, bitgen=None):
    """Run a trajectory to cfg.horizon; returns (records dict, final Population).

    Records hold, per sample time: population size ``n``, window counts
    ``win``, test-function sums ``zg``/``zgpp``, per-interval local-time sums
    and the running accumulators.  Deterministic given (seed, config).
    """
    validate(spec)
    if bitgen is None:
        bitgen = bit_generator(cfg.seed, 0)
    new, res = _advance(pop, spec, cfg, bitgen, cfg.horizon, cfg.record_every)
    return res["rec"], new


def run_replicas(positions, spec, cfg, replicas, reducer):
    """Run independent replicas; replica r draws from (cfg.seed, r).

    ``reducer(records, population, replica_index)`` is called per replica in
    fixed order and its results returned as a list.
    """
    validate(spec)
    out = []
    for r in range(replicas):
        bg = bit_generator(cfg.seed, r)
        pop = init(positions)
        rec, final = run(pop, spec, cfg, bitgen=bg)
        out.append(reducer(rec, final, r))
    return out


def embedded_chain_matrix(q: OffspringLaw, truncation: int) -> np.ndarray:
    """Transition matrix of the total-count chain at catalytic events.

    With no ordinary branching the count sequence (i_m) at successive
    catalytic events is a Markov chain: P[i -> i-2+k] = q_k for i >= 2,
    and 0, 1 are absorbing.
    """
    K = int(truncation)
    kmax = len(q.probs) - 1
    if K < kmax:
        raise ValueError("truncation level below offspring support")
    P = np.zeros((K + 1, K + 1))
    P[0, 0] = 1.0
    P[1, 1] = 1.0
    for i in range(2, K + 1):
        for k, pk in enumerate(q.probs):
            j = i - 2 + k
            if j <= K:
                P[i, j] = pk
        # Rows within kmax-2 of the top lose the mass that jumps past K; that
        # loss is structural and the rows are left sub-stochastic.  Any
        # deficit elsewhere is a bug in the law and is rejected.
        if i - 2 + kmax <= K and P[i].sum() < 1.0 - 1e-9:
            raise TruncationLoss(
                f"row {i} keeps only mass {P[i].sum():.12f}; raise truncation"
            )
    return P


def martingale_functional(records, spec: BranchingSpec) -> np.ndarray:
    """Per-sample-time M_t^g from a recorded trajectory.

    M_t^g = e^{c t} Z_t(g) - 1/2 \\int_0^t e^{c s} Z_s(g'') ds
            + (Psi'(0+)/2) \\int_0^t e^{c s} sum_pairs g(X) dL_s,
    with c = Phi'(0+).  The first integral uses trapezoidal quadrature over
    the recorded samples; the local-time integral is accumulated inside the
    stepper at full step resolution.
    """
    consts = derived_constants(spec)
    c = consts.phi_prime0
    t = records["t"]
    w = np.exp(c * t)
    gpp_int = np.concatenate(
        [[0.0], np.cumsum(0.5 * (w[1:] * records["zgpp"][1:] + w[:-1] * records["zgpp"][:-1]) * np.diff(t))]
    )
    return w * records["zg"] - 0.5 * gpp_int + 0.5 * consts.psi_prime0 * records["wgdl"]


def catalytic_count_sequence(pop: Population, initial_count: int) -> list:
    """Total-count sequence at catalytic events, starting from the initial count."""
    seq = [initial_count]
    for ev in pop.event_log:
        if ev.kind == "catalytic":
            seq.append(ev.count_after)
    return seq

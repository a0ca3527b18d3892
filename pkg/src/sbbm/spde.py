"""Euler-Maruyama finite-difference solver for the dual SPDE.

The field solves  du = (1/2 u_xx - Phi(u)) dt + sqrt(Psi(u)) dW  on a uniform
grid, clamped to [0, z*].  The noise term per cell is
sqrt(max(Psi(u_i), 0)) * xi_i * sqrt(dt/dx) with iid standard Gaussians xi,
which is the cell average of space-time white noise.  Replica ensembles are
evaluated as a (replicas, n_cells) array advanced in lockstep from a single
per-ensemble stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mechanisms import BranchingSpec, derived_constants, phi_eval, psi_eval, validate
from .rng import bit_generator


class StabilityViolation(ValueError):
    pass


class OutOfRange(ValueError):
    pass


class OutOfGrid(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    x_min: float
    dx: float
    n_cells: int
    boundary: str = "dirichlet_zero"  # or "periodic"

    def __post_init__(self):
        if self.dx <= 0:
            raise ValueError("dx must be positive")
        if self.n_cells < 8:
            raise ValueError("need at least 8 cells")
        if self.boundary not in ("dirichlet_zero", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    @property
    def centers(self) -> np.ndarray:
        return self.x_min + self.dx * (np.arange(self.n_cells) + 0.5)

    @property
    def x_max(self) -> float:
        return self.x_min + self.dx * self.n_cells


@dataclass
class FieldState:
    time: float
    values: np.ndarray  # shape (n_cells,) or (replicas, n_cells)
    grid: Grid


@dataclass(frozen=True)
class SpdeConfig:
    grid: Grid
    dt: float
    seed: int = 0
    replicas: int = 1

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.dt > self.grid.dx**2 / 2 + 1e-15:
            raise StabilityViolation("dt must satisfy dt <= dx^2/2")


def default_grid(support_lo, support_hi, horizon, dx=0.02) -> Grid:
    """Domain covering the initial support plus a 6*sqrt(horizon) margin."""
    margin = 6.0 * math.sqrt(max(horizon, dx**2))
    lo = support_lo - margin
    n = max(8, int(math.ceil((support_hi - support_lo + 2 * margin) / dx)))
    return Grid(lo, dx, n)


def init_field(grid: Grid, f, spec: BranchingSpec | None = None, z_cap=None) -> FieldState:
    """Initial field from a descriptor f.

    f may be: a constant, a tabulated array of cell values, a callable of x,
    or a tuple descriptor ("indicator", eps, lo, hi) for eps*1_{(lo,hi)} and
    ("one_minus_exp", g) for 1 - e^{-g(x)}.
    """
    if z_cap is None:
        z_cap = derived_constants(spec).z_star if spec is not None else 1.0
    x = grid.centers
    if isinstance(f, tuple):
        kind = f[0]
        if kind == "indicator":
            _, eps, lo, hi = f
            vals = np.where((x > lo) & (x < hi), float(eps), 0.0)
        elif kind == "one_minus_exp":
            vals = 1.0 - np.exp(-np.asarray(f[1](x), dtype=np.float64))
        else:
            raise ValueError(f"unknown initial-datum descriptor {kind!r}")
    elif np.isscalar(f):
        vals = np.full(grid.n_cells, float(f))
    elif callable(f):
        vals = np.asarray(f(x), dtype=np.float64)
    else:
        vals = np.asarray(f, dtype=np.float64)
        if vals.shape != (grid.n_cells,):
            raise ValueError("tabulated initial datum must have one value per cell")
    if np.any(vals < 0) or np.any(vals > z_cap + 1e-12):
        raise OutOfRange(f"initial datum must take values in [0, {z_cap}]")
    return FieldState(0.0, np.minimum(vals, z_cap), grid)


def _laplacian(u, grid):
    lap = np.empty_like(u)
    if grid.boundary == "periodic":
        lap[..., :] = np.roll(u, 1, axis=-1) - 2.0 * u + np.roll(u, -1, axis=-1)
    else:  # ghost cells at 0
        lap[..., 1:-1] = u[..., :-2] - 2.0 * u[..., 1:-1] + u[..., 2:]
        lap[..., 0] = -2.0 * u[..., 0] + u[..., 1]
        lap[..., -1] = u[..., -2] - 2.0 * u[..., -1]
    return lap / grid.dx**2


def em_step(state, spec, cfg, gen, noise=None, z_cap=None, consts=None) -> FieldState:
    """One explicit Euler-Maruyama step; clamps the result to [0, z*].

    ``noise`` may supply the standard-Gaussian array (for shared-noise
    coupling); otherwise it is drawn from ``gen``.
    """
    if consts is None:
        consts = derived_constants(spec)
    if z_cap is None:
        z_cap = consts.z_star
    u = state.values
    if noise is None:
        noise = gen.standard_normal(u.shape)
    new = _laplacian(u, state.grid)
    new *= 0.5 * cfg.dt
    new += u
    if spec.beta_o != 0.0:
        new -= cfg.dt * phi_eval(spec, u)
    amp = psi_eval(spec, u)
    np.maximum(amp, 0.0, out=amp)
    np.sqrt(amp, out=amp)
    amp *= noise
    amp *= math.sqrt(cfg.dt / state.grid.dx)
    new += amp
    np.clip(new, 0.0, z_cap, out=new)
    return FieldState(state.time + cfg.dt, new, state.grid)


def run_field(state, spec, cfg, gen=None, horizon=None, sample_times=(), zero_noise=False):
    """Advance a field to ``horizon``; returns (snapshots, final state).

    Snapshots is a list of (time, values copy) at the requested sample times
    (hit on the step grid).  With ``zero_noise`` the scheme reduces to the
    deterministic semilinear heat equation.
    """
    validate(spec)
    if gen is None:
        gen = np.random.Generator(bit_generator(cfg.seed, 0))
    consts = derived_constants(spec)
    horizon = cfg_horizon = horizon if horizon is not None else max(sample_times)
    remaining = sorted(sample_times)
    snaps = []
    zero = np.zeros(state.values.shape) if zero_noise else None
    while state.time < horizon - 1e-12:
        state = em_step(state, spec, cfg, gen, noise=zero, consts=consts)
        while remaining and state.time >= remaining[0] - 1e-9:
            snaps.append((state.time, state.values.copy()))
            remaining.pop(0)
    return snaps, state


def ensemble(grid, f, spec, cfg, replicas=None) -> FieldState:
    """Replica ensemble as a (replicas, n_cells) field sharing one stream."""
    R = replicas if replicas is not None else cfg.replicas
    one = init_field(grid, f, spec)
    return FieldState(0.0, np.tile(one.values, (R, 1)), grid)


def sample_at(state, points) -> np.ndarray:
    """Linear interpolation between adjacent cell centers."""
    pts = np.asarray(points, dtype=np.float64)
    g = state.grid
    c0 = g.x_min + 0.5 * g.dx
    if np.any(pts < g.x_min) or np.any(pts > g.x_max):
        raise OutOfGrid("sample point outside the grid")
    s = np.clip((pts - c0) / g.dx, 0.0, g.n_cells - 1 - 1e-12)
    # snap to the nearest cell center so exact centers interpolate exactly
    idx = np.minimum(np.floor(s + 1e-9), g.n_cells - 2).astype(np.int64)
    frac = np.clip(s - idx, 0.0, 1.0)
    frac[frac < 1e-9] = 0.0
    frac[frac > 1.0 - 1e-9] = 1.0
    u = state.values
    return u[..., idx] * (1.0 - frac) + u[..., idx + 1] * frac


def heat_semigroup_at(f_vals, grid, t, points) -> np.ndarray:
    """Heat-kernel quadrature E_x[f(B_t)] for a tabulated initial datum."""
    pts = np.atleast_1d(np.asarray(points, dtype=np.float64))
    x = grid.centers
    diff = pts[:, None] - x[None, :]
    ker = np.exp(-(diff**2) / (2.0 * t)) / math.sqrt(2.0 * math.pi * t)
    return ker @ (np.asarray(f_vals) * grid.dx)


def mean_bound_check(spec, grid, f, cfg, t, points, replicas=None):
    """Monte Carlo mean of u_t(x) against the bound e^{lambda_o t} E_x[f(B_t)].

    Returns a list of dicts (point, mean, se, bound, z, ok); ok means the
    mean does not exceed the bound by more than 3 standard errors.
    """
    state = ensemble(grid, f, spec, cfg, replicas)
    gen = np.random.Generator(bit_generator(cfg.seed, 0))
    _, final = run_field(state, spec, cfg, gen=gen, horizon=t)
    samples = sample_at(final, points)  # (R, len(points))
    consts = derived_constants(spec)
    f0 = init_field(grid, f, spec).values
    bound = math.exp(consts.lambda_o * t) * heat_semigroup_at(f0, grid, t, points)
    out = []
    R = samples.shape[0]
    for i, x in enumerate(np.atleast_1d(points)):
        m = float(np.mean(samples[:, i]))
        se = float(np.std(samples[:, i], ddof=1) / math.sqrt(R))
        z = (m - bound[i]) / se if se > 0 else (0.0 if m <= bound[i] else math.inf)
        out.append(
            {"point": float(x), "mean": m, "se": se, "bound": float(bound[i]),
             "z": float(z), "ok": m <= bound[i] + 3 * se}
        )
    return out


def support_extent(state, threshold=1e-12):
    """(leftmost, rightmost) cell index with value > threshold, or None."""
    idx = np.nonzero(state.values > threshold)[-1]
    if len(idx) == 0:
        return None
    return int(idx.min()), int(idx.max())


def coupled_comparison_run(f_low, f_high, spec, cfg, horizon, sample_times):
    """Two runs sharing the identical noise array per step.

    Returns a list of (time, ordered_fraction) where ordered_fraction is the
    fraction of cells with u_low <= u_high + 1e-9, plus the two final states.
    Pathwise ordering under shared discrete noise is a diagnostic, not an
    asserted invariant; the distributional ordering is what the theory gives.
    """
    validate(spec)
    lo = init_field(cfg.grid, f_low, spec)
    hi = init_field(cfg.grid, f_high, spec)
    if np.any(lo.values > hi.values + 1e-15):
        raise ValueError("f_low must be <= f_high cell-wise")
    gen = np.random.Generator(bit_generator(cfg.seed, 0))
    consts = derived_constants(spec)
    remaining = sorted(sample_times)
    report = []
    while lo.time < horizon - 1e-12:
        xi = gen.standard_normal(lo.values.shape)
        lo = em_step(lo, spec, cfg, gen, noise=xi, consts=consts)
        hi = em_step(hi, spec, cfg, gen, noise=xi, consts=consts)
        while remaining and lo.time >= remaining[0] - 1e-9:
            frac = float(np.mean(lo.values <= hi.values + 1e-9))
            report.append((lo.time, frac))
            remaining.pop(0)
    return report, lo, hi

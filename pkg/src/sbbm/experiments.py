"""Paper-level experiments: CDI ratios, blow-up probes, martingale scans,
supermartingale bounds, and embedded-chain absorption statistics.

Every scan returns both its statistic and an uncertainty, and is reproducible
bit-for-bit for a fixed (seed, config).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from . import mfe, particle
from .mechanisms import derived_constants, validate
from .rng import bit_generator
from .spde import Grid


@dataclass(frozen=True)
class CdiScanResult:
    times: tuple  # strictly decreasing
    counts_mean: tuple
    counts_se: tuple
    mfe_integrals: tuple
    ratios: tuple

    def deviations(self):
        return tuple(abs(r - 1.0) for r in self.ratios)


def cdi_ratio_scan(n, u_lo, u_hi, times, spec, cfg, replicas, mfe_cfg=None,
                   mfe_psi_prime0=None):
    """Ratio of E Z_t(U) to the mean-field integral over U, per time.

    The n particles start equi-spaced in the dense region U = (u_lo, u_hi);
    the mean-field trace takes Lambda equal to that region with mu = 0.
    Times are scanned in decreasing order; the theorem predicts ratio -> 1
    as t decreases (while n stays large enough that finite-n bias is small).

    ``mfe_psi_prime0`` overrides the mean-field rate constant; needed for the
    interaction-off negative control, whose own Psi'(0+) is 0.
    """
    validate(spec)
    times = sorted(times, reverse=True)
    positions = u_lo + (u_hi - u_lo) * (np.arange(n) + 0.5) / n
    consts = derived_constants(spec)
    c_mfe = mfe_psi_prime0 if mfe_psi_prime0 is not None else consts.psi_prime0
    if c_mfe <= 0:
        raise ValueError("mean-field rate constant must be positive")

    run_cfg = replace(
        cfg,
        horizon=max(times),
        windows=((u_lo, u_hi),),
        record_every=1,
    )

    def reducer(rec, fin, r):
        # window count at each scan time (nearest recorded sample)
        idx = [int(np.argmin(np.abs(rec["t"] - t))) for t in times]
        return rec["win"][idx, 0]

    counts = np.asarray(
        particle.run_replicas(positions, spec, run_cfg, replicas, reducer),
        dtype=np.float64,
    )  # (replicas, len(times))
    means = counts.mean(axis=0)
    ses = counts.std(axis=0, ddof=1) / math.sqrt(replicas)

    if mfe_cfg is None:
        grid = Grid(u_lo - 2.0, 0.01, int((u_hi - u_lo + 4.0) / 0.01))
        mfe_cfg = mfe.MfeConfig(grid, t_floor=min(times) / 20.0, dt=grid.dx**2 / 2)
    trace = mfe.InitialTrace(intervals=((u_lo, u_hi),))
    states, _ = mfe.solve(trace, c_mfe, None, mfe_cfg, sample_times=times)
    integrals = {
        round(s.time, 10): mfe.integral_over(s, u_lo, u_hi) for s in states
    }
    ints = [integrals[round(t, 10)] for t in times]
    ratios = [m / v for m, v in zip(means, ints)]
    return CdiScanResult(
        times=tuple(times),
        counts_mean=tuple(float(m) for m in means),
        counts_se=tuple(float(s) for s in ses),
        mfe_integrals=tuple(float(v) for v in ints),
        ratios=tuple(float(r) for r in ratios),
    )


def blowup_probe(lattice_lengths, spacing, u_lo, u_hi, thresholds, t, spec, cfg,
                 replicas):
    """Exceedance frequencies of Z_t(U) over thresholds vs lattice truncation.

    Approximates an unbounded initial trace by lattices of increasing length;
    the window U = (u_lo, u_hi) overlaps the lattice.  Returns
    {length: {threshold: frequency}}.
    """
    validate(spec)
    out = {}
    for L in lattice_lengths:
        positions = np.arange(0.0, L, spacing)
        run_cfg = replace(cfg, horizon=t, windows=((u_lo, u_hi),), record_every=0)

        def reducer(rec, fin, r):
            return rec["win"][-1, 0]

        counts = np.asarray(
            particle.run_replicas(positions, spec, run_cfg, replicas, reducer)
        )
        out[L] = {thr: float(np.mean(counts > thr)) for thr in thresholds}
    return out


def martingale_scan(spec, g, positions, times, replicas, cfg):
    """Constancy of the martingale functional M_t^g over replicas.

    Returns a list of dicts (t, mean, se, z, ok); ok means the mean is within
    3 standard errors of M_0^g = Z_0(g).
    """
    validate(spec)
    run_cfg = replace(cfg, horizon=max(times), record_every=1, g=g)
    z0 = float(np.sum(g(np.asarray(positions))))

    def reducer(rec, fin, r):
        m = particle.martingale_functional(rec, spec)
        idx = [int(np.argmin(np.abs(rec["t"] - t))) for t in times]
        return m[idx]

    samples = np.asarray(
        particle.run_replicas(positions, spec, run_cfg, replicas, reducer)
    )  # (replicas, len(times))
    out = []
    for i, t in enumerate(times):
        mean = float(np.mean(samples[:, i]))
        se = float(np.std(samples[:, i], ddof=1) / math.sqrt(replicas))
        z = (mean - z0) / se if se > 0 else 0.0
        out.append({"t": float(t), "mean": mean, "se": se, "target": z0,
                    "z": float(z), "ok": abs(mean - z0) <= 3 * se})
    return out


def supermartingale_scan(spec, positions, times, replicas, cfg):
    """Discounted-mass and discounted-local-time bounds over replicas.

    Checks mean e^{Phi'(0+) t} Z_t(R) <= n + 3 se and the discounted pairwise
    local-time mean <= 2n / Psi'(0+) + 3 se at each sampled time.
    """
    validate(spec)
    consts = derived_constants(spec)
    n0 = len(positions)
    run_cfg = replace(cfg, horizon=max(times), record_every=1)

    def reducer(rec, fin, r):
        idx = [int(np.argmin(np.abs(rec["t"] - t))) for t in times]
        disc_mass = np.exp(consts.phi_prime0 * rec["t"][idx]) * rec["n"][idx]
        return np.stack([disc_mass, rec["discl"][idx]])

    samples = np.asarray(
        particle.run_replicas(positions, spec, run_cfg, replicas, reducer)
    )  # (replicas, 2, len(times))
    lt_budget = 2.0 * n0 / consts.psi_prime0
    out = []
    for i, t in enumerate(times):
        mm, ms = float(np.mean(samples[:, 0, i])), float(
            np.std(samples[:, 0, i], ddof=1) / math.sqrt(replicas))
        lm, ls = float(np.mean(samples[:, 1, i])), float(
            np.std(samples[:, 1, i], ddof=1) / math.sqrt(replicas))
        out.append({
            "t": float(t),
            "mass_mean": mm, "mass_se": ms, "mass_bound": float(n0),
            "mass_ok": mm <= n0 + 3 * ms,
            "lt_mean": lm, "lt_se": ls, "lt_bound": lt_budget,
            "lt_ok": lm <= lt_budget + 3 * ls,
        })
    return out


def chain_absorption_test(q, initial_count, replicas, cfg, spec=None,
                          start_spacing=0.0):
    """Embedded total-count chain vs its transition matrix, by chi-square.

    Runs beta_o = 0 trajectories from ``initial_count`` co-located (or
    closely spaced) particles until absorption in {0, 1}, pools the count
    transitions at catalytic events, and tests the offspring-count
    frequencies against q.  Returns a report dict.
    """
    from .mechanisms import BranchingSpec, OffspringLaw

    if spec is None:
        spec = BranchingSpec(
            0.0, 1.0, OffspringLaw((1.0,), "ordinary"), q,
            allow_parity_preserving=not q.has_odd_mass(),
        )
    validate(spec)
    kmax = len(q.probs) - 1
    max_count = 0
    transitions = {}  # (i, j) -> count
    k_counts = np.zeros(kmax + 1, dtype=np.int64)
    absorbed = 0
    paths = []
    run_cfg = replace(cfg, stop_count=1, record_every=0)
    positions = [i * start_spacing for i in range(initial_count)]
    for r in range(replicas):
        bg = bit_generator(cfg.seed, r)
        pop = particle.init(positions)
        rec, fin = particle.run(pop, spec, run_cfg, bitgen=bg)
        seq = particle.catalytic_count_sequence(fin, initial_count)
        paths.append(seq)
        for a, b in zip(seq[:-1], seq[1:]):
            transitions[(a, b)] = transitions.get((a, b), 0) + 1
            k_counts[b - a + 2] += 1
            max_count = max(max_count, a, b)
        if len(fin) <= 1:
            absorbed += 1
    pooled = int(k_counts.sum())
    # chi-square on offspring counts pooled over all source states i >= 2
    probs = np.asarray(q.probs)
    keep = probs > 0
    if pooled > 0 and keep.sum() > 1:
        chi2, p_value = stats.chisquare(k_counts[keep], pooled * probs[keep])
    else:
        chi2, p_value = 0.0, 1.0
    return {
        "replicas": replicas,
        "pooled_transitions": pooled,
        "offspring_counts": k_counts,
        "transitions": transitions,
        "chi2": float(chi2),
        "p_value": float(p_value),
        "absorbed_fraction": absorbed / replicas,
        "max_count_seen": max_count,
        "paths": paths,
    }

"""Command-line entry point: config parsing, dispatch, and result emission.

Subcommands: mech-info, sim-run, spde-run, mfe-solve, dual-check, cdi-scan,
diag-martingale, diag-chain.  Exit codes: 0 pass, 1 statistical failure,
2 configuration error.  CSV outputs are deterministic except for the
"# generated <timestamp>" header line.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import duality, experiments, mfe, particle, spde
from .config import ParseError, RunConfig, ValidationError, parse_config
from .mechanisms import MechanismError, derived_constants, kappa, theta

SUBCOMMANDS = (
    "mech-info", "sim-run", "spde-run", "mfe-solve", "dual-check",
    "cdi-scan", "diag-martingale", "diag-chain",
)


class ConfigurationError(ValueError):
    pass


def _write_csv(path: Path, header, rows):
    with open(path, "w") as fh:
        fh.write(f"# generated {datetime.now(timezone.utc).isoformat()}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_json(path: Path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON-serializable: {type(o)}")


def _provenance(rc: RunConfig, replicas=None):
    out = {}
    if rc.sim is not None:
        out["sim"] = {"seed": rc.sim.seed, "dt": rc.sim.dt,
                      "eps": rc.sim.estimator.epsilon,
                      "replicas": replicas or rc.sim_replicas}
    if rc.spde_cfg is not None:
        out["spde"] = {"seed": rc.spde_cfg.seed, "dt": rc.spde_cfg.dt,
                       "dx": rc.spde_cfg.grid.dx,
                       "replicas": replicas or rc.spde_cfg.replicas}
    if rc.mfe_cfg is not None:
        out["mfe"] = {"dt": rc.mfe_cfg.dt, "dx": rc.mfe_cfg.grid.dx,
                      "t_floor": rc.mfe_cfg.t_floor}
    return out


def _need(rc, attr, section):
    v = getattr(rc, attr)
    if v is None:
        raise ConfigurationError(f"missing [{section}] section in config")
    return v


def _emit(out, name, formats, header=None, rows=None, summary=None):
    paths = []
    if rows is not None and "csv" in formats:
        p = out / f"{name}.csv"
        _write_csv(p, header, rows)
        paths.append(p)
    if summary is not None and "json" in formats:
        p = out / f"{name}.json"
        _write_json(p, summary)
        paths.append(p)
    for p in paths:
        print(f"wrote {p}")


def cmd_mech_info(rc, out, formats):
    spec = _need(rc, "spec", "mechanism")
    c = derived_constants(spec)
    info = dataclasses.asdict(c)
    info["theta"] = {g: theta(g) for g in (0.2, 0.1, 0.05, 0.01)}
    if spec.beta_c > 0 and c.z_star > 0:
        info["kappa"] = {
            g: kappa(spec, g) for g in (0.2, 0.1, 0.05, 0.01) if g < c.z_star
        }
    print(f"z_star={c.z_star:.12g} psi_prime0={c.psi_prime0:.12g} "
          f"lambda_c={c.lambda_c:.12g} lambda_o={c.lambda_o:.12g} "
          f"phi_prime0={c.phi_prime0:.12g}")
    rows = [(k, v) for k, v in sorted(info.items()) if not isinstance(v, dict)]
    _emit(out, "mech_info", formats, ("constant", "value"), rows,
          {"constants": info})
    return 0


def cmd_sim_run(rc, out, formats, replicas):
    spec = _need(rc, "spec", "mechanism")
    cfg = _need(rc, "sim", "simulation")
    if not rc.sim_positions:
        raise ConfigurationError("simulation: positions are required for sim-run")
    R = replicas or rc.sim_replicas
    rows = []

    def reducer(rec, fin, r):
        for i in range(len(rec["t"])):
            rows.append((r, rec["t"][i], "count", float(rec["n"][i])))
            rows.append((r, rec["t"][i], "cumulative_local_time", rec["cuml"][i]))
            for w, (lo, hi) in enumerate(cfg.windows):
                rows.append((r, rec["t"][i], f"window_{lo}_{hi}", float(rec["win"][i, w])))
        return float(rec["n"][-1])

    finals = particle.run_replicas(rc.sim_positions, spec, cfg, R, reducer)
    summary = {
        "final_count_mean": float(np.mean(finals)),
        "final_count_se": float(np.std(finals, ddof=1) / math.sqrt(R)) if R > 1 else 0.0,
        "provenance": _provenance(rc, R),
    }
    _emit(out, "sim_run", formats, ("replica", "time", "observable", "value"),
          rows, summary)
    return 0


def cmd_spde_run(rc, out, formats, replicas):
    spec = _need(rc, "spec", "mechanism")
    cfg = _need(rc, "spde_cfg", "spde")
    horizon = rc.spde_horizon
    state = spde.init_field(cfg.grid, rc.spde_initial, spec)
    snaps, final = spde.run_field(
        state, spec, cfg, horizon=horizon,
        sample_times=[horizon / 2, horizon] if horizon > 0 else [],
    )
    rows = []
    for t, vals in snaps:
        for i, v in enumerate(vals):
            rows.append((t, i, cfg.grid.centers[i], v))
    ext = spde.support_extent(final)
    summary = {
        "final_time": final.time,
        "support_extent": ext,
        "max_value": float(np.max(final.values)),
        "provenance": _provenance(rc, replicas),
    }
    _emit(out, "spde_run", formats, ("time", "cell", "x", "value"), rows, summary)
    return 0


def cmd_mfe_solve(rc, out, formats):
    spec = _need(rc, "spec", "mechanism")
    cfg = _need(rc, "mfe_cfg", "mfe")
    trace = _need(rc, "trace", "mfe")
    c = derived_constants(spec).psi_prime0
    horizon = rc.mfe_horizon
    ts = sorted({horizon / 4, horizon / 2, horizon})
    states, _ = mfe.solve(trace, c, None, cfg, sample_times=ts)
    rows = []
    for s in states:
        for i, v in enumerate(s.values):
            rows.append((s.time, i, cfg.grid.centers[i], v))
    cap_ok = all(
        float(np.max(s.values)) <= 2.0 / (c * s.time) * (1 + 1e-9) for s in states
    )
    summary = {
        "sample_times": ts,
        "integrals_full_grid": [
            mfe.integral_over(s, cfg.grid.x_min, cfg.grid.x_max) for s in states
        ],
        "cap_respected": cap_ok,
        "provenance": _provenance(rc),
    }
    _emit(out, "mfe_solve", formats, ("time", "cell", "x", "value"), rows, summary)
    return 0 if cap_ok else 1


def cmd_dual_check(rc, out, formats, replicas):
    spec = _need(rc, "spec", "mechanism")
    cfg = _need(rc, "sim", "simulation")
    e = rc.experiment
    if "points" not in e or "t" not in e:
        raise ConfigurationError("experiment: dual-check needs points and t")
    if "window" not in e:
        raise ConfigurationError("experiment: dual-check needs an f window lo:hi")
    lo, hi = e["window"]
    eps_f = float(e.get("g_half_width", 0.5))  # f amplitude on the window
    pts = e["points"]
    t = e["t"]
    R = replicas or rc.sim_replicas
    f_desc = ("indicator", eps_f, lo, hi)

    def f_eval(x):
        return np.where((np.asarray(x) > lo) & (np.asarray(x) < hi), eps_f, 0.0)

    lhs = duality.lhs_estimate(spec, f_desc, t, pts, R,
                               seed=rc.spde_cfg.seed if rc.spde_cfg else cfg.seed)
    rhs = duality.rhs_estimate(spec, f_eval, t, pts, R, cfg, points_tag=pts)
    rep = duality.compare(lhs, rhs)
    print(f"duality: lhs={rep.lhs_mean:.5f}±{rep.lhs_se:.5f} "
          f"rhs={rep.rhs_mean:.5f}±{rep.rhs_se:.5f} z={rep.z_score:+.2f} "
          f"{'PASS' if rep.passes else 'FAIL'}")
    row = [(hash((spec.beta_o, spec.beta_c, spec.p.probs, spec.q.probs)) & 0xFFFFFFFF,
            t, len(pts), rep.lhs_mean, rep.rhs_mean, rep.z_score)]
    summary = dataclasses.asdict(rep)
    summary["provenance"] = _provenance(rc, R)
    _emit(out, "dual_check", formats,
          ("spec_hash", "t", "n_points", "lhs", "rhs", "z"), row, summary)
    return 0 if rep.passes else 1


def cmd_cdi_scan(rc, out, formats, replicas):
    spec = _need(rc, "spec", "mechanism")
    cfg = _need(rc, "sim", "simulation")
    e = rc.experiment
    if "window" not in e or "times" not in e:
        raise ConfigurationError("experiment: cdi-scan needs window and times")
    lo, hi = e["window"]
    if not (math.isfinite(lo) and math.isfinite(hi)):
        trace = mfe.InitialTrace(intervals=((lo, hi),))
        raise ConfigurationError(
            f"cdi-scan window must be bounded; classify_integrability: "
            f"{mfe.classify_integrability(trace, lo, hi)}"
        )
    n = int(e.get("n", 200))
    R = replicas or rc.sim_replicas
    res = experiments.cdi_ratio_scan(n, lo, hi, e["times"], spec, cfg, R)
    dev = res.deviations()
    in_band = all(0.7 <= r <= 1.3 for r in res.ratios)
    monotone = all(dev[i + 1] <= dev[i] + 1e-12 for i in range(len(dev) - 1))
    ok = in_band and monotone
    rows = list(zip(res.times, res.counts_mean, res.counts_se,
                    res.mfe_integrals, res.ratios))
    for t, cm, cs, vi, r in rows:
        print(f"t={t:<6g} E Z_t(U)={cm:.3f}±{cs:.3f} integral={vi:.3f} ratio={r:.4f}")
    print(f"cdi-scan: band={'ok' if in_band else 'violated'} "
          f"trend={'ok' if monotone else 'violated'} -> {'PASS' if ok else 'FAIL'}")
    summary = {
        "pass": ok, "statistic": res.ratios, "tolerance": [0.7, 1.3],
        "deviations": dev, "provenance": _provenance(rc, R),
    }
    _emit(out, "cdi_scan", formats,
          ("time", "counts_mean", "counts_se", "mfe_integral", "ratio"),
          rows, summary)
    return 0 if ok else 1


def cmd_diag_martingale(rc, out, formats, replicas):
    spec = _need(rc, "spec", "mechanism")
    cfg = _need(rc, "sim", "simulation")
    if not rc.sim_positions:
        raise ConfigurationError("simulation: positions are required")
    e = rc.experiment
    times = e.get("times", [0.1, 0.2, 0.4])
    R = replicas or rc.sim_replicas
    g = particle.smooth_bump(float(e.get("g_half_width", 2.0)))
    mart = experiments.martingale_scan(spec, g, rc.sim_positions, times, R, cfg)
    sup = experiments.supermartingale_scan(spec, rc.sim_positions, times, R, cfg)
    ok = all(r["ok"] for r in mart) and all(
        r["mass_ok"] and r["lt_ok"] for r in sup)
    rows = []
    for r in mart:
        print(f"t={r['t']:<5g} mean M_t^g={r['mean']:.4f}±{r['se']:.4f} "
              f"target={r['target']:.4f} z={r['z']:+.2f} "
              f"{'ok' if r['ok'] else 'VIOLATED'}")
        rows.append(("martingale", r["t"], r["mean"], r["se"], r["target"], r["z"]))
    for r in sup:
        print(f"t={r['t']:<5g} disc-mass {r['mass_mean']:.4f}±{r['mass_se']:.4f} "
              f"<= {r['mass_bound']} {'ok' if r['mass_ok'] else 'VIOLATED'}; "
              f"disc-L {r['lt_mean']:.4f}±{r['lt_se']:.4f} <= {r['lt_bound']:.4f} "
              f"{'ok' if r['lt_ok'] else 'VIOLATED'}")
        rows.append(("supermartingale_mass", r["t"], r["mass_mean"], r["mass_se"],
                     r["mass_bound"], 0.0))
        rows.append(("supermartingale_lt", r["t"], r["lt_mean"], r["lt_se"],
                     r["lt_bound"], 0.0))
    summary = {"pass": ok, "martingale": mart, "supermartingale": sup,
               "provenance": _provenance(rc, R)}
    _emit(out, "diag_martingale", formats,
          ("check", "time", "mean", "se", "target", "z"), rows, summary)
    return 0 if ok else 1


def cmd_diag_chain(rc, out, formats, replicas):
    spec = _need(rc, "spec", "mechanism")
    cfg = _need(rc, "sim", "simulation")
    if spec.beta_o != 0.0:
        raise ConfigurationError("diag-chain requires beta_o = 0")
    e = rc.experiment
    i0 = int(e.get("initial_count", 4))
    R = replicas or rc.sim_replicas
    rep = experiments.chain_absorption_test(spec.q, i0, R, cfg, spec=spec)
    ok = rep["p_value"] > 0.01 and rep["absorbed_fraction"] == 1.0
    print(f"chain: pooled={rep['pooled_transitions']} chi2={rep['chi2']:.3f} "
          f"p={rep['p_value']:.4f} absorbed={rep['absorbed_fraction']:.3f} "
          f"{'PASS' if ok else 'FAIL'}")
    rows = [(f"{i}->{j}", c) for (i, j), c in sorted(rep["transitions"].items())]
    summary = {
        "pass": ok, "statistic": rep["p_value"], "tolerance": 0.01,
        "pooled_transitions": rep["pooled_transitions"],
        "absorbed_fraction": rep["absorbed_fraction"],
        "provenance": _provenance(rc, R),
    }
    _emit(out, "diag_chain", formats, ("transition", "count"), rows, summary)
    return 0 if ok else 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="sbbm",
        description="Simulation and verification harness for self-catalytic "
                    "branching Brownian motions, their dual SPDE, and the "
                    "mean-field equation.",
    )
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="path to INI or JSON config")
    ap.add_argument("--seed", type=int, default=None, help="override master seed")
    ap.add_argument("--replicas", type=int, default=None, help="override replica count")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--format", default="both", choices=("csv", "json", "both"))
    args = ap.parse_args(argv)

    try:
        text = Path(args.config).read_text()
    except OSError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2

    try:
        rc = parse_config(text)
        if args.seed is not None:
            if rc.sim is not None:
                rc.sim = dataclasses.replace(rc.sim, seed=args.seed)
            if rc.spde_cfg is not None:
                rc.spde_cfg = dataclasses.replace(rc.spde_cfg, seed=args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        formats = ("csv", "json") if args.format == "both" else (args.format,)
        if args.subcommand == "mech-info":
            return cmd_mech_info(rc, out, formats)
        if args.subcommand == "sim-run":
            return cmd_sim_run(rc, out, formats, args.replicas)
        if args.subcommand == "spde-run":
            return cmd_spde_run(rc, out, formats, args.replicas)
        if args.subcommand == "mfe-solve":
            return cmd_mfe_solve(rc, out, formats)
        if args.subcommand == "dual-check":
            return cmd_dual_check(rc, out, formats, args.replicas)
        if args.subcommand == "cdi-scan":
            return cmd_cdi_scan(rc, out, formats, args.replicas)
        if args.subcommand == "diag-martingale":
            return cmd_diag_martingale(rc, out, formats, args.replicas)
        if args.subcommand == "diag-chain":
            return cmd_diag_chain(rc, out, formats, args.replicas)
    except (ParseError, ValidationError, ConfigurationError, MechanismError) as e:
        print(f"config error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return 2  # unreachable


if __name__ == "__main__":
    sys.exit(main())

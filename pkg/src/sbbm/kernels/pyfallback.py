"""Pure-Python/numpy trajectory kernel.

Reference implementation of the time-discretized particle stepper.  The
compiled kernel in ``_core.pyx`` draws from the same Philox stream in exactly
the same order, so both backends produce bit-identical event sequences for the
band estimator; see tests/test_kernels.py.

One step, in draw order:
  1. every particle gets an independent Gaussian move of std sqrt(dt);
  2. one trigger uniform per particle (if beta_o > 0), then one offspring
     uniform per triggered ordinary event, in particle-index order;
  3. pair local-time increments for all unordered pairs in lexicographic
     order (no draws), one trigger uniform per pair with a positive
     increment, then one offspring uniform per triggered catalytic event;
  4. a Fisher-Yates shuffle of the candidate events (uniform draws), after
     which events are applied in shuffled order and any event whose parents
     are no longer all alive is discarded and logged as a conflict.
"""

from __future__ import annotations

import math

import numpy as np

from ..local_time import gauss_legendre_01

STATUS_OK = 0
STATUS_CAP = 1
STATUS_GRID = 2
STATUS_MAXSTEPS = 3

EV_ORDINARY = 0
EV_CATALYTIC = 1
EV_CONFLICT_ORDINARY = 2
EV_CONFLICT_CATALYTIC = 3

BRIDGE_FLOOR = 1e-14

BACKEND_NAME = "python"


def _sample_cdf(cdf, u):
    return int(np.searchsorted(cdf, u, side="right"))


class _Recorder:
    FIELDS = ("t", "n", "zg", "zgpp", "sumdl", "gdl", "cuml", "discl", "wgdl")

    def __init__(self, n_windows):
        self.rows = {f: [] for f in self.FIELDS}
        self.win = []
        self.n_windows = n_windows

    def add(self, t, n, wincounts, zg, zgpp, sumdl, gdl, cuml, discl, wgdl):
        r = self.rows
        r["t"].append(t)
        r["n"].append(n)
        r["zg"].append(zg)
        r["zgpp"].append(zgpp)
        r["sumdl"].append(sumdl)
        r["gdl"].append(gdl)
        r["cuml"].append(cuml)
        r["discl"].append(discl)
        r["wgdl"].append(wgdl)
        self.win.append(wincounts)

    def arrays(self):
        out = {f: np.asarray(self.rows[f], dtype=np.float64) for f in self.FIELDS}
        out["n"] = np.asarray(self.rows["n"], dtype=np.int64)
        out["win"] = (
            np.asarray(self.win, dtype=np.int64)
            if self.win
            else np.zeros((0, self.n_windows), dtype=np.int64)
        )
        return out


def run_trajectory(
    bitgen,
    positions,
    labels,
    next_label,
    t0,
    beta_o,
    beta_c,
    phi_prime0,
    p_cdf,
    q_cdf,
    dt,
    horizon,
    eps,
    estimator,
    bridge_nodes,
    cap,
    window_lo,
    window_hi,
    has_g,
    gx0,
    gdx,
    gvals,
    gpp,
    record_every,
    adaptive,
    adapt_dt_max,
    stop_count,
    max_steps,
):
    gen = np.random.Generator(bitgen)
    pos = np.array(positions, dtype=np.float64)
    lab = np.array(labels, dtype=np.int64)
    nlab = int(next_label)
    t = float(t0)
    cum_l = 0.0
    disc_l = 0.0
    wgdl = 0.0
    n_conflicts = 0
    status = STATUS_OK

    window_lo = np.asarray(window_lo, dtype=np.float64)
    window_hi = np.asarray(window_hi, dtype=np.float64)
    nw = len(window_lo)
    if estimator == 1:
        glx, glw = gauss_legendre_01(bridge_nodes)
    gmax = gx0 + gdx * (len(gvals) - 1) if has_g else 0.0

    def g_at(x):
        # shared linear-interpolation formula; grid excursions abort the run
        idx = np.floor((x - gx0) / gdx).astype(np.int64)
        frac = (x - gx0) / gdx - idx
        return (
            gvals[idx] + (gvals[idx + 1] - gvals[idx]) * frac,
            gpp[idx] + (gpp[idx + 1] - gpp[idx]) * frac,
        )

    def win_counts(p):
        if nw == 0:
            return np.zeros(0, dtype=np.int64)
        return np.array(
            [int(np.sum((p >= lo) & (p < hi))) for lo, hi in zip(window_lo, window_hi)],
            dtype=np.int64,
        )

    ev = {k: [] for k in ("t", "kind", "par1", "par2", "k", "loc", "n_after")}
    rec = _Recorder(nw)

    def record(sumdl, gdl):
        if has_g and len(pos):
            if np.any(pos < gx0) or np.any(pos > gmax):
                return False
            gv, gp = g_at(pos)
            zg, zgpp = float(np.sum(gv)), float(np.sum(gp))
        else:
            zg = zgpp = 0.0
        rec.add(t, len(pos), win_counts(pos), zg, zgpp, sumdl, gdl, cum_l, disc_l, wgdl)
        return True

    if not record(0.0, 0.0):
        status = STATUS_GRID
    steps = 0
    acc_sumdl = 0.0
    acc_gdl = 0.0

    while status == STATUS_OK and t < horizon - 1e-12:
        if steps >= max_steps:
            status = STATUS_MAXSTEPS
            break
        n = len(pos)
        dt_step = dt
        if adaptive:
            if n >= 2:
                gaps = np.abs(pos[:, None] - pos[None, :])[np.triu_indices(n, 1)]
                gmin = float(np.min(gaps))
                if gmin > 4.0 * eps:
                    dt_step = max(dt, min(adapt_dt_max, ((gmin - eps) / 8.0) ** 2))
            else:
                dt_step = adapt_dt_max
        dt_step = min(dt_step, horizon - t)

        p0 = pos
        if n > 0:
            pos = pos + math.sqrt(dt_step) * gen.standard_normal(n)
        sum_dl = 0.0
        g_dl = 0.0
        candidates = []  # (is_pair, i, j, k)

        if beta_o > 0.0 and n > 0:
            p_ord = 1.0 - math.exp(-beta_o * dt_step)
            us = gen.random(n)
            for i in np.nonzero(us < p_ord)[0]:
                k = _sample_cdf(p_cdf, gen.random())
                candidates.append((0, int(i), -1, k))

        if beta_c > 0.0 and n >= 2:
            iu, ju = np.triu_indices(n, 1)
            d0 = p0[iu] - p0[ju]
            d1 = pos[iu] - pos[ju]
            if estimator == 0:
                dl = (
                    dt_step
                    / eps
                    * 0.5
                    * ((np.abs(d0) <= eps).astype(np.float64) + (np.abs(d1) <= eps))
                )
                active = dl > 0.0
            else:
                mu = d0[:, None] + (d1 - d0)[:, None] * glx[None, :]
                var = 2.0 * dt_step * glx * (1.0 - glx)
                with np.errstate(divide="ignore", invalid="ignore"):
                    dens = np.exp(-mu * mu / (2.0 * var)) / np.sqrt(2.0 * math.pi * var)
                dens = np.nan_to_num(dens, nan=0.0, posinf=0.0)
                dl = 2.0 * dt_step * dens @ glw
                active = dl > BRIDGE_FLOOR
            sum_dl = float(np.sum(dl[active]))
            ai, aj, adl = iu[active], ju[active], dl[active]
            if has_g and len(ai):
                if np.any(pos < gx0) or np.any(pos > gmax):
                    status = STATUS_GRID
                    break
                g_dl = float(np.sum(g_at(pos[ai])[0] * adl))
            if len(ai):
                us = gen.random(len(ai))
                trig = us < 1.0 - np.exp(-0.5 * beta_c * adl)
                for i, j in zip(ai[trig], aj[trig]):
                    k = _sample_cdf(q_cdf, gen.random())
                    candidates.append((1, int(i), int(j), k))

        m = len(candidates)
        if m >= 2:
            for i in range(m - 1, 0, -1):
                j = int(gen.random() * (i + 1))
                candidates[i], candidates[j] = candidates[j], candidates[i]

        cum_l += sum_dl
        w = math.exp(phi_prime0 * t)
        disc_l += w * sum_dl
        wgdl += w * g_dl
        acc_sumdl += sum_dl
        acc_gdl += g_dl
        t += dt_step
        steps += 1

        if m > 0:
            alive = np.ones(n, dtype=bool)
            cnt = n
            child_pos = []
            child_lab = []
            for is_pair, i, j, k in candidates:
                if is_pair:
                    if alive[i] and alive[j]:
                        alive[i] = alive[j] = False
                        loc = 0.5 * (pos[i] + pos[j])
                        cnt += k - 2
                        for _ in range(k):
                            child_pos.append(loc)
                            child_lab.append(nlab)
                            nlab += 1
                        kind, par1, par2 = EV_CATALYTIC, lab[i], lab[j]
                    else:
                        n_conflicts += 1
                        kind, par1, par2, loc = EV_CONFLICT_CATALYTIC, lab[i], lab[j], 0.5 * (pos[i] + pos[j])
                else:
                    if alive[i]:
                        alive[i] = False
                        loc = pos[i]
                        cnt += k - 1
                        for _ in range(k):
                            child_pos.append(loc)
                            child_lab.append(nlab)
                            nlab += 1
                        kind, par1, par2 = EV_ORDINARY, lab[i], -1
                    else:
                        n_conflicts += 1
                        kind, par1, par2, loc = EV_CONFLICT_ORDINARY, lab[i], -1, pos[i]
                ev["t"].append(t)
                ev["kind"].append(kind)
                ev["par1"].append(int(par1))
                ev["par2"].append(int(par2))
                ev["k"].append(k)
                ev["loc"].append(float(loc))
                ev["n_after"].append(cnt)
            pos = np.concatenate([pos[alive], np.asarray(child_pos, dtype=np.float64)])
            lab = np.concatenate(
                [lab[alive], np.asarray(child_lab, dtype=np.int64)]
            ).astype(np.int64)

        if len(pos) > cap:
            status = STATUS_CAP
            break

        done = t >= horizon - 1e-12
        stopped = stop_count >= 0 and len(pos) <= stop_count
        if (record_every > 0 and steps % record_every == 0) or done or stopped:
            if not record(acc_sumdl, acc_gdl):
                status = STATUS_GRID
                break
            acc_sumdl = 0.0
            acc_gdl = 0.0
        if stopped:
            break

    return {
        "status": status,
        "t": t,
        "positions": pos,
        "labels": lab,
        "next_label": nlab,
        "cum_l": cum_l,
        "disc_l": disc_l,
        "wgdl": wgdl,
        "n_steps": steps,
        "n_conflicts": n_conflicts,
        "rec": rec.arrays(),
        "ev": {
            "t": np.asarray(ev["t"], dtype=np.float64),
            "kind": np.asarray(ev["kind"], dtype=np.int64),
            "par1": np.asarray(ev["par1"], dtype=np.int64),
            "par2": np.asarray(ev["par2"], dtype=np.int64),
            "k": np.asarray(ev["k"], dtype=np.int64),
            "loc": np.asarray(ev["loc"], dtype=np.float64),
            "n_after": np.asarray(ev["n_after"], dtype=np.int64),
        },
    }

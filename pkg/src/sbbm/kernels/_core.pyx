# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled trajectory kernel.

Mirrors kernels/pyfallback.py draw-for-draw on the shared Philox stream; see
that module's docstring for the step semantics and draw order.  The pair
local-time loop is the hot path and runs as a plain C double loop.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport M_PI, exp, fabs, floor, sqrt
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (random_standard_normal,
                                           random_standard_uniform)

from ..local_time import gauss_legendre_01

cnp.import_array()

STATUS_OK = 0
STATUS_CAP = 1
STATUS_GRID = 2
STATUS_MAXSTEPS = 3

EV_ORDINARY = 0
EV_CATALYTIC = 1
EV_CONFLICT_ORDINARY = 2
EV_CONFLICT_CATALYTIC = 3

cdef double BRIDGE_FLOOR = 1e-14

BACKEND_NAME = "cython"


cdef inline long _sample_cdf(double[::1] cdf, double u) noexcept nogil:
    cdef long k = 0
    cdef long n = cdf.shape[0]
    while k < n - 1 and u >= cdf[k]:
        k += 1
    return k


def run_trajectory(
    bitgen,
    positions,
    labels,
    next_label,
    double t0,
    double beta_o,
    double beta_c,
    double phi_prime0,
    p_cdf_in,
    q_cdf_in,
    double dt,
    double horizon,
    double eps,
    int estimator,
    int bridge_nodes,
    long cap,
    window_lo_in,
    window_hi_in,
    bint has_g,
    double gx0,
    double gdx,
    gvals_in,
    gpp_in,
    long record_every,
    bint adaptive,
    double adapt_dt_max,
    long stop_count,
    long max_steps,
):
    cdef bitgen_t *rng = <bitgen_t *> PyCapsule_GetPointer(
        bitgen.capsule, "BitGenerator")

    cdef double[::1] p_cdf = np.ascontiguousarray(p_cdf_in, dtype=np.float64)
    cdef double[::1] q_cdf = np.ascontiguousarray(q_cdf_in, dtype=np.float64)
    cdef double[::1] window_lo = np.ascontiguousarray(window_lo_in, dtype=np.float64)
    cdef double[::1] window_hi = np.ascontiguousarray(window_hi_in, dtype=np.float64)
    cdef double[::1] gvals = np.ascontiguousarray(
        gvals_in if gvals_in is not None else np.zeros(2), dtype=np.float64)
    cdef double[::1] gpp = np.ascontiguousarray(
        gpp_in if gpp_in is not None else np.zeros(2), dtype=np.float64)
    cdef long nw = window_lo.shape[0]
    cdef double gmax = gx0 + gdx * (gvals.shape[0] - 1) if has_g else 0.0

    cdef double[::1] glx = np.zeros(1)
    cdef double[::1] glw = np.zeros(1)
    cdef long ngl = 0
    if estimator == 1:
        glx_arr, glw_arr = gauss_legendre_01(bridge_nodes)
        glx = np.ascontiguousarray(glx_arr)
        glw = np.ascontiguousarray(glw_arr)
        ngl = glx.shape[0]

    # particle buffers, grown by doubling
    cdef long n = len(positions)
    cdef long capacity = max(2 * n + 16, 256)
    pos_arr = np.zeros(capacity, dtype=np.float64)
    prev_arr = np.zeros(capacity, dtype=np.float64)
    lab_arr = np.zeros(capacity, dtype=np.int64)
    alive_arr = np.zeros(capacity, dtype=np.uint8)
    pos_arr[:n] = np.asarray(positions, dtype=np.float64)
    lab_arr[:n] = np.asarray(labels, dtype=np.int64)
    cdef double[::1] pos = pos_arr
    cdef double[::1] prev = prev_arr
    cdef long[::1] lab = lab_arr
    cdef unsigned char[::1] alive = alive_arr

    # active-pair buffers, grown by doubling
    cdef long acap = 1024
    ai_arr = np.zeros(acap, dtype=np.int64)
    aj_arr = np.zeros(acap, dtype=np.int64)
    adl_arr = np.zeros(acap, dtype=np.float64)
    atrig_arr = np.zeros(acap, dtype=np.uint8)
    cdef long[::1] ai = ai_arr
    cdef long[::1] aj = aj_arr
    cdef double[::1] adl = adl_arr
    cdef unsigned char[::1] atrig = atrig_arr

    # candidate-event buffers, grown by doubling
    cdef long ccap = 1024
    cpair_arr = np.zeros(ccap, dtype=np.int64)
    cia_arr = np.zeros(ccap, dtype=np.int64)
    cja_arr = np.zeros(ccap, dtype=np.int64)
    cka_arr = np.zeros(ccap, dtype=np.int64)
    cdef long[::1] cpair = cpair_arr
    cdef long[::1] cia = cia_arr
    cdef long[::1] cja = cja_arr
    cdef long[::1] cka = cka_arr

    cdef long nlab = next_label
    cdef double t = t0
    cdef double cum_l = 0.0, disc_l = 0.0, wgdl = 0.0
    cdef double acc_sumdl = 0.0, acc_gdl = 0.0
    cdef long n_conflicts = 0
    cdef int status = STATUS_OK
    cdef long steps = 0

    rec_t, rec_n, rec_zg, rec_zgpp = [], [], [], []
    rec_sumdl, rec_gdl, rec_cuml, rec_discl, rec_wgdl, rec_win = [], [], [], [], [], []
    ev_t, ev_kind, ev_par1, ev_par2, ev_k, ev_loc, ev_nafter = [], [], [], [], [], [], []
    otrig = []
    child_pos = []
    child_lab = []

    cdef long i, j, k, m, a, idx, na, cnt, nact, newcap
    cdef double dt_step, sqdt, d0, d1, dl, ind, u, w, gmin, gap, loc
    cdef double mu, var, dens, zg, zgpp, gx, frac, sum_dl, g_dl, p_ord
    cdef long gi, par1, par2
    cdef bint done, stopped, grid_ok, want_record

    # ---- initial record ----
    grid_ok = True
    zg = 0.0
    zgpp = 0.0
    if has_g and n > 0:
        for i in range(n):
            if pos[i] < gx0 or pos[i] > gmax:
                grid_ok = False
                break
        if grid_ok:
            for i in range(n):
                gi = <long>floor((pos[i] - gx0) / gdx)
                frac = (pos[i] - gx0) / gdx - gi
                zg += gvals[gi] + (gvals[gi + 1] - gvals[gi]) * frac
                zgpp += gpp[gi] + (gpp[gi + 1] - gpp[gi]) * frac
    if not grid_ok:
        status = STATUS_GRID
    else:
        rec_t.append(t)
        rec_n.append(n)
        wc = np.zeros(nw, dtype=np.int64)
        for a in range(nw):
            cnt = 0
            for i in range(n):
                if window_lo[a] <= pos[i] < window_hi[a]:
                    cnt += 1
            wc[a] = cnt
        rec_win.append(wc)
        rec_zg.append(zg)
        rec_zgpp.append(zgpp)
        rec_sumdl.append(0.0)
        rec_gdl.append(0.0)
        rec_cuml.append(cum_l)
        rec_discl.append(disc_l)
        rec_wgdl.append(wgdl)

    while status == STATUS_OK and t < horizon - 1e-12:
        if steps >= max_steps:
            status = STATUS_MAXSTEPS
            break
        dt_step = dt
        if adaptive:
            if n >= 2:
                gmin = -1.0
                for i in range(n - 1):
                    for j in range(i + 1, n):
                        gap = fabs(pos[i] - pos[j])
                        if gmin < 0.0 or gap < gmin:
                            gmin = gap
                if gmin > 4.0 * eps:
                    dl = ((gmin - eps) / 8.0) ** 2
                    if dl > adapt_dt_max:
                        dl = adapt_dt_max
                    if dl > dt:
                        dt_step = dl
            else:
                dt_step = adapt_dt_max
        if dt_step > horizon - t:
            dt_step = horizon - t

        # 1. diffusion
        sqdt = sqrt(dt_step)
        for i in range(n):
            prev[i] = pos[i]
            pos[i] = pos[i] + sqdt * random_standard_normal(rng)

        sum_dl = 0.0
        g_dl = 0.0
        m = 0

        # 2. ordinary branching candidates
        if beta_o > 0.0 and n > 0:
            p_ord = 1.0 - exp(-beta_o * dt_step)
            del otrig[:]
            for i in range(n):
                u = random_standard_uniform(rng)
                if u < p_ord:
                    otrig.append(i)
            for idx in range(len(otrig)):
                u = random_standard_uniform(rng)
                k = _sample_cdf(p_cdf, u)
                if m >= ccap:
                    ccap *= 2
                    cpair_arr = np.resize(cpair_arr, ccap)
                    cia_arr = np.resize(cia_arr, ccap)
                    cja_arr = np.resize(cja_arr, ccap)
                    cka_arr = np.resize(cka_arr, ccap)
                    cpair = cpair_arr
                    cia = cia_arr
                    cja = cja_arr
                    cka = cka_arr
                cpair[m] = 0
                cia[m] = otrig[idx]
                cja[m] = -1
                cka[m] = k
                m += 1

        # 3. catalytic branching candidates
        if beta_c > 0.0 and n >= 2:
            nact = 0
            for i in range(n - 1):
                for j in range(i + 1, n):
                    d0 = prev[i] - prev[j]
                    d1 = pos[i] - pos[j]
                    if estimator == 0:
                        ind = 0.0
                        if fabs(d0) <= eps:
                            ind += 1.0
                        if fabs(d1) <= eps:
                            ind += 1.0
                        if ind == 0.0:
                            continue
                        dl = dt_step / eps * 0.5 * ind
                    else:
                        dl = 0.0
                        for a in range(ngl):
                            var = 2.0 * dt_step * glx[a] * (1.0 - glx[a])
                            mu = d0 + (d1 - d0) * glx[a]
                            dens = exp(-mu * mu / (2.0 * var)) / sqrt(
                                2.0 * M_PI * var)
                            dl += glw[a] * dens
                        dl = 2.0 * dt_step * dl
                        if not dl > BRIDGE_FLOOR:
                            continue
                    if nact >= acap:
                        acap *= 2
                        ai_arr = np.resize(ai_arr, acap)
                        aj_arr = np.resize(aj_arr, acap)
                        adl_arr = np.resize(adl_arr, acap)
                        atrig_arr = np.resize(atrig_arr, acap)
                        ai = ai_arr
                        aj = aj_arr
                        adl = adl_arr
                        atrig = atrig_arr
                    ai[nact] = i
                    aj[nact] = j
                    adl[nact] = dl
                    sum_dl += dl
                    nact += 1
            if has_g and nact > 0:
                grid_ok = True
                for i in range(n):
                    if pos[i] < gx0 or pos[i] > gmax:
                        grid_ok = False
                        break
                if not grid_ok:
                    status = STATUS_GRID
                    break
                for a in range(nact):
                    gx = pos[ai[a]]
                    gi = <long>floor((gx - gx0) / gdx)
                    frac = (gx - gx0) / gdx - gi
                    g_dl += (gvals[gi] + (gvals[gi + 1] - gvals[gi]) * frac) * adl[a]
            for a in range(nact):
                u = random_standard_uniform(rng)
                atrig[a] = 1 if u < 1.0 - exp(-0.5 * beta_c * adl[a]) else 0
            for a in range(nact):
                if atrig[a]:
                    u = random_standard_uniform(rng)
                    k = _sample_cdf(q_cdf, u)
                    if m >= ccap:
                        ccap *= 2
                        cpair_arr = np.resize(cpair_arr, ccap)
                        cia_arr = np.resize(cia_arr, ccap)
                        cja_arr = np.resize(cja_arr, ccap)
                        cka_arr = np.resize(cka_arr, ccap)
                        cpair = cpair_arr
                        cia = cia_arr
                        cja = cja_arr
                        cka = cka_arr
                    cpair[m] = 1
                    cia[m] = ai[a]
                    cja[m] = aj[a]
                    cka[m] = k
                    m += 1

        # 4. uniform random application order
        if m >= 2:
            for i in range(m - 1, 0, -1):
                u = random_standard_uniform(rng)
                j = <long>(u * (i + 1))
                cpair[i], cpair[j] = cpair[j], cpair[i]
                cia[i], cia[j] = cia[j], cia[i]
                cja[i], cja[j] = cja[j], cja[i]
                cka[i], cka[j] = cka[j], cka[i]

        cum_l += sum_dl
        w = exp(phi_prime0 * t)
        disc_l += w * sum_dl
        wgdl += w * g_dl
        acc_sumdl += sum_dl
        acc_gdl += g_dl
        t += dt_step
        steps += 1

        # 5. apply events, rebuild particle set
        if m > 0:
            for i in range(n):
                alive[i] = 1
            cnt = n
            del child_pos[:]
            del child_lab[:]
            for idx in range(m):
                i = cia[idx]
                j = cja[idx]
                k = cka[idx]
                if cpair[idx] == 1:
                    if alive[i] and alive[j]:
                        alive[i] = 0
                        alive[j] = 0
                        loc = 0.5 * (pos[i] + pos[j])
                        cnt += k - 2
                        for a in range(k):
                            child_pos.append(loc)
                            child_lab.append(nlab)
                            nlab += 1
                        ev_kind.append(EV_CATALYTIC)
                    else:
                        n_conflicts += 1
                        loc = 0.5 * (pos[i] + pos[j])
                        ev_kind.append(EV_CONFLICT_CATALYTIC)
                    par1 = lab[i]
                    par2 = lab[j]
                else:
                    if alive[i]:
                        alive[i] = 0
                        loc = pos[i]
                        cnt += k - 1
                        for a in range(k):
                            child_pos.append(loc)
                            child_lab.append(nlab)
                            nlab += 1
                        ev_kind.append(EV_ORDINARY)
                    else:
                        n_conflicts += 1
                        loc = pos[i]
                        ev_kind.append(EV_CONFLICT_ORDINARY)
                    par1 = lab[i]
                    par2 = -1
                ev_t.append(t)
                ev_par1.append(par1)
                ev_par2.append(par2)
                ev_k.append(k)
                ev_loc.append(loc)
                ev_nafter.append(cnt)
            if cnt + 16 > capacity:
                newcap = capacity
                while newcap < 2 * cnt + 16:
                    newcap *= 2
                pos_arr = np.resize(pos_arr, newcap)
                prev_arr = np.resize(prev_arr, newcap)
                lab_arr = np.resize(lab_arr, newcap)
                alive_arr = np.resize(alive_arr, newcap)
                pos = pos_arr
                prev = prev_arr
                lab = lab_arr
                alive = alive_arr
                capacity = newcap
            na = 0
            for i in range(n):
                if alive[i]:
                    if na != i:
                        pos[na] = pos[i]
                        lab[na] = lab[i]
                    na += 1
            for idx in range(len(child_pos)):
                pos[na] = child_pos[idx]
                lab[na] = child_lab[idx]
                na += 1
            n = na

        if n > cap:
            status = STATUS_CAP
            break

        done = t >= horizon - 1e-12
        stopped = stop_count >= 0 and n <= stop_count
        want_record = (record_every > 0 and steps % record_every == 0) or done or stopped
        if want_record:
            grid_ok = True
            zg = 0.0
            zgpp = 0.0
            if has_g and n > 0:
                for i in range(n):
                    if pos[i] < gx0 or pos[i] > gmax:
                        grid_ok = False
                        break
                if grid_ok:
                    for i in range(n):
                        gi = <long>floor((pos[i] - gx0) / gdx)
                        frac = (pos[i] - gx0) / gdx - gi
                        zg += gvals[gi] + (gvals[gi + 1] - gvals[gi]) * frac
                        zgpp += gpp[gi] + (gpp[gi + 1] - gpp[gi]) * frac
            if not grid_ok:
                status = STATUS_GRID
                break
            rec_t.append(t)
            rec_n.append(n)
            wc = np.zeros(nw, dtype=np.int64)
            for a in range(nw):
                cnt = 0
                for i in range(n):
                    if window_lo[a] <= pos[i] < window_hi[a]:
                        cnt += 1
                wc[a] = cnt
            rec_win.append(wc)
            rec_zg.append(zg)
            rec_zgpp.append(zgpp)
            rec_sumdl.append(acc_sumdl)
            rec_gdl.append(acc_gdl)
            rec_cuml.append(cum_l)
            rec_discl.append(disc_l)
            rec_wgdl.append(wgdl)
            acc_sumdl = 0.0
            acc_gdl = 0.0
        if stopped:
            break

    return {
        "status": status,
        "t": t,
        "positions": np.asarray(pos_arr[:n], dtype=np.float64).copy(),
        "labels": np.asarray(lab_arr[:n], dtype=np.int64).copy(),
        "next_label": nlab,
        "cum_l": cum_l,
        "disc_l": disc_l,
        "wgdl": wgdl,
        "n_steps": steps,
        "n_conflicts": n_conflicts,
        "rec": {
            "t": np.asarray(rec_t, dtype=np.float64),
            "n": np.asarray(rec_n, dtype=np.int64),
            "win": (np.asarray(rec_win, dtype=np.int64)
                    if rec_win else np.zeros((0, nw), dtype=np.int64)),
            "zg": np.asarray(rec_zg, dtype=np.float64),
            "zgpp": np.asarray(rec_zgpp, dtype=np.float64),
            "sumdl": np.asarray(rec_sumdl, dtype=np.float64),
            "gdl": np.asarray(rec_gdl, dtype=np.float64),
            "cuml": np.asarray(rec_cuml, dtype=np.float64),
            "discl": np.asarray(rec_discl, dtype=np.float64),
            "wgdl": np.asarray(rec_wgdl, dtype=np.float64),
        },
        "ev": {
            "t": np.asarray(ev_t, dtype=np.float64),
            "kind": np.asarray(ev_kind, dtype=np.int64),
            "par1": np.asarray(ev_par1, dtype=np.int64),
            "par2": np.asarray(ev_par2, dtype=np.int64),
            "k": np.asarray(ev_k, dtype=np.int64),
            "loc": np.asarray(ev_loc, dtype=np.float64),
            "n_after": np.asarray(ev_nafter, dtype=np.int64),
        },
    }

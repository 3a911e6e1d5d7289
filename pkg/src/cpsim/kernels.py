"""Event-driven execution kernels (numba).

One Gillespie-style loop realizes the contact process directly from
exponential clocks: total rate = (#infected) * 1 + sum of per-site arrow
rates, recovery vs arrow chosen proportionally, the arrow source drawn by
rejection against the maximal per-site arrow rate, the channel by a
cumulative scan over directed slots.  Arrow channels whose target is EXIT
(-1) fire and are counted but never applied, exactly like suppressed
boundary arrows in the stream executor.

Randomness is an inline splitmix64 stream per call, so a run is a pure
function of its seed and the kernels are nogil-parallel safe.
"""

from __future__ import annotations

import numpy as np
from numba import njit

U64 = np.uint64
_GOLD = U64(0x9E3779B97F4A7C15)
_MIX1 = U64(0xBF58476D1CE4E5B9)
_MIX2 = U64(0x94D049BB133111EB)
_INV53 = 1.1102230246251565e-16
_REFRESH = 1 << 22  # resum float accumulators periodically


@njit(cache=True, nogil=True, inline="always")
def _mix(z):
    z = (z ^ (z >> U64(30))) * _MIX1
    z = (z ^ (z >> U64(27))) * _MIX2
    return z ^ (z >> U64(31))


@njit(cache=True, nogil=True)
def row_totals(rate):
    """Sequential per-row sums; the channel scan reproduces this order, so
    the cumulative scan is guaranteed to terminate inside the row."""
    n = rate.shape[0]
    out = np.zeros(n)
    for i in range(n):
        tot = 0.0
        for k in range(rate.shape[1]):
            tot += rate[i, k]
        out[i] = tot
    return out


@njit(cache=True, nogil=True)
def _contact_loop(
    neigh, rate, arr_tot, a_max, init_rows, horizon, seed,
    watch_row, win_lo, win_hi, budget, state, ever,
):
    n = neigh.shape[0]
    n_slots = neigh.shape[1]
    act = np.empty(n, dtype=np.int64)
    where = np.full(n, -1, dtype=np.int64)
    k_act = 0
    for idx in range(len(init_rows)):
        r = init_rows[idx]
        if state[r] == 0:
            state[r] = 1
            ever[r] = 1
            act[k_act] = r
            where[r] = k_act
            k_act += 1
    sum_a = 0.0
    for j in range(k_act):
        sum_a += arr_tot[act[j]]

    max_pop = k_act
    ext_time = -1.0
    supp = 0
    applied = 0
    watch_inf = watch_row >= 0 and state[watch_row] == 1
    watch_since = 0.0 if watch_inf else -1.0
    watch_first = 0.0 if watch_inf else -1.0
    watch_hit = False
    exceeded = False
    s = U64(seed)
    t = 0.0
    until_refresh = _REFRESH

    while k_act > 0:
        if sum_a < 0.0:
            sum_a = 0.0
        total = k_act * 1.0 + sum_a
        s += _GOLD
        u = (_mix(s) >> U64(11)) * _INV53
        t -= np.log(1.0 - u) / total
        if t >= horizon:
            break
        s += _GOLD
        pick = ((_mix(s) >> U64(11)) * _INV53) * total
        if pick < k_act:
            j = int(pick)
            if j >= k_act:
                j = k_act - 1
            x = act[j]
            state[x] = 0
            applied += 1
            k_act -= 1
            last = act[k_act]
            act[j] = last
            where[last] = j
            where[x] = -1
            sum_a -= arr_tot[x]
            if x == watch_row:
                watch_inf = False
                if watch_since >= 0.0 and watch_since <= win_hi and t >= win_lo:
                    watch_hit = True
                watch_since = -1.0
            if k_act == 0:
                ext_time = t
                break
        else:
            if a_max <= 0.0:
                continue
            x = -1
            tries = 0
            while x < 0:
                s += _GOLD
                j = int(((_mix(s) >> U64(11)) * _INV53) * k_act)
                if j >= k_act:
                    j = k_act - 1
                cand = act[j]
                s += _GOLD
                if ((_mix(s) >> U64(11)) * _INV53) * a_max < arr_tot[cand]:
                    x = cand
                tries += 1
                if tries > 4096:
                    break  # float residue picked a dead branch; resample event
            if x < 0:
                sum_a = 0.0
                for j in range(k_act):
                    sum_a += arr_tot[act[j]]
                continue
            s += _GOLD
            target_w = ((_mix(s) >> U64(11)) * _INV53) * arr_tot[x]
            acc = 0.0
            slot = n_slots - 1
            for kk in range(n_slots):
                acc += rate[x, kk]
                if target_w < acc:
                    slot = kk
                    break
            y = neigh[x, slot]
            if y == -1:
                supp += 1
            elif y >= 0 and state[y] == 0:
                state[y] = 1
                ever[y] = 1
                applied += 1
                act[k_act] = y
                where[y] = k_act
                k_act += 1
                sum_a += arr_tot[y]
                if k_act > max_pop:
                    max_pop = k_act
                if y == watch_row:
                    watch_inf = True
                    watch_since = t
                    if watch_first < 0.0:
                        watch_first = t
        if applied > budget:
            exceeded = True
            break
        until_refresh -= 1
        if until_refresh <= 0:
            until_refresh = _REFRESH
            sum_a = 0.0
            for j in range(k_act):
                sum_a += arr_tot[act[j]]

    end_t = horizon if ext_time < 0.0 else ext_time
    if watch_inf and watch_since >= 0.0:
        if watch_since <= win_hi and end_t >= win_lo:
            watch_hit = True
    return (
        ext_time, float(max_pop), float(supp), float(applied),
        1.0 if watch_hit else 0.0, watch_first, 1.0 if exceeded else 0.0,
    )


def run_contact(
    neigh, rate, init_rows, horizon, seed, watch_row, win_lo, win_hi,
    budget, state, ever, totals=None, a_max=None,
):
    if totals is None:
        totals = row_totals(rate)
    if a_max is None:
        a_max = float(totals.max()) if len(totals) else 0.0
    return _contact_loop(
        neigh, rate, totals, a_max, init_rows, float(horizon),
        U64(seed & 0xFFFFFFFFFFFFFFFF), int(watch_row),
        float(win_lo), float(win_hi), int(budget), state, ever,
    )


@njit(cache=True, nogil=True)
def _block_loop(
    neigh, rate, arr_tot, a_max, init_rows, horizon, seed, budget,
    mode, target_mask, need, face_pos, face_len, run_len, state,
):
    """Run until a target fires, extinction, the horizon, or the budget.

    mode 0: success when all ``need`` sites of target_mask are infected at
    once.  mode 1: success when ``run_len`` consecutive sites of the face
    (positions via face_pos) are infected at once; only an infection on the
    face can complete a run, so the scan is local to the flipped position.
    """
    n = neigh.shape[0]
    n_slots = neigh.shape[1]
    act = np.empty(n, dtype=np.int64)
    where = np.full(n, -1, dtype=np.int64)
    face_state = np.zeros(face_len if face_len > 0 else 1, dtype=np.uint8)
    k_act = 0
    have = 0
    for idx in range(len(init_rows)):
        r = init_rows[idx]
        if state[r] == 0:
            state[r] = 1
            act[k_act] = r
            where[r] = k_act
            k_act += 1
            if mode == 0:
                if target_mask[r] == 1:
                    have += 1
            else:
                fp = face_pos[r]
                if fp >= 0:
                    face_state[fp] = 1

    # time-0 check
    if mode == 0:
        if have == need:
            return 1.0, 0.0, 0.0, 0.0, 0.0, -1.0
    else:
        run = 0
        for i in range(face_len):
            if face_state[i] == 1:
                run += 1
                if run >= run_len:
                    return 1.0, 0.0, 0.0, 0.0, 0.0, float(i - run_len + 1)
            else:
                run = 0

    sum_a = 0.0
    for j in range(k_act):
        sum_a += arr_tot[act[j]]
    supp = 0
    applied = 0
    s = U64(seed)
    t = 0.0
    until_refresh = _REFRESH

    while k_act > 0:
        if sum_a < 0.0:
            sum_a = 0.0
        total = k_act * 1.0 + sum_a
        s += _GOLD
        u = (_mix(s) >> U64(11)) * _INV53
        t -= np.log(1.0 - u) / total
        if t >= horizon:
            break
        s += _GOLD
        pick = ((_mix(s) >> U64(11)) * _INV53) * total
        if pick < k_act:
            j = int(pick)
            if j >= k_act:
                j = k_act - 1
            x = act[j]
            state[x] = 0
            applied += 1
            k_act -= 1
            last = act[k_act]
            act[j] = last
            where[last] = j
            where[x] = -1
            sum_a -= arr_tot[x]
            if mode == 0:
                if target_mask[x] == 1:
                    have -= 1
            else:
                fp = face_pos[x]
                if fp >= 0:
                    face_state[fp] = 0
            if k_act == 0:
                break
        else:
            if a_max <= 0.0:
                continue
            x = -1
            tries = 0
            while x < 0:
                s += _GOLD
                j = int(((_mix(s) >> U64(11)) * _INV53) * k_act)
                if j >= k_act:
                    j = k_act - 1
                cand = act[j]
                s += _GOLD
                if ((_mix(s) >> U64(11)) * _INV53) * a_max < arr_tot[cand]:
                    x = cand
                tries += 1
                if tries > 4096:
                    break
            if x < 0:
                sum_a = 0.0
                for j in range(k_act):
                    sum_a += arr_tot[act[j]]
                continue
            s += _GOLD
            target_w = ((_mix(s) >> U64(11)) * _INV53) * arr_tot[x]
            acc = 0.0
            slot = n_slots - 1
            for kk in range(n_slots):
                acc += rate[x, kk]
                if target_w < acc:
                    slot = kk
                    break
            y = neigh[x, slot]
            if y == -1:
                supp += 1
            elif y >= 0 and state[y] == 0:
                state[y] = 1
                applied += 1
                act[k_act] = y
                where[y] = k_act
                k_act += 1
                sum_a += arr_tot[y]
                if mode == 0:
                    if target_mask[y] == 1:
                        have += 1
                        if have == need:
                            return 1.0, t, float(supp), float(applied), 0.0, -1.0
                else:
                    fp = face_pos[y]
                    if fp >= 0:
                        face_state[fp] = 1
                        lo = fp
                        while lo > 0 and face_state[lo - 1] == 1:
                            lo -= 1
                        hi = fp
                        while hi < face_len - 1 and face_state[hi + 1] == 1:
                            hi += 1
                        if hi - lo + 1 >= run_len:
                            return 1.0, t, float(supp), float(applied), 0.0, float(lo)
        if applied > budget:
            return 0.0, -1.0, float(supp), float(applied), 1.0, -1.0
        until_refresh -= 1
        if until_refresh <= 0:
            until_refresh = _REFRESH
            sum_a = 0.0
            for j in range(k_act):
                sum_a += arr_tot[act[j]]

    return 0.0, -1.0, float(supp), float(applied), 0.0, -1.0


@njit(cache=True, nogil=True)
def _sweep_loop(
    neigh, rate, arr_tot, a_max, init_rows, horizon, seed, budget,
    fracs, state2d,
):
    """Coupled lambda grid in one pass.

    The level with frac 1.0 (last; fracs ascend) is the driving process at
    the full rate table.  Every arrow carries a thinning mark u; level g
    applies the arrow iff u < fracs[g], which realizes the nested-thinning
    coupling: level g stays a subset of level g+1 pathwise, while each level
    taken alone is the contact process at frac * rate.
    """
    n = neigh.shape[0]
    n_slots = neigh.shape[1]
    n_lev = len(fracs)
    act = np.empty(n, dtype=np.int64)
    where = np.full(n, -1, dtype=np.int64)
    top = n_lev - 1
    k = np.zeros(n_lev, dtype=np.int64)
    ext_time = np.full(n_lev, -1.0)
    max_pop = np.zeros(n_lev, dtype=np.int64)
    supp = np.zeros(n_lev, dtype=np.int64)

    k_act = 0
    for idx in range(len(init_rows)):
        r = init_rows[idx]
        if state2d[top, r] == 0:
            for g in range(n_lev):
                state2d[g, r] = 1
            act[k_act] = r
            where[r] = k_act
            k_act += 1
    for g in range(n_lev):
        k[g] = k_act
        max_pop[g] = k_act
        if k_act == 0:
            ext_time[g] = 0.0

    sum_a = 0.0
    for j in range(k_act):
        sum_a += arr_tot[act[j]]
    applied = 0
    exceeded = False
    s = U64(seed)
    t = 0.0
    until_refresh = _REFRESH

    while k_act > 0:
        if sum_a < 0.0:
            sum_a = 0.0
        total = k_act * 1.0 + sum_a
        s += _GOLD
        u = (_mix(s) >> U64(11)) * _INV53
        t -= np.log(1.0 - u) / total
        if t >= horizon:
            break
        s += _GOLD
        pick = ((_mix(s) >> U64(11)) * _INV53) * total
        if pick < k_act:
            j = int(pick)
            if j >= k_act:
                j = k_act - 1
            x = act[j]
            applied += 1
            for g in range(n_lev):
                if state2d[g, x] == 1:
                    state2d[g, x] = 0
                    k[g] -= 1
                    if k[g] == 0 and ext_time[g] < 0.0:
                        ext_time[g] = t
            k_act = k[top]
            kk = k_act
            act[j] = act[kk]
            where[act[kk]] = j
            where[x] = -1
            sum_a -= arr_tot[x]
            if k_act == 0:
                break
        else:
            if a_max <= 0.0:
                continue
            x = -1
            tries = 0
            while x < 0:
                s += _GOLD
                j = int(((_mix(s) >> U64(11)) * _INV53) * k_act)
                if j >= k_act:
                    j = k_act - 1
                cand = act[j]
                s += _GOLD
                if ((_mix(s) >> U64(11)) * _INV53) * a_max < arr_tot[cand]:
                    x = cand
                tries += 1
                if tries > 4096:
                    break
            if x < 0:
                sum_a = 0.0
                for j in range(k_act):
                    sum_a += arr_tot[act[j]]
                continue
            s += _GOLD
            target_w = ((_mix(s) >> U64(11)) * _INV53) * arr_tot[x]
            acc = 0.0
            slot = n_slots - 1
            for kk in range(n_slots):
                acc += rate[x, kk]
                if target_w < acc:
                    slot = kk
                    break
            y = neigh[x, slot]
            s += _GOLD
            u_thin = (_mix(s) >> U64(11)) * _INV53
            for g in range(n_lev):
                if u_thin < fracs[g] and state2d[g, x] == 1:
                    if y == -1:
                        supp[g] += 1
                    elif y >= 0 and state2d[g, y] == 0:
                        state2d[g, y] = 1
                        k[g] += 1
                        if k[g] > max_pop[g]:
                            max_pop[g] = k[g]
                        if g == top:
                            applied += 1
                            act[k_act] = y
                            where[y] = k_act
                            k_act += 1
                            sum_a += arr_tot[y]
        if applied > budget:
            exceeded = True
            break
        until_refresh -= 1
        if until_refresh <= 0:
            until_refresh = _REFRESH
            sum_a = 0.0
            for j in range(k_act):
                sum_a += arr_tot[act[j]]

    return ext_time, max_pop, supp, float(applied), 1.0 if exceeded else 0.0


def run_sweep(neigh, rate, init_rows, horizon, seed, budget, fracs, totals=None, a_max=None):
    """Coupled thinned levels; fracs must ascend and end at 1.0."""
    fr = np.asarray(fracs, dtype=np.float64)
    if len(fr) == 0 or abs(fr[-1] - 1.0) > 1e-12 or np.any(np.diff(fr) < 0):
        raise ValueError("fracs must be ascending and end at 1.0")
    if totals is None:
        totals = row_totals(rate)
    if a_max is None:
        a_max = float(totals.max()) if len(totals) else 0.0
    state2d = np.zeros((len(fr), neigh.shape[0]), dtype=np.uint8)
    out = _sweep_loop(
        neigh, rate, totals, a_max, np.asarray(init_rows, dtype=np.int64),
        float(horizon), U64(seed & 0xFFFFFFFFFFFFFFFF), int(budget), fr, state2d,
    )
    ext_time, max_pop, supp, applied, exceeded = out
    return ext_time, max_pop, supp, int(applied), bool(exceeded), state2d


@njit(cache=True, nogil=True)
def _block_sweep_loop(
    neigh, rate, arr_tot, a_max, init_rows, horizon, seed, budget,
    fracs, face_pos, face_len, run_len, state2d,
):
    """Coupled thinned levels with per-level face-run detection.

    Same nesting device as _sweep_loop (arrow mark u applied at level g iff
    u < fracs[g]; recoveries shared), but each level watches the face for a
    fully infected run of run_len sites and records its first completion
    time.  A level is terminal once it has either completed a run or died;
    the loop exits when every level is terminal.
    """
    n = neigh.shape[0]
    n_slots = neigh.shape[1]
    n_lev = len(fracs)
    top = n_lev - 1
    act = np.empty(n, dtype=np.int64)
    where = np.full(n, -1, dtype=np.int64)
    face_state = np.zeros((n_lev, face_len), dtype=np.uint8)
    k = np.zeros(n_lev, dtype=np.int64)
    succ = np.zeros(n_lev, dtype=np.uint8)
    hit_time = np.full(n_lev, -1.0)
    supp = np.zeros(n_lev, dtype=np.int64)

    k_act = 0
    for idx in range(len(init_rows)):
        r = init_rows[idx]
        if state2d[top, r] == 0:
            for g in range(n_lev):
                state2d[g, r] = 1
            fp = face_pos[r]
            if fp >= 0:
                for g in range(n_lev):
                    face_state[g, fp] = 1
            act[k_act] = r
            where[r] = k_act
            k_act += 1
    for g in range(n_lev):
        k[g] = k_act

    # time-0 check (shared by all levels: initial states coincide)
    run = 0
    for i in range(face_len):
        if face_state[top, i] == 1:
            run += 1
            if run >= run_len:
                for g in range(n_lev):
                    succ[g] = 1
                    hit_time[g] = 0.0
                return succ, hit_time, supp, 0.0, 0.0
        else:
            run = 0

    open_lev = n_lev
    if k_act == 0:
        open_lev = 0

    sum_a = 0.0
    for j in range(k_act):
        sum_a += arr_tot[act[j]]
    applied = 0
    exceeded = False
    s = U64(seed)
    t = 0.0
    until_refresh = _REFRESH

    while k_act > 0 and open_lev > 0:
        if sum_a < 0.0:
            sum_a = 0.0
        total = k_act * 1.0 + sum_a
        s += _GOLD
        u = (_mix(s) >> U64(11)) * _INV53
        t -= np.log(1.0 - u) / total
        if t >= horizon:
            break
        s += _GOLD
        pick = ((_mix(s) >> U64(11)) * _INV53) * total
        if pick < k_act:
            j = int(pick)
            if j >= k_act:
                j = k_act - 1
            x = act[j]
            applied += 1
            fp = face_pos[x]
            for g in range(n_lev):
                if state2d[g, x] == 1:
                    state2d[g, x] = 0
                    k[g] -= 1
                    if fp >= 0:
                        face_state[g, fp] = 0
                    if k[g] == 0 and succ[g] == 0:
                        open_lev -= 1
            k_act = k[top]
            act[j] = act[k_act]
            where[act[k_act]] = j
            where[x] = -1
            sum_a -= arr_tot[x]
        else:
            if a_max <= 0.0:
                continue
            x = -1
            tries = 0
            while x < 0:
                s += _GOLD
                j = int(((_mix(s) >> U64(11)) * _INV53) * k_act)
                if j >= k_act:
                    j = k_act - 1
                cand = act[j]
                s += _GOLD
                if ((_mix(s) >> U64(11)) * _INV53) * a_max < arr_tot[cand]:
                    x = cand
                tries += 1
                if tries > 4096:
                    break
            if x < 0:
                sum_a = 0.0
                for j in range(k_act):
                    sum_a += arr_tot[act[j]]
                continue
            s += _GOLD
            target_w = ((_mix(s) >> U64(11)) * _INV53) * arr_tot[x]
            acc = 0.0
            slot = n_slots - 1
            for kk in range(n_slots):
                acc += rate[x, kk]
                if target_w < acc:
                    slot = kk
                    break
            y = neigh[x, slot]
            s += _GOLD
            u_thin = (_mix(s) >> U64(11)) * _INV53
            for g in range(n_lev):
                if u_thin < fracs[g] and state2d[g, x] == 1:
                    if y == -1:
                        supp[g] += 1
                    elif y >= 0 and state2d[g, y] == 0:
                        state2d[g, y] = 1
                        k[g] += 1
                        if g == top:
                            applied += 1
                            act[k_act] = y
                            where[y] = k_act
                            k_act += 1
                            sum_a += arr_tot[y]
                        fp = face_pos[y]
                        if fp >= 0 and succ[g] == 0:
                            face_state[g, fp] = 1
                            lo = fp
                            while lo > 0 and face_state[g, lo - 1] == 1:
                                lo -= 1
                            hi = fp
                            while hi < face_len - 1 and face_state[g, hi + 1] == 1:
                                hi += 1
                            if hi - lo + 1 >= run_len:
                                succ[g] = 1
                                hit_time[g] = t
                                open_lev -= 1
                        elif fp >= 0:
                            face_state[g, fp] = 1
        if applied > budget:
            exceeded = True
            break
        until_refresh -= 1
        if until_refresh <= 0:
            until_refresh = _REFRESH
            sum_a = 0.0
            for j in range(k_act):
                sum_a += arr_tot[act[j]]

    return succ, hit_time, supp, float(applied), 1.0 if exceeded else 0.0


def run_block_sweep(
    neigh, rate, init_rows, horizon, seed, budget,
    fracs, face_rows, run_len, totals=None, a_max=None,
):
    """Coupled thinned block runs; fracs must ascend and end at 1.0.

    Returns (success bool[G], hit_time (None where missed), suppressions[G],
    applied, exceeded).  Success sets are nested across levels pathwise.
    """
    fr = np.asarray(fracs, dtype=np.float64)
    if len(fr) == 0 or abs(fr[-1] - 1.0) > 1e-12 or np.any(np.diff(fr) < 0):
        raise ValueError("fracs must be ascending and end at 1.0")
    if totals is None:
        totals = row_totals(rate)
    if a_max is None:
        a_max = float(totals.max()) if len(totals) else 0.0
    n = neigh.shape[0]
    state2d = np.zeros((len(fr), n), dtype=np.uint8)
    face_pos = np.full(n, -1, dtype=np.int64)
    for pos, r in enumerate(face_rows):
        face_pos[int(r)] = pos
    succ, hit_time, supp, applied, exceeded = _block_sweep_loop(
        neigh, rate, totals, a_max, np.asarray(init_rows, dtype=np.int64),
        float(horizon), U64(seed & 0xFFFFFFFFFFFFFFFF), int(budget),
        fr, face_pos, len(face_rows), int(run_len), state2d,
    )
    times = [float(hit_time[g]) if succ[g] else None for g in range(len(fr))]
    return succ.astype(bool), times, supp.astype(int), int(applied), bool(exceeded)


def run_block(
    neigh, rate, init_rows, horizon, seed, budget,
    target_mask=None, face_rows=None, run_len=0, totals=None, a_max=None,
):
    """Python wrapper: target bitmap mode (all-of-mask) or face-run mode.

    Returns (hit, hit_time, suppressions, applied, exceeded, run_start) where
    run_start is the face-local index of the first site of the completed run
    (None in mask mode or on a miss).  The run start is what seeds the next
    block when blocks are chained.
    """
    if totals is None:
        totals = row_totals(rate)
    if a_max is None:
        a_max = float(totals.max()) if len(totals) else 0.0
    n = neigh.shape[0]
    state = np.zeros(n, dtype=np.uint8)
    if face_rows is not None:
        face_pos = np.full(n, -1, dtype=np.int64)
        for pos, r in enumerate(face_rows):
            face_pos[int(r)] = pos
        out = _block_loop(
            neigh, rate, totals, a_max, np.asarray(init_rows, dtype=np.int64),
            float(horizon), U64(seed & 0xFFFFFFFFFFFFFFFF), int(budget),
            1, np.zeros(1, dtype=np.uint8), 0, face_pos, len(face_rows),
            int(run_len), state,
        )
    else:
        mask = np.asarray(target_mask, dtype=np.uint8)
        need = int(mask.sum())
        out = _block_loop(
            neigh, rate, totals, a_max, np.asarray(init_rows, dtype=np.int64),
            float(horizon), U64(seed & 0xFFFFFFFFFFFFFFFF), int(budget),
            0, mask, need, np.full(1, -1, dtype=np.int64), 0, 0, state,
        )
    hit, hit_time, supp, applied, exceeded, pos = out
    return (
        bool(hit),
        (float(hit_time) if hit else None),
        int(supp),
        int(applied),
        bool(exceeded),
        (int(pos) if hit and pos >= 0.0 else None),
    )

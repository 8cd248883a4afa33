"""
JIT-compiled event loops.

All kernels take an explicit ``numpy.random.Generator`` so that every replica
owns its stream. Positions are 0-based here. Bounded integers are drawn as
``int(u * n)`` with ``u = rng.random()``; the bias is below 2**-50.

Rate tables arrive flattened: ``n_bulk`` unit-rate windows of length ``k``
starting at 0, 1, ..., n_bulk - 1, followed by extra (boundary) windows with
``extra_starts``, ``extra_lens`` and cumulative rates ``extra_cum``.
A censoring schedule is ``sched_times`` (breakpoints) with one row of
``sched_masks`` per segment; ``sched_masks[s, p] != 0`` censors the edge
between 0-based positions p and p + 1.
"""

import math

import numpy as np
from numba import njit

NO_SCHEDULE_TIMES = np.zeros(0, dtype=np.float64)


def no_schedule_masks(N):
    return np.zeros((0, max(N - 1, 1)), dtype=np.uint8)


@njit(cache=True, nogil=True)
def _exp(rng, rate):
    return -math.log(1.0 - rng.random()) / rate


@njit(cache=True, nogil=True)
def _choose(rng, n_bulk, k, extra_starts, extra_lens, extra_cum, total):
    u = rng.random() * total
    if u < n_bulk:
        s = int(u)
        if s >= n_bulk:
            s = n_bulk - 1
        return s, k
    u -= n_bulk
    lo = 0
    hi = extra_cum.shape[0] - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if extra_cum[mid] > u:
            hi = mid
        else:
            lo = mid + 1
    return extra_starts[lo], extra_lens[lo]


@njit(cache=True, nogil=True)
def _shuffle_range(rng, arr, s, e):
    # uniform permutation of arr[s:e]
    for a in range(e - s - 1, 0, -1):
        b = int(rng.random() * (a + 1))
        if b > a:
            b = a
        tmp = arr[s + a]
        arr[s + a] = arr[s + b]
        arr[s + b] = tmp


@njit(cache=True, nogil=True)
def _segment(sched_times, t):
    # index of the schedule segment containing t, -1 before the first breakpoint
    lo = 0
    hi = sched_times.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if sched_times[mid] <= t:
            lo = mid + 1
        else:
            hi = mid
    return lo - 1


@njit(cache=True, nogil=True)
def _censored_shuffle(rng, arr, s, L, sched_masks, seg):
    if seg < 0:
        _shuffle_range(rng, arr, s, s + L)
        return
    start = s
    for p in range(s, s + L - 1):
        if sched_masks[seg, p] != 0:
            _shuffle_range(rng, arr, start, p + 1)
            start = p + 1
    _shuffle_range(rng, arr, start, s + L)


@njit(cache=True, nogil=True)
def advance(arr, t0, t1, n_bulk, k, extra_starts, extra_lens, extra_cum, total,
            sched_times, sched_masks, rng):
    """Run the chain on ``arr`` in place over (t0, t1]; returns the event count."""
    if total <= 0.0:
        return 0
    t = t0
    n = 0
    has_sched = sched_times.shape[0] > 0
    while True:
        t += _exp(rng, total)
        if t > t1:
            break
        s, L = _choose(rng, n_bulk, k, extra_starts, extra_lens, extra_cum, total)
        if has_sched:
            _censored_shuffle(rng, arr, s, L, sched_masks, _segment(sched_times, t))
        else:
            _shuffle_range(rng, arr, s, s + L)
        n += 1
    return n


@njit(cache=True, nogil=True)
def sample_path(arr0, times, n_bulk, k, extra_starts, extra_lens, extra_cum, total,
                sched_times, sched_masks, rng):
    """States at each (sorted) time in ``times``, one row per time."""
    arr = arr0.copy()
    out = np.empty((times.shape[0], arr.shape[0]), dtype=arr.dtype)
    t = 0.0
    for i in range(times.shape[0]):
        advance(arr, t, times[i], n_bulk, k, extra_starts, extra_lens, extra_cum, total,
                sched_times, sched_masks, rng)
        t = times[i]
        out[i, :] = arr
    return out


@njit(cache=True, nogil=True)
def paired_censored_path(arr0, times, n_bulk, k, extra_starts, extra_lens, extra_cum,
                         total, sched_times, sched_masks, share_blocks, rng):
    """Censored and uncensored copies driven by the same (time, window) stream.

    Block permutations are drawn independently for the two copies unless
    ``share_blocks`` is set, in which case an unsplit window receives the same
    permutation in both.
    """
    N = arr0.shape[0]
    c = arr0.copy()
    u = arr0.copy()
    out_c = np.empty((times.shape[0], N), dtype=arr0.dtype)
    out_u = np.empty((times.shape[0], N), dtype=arr0.dtype)
    perm = np.empty(N, dtype=np.int64)
    tmp = np.empty(N, dtype=arr0.dtype)
    t = 0.0
    i = 0
    has_sched = sched_times.shape[0] > 0
    while i < times.shape[0]:
        t_next = t + _exp(rng, total) if total > 0.0 else np.inf
        while i < times.shape[0] and times[i] < t_next:
            out_c[i, :] = c
            out_u[i, :] = u
            i += 1
        if i >= times.shape[0]:
            break
        t = t_next
        s, L = _choose(rng, n_bulk, k, extra_starts, extra_lens, extra_cum, total)
        seg = _segment(sched_times, t) if has_sched else -1
        split = False
        if seg >= 0:
            for p in range(s, s + L - 1):
                if sched_masks[seg, p] != 0:
                    split = True
                    break
        if share_blocks and not split:
            for a in range(L):
                perm[a] = a
            _shuffle_range(rng, perm, 0, L)
            for a in range(L):
                tmp[a] = c[s + perm[a]]
            for a in range(L):
                c[s + a] = tmp[a]
            for a in range(L):
                tmp[a] = u[s + perm[a]]
            for a in range(L):
                u[s + a] = tmp[a]
        else:
            _censored_shuffle(rng, c, s, L, sched_masks, seg)
            _shuffle_range(rng, u, s, s + L)
    return out_c, out_u


@njit(cache=True, nogil=True)
def coupled_block(a, b, s, L, rng, scratch_pos, scratch_a, scratch_b, scratch_agree):
    """Canonical coupling update of window [s, s + L) for copies a and b."""
    n_agree = 0
    na = 0
    nb = 0
    for p in range(s, s + L):
        if a[p] == b[p]:
            scratch_agree[n_agree] = a[p]
            n_agree += 1
        else:
            scratch_a[na] = a[p]
            na += 1
            scratch_b[nb] = b[p]
            nb += 1
    for q in range(L):
        scratch_pos[q] = s + q
    _shuffle_range(rng, scratch_pos, 0, L)
    _shuffle_range(rng, scratch_a, 0, na)
    _shuffle_range(rng, scratch_b, 0, nb)
    for q in range(n_agree):
        a[scratch_pos[q]] = scratch_agree[q]
        b[scratch_pos[q]] = scratch_agree[q]
    for q in range(na):
        a[scratch_pos[n_agree + q]] = scratch_a[q]
        b[scratch_pos[n_agree + q]] = scratch_b[q]


@njit(cache=True, nogil=True)
def coalesce(a0, b0, horizon, n_bulk, k, extra_starts, extra_lens, extra_cum, total, rng):
    """Per-label first agreement times under the canonical coupling.

    Labels are 1..N. Returns (tau, finished, violated): tau[l - 1] is the
    first agreement time of label l (``horizon`` when not finished) and
    ``violated`` reports whether any agreement was ever lost.
    """
    N = a0.shape[0]
    a = a0.copy()
    b = b0.copy()
    tau = np.full(N, horizon)
    finished = np.zeros(N, dtype=np.bool_)
    remaining = N
    for p in range(N):
        if a[p] == b[p]:
            finished[a[p] - 1] = True
            tau[a[p] - 1] = 0.0
            remaining -= 1
    sp = np.empty(N, dtype=np.int64)
    sa = np.empty(N, dtype=a0.dtype)
    sb = np.empty(N, dtype=a0.dtype)
    sg = np.empty(N, dtype=a0.dtype)
    violated = False
    t = 0.0
    while remaining > 0 and total > 0.0:
        t += _exp(rng, total)
        if t > horizon:
            break
        s, L = _choose(rng, n_bulk, k, extra_starts, extra_lens, extra_cum, total)
        coupled_block(a, b, s, L, rng, sp, sa, sb, sg)
        for p in range(s, s + L):
            lab = a[p]
            if lab == b[p]:
                if not finished[lab - 1]:
                    finished[lab - 1] = True
                    tau[lab - 1] = t
                    remaining -= 1
            elif finished[lab - 1]:
                violated = True
    return tau, finished, violated


@njit(cache=True, nogil=True)
def card_walk(x0, thresholds, horizon, ptr, idx_starts, idx_lens, cum, rng):
    """Position of one tracked card; other cards are irrelevant to its law.

    ``ptr``/``idx_*``/``cum`` list, per 0-based position p, the windows
    containing p and their cumulative rates. Returns the first times the card
    sits strictly beyond each 0-based threshold (``horizon`` if never) and a
    flag per threshold.
    """
    m = thresholds.shape[0]
    hit = np.full(m, horizon)
    done = np.zeros(m, dtype=np.bool_)
    left = m
    p = x0
    for j in range(m):
        if p > thresholds[j]:
            hit[j] = 0.0
            done[j] = True
            left -= 1
    t = 0.0
    while left > 0:
        lo = ptr[p]
        hi = ptr[p + 1]
        rate = cum[hi - 1]
        t += _exp(rng, rate)
        if t > horizon:
            break
        u = rng.random() * rate
        a = lo
        b = hi - 1
        while a < b:
            mid = (a + b) // 2
            if cum[mid] > u:
                b = mid
            else:
                a = mid + 1
        L = idx_lens[a]
        off = int(rng.random() * L)
        if off >= L:
            off = L - 1
        p = idx_starts[a] + off
        for j in range(m):
            if not done[j] and p > thresholds[j]:
                hit[j] = t
                done[j] = True
                left -= 1
    return hit, done

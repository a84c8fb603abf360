"""Jitted path simulation.

Paths are simulated by thinning against a constant dominating rate ``R``
(the largest total jump intensity in the schedule). Each proposal consumes two
draws from the path's stream: one for the exponential waiting time and one
that decides reject / jump target / kill. All kernels share ``_step`` so that a
recorded path and a fused exit computation see the same randomness.
"""
import math

import numpy as np
from numba import njit, prange

from ._rng import derive, uniform

NEITHER = 0  # horizon reached with no crossing
UP = 1
DOWN = 2
KILLED = 3  # killed before any crossing

_INF = np.inf


@njit(cache=True)
def _advance_segment(bps, seg, t):
    while seg < bps.size and t >= bps[seg]:
        seg += 1
    return seg


@njit(cache=True)
def _step(mats, bps, R, j, t, seg, key, ctr):
    """Propose the next event from state ``j`` at time ``t``.

    Returns ``(t_next, new_state, seg, ctr)``; ``new_state`` is ``j`` for a
    rejected proposal and ``-1`` for killing. ``t_next`` is ``inf`` when the
    schedule has no intensity at all.
    """
    if R <= 0.0:
        return _INF, j, seg, ctr
    u = uniform(key, ctr)
    t_next = t - math.log(u) / R
    w = uniform(key, ctr + 1) * R
    ctr += 2
    seg = _advance_segment(bps, seg, t_next)
    a = mats[seg]
    if w >= -a[j, j]:
        return t_next, j, seg, ctr
    acc = 0.0
    m = a.shape[0]
    for k in range(m):
        if k != j:
            acc += a[j, k]
            if w < acc:
                return t_next, k, seg, ctr
    return t_next, -1, seg, ctr


@njit(cache=True)
def run_path(mats, bps, v, R, s, i, lminus, lplus, horizon, key, follow):
    """Simulate from ``(s, i)`` until the first exit of ``phi`` from ``[-lminus, lplus]``.

    Returns ``(kind, exit_time, exit_state, final_state)``. When ``follow`` is
    true the path is continued to ``horizon`` after an exit so that
    ``final_state`` is the state at ``horizon`` (``-1`` if killed); otherwise
    ``final_state`` is the state at the stopping point.
    """
    t = s
    j = i
    phi = 0.0
    ctr = 0
    seg = _advance_segment(bps, 0, s)
    kind = NEITHER
    xt = np.nan
    xs = -1
    while True:
        t_next, nj, seg, ctr = _step(mats, bps, R, j, t, seg, key, ctr)
        end = min(t_next, horizon)
        if kind == NEITHER:
            vj = v[j]
            d = end - t
            if vj > 0.0:
                if phi + vj * d > lplus:
                    kind = UP
                    xt = t + max(0.0, (lplus - phi) / vj)
                    xs = j
            elif phi + vj * d < -lminus:
                kind = DOWN
                xt = t + max(0.0, (-lminus - phi) / vj)
                xs = j
            if kind != NEITHER and not follow:
                return kind, xt, xs, j
            if kind == NEITHER:
                phi += vj * d
        if t_next >= horizon:
            return kind, xt, xs, j
        t = t_next
        if nj < 0:
            if kind == NEITHER:
                kind = KILLED
                xt = t
            return kind, xt, xs, -1
        j = nj


@njit(cache=True)
def record_path(mats, bps, R, s, i, horizon, key):
    """Full trajectory on ``[s, horizon]``: epochs, states and kill time (nan if alive)."""
    epochs = [s]
    states = [i]
    t = s
    j = i
    ctr = 0
    seg = _advance_segment(bps, 0, s)
    while True:
        t_next, nj, seg, ctr = _step(mats, bps, R, j, t, seg, key, ctr)
        if t_next >= horizon:
            return np.array(epochs), np.array(states), np.nan
        t = t_next
        if nj < 0:
            return np.array(epochs), np.array(states), t
        if nj != j:
            epochs.append(t)
            states.append(nj)
            j = nj


@njit(cache=True, parallel=True)
def exit_batch(mats, bps, v, R, s, i, lminus, lplus, horizon, domain_key, n, follow):
    kind = np.empty(n, np.int8)
    xt = np.empty(n)
    xs = np.empty(n, np.int64)
    final = np.empty(n, np.int64)
    for p in prange(n):
        k, a, b, c = run_path(mats, bps, v, R, s, i, lminus, lplus, horizon,
                              derive(domain_key, p), follow)
        kind[p] = k
        xt[p] = a
        xs[p] = b
        final[p] = c
    return kind, xt, xs, final


@njit(cache=True)
def first_event_time(mats, bps, R, s, i, horizon, key):
    t = s
    j = i
    ctr = 0
    seg = _advance_segment(bps, 0, s)
    while True:
        t_next, nj, seg, ctr = _step(mats, bps, R, j, t, seg, key, ctr)
        if t_next >= horizon:
            return _INF
        if nj != j:
            return t_next
        t = t_next


@njit(cache=True, parallel=True)
def first_event_batch(mats, bps, R, s, i, horizon, domain_key, n):
    out = np.empty(n)
    for p in prange(n):
        out[p] = first_event_time(mats, bps, R, s, i, horizon, derive(domain_key, p))
    return out


@njit(cache=True, parallel=True)
def nested_batch(mats, bps, v, R, s, i, lminus, lplus, horizon, up_decay, use_up,
                 inner_level, inner_decay, inner_span, inner_cutoff,
                 outer_key, inner_key, n_outer, n_inner):
    """Outer two-sided exits with a nested one-sided inner estimate at down-exits.

    Per outer path the value is

    * ``exp(-up_decay * t)`` at an up-exit when ``use_up`` is set,
    * at a down-exit ``(t, j)``: the mean over ``n_inner`` paths from ``(t, j)`` of
      ``exp(-inner_decay * tau)`` where ``tau`` is the first passage above
      ``inner_level`` (0 if it happens after ``min(t + inner_span, inner_cutoff)``
      or never),
    * 0 otherwise.
    """
    values = np.zeros(n_outer)
    kinds = np.empty(n_outer, np.int8)
    for p in prange(n_outer):
        k, t, j, _ = run_path(mats, bps, v, R, s, i, lminus, lplus, horizon,
                              derive(outer_key, p), False)
        kinds[p] = k
        if k == UP and use_up:
            values[p] = math.exp(-up_decay * t)
        elif k == DOWN:
            h_in = min(t + inner_span, inner_cutoff)
            if h_in <= t:
                continue
            pk = derive(inner_key, p)
            acc = 0.0
            for r in range(n_inner):
                ki, ti, _, _ = run_path(mats, bps, v, R, t, j, _INF, inner_level, h_in,
                                        derive(pk, r), False)
                if ki == UP:
                    acc += math.exp(-inner_decay * ti)
            values[p] = acc / n_inner
    return values, kinds

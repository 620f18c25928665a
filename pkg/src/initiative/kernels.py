"""Hot numeric kernels, each in a numba flavour (``*_nb``) and a numpy flavour (``*_np``).

The public names at the bottom of the module are bound to one flavour
according to :data:`initiative._backend.BACKEND`. Both flavours are always
importable so they can be cross-checked and benchmarked against each other.
"""
import math

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from ._backend import USE_NUMBA, njit

_LOG_2PI = math.log(2.0 * math.pi)
_TINY = 1e-300


# -- binomial log-likelihood matrix -------------------------------------------

@njit
def log_binomial_matrix_nb(k, n, grid, normal_approx, normal_min_total):
    m = k.shape[0]
    J = grid.shape[0]
    out = np.empty((m, J))
    for i in range(m):
        ki = k[i]
        ni = n[i]
        coef = math.lgamma(ni + 1.0) - math.lgamma(ki + 1.0) - math.lgamma(ni - ki + 1.0)
        use_normal = normal_approx and ni > normal_min_total
        for j in range(J):
            mu = grid[j]
            if mu <= 0.0:
                out[i, j] = 0.0 if ki == 0 else -np.inf
            elif mu >= 1.0:
                out[i, j] = 0.0 if ki == ni else -np.inf
            elif use_normal:
                var = ni * mu * (1.0 - mu)
                d = ki - ni * mu
                out[i, j] = -0.5 * (_LOG_2PI + math.log(var)) - d * d / (2.0 * var)
            else:
                out[i, j] = coef + ki * math.log(mu) + (ni - ki) * math.log1p(-mu)
    return out


def log_binomial_matrix_np(k, n, grid, normal_approx, normal_min_total):
    k = np.asarray(k, dtype=np.float64)[:, None]
    n = np.asarray(n, dtype=np.float64)[:, None]
    mu = np.asarray(grid, dtype=np.float64)[None, :]
    coef = gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)
    out = coef + xlogy(k, mu) + xlog1py(n - k, -mu)
    # exact zeros/ones at the domain edges, independent of the coefficient
    out = np.where(mu <= 0.0, np.where(k == 0, 0.0, -np.inf), out)
    out = np.where(mu >= 1.0, np.where(k == n, 0.0, -np.inf), out)
    if normal_approx:
        interior = (mu > 0.0) & (mu < 1.0)
        big = (n > normal_min_total) & interior
        if big.any():
            with np.errstate(divide="ignore", invalid="ignore"):
                var = n * mu * (1.0 - mu)
                norm = -0.5 * (_LOG_2PI + np.log(var)) - (k - n * mu) ** 2 / (2.0 * var)
            out = np.where(big, norm, out)
    return out


# -- EM on a fixed grid -------------------------------------------------------
#
# ``kt`` is the component likelihood matrix scaled so every row has max 1;
# the returned trace is the scaled log-likelihood (a constant offset from the
# true one).

@njit
def em_fit_nb(kt, w, f0, tol, max_iter, patience):
    m, J = kt.shape
    f = f0.copy()
    wsum = 0.0
    for i in range(m):
        wsum += w[i]
    trace = np.empty(max_iter + 1)
    p = np.empty(m)
    g = np.empty(J)

    ll = 0.0
    for i in range(m):
        s = 0.0
        for j in range(J):
            s += kt[i, j] * f[j]
        p[i] = max(s, _TINY)
        ll += w[i] * math.log(p[i])
    trace[0] = ll

    streak = 0
    it = 0
    converged = False
    while it < max_iter:
        for j in range(J):
            g[j] = 0.0
        for i in range(m):
            r = w[i] / p[i]
            for j in range(J):
                g[j] += kt[i, j] * r
        total = 0.0
        for j in range(J):
            f[j] = f[j] * g[j] / wsum
            total += f[j]
        for j in range(J):
            f[j] /= total
        it += 1
        new_ll = 0.0
        for i in range(m):
            s = 0.0
            for j in range(J):
                s += kt[i, j] * f[j]
            p[i] = max(s, _TINY)
            new_ll += w[i] * math.log(p[i])
        trace[it] = new_ll
        if abs(new_ll - ll) < tol:
            streak += 1
        else:
            streak = 0
        ll = new_ll
        if streak >= patience:
            converged = True
            break
    return f, trace[: it + 1].copy(), it, converged


def em_fit_np(kt, w, f0, tol, max_iter, patience):
    f = np.array(f0, dtype=np.float64, copy=True)
    wsum = w.sum()
    trace = np.empty(max_iter + 1)
    p = np.maximum(kt @ f, _TINY)
    ll = float(w @ np.log(p))
    trace[0] = ll
    streak = 0
    it = 0
    converged = False
    while it < max_iter:
        f *= (kt.T @ (w / p)) / wsum
        f /= f.sum()
        it += 1
        p = np.maximum(kt @ f, _TINY)
        new_ll = float(w @ np.log(p))
        trace[it] = new_ll
        streak = streak + 1 if abs(new_ll - ll) < tol else 0
        ll = new_ll
        if streak >= patience:
            converged = True
            break
    return f, trace[: it + 1].copy(), it, converged


# -- run lengths and turn statistics ------------------------------------------
#
# Sequences are packed flat: ``actors`` holds every sequence back to back and
# ``offsets`` (length S+1) marks their boundaries.

@njit
def run_lengths_nb(actors, offsets):
    out = np.empty(actors.shape[0], dtype=np.int64)
    for s in range(offsets.shape[0] - 1):
        lo = offsets[s]
        hi = offsets[s + 1]
        run = 0
        for k in range(lo, hi):
            if k > lo and actors[k] == actors[k - 1]:
                run += 1
            else:
                run = 1
            out[k] = run
    return out


def run_lengths_np(actors, offsets):
    n = actors.shape[0]
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    new_run = np.ones(n, dtype=bool)
    new_run[1:] = actors[1:] != actors[:-1]
    new_run[offsets[:-1][offsets[:-1] < n]] = True
    run_id = np.cumsum(new_run) - 1
    run_start = np.flatnonzero(new_run)
    return np.arange(n, dtype=np.int64) - run_start[run_id] + 1


@njit
def turn_counts_nb(actors, offsets):
    rl = run_lengths_nb(actors, offsets)
    top = 1
    for k in range(rl.shape[0]):
        if rl[k] > top:
            top = rl[k]
    obs = np.zeros(top + 1, dtype=np.int64)
    turns = np.zeros(top + 1, dtype=np.int64)
    for s in range(offsets.shape[0] - 1):
        for k in range(offsets[s], offsets[s + 1] - 1):
            obs[rl[k]] += 1
            if actors[k + 1] != actors[k]:
                turns[rl[k]] += 1
    return obs, turns


def turn_counts_np(actors, offsets):
    rl = run_lengths_np(actors, offsets)
    n = actors.shape[0]
    top = int(rl.max()) if n else 1
    k = np.arange(n, dtype=np.int64)
    seq = np.searchsorted(offsets, k, side="right") - 1
    has_next = k + 1 < offsets[seq + 1]
    turned = np.zeros(n, dtype=bool)
    if n > 1:
        turned[:-1] = actors[1:] != actors[:-1]
    turned &= has_next
    obs = np.bincount(rl[has_next], minlength=top + 1).astype(np.int64)
    turns = np.bincount(rl[turned], minlength=top + 1).astype(np.int64)
    return obs, turns


# -- feedback-driven actor sequences ------------------------------------------
#
# A sequence is a concatenation of alternating runs. Run lengths are drawn by
# inverse CDF from ``cdf`` (cdf[x-1] = P(run length <= x)), one uniform per
# run, so both flavours consume the same randomness.

@njit
def feedback_actors_nb(uniforms, first, cdf, seq_len):
    S = uniforms.shape[0]
    out = np.empty(S * seq_len, dtype=np.int8)
    for s in range(S):
        actor = first[s]
        pos = 0
        r = 0
        while pos < seq_len:
            u = uniforms[s, r]
            length = np.searchsorted(cdf, u) + 1
            if length > seq_len - pos:
                length = seq_len - pos
            for k in range(length):
                out[s * seq_len + pos + k] = actor
            pos += length
            actor = 1 - actor
            r += 1
    return out


def feedback_actors_np(uniforms, first, cdf, seq_len):
    S, R = uniforms.shape
    lengths = np.searchsorted(cdf, uniforms) + 1
    ends = np.minimum(np.cumsum(lengths, axis=1), seq_len)
    ends = ends + (np.arange(S, dtype=np.int64) * seq_len)[:, None]
    pos = np.arange(S * seq_len, dtype=np.int64)
    flat = np.searchsorted(ends.ravel(), pos, side="right")
    run_index = flat - (pos // seq_len) * R
    actor = (first[pos // seq_len].astype(np.int64) + run_index) % 2
    return actor.astype(np.int8)


# -- sliding-window distinct counts -------------------------------------------

@njit
def window_distinct_nb(ids, window, stride):
    n = ids.shape[0]
    if n < window:
        return np.zeros(0, dtype=np.int64)
    top = 0
    for k in range(n):
        if ids[k] > top:
            top = ids[k]
    counts = np.zeros(top + 1, dtype=np.int64)
    n_windows = (n - window) // stride + 1
    out = np.empty(n_windows, dtype=np.int64)
    distinct = 0
    for k in range(window):
        if counts[ids[k]] == 0:
            distinct += 1
        counts[ids[k]] += 1
    out[0] = distinct
    start = 0
    for wi in range(1, n_windows):
        for _ in range(stride):
            old = ids[start]
            counts[old] -= 1
            if counts[old] == 0:
                distinct -= 1
            new = ids[start + window]
            if counts[new] == 0:
                distinct += 1
            counts[new] += 1
            start += 1
        out[wi] = distinct
    return out


def window_distinct_np(ids, window, stride):
    ids = np.asarray(ids, dtype=np.int64)
    n = ids.shape[0]
    if n < window:
        return np.zeros(0, dtype=np.int64)
    # element k is the first occurrence of its id in every window that starts
    # after its previous occurrence and still contains k
    order = np.argsort(ids, kind="stable")
    prev = np.full(n, -1, dtype=np.int64)
    same = ids[order[1:]] == ids[order[:-1]]
    prev[order[1:][same]] = order[:-1][same]
    k = np.arange(n, dtype=np.int64)
    lo = np.maximum(prev + 1, k - window + 1)
    hi = np.minimum(k, n - window)
    ok = lo <= hi
    diff = np.zeros(n - window + 2, dtype=np.int64)
    np.add.at(diff, lo[ok], 1)
    np.add.at(diff, hi[ok] + 1, -1)
    per_start = np.cumsum(diff)[: n - window + 1]
    return per_start[::stride].copy()


if USE_NUMBA:
    log_binomial_matrix = log_binomial_matrix_nb
    em_fit = em_fit_nb
    run_lengths = run_lengths_nb
    turn_counts = turn_counts_nb
    feedback_actors = feedback_actors_nb
    window_distinct = window_distinct_nb
else:
    log_binomial_matrix = log_binomial_matrix_np
    em_fit = em_fit_np
    run_lengths = run_lengths_np
    turn_counts = turn_counts_np
    feedback_actors = feedback_actors_np
    window_distinct = window_distinct_np

PAIRS = {
    "log_binomial_matrix": (log_binomial_matrix_nb, log_binomial_matrix_np),
    "em_fit": (em_fit_nb, em_fit_np),
    "run_lengths": (run_lengths_nb, run_lengths_np),
    "turn_counts": (turn_counts_nb, turn_counts_np),
    "feedback_actors": (feedback_actors_nb, feedback_actors_np),
    "window_distinct": (window_distinct_nb, window_distinct_np),
}

"""Compiled inner loops: q-tables, the subset DP, and the per-run simulation loop.

Everything here is 0-based and array-only. Searcher sets are bitmasks.
"""

import math

import numba as nb
import numpy as np

NEG_INF = -np.inf

FPCUCB1 = 0
GREEDY = 1
TS = 2
FPCUCB2 = 3


@nb.njit(cache=True)
def q_from_cover(cover, lam, q):
    """q[i, j, u] = sum_{k=i..j} cover[i, j, u, k] * lam[k]."""
    K = cover.shape[0]
    U = cover.shape[2]
    for i in range(K):
        for j in range(i, K):
            for u in range(U):
                s = 0.0
                for k in range(i, j + 1):
                    s += cover[i, j, u, k] * lam[k]
                q[i, j, u] = s


@nb.njit(cache=True)
def q_from_scaling(scale, W, q):
    """q[i, j, u] = scale[u, j-i+1] * sum_{k=i..j} W[k, u] (running sums, O(K^2 U))."""
    K = W.shape[0]
    U = W.shape[1]
    for u in range(U):
        for i in range(K):
            s = 0.0
            for j in range(i, K):
                s += W[j, u]
                q[i, j, u] = scale[u, j - i + 1] * s


@nb.njit(cache=True)
def dp_fill(q, f):
    """f[c, mask] = best value on cells c..K-1 using searchers outside mask."""
    K = q.shape[0]
    U = q.shape[2]
    full = 1 << U
    for mask in range(full):
        f[K, mask] = 0.0
    for c in range(K - 1, -1, -1):
        for mask in range(full):
            best = f[c + 1, mask]
            for u in range(U):
                bit = 1 << u
                if mask & bit:
                    continue
                m2 = mask | bit
                for j in range(c, K):
                    v = q[c, j, u] + f[j + 1, m2]
                    if v > best:
                        best = v
            f[c, mask] = best


@nb.njit(cache=True)
def dp_reconstruct(q, f, cells):
    """Lexicographically smallest optimal interval list, written into ``cells`` (1-based IDs)."""
    K = q.shape[0]
    U = q.shape[2]
    for k in range(K):
        cells[k] = 0
    c = 0
    mask = 0
    while c < K:
        target = f[c, mask]
        if target <= 0.0:
            break
        opened = False
        for j in range(c, K):
            for u in range(U):
                bit = 1 << u
                if mask & bit:
                    continue
                if q[c, j, u] + f[j + 1, mask | bit] == target:
                    for k in range(c, j + 1):
                        cells[k] = u + 1
                    mask |= bit
                    c = j + 1
                    opened = True
                    break
            if opened:
                break
        if not opened:
            c += 1
    return f[0, 0]


@nb.njit(cache=True)
def solve(q, f, cells):
    dp_fill(q, f)
    return dp_reconstruct(q, f, cells)


@nb.njit(cache=True)
def forced_fill(q, f, g, k, force_u):
    """g[c, mask]: best value on cells c..K-1 with cell k covered (by force_u if >= 0).

    ``f`` must already hold the unconstrained table. Rows c > k equal f.
    """
    K = q.shape[0]
    U = q.shape[2]
    full = 1 << U
    for c in range(K, k, -1):
        for mask in range(full):
            g[c, mask] = f[c, mask]
    for c in range(k, -1, -1):
        for mask in range(full):
            best = NEG_INF
            if c != k:
                best = g[c + 1, mask]
            for u in range(U):
                bit = 1 << u
                if mask & bit:
                    continue
                m2 = mask | bit
                for j in range(c, K):
                    if j >= k:
                        if force_u >= 0 and u != force_u:
                            continue
                        v = q[c, j, u] + f[j + 1, m2]
                    else:
                        v = q[c, j, u] + g[j + 1, m2]
                    if v > best:
                        best = v
            g[c, mask] = best


@nb.njit(cache=True)
def forced_reconstruct(q, f, g, k, force_u, cells):
    K = q.shape[0]
    U = q.shape[2]
    for x in range(K):
        cells[x] = 0
    c = 0
    mask = 0
    while c < K:
        covered = c > k
        table = f if covered else g
        target = table[c, mask]
        if covered and target <= 0.0:
            break
        opened = False
        for j in range(c, K):
            for u in range(U):
                bit = 1 << u
                if mask & bit:
                    continue
                if covered or j < k:
                    nxt = g[j + 1, mask | bit] if not covered else f[j + 1, mask | bit]
                else:
                    if force_u >= 0 and u != force_u:
                        continue
                    nxt = f[j + 1, mask | bit]
                if q[c, j, u] + nxt == target:
                    for x in range(c, j + 1):
                        cells[x] = u + 1
                    mask |= bit
                    c = j + 1
                    opened = True
                    break
            if opened:
                break
        if not opened:
            c += 1
    return g[0, 0]


@nb.njit(cache=True)
def _push(a, b, v, tol):
    # running top-2 of values that differ by more than tol
    if v > a + tol:
        return v, a
    if v >= a - tol:
        if v > a:
            return v, b
        return a, b
    if v > b:
        return a, v
    return a, b


@nb.njit(cache=True)
def top2_fill(q, fa, fb, tol):
    """Best and second-best distinct values per DP state (unconstrained)."""
    K = q.shape[0]
    U = q.shape[2]
    full = 1 << U
    for mask in range(full):
        fa[K, mask] = 0.0
        fb[K, mask] = NEG_INF
    for c in range(K - 1, -1, -1):
        for mask in range(full):
            a = fa[c + 1, mask]
            b = fb[c + 1, mask]
            for u in range(U):
                bit = 1 << u
                if mask & bit:
                    continue
                m2 = mask | bit
                for j in range(c, K):
                    a, b = _push(a, b, q[c, j, u] + fa[j + 1, m2], tol)
                    a, b = _push(a, b, q[c, j, u] + fb[j + 1, m2], tol)
            fa[c, mask] = a
            fb[c, mask] = b


@nb.njit(cache=True)
def forced_top2(q, fa, fb, ga, gb, k, force_u, tol):
    """Best and second-best distinct rewards over allocations covering cell k."""
    K = q.shape[0]
    U = q.shape[2]
    full = 1 << U
    for c in range(K, k, -1):
        for mask in range(full):
            ga[c, mask] = fa[c, mask]
            gb[c, mask] = fb[c, mask]
    for c in range(k, -1, -1):
        for mask in range(full):
            a = NEG_INF
            b = NEG_INF
            if c != k:
                a = ga[c + 1, mask]
                b = gb[c + 1, mask]
            for u in range(U):
                bit = 1 << u
                if mask & bit:
                    continue
                m2 = mask | bit
                for j in range(c, K):
                    if j >= k:
                        if force_u >= 0 and u != force_u:
                            continue
                        na = fa[j + 1, m2]
                        nb_ = fb[j + 1, m2]
                    else:
                        na = ga[j + 1, m2]
                        nb_ = gb[j + 1, m2]
                    a, b = _push(a, b, q[c, j, u] + na, tol)
                    a, b = _push(a, b, q[c, j, u] + nb_, tol)
            ga[c, mask] = a
            gb[c, mask] = b
    return ga[0, 0], gb[0, 0]


# --------------------------------------------------------------------------- #
# simulation


@nb.njit(cache=True)
def detection_of(cells, use_cover, cover, scale, omega, gamma):
    """Per-cell detection probabilities of an allocation given as 1-based IDs."""
    K = cells.shape[0]
    for x in range(K):
        gamma[x] = 0.0
    c = 0
    while c < K:
        u = cells[c]
        if u == 0:
            c += 1
            continue
        j = c
        while j + 1 < K and cells[j + 1] == u:
            j += 1
        for x in range(c, j + 1):
            if use_cover:
                gamma[x] = cover[c, j, u - 1, x]
            else:
                gamma[x] = scale[u - 1, j - c + 1] * omega[x, u - 1]
        c = j + 1


@nb.njit(cache=True)
def poisson_inverse(mu, v):
    """Poisson(mu) quantile at uniform v by sequential search."""
    if mu <= 0.0:
        return 0
    p = math.exp(-mu)
    cdf = p
    x = 0
    while v > cdf and p > 0.0:
        x += 1
        p *= mu / x
        cdf += p
    return x


@nb.njit(cache=True)
def thin(t, cells_gamma, X, offsets, uniforms, fast, fast_u, lam, Y):
    K = Y.shape[0]
    for k in range(K):
        p = cells_gamma[k]
        if p <= 0.0:
            Y[k] = 0
        elif fast:
            Y[k] = poisson_inverse(lam[k] * p, fast_u[t, k])
        else:
            cnt = 0
            start = offsets[t, k]
            for e in range(X[t, k]):
                if uniforms[start + e] < p:
                    cnt += 1
            Y[k] = cnt


@nb.njit(cache=True)
def simulate(kind, param1, param2, K, U, use_cover, cover, scale, omega, lam,
             opt, X, offsets, uniforms, fast, fast_u, rng, init, regret, actions, record_actions):
    """Run one policy for ``regret.shape[0]`` rounds; fills per-round expected regret.

    kind: FPCUCB1 (param1 = lambda_max), GREEDY, TS (param1 = alpha, param2 = beta),
    FPCUCB2 (param1 = tau_max). Case-I policies know the detection model exactly;
    FPCUCB2 knows only ``scale`` and learns omega*lam per (cell, searcher).
    Rows of ``init`` are played verbatim in the first ``init.shape[0]`` rounds.
    """
    n = regret.shape[0]
    full = 1 << U
    f = np.empty((K + 1, full))
    q = np.empty((K, K, U))
    cells = np.zeros(K, dtype=np.int64)
    gamma = np.zeros(K)
    Y = np.zeros(K, dtype=np.int64)
    idx = np.zeros(K)
    W = np.zeros((K, U))
    S = np.zeros((K, U)) if kind == FPCUCB2 else np.zeros((K, 1))
    G = np.zeros((K, U)) if kind == FPCUCB2 else np.zeros((K, 1))
    for s in range(n):
        t = s + 1
        if s < init.shape[0]:
            for x in range(K):
                cells[x] = init[s, x]
        else:
            logt = math.log(t)
            if kind == FPCUCB2:
                for x in range(K):
                    for u in range(U):
                        g = G[x, u]
                        W[x, u] = S[x, u] / g + 2.0 * logt / g + math.sqrt(6.0 * param1 * logt / g)
                q_from_scaling(scale, W, q)
            else:
                for x in range(K):
                    g = G[x, 0]
                    if kind == FPCUCB1:
                        idx[x] = S[x, 0] / g + 2.0 * logt / g + math.sqrt(6.0 * param1 * logt / g)
                    elif kind == GREEDY:
                        idx[x] = S[x, 0] / g
                    else:
                        idx[x] = rng.gamma(param1 + S[x, 0], 1.0 / (param2 + g))
                if use_cover:
                    q_from_cover(cover, idx, q)
                else:
                    for x in range(K):
                        for u in range(U):
                            W[x, u] = omega[x, u] * idx[x]
                    q_from_scaling(scale, W, q)
            solve(q, f, cells)
        detection_of(cells, use_cover, cover, scale, omega, gamma)
        thin(s, gamma, X, offsets, uniforms, fast, fast_u, lam, Y)
        r = 0.0
        for x in range(K):
            r += gamma[x] * lam[x]
        d = opt - r
        regret[s] = d if d > 0.0 else 0.0
        if record_actions:
            for x in range(K):
                actions[s, x] = cells[x]
        if kind == FPCUCB2:
            c = 0
            while c < K:
                u = cells[c]
                if u == 0:
                    c += 1
                    continue
                j = c
                while j + 1 < K and cells[j + 1] == u:
                    j += 1
                phi = scale[u - 1, j - c + 1]
                for x in range(c, j + 1):
                    S[x, u - 1] += Y[x]
                    G[x, u - 1] += phi
                c = j + 1
        else:
            for x in range(K):
                S[x, 0] += Y[x]
                G[x, 0] += gamma[x]

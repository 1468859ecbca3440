"""Array-level kernels for the slope functional DP and quadratic envelopes.

Everything here is written in nopython style so the whole module can be
JIT-compiled with numba when it is available and still run (slowly) as
plain Python when it is not.  The public wrappers live in
``pencpt.solver.slope`` and ``pencpt.solver.piecewise``.

The value function f_t(phi) = best penalised cost of x_{1:t} with a knot
at t fitted at height phi is maintained as the lower envelope of convex
quadratics.  Each envelope piece keeps provenance (which candidate knot s
and which stored piece of f_s it was projected from) so segmentations can
be recovered by backtracking.
"""

from __future__ import annotations

import numpy as np

try:  # pragma: no cover - exercised implicitly by both execution modes
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(func):
            return func

        return deco


INF = np.inf

# status codes returned by the DP kernel
OK = 0
ERR_POOL = 1
ERR_CAND = 2
ERR_ENV = 3

# sets {phi : d(phi) < 0} for a quadratic d; see _strict_neg_set
_EMPTY = 0
_ALL = 1
_BETWEEN = 2          # (r1, r2)
_OUTSIDE = 3          # (-inf, r1) u (r2, inf)
_LEFT = 4             # (-inf, r1)
_RIGHT = 5            # (r1, inf)

_ROOT_MERGE_TOL = 1e-12


@njit(cache=True, nogil=True)
def _strict_neg_set(da, db, dc):
    """Describe {phi : da*phi^2 + db*phi + dc < 0}.

    Returns (mode, r1, r2).  Double roots closer than the merge tolerance
    are treated as tangencies (no sign change).
    """
    if da == 0.0:
        if db == 0.0:
            return (_ALL, 0.0, 0.0) if dc < 0.0 else (_EMPTY, 0.0, 0.0)
        r = -dc / db
        return (_LEFT, r, r) if db > 0.0 else (_RIGHT, r, r)
    disc = db * db - 4.0 * da * dc
    if disc <= 0.0:
        return (_EMPTY, 0.0, 0.0) if da > 0.0 else (_ALL, 0.0, 0.0)
    sq = np.sqrt(disc)
    if db >= 0.0:
        q = -0.5 * (db + sq)
    else:
        q = -0.5 * (db - sq)
    ra = q / da
    rb = dc / q
    r1 = min(ra, rb)
    r2 = max(ra, rb)
    scale = max(1.0, abs(r1), abs(r2))
    if r2 - r1 <= _ROOT_MERGE_TOL * scale:
        return (_EMPTY, 0.0, 0.0) if da > 0.0 else (_ALL, 0.0, 0.0)
    if da > 0.0:
        return (_BETWEEN, r1, r2)
    return (_OUTSIDE, r1, r2)


@njit(cache=True, nogil=True)
def _emit(out_lo, out_qi, m, start, who):
    """Append piece (start, who), dropping empty pieces and merging runs."""
    if m > 0 and out_lo[m - 1] == start:
        # previous piece is empty: replace it
        if m > 1 and out_qi[m - 2] == who:
            return m - 1
        out_qi[m - 1] = who
        return m
    if m > 0 and out_qi[m - 1] == who:
        return m
    out_lo[m] = start
    out_qi[m] = who
    return m + 1


@njit(cache=True, nogil=True)
def _env_insert(lo, qi, n, ca, cb, cc, j, out_lo, out_qi):
    """Insert candidate quadratic j into the envelope (lo, qi, n).

    Ties keep the incumbent, so insertion order is a deterministic
    preference order.  Returns the new piece count written to out_*,
    or -1 on buffer overflow.
    """
    cap = out_lo.shape[0]
    m = 0
    for k in range(n):
        lk = lo[k]
        hk = lo[k + 1] if k + 1 < n else INF
        inc = qi[k]
        if inc == j:
            if m + 1 > cap:
                return -1
            m = _emit(out_lo, out_qi, m, lk, inc)
            continue
        mode, r1, r2 = _strict_neg_set(ca[j] - ca[inc], cb[j] - cb[inc], cc[j] - cc[inc])
        if m + 4 > cap:
            return -1
        if mode == _EMPTY:
            m = _emit(out_lo, out_qi, m, lk, inc)
        elif mode == _ALL:
            m = _emit(out_lo, out_qi, m, lk, j)
        elif mode == _BETWEEN:
            a = max(lk, r1)
            b = min(hk, r2)
            if b <= a:
                m = _emit(out_lo, out_qi, m, lk, inc)
            else:
                if a > lk:
                    m = _emit(out_lo, out_qi, m, lk, inc)
                m = _emit(out_lo, out_qi, m, a, j)
                if b < hk:
                    m = _emit(out_lo, out_qi, m, b, inc)
        elif mode == _OUTSIDE:
            a = min(hk, r1)
            b = max(lk, r2)
            if a > lk:
                m = _emit(out_lo, out_qi, m, lk, j)
                if b > a:
                    m = _emit(out_lo, out_qi, m, a, inc)
            elif b > lk:
                m = _emit(out_lo, out_qi, m, lk, inc)
            if b < hk:
                m = _emit(out_lo, out_qi, m, b, j)
        elif mode == _LEFT:
            a = min(hk, r1)
            if a > lk:
                m = _emit(out_lo, out_qi, m, lk, j)
                if a < hk:
                    m = _emit(out_lo, out_qi, m, a, inc)
            else:
                m = _emit(out_lo, out_qi, m, lk, inc)
        else:  # _RIGHT
            a = max(lk, r1)
            if a < hk:
                if a > lk:
                    m = _emit(out_lo, out_qi, m, lk, inc)
                m = _emit(out_lo, out_qi, m, a, j)
            else:
                m = _emit(out_lo, out_qi, m, lk, inc)
    return m


@njit(cache=True, nogil=True)
def _build_envelope(ca, cb, cc, lo_buf, qi_buf, tmp_lo, tmp_qi):
    """Lower envelope of the quadratics (ca, cb, cc); returns piece count."""
    ncand = ca.shape[0]
    n = 1
    lo_buf[0] = -INF
    qi_buf[0] = 0
    for j in range(1, ncand):
        m = _env_insert(lo_buf, qi_buf, n, ca, cb, cc, j, tmp_lo, tmp_qi)
        if m < 0:
            return -1
        for k in range(m):
            lo_buf[k] = tmp_lo[k]
            qi_buf[k] = tmp_qi[k]
        n = m
    return n


@njit(cache=True, nogil=True)
def _eval_quad(a, b, c, phi):
    return (a * phi + b) * phi + c


@njit(cache=True, nogil=True)
def _min_on_interval(a, b, c, lo, hi):
    """Minimum of a quadratic over [lo, hi]; bounds may be infinite."""
    if a > 0.0:
        v = -b / (2.0 * a)
        if v < lo:
            v = lo
        elif v > hi:
            v = hi
        return _eval_quad(a, b, c, v)
    if a == 0.0:
        if b == 0.0:
            return c
        if b > 0.0:
            return -INF if lo == -INF else _eval_quad(a, b, c, lo)
        return -INF if hi == INF else _eval_quad(a, b, c, hi)
    # concave: minimum at an endpoint
    if lo == -INF or hi == INF:
        return -INF
    vl = _eval_quad(a, b, c, lo)
    vh = _eval_quad(a, b, c, hi)
    return vl if vl < vh else vh


@njit(cache=True, nogil=True)
def _segment_coeffs(P1, Pt, Pq, Si, Sii, s, t, inv_s2):
    """Quadratic coefficients of the slope segment cost for knots (s, t).

    Cost(phi_s, phi_t) = A phi_s^2 + B phi_s phi_t + C phi_t^2
                         + D phi_s + E phi_t + F.
    """
    Lf = float(t - s)
    sI = Si[t] - Si[s]
    sII = Sii[t] - Sii[s]
    sX = P1[t] - P1[s]
    sIX = Pt[t] - Pt[s]
    sXX = Pq[t] - Pq[s]
    L2 = Lf * Lf
    su2 = (float(t) * float(t) * Lf - 2.0 * float(t) * sI + sII) / L2
    suv = ((float(t) + float(s)) * sI - sII - float(s) * float(t) * Lf) / L2
    sv2 = (sII - 2.0 * float(s) * sI + float(s) * float(s) * Lf) / L2
    sxu = (float(t) * sX - sIX) / Lf
    sxv = (sIX - float(s) * sX) / Lf
    return (
        su2 * inv_s2,
        2.0 * suv * inv_s2,
        sv2 * inv_s2,
        -2.0 * sxu * inv_s2,
        -2.0 * sxv * inv_s2,
        sXX * inv_s2,
    )


@njit(cache=True, nogil=True)
def _slope_dp(
    P1,
    Pt,
    Pq,
    Si,
    Sii,
    T,
    sigma,
    beta,
    use_pruning,
    prune_margin,
    pool_a,
    pool_b,
    pool_c,
    pool_lo,
    pool_src_s,
    pool_src_piece,
    pool_m,
    ft_start,
    ft_count,
):
    """Functional DP over the boundary value phi.

    f_t(phi) = min over last-knot s < t of
        min_{phi'} [ f_s(phi') + beta + SegCost_{s,t}(phi', phi) ]
    with f_0 = -beta, so the first segment is unpenalised and the final
    objective min_phi f_T(phi) equals raw cost + (#interior knots) * beta.

    Candidate s is pruned once min_phi [g_{s,t}(phi) - f_t(phi)] exceeds
    beta: any later segmentation through s is then weakly beaten by one
    with an extra knot at t, so the value functions are unchanged.
    """
    inv_s2 = 1.0 / (sigma * sigma)
    cand_cap = 16384
    env_cap = 16384
    ca = np.empty(cand_cap)
    cb = np.empty(cand_cap)
    cc = np.empty(cand_cap)
    csrc = np.empty(cand_cap, dtype=np.int64)
    cpc = np.empty(cand_cap, dtype=np.int64)
    cm = np.empty(cand_cap, dtype=np.int64)
    lo_buf = np.empty(env_cap)
    qi_buf = np.empty(env_cap, dtype=np.int64)
    tmp_lo = np.empty(env_cap)
    tmp_qi = np.empty(env_cap, dtype=np.int64)
    act = np.empty(T + 1, dtype=np.int64)
    s_first = np.empty(T + 1, dtype=np.int64)
    s_cnt = np.empty(T + 1, dtype=np.int64)

    pool_cap = pool_a.shape[0]
    # f_0: the constant -beta with no provenance
    pool_a[0] = 0.0
    pool_b[0] = 0.0
    pool_c[0] = -beta
    pool_lo[0] = -INF
    pool_src_s[0] = -1
    pool_src_piece[0] = -1
    pool_m[0] = 0
    pool_n = 1
    ft_start[0] = 0
    ft_count[0] = 1
    nact = 1
    act[0] = 0

    for t in range(1, T + 1):
        ncand = 0
        for ai in range(nact):
            s = act[ai]
            s_first[ai] = ncand
            A, B, C, D, E, F = _segment_coeffs(P1, Pt, Pq, Si, Sii, s, t, inv_s2)
            fs0 = ft_start[s]
            for pi in range(fs0, fs0 + ft_count[s]):
                if ncand >= cand_cap:
                    return ERR_CAND, pool_n
                a0 = pool_a[pi]
                b0 = pool_b[pi]
                c0 = pool_c[pi]
                p2 = a0 + A
                if p2 > 0.0:
                    bd = b0 + D
                    na = C - B * B / (4.0 * p2)
                    nb = E - B * bd / (2.0 * p2)
                    nc = c0 + F - bd * bd / (4.0 * p2)
                else:
                    # only f_0 through a length-1 first segment: no phi'
                    # dependence at all, the prior minimum is c0
                    na = C
                    nb = E
                    nc = c0 + F
                if na < 0.0:
                    na = 0.0
                ca[ncand] = na
                cb[ncand] = nb
                cc[ncand] = nc + beta
                csrc[ncand] = s
                cpc[ncand] = pi
                cm[ncand] = pool_m[pi] + (1 if s > 0 else 0)
                ncand += 1
            s_cnt[ai] = ncand - s_first[ai]

        n_env = _build_envelope(
            ca[:ncand], cb[:ncand], cc[:ncand], lo_buf, qi_buf, tmp_lo, tmp_qi
        )
        if n_env < 0:
            return ERR_ENV, pool_n
        if pool_n + n_env > pool_cap:
            return ERR_POOL, pool_n
        ft_start[t] = pool_n
        ft_count[t] = n_env
        for k in range(n_env):
            q = qi_buf[k]
            pool_a[pool_n] = ca[q]
            pool_b[pool_n] = cb[q]
            pool_c[pool_n] = cc[q]
            pool_lo[pool_n] = lo_buf[k]
            pool_src_s[pool_n] = csrc[q]
            pool_src_piece[pool_n] = cpc[q]
            pool_m[pool_n] = cm[q]
            pool_n += 1

        if use_pruning != 0:
            thresh = beta + prune_margin
            w = 0
            for ai in range(nact):
                keep = False
                j0 = s_first[ai]
                for j in range(j0, j0 + s_cnt[ai]):
                    for k in range(n_env):
                        lk = lo_buf[k]
                        hk = lo_buf[k + 1] if k + 1 < n_env else INF
                        e = qi_buf[k]
                        dmin = _min_on_interval(
                            ca[j] - ca[e], cb[j] - cb[e], cc[j] - cc[e], lk, hk
                        )
                        if dmin < thresh:
                            keep = True
                            break
                    if keep:
                        break
                if keep:
                    act[w] = act[ai]
                    w += 1
            nact = w
        act[nact] = t
        nact += 1

    return OK, pool_n

"""Numba kernels for grid interpolation and the pairwise Bellman sweep."""

from __future__ import annotations

import math
import os

# the bundled TBB is often too old; the portable layer avoids a warning on import
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

import numpy as np  # noqa: E402
from numba import njit, prange  # noqa: E402

TWO_PI = 2.0 * math.pi


@njit(cache=True)
def wrap(x):
    return math.pi - ((math.pi - x) % TWO_PI)


@njit(cache=True)
def locate(pts, q, periodic):
    """Bracketing indices and upper weight of ``q`` on a sorted axis."""
    n = pts.shape[0]
    if periodic:
        q = wrap(q)
        span = pts[0] + TWO_PI - pts[n - 1]
        if q < pts[0]:
            return n - 1, 0, (q + TWO_PI - pts[n - 1]) / span
        if q >= pts[n - 1]:
            return n - 1, 0, (q - pts[n - 1]) / span
    else:
        if q <= pts[0]:
            return 0, 0, 0.0
        if q >= pts[n - 1]:
            return n - 1, n - 1, 0.0
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if pts[mid] <= q:
            lo = mid
        else:
            hi = mid
    return lo, hi, (q - pts[lo]) / (pts[hi] - pts[lo])


@njit(cache=True)
def interp_max(Q, rho_pts, th_pts, ps_pts, vo_pts, vi_pts, rho, th, ps, vo, vi, buf):
    """max_j of the multilinearly interpolated row ``Q[., j]``; ``buf`` is scratch."""
    r0, r1, wr = locate(rho_pts, rho, False)
    t0, t1, wt = locate(th_pts, th, True)
    p0, p1, wp = locate(ps_pts, ps, True)
    a0, a1, wa = locate(vo_pts, vo, False)
    b0, b1, wb = locate(vi_pts, vi, False)
    nt = th_pts.shape[0]
    npsi = ps_pts.shape[0]
    nvo = vo_pts.shape[0]
    nvi = vi_pts.shape[0]
    k = Q.shape[1]
    for j in range(k):
        buf[j] = 0.0
    for c in range(32):
        f = wr if c & 16 else 1.0 - wr
        if f == 0.0:
            continue
        f *= wt if c & 8 else 1.0 - wt
        f *= wp if c & 4 else 1.0 - wp
        f *= wa if c & 2 else 1.0 - wa
        f *= wb if c & 1 else 1.0 - wb
        if f == 0.0:
            continue
        ir = r1 if c & 16 else r0
        it = t1 if c & 8 else t0
        ip = p1 if c & 4 else p0
        ia = a1 if c & 2 else a0
        ib = b1 if c & 1 else b0
        idx = (((ir * nt + it) * npsi + ip) * nvo + ia) * nvi + ib
        for j in range(k):
            buf[j] += f * Q[idx, j]
    best = buf[0]
    for j in range(1, k):
        if buf[j] > best:
            best = buf[j]
    return best


@njit(cache=True)
def interp_rows(Q, rho_pts, th_pts, ps_pts, vo_pts, vi_pts, queries, out):
    """Interpolate every column of ``Q`` (states x k) at each query row."""
    k = Q.shape[1]
    nt = th_pts.shape[0]
    npsi = ps_pts.shape[0]
    nvo = vo_pts.shape[0]
    nvi = vi_pts.shape[0]
    for m in range(queries.shape[0]):
        r0, r1, wr = locate(rho_pts, queries[m, 0], False)
        t0, t1, wt = locate(th_pts, queries[m, 1], True)
        p0, p1, wp = locate(ps_pts, queries[m, 2], True)
        a0, a1, wa = locate(vo_pts, queries[m, 3], False)
        b0, b1, wb = locate(vi_pts, queries[m, 4], False)
        for j in range(k):
            out[m, j] = 0.0
        for c in range(32):
            f = wr if c & 16 else 1.0 - wr
            f *= wt if c & 8 else 1.0 - wt
            f *= wp if c & 4 else 1.0 - wp
            f *= wa if c & 2 else 1.0 - wa
            f *= wb if c & 1 else 1.0 - wb
            if f == 0.0:
                continue
            ir = r1 if c & 16 else r0
            it = t1 if c & 8 else t0
            ip = p1 if c & 4 else p0
            ia = a1 if c & 2 else a0
            ib = b1 if c & 1 else b0
            idx = (((ir * nt + it) * npsi + ip) * nvo + ia) * nvi + ib
            for j in range(k):
                out[m, j] += f * Q[idx, j]


@njit(cache=True)
def successor(rho, th, ps, vo, vi, rate, sp, dt):
    """Relative state after one step for a single sigma point ``sp``.

    The ownship starts at the origin with heading 0; speed noise changes the
    distance flown but the successor keeps the nominal speeds.
    """
    phi_o = (rate + sp[1]) * dt
    xo = (vo + sp[0]) * math.cos(phi_o) * dt
    yo = (vo + sp[0]) * math.sin(phi_o) * dt
    phi_i = ps + sp[3] * dt
    xi = rho * math.cos(th) + (vi + sp[2]) * math.cos(phi_i) * dt
    yi = rho * math.sin(th) + (vi + sp[2]) * math.sin(phi_i) * dt
    dx = xi - xo
    dy = yi - yo
    r = math.hypot(dx, dy)
    t = wrap(math.atan2(dy, dx) - phi_o) if r > 0.0 else 0.0
    return r, t, wrap(phi_i - phi_o)


@njit(cache=True)
def expectation(Q, rho_pts, th_pts, ps_pts, vo_pts, vi_pts, rho, th, ps, vo, vi, rate, sig_pts, sig_w, dt, buf):
    """Sigma-point weighted sum of max_a' Q(s', a') over interpolated rows."""
    acc = 0.0
    for k in range(sig_w.shape[0]):
        r, t, p = successor(rho, th, ps, vo, vi, rate, sig_pts[k], dt)
        acc += sig_w[k] * interp_max(Q, rho_pts, th_pts, ps_pts, vo_pts, vi_pts, r, t, p, vo, vi, buf)
    return acc


@njit(parallel=True, cache=True)
def bellman_sweep(Q, R, rho_pts, th_pts, ps_pts, vo_pts, vi_pts, rates, sig_pts, sig_w, gamma, dt, out):
    """One Jacobi backup: out[s, a] = R[s, a] + gamma * E[max_a' Q(s', a')]."""
    nt = th_pts.shape[0]
    npsi = ps_pts.shape[0]
    nvo = vo_pts.shape[0]
    nvi = vi_pts.shape[0]
    n_states = R.shape[0]
    for s in prange(n_states):
        ib = s % nvi
        rest = s // nvi
        ia = rest % nvo
        rest = rest // nvo
        ip = rest % npsi
        rest = rest // npsi
        it = rest % nt
        ir = rest // nt
        rho = rho_pts[ir]
        th = th_pts[it]
        ps = ps_pts[ip]
        vo = vo_pts[ia]
        vi = vi_pts[ib]
        buf = np.empty(Q.shape[1])
        for a in range(R.shape[1]):
            e = expectation(Q, rho_pts, th_pts, ps_pts, vo_pts, vi_pts, rho, th, ps, vo, vi,
                            rates[a], sig_pts, sig_w, dt, buf)
            out[s, a] = R[s, a] + gamma * e


def as_f64(a):
    return np.ascontiguousarray(a, dtype=np.float64)

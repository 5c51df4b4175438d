"""Compiled Monte Carlo kernels.

Random numbers come from a counter-based hash of ``(seed, path, stream, step)``
so every path has its own reproducible stream, independent of how paths
are scheduled across threads.  Paths are advanced in lanes of ``LANES``
so the inner loops vectorise.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange, uint64

LANES = 256

_TWO32 = 4294967296.0


@njit(inline="always", cache=True)
def _mix(z):
    z = (z ^ (z >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> uint64(27))) * uint64(0x94D049BB133111EB)
    return z ^ (z >> uint64(31))


@njit(inline="always", cache=True)
def _hash(seed, path, stream, counter):
    z = _mix(uint64(seed) + uint64(0x9E3779B97F4A7C15))
    z = _mix(z ^ (uint64(path) * uint64(0xD1B54A32D192ED03)))
    z = _mix(z ^ (uint64(stream) * uint64(0xAEF17502108EF2D9)))
    return _mix(z ^ (uint64(counter) * uint64(0xF5AB4B5E6F8F31B5)))


@njit(inline="always", cache=True)
def _uniform(word):
    """Uniform on (0, 1) from the top 53 bits."""
    return ((word >> uint64(11)) + 0.5) * (1.0 / 9007199254740992.0)


@njit(inline="always", cache=True)
def _normal(word):
    u1 = ((word >> uint64(32)) + 1.0) / _TWO32
    u2 = (word & uint64(0xFFFFFFFF)) / _TWO32
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


# stream tags
_S_DIFF = 0          # + factor index
_S_BOUND = 1 << 20   # + factor index, boundary two-point draws
_S_THRESH = 1 << 21  # default thresholds


@njit(cache=True)
def uniform_block(seed, stream, n, counter):
    out = np.empty(n)
    for p in range(n):
        out[p] = _uniform(_hash(seed, p, stream, counter))
    return out


@njit(parallel=True, cache=True)
def lhc_kernel(
    seed, n_paths, n_steps, dt, M, blk, sig, d, v0, gaussian, antithetic, clamp,
    rec_steps, out_rec, W, out_tau, out_vtau, jump_ptr, jump_step, jump_size,
    jc, jdelta, jnu, store, out_path, stats,
):
    """Advance stacked LHC blocks ``v = (y_1..y_d, x_1..x_m)``.

    The drift step is ``v <- M v`` with ``M`` either ``exp(A dt)`` or
    ``I + A dt``.  Factor ``i`` belongs to block ``blk[i]``.  Default
    thresholds are drawn per firm and crossings refined by log-linear
    interpolation of the survival level within the step.
    """
    D = v0.shape[0]
    m = D - d
    F = W.shape[0]
    R = rec_steps.shape[0]
    n_lanes_blocks = (n_paths + LANES - 1) // LANES
    sqdt = math.sqrt(dt)
    has_jumps = jump_step.shape[0] > 0
    for blk_i in prange(n_lanes_blocks):
        p0 = blk_i * LANES
        nb = min(LANES, n_paths - p0)
        V = np.empty((D, LANES))
        Vn = np.empty((D, LANES))
        words = np.zeros((m, LANES), dtype=np.uint64)
        sgn = np.ones(LANES)
        sid = np.empty(LANES, dtype=np.int64)
        U = np.empty((F, LANES))
        S_old = np.empty((F, LANES))
        alive = np.ones((F, LANES), dtype=np.bool_)
        jpos = np.empty(LANES, dtype=np.int64)
        sd = np.empty(LANES)
        xdv = np.empty(LANES)
        sn = np.empty(LANES)
        flag = np.zeros(LANES, dtype=np.bool_)
        n_adj = 0
        n_inc = 0
        for j in range(nb):
            p = p0 + j
            if antithetic:
                sid[j] = p // 2
                sgn[j] = -1.0 if (p % 2) == 1 else 1.0
            else:
                sid[j] = p
            for k in range(D):
                V[k, j] = v0[k]
            jpos[j] = jump_ptr[p]
            for f in range(F):
                s = 0.0
                for q in range(d):
                    s += W[f, q] * v0[q]
                u = _uniform(_hash(seed, sid[j], _S_THRESH, f))
                if antithetic and sgn[j] < 0:
                    u = 1.0 - u
                U[f, j] = s * u
                S_old[f, j] = s
                out_tau[p, f] = np.inf
            if store:
                for k in range(D):
                    out_path[p, 0, k] = v0[k]
        r_i = 0
        while r_i < R and rec_steps[r_i] == 0:
            for j in range(nb):
                for k in range(D):
                    out_rec[p0 + j, r_i, k] = V[k, j]
            r_i += 1
        for step in range(n_steps):
            # drift
            for i in range(D):
                for j in range(nb):
                    Vn[i, j] = 0.0
                for k in range(D):
                    mik = M[i, k]
                    if mik != 0.0:
                        for j in range(nb):
                            Vn[i, j] += mik * V[k, j]
            # diffusion
            if gaussian:
                for i in range(m):
                    yi = blk[i]
                    si = sig[i] * sqdt
                    if si == 0.0:
                        continue
                    for j in range(nb):
                        x = min(max(V[d + i, j], 0.0), V[yi, j])
                        z = _normal(_hash(seed, sid[j], _S_DIFF + i, step)) * sgn[j]
                        Vn[d + i, j] += si * math.sqrt(x * (V[yi, j] - x)) * z
            else:
                if (step & 63) == 0:
                    for i in range(m):
                        for j in range(nb):
                            words[i, j] = _hash(seed, sid[j], _S_DIFF + i, step >> 6)
                sh = uint64(step & 63)
                for i in range(m):
                    yi = blk[i]
                    si = sig[i] * sqdt
                    if si == 0.0:
                        continue
                    n_flag = 0
                    for j in range(nb):
                        ynew = Vn[yi, j]
                        x = min(max(V[d + i, j], 0.0), V[yi, j])
                        s = si * math.sqrt(x * (V[yi, j] - x))
                        xd = Vn[d + i, j]
                        xi = (2.0 * np.float64((words[i, j] >> sh) & uint64(1)) - 1.0) * sgn[j]
                        sd[j] = s
                        xdv[j] = xd
                        out_of = (xd - s < 0.0) or (xd + s > ynew)
                        flag[j] = out_of
                        n_flag += out_of
                        Vn[d + i, j] = xd + s * xi
                    if n_flag == 0:
                        continue
                    for j in range(nb):
                        if not flag[j]:
                            continue
                        s = sd[j]
                        ynew = Vn[yi, j]
                        # replace the symmetric move by a mean-preserving two-point move inside [0, ynew]
                        xd = xdv[j]
                        if s <= 0.0:
                            Vn[d + i, j] = xd
                            continue
                        n_adj += 1
                        xd = min(max(xd, 0.0), ynew)
                        lo = xd
                        hi = ynew - xd
                        var = s * s
                        if lo * hi <= var:
                            a = lo
                            bu = hi
                        elif s > lo:
                            a = lo
                            bu = var / lo
                        else:
                            bu = hi
                            a = var / hi
                        if a + bu > 0.0:
                            u = _uniform(_hash(seed, sid[j], _S_BOUND + i, step))
                            if sgn[j] < 0:
                                u = 1.0 - u
                            Vn[d + i, j] = xd + bu if u < a / (a + bu) else xd - a
                        else:
                            Vn[d + i, j] = xd
                n_inc += m * nb
            # clamp into E
            if clamp:
                for i in range(m):
                    yi = blk[i]
                    for j in range(nb):
                        xv = Vn[d + i, j]
                        if xv < 0.0:
                            Vn[d + i, j] = 0.0
                            if gaussian:
                                n_adj += 1
                        elif xv > Vn[yi, j]:
                            Vn[d + i, j] = Vn[yi, j]
                            if gaussian:
                                n_adj += 1
                if gaussian:
                    n_inc += m * nb
            t_old = step * dt
            # defaults from the continuous part
            for f in range(F):
                n_hit = 0
                for j in range(nb):
                    s_new = 0.0
                    for q in range(d):
                        s_new += W[f, q] * Vn[q, j]
                    sn[j] = s_new
                    n_hit += (s_new <= U[f, j]) and alive[f, j]
                if n_hit > 0:
                    for j in range(nb):
                        if alive[f, j] and sn[j] <= U[f, j]:
                            so = S_old[f, j]
                            if so > sn[j] and sn[j] > 0.0:
                                frac = math.log(so / U[f, j]) / math.log(so / sn[j])
                            else:
                                frac = 1.0
                            frac = min(max(frac, 0.0), 1.0)
                            out_tau[p0 + j, f] = t_old + frac * dt
                            for k in range(D):
                                out_vtau[p0 + j, f, k] = V[k, j] + frac * (Vn[k, j] - V[k, j])
                            alive[f, j] = False
                for j in range(nb):
                    S_old[f, j] = sn[j]
            # jumps at the end of the step
            for j in range(nb if has_jumps else 0):
                p = p0 + j
                while jpos[j] < jump_ptr[p + 1] and jump_step[jpos[j]] == step:
                    z = jump_size[jpos[j]]
                    for q in range(d):
                        acc = jc[q] * Vn[q, j]
                        for i in range(m):
                            if blk[i] == q:
                                acc += jdelta[i] * Vn[d + i, j]
                        Vn[q, j] -= z * acc
                    for i in range(m):
                        Vn[d + i, j] -= z * jnu[i] * Vn[d + i, j]
                        Vn[d + i, j] = min(max(Vn[d + i, j], 0.0), Vn[blk[i], j])
                    for f in range(F):
                        if alive[f, j]:
                            s_new = 0.0
                            for q in range(d):
                                s_new += W[f, q] * Vn[q, j]
                            if s_new <= U[f, j]:
                                out_tau[p, f] = t_old + dt
                                for k in range(D):
                                    out_vtau[p, f, k] = Vn[k, j]
                                alive[f, j] = False
                            S_old[f, j] = s_new
                    jpos[j] += 1
            # commit
            for k in range(D):
                for j in range(nb):
                    V[k, j] = Vn[k, j]
            if store:
                for j in range(nb):
                    for k in range(D):
                        out_path[p0 + j, step + 1, k] = V[k, j]
            while r_i < R and rec_steps[r_i] == step + 1:
                for j in range(nb):
                    for k in range(D):
                        out_rec[p0 + j, r_i, k] = V[k, j]
                r_i += 1
        stats[blk_i, 0] = n_adj
        stats[blk_i, 1] = n_inc


@njit(parallel=True, cache=True)
def clock_kernel(seed, n_paths, n_steps, A, blk, sig, d, v0, dz, dt_inner, out):
    """Run the LHC dynamics in business time ``Z``: calendar step ``k`` adds ``dz[p, k]``.

    Each business-time increment is split into Euler sub-steps of length at
    most ``dt_inner`` with Gaussian noise and full truncation.
    """
    D = v0.shape[0]
    m = D - d
    for p in prange(n_paths):
        v = v0.copy()
        vn = np.empty(D)
        cnt = 0
        for k in range(n_steps):
            tot = dz[p, k]
            ns = max(1, int(math.ceil(tot / dt_inner)))
            h = tot / ns
            sq = math.sqrt(h)
            for _ in range(ns):
                for i in range(D):
                    acc = v[i]
                    for q in range(D):
                        acc += A[i, q] * v[q] * h
                    vn[i] = acc
                for i in range(m):
                    yi = blk[i]
                    x = min(max(v[d + i], 0.0), v[yi])
                    z = _normal(_hash(seed, p, _S_DIFF + i, cnt))
                    vn[d + i] += sig[i] * sq * math.sqrt(x * (v[yi] - x)) * z
                    vn[d + i] = min(max(vn[d + i], 0.0), vn[yi])
                cnt += 1
                for i in range(D):
                    v[i] = vn[i]
        for i in range(D):
            out[p, i] = v[i]

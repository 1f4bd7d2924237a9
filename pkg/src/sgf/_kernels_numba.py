"""Numba-compiled lane for the hot kernels.

Same contracts and parameter layout as ``_kernels_numpy``; the loops here
are the jitted twins.  Float outputs agree with the numpy lane to roundoff
(summation order differs); the RNG fill is bit-identical by construction.
"""

import math

import numpy as np
from numba import njit

_U = np.uint64
_SIGMA_FLOOR = 1e-12
_INV53 = 2.0 ** -53


@njit(cache=True)
def _gemv(W, x):
    m, n = W.shape
    out = np.empty(m)
    for r in range(m):
        acc = 0.0
        for k in range(n):
            acc += W[r, k] * x[k]
        out[r] = acc
    return out


@njit(cache=True)
def _gemv_t(W, x):
    m, n = W.shape
    out = np.zeros(n)
    for r in range(m):
        xr = x[r]
        for k in range(n):
            out[k] += W[r, k] * xr
    return out


@njit(cache=True)
def _safe(s):
    return s if s > _SIGMA_FLOOR else _SIGMA_FLOOR


@njit(cache=True)
def _block_offsets(d, n_c, n_blocks, hidden):
    offs = np.empty(n_blocks + 1, dtype=np.int64)
    off = 0
    for i in range(n_blocks):
        offs[i] = off
        in_i = d if i == 0 else hidden
        off += hidden * in_i + hidden + 2 * (hidden * n_c + hidden)
    offs[n_blocks] = off
    return offs


@njit(cache=True)
def forward_one(params, sigmas, d, n_c, n_blocks, hidden, slope, eps, z, c):
    h = z
    off = 0
    for i in range(n_blocks):
        in_i = d if i == 0 else hidden
        W = params[off:off + hidden * in_i].reshape((hidden, in_i))
        off += hidden * in_i
        b = params[off:off + hidden]
        off += hidden
        Gw = params[off:off + hidden * n_c].reshape((hidden, n_c))
        off += hidden * n_c
        Gb = params[off:off + hidden]
        off += hidden
        Bw = params[off:off + hidden * n_c].reshape((hidden, n_c))
        off += hidden * n_c
        Bb = params[off:off + hidden]
        off += hidden
        s = _safe(sigmas[i])
        a = _gemv(W, h)
        mu = 0.0
        for k in range(hidden):
            a[k] = a[k] / s + b[k]
            mu += a[k]
        mu /= hidden
        var = 0.0
        for k in range(hidden):
            t = a[k] - mu
            var += t * t
        sd = math.sqrt(var / hidden + eps)
        gam = _gemv(Gw, c)
        bet = _gemv(Bw, c)
        hn = np.empty(hidden)
        for k in range(hidden):
            xh = (a[k] - mu) / sd
            y = (gam[k] + Gb[k]) * xh + bet[k] + Bb[k]
            hn[k] = y if y >= 0.0 else slope * y
        h = hn
    Wout = params[off:off + d * hidden].reshape((d, hidden))
    off += d * hidden
    bout = params[off:off + d]
    so = _safe(sigmas[n_blocks])
    out = _gemv(Wout, h)
    for k in range(d):
        out[k] = out[k] / so + bout[k]
    return out


@njit(cache=True)
def jvp_one(params, sigmas, d, n_c, n_blocks, hidden, slope, eps, z, c, tz, tc):
    h = z
    th = tz
    off = 0
    for i in range(n_blocks):
        in_i = d if i == 0 else hidden
        W = params[off:off + hidden * in_i].reshape((hidden, in_i))
        off += hidden * in_i
        b = params[off:off + hidden]
        off += hidden
        Gw = params[off:off + hidden * n_c].reshape((hidden, n_c))
        off += hidden * n_c
        Gb = params[off:off + hidden]
        off += hidden
        Bw = params[off:off + hidden * n_c].reshape((hidden, n_c))
        off += hidden * n_c
        Bb = params[off:off + hidden]
        off += hidden
        s = _safe(sigmas[i])
        a = _gemv(W, h)
        ta = _gemv(W, th)
        mu = 0.0
        tmu = 0.0
        for k in range(hidden):
            a[k] = a[k] / s + b[k]
            ta[k] = ta[k] / s
            mu += a[k]
            tmu += ta[k]
        mu /= hidden
        tmu /= hidden
        var = 0.0
        for k in range(hidden):
            t = a[k] - mu
            var += t * t
        sd = math.sqrt(var / hidden + eps)
        proj = 0.0
        for k in range(hidden):
            proj += ((a[k] - mu) / sd) * ta[k]
        proj /= hidden
        gam = _gemv(Gw, c)
        bet = _gemv(Bw, c)
        tgam = _gemv(Gw, tc)
        tbet = _gemv(Bw, tc)
        hn = np.empty(hidden)
        tn = np.empty(hidden)
        for k in range(hidden):
            xh = (a[k] - mu) / sd
            txh = (ta[k] - tmu) / sd - xh * (proj / sd)
            g = gam[k] + Gb[k]
            y = g * xh + bet[k] + Bb[k]
            ty = g * txh + tgam[k] * xh + tbet[k]
            hn[k] = y if y >= 0.0 else slope * y
            tn[k] = ty if y >= 0.0 else slope * ty
        h = hn
        th = tn
    Wout = params[off:off + d * hidden].reshape((d, hidden))
    so = _safe(sigmas[n_blocks])
    out = _gemv(Wout, th)
    for k in range(d):
        out[k] = out[k] / so
    return out


@njit(cache=True)
def _forward_stash_one(params, sigmas, d, n_c, n_blocks, hidden, slope, eps,
                       z, c, Hout, Xh, Gm, Yv, Sdv):
    h = z
    off = 0
    for i in range(n_blocks):
        in_i = d if i == 0 else hidden
        W = params[off:off + hidden * in_i].reshape((hidden, in_i))
        off += hidden * in_i
        b = params[off:off + hidden]
        off += hidden
        Gw = params[off:off + hidden * n_c].reshape((hidden, n_c))
        off += hidden * n_c
        Gb = params[off:off + hidden]
        off += hidden
        Bw = params[off:off + hidden * n_c].reshape((hidden, n_c))
        off += hidden * n_c
        Bb = params[off:off + hidden]
        off += hidden
        s = _safe(sigmas[i])
        a = _gemv(W, h)
        mu = 0.0
        for k in range(hidden):
            a[k] = a[k] / s + b[k]
            mu += a[k]
        mu /= hidden
        var = 0.0
        for k in range(hidden):
            t = a[k] - mu
            var += t * t
        sd = math.sqrt(var / hidden + eps)
        Sdv[i] = sd
        gam = _gemv(Gw, c)
        bet = _gemv(Bw, c)
        hn = np.empty(hidden)
        for k in range(hidden):
            xh = (a[k] - mu) / sd
            g = gam[k] + Gb[k]
            y = g * xh + bet[k] + Bb[k]
            Xh[i, k] = xh
            Gm[i, k] = g
            Yv[i, k] = y
            hn[k] = y if y >= 0.0 else slope * y
            Hout[i, k] = hn[k]
        h = hn
    Wout = params[off:off + d * hidden].reshape((d, hidden))
    off += d * hidden
    bout = params[off:off + d]
    so = _safe(sigmas[n_blocks])
    out = _gemv(Wout, h)
    for k in range(d):
        out[k] = out[k] / so + bout[k]
    return out


@njit(cache=True)
def _backward_accum_one(params, sigmas, d, n_c, n_blocks, hidden, slope,
                        z, c, og, Hout, Xh, Gm, Yv, Sdv, grads):
    offs = _block_offsets(d, n_c, n_blocks, hidden)
    out_off = offs[n_blocks]
    Wout = params[out_off:out_off + d * hidden].reshape((d, hidden))
    gWout = grads[out_off:out_off + d * hidden].reshape((d, hidden))
    gbout = grads[out_off + d * hidden:out_off + d * hidden + d]
    so = _safe(sigmas[n_blocks])
    hlast = Hout[n_blocks - 1] if n_blocks > 0 else z
    for r in range(d):
        ogr = og[r] / so
        for k in range(hidden):
            gWout[r, k] += ogr * hlast[k]
        gbout[r] += og[r]
    dh = np.zeros(hidden)
    for r in range(d):
        ogr = og[r] / so
        for k in range(hidden):
            dh[k] += Wout[r, k] * ogr
    for i in range(n_blocks - 1, -1, -1):
        in_i = d if i == 0 else hidden
        off = offs[i]
        W = params[off:off + hidden * in_i].reshape((hidden, in_i))
        gW = grads[off:off + hidden * in_i].reshape((hidden, in_i))
        off += hidden * in_i
        gb = grads[off:off + hidden]
        off += hidden
        gGw = grads[off:off + hidden * n_c].reshape((hidden, n_c))
        off += hidden * n_c
        gGb = grads[off:off + hidden]
        off += hidden
        gBw = grads[off:off + hidden * n_c].reshape((hidden, n_c))
        off += hidden * n_c
        gBb = grads[off:off + hidden]
        s = _safe(sigmas[i])
        sd = Sdv[i]
        hin = z if i == 0 else Hout[i - 1]
        dxhat = np.empty(hidden)
        m1 = 0.0
        m2 = 0.0
        for k in range(hidden):
            dy = dh[k] if Yv[i, k] >= 0.0 else slope * dh[k]
            xh = Xh[i, k]
            dgam = dy * xh
            gGb[k] += dgam
            gBb[k] += dy
            for j in range(n_c):
                gGw[k, j] += dgam * c[j]
                gBw[k, j] += dy * c[j]
            dx = dy * Gm[i, k]
            dxhat[k] = dx
            m1 += dx
            m2 += dx * xh
        m1 /= hidden
        m2 /= hidden
        da = np.empty(hidden)
        for k in range(hidden):
            da[k] = (dxhat[k] - m1 - Xh[i, k] * m2) / sd
            gb[k] += da[k]
        for k in range(hidden):
            dak = da[k] / s
            for j in range(in_i):
                gW[k, j] += dak * hin[j]
        dh_next = np.zeros(in_i)
        for k in range(hidden):
            dak = da[k] / s
            for j in range(in_i):
                dh_next[j] += W[k, j] * dak
        dh = dh_next


@njit(cache=True)
def backward_one(params, sigmas, d, n_c, n_blocks, hidden, slope, eps, z, c, out_grad):
    Hout = np.empty((n_blocks, hidden))
    Xh = np.empty((n_blocks, hidden))
    Gm = np.empty((n_blocks, hidden))
    Yv = np.empty((n_blocks, hidden))
    Sdv = np.empty(n_blocks)
    _forward_stash_one(params, sigmas, d, n_c, n_blocks, hidden, slope, eps,
                       z, c, Hout, Xh, Gm, Yv, Sdv)
    grads = np.zeros_like(params)
    _backward_accum_one(params, sigmas, d, n_c, n_blocks, hidden, slope,
                        z, c, out_grad, Hout, Xh, Gm, Yv, Sdv, grads)
    return grads


@njit(cache=True)
def forward_batch(params, sigmas, d, n_c, n_blocks, hidden, slope, eps, Z, C):
    B = Z.shape[0]
    out = np.empty((B, d))
    for b in range(B):
        out[b] = forward_one(params, sigmas, d, n_c, n_blocks, hidden, slope, eps,
                             Z[b], C[b])
    return out


@njit(cache=True)
def loss_grad_batch(params, sigmas, d, n_c, n_blocks, hidden, slope, eps, Z, C):
    B = Z.shape[0]
    Hout = np.empty((n_blocks, hidden))
    Xh = np.empty((n_blocks, hidden))
    Gm = np.empty((n_blocks, hidden))
    Yv = np.empty((n_blocks, hidden))
    Sdv = np.empty(n_blocks)
    grads = np.zeros_like(params)
    og = np.empty(d)
    loss = 0.0
    for b in range(B):
        out = _forward_stash_one(params, sigmas, d, n_c, n_blocks, hidden, slope, eps,
                                 Z[b], C[b], Hout, Xh, Gm, Yv, Sdv)
        for k in range(d):
            r = out[k] - Z[b, k]
            loss += r * r
            og[k] = 2.0 * r / B
        _backward_accum_one(params, sigmas, d, n_c, n_blocks, hidden, slope,
                            Z[b], C[b], og, Hout, Xh, Gm, Yv, Sdv, grads)
    return loss / B, grads


# ---------------------------------------------------------------------------
# RNG fill: xoshiro256++ step + Marsaglia polar, bit-identical to the numpy
# lane (only log/sqrt and exact float/integer arithmetic are used).
# ---------------------------------------------------------------------------

@njit(cache=True)
def _next_u64(s):
    s0 = s[0]
    s1 = s[1]
    s2 = s[2]
    s3 = s[3]
    x = s0 + s3
    res = ((x << _U(23)) | (x >> _U(41))) + s0
    t = s1 << _U(17)
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = (s3 << _U(45)) | (s3 >> _U(19))
    s[0] = s0
    s[1] = s1
    s[2] = s2
    s[3] = s3
    return res


@njit(cache=True)
def fill_normals(state, spare, out):
    n = out.shape[0]
    i = 0
    if spare[1] != 0.0 and n > 0:
        out[0] = spare[0]
        spare[1] = 0.0
        i = 1
    while i < n:
        while True:
            u = 2.0 * (np.float64(_next_u64(state) >> _U(11)) * _INV53) - 1.0
            v = 2.0 * (np.float64(_next_u64(state) >> _U(11)) * _INV53) - 1.0
            s = u * u + v * v
            if 0.0 < s < 1.0:
                break
        f = math.sqrt(-2.0 * math.log(s) / s)
        out[i] = u * f
        i += 1
        if i < n:
            out[i] = v * f
            i += 1
        else:
            spare[0] = v * f
            spare[1] = 1.0

"""Pure-numpy reference lane for the hot kernels.

Layout of the flat parameter vector (C order, float64), for block index
``i`` with input width ``in_i`` (= d for block 0, else hidden):

    W  (hidden x in_i) | b (hidden) | Gw (hidden x n_c) | Gb (hidden)
    | Bw (hidden x n_c) | Bb (hidden)

repeated for every block, followed by the output head ``Wout (d x hidden)``
and ``bout (d)``.  ``sigmas`` holds one spectral-norm estimate per
fully-connected weight (blocks first, output head last); weights are used
as W/sigma but stored raw.

Feature normalization inside a block is per-sample over the feature axis
with population variance, then a condition-dependent affine (gamma, beta),
then LeakyReLU.  The LeakyReLU derivative at exactly 0 is taken as 1.
"""

import math

import numpy as np

_SIGMA_FLOOR = 1e-12
_INV53 = 2.0 ** -53
_MASK = (1 << 64) - 1


def _sig(sigmas, i):
    return max(sigmas[i], _SIGMA_FLOOR)


def _block_views(params, d, n_c, n_blocks, hidden):
    """Iterate (W, b, Gw, Gb, Bw, Bb) views per block, then yield (Wout, bout)."""
    off = 0
    for i in range(n_blocks):
        in_i = d if i == 0 else hidden
        W = params[off:off + hidden * in_i].reshape(hidden, in_i)
        off += hidden * in_i
        b = params[off:off + hidden]
        off += hidden
        Gw = params[off:off + hidden * n_c].reshape(hidden, n_c)
        off += hidden * n_c
        Gb = params[off:off + hidden]
        off += hidden
        Bw = params[off:off + hidden * n_c].reshape(hidden, n_c)
        off += hidden * n_c
        Bb = params[off:off + hidden]
        off += hidden
        yield W, b, Gw, Gb, Bw, Bb
    Wout = params[off:off + d * hidden].reshape(d, hidden)
    off += d * hidden
    bout = params[off:off + d]
    yield Wout, bout


def forward_one(params, sigmas, d, n_c, n_blocks, hidden, slope, eps, z, c):
    views = list(_block_views(params, d, n_c, n_blocks, hidden))
    h = z
    for i, (W, b, Gw, Gb, Bw, Bb) in enumerate(views[:-1]):
        a = (W @ h) / _sig(sigmas, i) + b
        mu = a.mean()
        ac = a - mu
        sd = math.sqrt((ac @ ac) / hidden + eps)
        xhat = ac / sd
        y = (Gw @ c + Gb) * xhat + (Bw @ c + Bb)
        h = np.where(y >= 0.0, y, slope * y)
    Wout, bout = views[-1]
    return (Wout @ h) / _sig(sigmas, n_blocks) + bout


def jvp_one(params, sigmas, d, n_c, n_blocks, hidden, slope, eps, z, c, tz, tc):
    """Directional derivative of forward_one with tangents tz (latent) and tc (condition)."""
    views = list(_block_views(params, d, n_c, n_blocks, hidden))
    h, th = z, tz
    for i, (W, b, Gw, Gb, Bw, Bb) in enumerate(views[:-1]):
        s = _sig(sigmas, i)
        a = (W @ h) / s + b
        ta = (W @ th) / s
        mu = a.mean()
        ac = a - mu
        sd = math.sqrt((ac @ ac) / hidden + eps)
        xhat = ac / sd
        # d(xhat) for per-sample feature normalization with population variance
        txhat = (ta - ta.mean()) / sd - xhat * ((xhat @ ta) / hidden / sd)
        gam = Gw @ c + Gb
        y = gam * xhat + (Bw @ c + Bb)
        ty = gam * txhat + (Gw @ tc) * xhat + Bw @ tc
        h = np.where(y >= 0.0, y, slope * y)
        th = np.where(y >= 0.0, ty, slope * ty)
    Wout, _ = views[-1]
    return (Wout @ th) / _sig(sigmas, n_blocks)


def _forward_batch_stash(params, sigmas, d, n_c, n_blocks, hidden, slope, eps, Z, C):
    views = list(_block_views(params, d, n_c, n_blocks, hidden))
    H = Z
    stash = []
    for i, (W, b, Gw, Gb, Bw, Bb) in enumerate(views[:-1]):
        A = (H @ W.T) / _sig(sigmas, i) + b
        mu = A.mean(axis=1, keepdims=True)
        Ac = A - mu
        Sd = np.sqrt((Ac * Ac).mean(axis=1, keepdims=True) + eps)
        Xhat = Ac / Sd
        Gam = C @ Gw.T + Gb
        Y = Gam * Xhat + (C @ Bw.T + Bb)
        stash.append((H, Sd, Xhat, Gam, Y))
        H = np.where(Y >= 0.0, Y, slope * Y)
    Wout, bout = views[-1]
    out = (H @ Wout.T) / _sig(sigmas, n_blocks) + bout
    return out, H, stash, views


def forward_batch(params, sigmas, d, n_c, n_blocks, hidden, slope, eps, Z, C):
    out, _, _, _ = _forward_batch_stash(
        params, sigmas, d, n_c, n_blocks, hidden, slope, eps, Z, C)
    return out


def _backward_from_stash(params, sigmas, d, n_c, n_blocks, hidden, slope,
                         Hlast, stash, views, C, OG):
    grads = np.zeros_like(params)
    gviews = list(_block_views(grads, d, n_c, n_blocks, hidden))
    Wout, _ = views[-1]
    gWout, gbout = gviews[-1]
    s_out = _sig(sigmas, n_blocks)
    gWout += (OG.T @ Hlast) / s_out
    gbout += OG.sum(axis=0)
    dH = (OG @ Wout) / s_out
    for i in range(n_blocks - 1, -1, -1):
        W, b, Gw, Gb, Bw, Bb = views[i]
        gW, gb, gGw, gGb, gBw, gBb = gviews[i]
        Hin, Sd, Xhat, Gam, Y = stash[i]
        dY = np.where(Y >= 0.0, dH, slope * dH)
        dGam = dY * Xhat
        gGw += dGam.T @ C
        gGb += dGam.sum(axis=0)
        gBw += dY.T @ C
        gBb += dY.sum(axis=0)
        dXhat = dY * Gam
        m1 = dXhat.mean(axis=1, keepdims=True)
        m2 = (dXhat * Xhat).mean(axis=1, keepdims=True)
        dA = (dXhat - m1 - Xhat * m2) / Sd
        s = _sig(sigmas, i)
        gb += dA.sum(axis=0)
        gW += (dA.T @ Hin) / s
        dH = (dA @ W) / s
    return grads


def backward_one(params, sigmas, d, n_c, n_blocks, hidden, slope, eps, z, c, out_grad):
    _, Hlast, stash, views = _forward_batch_stash(
        params, sigmas, d, n_c, n_blocks, hidden, slope, eps,
        z[None, :], c[None, :])
    return _backward_from_stash(params, sigmas, d, n_c, n_blocks, hidden, slope,
                                Hlast, stash, views, c[None, :], out_grad[None, :])


def loss_grad_batch(params, sigmas, d, n_c, n_blocks, hidden, slope, eps, Z, C):
    """Mean squared reconstruction loss over the batch and its raw-parameter gradient."""
    out, Hlast, stash, views = _forward_batch_stash(
        params, sigmas, d, n_c, n_blocks, hidden, slope, eps, Z, C)
    R = out - Z
    B = Z.shape[0]
    loss = float((R * R).sum() / B)
    OG = (2.0 / B) * R
    grads = _backward_from_stash(params, sigmas, d, n_c, n_blocks, hidden, slope,
                                 Hlast, stash, views, C, OG)
    return loss, grads


# ---------------------------------------------------------------------------
# RNG fill (xoshiro256++ state step + Marsaglia polar normals).  This scalar
# loop is the slow-but-reference twin of the numba fill; both must produce
# bit-identical streams (guarded by tests).
# ---------------------------------------------------------------------------

def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK


def _next_u64_py(s0, s1, s2, s3):
    res = (_rotl((s0 + s3) & _MASK, 23) + s0) & _MASK
    t = (s1 << 17) & _MASK
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, 45)
    return res, s0, s1, s2, s3


def fill_normals(state, spare, out):
    """Fill ``out`` with standard normals, advancing state/spare in place."""
    s0, s1, s2, s3 = (int(x) for x in state)
    n = out.shape[0]
    i = 0
    if spare[1] != 0.0 and n > 0:
        out[0] = spare[0]
        spare[1] = 0.0
        i = 1
    while i < n:
        while True:
            r, s0, s1, s2, s3 = _next_u64_py(s0, s1, s2, s3)
            u = 2.0 * ((r >> 11) * _INV53) - 1.0
            r, s0, s1, s2, s3 = _next_u64_py(s0, s1, s2, s3)
            v = 2.0 * ((r >> 11) * _INV53) - 1.0
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
    state[0] = s0
    state[1] = s1
    state[2] = s2
    state[3] = s3

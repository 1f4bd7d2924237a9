"""Deterministic numerics: RNG, power iteration, Adam, finite differences.

The RNG is xoshiro256++ seeded through splitmix64, with standard normals
drawn by the Marsaglia polar method (one spare variate cached in state).
Both are small, published algorithms chosen so that another implementation
can reproduce the exact streams; all draws are advanced through the same
uint64 state regardless of which kernel lane fills the buffers.
"""

from dataclasses import dataclass, field

import numpy as np

from . import backend
from ._kernels_numpy import _next_u64_py
from .errors import InvalidArgumentError

_MASK = (1 << 64) - 1
_INV53 = 2.0 ** -53


def as_f64_vector(x, name="vector"):
    v = np.ascontiguousarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise InvalidArgumentError(f"{name} must be 1-D, got shape {v.shape}")
    return v


def as_f64_matrix(x, name="matrix"):
    m = np.ascontiguousarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise InvalidArgumentError(f"{name} must be 2-D, got shape {m.shape}")
    return m


class RngState:
    """Reproducible stream: identical seed means identical draws, forever."""

    __slots__ = ("seed", "_state", "_spare")

    def __init__(self, seed):
        self.seed = int(seed) & _MASK
        x = self.seed
        words = []
        for _ in range(4):
            x = (x + 0x9E3779B97F4A7C15) & _MASK
            z = x
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
            words.append(z ^ (z >> 31))
        if not any(words):
            words[0] = 1
        self._state = np.array(words, dtype=np.uint64)
        self._spare = np.zeros(2, dtype=np.float64)

    def next_u64(self):
        s = self._state
        res, s0, s1, s2, s3 = _next_u64_py(int(s[0]), int(s[1]), int(s[2]), int(s[3]))
        s[0], s[1], s[2], s[3] = s0, s1, s2, s3
        return res

    def uniform(self):
        """Uniform float64 in [0, 1)."""
        return (self.next_u64() >> 11) * _INV53

    def below(self, n):
        """Uniform integer in [0, n) via the 128-bit multiply trick."""
        if n <= 0:
            raise InvalidArgumentError("below() needs n >= 1")
        return (self.next_u64() * n) >> 64

    def normals(self, n):
        out = np.empty(n, dtype=np.float64)
        backend.kernels().fill_normals(self._state, self._spare, out)
        return out

    def normal(self):
        return float(self.normals(1)[0])

    def spawn(self):
        """Independent child stream, deterministically derived from this one."""
        return RngState(self.next_u64())


def sample_gaussian(rng, dim):
    """dim i.i.d. standard normals, advancing rng."""
    if dim < 1:
        raise InvalidArgumentError("dim must be >= 1")
    return rng.normals(int(dim))


def matvec(m, v):
    m = as_f64_matrix(m)
    v = as_f64_vector(v)
    if m.shape[1] != v.shape[0]:
        raise InvalidArgumentError(
            f"matvec shape mismatch: {m.shape} @ {v.shape}")
    return m @ v


def power_iteration(m, u0, iters):
    """Largest-singular-value estimate of ``m`` with persistent left vector.

    Runs ``iters`` rounds of v = normalize(m^T u), u = normalize(m v) and
    returns (sigma, u) with sigma = u^T m v.  A (numerically) zero matrix
    yields sigma 0 with u unchanged.
    """
    m = as_f64_matrix(m)
    u = as_f64_vector(u0).copy()
    if iters < 1:
        raise InvalidArgumentError("iters must be >= 1")
    nu = np.linalg.norm(u)
    if nu == 0.0:
        raise InvalidArgumentError("u0 must be nonzero")
    u /= nu
    v = None
    for _ in range(int(iters)):
        v = m.T @ u
        nv = np.linalg.norm(v)
        if nv < 1e-300:
            return 0.0, u
        v /= nv
        w = m @ v
        nw = np.linalg.norm(w)
        if nw < 1e-300:
            return 0.0, u
        u = w / nw
    return float(u @ (m @ v)), u


@dataclass
class AdamState:
    """Bias-corrected Adam over one flat parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, n, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        return cls(m=np.zeros(n), v=np.zeros(n), t=0,
                   lr=lr, beta1=beta1, beta2=beta2, eps=eps)


def adam_step(state, params, grads):
    """One Adam update; advances ``state`` and returns the new parameters."""
    params = as_f64_vector(params, "params")
    grads = as_f64_vector(grads, "grads")
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise InvalidArgumentError(
            f"adam_step shape mismatch: params {params.shape}, grads {grads.shape}, "
            f"state {state.m.shape}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grads
    state.v *= b2
    state.v += (1.0 - b2) * (grads * grads)
    mhat = state.m / (1.0 - b1 ** state.t)
    vhat = state.v / (1.0 - b2 ** state.t)
    return params - state.lr * mhat / (np.sqrt(vhat) + state.eps)


def finite_diff_jvp(f, x, direction, h=1e-5):
    """Central-difference directional derivative (f(x+h*dir) - f(x-h*dir)) / 2h."""
    if h <= 0.0:
        raise InvalidArgumentError("h must be > 0")
    x = as_f64_vector(x)
    direction = as_f64_vector(direction, "direction")
    hi = np.asarray(f(x + h * direction), dtype=np.float64)
    lo = np.asarray(f(x - h * direction), dtype=np.float64)
    return (hi - lo) / (2.0 * h)


def finite_diff_grad(f, x, h=1e-5):
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    if h <= 0.0:
        raise InvalidArgumentError("h must be > 0")
    x = as_f64_vector(x).copy()
    g = np.empty_like(x)
    for i in range(x.shape[0]):
        xi = x[i]
        x[i] = xi + h
        hi = float(f(x))
        x[i] = xi - h
        lo = float(f(x))
        x[i] = xi
        g[i] = (hi - lo) / (2.0 * h)
    return g

"""The auxiliary mapping F: (latent, condition) -> latent.

F is a stack of conditional linear blocks: a spectrally-normalized linear
layer, per-sample feature normalization with a condition-dependent affine
(the gamma/beta nets read the condition), and a LeakyReLU.  A final
spectrally-normalized linear head (no normalization, no activation) maps
back to latent width.  Spectral normalization keeps one persistent power
iteration vector per fully-connected weight; the gamma/beta affines are
unconstrained.

Contractivity in the latent argument is monitored, not structurally
guaranteed: learned gamma scales can push a block's Lipschitz constant
past 1, so `spectral_radius_z` exists as a diagnostic and callers that
need an invertible (I - dF/dz) must check or guard it themselves.

Parameters live in one flat float64 vector (see ``_kernels_numpy`` for the
layout) so updates, checkpoints, and finite-difference checks stay trivial.
"""

from dataclasses import dataclass

import numpy as np

from . import backend
from . import _kernels_numpy as _ref
from .errors import InvalidArgumentError
from .numerics import as_f64_vector, power_iteration

_SIGMA_FLOOR = 1e-12


def leaky_relu(x, slope=0.2):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x >= 0.0, x, slope * x)


def adain(x, gamma, beta, eps=1e-5):
    """Normalize features of one sample, then scale/shift: gamma*(x-mu)/sd + beta."""
    x = as_f64_vector(x, "x")
    mu = x.mean()
    sd = np.sqrt(((x - mu) ** 2).mean() + eps)
    return np.asarray(gamma) * (x - mu) / sd + np.asarray(beta)


@dataclass(frozen=True)
class ArchConfig:
    d: int = 16
    n_c: int = 4
    n_blocks: int = 6
    hidden: int = 64
    leaky_slope: float = 0.2
    adain_eps: float = 1e-5

    def __post_init__(self):
        if min(self.d, self.n_c, self.n_blocks, self.hidden) < 1:
            raise InvalidArgumentError("all architecture dims must be >= 1")
        if not (0.0 < self.leaky_slope < 1.0):
            raise InvalidArgumentError("leaky_slope must lie in (0, 1)")
        if self.adain_eps <= 0.0:
            raise InvalidArgumentError("adain_eps must be > 0")

    def block_in(self, i):
        return self.d if i == 0 else self.hidden

    def layout(self):
        """Ordered {name: (offset, shape)} over the flat parameter vector."""
        out = {}
        off = 0

        def add(name, shape):
            nonlocal off
            out[name] = (off, shape)
            off += int(np.prod(shape))

        for i in range(self.n_blocks):
            add(f"block{i}.weight", (self.hidden, self.block_in(i)))
            add(f"block{i}.bias", (self.hidden,))
            add(f"block{i}.gamma_weight", (self.hidden, self.n_c))
            add(f"block{i}.gamma_bias", (self.hidden,))
            add(f"block{i}.beta_weight", (self.hidden, self.n_c))
            add(f"block{i}.beta_bias", (self.hidden,))
        add("out.weight", (self.d, self.hidden))
        add("out.bias", (self.d,))
        return out

    def param_count(self):
        off, shape = list(self.layout().items())[-1][1]
        return off + int(np.prod(shape))

    def to_dict(self):
        return {"d": self.d, "n_c": self.n_c, "n_blocks": self.n_blocks,
                "hidden": self.hidden, "leaky_slope": self.leaky_slope,
                "adain_eps": self.adain_eps}


class AuxMap:
    """Flat-parameter auxiliary mapping with analytic forward/JVP/backward."""

    def __init__(self, arch, params, sn_u, sn_sigma):
        self.arch = arch
        self.params = np.ascontiguousarray(params, dtype=np.float64)
        self.sn_u = np.ascontiguousarray(sn_u, dtype=np.float64)
        self.sn_sigma = np.ascontiguousarray(sn_sigma, dtype=np.float64)
        if self.params.shape != (arch.param_count(),):
            raise InvalidArgumentError(
                f"params must have shape ({arch.param_count()},), got {self.params.shape}")
        if self.sn_u.shape != (arch.n_blocks * arch.hidden + arch.d,):
            raise InvalidArgumentError("sn_u has wrong length for this architecture")
        if self.sn_sigma.shape != (arch.n_blocks + 1,):
            raise InvalidArgumentError("sn_sigma has wrong length for this architecture")
        self._layout = arch.layout()

    # -- construction -------------------------------------------------------

    @classmethod
    def init(cls, arch, rng, sn_warmup_steps=3):
        """Scaled Gaussian weights; gamma(c) starts near 1, beta(c) near 0."""
        params = np.zeros(arch.param_count())
        f = cls(arch, params, np.zeros(arch.n_blocks * arch.hidden + arch.d),
                np.ones(arch.n_blocks + 1))
        for i in range(arch.n_blocks):
            in_i = arch.block_in(i)
            w = f.view(f"block{i}.weight")
            w[:] = rng.normals(w.size).reshape(w.shape) / np.sqrt(in_i)
            gw = f.view(f"block{i}.gamma_weight")
            gw[:] = 0.1 * rng.normals(gw.size).reshape(gw.shape)
            f.view(f"block{i}.gamma_bias")[:] = 1.0
            bw = f.view(f"block{i}.beta_weight")
            bw[:] = 0.1 * rng.normals(bw.size).reshape(bw.shape)
        w = f.view("out.weight")
        w[:] = rng.normals(w.size).reshape(w.shape) / np.sqrt(arch.hidden)
        for i in range(arch.n_blocks + 1):
            u = f.sn_u_view(i)
            u[:] = rng.normals(u.size)
            u /= np.linalg.norm(u)
        f.spectral_normalize(power_steps=sn_warmup_steps)
        return f

    def copy(self):
        return AuxMap(self.arch, self.params.copy(), self.sn_u.copy(),
                      self.sn_sigma.copy())

    # -- raw parameter access -----------------------------------------------

    def view(self, name):
        off, shape = self._layout[name]
        return self.params[off:off + int(np.prod(shape))].reshape(shape)

    def sn_u_view(self, i):
        h, d, n = self.arch.hidden, self.arch.d, self.arch.n_blocks
        if i < n:
            return self.sn_u[i * h:(i + 1) * h]
        return self.sn_u[n * h:n * h + d]

    def _fc_weight(self, i):
        return self.view("out.weight" if i == self.arch.n_blocks else f"block{i}.weight")

    def effective_weight(self, i):
        """Weight of FC layer i as used by forward: raw / sigma estimate."""
        return self._fc_weight(i) / max(self.sn_sigma[i], _SIGMA_FLOOR)

    def _args(self):
        a = self.arch
        return (self.params, self.sn_sigma, a.d, a.n_c, a.n_blocks, a.hidden,
                a.leaky_slope, a.adain_eps)

    def _check_z(self, z):
        z = as_f64_vector(z, "z")
        if z.shape[0] != self.arch.d:
            raise InvalidArgumentError(f"z must have length {self.arch.d}, got {z.shape[0]}")
        return z

    def _check_c(self, c):
        c = as_f64_vector(c, "c")
        if c.shape[0] != self.arch.n_c:
            raise InvalidArgumentError(f"c must have length {self.arch.n_c}, got {c.shape[0]}")
        return c

    # -- inference ----------------------------------------------------------

    def forward(self, z, c):
        z, c = self._check_z(z), self._check_c(c)
        return backend.kernels().forward_one(*self._args(), z, c)

    def forward_batch(self, Z, C):
        Z = np.ascontiguousarray(Z, dtype=np.float64)
        C = np.ascontiguousarray(C, dtype=np.float64)
        if Z.ndim != 2 or C.ndim != 2 or Z.shape[0] != C.shape[0] \
                or Z.shape[1] != self.arch.d or C.shape[1] != self.arch.n_c:
            raise InvalidArgumentError(
                f"bad batch shapes {Z.shape} / {C.shape} for arch "
                f"d={self.arch.d} n_c={self.arch.n_c}")
        return backend.kernels().forward_batch(*self._args(), Z, C)

    def jvp_z(self, z, c, direction):
        z, c = self._check_z(z), self._check_c(c)
        t = self._check_z(direction)
        return backend.kernels().jvp_one(*self._args(), z, c, t, np.zeros(self.arch.n_c))

    def jvp_c(self, z, c, direction):
        z, c = self._check_z(z), self._check_c(c)
        t = self._check_c(direction)
        return backend.kernels().jvp_one(*self._args(), z, c, np.zeros(self.arch.d), t)

    def jacobian_z(self, z, c):
        """d x d latent Jacobian, assembled column by column from jvp_z."""
        d = self.arch.d
        J = np.empty((d, d))
        e = np.zeros(d)
        for k in range(d):
            e[k] = 1.0
            J[:, k] = self.jvp_z(z, c, e)
            e[k] = 0.0
        return J

    def spectral_radius_z(self, z, c, iters=50):
        """Power-iteration estimate of the operator norm of the latent Jacobian."""
        J = self.jacobian_z(z, c)
        u0 = np.arange(1.0, self.arch.d + 1.0)
        sigma, _ = power_iteration(J, u0 / np.linalg.norm(u0), iters)
        return sigma

    def forward_detail(self, z, c):
        """Per-block intermediates (reference lane), for diagnostics and tests."""
        z, c = self._check_z(z), self._check_c(c)
        out, _, stash, _ = _ref._forward_batch_stash(*self._args(), z[None, :], c[None, :])
        blocks = []
        for (Hin, Sd, Xhat, Gam, Y) in stash:
            a = self.arch
            blocks.append({
                "input": Hin[0].copy(),
                "normalized": Xhat[0].copy(),
                "pre_activation": Y[0].copy(),
                "output": leaky_relu(Y[0], a.leaky_slope),
            })
        return {"blocks": blocks, "output": out[0]}

    # -- training support -----------------------------------------------------

    def backward(self, z, c, out_grad):
        """Gradient of <forward(z, c), out_grad> w.r.t. the flat raw parameters.

        Spectral normalization is treated as a constant 1/sigma scale inside
        one step, matching how the training loop refreshes sigma.
        """
        z, c = self._check_z(z), self._check_c(c)
        og = self._check_z(out_grad)
        return backend.kernels().backward_one(*self._args(), z, c, og)

    def loss_grad_batch(self, Z, C):
        """(mean squared reconstruction loss, flat parameter gradient)."""
        Z = np.ascontiguousarray(Z, dtype=np.float64)
        C = np.ascontiguousarray(C, dtype=np.float64)
        if Z.shape[0] == 0:
            raise InvalidArgumentError("empty batch")
        return backend.kernels().loss_grad_batch(*self._args(), Z, C)

    def spectral_normalize(self, power_steps=1):
        """Refresh each FC layer's sigma with power iteration; returns self."""
        if power_steps < 1:
            raise InvalidArgumentError("power_steps must be >= 1")
        for i in range(self.arch.n_blocks + 1):
            u = self.sn_u_view(i)
            sigma, u_new = power_iteration(self._fc_weight(i), u, power_steps)
            u[:] = u_new
            self.sn_sigma[i] = sigma
        return self


class LinearMap:
    """Closed-form auxiliary mapping F(z, c) = A z + B c, for analytic worlds."""

    def __init__(self, a, b):
        self.a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        self.b = np.atleast_2d(np.asarray(b, dtype=np.float64))
        if self.a.shape[0] != self.a.shape[1] or self.b.shape[0] != self.a.shape[0]:
            raise InvalidArgumentError(
                f"incompatible LinearMap shapes {self.a.shape} / {self.b.shape}")

    @property
    def arch(self):
        return ArchConfig(d=self.a.shape[0], n_c=self.b.shape[1], n_blocks=1, hidden=1)

    def forward(self, z, c):
        return self.a @ np.asarray(z, dtype=np.float64) + self.b @ np.asarray(c, dtype=np.float64)

    def jvp_z(self, z, c, direction):
        return self.a @ np.asarray(direction, dtype=np.float64)

    def jvp_c(self, z, c, direction):
        return self.b @ np.asarray(direction, dtype=np.float64)

    def jacobian_z(self, z, c):
        return self.a.copy()

    def spectral_radius_z(self, z, c, iters=50):
        u0 = np.arange(1.0, self.a.shape[0] + 1.0)
        sigma, _ = power_iteration(self.a, u0 / np.linalg.norm(u0), iters)
        return sigma

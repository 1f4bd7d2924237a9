"""Forward-only condition oracles.

An oracle maps a latent vector to a condition vector and is evaluated
strictly in the forward direction by the navigation machinery; analytic
Jacobians exist only for the built-in synthetic families (the external
process kind deliberately refuses them).  Every row evaluated bumps a
thread-safe call counter, which is how re-estimation cost is audited.

Synthetic families (all derived deterministically from the spec seed):

* ``linear``         Gamma @ z, Gamma = scale * base (rectangular identity
                     by default, seeded row-normalized Gaussian rows with
                     ``random=1``)
* ``sigmoid-attrs``  sigmoid(A z + b), attribute scores in (0, 1)
* ``tanh-mix``       sigmoid(A tanh(gain * B z)), a bounded nonconvex
                     composite that gives latent-code optimization trouble
* ``keypoint-bumps`` smooth radial-bump coordinates confined to [0, 1]
* ``external``       line-delimited JSON over a child process's stdio
"""

import hashlib
import json
import shlex
import subprocess
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, OracleProtocolError, UnsupportedOperationError
from .numerics import RngState, as_f64_vector

_KINDS = ("linear", "sigmoid-attrs", "tanh-mix", "keypoint-bumps", "external")


@dataclass(frozen=True)
class OracleSpec:
    kind: str
    d: int
    n_c: int
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidArgumentError(f"unknown oracle kind {self.kind!r}")
        if self.d < 1 or self.n_c < 1:
            raise InvalidArgumentError("oracle dims must be >= 1")

    def canonical(self):
        parts = [f"kind={self.kind}", f"d={self.d}", f"n_c={self.n_c}", f"seed={self.seed}"]
        for k in sorted(self.params):
            parts.append(f"{k}={self.params[k]}")
        return "|".join(parts)

    def digest(self):
        return hashlib.sha256(self.canonical().encode("utf-8")).digest()


def parse_oracle_spec(text, d=None, n_c=None, seed=None):
    """Parse "kind:key=val,..." (or "external:cmd=...") into an OracleSpec.

    d, n_c and seed may come from the string or from the keyword defaults;
    string values win.  For the external kind everything after "cmd=" is the
    child command line, taken verbatim.
    """
    text = text.strip()
    kind, _, rest = text.partition(":")
    kind = kind.strip()
    params = {}
    if kind == "external":
        if not rest.startswith("cmd="):
            raise InvalidArgumentError('external oracle spec must look like "external:cmd=..."')
        params["cmd"] = rest[len("cmd="):]
    elif rest:
        for item in rest.split(","):
            if not item:
                continue
            key, _, val = item.partition("=")
            key = key.strip().replace("-", "_")
            if not _:
                raise InvalidArgumentError(f"bad oracle param {item!r}")
            params[key] = val.strip()
    for dim_key, fallback in (("d", d), ("n_c", n_c), ("nc", None), ("seed", seed)):
        if dim_key in params:
            val = int(params.pop(dim_key))
            if dim_key == "d":
                d = val
            elif dim_key in ("n_c", "nc"):
                n_c = val
            else:
                seed = val
    if d is None or n_c is None:
        raise InvalidArgumentError("oracle spec needs d and n_c (flags or string params)")
    typed = {}
    for k, v in params.items():
        if k == "cmd":
            typed[k] = v
        else:
            typed[k] = float(v)
    return OracleSpec(kind=kind, d=int(d), n_c=int(n_c),
                      seed=int(seed) if seed is not None else 0, params=typed)


class _BaseOracle:
    def __init__(self, spec):
        self.spec = spec
        self._calls = 0
        self._lock = threading.Lock()

    @property
    def call_count(self):
        with self._lock:
            return self._calls

    def _count(self, n):
        with self._lock:
            self._calls += n

    def _check_z(self, z):
        z = as_f64_vector(z, "z")
        if z.shape[0] != self.spec.d:
            raise InvalidArgumentError(
                f"latent has length {z.shape[0]}, oracle wants {self.spec.d}")
        return z

    def eval(self, z):
        z = self._check_z(z)
        c = self._eval_batch_impl(z[None, :])[0]
        self._count(1)
        return c

    def eval_batch(self, Z):
        Z = np.ascontiguousarray(Z, dtype=np.float64)
        if Z.ndim != 2 or Z.shape[1] != self.spec.d:
            raise InvalidArgumentError(f"batch must be (n, {self.spec.d}), got {Z.shape}")
        C = self._eval_batch_impl(Z)
        self._count(Z.shape[0])
        return C

    def eval_grad(self, z):
        raise UnsupportedOperationError(
            f"oracle kind {self.spec.kind!r} has no analytic Jacobian")


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _row_normalized(rng, rows, cols):
    m = rng.normals(rows * cols).reshape(rows, cols)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return m / norms


class SyntheticOracle(_BaseOracle):
    """Analytic world; derived matrices are fixed functions of (kind, dims, seed)."""

    def __init__(self, spec):
        super().__init__(spec)
        rng = RngState(spec.seed)
        p = spec.params
        d, n_c = spec.d, spec.n_c
        if spec.kind == "linear":
            scale = float(p.get("scale", 1.0))
            if float(p.get("random", 0.0)):
                base = _row_normalized(rng, n_c, d)
            else:
                base = np.eye(n_c, d)
            self._gamma = scale * base
        elif spec.kind == "sigmoid-attrs":
            self._a = _row_normalized(rng, n_c, d)
            bias_scale = float(p.get("bias_scale", 0.0))
            self._b = bias_scale * rng.normals(n_c) if bias_scale else np.zeros(n_c)
        elif spec.kind == "tanh-mix":
            k = int(p.get("mix", d))
            self._gain = float(p.get("gain", 1.0))
            self._bm = _row_normalized(rng, k, d)
            self._am = _row_normalized(rng, n_c, k)
        elif spec.kind == "keypoint-bumps":
            n_bumps = int(p.get("bumps", 8))
            self._ell = float(p.get("length_scale", np.sqrt(d)))
            self._centers = rng.normals(n_bumps * d).reshape(n_bumps, d)
            w = rng.normals(n_c * n_bumps).reshape(n_c, n_bumps)
            w *= 0.45 / np.abs(w).sum(axis=1, keepdims=True)
            self._bump_w = w
        else:
            raise InvalidArgumentError(f"{spec.kind!r} is not a synthetic kind")

    def _eval_batch_impl(self, Z):
        kind = self.spec.kind
        if kind == "linear":
            return Z @ self._gamma.T
        if kind == "sigmoid-attrs":
            return _sigmoid(Z @ self._a.T + self._b)
        if kind == "tanh-mix":
            return _sigmoid(np.tanh(self._gain * (Z @ self._bm.T)) @ self._am.T)
        # keypoint-bumps
        diff = Z[:, None, :] - self._centers[None, :, :]
        phi = np.exp(-(diff * diff).sum(axis=2) / (2.0 * self._ell ** 2))
        return 0.5 + phi @ self._bump_w.T

    def eval_grad(self, z):
        """Analytic Jacobian dPhi/dz, shape (n_c, d)."""
        z = self._check_z(z)
        kind = self.spec.kind
        if kind == "linear":
            return self._gamma.copy()
        if kind == "sigmoid-attrs":
            s = _sigmoid(self._a @ z + self._b)
            return (s * (1.0 - s))[:, None] * self._a
        if kind == "tanh-mix":
            pre = self._gain * (self._bm @ z)
            h = np.tanh(pre)
            s = _sigmoid(self._am @ h)
            inner = (1.0 - h * h)[:, None] * (self._gain * self._bm)
            return (s * (1.0 - s))[:, None] * (self._am @ inner)
        # keypoint-bumps
        diff = z[None, :] - self._centers
        phi = np.exp(-(diff * diff).sum(axis=1) / (2.0 * self._ell ** 2))
        dphi = -(phi[:, None] / self._ell ** 2) * diff
        return self._bump_w @ dphi


class ExternalOracle(_BaseOracle):
    """Child-process oracle speaking line-delimited JSON over stdio.

    Handshake (child -> parent, first line): {"protocol":1,"d":int,"n_c":int}
    Request  (parent -> child): {"id":int,"z":[[f64,...],...]}
    Response (child -> parent): {"id":int,"c":[[f64,...],...]}
    Shutdown: parent closes stdin, child exits 0.
    """

    def __init__(self, spec):
        super().__init__(spec)
        cmd = spec.params.get("cmd")
        if not cmd:
            raise InvalidArgumentError("external oracle needs a cmd param")
        self._io_lock = threading.Lock()
        self._next_id = 0
        try:
            self._proc = subprocess.Popen(
                shlex.split(cmd), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                text=True, encoding="utf-8", bufsize=1)
        except OSError as exc:
            raise OracleProtocolError(f"failed to start external oracle: {exc}") from exc
        line = self._proc.stdout.readline()
        try:
            hello = json.loads(line)
        except json.JSONDecodeError as exc:
            self.close()
            raise OracleProtocolError(f"bad handshake line {line!r}") from exc
        if hello.get("protocol") != 1:
            self.close()
            raise OracleProtocolError(f"unsupported protocol {hello.get('protocol')!r}")
        if hello.get("d") != spec.d or hello.get("n_c") != spec.n_c:
            self.close()
            raise OracleProtocolError(
                f"oracle advertises d={hello.get('d')} n_c={hello.get('n_c')}, "
                f"spec says d={spec.d} n_c={spec.n_c}")

    def _eval_batch_impl(self, Z):
        with self._io_lock:
            req_id = self._next_id
            self._next_id += 1
            try:
                self._proc.stdin.write(json.dumps({"id": req_id, "z": Z.tolist()}) + "\n")
                self._proc.stdin.flush()
                line = self._proc.stdout.readline()
            except (OSError, ValueError) as exc:
                raise OracleProtocolError(f"external oracle I/O failed: {exc}") from exc
        if not line:
            raise OracleProtocolError("external oracle closed its stdout")
        try:
            resp = json.loads(line)
        except json.JSONDecodeError as exc:
            raise OracleProtocolError(f"malformed response line {line!r}") from exc
        if resp.get("id") != req_id:
            raise OracleProtocolError(f"response id {resp.get('id')} != request id {req_id}")
        rows = resp.get("c")
        if not isinstance(rows, list) or len(rows) != Z.shape[0]:
            raise OracleProtocolError("response batch size mismatch")
        C = np.asarray(rows, dtype=np.float64)
        if C.ndim != 2 or C.shape[1] != self.spec.n_c:
            raise OracleProtocolError(f"response rows have wrong width: {C.shape}")
        return C

    def close(self):
        if getattr(self, "_proc", None) is None:
            return
        try:
            if self._proc.stdin and not self._proc.stdin.closed:
                self._proc.stdin.close()
            self._proc.wait(timeout=5)
        except Exception:
            self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def build_oracle(spec):
    if spec.kind == "external":
        return ExternalOracle(spec)
    return SyntheticOracle(spec)

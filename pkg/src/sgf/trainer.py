"""Dataset construction and reconstruction training for the auxiliary mapping.

Training pairs (z, Phi(z)) are sampled from a forward oracle with z drawn
from the standard Gaussian prior.  The loop is iteration-based sampling
with replacement: refresh spectral-norm sigmas (one power step per FC
layer), take the batch reconstruction gradient, apply Adam.  The last 5%
of the dataset is a held-out split that batches never touch.

Diagnostics recorded per interval: mean batch loss, a probe of the mean
condition-JVP norm (a trained map that ignores its condition input is
useless downstream, so probe collapse is flagged), and the mean power-
iteration estimate of the latent-Jacobian norm.
"""

import json
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .auxmap import ArchConfig, AuxMap
from .errors import CorruptCheckpointError, InvalidArgumentError, TrainingDivergedError
from .numerics import AdamState, RngState, adam_step

log = logging.getLogger("sgf.trainer")

_DATASET_MAGIC = b"SGFD"
_CKPT_MAGIC = b"SGFC"
_VERSION = 1
_DEGENERATE_PROBE = 1e-4


@dataclass
class PairDataset:
    z: np.ndarray
    c: np.ndarray
    oracle_digest: bytes = b"\x00" * 32
    seed: int | None = None
    oracle_desc: str = ""

    def __post_init__(self):
        self.z = np.ascontiguousarray(self.z, dtype=np.float64)
        self.c = np.ascontiguousarray(self.c, dtype=np.float64)
        if self.z.ndim != 2 or self.c.ndim != 2 or self.z.shape[0] != self.c.shape[0]:
            raise InvalidArgumentError(
                f"dataset arrays must be (count, d) and (count, n_c), "
                f"got {self.z.shape} / {self.c.shape}")
        if len(self.oracle_digest) != 32:
            raise InvalidArgumentError("oracle digest must be 32 bytes")

    @property
    def count(self):
        return self.z.shape[0]

    @property
    def d(self):
        return self.z.shape[1]

    @property
    def n_c(self):
        return self.c.shape[1]

    def save(self, path):
        header = _DATASET_MAGIC + struct.pack(
            "<IIIQ", _VERSION, self.d, self.n_c, self.count) + self.oracle_digest
        body = np.hstack([self.z, self.c]).astype("<f8").tobytes()
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(body)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            raw = fh.read()
        head_len = 4 + 4 * 3 + 8 + 32
        if len(raw) < head_len or raw[:4] != _DATASET_MAGIC:
            raise CorruptCheckpointError(f"{path}: not a dataset file")
        version, d, n_c, count = struct.unpack("<IIIQ", raw[4:4 + 20])
        if version != _VERSION:
            raise CorruptCheckpointError(f"{path}: unsupported dataset version {version}")
        digest = raw[24:56]
        body = raw[56:]
        expect = count * (d + n_c) * 8
        if len(body) != expect:
            raise CorruptCheckpointError(
                f"{path}: body has {len(body)} bytes, expected {expect}")
        flat = np.frombuffer(body, dtype="<f8").reshape(count, d + n_c)
        return cls(z=flat[:, :d].copy(), c=flat[:, d:].copy(), oracle_digest=digest)


def build_dataset(oracle, count, rng):
    """count pairs (z, Phi(z)) with z ~ N(0, I); deterministic under the rng seed."""
    if count < 1:
        raise InvalidArgumentError("count must be >= 1")
    d = oracle.spec.d
    Z = rng.normals(int(count) * d).reshape(int(count), d)
    C = oracle.eval_batch(Z)
    return PairDataset(z=Z, c=C, oracle_digest=oracle.spec.digest(),
                       seed=rng.seed, oracle_desc=oracle.spec.canonical())


def mse_loss(f, batch):
    """Mean over the batch of the summed squared reconstruction residual."""
    if isinstance(batch, tuple) and len(batch) == 2:
        Z, C = batch
    else:
        pairs = list(batch)
        if not pairs:
            raise InvalidArgumentError("empty batch")
        Z = np.stack([np.asarray(z, dtype=np.float64) for z, _ in pairs])
        C = np.stack([np.asarray(c, dtype=np.float64) for _, c in pairs])
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    if Z.shape[0] == 0:
        raise InvalidArgumentError("empty batch")
    out = f.forward_batch(Z, C)
    r = out - Z
    return float((r * r).sum() / Z.shape[0])


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 20000
    batch_size: int = 8
    lr: float = 2e-4
    seed: int = 0
    sn_power_steps_per_update: int = 1
    diag_interval: int = 500
    probe_count: int = 8

    def __post_init__(self):
        if min(self.iterations, self.batch_size, self.sn_power_steps_per_update,
               self.diag_interval, self.probe_count) < 1:
            raise InvalidArgumentError("all TrainConfig counts must be >= 1")
        if self.lr <= 0.0:
            raise InvalidArgumentError("lr must be > 0")


@dataclass
class DiagRecord:
    iteration: int
    loss: float
    probe_jvp_c: float
    spectral_radius: float


@dataclass
class TrainReport:
    records: list = field(default_factory=list)
    final_heldout_loss: float = float("nan")
    final_relative_error: float = float("nan")
    final_probe_jvp_c: float = float("nan")
    degenerate: bool = False
    heldout_count: int = 0

    def to_dict(self):
        return {
            "records": [{"iteration": r.iteration, "loss": r.loss,
                         "probe_jvp_c": r.probe_jvp_c,
                         "spectral_radius": r.spectral_radius} for r in self.records],
            "final_heldout_loss": self.final_heldout_loss,
            "final_relative_error": self.final_relative_error,
            "final_probe_jvp_c": self.final_probe_jvp_c,
            "degenerate": self.degenerate,
            "heldout_count": self.heldout_count,
        }


def _probe_stats(f, Zh, Ch, probe_rng, k, sr_iters=30):
    k = min(k, Zh.shape[0])
    norms = []
    radii = []
    for j in range(k):
        u = probe_rng.normals(f.arch.n_c)
        nu = np.linalg.norm(u)
        if nu > 0.0:
            u /= nu
        norms.append(float(np.linalg.norm(f.jvp_c(Zh[j], Ch[j], u))))
        radii.append(f.spectral_radius_z(Zh[j], Ch[j], iters=sr_iters))
    return float(np.mean(norms)), float(np.mean(radii))


def train(dataset, arch, cfg):
    """Reconstruction-train an auxiliary map; returns (map, report).

    Deterministic under (dataset, arch, cfg) for a fixed kernel backend.
    Raises TrainingDivergedError (carrying the partial report) when the
    loss goes non-finite.
    """
    if dataset.d != arch.d or dataset.n_c != arch.n_c:
        raise InvalidArgumentError(
            f"dataset dims ({dataset.d}, {dataset.n_c}) do not match arch "
            f"({arch.d}, {arch.n_c})")
    master = RngState(cfg.seed)
    init_rng = master.spawn()
    batch_rng = master.spawn()
    probe_rng = master.spawn()

    f = AuxMap.init(arch, init_rng)
    n_hold = dataset.count // 20
    n_train = dataset.count - n_hold
    if n_train < 1:
        raise InvalidArgumentError("dataset too small to train on")
    Zt, Ct = dataset.z[:n_train], dataset.c[:n_train]
    if n_hold > 0:
        Zh, Ch = dataset.z[n_train:], dataset.c[n_train:]
    else:
        Zh, Ch = Zt, Ct

    adam = AdamState.init(f.params.size, lr=cfg.lr)
    report = TrainReport(heldout_count=n_hold)
    interval_loss = 0.0
    interval_n = 0
    for it in range(1, cfg.iterations + 1):
        idx = np.array([batch_rng.below(n_train) for _ in range(cfg.batch_size)],
                       dtype=np.int64)
        f.spectral_normalize(cfg.sn_power_steps_per_update)
        loss, grad = f.loss_grad_batch(Zt[idx], Ct[idx])
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            exc = TrainingDivergedError(
                f"loss became non-finite at iteration {it}", last_finite_iteration=it - 1)
            exc.report = report
            raise exc
        f.params[:] = adam_step(adam, f.params, grad)
        interval_loss += loss
        interval_n += 1
        if it == 1 or it % cfg.diag_interval == 0 or it == cfg.iterations:
            probe, radius = _probe_stats(f, Zh, Ch, probe_rng, cfg.probe_count)
            rec = DiagRecord(iteration=it, loss=interval_loss / interval_n,
                             probe_jvp_c=probe, spectral_radius=radius)
            report.records.append(rec)
            log.debug("iter %d: loss %.3e, probe |dF/dc| %.3e, |dF/dz| %.3f",
                      it, rec.loss, probe, radius)
            interval_loss = 0.0
            interval_n = 0

    out = f.forward_batch(Zh, Ch)
    res = out - Zh
    report.final_heldout_loss = float((res * res).sum() / Zh.shape[0])
    znorm = np.linalg.norm(Zh, axis=1)
    znorm[znorm == 0.0] = 1.0
    report.final_relative_error = float((np.linalg.norm(res, axis=1) / znorm).mean())
    report.final_probe_jvp_c, _ = _probe_stats(f, Zh, Ch, probe_rng, cfg.probe_count)
    report.degenerate = report.final_probe_jvp_c < _DEGENERATE_PROBE
    if report.degenerate:
        log.warning("trained map looks degenerate: condition probe %.3e",
                    report.final_probe_jvp_c)
    return f, report


def save_checkpoint(f, meta, path):
    """SGFC file: magic, version, JSON header, then params / sn_u / sn_sigma (f64 LE)."""
    header = {
        "arch": f.arch.to_dict(),
        "tensors": [["params", int(f.params.size)],
                    ["sn_u", int(f.sn_u.size)],
                    ["sn_sigma", int(f.sn_sigma.size)]],
        "meta": dict(meta or {}),
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(blob)))
        fh.write(blob)
        fh.write(f.params.astype("<f8").tobytes())
        fh.write(f.sn_u.astype("<f8").tobytes())
        fh.write(f.sn_sigma.astype("<f8").tobytes())


def load_checkpoint(path):
    """Inverse of save_checkpoint; returns (AuxMap, meta dict)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 12 or raw[:4] != _CKPT_MAGIC:
        raise CorruptCheckpointError(f"{path}: not a checkpoint file")
    version, json_len = struct.unpack("<II", raw[4:12])
    if version != _VERSION:
        raise CorruptCheckpointError(f"{path}: unsupported checkpoint version {version}")
    if len(raw) < 12 + json_len:
        raise CorruptCheckpointError(f"{path}: truncated JSON header")
    try:
        header = json.loads(raw[12:12 + json_len].decode("utf-8"))
        arch = ArchConfig(**header["arch"])
        tensors = header["tensors"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptCheckpointError(f"{path}: bad checkpoint header: {exc}") from exc
    body = raw[12 + json_len:]
    sizes = [int(n) for _, n in tensors]
    if len(body) != 8 * sum(sizes):
        raise CorruptCheckpointError(
            f"{path}: tensor payload has {len(body)} bytes, expected {8 * sum(sizes)}")
    arrays = {}
    off = 0
    for (name, n) in tensors:
        arrays[name] = np.frombuffer(body, dtype="<f8", count=int(n), offset=off).copy()
        off += int(n) * 8
    try:
        f = AuxMap(arch, arrays["params"], arrays["sn_u"], arrays["sn_sigma"])
    except (KeyError, InvalidArgumentError) as exc:
        raise CorruptCheckpointError(f"{path}: tensor shapes disagree with arch: {exc}") from exc
    return f, header.get("meta", {})

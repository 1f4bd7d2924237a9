"""Latent navigation along the surrogate gradient field.

The field at a point (z, c) pushes the latent so that the induced condition
change tracks a constant-rate plan from the start condition toward the
target.  With J = dF/dz and P = dF/dc of the auxiliary map,

    field(z, c, delta_c) = (I - J)^{-1} P delta_c

computed either through a truncated Neumann series (sum of repeated
latent-JVP applications, order m) or an exact dense solve.  The outer loop
is forward Euler: each step asks the field for a displacement toward the
remaining condition gap, with the per-step condition delta capped at
step_size * |c1 - c0| so the nominal schedule takes 1/step_size steps.
Re-aiming at the remaining gap (rather than replaying the initial delta
blindly) is what lets truncated-series and imperfect-map runs settle onto
the target instead of marching past it; while a run tracks the schedule
exactly the two are identical.

Standard mode re-estimates the condition from the oracle after every step
(1 + steps oracle calls).  Fast mode never re-estimates: it assumes the
schedule holds, records the extrapolated conditions, and spends exactly one
oracle call (plus an optional final verification call).
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergedNavigationError, InvalidArgumentError, SingularFieldError
from .numerics import as_f64_vector

log = logging.getLogger("sgf.navigator")

_INVERSE_MODES = ("neumann", "exact")
_COND_LIMIT = 1e12


def _linf(v):
    return float(np.max(np.abs(v)))


@dataclass(frozen=True)
class NavConfig:
    step_size: float = 0.2
    neumann_order: int = 1
    max_steps: int = 50
    converge_tol: float = 0.05
    fast: bool = False
    inverse_mode: str = "neumann"
    fast_final_check: bool = False
    divergence_norm: float = 1e6

    def __post_init__(self):
        if self.step_size <= 0.0:
            raise InvalidArgumentError("step_size must be > 0")
        if self.neumann_order < 0:
            raise InvalidArgumentError("neumann_order must be >= 0")
        if self.max_steps < 1:
            raise InvalidArgumentError("max_steps must be >= 1")
        if self.converge_tol <= 0.0:
            raise InvalidArgumentError("converge_tol must be > 0")
        if self.inverse_mode not in _INVERSE_MODES:
            raise InvalidArgumentError(
                f"inverse_mode must be one of {_INVERSE_MODES}")

    def to_dict(self):
        return {"step_size": self.step_size, "neumann_order": self.neumann_order,
                "max_steps": self.max_steps, "converge_tol": self.converge_tol,
                "fast": self.fast, "inverse_mode": self.inverse_mode,
                "fast_final_check": self.fast_final_check,
                "divergence_norm": self.divergence_norm}


@dataclass
class NavStep:
    i: int
    z: np.ndarray
    c: np.ndarray
    dz: np.ndarray
    dist: float


@dataclass
class NavTrace:
    config: NavConfig
    c0: np.ndarray
    c1: np.ndarray
    steps: list = field(default_factory=list)
    converged: bool = False
    oracle_calls: int = 0
    final_c: np.ndarray | None = None

    @property
    def executed_steps(self):
        return len(self.steps) - 1

    @property
    def z_final(self):
        return self.steps[-1].z

    def to_dict(self):
        doc = {
            "config": self.config.to_dict(),
            "c0": self.c0.tolist(),
            "c1": self.c1.tolist(),
            "converged": self.converged,
            "oracle_calls": self.oracle_calls,
            "steps": [{"i": s.i, "z": s.z.tolist(), "c": s.c.tolist(),
                       "dz": s.dz.tolist(), "dist": s.dist} for s in self.steps],
        }
        if self.final_c is not None:
            doc["final_c"] = self.final_c.tolist()
        return doc

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc):
        cfg = NavConfig(**doc["config"])
        trace = cls(config=cfg,
                    c0=np.asarray(doc["c0"], dtype=np.float64),
                    c1=np.asarray(doc["c1"], dtype=np.float64),
                    converged=bool(doc["converged"]),
                    oracle_calls=int(doc["oracle_calls"]))
        for s in doc["steps"]:
            trace.steps.append(NavStep(
                i=int(s["i"]), z=np.asarray(s["z"], dtype=np.float64),
                c=np.asarray(s["c"], dtype=np.float64),
                dz=np.asarray(s["dz"], dtype=np.float64), dist=float(s["dist"])))
        if "final_c" in doc:
            trace.final_c = np.asarray(doc["final_c"], dtype=np.float64)
        return trace

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def neumann_apply(jvp_fn, v, m):
    """Truncated Neumann series: sum_{j=0..m} X^j v via m JVP applications."""
    if m < 0:
        raise InvalidArgumentError("m must be >= 0")
    v = as_f64_vector(v, "v")
    acc = v.copy()
    cur = v
    for _ in range(int(m)):
        cur = np.asarray(jvp_fn(cur), dtype=np.float64)
        acc += cur
    return acc


def surrogate_field(f, z, c, target_delta, cfg):
    """Latent displacement whose induced condition change approximates target_delta."""
    v0 = np.asarray(f.jvp_c(z, c, target_delta), dtype=np.float64)
    if cfg.inverse_mode == "exact":
        J = np.asarray(f.jacobian_z(z, c), dtype=np.float64)
        A = np.eye(J.shape[0]) - J
        if np.linalg.cond(A) > _COND_LIMIT:
            raise SingularFieldError(
                "I - dF/dz is numerically singular; the map is not contractive here")
        return np.linalg.solve(A, v0)
    return neumann_apply(lambda w: f.jvp_z(z, c, w), v0, cfg.neumann_order)


def navigate(f, oracle, z0, c1, cfg=None):
    """Steer z0 until the oracle condition is close to c1 (or steps run out).

    Returns the full trace; steps[0] is the initial state.  Raises
    DivergedNavigationError (with the partial trace attached) if the latent
    explodes or the field goes non-finite.
    """
    cfg = cfg or NavConfig()
    z = as_f64_vector(z0, "z0").copy()
    c1 = as_f64_vector(c1, "c1")
    c0 = np.asarray(oracle.eval(z), dtype=np.float64)
    if c1.shape != c0.shape:
        raise InvalidArgumentError(
            f"target condition has length {c1.shape[0]}, oracle yields {c0.shape[0]}")
    calls = 1
    trace = NavTrace(config=cfg, c0=c0, c1=c1, oracle_calls=calls)
    dist0 = _linf(c0 - c1)
    trace.steps.append(NavStep(0, z.copy(), c0.copy(), np.zeros_like(z), dist0))
    if dist0 <= cfg.converge_tol:
        trace.converged = True
        return trace

    lam = cfg.step_size
    gap0 = c1 - c0
    cap = lam * _linf(gap0)
    c = c0
    for i in range(1, cfg.max_steps + 1):
        gap = c1 - c
        gnorm = _linf(gap)
        if gnorm <= cap:
            delta_c = gap
        else:
            delta_c = gap * (cap / gnorm)
        dz = surrogate_field(f, z, c, delta_c, cfg)
        if not np.all(np.isfinite(dz)):
            trace.oracle_calls = calls
            raise DivergedNavigationError(
                f"non-finite field at step {i}", trace=trace)
        z = z + dz
        if not np.all(np.isfinite(z)) or np.linalg.norm(z) > cfg.divergence_norm:
            trace.oracle_calls = calls
            raise DivergedNavigationError(
                f"latent exploded at step {i}", trace=trace)
        if cfg.fast:
            c = c0 + min(i * lam, 1.0) * gap0
        else:
            c = np.asarray(oracle.eval(z), dtype=np.float64)
            calls += 1
        dist = _linf(c - c1)
        trace.steps.append(NavStep(i, z.copy(), c.copy(), dz, dist))
        if dist <= cfg.converge_tol:
            trace.converged = True
            break
    if cfg.fast and cfg.fast_final_check:
        trace.final_c = np.asarray(oracle.eval(z), dtype=np.float64)
        calls += 1
    trace.oracle_calls = calls
    log.debug("navigate: converged=%s steps=%d calls=%d dist=%.3g",
              trace.converged, trace.executed_steps, calls, trace.steps[-1].dist)
    return trace


def count_oracle_calls(trace):
    return trace.oracle_calls

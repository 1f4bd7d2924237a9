"""Comparison methods: direct latent-code optimization and linear-path analysis.

Latent-code optimization back-propagates the condition error straight into
the latent vector, which needs an analytic oracle Jacobian and can stall in
local optima of nonconvex worlds; it is the baseline the field-following
navigator is measured against.  The linear-path helpers quantify how close
a navigated trajectory stays to the straight chord between its endpoints
and let a found direction be replayed on other latents.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, UndefinedDeviationError
from .numerics import AdamState, adam_step, as_f64_vector


@dataclass
class OptRecord:
    iteration: int
    z: np.ndarray
    loss: float


@dataclass
class OptTrace:
    records: list = field(default_factory=list)
    final_z: np.ndarray | None = None
    final_loss: float = float("inf")
    converged: bool = False
    iterations_run: int = 0

    def to_dict(self):
        return {
            "records": [{"iteration": r.iteration, "z": r.z.tolist(), "loss": r.loss}
                        for r in self.records],
            "final_z": self.final_z.tolist(),
            "final_loss": self.final_loss,
            "converged": self.converged,
            "iterations_run": self.iterations_run,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)


def latent_opt(oracle, z0, c1, lr=2e-4, iters=10000, tol=1e-6, record_every=1):
    """Adam on ||Phi(z) - c1||^2 with the oracle's analytic Jacobian.

    Raises UnsupportedOperationError (from the oracle) for kinds that cannot
    be back-propagated, i.e. external process oracles.
    """
    if iters < 0:
        raise InvalidArgumentError("iters must be >= 0")
    z = as_f64_vector(z0, "z0").copy()
    c1 = as_f64_vector(c1, "c1")
    oracle.eval_grad(z)  # fail fast on oracles without gradients

    trace = OptTrace()
    state = AdamState.init(z.size, lr=lr)
    for it in range(iters + 1):
        r = np.asarray(oracle.eval(z), dtype=np.float64) - c1
        loss = float(r @ r)
        if it % record_every == 0 or it == iters:
            trace.records.append(OptRecord(it, z.copy(), loss))
        trace.iterations_run = it
        if loss <= tol:
            trace.converged = True
            break
        if it == iters:
            break
        grad = 2.0 * (oracle.eval_grad(z).T @ r)
        z = adam_step(state, z, grad)
    if trace.records[-1].iteration != trace.iterations_run:
        trace.records.append(OptRecord(trace.iterations_run, z.copy(), loss))
    trace.final_z = z
    trace.final_loss = loss
    return trace


def linear_path(z0, z1, t):
    """(1 - t) z0 + t z1 for t in [0, 1]."""
    if not (0.0 <= t <= 1.0):
        raise InvalidArgumentError(f"t must lie in [0, 1], got {t}")
    z0 = as_f64_vector(z0, "z0")
    z1 = as_f64_vector(z1, "z1")
    if z0.shape != z1.shape:
        raise InvalidArgumentError("endpoint dims differ")
    return (1.0 - t) * z0 + t * z1


def transfer_direction(z_other, z0, z1, scale):
    """Replay the found direction (z1 - z0), scaled, from another start point."""
    z_other = as_f64_vector(z_other, "z_other")
    z0 = as_f64_vector(z0, "z0")
    z1 = as_f64_vector(z1, "z1")
    if not (z_other.shape == z0.shape == z1.shape):
        raise InvalidArgumentError("transfer_direction dims differ")
    return z_other + scale * (z1 - z0)


def path_deviation(trace):
    """Max distance of trace points from the start-to-end chord, over chord length.

    Zero for a perfectly straight trajectory; undefined (error) when the
    endpoints coincide.
    """
    pts = [s.z for s in trace.steps]
    if len(pts) < 2:
        raise InvalidArgumentError("need at least 2 trace entries")
    start, end = pts[0], pts[-1]
    chord = end - start
    length = np.linalg.norm(chord)
    if length == 0.0:
        raise UndefinedDeviationError("trace endpoints coincide")
    u = chord / length
    worst = 0.0
    for p in pts:
        r = p - start
        perp = r - (r @ u) * u
        worst = max(worst, float(np.linalg.norm(perp)))
    return worst / length

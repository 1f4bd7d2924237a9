"""Sweep harness: navigate seeded samples at growing strength, score the curve.

Strength here is the navigation step budget (max_steps); the step size
stays fixed across a sweep.  Every sample gets a single-attribute target:
the requested binary side is inverted for samples already sitting on it,
then mapped to a concrete score (target_value for side 1, 1 - target_value
for side 0) while all other attributes are pinned at their start values.
Navigation errors count the sample as a failure and the sweep continues.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergedNavigationError, InvalidArgumentError, SingularFieldError
from .metrics import (MdcCurve, MdcPoint, SampleOutcome, accuracy, disentanglement,
                      invert_target, mds_accumulated, select_best_strength)
from .navigator import NavConfig, navigate
from .numerics import RngState


@dataclass(frozen=True)
class EvalConfig:
    samples: int = 100
    strengths: tuple = (5, 10, 15, 20, 25, 30)
    step_size: float = 0.2
    neumann_order: int = 1
    converge_tol: float = 0.05
    inverse_mode: str = "neumann"
    seed: int = 0
    target_attr: int | None = None
    target_value: float = 0.95
    jobs: int = 1

    def __post_init__(self):
        if self.samples < 1:
            raise InvalidArgumentError("samples must be >= 1")
        if not self.strengths:
            raise InvalidArgumentError("empty strength sweep")
        if self.jobs < 1:
            raise InvalidArgumentError("jobs must be >= 1")

    def to_dict(self):
        return {"samples": self.samples, "strengths": list(self.strengths),
                "step_size": self.step_size, "neumann_order": self.neumann_order,
                "converge_tol": self.converge_tol, "inverse_mode": self.inverse_mode,
                "seed": self.seed, "target_attr": self.target_attr,
                "target_value": self.target_value, "jobs": self.jobs}


def make_target(c0, attr, target_value, requested=1.0):
    """Single-attribute target: flip the side if already matched, pin the rest."""
    side = invert_target(c0[attr], requested)
    c1 = np.asarray(c0, dtype=np.float64).copy()
    c1[attr] = target_value if side == 1.0 else 1.0 - target_value
    return c1


def prepare_samples(oracle, n_samples, seed, target_attr=None, target_value=0.95):
    """Seeded (z0, c0, attr, c1) tuples; attrs round-robin unless fixed."""
    rng = RngState(seed)
    d, n_c = oracle.spec.d, oracle.spec.n_c
    Z0 = rng.normals(n_samples * d).reshape(n_samples, d)
    C0 = oracle.eval_batch(Z0)
    out = []
    for j in range(n_samples):
        attr = target_attr if target_attr is not None else j % n_c
        out.append((Z0[j], C0[j], attr, make_target(C0[j], attr, target_value)))
    return out


def _navigate_checked(f, oracle, z0, c1, cfg):
    try:
        return navigate(f, oracle, z0, c1, cfg)
    except (DivergedNavigationError, SingularFieldError):
        return None


def run_battery(f, oracle, samples, nav_cfg, jobs=1):
    """Navigate each prepared sample once; returns traces (None where a run failed)."""
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(
                lambda s: _navigate_checked(f, oracle, s[0], s[3], nav_cfg), samples))
    return [_navigate_checked(f, oracle, s[0], s[3], nav_cfg) for s in samples]


@dataclass
class StrengthStats:
    strength: float
    accuracy: float
    disentanglement: float
    converged: int
    errors: int


@dataclass
class EvalResult:
    curve: MdcCurve
    accumulated: np.ndarray
    mds: float
    best_index: int
    per_strength: list = field(default_factory=list)
    errors_total: int = 0

    def to_dict(self):
        return {
            "mds": self.mds,
            "best_index": self.best_index,
            "best_strength": self.curve.points[self.best_index].strength,
            "accumulated": [float(x) for x in self.accumulated],
            "errors_total": self.errors_total,
            "per_strength": [{"strength": s.strength, "accuracy": s.accuracy,
                              "disentanglement": s.disentanglement,
                              "converged": s.converged, "errors": s.errors}
                             for s in self.per_strength],
        }


def run_mdc_evaluation(f, oracle, cfg):
    """Full sweep -> curve, accumulated areas, score, best strength."""
    n_c = oracle.spec.n_c
    samples = prepare_samples(oracle, cfg.samples, cfg.seed,
                              cfg.target_attr, cfg.target_value)
    points = []
    stats = []
    errors_total = 0
    for n in cfg.strengths:
        nav_cfg = NavConfig(step_size=cfg.step_size, neumann_order=cfg.neumann_order,
                            max_steps=int(n), converge_tol=cfg.converge_tol,
                            inverse_mode=cfg.inverse_mode)
        traces = run_battery(f, oracle, samples, nav_cfg, cfg.jobs)
        outcomes = []
        converged = 0
        errors = 0
        for (z0, c0, attr, c1), trace in zip(samples, traces):
            if trace is None:
                errors += 1
                after = c0  # failed run: nothing moved
            else:
                after = trace.steps[-1].c
                converged += int(trace.converged)
            outcomes.append(SampleOutcome(attr, tuple(c0), tuple(after)))
        acc = accuracy(outcomes)
        dis = disentanglement(outcomes, n_c) if n_c >= 2 else 1.0
        points.append(MdcPoint(float(n), acc, dis))
        stats.append(StrengthStats(float(n), acc, dis, converged, errors))
        errors_total += errors
    curve = MdcCurve(tuple(points))
    accumulated = mds_accumulated(curve)
    return EvalResult(curve=curve, accumulated=accumulated, mds=float(accumulated.max()),
                      best_index=select_best_strength(curve), per_strength=stats,
                      errors_total=errors_total)

"""Manipulation accuracy, disentanglement, and the strength-agnostic score.

A manipulation is scored per sample against the full attribute vector
before and after: the target attribute must move by more than 0.5 toward
its target side to count as a success, and every non-target attribute that
moves by more than 0.5 costs disentanglement.  Sweeping the manipulation
strength traces (accuracy, disentanglement) points; the curve implicitly
starts at (0, 1).  The headline score is the maximum prefix of the signed
trapezoid area accumulated along that curve (accuracy may regress at high
strength, so later points can shrink the area), and the best single
operating strength is the point with the highest harmonic mean of accuracy
and disentanglement.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

CHANGE_THRESHOLD = 0.5


@dataclass(frozen=True)
class SampleOutcome:
    target_attr: int
    scores_before: tuple
    scores_after: tuple

    def __post_init__(self):
        before = tuple(float(x) for x in self.scores_before)
        after = tuple(float(x) for x in self.scores_after)
        object.__setattr__(self, "scores_before", before)
        object.__setattr__(self, "scores_after", after)
        if len(before) != len(after):
            raise InvalidArgumentError("before/after score lengths differ")
        if not (0 <= self.target_attr < len(before)):
            raise InvalidArgumentError("target_attr out of range")


def attribute_changed(before, after):
    """Strictly-more-than-0.5 absolute score change."""
    return abs(after - before) > CHANGE_THRESHOLD


def _target_sign(before):
    # Under the inversion protocol the evaluation target always sits on the
    # far side of 0.5 from the initial score.
    return 1.0 if before <= 0.5 else -1.0


def accuracy(outcomes):
    """Fraction of samples whose target attribute moved > 0.5 toward its target."""
    outcomes = list(outcomes)
    if not outcomes:
        raise InvalidArgumentError("no outcomes")
    wins = 0
    for o in outcomes:
        before = o.scores_before[o.target_attr]
        after = o.scores_after[o.target_attr]
        if (after - before) * _target_sign(before) > CHANGE_THRESHOLD:
            wins += 1
    return wins / len(outcomes)


def disentanglement(outcomes, m):
    """1 - (changed non-target attributes / (m - 1)), averaged over samples."""
    outcomes = list(outcomes)
    if m < 2:
        raise InvalidArgumentError("m must be >= 2")
    if not outcomes:
        raise InvalidArgumentError("no outcomes")
    total = 0.0
    for o in outcomes:
        n_changed = sum(
            1 for k in range(len(o.scores_before))
            if k != o.target_attr and attribute_changed(o.scores_before[k], o.scores_after[k]))
        total += 1.0 - n_changed / (m - 1)
    return total / len(outcomes)


def invert_target(initial_score, requested_target):
    """Flip a binary-style target when the sample already sits on its side of 0.5.

    Returns the effective target side (0.0 or 1.0).  A score exactly at 0.5
    is on neither side, so the requested target stands.
    """
    side_one = requested_target > 0.5
    if side_one and initial_score > 0.5:
        return 0.0
    if not side_one and initial_score < 0.5:
        return 1.0
    return 1.0 if side_one else 0.0


@dataclass(frozen=True)
class MdcPoint:
    strength: float
    accuracy: float
    disentanglement: float

    def __post_init__(self):
        if not (0.0 <= self.accuracy <= 1.0 and 0.0 <= self.disentanglement <= 1.0):
            raise InvalidArgumentError("accuracy/disentanglement must lie in [0, 1]")


@dataclass(frozen=True)
class MdcCurve:
    points: tuple

    def __post_init__(self):
        pts = tuple(self.points)
        object.__setattr__(self, "points", pts)
        strengths = [p.strength for p in pts]
        if any(b <= a for a, b in zip(strengths, strengths[1:])):
            raise InvalidArgumentError("strengths must be strictly increasing")

    def __len__(self):
        return len(self.points)


def mds_accumulated(curve):
    """Signed trapezoid area after each point, starting from the implicit (0, 1)."""
    if not len(curve):
        raise InvalidArgumentError("empty curve")
    acc_prev, dis_prev = 0.0, 1.0
    area = 0.0
    out = []
    for p in curve.points:
        area += (p.accuracy - acc_prev) * (p.disentanglement + dis_prev) / 2.0
        out.append(area)
        acc_prev, dis_prev = p.accuracy, p.disentanglement
    return np.asarray(out)


def mds(curve):
    """Final score: the maximum accumulated area over all curve prefixes."""
    return float(mds_accumulated(curve).max())


def harmonic_mean(a, b):
    if a < 0.0 or b < 0.0:
        raise InvalidArgumentError("harmonic_mean needs non-negative inputs")
    if a + b == 0.0:
        return 0.0
    return 2.0 * a * b / (a + b)


def select_best_strength(curve):
    """Index of the point with the highest accuracy/disentanglement harmonic mean.

    Ties go to the lower strength.
    """
    if not len(curve):
        raise InvalidArgumentError("empty curve")
    best, best_hm = 0, -1.0
    for i, p in enumerate(curve.points):
        hm = harmonic_mean(p.accuracy, p.disentanglement)
        if hm > best_hm:
            best, best_hm = i, hm
    return best


CSV_HEADER = ["strength", "accuracy", "disentanglement"]


def write_mdc_csv(path, curve):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for p in curve.points:
            w.writerow([repr(p.strength), repr(p.accuracy), repr(p.disentanglement)])


def read_mdc_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != CSV_HEADER:
        raise InvalidArgumentError(f"{path}: expected header {','.join(CSV_HEADER)}")
    pts = []
    for row in rows[1:]:
        if not row:
            continue
        if len(row) != 3:
            raise InvalidArgumentError(f"{path}: bad row {row!r}")
        try:
            pts.append(MdcPoint(float(row[0]), float(row[1]), float(row[2])))
        except ValueError as exc:
            raise InvalidArgumentError(f"{path}: bad row {row!r}") from exc
    return MdcCurve(tuple(pts))

"""Prediction-to-target matching and the trajectory losses.

Predictions outnumber targets (``n >= m``). The ``n x m`` cost matrix is
widened to ``n x n`` by cycling the target columns, solved exactly with the
Hungarian algorithm, and each prediction's target is recovered as its
column index modulo ``m``. The assignment comes from the first refinement
step and is reused for every later step.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .codec import ConfluentTrajectorySet, TrajectoryTargets
from .kernels import hungarian_kernel

__all__ = [
    "MatchWeights",
    "LossWeights",
    "PredictionSequence",
    "Assignment",
    "LossBreakdown",
    "cost_matrix",
    "replicate_targets",
    "hungarian",
    "assignment_cost",
    "assign",
    "loss_pos_rad",
    "loss_end",
    "loss_div",
    "total_loss",
    "compute_losses",
]


@dataclass(frozen=True)
class MatchWeights:
    lambda_pos: float = 3.0
    lambda_rad: float = 1.0

    def __post_init__(self):
        if self.lambda_pos < 0 or self.lambda_rad < 0:
            raise ValueError("match weights must be nonnegative")


@dataclass(frozen=True)
class LossWeights:
    alpha_pos: float = 4.2
    alpha_rad: float = 1.15
    alpha_end: float = 0.94
    alpha_div: float = 0.3

    def __post_init__(self):
        if min(self.alpha_pos, self.alpha_rad, self.alpha_end, self.alpha_div) < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass
class PredictionSequence:
    """Per-step predictions; end and divergence are read from the last step only."""

    steps: list[ConfluentTrajectorySet]

    def __post_init__(self):
        if not self.steps:
            raise ValueError("a prediction sequence needs at least one step")
        n, L = self.steps[0].n, self.steps[0].L
        for s in self.steps[1:]:
            if s.n != n or s.L != L:
                raise ValueError("all steps must share n and L")

    @property
    def S(self) -> int:
        return len(self.steps)

    @property
    def first(self) -> ConfluentTrajectorySet:
        return self.steps[0]

    @property
    def last(self) -> ConfluentTrajectorySet:
        return self.steps[-1]


@dataclass(frozen=True)
class Assignment:
    sigma: np.ndarray  # sigma[i]: replicated column given to prediction i
    j_hat: np.ndarray  # j_hat[i] = sigma[i] mod m
    m: int

    def counts(self) -> np.ndarray:
        return np.bincount(self.j_hat, minlength=self.m)


def cost_matrix(pred: ConfluentTrajectorySet, targets: ConfluentTrajectorySet,
                w: MatchWeights = MatchWeights()) -> np.ndarray:
    """``lambda_pos * mean_l ||x_hat - x||_1 + lambda_rad * mean_l |r_hat - r|`` for every pair."""
    if pred.L != targets.L:
        raise ValueError(f"trajectory lengths differ: {pred.L} vs {targets.L}")
    dpos = np.abs(pred.positions[:, None] - targets.positions[None]).sum(axis=-1).mean(axis=-1)
    drad = np.abs(pred.radii[:, None] - targets.radii[None]).mean(axis=-1)
    return w.lambda_pos * dpos + w.lambda_rad * drad


def replicate_targets(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cycle target columns until the matrix is square; return it with the column->target map."""
    cost = np.asarray(cost, dtype=float)
    n, m = cost.shape
    if m < 1:
        raise ValueError("need at least one target")
    if n < m:
        raise ValueError(f"more targets ({m}) than proposals ({n})")
    col_target = np.arange(n) % m
    return cost[:, col_target], col_target


def hungarian(cost: np.ndarray) -> np.ndarray:
    """Optimal assignment of a square cost matrix.

    Returns ``sigma`` with ``sigma[i]`` the column given to row ``i``; the
    total ``sum_i cost[i, sigma[i]]`` is minimal over all permutations.
    """
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError(f"cost matrix must be square, got {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix has non-finite entries")
    if c.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return hungarian_kernel(np.ascontiguousarray(c))


def assignment_cost(cost: np.ndarray, sigma: np.ndarray) -> float:
    return float(np.asarray(cost)[np.arange(len(sigma)), sigma].sum())


def assign(pred: ConfluentTrajectorySet, targets: ConfluentTrajectorySet,
           w: MatchWeights = MatchWeights()) -> Assignment:
    cost = cost_matrix(pred, targets, w)
    square, _ = replicate_targets(cost)
    sigma = hungarian(square)
    m = targets.n
    return Assignment(sigma=sigma, j_hat=sigma % m, m=m)


def _check(a: Assignment, n: int) -> None:
    if len(a.j_hat) != n:
        raise ValueError(f"assignment covers {len(a.j_hat)} predictions, expected {n}")


def loss_pos_rad(pred: PredictionSequence, targets: ConfluentTrajectorySet,
                 a: Assignment) -> tuple[list[float], list[float]]:
    """Per-step mean L1 position error and mean absolute radius error."""
    _check(a, pred.first.n)
    tpos = targets.positions[a.j_hat]
    trad = targets.radii[a.j_hat]
    lpos, lrad = [], []
    for step in pred.steps:
        lpos.append(float(np.abs(step.positions - tpos).sum(axis=-1).mean()))
        lrad.append(float(np.abs(step.radii - trad).mean()))
    return lpos, lrad


def loss_end(end_pos: np.ndarray, targets: ConfluentTrajectorySet, a: Assignment) -> float:
    end_pos = np.asarray(end_pos, dtype=float)
    _check(a, len(end_pos))
    return float(np.abs(end_pos - targets.end_pos[a.j_hat]).mean())


def loss_div(divergence: np.ndarray, targets: ConfluentTrajectorySet, a: Assignment) -> float:
    """Mean absolute error against the target divergence matrix reordered by the assignment.

    Two predictions sent to the same target are compared with that target's
    end position (the diagonal of the target matrix).
    """
    d_hat = np.asarray(divergence, dtype=float)
    n = d_hat.shape[0]
    _check(a, n)
    if n < 2:
        return 0.0
    d_tgt = np.array(targets.divergence, dtype=float)
    d_tgt[np.diag_indices_from(d_tgt)] = targets.end_pos
    reordered = d_tgt[np.ix_(a.j_hat, a.j_hat)]
    off = ~np.eye(n, dtype=bool)
    return float(np.abs(d_hat - reordered)[off].sum() / (n * (n - 1)))


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    pos: tuple[float, ...]
    rad: tuple[float, ...]
    end: float
    div: float
    assignment: Assignment

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "pos": list(self.pos),
            "rad": list(self.rad),
            "end": self.end,
            "div": self.div,
            "j_hat": self.assignment.j_hat.tolist(),
        }


def total_loss(pred: PredictionSequence, targets: ConfluentTrajectorySet, a: Assignment,
               lw: LossWeights = LossWeights()) -> float:
    return _breakdown(pred, targets, a, lw).total


def _breakdown(pred, targets, a, lw) -> LossBreakdown:
    lpos, lrad = loss_pos_rad(pred, targets, a)
    le = loss_end(pred.last.end_pos, targets, a)
    ld = loss_div(pred.last.divergence, targets, a)
    total = sum(lw.alpha_pos * p + lw.alpha_rad * r for p, r in zip(lpos, lrad))
    total += lw.alpha_end * le + lw.alpha_div * ld
    return LossBreakdown(float(total), tuple(lpos), tuple(lrad), le, ld, a)


def compute_losses(pred: PredictionSequence | Sequence[ConfluentTrajectorySet], targets: TrajectoryTargets,
                   mw: MatchWeights = MatchWeights(), lw: LossWeights = LossWeights()) -> LossBreakdown:
    """Match once on the first step, then evaluate every loss term with that assignment."""
    if not isinstance(pred, PredictionSequence):
        pred = PredictionSequence(list(pred))
    a = assign(pred.first, targets, mw)
    return _breakdown(pred, targets, a, lw)

"""Radius-aware point- and branch-level precision/recall.

A predicted node matches a ground-truth node when it lies within
``max(1.5, tau_rad * r_gt)`` voxels. Node scores are averaged over
``tau_rad`` in 0.25..0.75 (step 0.05); branch scores fix ``tau_rad = 0.5`` and
average over the required overlap fraction ``tau_match`` in 0.5..0.9.
All reported scores are percentages.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .graph import CenterlineTree, branch_decomposition
from .kernels import greedy_accept

__all__ = [
    "MIN_THRESHOLD",
    "TAU_RAD_SWEEP",
    "TAU_MATCH_SWEEP",
    "BRANCH_TAU_RAD",
    "MAE_TAU_RAD",
    "match_threshold",
    "PointMatch",
    "match_points",
    "point_metrics",
    "branch_metrics",
    "branch_overlaps",
    "MetricsReport",
    "evaluate",
    "aggregate_reports",
]

MIN_THRESHOLD = 1.5
TAU_RAD_SWEEP = tuple(round(0.25 + 0.05 * k, 2) for k in range(11))
TAU_MATCH_SWEEP = tuple(round(0.5 + 0.05 * k, 2) for k in range(9))
BRANCH_TAU_RAD = 0.5
MAE_TAU_RAD = 0.5
_EPS = 1e-12


def match_threshold(r, tau_rad):
    """``max(1.5, tau_rad * r)`` in voxels (broadcasts over arrays)."""
    out = np.maximum(MIN_THRESHOLD, np.asarray(tau_rad, dtype=float) * np.asarray(r, dtype=float))
    return float(out) if out.ndim == 0 else out


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


# ---------------------------------------------------------------------------
# node matching
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class PointMatch:
    pred: np.ndarray  # row indices into the prediction arrays
    gt: np.ndarray  # row indices into the ground-truth arrays
    dist: np.ndarray


class _Candidates:
    """All (pred, gt) pairs within the widest threshold, in greedy priority order."""

    def __init__(self, pred_pos, pred_ids, gt_pos, gt_ids, gt_radii, tau_max):
        self.n_pred = len(pred_pos)
        self.n_gt = len(gt_pos)
        self.gt_radii = np.asarray(gt_radii, dtype=float)
        if self.n_pred == 0 or self.n_gt == 0:
            self.pi = self.gi = np.zeros(0, dtype=np.int64)
            self.d = np.zeros(0)
            return
        thr = match_threshold(self.gt_radii, tau_max)
        hits = cKDTree(pred_pos).query_ball_point(gt_pos, thr + 1e-9)
        counts = np.fromiter((len(h) for h in hits), dtype=np.int64, count=len(hits))
        gi = np.repeat(np.arange(self.n_gt), counts)
        pi = np.fromiter((j for h in hits for j in h), dtype=np.int64, count=int(counts.sum()))
        d = np.linalg.norm(pred_pos[pi] - gt_pos[gi], axis=1)
        keep = d <= thr[gi]
        gi, pi, d = gi[keep], pi[keep], d[keep]
        order = np.lexsort((np.asarray(pred_ids)[pi], np.asarray(gt_ids)[gi], d))
        self.pi, self.gi, self.d = pi[order], gi[order], d[order]

    def match(self, tau_rad: float) -> PointMatch:
        ok = self.d <= match_threshold(self.gt_radii[self.gi], tau_rad)
        pi, gi, d = self.pi[ok], self.gi[ok], self.d[ok]
        acc = greedy_accept(pi, gi, self.n_pred, self.n_gt)
        return PointMatch(pi[acc], gi[acc], d[acc])


def _arrays(tree: CenterlineTree):
    return tree.positions, tree.ids, tree.radii


def match_points(pred: CenterlineTree, gt: CenterlineTree, tau_rad: float) -> PointMatch:
    """One-to-one node pairing, greedy by ascending distance.

    Ties go to the lower ground-truth node id, then the lower predicted id.
    Indices in the result refer to ``pred.ids`` / ``gt.ids``.
    """
    pp, pids, _ = _arrays(pred)
    gp, gids, gr = _arrays(gt)
    return _Candidates(pp, pids, gp, gids, gr, tau_rad).match(tau_rad)


def point_metrics(pred: CenterlineTree, gt: CenterlineTree, sweep=TAU_RAD_SWEEP) -> dict:
    """rAP, rAR, rF1 (percent) over the ``tau_rad`` sweep plus radius MAE at 0.5."""
    if len(gt) == 0:
        raise ValueError("ground truth has no nodes: recall undefined")
    pp, pids, pr = _arrays(pred)
    gp, gids, gr = _arrays(gt)
    cand = _Candidates(pp, pids, gp, gids, gr, max(max(sweep), MAE_TAU_RAD))
    rows = []
    for tau in sweep:
        m = cand.match(tau)
        tp = len(m.pred)
        p = tp / len(pred) if len(pred) else 0.0
        r = tp / len(gt)
        rows.append({"tau_rad": tau, "tp": tp, "precision": 100 * p, "recall": 100 * r, "f1": 100 * _f1(p, r)})
    m = cand.match(MAE_TAU_RAD)
    mae = float(np.mean(np.abs(pr[m.pred] - gr[m.gt]))) if len(m.pred) else math.nan
    return {
        "rAP": float(np.mean([r["precision"] for r in rows])),
        "rAR": float(np.mean([r["recall"] for r in rows])),
        "rF1": float(np.mean([r["f1"] for r in rows])),
        "radius_mae": mae,
        "per_threshold": rows,
    }


# ---------------------------------------------------------------------------
# branch level
# ---------------------------------------------------------------------------
def branch_overlaps(pred: CenterlineTree, gt: CenterlineTree, tau_rad: float = BRANCH_TAU_RAD):
    """Fraction of each ground-truth branch's nodes covered by each predicted branch.

    Returns ``(pred_branches, gt_branches, pairs)`` where ``pairs`` is a list
    of ``(overlap, gt_branch, pred_branch)`` with nonzero overlap.
    """
    pb = branch_decomposition(pred)
    gb = branch_decomposition(gt)
    p_label = np.empty(len(pred), dtype=np.int64)
    for k, b in enumerate(pb):
        for nid in b.nodes:
            p_label[pred.index_of[nid]] = k
    g_label = np.empty(len(gt), dtype=np.int64)
    for k, b in enumerate(gb):
        for nid in b.nodes:
            g_label[gt.index_of[nid]] = k

    thr = match_threshold(gt.radii, tau_rad)
    hits = cKDTree(pred.positions).query_ball_point(gt.positions, thr + 1e-9)
    covered: dict[tuple[int, int], int] = {}
    for gi, h in enumerate(hits):
        if not h:
            continue
        h = np.asarray(h, dtype=np.int64)
        d = np.linalg.norm(pred.positions[h] - gt.positions[gi], axis=1)
        for pbk in np.unique(p_label[h[d <= thr[gi]]]):
            key = (int(g_label[gi]), int(pbk))
            covered[key] = covered.get(key, 0) + 1
    pairs = [(cnt / len(gb[g]), g, p) for (g, p), cnt in covered.items()]
    return pb, gb, pairs


def branch_metrics(pred: CenterlineTree, gt: CenterlineTree, sweep=TAU_MATCH_SWEEP) -> dict:
    """rBAP, rBAR, rBF1 (percent) over the ``tau_match`` sweep at ``tau_rad = 0.5``.

    Predicted branches are paired to still-unmatched ground-truth branches in
    order of decreasing overlap (ties: longer ground-truth branch first). A
    pair is a true positive at ``tau_match`` when its overlap reaches it.
    """
    if len(gt) == 0:
        raise ValueError("ground truth has no nodes: recall undefined")
    if len(pred) == 0:
        rows = [{"tau_match": t, "tp": 0, "precision": 0.0, "recall": 0.0, "f1": 0.0} for t in sweep]
        return {"rBAP": 0.0, "rBAR": 0.0, "rBF1": 0.0, "per_threshold": rows}
    pb, gb, pairs = branch_overlaps(pred, gt)
    pairs.sort(key=lambda t: (-t[0], -len(gb[t[1]]), t[1], t[2]))
    ov = np.array([t[0] for t in pairs], dtype=float)
    g = np.array([t[1] for t in pairs], dtype=np.int64)
    p = np.array([t[2] for t in pairs], dtype=np.int64)
    acc = greedy_accept(p, g, len(pb), len(gb)) if len(pairs) else np.zeros(0, dtype=bool)
    accepted = ov[acc]
    rows = []
    for tau in sweep:
        tp = int(np.count_nonzero(accepted >= tau - _EPS))
        prec = tp / len(pb)
        rec = tp / len(gb)
        rows.append({"tau_match": tau, "tp": tp, "precision": 100 * prec, "recall": 100 * rec,
                     "f1": 100 * _f1(prec, rec)})
    return {
        "rBAP": float(np.mean([r["precision"] for r in rows])),
        "rBAR": float(np.mean([r["recall"] for r in rows])),
        "rBF1": float(np.mean([r["f1"] for r in rows])),
        "per_threshold": rows,
    }


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------
SCORE_FIELDS = ("rAP", "rAR", "rF1", "radius_mae", "rBAP", "rBAR", "rBF1")


@dataclass
class MetricsReport:
    rAP: float
    rAR: float
    rF1: float
    radius_mae: float
    rBAP: float
    rBAR: float
    rBF1: float
    point_table: list[dict] = field(default_factory=list)
    branch_table: list[dict] = field(default_factory=list)

    def scores(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in SCORE_FIELDS}

    def to_dict(self) -> dict:
        out = asdict(self)
        if math.isnan(out["radius_mae"]):
            out["radius_mae"] = None
        return out


def evaluate(pred: CenterlineTree, gt: CenterlineTree) -> MetricsReport:
    pm = point_metrics(pred, gt)
    bm = branch_metrics(pred, gt)
    return MetricsReport(
        rAP=pm["rAP"], rAR=pm["rAR"], rF1=pm["rF1"], radius_mae=pm["radius_mae"],
        rBAP=bm["rBAP"], rBAR=bm["rBAR"], rBF1=bm["rBF1"],
        point_table=pm["per_threshold"], branch_table=bm["per_threshold"],
    )


def aggregate_reports(reports: list[MetricsReport]) -> dict[str, dict[str, float]]:
    """Mean and population std of every score across samples (NaN MAEs skipped)."""
    out = {}
    for k in SCORE_FIELDS:
        vals = np.array([getattr(r, k) for r in reports], dtype=float)
        vals = vals[~np.isnan(vals)]
        out[k] = {
            "mean": float(vals.mean()) if len(vals) else None,
            "std": float(vals.std()) if len(vals) else None,
            "n": int(len(vals)),
        }
    return out

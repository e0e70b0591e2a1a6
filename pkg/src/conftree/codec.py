"""Conversion between rooted trees and confluent trajectory sets.

A confluent set is ``n`` fixed-length node sequences leaving a shared origin.
Pairs of trajectories run together up to a *divergence* position and each
trajectory carries an *end* position after which its nodes are padding.
Both positions are stored normalised to [0, 1] and mapped back to node
indices with :func:`discretize`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import CenterlineTree, TreeBuilder
from .kernels import union_find_labels

__all__ = [
    "ConfluentTrajectorySet",
    "TrajectoryTargets",
    "discretize",
    "encode_targets",
    "cluster_by_divergence",
    "merge_cluster",
    "decode_tree",
    "decode_with_levels",
    "trajset_to_dict",
    "trajset_from_dict",
    "read_trajset",
    "write_trajset",
]

ANCHOR_ATOL = 1e-6


@dataclass
class ConfluentTrajectorySet:
    origin: np.ndarray  # (3,)
    positions: np.ndarray  # (n, L, 3)
    radii: np.ndarray  # (n, L)
    end_pos: np.ndarray  # (n,) in [0, 1]
    divergence: np.ndarray  # (n, n) in [0, 1], diagonal ignored

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float).reshape(3)
        self.positions = np.asarray(self.positions, dtype=float)
        self.radii = np.asarray(self.radii, dtype=float)
        self.end_pos = np.asarray(self.end_pos, dtype=float).reshape(-1)
        self.divergence = np.asarray(self.divergence, dtype=float)
        if self.divergence.size == 0:
            self.divergence = self.divergence.reshape(len(self.end_pos), len(self.end_pos))

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def L(self) -> int:
        return self.positions.shape[1]

    def check(self) -> "ConfluentTrajectorySet":
        """Raise ``ValueError`` unless shapes, ranges and anchoring are consistent."""
        n = self.positions.shape[0]
        if self.positions.ndim != 3 or self.positions.shape[2] != 3:
            raise ValueError(f"positions must be (n, L, 3), got {self.positions.shape}")
        L = self.positions.shape[1]
        if self.radii.shape != (n, L):
            raise ValueError(f"radii must be ({n}, {L}), got {self.radii.shape}")
        if self.end_pos.shape != (n,):
            raise ValueError(f"end_pos must have length {n}")
        if self.divergence.shape != (n, n):
            raise ValueError(f"divergence must be ({n}, {n}), got {self.divergence.shape}")
        off = ~np.eye(n, dtype=bool)
        for name, arr in (("positions", self.positions), ("radii", self.radii),
                          ("end_pos", self.end_pos), ("divergence", self.divergence[off])):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite values")
        if np.any(self.radii <= 0):
            raise ValueError("radii must be positive")
        if np.any((self.end_pos < 0) | (self.end_pos > 1)):
            raise ValueError("end_pos must lie in [0, 1]")
        d = self.divergence[off]
        if np.any((d < 0) | (d > 1)):
            raise ValueError("divergence must lie in [0, 1]")
        if n and np.max(np.abs(self.positions[:, 0] - self.origin)) > ANCHOR_ATOL:
            raise ValueError("first node of every trajectory must sit at the origin")
        return self


@dataclass
class TrajectoryTargets(ConfluentTrajectorySet):
    """Ground-truth trajectories with integer end indices.

    ``divergence[j, k]`` is the index of the last node shared by paths ``j``
    and ``k`` divided by ``L - 1``; the diagonal holds each path's own end
    position, which is what two copies of one branch "diverge" at.
    """

    end_index: np.ndarray = field(default=None)  # (m,) int
    node_ids: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        super().__post_init__()
        if self.end_index is None:
            self.end_index = discretize(self.end_pos, self.L)
        self.end_index = np.asarray(self.end_index, dtype=np.int64).reshape(-1)

    @property
    def m(self) -> int:
        return self.n


def discretize(u, L: int):
    """Node index of a normalised position: ``round(u * (L - 1))``, halves away from zero."""
    arr = np.asarray(u, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any((arr < 0) | (arr > 1)):
        raise ValueError(f"normalised position outside [0, 1]: {u!r}")
    idx = np.clip(np.floor(arr * (L - 1) + 0.5), 0, max(L - 1, 0)).astype(np.int64)
    return int(idx) if idx.ndim == 0 else idx


def _downward_paths(tree: CenterlineTree, anchor: int, L: int) -> list[list[int]]:
    paths = []
    stack = [[anchor]]
    while stack:
        path = stack.pop()
        kids = tree.children.get(path[-1], ())
        if len(path) == L or not kids:
            paths.append(path)
        else:
            for c in reversed(kids):
                stack.append(path + [c])
    return paths


def encode_targets(tree: CenterlineTree, anchor: int, L: int) -> TrajectoryTargets:
    """One target per downward path of at most ``L`` nodes from ``anchor``.

    Paths stop at a leaf or after ``L`` nodes. Short paths are padded by
    repeating their last node.
    """
    if L < 2:
        raise ValueError("trajectory length L must be >= 2")
    if anchor not in tree.nodes:
        raise KeyError(f"anchor {anchor} not in tree")
    paths = _downward_paths(tree, anchor, L)
    m = len(paths)
    pos = np.empty((m, L, 3))
    rad = np.empty((m, L))
    end_index = np.empty(m, dtype=np.int64)
    for j, path in enumerate(paths):
        for l in range(L):
            node = tree.nodes[path[min(l, len(path) - 1)]]
            pos[j, l] = node.position
            rad[j, l] = node.radius
        end_index[j] = len(path) - 1
    end_pos = end_index / (L - 1)
    div = np.diag(end_pos.copy())
    for j in range(m):
        for k in range(j + 1, m):
            a, b = paths[j], paths[k]
            shared = 0
            while shared < min(len(a), len(b)) and a[shared] == b[shared]:
                shared += 1
            div[j, k] = div[k, j] = (shared - 1) / (L - 1)
    return TrajectoryTargets(
        origin=tree.position(anchor).copy(),
        positions=pos,
        radii=rad,
        end_pos=end_pos,
        divergence=div,
        end_index=end_index,
        node_ids=tuple(tuple(p) for p in paths),
    )


def cluster_by_divergence(ts: ConfluentTrajectorySet) -> list[list[int]]:
    """Group trajectories that never diverge before one of them ends.

    Groups are the transitive closure of the pairwise relation (on the
    symmetrised divergence matrix), listed by their smallest member.
    """
    n = ts.n
    if n == 0:
        return []
    ends = discretize(ts.end_pos, ts.L)
    div = 0.5 * (ts.divergence + ts.divergence.T)
    div[np.eye(n, dtype=bool)] = 1.0
    didx = discretize(div, ts.L)
    together = didx >= np.minimum.outer(ends, ends)
    ii, kk = np.nonzero(np.triu(together, 1))
    labels = union_find_labels(n, ii.astype(np.int64), kk.astype(np.int64))
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(i)
    return [groups[k] for k in sorted(groups)]


def merge_cluster(members, ts: ConfluentTrajectorySet) -> tuple[np.ndarray, np.ndarray, float]:
    """Element-wise mean of positions, radii and end position over ``members``."""
    idx = np.asarray(list(members), dtype=np.int64)
    if idx.size == 0:
        raise ValueError("cannot merge an empty cluster")
    return ts.positions[idx].mean(axis=0), ts.radii[idx].mean(axis=0), float(ts.end_pos[idx].mean())


def decode_with_levels(ts: ConfluentTrajectorySet) -> tuple[CenterlineTree, dict[int, int]]:
    """Decode a confluent set into a tree; also return each node's level (index along L)."""
    if ts.n == 0:
        raise ValueError("cannot decode an empty trajectory set")
    ts.check()
    L = ts.L
    groups = cluster_by_divergence(ts)
    reps = [merge_cluster(g, ts) for g in groups]
    rep_pos = np.stack([r[0] for r in reps])
    rep_rad = np.stack([r[1] for r in reps])
    rep_end = discretize(np.array([r[2] for r in reps]), L)

    R = len(groups)
    dsym = 0.5 * (ts.divergence + ts.divergence.T)
    rep_div = np.ones((R, R))
    for a in range(R):
        for b in range(a + 1, R):
            rep_div[a, b] = rep_div[b, a] = dsym[np.ix_(groups[a], groups[b])].mean()
    div_idx = np.minimum(discretize(np.clip(rep_div, 0.0, 1.0), L), np.minimum.outer(rep_end, rep_end))

    builder = TreeBuilder()
    root = builder.add(rep_pos[:, 0].mean(axis=0), rep_rad[:, 0].mean())
    level = {root: 0}
    active = [(np.arange(R), root)]
    for ell in range(1, L):
        nxt = []
        for members, nid in active:
            alive = members[rep_end[members] >= ell]
            if alive.size == 0:
                continue
            sub = div_idx[np.ix_(alive, alive)] >= ell
            ii, kk = np.nonzero(np.triu(sub, 1))
            labels = union_find_labels(alive.size, ii.astype(np.int64), kk.astype(np.int64))
            for lab in np.unique(labels):
                part = alive[labels == lab]
                child = builder.add(rep_pos[part, ell].mean(axis=0), rep_rad[part, ell].mean(), parent=nid)
                level[child] = ell
                nxt.append((part, child))
        active = nxt
        if not active:
            break
    return builder.build(), level


def decode_tree(ts: ConfluentTrajectorySet) -> CenterlineTree:
    """Build the centerline tree encoded by a confluent trajectory set.

    Trajectories that never diverge are averaged into representatives, then
    the tree is grown level by level from the shared root: at level ``l`` the
    live representatives of each branch are split into groups whose mutual
    divergence index is at least ``l``, every group adding one node at the
    members' mean position. A representative drops out after its end index.
    """
    return decode_with_levels(ts)[0]


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------
def trajset_to_dict(ts: ConfluentTrajectorySet) -> dict:
    return {
        "origin": [float(x) for x in ts.origin],
        "L": int(ts.L),
        "trajectories": [
            {"pos": ts.positions[i].tolist(), "radius": ts.radii[i].tolist(), "end": float(ts.end_pos[i])}
            for i in range(ts.n)
        ],
        "divergence": ts.divergence.tolist(),
    }


def trajset_from_dict(data: dict) -> ConfluentTrajectorySet:
    trajs = data["trajectories"]
    L = int(data["L"])
    n = len(trajs)
    pos = np.array([t["pos"] for t in trajs], dtype=float).reshape(n, L, 3)
    rad = np.array([t["radius"] for t in trajs], dtype=float).reshape(n, L)
    end = np.array([t["end"] for t in trajs], dtype=float)
    div = np.array(data["divergence"], dtype=float).reshape(n, n)
    return ConfluentTrajectorySet(np.array(data["origin"], dtype=float), pos, rad, end, div).check()


def write_trajset(ts: ConfluentTrajectorySet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(trajset_to_dict(ts)) + "\n")


def read_trajset(path: str | Path) -> ConfluentTrajectorySet:
    return trajset_from_dict(json.loads(Path(path).read_text()))

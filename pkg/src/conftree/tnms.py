"""Tree non-max suppression: merge spatially duplicated branches of a predicted tree."""
from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from .graph import CenterlineTree, branch_decomposition
from .kernels import union_find_labels
from .spatial import SpatialIndex

__all__ = ["TnmsConfig", "TnmsStats", "tnms", "tnms_pass", "tnms_with_stats", "runtime_scaling_probe", "duplicate_injected_tree"]


@dataclass(frozen=True)
class TnmsConfig:
    tau_pos: float = 0.3  # radius scale of the match distance
    tau_min: float = 2.0  # voxels, floor of the match distance
    rho: float = 0.2  # flagged fraction at which a branch is merged

    def __post_init__(self):
        if not self.tau_pos > 0 or not self.tau_min > 0:
            raise ValueError("tau_pos and tau_min must be positive")
        if not 0 < self.rho <= 1:
            raise ValueError("rho must lie in (0, 1]")


@dataclass(frozen=True)
class TnmsStats:
    n_in: int
    n_out: int
    n_branches: int
    n_flagged: int
    n_merged_branches: int
    n_dropped_edges: int
    n_passes: int = 1


def tnms_pass(tree: CenterlineTree, cfg: TnmsConfig = TnmsConfig()) -> tuple[CenterlineTree, TnmsStats]:
    """One traversal of the tree; returns the input object itself when nothing merges."""
    branches = branch_decomposition(tree)  # validates; branches come in pre-order
    order = [nid for b in branches for nid in b.nodes]
    rank = {nid: i for i, nid in enumerate(order)}
    pos = np.stack([tree.nodes[nid].position for nid in order])
    tau = np.maximum(cfg.tau_min, cfg.tau_pos * np.array([tree.nodes[nid].radius for nid in order]))

    # Index holds every earlier branch; the current branch is only added
    # once the traversal moves on to the next branch start.
    index = SpatialIndex()
    dup = np.full(len(order), -1, dtype=np.int64)
    merge_branches = []
    n_flagged = 0
    start = 0
    for b in branches:
        stop = start + len(b.nodes)
        if len(index):
            hit = index.query_within(pos[start:stop], tau[start:stop])
            dup[start:stop] = hit
            flagged = int(np.count_nonzero(hit >= 0))
            n_flagged += flagged
            if flagged and flagged / len(b.nodes) >= cfg.rho:
                merge_branches.append((start, stop))
        index.insert(pos[start:stop], np.arange(start, stop))
        start = stop

    stats = dict(n_in=len(order), n_branches=len(branches), n_flagged=n_flagged,
                 n_merged_branches=len(merge_branches))
    if not merge_branches:
        return tree, TnmsStats(n_out=len(order), n_dropped_edges=0, **stats)

    left = []
    right = []
    for s, e in merge_branches:
        k = np.arange(s, e)
        k = k[dup[s:e] >= 0]
        left.append(k)
        right.append(dup[k])
    # labels are the smallest rank in each duplicate set: the earliest visited node survives
    rep = union_find_labels(len(order), np.concatenate(left), np.concatenate(right))

    # merged multigraph on surviving ranks
    in_parents: dict[int, set[int]] = {}
    out_children: dict[int, set[int]] = {}
    for c, p in tree.parent.items():
        rp, rc = int(rep[rank[p]]), int(rep[rank[c]])
        if rp == rc:
            continue
        in_parents.setdefault(rc, set()).add(rp)
        out_children.setdefault(rp, set()).add(rc)

    # hops from the root in the merged graph decide which parent edge survives
    hops = {0: 0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for c in sorted(out_children.get(u, ())):
            if c not in hops:
                hops[c] = hops[u] + 1
                queue.append(c)

    survivors = sorted(set(int(r) for r in rep))
    new_parent = {}
    n_dropped = 0
    for r in survivors:
        if r == 0:
            continue
        cands = in_parents[r]
        best = min(cands, key=lambda q: (hops[q], q))
        new_parent[r] = best
        n_dropped += len(cands) - 1

    nodes = {order[r]: tree.nodes[order[r]] for r in survivors}
    parent = {order[r]: order[p] for r, p in new_parent.items()}
    out = CenterlineTree(nodes, order[0], parent)
    out = CenterlineTree({nid: out.nodes[nid] for nid in out.preorder()}, order[0], parent)
    out.require_valid()
    return out, TnmsStats(n_out=len(nodes), n_dropped_edges=n_dropped, **stats)


def tnms_with_stats(tree: CenterlineTree, cfg: TnmsConfig = TnmsConfig(),
                    max_passes: int | None = None) -> tuple[CenterlineTree, TnmsStats]:
    """Repeat :func:`tnms_pass` until a pass merges nothing (or ``max_passes`` is hit).

    A merge can re-cut the branch decomposition so that a partially merged
    branch becomes a short branch over the flag ratio; repeating makes the
    result a fixed point, hence idempotent. Every merging pass removes at
    least one node, so the loop terminates.
    """
    out, st = tnms_pass(tree, cfg)
    total = st
    passes = 1
    while st.n_merged_branches and (max_passes is None or passes < max_passes):
        out, st = tnms_pass(out, cfg)
        passes += 1
        total = TnmsStats(
            n_in=total.n_in, n_out=st.n_out, n_branches=total.n_branches,
            n_flagged=total.n_flagged + st.n_flagged,
            n_merged_branches=total.n_merged_branches + st.n_merged_branches,
            n_dropped_edges=total.n_dropped_edges + st.n_dropped_edges, n_passes=passes,
        )
    return out, total


def tnms(tree: CenterlineTree, cfg: TnmsConfig = TnmsConfig()) -> CenterlineTree:
    """Merge duplicate branches while keeping a single rooted tree.

    Nodes are visited in pre-order; each is compared against all nodes of
    earlier branches and flagged when the nearest one lies within
    ``max(tau_min, tau_pos * radius)``. Branches whose flagged fraction reaches
    ``rho`` are collapsed onto the earlier nodes (which keep their position and
    radius). A node left with several parents keeps the one with fewest hops
    to the root, ties going to the earlier parent in pre-order. Passes are
    repeated until nothing merges.
    """
    return tnms_with_stats(tree, cfg)[0]


def duplicate_injected_tree(n_nodes: int, seed: int = 0, offset: float = 0.25) -> CenterlineTree:
    """About ``n_nodes`` nodes: a synthetic tree with every branch duplicated once."""
    from .synth import CorruptionParams, SynthParams, bfs_prefix, corrupt_tree, generate_tree

    base = generate_tree(SynthParams(max_depth=14, bifurcation_prob=0.75, seed=seed))
    k = 0
    while len(base) < n_nodes // 2:
        k += 1
        base = generate_tree(SynthParams(max_depth=14 + k, bifurcation_prob=0.8, seed=seed + k))
    base = bfs_prefix(base, max(1, n_nodes // 2))
    return corrupt_tree(base, CorruptionParams(duplicate_branch_prob=1.0, duplicate_offset=offset, seed=seed))


def runtime_scaling_probe(n_nodes: int, seed: int = 0, cfg: TnmsConfig = TnmsConfig(), repeats: int = 1) -> float:
    """Best-of-``repeats`` wall time (s) of :func:`tnms` on a duplicate-injected tree."""
    tree = duplicate_injected_tree(n_nodes, seed)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        tnms(tree, cfg)
        best = min(best, time.perf_counter() - t0)
    return float(best)

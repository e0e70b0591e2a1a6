"""Slow, obviously-correct reference implementations used by the tests.

Nothing here imports the algorithms under test; only plain data access on
trees (``nodes``, ``parent``, ``root``) is shared.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linear_sum_assignment


# -- assignment ---------------------------------------------------------------
def brute_force_min_cost(cost) -> float:
    c = np.asarray(cost, dtype=float)
    n = c.shape[0]
    return min(sum(c[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))


# -- tree structure -----------------------------------------------------------
def dfs_tree_ok(tree) -> bool:
    """Independent validity check: one root, parent chains reach it, |E| = |V| - 1."""
    ids = set(tree.nodes)
    if not ids or tree.root not in ids or tree.root in tree.parent:
        return False
    if set(tree.parent) != ids - {tree.root}:
        return False
    if any(p not in ids for p in tree.parent.values()):
        return False
    for nid in ids:
        seen, cur = set(), nid
        while cur != tree.root:
            if cur in seen:
                return False
            seen.add(cur)
            cur = tree.parent[cur]
    return len(tree.parent) == len(ids) - 1


def union_find_components(n_ids, edges) -> int:
    parent = {i: i for i in n_ids}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    return len({find(i) for i in n_ids})


def children_of(tree) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {nid: [] for nid in tree.nodes}
    for c, p in tree.parent.items():
        out[p].append(c)
    return out


def brute_branch_paths(tree) -> list[list[int]]:
    """Maximal paths by walking up from every break node to the previous break."""
    kids = children_of(tree)
    breaks = {nid for nid, ks in kids.items() if len(ks) != 1} | {tree.root}
    paths = []
    for nid in breaks:
        if nid == tree.root:
            continue
        path = [nid]
        cur = tree.parent[nid]
        while cur not in breaks:
            path.append(cur)
            cur = tree.parent[cur]
        # cur is a break: either the root (pass-through) or a bifurcation
        if cur == tree.root and len(kids[cur]) == 1:
            path.append(cur)
        paths.append(path[::-1])
    if len(kids[tree.root]) != 1:
        paths.append([tree.root])
    return paths


def canonical_form(tree, nid=None, digits=6):
    """Sibling-order-free description of a tree (rounded coordinates)."""
    kids = children_of(tree)

    def rec(u):
        node = tree.nodes[u]
        sub = sorted(rec(c) for c in kids[u])
        return (tuple(np.round(node.position, digits) + 0.0), round(node.radius, digits) + 0.0, tuple(sub))

    return rec(tree.root if nid is None else nid)


def paired_nodes(a, b, digits=6):
    """Node correspondence between two isomorphic trees via canonical child order."""
    ka, kb = children_of(a), children_of(b)
    pairs = []

    def rec(u, v):
        pairs.append((u, v))
        ca = sorted(ka[u], key=lambda c: canonical_form(a, c, digits))
        cb = sorted(kb[v], key=lambda c: canonical_form(b, c, digits))
        for x, y in zip(ca, cb):
            rec(x, y)

    rec(a.root, b.root)
    return pairs


# -- spatial --------------------------------------------------------------------
def linear_scan_nearest(points, queries):
    points = np.asarray(points, dtype=float)
    out_d, out_i = [], []
    for q in np.asarray(queries, dtype=float):
        d = np.sqrt(((points - q) ** 2).sum(axis=1))
        k = int(np.argmin(d))
        out_d.append(d[k])
        out_i.append(k)
    return np.array(out_d), np.array(out_i)


def flagged_fraction_per_branch(tree, branches, tau_pos, tau_min):
    """For each branch (in order), fraction of its nodes within tau of any earlier branch node."""
    out = []
    earlier: list[np.ndarray] = []
    for br in branches:
        hits = 0
        for nid in br:
            node = tree.nodes[nid]
            tau = max(tau_min, tau_pos * node.radius)
            if any(np.linalg.norm(node.position - tree.nodes[o].position) <= tau for o in earlier):
                hits += 1
        out.append(hits / len(br))
        earlier.extend(br)
    return out


# -- metrics --------------------------------------------------------------------
def reference_threshold(r, tau):
    return max(1.5, tau * r)


def greedy_point_tp(pred_pos, pred_ids, gt_pos, gt_ids, gt_r, tau) -> int:
    cands = []
    for gi in range(len(gt_pos)):
        thr = reference_threshold(gt_r[gi], tau)
        for pi in range(len(pred_pos)):
            d = math.dist(pred_pos[pi], gt_pos[gi])
            if d <= thr:
                cands.append((d, gt_ids[gi], pred_ids[pi], pi, gi))
    cands.sort()
    used_p, used_g = set(), set()
    tp = 0
    for _d, _g, _p, pi, gi in cands:
        if pi in used_p or gi in used_g:
            continue
        used_p.add(pi)
        used_g.add(gi)
        tp += 1
    return tp


def optimal_point_tp(pred_pos, gt_pos, gt_r, tau) -> int:
    d = np.linalg.norm(np.asarray(pred_pos)[:, None] - np.asarray(gt_pos)[None], axis=-1)
    ok = d <= np.maximum(1.5, tau * np.asarray(gt_r))[None]
    rows, cols = linear_sum_assignment(-ok.astype(float))
    return int(ok[rows, cols].sum())


# -- synthetic branching process -----------------------------------------------------
def monte_carlo_branch_count(max_depth, p, n_sims, seed=0):
    """Simulate only the topology of the segment process; return mean and variance of branch counts."""
    rng = np.random.default_rng(seed)
    counts = np.empty(n_sims)
    for s in range(n_sims):
        bif = 0
        stack = [1]
        while stack:
            depth = stack.pop()
            if depth >= max_depth:
                continue
            if rng.random() < p:
                bif += 1
                stack += [depth + 1, depth + 1]
            else:
                stack.append(depth + 1)
        counts[s] = 1 + 2 * bif
    return counts.mean(), counts.var()


# -- losses ----------------------------------------------------------------------------
def scalar_total_loss(pred_steps, tgt_pos, tgt_rad, tgt_end, tgt_div, j_hat, end_hat, div_hat,
                      a_pos=4.2, a_rad=1.15, a_end=0.94, a_div=0.3):
    """Loop-level evaluation of the weighted loss sum."""
    n = len(j_hat)
    total = 0.0
    for pos, rad in pred_steps:
        L = len(pos[0])
        lp = lr = 0.0
        for i in range(n):
            for l in range(L):
                lp += sum(abs(pos[i][l][c] - tgt_pos[j_hat[i]][l][c]) for c in range(3))
                lr += abs(rad[i][l] - tgt_rad[j_hat[i]][l])
        total += a_pos * lp / (n * L) + a_rad * lr / (n * L)
    le = sum(abs(end_hat[i] - tgt_end[j_hat[i]]) for i in range(n)) / n
    ld = 0.0
    if n >= 2:
        for i in range(n):
            for k in range(n):
                if i == k:
                    continue
                a, b = j_hat[i], j_hat[k]
                ref = tgt_end[a] if a == b else tgt_div[a][b]
                ld += abs(div_hat[i][k] - ref)
        ld /= n * (n - 1)
    return total + a_end * le + a_div * ld

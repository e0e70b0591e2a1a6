"""Seeded synthetic vascular trees and controlled corruptions of them."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .graph import CenterlineTree, TreeBuilder, branch_decomposition

__all__ = [
    "SynthParams",
    "CorruptionParams",
    "generate_tree",
    "corrupt_tree",
    "bfs_prefix",
    "expected_branch_count",
    "load_params",
]


@dataclass(frozen=True)
class SynthParams:
    """Branching-process parameters.

    The tree is grown segment by segment. Every segment adds ``segment_len``
    nodes spaced ``step_len`` apart; a segment at depth below ``max_depth``
    either bifurcates (probability ``bifurcation_prob``) into two child
    segments or continues as a single one. Radii shrink by ``radius_decay`` at
    each bifurcation, never below ``min_radius``.
    """

    max_depth: int = 5
    bifurcation_prob: float = 0.5
    segment_len: tuple[int, int] = (6, 12)  # inclusive node-count range
    step_len: float = 3.0
    radius_root: float = 4.0
    radius_decay: float = 0.85
    min_radius: float = 1.0
    tortuosity: float = 0.08  # radians, std of per-step direction jitter
    opening_angle: tuple[float, float] = (20.0, 60.0)  # degrees from parent direction
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.segment_len
        if lo < 1 or hi < lo:
            raise ValueError("segment_len must be a range with 1 <= lo <= hi")
        if not self.radius_root > 0 or not self.step_len > 0:
            raise ValueError("radius_root and step_len must be positive")
        if not 0 < self.radius_decay <= 1:
            raise ValueError("radius_decay must lie in (0, 1]")
        if not 0 <= self.bifurcation_prob <= 1:
            raise ValueError("bifurcation_prob must lie in [0, 1]")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


@dataclass(frozen=True)
class CorruptionParams:
    pos_noise_std: float = 0.0
    radius_noise_std: float = 0.0
    duplicate_branch_prob: float = 0.0
    drop_branch_prob: float = 0.0
    duplicate_offset: float = 0.3  # std (voxels) of the rigid shift applied to each duplicate
    seed: int = 0

    def __post_init__(self):
        if min(self.pos_noise_std, self.radius_noise_std, self.duplicate_offset) < 0:
            raise ValueError("noise levels must be >= 0")
        for p in (self.duplicate_branch_prob, self.drop_branch_prob):
            if not 0 <= p <= 1:
                raise ValueError("probabilities must lie in [0, 1]")


def _tangent_frame(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0]) if abs(d[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(d, helper)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(d, e1)


def _jitter(d: np.ndarray, std: float, rng: np.random.Generator) -> np.ndarray:
    if std <= 0:
        return d
    e1, e2 = _tangent_frame(d)
    a, b = rng.normal(0.0, std, size=2)
    out = d + a * e1 + b * e2
    return out / np.linalg.norm(out)


def generate_tree(p: SynthParams) -> CenterlineTree:
    rng = np.random.default_rng(p.seed)
    lo, hi = p.segment_len
    d0 = rng.normal(size=3)
    d0 /= np.linalg.norm(d0)

    b = TreeBuilder()
    root = b.add(np.asarray(p.origin, dtype=float), p.radius_root)
    # (parent node, direction, radius, depth, nodes to add)
    stack = [(root, d0, p.radius_root, 1, int(rng.integers(lo, hi + 1)) - 1)]
    while stack:
        parent, d, r, depth, count = stack.pop()
        pos = b.position(parent)
        last = parent
        for _ in range(count):
            d = _jitter(d, p.tortuosity, rng)
            pos = pos + p.step_len * d
            last = b.add(pos, r, parent=last)
        if depth >= p.max_depth:
            continue
        if rng.random() < p.bifurcation_prob:
            e1, e2 = _tangent_frame(d)
            phi0 = rng.uniform(0.0, 2 * np.pi)
            child_r = max(p.min_radius, r * p.radius_decay)
            kids = []
            for i in range(2):
                theta = np.deg2rad(rng.uniform(*p.opening_angle))
                phi = phi0 + np.pi * i
                cd = np.cos(theta) * d + np.sin(theta) * (np.cos(phi) * e1 + np.sin(phi) * e2)
                kids.append((last, cd / np.linalg.norm(cd), child_r, depth + 1, int(rng.integers(lo, hi + 1))))
            stack.extend(reversed(kids))
        else:
            stack.append((last, d, r, depth + 1, int(rng.integers(lo, hi + 1))))
    return b.build()


def expected_branch_count(max_depth: int, bifurcation_prob: float) -> tuple[float, float]:
    """Mean and variance of the branch count of the segment branching process.

    Branches = 1 + 2 * bifurcations; computed by recursion over depth.
    """
    p = bifurcation_prob
    # mean/second moment of the bifurcation count in a subtree whose first segment sits at depth d
    m1 = 0.0
    m2 = 0.0
    for _ in range(max_depth - 1):
        # bifurcate: 1 + X1 + X2 (iid); continue: X
        e_bif = 1 + 2 * m1
        e2_bif = 1 + 2 * (2 * m1) + 2 * m2 + 2 * m1 * m1
        m1, m2 = p * e_bif + (1 - p) * m1, p * e2_bif + (1 - p) * m2
    mean = 1 + 2 * m1
    var = 4 * (m2 - m1 * m1)
    return mean, var


def bfs_prefix(tree: CenterlineTree, k: int) -> CenterlineTree:
    """First ``k`` nodes in breadth-first order (always a valid subtree)."""
    keep = tree.bfs()[:k]
    kept = set(keep)
    nodes = {nid: tree.nodes[nid] for nid in keep}
    parent = {nid: tree.parent[nid] for nid in keep if nid in tree.parent and tree.parent[nid] in kept}
    return CenterlineTree(nodes, tree.root, parent)


def corrupt_tree(tree: CenterlineTree, c: CorruptionParams) -> CenterlineTree:
    """Drop leaf branches, duplicate branches, then jitter positions and radii.

    A duplicate is a rigidly shifted copy of one branch's nodes hung from the
    same bifurcation as the original (for the root branch: every node but the
    root, hung from the root). Copies come after the originals among siblings.
    """
    rng = np.random.default_rng(c.seed)
    branches = branch_decomposition(tree)

    dropped: set[int] = set()
    if c.drop_branch_prob > 0:
        for br in branches:
            if br.end_kind == "leaf" and br.start_kind == "bifurcation" and rng.random() < c.drop_branch_prob:
                dropped.update(br.nodes)

    b = TreeBuilder()
    for nid in tree.preorder():
        if nid in dropped:
            continue
        node = tree.nodes[nid]
        b.add(node.position, node.radius, parent=tree.parent.get(nid), node_id=nid)

    if c.duplicate_branch_prob > 0:
        for br in branches:
            if br.nodes[0] in dropped or rng.random() >= c.duplicate_branch_prob:
                continue
            if br.attach is None:
                src, attach = br.nodes[1:], br.nodes[0]
            else:
                src, attach = br.nodes, br.attach
            if not src:
                continue
            shift = rng.normal(0.0, c.duplicate_offset, size=3) if c.duplicate_offset > 0 else np.zeros(3)
            prev = attach
            for nid in src:
                node = tree.nodes[nid]
                prev = b.add(node.position + shift, node.radius, parent=prev)

    out = b.build()
    if c.pos_noise_std == 0 and c.radius_noise_std == 0:
        return out

    nodes = {}
    for nid, node in out.nodes.items():
        pos = node.position
        r = node.radius
        if c.pos_noise_std > 0:
            pos = pos + rng.normal(0.0, c.pos_noise_std, size=3)
        if c.radius_noise_std > 0:
            r = max(0.05, r + rng.normal(0.0, c.radius_noise_std))
        nodes[nid] = type(node)(nid, pos, float(r))
    return CenterlineTree(nodes, out.root, out.parent)


def load_params(cls, source: str | Path | dict | None, **overrides):
    """Instantiate a params dataclass from a JSON file or dict; unknown keys are rejected."""
    if source is None:
        data = {}
    elif isinstance(source, dict):
        data = dict(source)
    else:
        data = json.loads(Path(source).read_text())
    data.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    for key in ("segment_len", "opening_angle", "origin"):
        if key in data and isinstance(data[key], list):
            data[key] = tuple(data[key])
    return cls(**data)


def params_to_dict(p) -> dict:
    return asdict(p)

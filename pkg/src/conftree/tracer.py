"""Whole-tree inference by recursive patches over a pluggable trajectory proposer.

Starting from a root position, each patch asks the proposer for a confluent
trajectory set, decodes it into a local tree and grafts that tree onto the
global one at the patch's frontier node. Decoded branches that reach the
last trajectory index open a new patch centred on their last node.
"""
from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np
from scipy.spatial import cKDTree

from .codec import ConfluentTrajectorySet, TrajectoryTargets, decode_with_levels, encode_targets
from .graph import CenterlineTree, PatchRegion, TreeBuilder, crop_to_patch
from .tnms import TnmsConfig, tnms

__all__ = [
    "Proposer",
    "TraceConfig",
    "TraceResult",
    "TraceError",
    "OracleConfig",
    "OracleProposer",
    "oracle_propose",
    "trace",
]


@runtime_checkable
class Proposer(Protocol):
    def propose(self, center: np.ndarray, n: int, L: int) -> ConfluentTrajectorySet:
        """Return exactly ``n`` trajectories of length ``L`` anchored at ``center``."""
        ...


class TraceError(RuntimeError):
    def __init__(self, center, cause: BaseException):
        self.center = np.asarray(center, dtype=float)
        super().__init__(f"proposer failed for patch at {np.round(self.center, 3).tolist()}: {cause}")


@dataclass(frozen=True)
class TraceConfig:
    n: int = 20
    L: int = 10
    half_extent: float = 32.0
    max_nodes: int = 200_000
    max_patches: int = 20_000
    apply_tnms: bool = False
    tnms: TnmsConfig = field(default_factory=TnmsConfig)

    def __post_init__(self):
        if self.n < 1 or self.L < 2:
            raise ValueError("need n >= 1 and L >= 2")
        if self.max_nodes < 1 or self.max_patches < 1 or not self.half_extent > 0:
            raise ValueError("guards and half_extent must be positive")


@dataclass
class TraceResult:
    tree: CenterlineTree
    truncated: bool
    n_patches: int
    centers: list[np.ndarray]


def trace(proposer: Proposer, root_position, cfg: TraceConfig = TraceConfig()) -> TraceResult:
    """Breadth-first patch tracing; guards return a valid partial tree with ``truncated`` set."""
    b = TreeBuilder()
    frontier: deque[tuple[int | None, np.ndarray]] = deque([(None, np.asarray(root_position, dtype=float))])
    visited: set[int] = set()
    centers = []
    truncated = False

    while frontier:
        if len(centers) >= cfg.max_patches:
            truncated = True
            break
        anchor, center = frontier.popleft()
        if anchor is not None:
            assert anchor not in visited, "frontier node proposed twice"
            visited.add(anchor)
        centers.append(center)
        try:
            ts = proposer.propose(center, cfg.n, cfg.L)
            if ts.n != cfg.n or ts.L != cfg.L:
                raise ValueError(f"proposer returned n={ts.n}, L={ts.L}; expected {cfg.n}, {cfg.L}")
            local, level = decode_with_levels(ts)
        except Exception as exc:
            raise TraceError(center, exc) from exc

        # the decoded root is the frontier node itself
        lroot = local.root
        if anchor is None:
            anchor = b.add(local.position(lroot), local.radius(lroot))
            visited.add(anchor)
        gid = {lroot: anchor}
        for lid in local.bfs()[1:]:
            if len(b) >= cfg.max_nodes:
                truncated = True
                break
            gid[lid] = b.add(local.position(lid), local.radius(lid), parent=gid[local.parent[lid]])
            if level[lid] == cfg.L - 1:
                frontier.append((gid[lid], local.position(lid)))
        if truncated:
            break

    tree = b.build()
    if cfg.apply_tnms:
        tree = tnms(tree, cfg.tnms)
    return TraceResult(tree, truncated, len(centers), centers)


# ---------------------------------------------------------------------------
# ground-truth oracle
# ---------------------------------------------------------------------------
@dataclass
class OracleConfig:
    """Ground truth plus the perturbations the oracle applies to it.

    ``duplication`` > 1 adds extra, non-confluent copies of the whole patch
    prediction (they diverge from the others at the origin) so that decoding
    alone cannot merge them. Extra copies stop one node short of the patch
    boundary and therefore never open new patches.
    """

    gt: CenterlineTree
    pos_noise_std: float = 0.0
    radius_noise_std: float = 0.0
    duplication: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.pos_noise_std < 0 or self.radius_noise_std < 0:
            raise ValueError("noise stds must be >= 0")
        if self.duplication < 1:
            raise ValueError("duplication must be >= 1")


def _patch_seed(seed: int, center: np.ndarray) -> np.random.SeedSequence:
    # quantise so float noise in the center does not change the stream
    q = np.round(np.asarray(center, dtype=float) * 1000).astype(np.int64)
    digest = hashlib.blake2b(q.tobytes(), digest_size=8).digest()
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFF, int.from_bytes(digest, "little")])


class OracleProposer:
    """Proposer that reads trajectories off a known ground-truth tree."""

    stateless = True

    def __init__(self, oc: OracleConfig, half_extent: float = 32.0):
        oc.gt.require_valid()
        self.oc = oc
        self.half_extent = half_extent
        self._ids = oc.gt.ids
        self._kd = cKDTree(oc.gt.positions)

    def snap(self, center) -> int:
        center = np.asarray(center, dtype=float)
        _, k = self._kd.query(center)
        nid = int(self._ids[k])
        if not PatchRegion(center, self.half_extent).contains(self.oc.gt.position(nid)):
            raise LookupError(f"no ground-truth node within the patch at {center.tolist()}")
        return nid

    def targets(self, center, L: int) -> TrajectoryTargets:
        center = np.asarray(center, dtype=float)
        anchor = self.snap(center)
        crop = crop_to_patch(self.oc.gt, PatchRegion(center, self.half_extent), anchor)
        return encode_targets(crop, anchor, L)

    def propose(self, center, n: int, L: int) -> ConfluentTrajectorySet:
        oc = self.oc
        tg = self.targets(center, L)
        m, k = tg.m, oc.duplication
        if n < m * k:
            raise ValueError(f"n={n} proposals cannot cover {m} targets x {k} copies")
        rng = np.random.default_rng(_patch_seed(oc.seed, center))
        j = np.arange(n) % m
        variant = (np.arange(n) // m) % k

        pos = tg.positions[j].copy()
        rad = tg.radii[j].copy()
        if oc.pos_noise_std > 0:
            pos[:, 1:] += rng.normal(0.0, oc.pos_noise_std, size=pos[:, 1:].shape)
        if oc.radius_noise_std > 0:
            rad = np.maximum(0.05, rad + rng.normal(0.0, oc.radius_noise_std, size=rad.shape))

        end = tg.end_pos[j].copy()
        stub = (variant > 0) & (tg.end_index[j] == L - 1)
        end[stub] = (L - 2) / (L - 1)
        div = tg.divergence[np.ix_(j, j)].copy()
        div[variant[:, None] != variant[None, :]] = 0.0
        d_self = np.where(stub, end, div.diagonal())
        div[np.diag_indices(n)] = d_self
        # a stub copy must not stay confluent past its own (shortened) end
        div = np.minimum(div, np.minimum.outer(end, end))
        return ConfluentTrajectorySet(tg.origin, pos, rad, end, div)


def oracle_propose(oc: OracleConfig, center, n: int, L: int, half_extent: float = 32.0) -> ConfluentTrajectorySet:
    return OracleProposer(oc, half_extent).propose(center, n, L)

"""Rooted centerline trees: data model, validation, branches, cropping and JSON I/O."""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

__all__ = [
    "CenterlineNode",
    "CenterlineTree",
    "TreeBuilder",
    "Branch",
    "PatchRegion",
    "Violation",
    "ValidationReport",
    "InvalidTreeError",
    "validate_tree",
    "branch_decomposition",
    "reassemble_edges",
    "crop_to_patch",
    "subtree",
    "match_trees",
    "trees_isomorphic",
    "tree_to_dict",
    "tree_from_dict",
    "read_tree",
    "write_tree",
]


class InvalidTreeError(ValueError):
    """Raised when an operation needs a valid tree and gets something else."""

    def __init__(self, report: "ValidationReport"):
        self.report = report
        lines = "; ".join(str(v) for v in report.violations[:5])
        more = "" if len(report.violations) <= 5 else f" (+{len(report.violations) - 5} more)"
        super().__init__(f"invalid centerline tree: {lines}{more}")


@dataclass(frozen=True, slots=True)
class CenterlineNode:
    id: int
    position: np.ndarray  # (3,) voxel coordinates
    radius: float


@dataclass(frozen=True, slots=True)
class PatchRegion:
    """Closed axis-aligned cube ``|p - center|_inf <= half_extent``."""

    center: np.ndarray
    half_extent: float = 32.0

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(3))
        if not self.half_extent > 0:
            raise ValueError("half_extent must be positive")

    def contains(self, points: np.ndarray) -> np.ndarray | bool:
        pts = np.asarray(points, dtype=float)
        inside = np.all(np.abs(pts - self.center) <= self.half_extent, axis=-1)
        return bool(inside) if inside.ndim == 0 else inside


class CenterlineTree:
    """Rooted spatial tree of nodes carrying a 3D position and a radius.

    Treat instances as immutable. Construction does not validate, so that
    broken inputs can still be inspected with :func:`validate_tree`; readers
    and algorithms that need a proper tree call :meth:`require_valid`.

    ``children`` is derived from ``parent`` (insertion order) unless given
    explicitly.
    """

    def __init__(
        self,
        nodes: Mapping[int, CenterlineNode],
        root: int | None,
        parent: Mapping[int, int],
        children: Mapping[int, Sequence[int]] | None = None,
    ):
        self.nodes = dict(nodes)
        self.root = root
        self.parent = dict(parent)
        if children is None:
            kids: dict[int, list[int]] = {nid: [] for nid in self.nodes}
            for nid in self.nodes:
                p = self.parent.get(nid)
                if p is not None and p in kids:
                    kids[p].append(nid)
            self.children = {k: tuple(v) for k, v in kids.items()}
        else:
            self.children = {k: tuple(v) for k, v in children.items()}

    @classmethod
    def from_arrays(cls, ids, positions, radii, parents) -> "CenterlineTree":
        """Build from parallel sequences; the root has parent ``None`` (or -1)."""
        nodes = {}
        parent = {}
        root = None
        pos = np.asarray(positions, dtype=float).reshape(-1, 3)
        for nid, p, r, par in zip(ids, pos, radii, parents):
            nid = int(nid)
            nodes[nid] = CenterlineNode(nid, p.copy(), float(r))
            if par is None or int(par) < 0:
                # later parentless nodes stay orphans; validate_tree reports them
                root = nid if root is None else root
            else:
                parent[nid] = int(par)
        return cls(nodes, root, parent)

    def __len__(self) -> int:
        return len(self.nodes)

    def __repr__(self) -> str:
        return f"CenterlineTree(n_nodes={len(self.nodes)}, root={self.root})"

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(p, c) for c, p in self.parent.items()]

    def position(self, nid: int) -> np.ndarray:
        return self.nodes[nid].position

    def radius(self, nid: int) -> float:
        return self.nodes[nid].radius

    @cached_property
    def ids(self) -> np.ndarray:
        return np.fromiter(self.nodes.keys(), dtype=np.int64, count=len(self.nodes))

    @cached_property
    def positions(self) -> np.ndarray:
        if not self.nodes:
            return np.zeros((0, 3))
        return np.stack([n.position for n in self.nodes.values()]).astype(float)

    @cached_property
    def radii(self) -> np.ndarray:
        return np.fromiter((n.radius for n in self.nodes.values()), dtype=float, count=len(self.nodes))

    @cached_property
    def index_of(self) -> dict[int, int]:
        return {nid: i for i, nid in enumerate(self.nodes)}

    def preorder(self) -> list[int]:
        """Depth-first pre-order from the root, children in stored order."""
        if self.root is None:
            return []
        order = []
        stack = [self.root]
        while stack:
            nid = stack.pop()
            order.append(nid)
            stack.extend(reversed(self.children.get(nid, ())))
        return order

    def bfs(self) -> list[int]:
        if self.root is None:
            return []
        order = [self.root]
        k = 0
        while k < len(order):
            order.extend(self.children.get(order[k], ()))
            k += 1
        return order

    def depths(self) -> dict[int, int]:
        depth = {self.root: 0}
        for nid in self.bfs():
            for c in self.children.get(nid, ()):
                depth[c] = depth[nid] + 1
        return depth

    def leaves(self) -> list[int]:
        return [nid for nid in self.preorder() if not self.children.get(nid)]

    def bifurcations(self) -> list[int]:
        return [nid for nid, kids in self.children.items() if len(kids) > 1]

    def require_valid(self) -> "CenterlineTree":
        report = validate_tree(self)
        if not report.ok:
            raise InvalidTreeError(report)
        return self


class TreeBuilder:
    """Incremental construction of a :class:`CenterlineTree`."""

    def __init__(self):
        self._nodes: dict[int, CenterlineNode] = {}
        self._parent: dict[int, int] = {}
        self._root: int | None = None
        self._next = 0

    def add(self, position, radius: float, parent: int | None = None, node_id: int | None = None) -> int:
        nid = self._next if node_id is None else int(node_id)
        if nid in self._nodes:
            raise ValueError(f"duplicate node id {nid}")
        self._next = max(self._next, nid + 1)
        self._nodes[nid] = CenterlineNode(nid, np.array(position, dtype=float).reshape(3), float(radius))
        if parent is None:
            if self._root is not None:
                raise ValueError("tree already has a root")
            self._root = nid
        else:
            if parent not in self._nodes:
                raise KeyError(f"unknown parent {parent}")
            self._parent[nid] = int(parent)
        return nid

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, nid: int) -> bool:
        return nid in self._nodes

    def position(self, nid: int) -> np.ndarray:
        return self._nodes[nid].position

    def build(self) -> CenterlineTree:
        return CenterlineTree(self._nodes, self._root, self._parent)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------
@dataclass(frozen=True, slots=True)
class Violation:
    kind: str
    node_ids: tuple[int, ...]
    message: str = ""

    def __str__(self) -> str:
        ids = ",".join(str(i) for i in self.node_ids[:8])
        return f"{self.kind}[{ids}]" + (f": {self.message}" if self.message else "")


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: list[Violation] = field(default_factory=list)

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


def validate_tree(tree: CenterlineTree) -> ValidationReport:
    """Check every tree invariant and list each failure with the node ids involved."""
    out: list[Violation] = []
    nodes = tree.nodes
    if not nodes:
        return ValidationReport(False, [Violation("empty", (), "tree has no nodes")])

    for nid, node in nodes.items():
        if node.id != nid:
            out.append(Violation("id_mismatch", (nid,), f"stored id {node.id}"))
        pos = np.asarray(node.position, dtype=float)
        if pos.shape != (3,) or not np.all(np.isfinite(pos)):
            out.append(Violation("bad_position", (nid,)))
        if not (np.isfinite(node.radius) and node.radius > 0):
            out.append(Violation("bad_radius", (nid,), f"radius={node.radius}"))

    root = tree.root
    if root is None or root not in nodes:
        out.append(Violation("no_root", () if root is None else (root,)))
    elif root in tree.parent:
        out.append(Violation("root_has_parent", (root, tree.parent[root])))

    for c, p in tree.parent.items():
        if c not in nodes:
            out.append(Violation("unknown_child", (c,)))
        if p not in nodes:
            out.append(Violation("unknown_parent", (c, p)))
    parentless = [nid for nid in nodes if nid not in tree.parent and nid != root]
    if parentless:
        out.append(Violation("multiple_roots", tuple(parentless), "non-root nodes without parent"))

    # parent/children consistency
    for p, kids in tree.children.items():
        if len(set(kids)) != len(kids):
            out.append(Violation("duplicate_child", (p,)))
        for c in kids:
            if tree.parent.get(c) != p:
                out.append(Violation("inconsistent_children", (p, c), "child does not name this parent"))
    for c, p in tree.parent.items():
        if c not in tree.children.get(p, ()):
            out.append(Violation("inconsistent_parent", (c, p), "parent does not list this child"))

    # cycles: follow parent chains
    state: dict[int, int] = {}  # 1 = on stack, 2 = done
    for start in nodes:
        if start in state:
            continue
        path = []
        cur = start
        while cur is not None and cur in nodes and cur not in state:
            state[cur] = 1
            path.append(cur)
            cur = tree.parent.get(cur)
        if cur is not None and state.get(cur) == 1:
            cyc = tuple(path[path.index(cur):])
            out.append(Violation("cycle", cyc))
        for nid in path:
            state[nid] = 2

    if root in nodes:
        seen = {root}
        queue = deque([root])
        while queue:
            nid = queue.popleft()
            for c in tree.children.get(nid, ()):
                if c in nodes and c not in seen:
                    seen.add(c)
                    queue.append(c)
        missing = tuple(nid for nid in nodes if nid not in seen)
        if missing:
            out.append(Violation("disconnected", missing, f"{len(missing)} nodes unreachable from root"))

    n_edges = sum(1 for c, p in tree.parent.items() if c in nodes and p in nodes)
    if n_edges != len(nodes) - 1:
        out.append(Violation("edge_count", (), f"|E|={n_edges}, |V|-1={len(nodes) - 1}"))

    return ValidationReport(not out, out)


# ---------------------------------------------------------------------------
# branches
# ---------------------------------------------------------------------------
@dataclass(frozen=True, slots=True)
class Branch:
    """Maximal path from the root or a bifurcation child down to a bifurcation or leaf.

    ``attach`` is the bifurcation the branch hangs from (``None`` for the root
    branch). The incoming edge ``attach -> nodes[0]`` belongs to this branch,
    so branches partition the edge set while each node sits in exactly one
    branch.
    """

    nodes: tuple[int, ...]
    start_kind: str  # "root" | "bifurcation"
    end_kind: str  # "bifurcation" | "leaf"
    attach: int | None = None

    def __len__(self) -> int:
        return len(self.nodes)

    def edges(self) -> list[tuple[int, int]]:
        out = [] if self.attach is None else [(self.attach, self.nodes[0])]
        out.extend(zip(self.nodes[:-1], self.nodes[1:]))
        return out


def branch_decomposition(tree: CenterlineTree) -> list[Branch]:
    """Split a valid tree into maximal branches, in pre-order of their first node."""
    tree.require_valid()
    branches = []
    stack: list[tuple[int, int | None]] = [(tree.root, None)]
    while stack:
        start, attach = stack.pop()
        path = [start]
        kids = tree.children.get(start, ())
        while len(kids) == 1:
            path.append(kids[0])
            kids = tree.children.get(kids[0], ())
        branches.append(
            Branch(
                tuple(path),
                "root" if attach is None else "bifurcation",
                "leaf" if not kids else "bifurcation",
                attach,
            )
        )
        for c in reversed(kids):
            stack.append((c, path[-1]))
    return branches


def reassemble_edges(branches: Iterable[Branch]) -> set[tuple[int, int]]:
    edges: set[tuple[int, int]] = set()
    for b in branches:
        edges.update(b.edges())
    return edges


# ---------------------------------------------------------------------------
# cropping / subtrees
# ---------------------------------------------------------------------------
def _extract(tree: CenterlineTree, anchor: int, keep) -> CenterlineTree:
    nodes = {anchor: tree.nodes[anchor]}
    parent = {}
    stack = [(anchor, 0)]
    order = []
    while stack:
        nid, depth = stack.pop()
        order.append(nid)
        for c in reversed(tree.children.get(nid, ())):
            if keep(c, depth + 1):
                nodes[c] = tree.nodes[c]
                parent[c] = nid
                stack.append((c, depth + 1))
    # restore pre-order insertion so derived children keep the source order
    ordered = {nid: nodes[nid] for nid in order}
    return CenterlineTree(ordered, anchor, parent)


def crop_to_patch(tree: CenterlineTree, region: PatchRegion, anchor: int) -> CenterlineTree:
    """Subtree below ``anchor`` restricted to ``region``.

    A path is cut at the first node outside the region; nothing below that
    node is kept even if it re-enters the cube.
    """
    if anchor not in tree.nodes:
        raise KeyError(f"anchor {anchor} not in tree")
    if not region.contains(tree.position(anchor)):
        raise ValueError(f"anchor {anchor} lies outside the patch region")
    return _extract(tree, anchor, lambda c, _d: region.contains(tree.position(c)))


def subtree(tree: CenterlineTree, anchor: int, max_depth: int | None = None) -> CenterlineTree:
    """Descendants of ``anchor`` (inclusive), optionally limited to ``max_depth`` edges."""
    if anchor not in tree.nodes:
        raise KeyError(f"anchor {anchor} not in tree")
    if max_depth is None:
        return _extract(tree, anchor, lambda _c, _d: True)
    return _extract(tree, anchor, lambda _c, d: d <= max_depth)


# ---------------------------------------------------------------------------
# comparison up to sibling permutation
# ---------------------------------------------------------------------------
def match_trees(a: CenterlineTree, b: CenterlineTree, atol: float = 1e-6) -> dict[int, int] | None:
    """Node correspondence between two trees that are equal up to sibling order.

    Children are paired by nearest position, so siblings must be spatially
    distinct by more than ``atol``. Returns ``None`` when the trees differ in
    shape or any paired position/radius differs by more than ``atol``.
    """
    if len(a) != len(b) or a.root is None or b.root is None:
        return None
    mapping = {a.root: b.root}
    stack = [(a.root, b.root)]
    while stack:
        u, v = stack.pop()
        if np.max(np.abs(a.position(u) - b.position(v))) > atol or abs(a.radius(u) - b.radius(v)) > atol:
            return None
        ku = list(a.children.get(u, ()))
        kv = list(b.children.get(v, ()))
        if len(ku) != len(kv):
            return None
        for cu in ku:
            if not kv:
                return None
            d = [np.max(np.abs(a.position(cu) - b.position(cv))) for cv in kv]
            cv = kv.pop(int(np.argmin(d)))
            mapping[cu] = cv
            stack.append((cu, cv))
    return mapping


def trees_isomorphic(a: CenterlineTree, b: CenterlineTree, atol: float = 1e-6) -> bool:
    return match_trees(a, b, atol) is not None


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------
def tree_to_dict(tree: CenterlineTree) -> dict:
    order = tree.preorder() if tree.root in tree.nodes else list(tree.nodes)
    return {
        "root": tree.root,
        "nodes": [
            {
                "id": nid,
                "pos": [float(x) for x in tree.nodes[nid].position],
                "radius": float(tree.nodes[nid].radius),
                "parent": tree.parent.get(nid),
            }
            for nid in order
        ],
    }


def tree_from_dict(data: dict, validate: bool = True) -> CenterlineTree:
    try:
        root = data["root"]
        entries = data["nodes"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"tree JSON must have 'root' and 'nodes': {exc}") from None
    nodes = {}
    parent = {}
    for e in entries:
        nid = int(e["id"])
        if nid in nodes:
            raise ValueError(f"duplicate node id {nid}")
        pos = np.asarray(e["pos"], dtype=float)
        if pos.shape != (3,):
            raise ValueError(f"node {nid}: pos must have 3 components")
        nodes[nid] = CenterlineNode(nid, pos, float(e["radius"]))
        if e.get("parent") is not None:
            parent[nid] = int(e["parent"])
    tree = CenterlineTree(nodes, None if root is None else int(root), parent)
    if validate:
        tree.require_valid()
    return tree


def write_tree(tree: CenterlineTree, path: str | Path) -> None:
    Path(path).write_text(json.dumps(tree_to_dict(tree), indent=1) + "\n")


def read_tree(path: str | Path) -> CenterlineTree:
    return tree_from_dict(json.loads(Path(path).read_text()))


def iter_edges(tree: CenterlineTree) -> Iterator[tuple[int, int]]:
    for c, p in tree.parent.items():
        yield p, c

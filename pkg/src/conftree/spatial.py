"""Nearest-neighbour index that grows by batch insertion.

Points arrive one batch at a time (a branch of a tree) and queries must see
everything inserted so far. Rebuilding a single KD-tree per batch costs
O(N) each time, so batches are kept in a logarithmic set of static
``scipy.spatial.cKDTree`` blocks (sizes roughly doubling) plus a small
brute-force buffer. Each point is re-indexed O(log N) times overall.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

__all__ = ["SpatialIndex"]


class SpatialIndex:
    def __init__(self, buffer_size: int = 64):
        self.buffer_size = buffer_size
        self._buf_pts = np.zeros((0, 3))
        self._buf_ids = np.zeros(0, dtype=np.int64)
        # slot k holds (tree, ids) or None
        self._slots: list[tuple[cKDTree, np.ndarray] | None] = []
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def insert(self, points, payload) -> None:
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        ids = np.asarray(payload, dtype=np.int64).reshape(-1)
        if pts.shape[0] != ids.shape[0]:
            raise ValueError("points and payload differ in length")
        self._size += len(ids)
        self._buf_pts = np.concatenate([self._buf_pts, pts])
        self._buf_ids = np.concatenate([self._buf_ids, ids])
        if len(self._buf_ids) <= self.buffer_size:
            return
        carry_pts, carry_ids = self._buf_pts, self._buf_ids
        self._buf_pts = np.zeros((0, 3))
        self._buf_ids = np.zeros(0, dtype=np.int64)
        for k, slot in enumerate(self._slots):
            if slot is None:
                self._slots[k] = (cKDTree(carry_pts), carry_ids)
                return
            tree, ids_k = slot
            carry_pts = np.concatenate([tree.data, carry_pts])
            carry_ids = np.concatenate([ids_k, carry_ids])
            self._slots[k] = None
        self._slots.append((cKDTree(carry_pts), carry_ids))

    def nearest(self, queries) -> tuple[np.ndarray, np.ndarray]:
        """Distance to and payload of the nearest inserted point (``inf``/``-1`` if empty)."""
        q = np.asarray(queries, dtype=float).reshape(-1, 3)
        best_d = np.full(len(q), np.inf)
        best_id = np.full(len(q), -1, dtype=np.int64)
        if len(q) == 0:
            return best_d, best_id
        if len(self._buf_ids):
            d = np.linalg.norm(q[:, None, :] - self._buf_pts[None, :, :], axis=2)
            j = np.argmin(d, axis=1)
            best_d = d[np.arange(len(q)), j]
            best_id = self._buf_ids[j]
        for slot in self._slots:
            if slot is None:
                continue
            tree, ids = slot
            d, j = tree.query(q, k=1)
            better = d < best_d
            best_d = np.where(better, d, best_d)
            best_id = np.where(better, ids[np.minimum(j, len(ids) - 1)], best_id)
        return best_d, best_id

    def query_within(self, queries, radius) -> np.ndarray:
        """Payload of the nearest point within ``radius`` (per query), else -1."""
        d, ids = self.nearest(queries)
        return np.where(d <= np.asarray(radius, dtype=float), ids, -1)

"""Hot numeric loops.

Each kernel is numba-compiled unless ``CONFTREE_DISABLE_NUMBA`` is set, in
which case the identical source runs under plain numpy (see ``_accel``).
"""
from __future__ import annotations

import numpy as np

from ._accel import njit


@njit
def hungarian_kernel(cost):
    """Exact O(n^3) min-cost assignment on a square float64 matrix.

    Shortest augmenting path with row/column potentials, one row added per
    outer iteration. Returns ``col_of_row`` with ``col_of_row[i]`` the column
    assigned to row ``i``.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    # p[j]: row (1-based) matched to column j; column 0 is a virtual source
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=np.bool_)
        while True:
            used[j0] = True
            i0 = p[j0]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            free = ~used[1:]
            better = free & (cur < minv[1:])
            minv[1:] = np.where(better, cur, minv[1:])
            way[1:] = np.where(better, j0, way[1:])
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    col_of_row = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col_of_row[p[j] - 1] = j - 1
    return col_of_row


@njit
def greedy_accept(first, second, n_first, n_second):
    """Accept pairs in the given order while both endpoints are still free.

    ``first``/``second`` are parallel int arrays of candidate pairs already
    sorted by priority. Returns a boolean mask over the pairs.
    """
    taken_a = np.zeros(n_first, dtype=np.bool_)
    taken_b = np.zeros(n_second, dtype=np.bool_)
    keep = np.zeros(first.shape[0], dtype=np.bool_)
    for k in range(first.shape[0]):
        a = first[k]
        b = second[k]
        if not taken_a[a] and not taken_b[b]:
            taken_a[a] = True
            taken_b[b] = True
            keep[k] = True
    return keep


@njit
def union_find_labels(n, left, right):
    """Connected-component labels of ``n`` items joined by the given edges.

    Labels are the smallest member index of each component.
    """
    parent = np.arange(n)
    for k in range(left.shape[0]):
        a = left[k]
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        b = right[k]
        while parent[b] != b:
            parent[b] = parent[parent[b]]
            b = parent[b]
        if a < b:
            parent[b] = a
        elif b < a:
            parent[a] = b
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        a = i
        while parent[a] != a:
            a = parent[a]
        labels[i] = a
    return labels

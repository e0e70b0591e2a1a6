import numpy as np
import pytest

from conftree.graph import TreeBuilder


def path_tree(n, step=(1.0, 0.0, 0.0), radius=2.0, start=(0.0, 0.0, 0.0)):
    b = TreeBuilder()
    prev = None
    for k in range(n):
        prev = b.add(np.asarray(start) + k * np.asarray(step, dtype=float), radius, parent=prev)
    return b.build()


def y_tree(stem=3, arm=2, spacing=3.0, radius=2.0):
    """Stem of ``stem`` nodes along x, then two arms of ``arm`` nodes at +-45 degrees."""
    b = TreeBuilder()
    prev = None
    for k in range(stem):
        prev = b.add((k * spacing, 0.0, 0.0), radius, parent=prev)
    fork = prev
    base = b.position(fork)
    for sign in (1.0, -1.0):
        d = np.array([1.0, sign, 0.0]) / np.sqrt(2)
        p = fork
        for k in range(1, arm + 1):
            p = b.add(base + k * spacing * d, radius, parent=p)
    return b.build()


@pytest.fixture
def ytree():
    return y_tree()

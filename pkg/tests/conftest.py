import numpy as np
import pytest

from softforest.trees import Node, SoftTree


def random_tree(rng, num_cols, max_depth=3, grow_prob=0.6, tau=0.1):
    """Random tree with uniform splits; cutpoints respect ancestor intervals."""
    lo = np.zeros(num_cols)
    hi = np.ones(num_cols)

    def grow(depth):
        if depth < max_depth and rng.uniform() < grow_prob:
            var = int(rng.integers(num_cols))
            cut = float(rng.uniform(lo[var], hi[var]))
            old = hi[var]
            hi[var] = cut
            left = grow(depth + 1)
            hi[var] = old
            old = lo[var]
            lo[var] = cut
            right = grow(depth + 1)
            lo[var] = old
            return Node.branch(var, cut, left, right)
        return Node.leaf(float(rng.normal()))

    return SoftTree(grow(0), tau)


def balanced_tree(depth, leaf_values, tau=0.1, var=0):
    """Complete binary tree of the given depth with supplied leaf values."""
    values = iter(leaf_values)

    def build(d, lo, hi):
        if d == depth:
            return Node.leaf(float(next(values)))
        mid = (lo + hi) / 2.0
        return Node.branch(var, mid, build(d + 1, lo, mid), build(d + 1, mid, hi))

    return SoftTree(build(0, 0.0, 1.0), tau)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)

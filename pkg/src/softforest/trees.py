"""Soft (and hard) regression trees: structure, gating weights, prediction.

A tree is a binary structure of `Node` objects.  Branch nodes carry a split
column index and a cutpoint; leaf nodes carry a scalar value.  A `SoftTree`
pairs a root node with a per-tree bandwidth ``tau``.  With ``tau > 0`` the
split rules are smooth logistic gates; ``tau == 0`` selects the hard
indicator rules, implemented as a separate code path rather than a small-tau
limit.
"""

from __future__ import annotations

from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "Node",
    "SoftTree",
    "Hyperrect",
    "gating",
    "leaf_weights",
    "tree_predict",
    "forest_predict",
    "branch_hyperrect",
]

LEAF = -1

# Exponent clamp for the logistic gate; saturation is exact to 1e-12 long
# before |u| = 500, so this only guards against overflow in exp().
_EXP_CLAMP = 500.0


def gating(u):
    """Logistic gate psi(u) = 1 / (1 + exp(-u)), overflow-safe.

    Accepts scalars or arrays; returns the same shape.
    """
    u = np.clip(u, -_EXP_CLAMP, _EXP_CLAMP)
    return 1.0 / (1.0 + np.exp(-u))


class Node:
    """A tree node; a branch when ``var >= 0``, otherwise a leaf.

    Branches split on column ``var`` at ``cut`` and have two children; the
    left child corresponds to the ``x[var] <= cut`` side.  Leaves hold the
    fitted value ``mu``.
    """

    __slots__ = ("var", "cut", "mu", "left", "right")

    def __init__(self, var=LEAF, cut=0.0, mu=0.0, left=None, right=None):
        self.var = var
        self.cut = cut
        self.mu = mu
        self.left = left
        self.right = right

    @property
    def is_leaf(self):
        return self.var == LEAF

    @staticmethod
    def leaf(mu=0.0):
        return Node(var=LEAF, mu=mu)

    @staticmethod
    def branch(var, cut, left, right):
        return Node(var=var, cut=cut, left=left, right=right)

    def clone(self):
        if self.is_leaf:
            return Node.leaf(self.mu)
        return Node.branch(self.var, self.cut, self.left.clone(), self.right.clone())

    def __repr__(self):
        if self.is_leaf:
            return f"Leaf(mu={self.mu:.4g})"
        return f"Branch(x{self.var} <= {self.cut:.4g})"


class SoftTree:
    """A decision tree with per-tree bandwidth.

    ``tau > 0`` gives smooth gates; ``tau == 0`` is hard mode.
    """

    __slots__ = ("root", "tau")

    def __init__(self, root: Node, tau: float):
        if tau < 0.0:
            raise ValueError("tau must be nonnegative")
        self.root = root
        self.tau = float(tau)

    def clone(self) -> "SoftTree":
        return SoftTree(self.root.clone(), self.tau)

    # -- traversal -----------------------------------------------------

    def nodes(self) -> Iterator[tuple[tuple[int, ...], Node, int]]:
        """Yield (path, node, depth) in preorder; path is a tuple of 0/1."""
        stack = [((), self.root, 0)]
        while stack:
            path, node, depth = stack.pop()
            yield path, node, depth
            if not node.is_leaf:
                stack.append((path + (1,), node.right, depth + 1))
                stack.append((path + (0,), node.left, depth + 1))

    def leaves(self) -> list[tuple[tuple[int, ...], Node]]:
        """Leaf (path, node) pairs in left-to-right order."""
        return [(p, n) for p, n, _ in self.nodes() if n.is_leaf]

    def branches(self) -> list[tuple[tuple[int, ...], Node]]:
        return [(p, n) for p, n, _ in self.nodes() if not n.is_leaf]

    def prunable_branches(self) -> list[tuple[tuple[int, ...], Node]]:
        """Branches whose children are both leaves."""
        return [
            (p, n)
            for p, n in self.branches()
            if n.left.is_leaf and n.right.is_leaf
        ]

    def node_at(self, path: Sequence[int]) -> Node:
        node = self.root
        for step in path:
            if node.is_leaf:
                raise ValueError(f"path {tuple(path)} walks past a leaf")
            node = node.right if step else node.left
        return node

    def num_leaves(self) -> int:
        return sum(1 for _, n, _ in self.nodes() if n.is_leaf)

    def leaf_values(self) -> np.ndarray:
        return np.array([n.mu for _, n in self.leaves()])

    def set_leaf_values(self, values) -> None:
        leaves = self.leaves()
        if len(values) != len(leaves):
            raise ValueError("leaf value count mismatch")
        for (_, node), mu in zip(leaves, values):
            node.mu = float(mu)

    def var_counts(self, num_cols: int) -> np.ndarray:
        """Number of branches splitting on each column."""
        counts = np.zeros(num_cols, dtype=np.int64)
        for _, node in self.branches():
            counts[node.var] += 1
        return counts


class Hyperrect:
    """Axis-aligned box of covariate values reaching a node."""

    __slots__ = ("lower", "upper")

    def __init__(self, lower: np.ndarray, upper: np.ndarray):
        self.lower = lower
        self.upper = upper
        if np.any(lower > upper):
            raise ValueError("degenerate hyperrectangle")

    @staticmethod
    def unit_cube(num_dims: int) -> "Hyperrect":
        return Hyperrect(np.zeros(num_dims), np.ones(num_dims))

    def interval(self, dim: int) -> tuple[float, float]:
        return float(self.lower[dim]), float(self.upper[dim])


def branch_hyperrect(tree: SoftTree, path: Sequence[int], num_dims: int) -> Hyperrect:
    """Box implied by the ancestors of the node at ``path``.

    Ancestor rules are treated as hard splits for interval bookkeeping even
    when the tree is soft.
    """
    rect = Hyperrect.unit_cube(num_dims)
    node = tree.root
    for step in path:
        if node.is_leaf:
            raise ValueError(f"path {tuple(path)} walks past a leaf")
        if step:
            rect.lower[node.var] = node.cut
            node = node.right
        else:
            rect.upper[node.var] = node.cut
            node = node.left
    return rect


def cut_interval(tree: SoftTree, path: Sequence[int], dim: int) -> tuple[float, float]:
    """Interval of ``dim`` at the node addressed by ``path`` (hard narrowing)."""
    lo, hi = 0.0, 1.0
    node = tree.root
    for step in path:
        if node.var == dim:
            if step:
                lo = node.cut
            else:
                hi = node.cut
        node = node.right if step else node.left
    return lo, hi


def _as_matrix(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    return x


def _left_gate(node: Node, X: np.ndarray, tau: float) -> np.ndarray:
    """Probability (or indicator) of taking the left, x <= cut, child."""
    col = X[:, node.var]
    if tau == 0.0:
        return (col <= node.cut).astype(np.float64)
    # psi((cut - x)/tau) -> 1 on the x <= cut side as tau -> 0
    return gating((node.cut - col) / tau)


def leaf_weight_matrix(tree: SoftTree, X: np.ndarray) -> np.ndarray:
    """N x L matrix of leaf weights, columns in left-to-right leaf order."""
    X = _as_matrix(X)
    n = X.shape[0]
    cols: list[np.ndarray] = []
    # preorder traversal carrying the accumulated path weight
    stack = [(tree.root, np.ones(n))]
    while stack:
        node, w = stack.pop()
        if node.is_leaf:
            cols.append(w)
            continue
        g = _left_gate(node, X, tree.tau)
        stack.append((node.right, w * (1.0 - g)))
        stack.append((node.left, w * g))
    return np.column_stack(cols)


def leaf_weights(tree: SoftTree, x) -> np.ndarray:
    """Weight vector over leaves for a single point ``x``."""
    return leaf_weight_matrix(tree, x)[0]


def tree_predict(tree: SoftTree, X) -> np.ndarray:
    """Weighted sum of leaf values, one prediction per row of ``X``."""
    X = _as_matrix(X)
    out = np.zeros(X.shape[0])
    stack = [(tree.root, np.ones(X.shape[0]))]
    while stack:
        node, w = stack.pop()
        if node.is_leaf:
            out += w * node.mu
            continue
        g = _left_gate(node, X, tree.tau)
        stack.append((node.right, w * (1.0 - g)))
        stack.append((node.left, w * g))
    return out


def forest_predict(trees: Sequence[SoftTree], X, num_cols: int | None = None) -> np.ndarray:
    """Row-wise sum of ``tree_predict`` over the ensemble."""
    X = _as_matrix(X)
    if num_cols is not None and X.shape[1] != num_cols:
        raise ValueError(
            f"expected {num_cols} columns, got {X.shape[1]}"
        )
    out = np.zeros(X.shape[0])
    for tree in trees:
        out += tree_predict(tree, X)
    return out


# -- compact serialization ----------------------------------------------
#
# Preorder encoding: var[i] >= 0 marks a branch (val[i] is its cutpoint),
# var[i] == -1 marks a leaf (val[i] is its mu).  Every branch is followed by
# its full left subtree, then its right subtree.


def serialize_tree(tree: SoftTree) -> dict:
    var: list[int] = []
    val: list[float] = []

    def visit(node: Node) -> None:
        if node.is_leaf:
            var.append(LEAF)
            val.append(float(node.mu))
        else:
            var.append(int(node.var))
            val.append(float(node.cut))
            visit(node.left)
            visit(node.right)

    visit(tree.root)
    return {"tau": float(tree.tau), "var": var, "val": val}


def deserialize_tree(record: dict) -> SoftTree:
    var = record["var"]
    val = record["val"]
    pos = 0

    def build() -> Node:
        nonlocal pos
        v, x = var[pos], val[pos]
        pos += 1
        if v == LEAF:
            return Node.leaf(x)
        left = build()
        right = build()
        return Node.branch(int(v), float(x), left, right)

    root = build()
    if pos != len(var):
        raise ValueError("malformed tree record")
    return SoftTree(root, record["tau"])


def serialize_forest(trees: Sequence[SoftTree]) -> list[dict]:
    return [serialize_tree(t) for t in trees]


def deserialize_forest(records: Sequence[dict]) -> list[SoftTree]:
    return [deserialize_tree(r) for r in records]

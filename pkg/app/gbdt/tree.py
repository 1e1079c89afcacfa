"""Second-order regression trees with learned default directions for missing values."""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass
class TreeNode:
    node_id: int
    parent: int
    feature: int = -1
    threshold: float = math.nan
    default_left: bool = True
    left: int = -1
    right: int = -1
    weight: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 6
    min_child_weight: float = 1.0
    reg_lambda: float = 1.0
    gamma: float = 0.0


@dataclass(frozen=True)
class _Split:
    gain: float
    feature: int
    threshold: float
    default_left: bool


def _score(G, H, reg_lambda):
    return G * G / (H + reg_lambda)


def leaf_weight(G: float, H: float, reg_lambda: float) -> float:
    return -G / (H + reg_lambda)


def _midpoint(lo: float, hi: float) -> float:
    mid = lo + (hi - lo) / 2.0
    return hi if mid <= lo else mid


def presort(X: np.ndarray, rows: Optional[np.ndarray] = None) -> list[np.ndarray]:
    """Per feature, the rows with a present value ordered by (value, row index)."""
    rows = np.arange(X.shape[0]) if rows is None else np.sort(rows)
    columns = []
    for j in range(X.shape[1]):
        keep = rows[~np.isnan(X[rows, j])]
        columns.append(keep[np.argsort(X[keep, j], kind="stable")])
    return columns


def restrict(columns: list[np.ndarray], member: np.ndarray) -> list[np.ndarray]:
    """Keep the rows flagged in the boolean row mask, preserving each column's order."""
    return [c[member[c]] for c in columns]


def find_best_split(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    rows: np.ndarray,
    params: TreeParams,
    columns: Optional[list[np.ndarray]] = None,
) -> Optional[_Split]:
    """Exact greedy search; ties resolve to the lowest feature, then the lowest threshold.

    Without missing values at the node the default direction is left, so an
    unseen NaN routes like a value below every threshold.
    """
    if columns is None:
        columns = presort(X, rows)
    G, H = g[rows].sum(), h[rows].sum()
    lam, mcw = params.reg_lambda, params.min_child_weight
    parent = _score(G, H, lam)
    best: Optional[_Split] = None

    for j, ordered in enumerate(columns):
        if ordered.size < 2:
            continue
        xs, gs, hs = X[ordered, j], g[ordered], h[ordered]
        boundary = xs[1:] != xs[:-1]
        if not boundary.any():
            continue
        G_p, H_p = gs.sum(), hs.sum()
        GL = np.cumsum(gs)[:-1][boundary]
        HL = np.cumsum(hs)[:-1][boundary]
        GR, HR = G_p - GL, H_p - HL

        if ordered.size == rows.size:
            gains = _score(GL, HL, lam) + _score(GR, HR, lam) - parent
            gains[(HL < mcw) | (HR < mcw)] = -np.inf
            go_left = np.ones(gains.size, dtype=bool)
        else:
            missing = rows[np.isnan(X[rows, j])]
            G_m, H_m = g[missing].sum(), h[missing].sum()
            gain_left = _score(GL + G_m, HL + H_m, lam) + _score(GR, HR, lam) - parent
            gain_left[(HL + H_m < mcw) | (HR < mcw)] = -np.inf
            gain_right = _score(GL, HL, lam) + _score(GR + G_m, HR + H_m, lam) - parent
            gain_right[(HL < mcw) | (HR + H_m < mcw)] = -np.inf
            go_left = gain_left >= gain_right
            gains = np.where(go_left, gain_left, gain_right)

        gains = 0.5 * gains - params.gamma
        pos = int(np.argmax(gains))
        if not np.isfinite(gains[pos]) or gains[pos] <= 0:
            continue
        if best is None or gains[pos] > best.gain:
            lo_index = np.flatnonzero(boundary)[pos]
            best = _Split(
                gain=float(gains[pos]),
                feature=j,
                threshold=_midpoint(float(xs[lo_index]), float(xs[lo_index + 1])),
                default_left=bool(go_left[pos]),
            )
    return best


class RegressionTree:
    def __init__(self, nodes: list[TreeNode]):
        self.nodes = nodes
        self._feature = np.array([n.feature for n in nodes], dtype=np.int64)
        self._threshold = np.array([n.threshold for n in nodes], dtype=np.float64)
        self._default_left = np.array([n.default_left for n in nodes], dtype=bool)
        self._left = np.array([n.left for n in nodes], dtype=np.int64)
        self._right = np.array([n.right for n in nodes], dtype=np.int64)
        self._weight = np.array([n.weight for n in nodes], dtype=np.float64)

    @classmethod
    def fit(
        cls,
        X: np.ndarray,
        g: np.ndarray,
        h: np.ndarray,
        params: TreeParams,
        rows: Optional[np.ndarray] = None,
        columns: Optional[list[np.ndarray]] = None,
    ) -> "RegressionTree":
        """`columns` is `presort(X, rows)`; pass it to share one sort across trees."""
        rows = np.arange(X.shape[0]) if rows is None else np.sort(rows)
        if columns is None:
            columns = presort(X, rows)
        member = np.zeros(X.shape[0], dtype=bool)
        nodes: list[TreeNode] = []
        # depth-first, left subtree first, so node ids are reproducible
        stack = [(rows, columns, -1, 0, None)]
        while stack:
            node_rows, node_columns, parent, depth, side = stack.pop()
            node = TreeNode(
                node_id=len(nodes),
                parent=parent,
                weight=leaf_weight(g[node_rows].sum(), h[node_rows].sum(), params.reg_lambda),
            )
            nodes.append(node)
            if side is not None:
                setattr(nodes[parent], side, node.node_id)

            if depth >= params.max_depth or node_rows.size < 2:
                continue
            split = find_best_split(X, g, h, node_rows, params, node_columns)
            if split is None:
                continue

            node.feature = split.feature
            node.threshold = split.threshold
            node.default_left = split.default_left
            x = X[node_rows, split.feature]
            to_left = np.where(np.isnan(x), split.default_left, x < split.threshold)

            member[node_rows[to_left]] = True
            left_columns = restrict(node_columns, member)
            member[node_rows[to_left]] = False
            member[node_rows[~to_left]] = True
            right_columns = restrict(node_columns, member)
            member[node_rows[~to_left]] = False

            stack.append((node_rows[~to_left], right_columns, node.node_id, depth + 1, "right"))
            stack.append((node_rows[to_left], left_columns, node.node_id, depth + 1, "left"))
        return cls(nodes)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feature = self._feature[node]
            active = np.flatnonzero(feature >= 0)
            if active.size == 0:
                return self._weight[node]
            current = node[active]
            x = X[active, feature[active]]
            go_left = np.where(
                np.isnan(x), self._default_left[current], x < self._threshold[current]
            )
            node[active] = np.where(go_left, self._left[current], self._right[current])

    @property
    def depth(self) -> int:
        depths = {}
        for n in self.nodes:
            depths[n.node_id] = 0 if n.parent < 0 else depths[n.parent] + 1
        return max(depths.values())

    @property
    def leaves(self) -> list[TreeNode]:
        return [n for n in self.nodes if n.is_leaf]

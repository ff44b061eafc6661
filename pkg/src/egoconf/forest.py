"""Random-forest regression surrogate with across-tree prediction variance.

The forest reports, for any encoded point, the average of its trees'
predictions and the unbiased sample variance across trees. That variance
is the uncertainty signal the infill criterion consumes, so the trees are
deliberately diversified by bootstrap resampling and per-tree feature
subsets, both drawn from seeds derived from the forest seed.

Tree fitting is exact greedy CART for regression: at each node every
admissible (feature, threshold) pair is scored by the reduction in sum of
squared errors, thresholds being midpoints between consecutive distinct
sorted values, samples with x <= threshold going left. Ties are broken by
lowest feature index, then lowest threshold; a node splits only when the
best reduction is strictly positive. This makes fitting a deterministic
function of (data, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .seeding import derive_seed


@dataclass(frozen=True)
class ForestParams:
    """Forest shape and sampling controls.

    ``feature_subset`` is the fraction of features each tree may split on,
    sampled once per tree (rounded, at least one feature). ``max_depth``
    of ``None`` means unlimited.
    """

    trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    bootstrap: bool = True
    feature_subset: float = 1.0 / 3.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.trees < 1:
            raise ValueError(f"trees must be >= 1, got {self.trees}")
        if self.min_samples_leaf < 1:
            raise ValueError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if not 0.0 < self.feature_subset <= 1.0:
            raise ValueError(f"feature_subset must be in (0, 1], got {self.feature_subset}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1 or None, got {self.max_depth}")


@dataclass(frozen=True)
class SurrogatePrediction:
    """Forest mean and across-tree empirical variance at one point."""

    mean: float
    variance: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.mean) and np.isfinite(self.variance)):
            raise ValueError(f"prediction must be finite: {self}")
        if self.variance < 0:
            raise ValueError(f"variance must be >= 0: {self.variance}")


_LEAF = -1


def _sse_exact(block: np.ndarray) -> float:
    s1 = math.fsum(block)
    s2 = math.fsum(v * v for v in block)
    return s2 - s1 * s1 / len(block)


def exact_reduction(parent: np.ndarray, left: np.ndarray, right: np.ndarray) -> float:
    """Canonical split score: SSE reduction from exactly rounded sums.

    SSE(block) = fsum(v*v) - fsum(v)^2 / n. Because fsum is exactly
    rounded, the score is a pure function of the block multisets,
    independent of summation order or accumulation scheme, so any two
    implementations agree on it bitwise and tie-breaking (lowest feature
    index, then lowest threshold) is well-defined across them. Fast
    scorers may approximate, but near-maximal candidates must be settled
    with this form.
    """
    return _sse_exact(parent) - _sse_exact(left) - _sse_exact(right)


class Forest:
    """A fitted forest. Immutable; predict calls are thread-safe.

    All trees live in flat parallel arrays (``feature`` is ``-1`` at
    leaves, whose child pointers loop back to themselves), which lets
    batch prediction route whole populations through every tree with a
    handful of vectorized steps per depth level.
    """

    def __init__(self, params, dim, feature, threshold, left, right, value,
                 roots, depth, bags, feature_sets):
        self.params = params
        self.dim = dim
        self._feature = feature
        self._threshold = threshold
        self._left = left
        self._right = right
        self._value = value
        self._roots = roots
        self._depth = depth
        self.bags = bags                  # per-tree training index arrays
        self.feature_sets = feature_sets  # per-tree sorted feature subsets

    @property
    def n_trees(self) -> int:
        return len(self._roots)

    def _check_dim(self, X: np.ndarray) -> None:
        if X.shape[-1] != self.dim:
            raise ValueError(f"expected {self.dim} features, got {X.shape[-1]}")

    def per_tree_predictions(self, x) -> np.ndarray:
        """Each tree's prediction at one point, shape (trees,)."""
        x = np.asarray(x, dtype=float).reshape(-1)
        self._check_dim(x)
        return self._route(x[None, :])[:, 0]

    def predict(self, x) -> SurrogatePrediction:
        preds = self.per_tree_predictions(x)
        variance = float(np.var(preds, ddof=1)) if len(preds) > 1 else 0.0
        return SurrogatePrediction(float(np.mean(preds)), variance)

    def predict_batch(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Means and across-tree variances for a (n, dim) batch."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        self._check_dim(X)
        preds = self._route(X)
        means = preds.mean(axis=0)
        if self.n_trees > 1:
            variances = preds.var(axis=0, ddof=1)
        else:
            variances = np.zeros_like(means)
        return means, np.maximum(variances, 0.0)

    def _route(self, X: np.ndarray) -> np.ndarray:
        """Per-tree leaf values for each row of X, shape (trees, n)."""
        n = X.shape[0]
        nodes = np.broadcast_to(self._roots[:, None], (self.n_trees, n)).copy()
        Xt = X.T
        cols = np.arange(n)
        for _ in range(self._depth):
            feat = self._feature[nodes]
            active = feat != _LEAF
            if not active.any():
                break
            xv = Xt[np.where(active, feat, 0), cols[None, :]]
            goes_right = xv > self._threshold[nodes]
            nxt = np.where(goes_right, self._right[nodes], self._left[nodes])
            nodes = np.where(active, nxt, nodes)
        return self._value[nodes]

    def to_jsonable(self) -> dict:
        """Debug dump of tree structures. Format is not a stable contract."""
        trees = []
        for t in range(self.n_trees):
            start = self._roots[t]
            end = self._roots[t + 1] if t + 1 < self.n_trees else len(self._feature)
            trees.append({
                "feature": self._feature[start:end].tolist(),
                "threshold": self._threshold[start:end].tolist(),
                "left": (self._left[start:end] - start).tolist(),
                "right": (self._right[start:end] - start).tolist(),
                "value": self._value[start:end].tolist(),
                "bag": self.bags[t].tolist(),
                "features_used": list(self.feature_sets[t]),
            })
        return {"dim": self.dim, "trees": trees}


def fit(X, Y, params: ForestParams = ForestParams()) -> Forest:
    """Fit a forest of ``params.trees`` regression trees on encoded points."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float).reshape(-1)
    if X.shape[0] != Y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but Y has {Y.shape[0]} targets")
    if X.shape[0] < 1:
        raise ValueError("need at least one training point")
    if not np.isfinite(Y).all():
        raise ValueError("targets must be finite")
    if not np.isfinite(X).all():
        raise ValueError("features must be finite")

    n, d = X.shape
    n_feat = max(1, round(params.feature_subset * d))

    feature: list[np.ndarray] = []
    threshold: list[np.ndarray] = []
    left: list[np.ndarray] = []
    right: list[np.ndarray] = []
    value: list[np.ndarray] = []
    roots = np.zeros(params.trees, dtype=np.int64)
    bags: list[np.ndarray] = []
    feature_sets: list[tuple[int, ...]] = []
    offset = 0
    max_depth_seen = 0

    for t in range(params.trees):
        rng = np.random.default_rng(derive_seed(params.seed, "tree", t))
        bag = rng.integers(0, n, size=n) if params.bootstrap else np.arange(n)
        feats = tuple(sorted(rng.choice(d, size=n_feat, replace=False))) if n_feat < d \
            else tuple(range(d))
        bags.append(np.asarray(bag))
        feature_sets.append(feats)

        tree = _TreeBuilder(X[bag], Y[bag], feats, params.max_depth, params.min_samples_leaf)
        tree.build()
        roots[t] = offset
        feature.append(np.asarray(tree.feature, dtype=np.int64))
        threshold.append(np.asarray(tree.threshold, dtype=float))
        left.append(np.asarray(tree.left, dtype=np.int64) + offset)
        right.append(np.asarray(tree.right, dtype=np.int64) + offset)
        value.append(np.asarray(tree.value, dtype=float))
        offset += len(tree.feature)
        max_depth_seen = max(max_depth_seen, tree.depth)

    return Forest(
        params=params,
        dim=d,
        feature=np.concatenate(feature),
        threshold=np.concatenate(threshold),
        left=np.concatenate(left),
        right=np.concatenate(right),
        value=np.concatenate(value),
        roots=roots,
        depth=max_depth_seen + 1,
        bags=bags,
        feature_sets=feature_sets,
    )


class _TreeBuilder:
    """Array-backed greedy CART construction for one tree."""

    def __init__(self, X, y, features, max_depth, min_samples_leaf):
        self.X = X
        self.y = y
        self.features = features
        self.max_depth = max_depth
        self.min_leaf = min_samples_leaf
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.depth = 0

    def _new_node(self) -> int:
        slot = len(self.feature)
        self.feature.append(_LEAF)
        self.threshold.append(0.0)
        self.left.append(slot)
        self.right.append(slot)
        self.value.append(0.0)
        return slot

    def build(self) -> None:
        root = self._new_node()
        stack = [(np.arange(len(self.y)), 0, root)]
        while stack:
            idx, depth, slot = stack.pop()
            self.depth = max(self.depth, depth)
            y = self.y[idx]
            self.value[slot] = float(np.mean(y))
            if (
                len(idx) < 2 * self.min_leaf
                or (self.max_depth is not None and depth >= self.max_depth)
                or np.all(y == y[0])
            ):
                continue
            found = self._best_split(idx, y)
            if found is None:
                continue
            f, thr = found
            mask = self.X[idx, f] <= thr
            left_slot = self._new_node()
            right_slot = self._new_node()
            self.feature[slot] = f
            self.threshold[slot] = thr
            self.left[slot] = left_slot
            self.right[slot] = right_slot
            stack.append((idx[mask], depth + 1, left_slot))
            stack.append((idx[~mask], depth + 1, right_slot))

    def _best_split(self, idx: np.ndarray, y: np.ndarray) -> tuple[int, float] | None:
        n = len(idx)
        # Split positions put rows 0..i left; both sides need min_leaf rows.
        positions = np.arange(self.min_leaf - 1, n - self.min_leaf)
        if len(positions) == 0:
            return None
        parent_sse = float(np.sum(y * y) - np.sum(y) ** 2 / n)

        V = self.X[np.ix_(idx, self.features)]
        order = np.argsort(V, axis=0, kind="stable")
        vs = np.take_along_axis(V, order, axis=0)
        ys = y[order]
        cum_y = np.cumsum(ys, axis=0)
        cum_y2 = np.cumsum(ys * ys, axis=0)

        # A position is admissible only where it separates distinct values.
        valid = vs[positions] < vs[positions + 1]
        n_left = (positions + 1.0)[:, None]
        n_right = n - n_left
        sse_left = cum_y2[positions] - cum_y[positions] ** 2 / n_left
        sse_right = (cum_y2[-1] - cum_y2[positions]) \
            - (cum_y[-1] - cum_y[positions]) ** 2 / n_right
        reductions = np.where(valid, parent_sse - sse_left - sse_right, -np.inf)

        best_approx = float(np.max(reductions))
        if best_approx == -np.inf:
            return None
        # Candidates near the approximate maximum are re-scored with the
        # canonical exact form (see exact_reduction): different features
        # routinely induce identical target partitions at small nodes, and
        # prefix-sum rounding must not decide those mathematical ties.
        window = 1e-8 * max(parent_sse, abs(best_approx), 1.0)
        if best_approx <= window:
            near = reductions >= -window
        else:
            near = reductions >= best_approx - window
        best: tuple[int, float] | None = None
        best_exact = 0.0
        for flat in np.flatnonzero(near.T):  # transpose: feature-major order
            col, row = divmod(flat, near.shape[0])
            pos = int(positions[row])
            left = ys[: pos + 1, col]
            right = ys[pos + 1:, col]
            reduction = exact_reduction(y, left, right)
            if reduction > best_exact:  # strict: earlier (lower) keys win ties
                best_exact = reduction
                best = (self.features[col], float((vs[pos, col] + vs[pos + 1, col]) / 2.0))
        return best

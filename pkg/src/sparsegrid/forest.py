"""Random-forest classifier (CART trees on Gini impurity, bagging).

Split rules:

* candidate thresholds are midpoints between consecutive distinct values of a
  feature inside the node; samples with ``x <= threshold`` go left;
* the best split maximises ``sum(cl**2)/nl + sum(cr**2)/nr`` (equivalently
  minimises the weighted child Gini); ties go to the lowest feature index,
  then to the lowest threshold;
* bootstrap resampling is carried as integer row weights, which is exactly
  equivalent to duplicating rows.

Trees are stored as flat pre-order node arrays.  Prediction is a majority vote
of per-tree leaf argmax classes, ties going to the lowest class id.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

MAGIC = b"SGRF"
VERSION = 1
_HEADER = struct.Struct("<4sHIBII")


def gini(class_counts) -> float:
    """Gini impurity ``1 - sum(p_i**2)`` of a class-count vector."""
    c = np.asarray(class_counts, dtype=np.float64)
    if c.ndim != 1 or np.any(c < 0):
        raise ValueError("class counts must be a non-negative vector")
    total = c.sum()
    if total <= 0:
        raise ValueError("gini is undefined for an empty node")
    p = c / total
    return float(1.0 - np.sum(p * p))


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 100
    max_features: str | int | float | None = "sqrt"
    min_samples_leaf: int = 1
    max_depth: int | None = None
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")

    def n_candidates(self, n_features: int) -> int:
        mf = self.max_features
        if mf is None or mf == "all":
            k = n_features
        elif mf == "sqrt":
            k = int(math.sqrt(n_features))
        elif mf == "log2":
            k = int(math.log2(n_features)) if n_features > 1 else 1
        elif isinstance(mf, float) and not float(mf).is_integer():
            k = int(mf * n_features)
        elif isinstance(mf, (int, float)):
            k = int(mf)
        else:
            raise ValueError(f"unknown max_features rule {mf!r}")
        return min(max(1, k), n_features)


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _rank_features(XT):
    """Dense per-feature ranks plus the sorted distinct values they index."""
    n_feat, n = XT.shape
    ranks = np.empty((n_feat, n), np.int32)
    uvals = np.empty((n_feat, n), np.float32)
    n_distinct = np.empty(n_feat, np.int64)
    for f in range(n_feat):
        col = XT[f]
        order = np.argsort(col, kind="mergesort")
        r = -1
        prev = np.float32(0.0)
        for i in range(n):
            v = col[order[i]]
            if r < 0 or v != prev:
                r += 1
                uvals[f, r] = v
                prev = v
            ranks[f, order[i]] = r
        n_distinct[f] = r + 1
    return ranks, uvals, n_distinct


@njit(cache=True)
def _grow(ranks, uvals, n_distinct, y, rows, weights, n_classes, max_features, min_leaf,
          max_depth, seed):
    n_feat = ranks.shape[0]
    n_rows = rows.shape[0]
    np.random.seed(seed)
    cap = 2 * n_rows + 1
    feature = np.full(cap, -1, np.int32)
    threshold = np.zeros(cap, np.float64)
    left = np.full(cap, -1, np.int32)
    right = np.full(cap, -1, np.int32)
    counts = np.zeros((cap, n_classes), np.int64)

    idx = rows.copy()
    w_of = weights.copy()  # aligned with idx positions
    pool = np.arange(n_feat)
    cand = np.empty(max_features, np.int64)
    keys = np.empty(n_rows, np.int64)
    cls = np.empty(n_rows, np.int64)
    wt = np.empty(n_rows, np.int64)
    cl = np.zeros(n_classes, np.int64)
    grp = np.zeros(n_classes, np.int64)
    acc = np.zeros((ranks.shape[1], n_classes), np.int64)
    acc_w = np.zeros(ranks.shape[1], np.int64)

    st_s = np.empty(cap, np.int64)
    st_e = np.empty(cap, np.int64)
    st_d = np.empty(cap, np.int64)
    st_p = np.empty(cap, np.int64)
    st_l = np.empty(cap, np.bool_)
    st_s[0] = 0
    st_e[0] = n_rows
    st_d[0] = 0
    st_p[0] = -1
    st_l[0] = True
    sp = 1
    n_nodes = 0

    while sp > 0:
        sp -= 1
        s = st_s[sp]
        e = st_e[sp]
        depth = st_d[sp]
        parent = st_p[sp]
        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if st_l[sp]:
                left[parent] = node
            else:
                right[parent] = node

        n_w = 0
        for i in range(s, e):
            counts[node, y[idx[i]]] += w_of[i]
            n_w += w_of[i]
        nonzero = 0
        for c in range(n_classes):
            if counts[node, c] > 0:
                nonzero += 1
        if nonzero <= 1 or n_w < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue

        for j in range(max_features):
            r = np.random.randint(j, n_feat)
            tmp = pool[j]
            pool[j] = pool[r]
            pool[r] = tmp
        for j in range(max_features):
            cand[j] = pool[j]
        cand.sort()

        m = e - s
        for i in range(m):
            cls[i] = y[idx[s + i]]
            wt[i] = w_of[s + i]
        sort_cost = 4.0 * m * np.log2(m + 1.0)
        best_score = -1.0
        best_f = -1
        best_r = -1
        best_t = 0.0
        tol = 1e-12 * n_w
        for jf in range(max_features):
            f = cand[jf]
            rk = ranks[f]
            for c in range(n_classes):
                cl[c] = 0
            nl = 0
            prev = -1
            done = False
            if n_distinct[f] < sort_cost:
                # bucket scan over the feature's rank space
                lo_r = n_distinct[f]
                hi_r = -1
                for i in range(m):
                    q = rk[idx[s + i]]
                    acc[q, cls[i]] += wt[i]
                    acc_w[q] += wt[i]
                    if q < lo_r:
                        lo_r = q
                    if q > hi_r:
                        hi_r = q
                if lo_r == hi_r:
                    for c in range(n_classes):
                        acc[lo_r, c] = 0
                    acc_w[lo_r] = 0
                    continue
                for q in range(lo_r, hi_r + 1):
                    if acc_w[q] == 0:
                        continue
                    if prev >= 0 and not done:
                        if nl >= min_leaf:
                            nr = n_w - nl
                            if nr < min_leaf:
                                done = True
                            else:
                                sl = 0.0
                                sr = 0.0
                                for c in range(n_classes):
                                    a_c = cl[c]
                                    b_c = counts[node, c] - a_c
                                    sl += a_c * a_c
                                    sr += b_c * b_c
                                score = sl / nl + sr / nr
                                if score > best_score + tol:
                                    best_score = score
                                    best_f = f
                                    best_r = prev
                                    best_t = 0.5 * (np.float64(uvals[f, prev]) + np.float64(uvals[f, q]))
                    for c in range(n_classes):
                        cl[c] += acc[q, c]
                        acc[q, c] = 0
                    nl += acc_w[q]
                    acc_w[q] = 0
                    prev = q
            else:
                for i in range(m):
                    keys[i] = rk[idx[s + i]]
                order = np.argsort(keys[:m])
                if keys[order[0]] == keys[order[m - 1]]:
                    continue
                a = 0
                while a < m:
                    q = keys[order[a]]
                    for c in range(n_classes):
                        grp[c] = 0
                    gw = 0
                    while a < m and keys[order[a]] == q:
                        oa = order[a]
                        grp[cls[oa]] += wt[oa]
                        gw += wt[oa]
                        a += 1
                    if prev >= 0 and not done:
                        if nl >= min_leaf:
                            nr = n_w - nl
                            if nr < min_leaf:
                                done = True
                            else:
                                sl = 0.0
                                sr = 0.0
                                for c in range(n_classes):
                                    a_c = cl[c]
                                    b_c = counts[node, c] - a_c
                                    sl += a_c * a_c
                                    sr += b_c * b_c
                                score = sl / nl + sr / nr
                                if score > best_score + tol:
                                    best_score = score
                                    best_f = f
                                    best_r = prev
                                    best_t = 0.5 * (np.float64(uvals[f, prev]) + np.float64(uvals[f, q]))
                    for c in range(n_classes):
                        cl[c] += grp[c]
                    nl += gw
                    prev = q
                    if done:
                        break
        if best_f < 0:
            continue

        feature[node] = best_f
        threshold[node] = best_t
        rk = ranks[best_f]
        lo = s
        hi = e - 1
        while lo <= hi:
            if rk[idx[lo]] <= best_r:
                lo += 1
            else:
                t_i = idx[lo]
                idx[lo] = idx[hi]
                idx[hi] = t_i
                t_w = w_of[lo]
                w_of[lo] = w_of[hi]
                w_of[hi] = t_w
                hi -= 1
        # right pushed first so the left subtree is numbered first (pre-order)
        st_s[sp] = lo
        st_e[sp] = e
        st_d[sp] = depth + 1
        st_p[sp] = node
        st_l[sp] = False
        sp += 1
        st_s[sp] = s
        st_e[sp] = lo
        st_d[sp] = depth + 1
        st_p[sp] = node
        st_l[sp] = True
        sp += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        counts[:n_nodes].copy(),
    )


@njit(cache=True)
def _votes(X, feature, threshold, left, right, leaf_class, roots, n_classes):
    n = X.shape[0]
    votes = np.zeros((n, n_classes), np.int64)
    for t in range(roots.shape[0]):
        root = roots[t]
        for i in range(n):
            node = root
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            votes[i, leaf_class[node]] += 1
    return votes


# ---------------------------------------------------------------------------
# model types


@dataclass
class DecisionTree:
    feature: np.ndarray  # int32, -1 marks a leaf
    threshold: np.ndarray  # float64
    left: np.ndarray  # int32 child ids, -1 for leaves
    right: np.ndarray
    class_counts: np.ndarray  # (n_nodes, n_classes) int64

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    def leaf_class(self) -> np.ndarray:
        return np.argmax(self.class_counts, axis=1).astype(np.int32)

    def depth(self) -> int:
        best = 0
        stack = [(0, 0)]
        while stack:
            node, d = stack.pop()
            best = max(best, d)
            if self.feature[node] >= 0:
                stack.append((int(self.left[node]), d + 1))
                stack.append((int(self.right[node]), d + 1))
        return best

    def predict(self, X) -> np.ndarray:
        X = _as_matrix(X)
        votes = _votes(
            X, self.feature, self.threshold, self.left, self.right, self.leaf_class(),
            np.zeros(1, np.int64), self.class_counts.shape[1],
        )
        return np.argmax(votes, axis=1)


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    if X.dtype not in (np.float32, np.float64):
        X = X.astype(np.float64)
    return np.ascontiguousarray(X)


@dataclass
class RandomForestModel:
    trees: list[DecisionTree]
    n_classes: int
    feature_count: int
    train_config: TrainConfig

    def __post_init__(self):
        self._packed = None

    def _pack(self):
        if self._packed is None:
            offsets = np.cumsum([0] + [t.n_nodes for t in self.trees[:-1]]).astype(np.int64)
            shift = lambda a, o: np.where(a >= 0, a + o, -1).astype(np.int64)
            self._packed = (
                np.concatenate([t.feature for t in self.trees]).astype(np.int64),
                np.concatenate([t.threshold for t in self.trees]),
                np.concatenate([shift(t.left, o) for t, o in zip(self.trees, offsets)]),
                np.concatenate([shift(t.right, o) for t, o in zip(self.trees, offsets)]),
                np.concatenate([t.leaf_class() for t in self.trees]).astype(np.int64),
                offsets,
            )
        return self._packed

    def votes(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.feature_count:
            raise ValueError(
                f"expected {self.feature_count} features, got {X.shape[1]}"
            )
        feat, thr, lft, rgt, leaf, roots = self._pack()
        return _votes(X, feat, thr, lft, rgt, leaf, roots, self.n_classes)

    def predict(self, X) -> np.ndarray:
        """Majority vote; ``np.argmax`` resolves ties to the lowest class id."""
        return np.argmax(self.votes(X), axis=1)

    # -- serialization ------------------------------------------------------

    def to_bytes(self) -> bytes:
        cfg = json.dumps(asdict(self.train_config), sort_keys=True).encode()
        parts = [
            _HEADER.pack(MAGIC, VERSION, len(self.trees), self.n_classes, self.feature_count, len(cfg)),
            cfg,
        ]
        for t in self.trees:
            parts.append(struct.pack("<I", t.n_nodes))
            parts.append(t.feature.astype("<i4").tobytes())
            parts.append(t.threshold.astype("<f8").tobytes())
            parts.append(t.left.astype("<i4").tobytes())
            parts.append(t.right.astype("<i4").tobytes())
            parts.append(t.class_counts.astype("<i8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "RandomForestModel":
        if len(buf) < _HEADER.size:
            raise ValueError("truncated model file")
        magic, version, n_trees, n_classes, feature_count, cfg_len = _HEADER.unpack_from(buf)
        if magic != MAGIC or version != VERSION:
            raise ValueError(f"not a version-{VERSION} forest file")
        pos = _HEADER.size
        cfg = TrainConfig(**json.loads(buf[pos:pos + cfg_len]))
        pos += cfg_len
        trees = []

        def take(dtype, count):
            nonlocal pos
            size = np.dtype(dtype).itemsize * count
            if pos + size > len(buf):
                raise ValueError("truncated model file")
            arr = np.frombuffer(buf, dtype=dtype, count=count, offset=pos).copy()
            pos += size
            return arr

        for _ in range(n_trees):
            (n,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            trees.append(
                DecisionTree(
                    take("<i4", n).astype(np.int32),
                    take("<f8", n).astype(np.float64),
                    take("<i4", n).astype(np.int32),
                    take("<i4", n).astype(np.int32),
                    take("<i8", n * n_classes).astype(np.int64).reshape(n, n_classes),
                )
            )
        if pos != len(buf):
            raise ValueError("trailing bytes in model file")
        return cls(trees, n_classes, feature_count, cfg)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "RandomForestModel":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


@dataclass
class RankedMatrix:
    """Per-feature dense ranks of a training matrix (shared by all trees)."""

    ranks: np.ndarray  # (n_features, n_rows) int32
    uvals: np.ndarray  # (n_features, n_rows) float32, sorted distinct values
    n_distinct: np.ndarray  # (n_features,)

    @property
    def shape(self) -> tuple[int, int]:
        return self.ranks.shape[1], self.ranks.shape[0]


def rank_matrix(X) -> RankedMatrix:
    XT = np.ascontiguousarray(np.asarray(X).T, dtype=np.float32)
    return RankedMatrix(*_rank_features(XT))


def _grow_ranked(rm: RankedMatrix, y, rows, weights, n_classes, max_features, min_leaf,
                 max_depth, seed) -> DecisionTree:
    out = _grow(
        rm.ranks, rm.uvals, rm.n_distinct, y, np.asarray(rows, np.int64),
        np.asarray(weights, np.int64), int(n_classes), int(max_features), int(min_leaf),
        -1 if max_depth is None else int(max_depth), int(seed) & 0x7FFFFFFF,
    )
    return DecisionTree(*out)


def grow_tree(
    X, y, n_classes: int, max_features: int | None = None, min_samples_leaf: int = 1,
    max_depth: int | None = None, rows=None, weights=None, seed: int = 0,
) -> DecisionTree:
    """Grow one CART tree on ``X[rows]`` with integer row ``weights``.

    ``max_features=None`` considers every feature at every node.
    """
    X = np.asarray(X)
    n, n_feat = X.shape
    rows = np.arange(n) if rows is None else np.asarray(rows)
    weights = np.ones(len(rows), np.int64) if weights is None else np.asarray(weights)
    return _grow_ranked(
        rank_matrix(X), np.asarray(y, np.int64), rows, weights, n_classes,
        n_feat if max_features is None else max_features, min_samples_leaf, max_depth, seed,
    )


def fit(
    X, y, cfg: TrainConfig | None = None, n_classes: int | None = None,
    rows=None, ranked: RankedMatrix | None = None,
) -> RandomForestModel:
    """Train a forest on ``X[rows]``; deterministic in ``(X[rows], y[rows], cfg)``.

    ``y`` holds class ids ``0..n_classes-1``.  Tree ``t`` draws its bootstrap
    rows and feature candidates from a generator seeded with ``cfg.seed ^ t``.
    ``ranked`` may carry :func:`rank_matrix` of the full ``X`` so that several
    fits on row subsets (cross-validation folds) share one ranking pass.
    """
    cfg = cfg or TrainConfig()
    X = np.asarray(X)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("X must be a non-empty 2-D array")
    if len(X) != len(y):
        raise ValueError("X and y lengths differ")
    rows = np.arange(len(X)) if rows is None else np.asarray(rows, dtype=np.int64)
    if len(rows) == 0:
        raise ValueError("no training rows")
    y_train = y[rows]
    if y_train.min() < 0:
        raise ValueError("class ids must be non-negative")
    k = int(n_classes if n_classes is not None else y_train.max() + 1)
    if y_train.max() >= k:
        raise ValueError("class id outside 0..n_classes-1")
    n = len(rows)
    n_feat = X.shape[1]
    m = cfg.n_candidates(n_feat)
    if ranked is None:
        ranked = rank_matrix(X)
    elif ranked.shape != X.shape:
        raise ValueError("ranked matrix does not match X")
    trees = []
    for t in range(cfg.n_trees):
        rng = np.random.default_rng((cfg.seed ^ t) & 0xFFFFFFFFFFFFFFFF)
        if cfg.bootstrap:
            w = np.bincount(rng.integers(0, n, n), minlength=n)
            pick = np.flatnonzero(w)
            tree_rows, weights = rows[pick], w[pick]
        else:
            tree_rows, weights = rows, np.ones(n, dtype=np.int64)
        tree_seed = int(rng.integers(0, 2**31 - 1))
        trees.append(
            _grow_ranked(ranked, y, tree_rows, weights, k, m, cfg.min_samples_leaf,
                         cfg.max_depth, tree_seed)
        )
    return RandomForestModel(trees, k, n_feat, cfg)


def predict(model: RandomForestModel, x) -> int:
    """Class of a single feature vector."""
    x = np.asarray(x)
    if x.ndim != 1:
        raise ValueError("predict expects one feature vector; use model.predict for batches")
    return int(model.predict(x)[0])

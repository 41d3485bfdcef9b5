"""Interaction classifier: a class-weighted random forest over the 24
segment features, and a small gain-ratio tree that maps forest votes onto
five classes (adds Idle and Upright).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed
from sklearn.tree import DecisionTreeClassifier

from .features import FEATURE_DEFINITIONS, FEATURE_NAMES, N_FEATURES, FeatureVector
from .interactions import ALL_KINDS, BASE_KINDS, InteractionKind
from .trace import atomic_write_text

MODEL_FORMAT = "zlab-forest/1"
MODEL_NOTES = (
    "trees: CART, weighted gini, features_per_split candidates per node, grown until pure "
    "or <2 samples; bootstrap of size n with replacement per tree, per-tree seed spawned "
    "from train_seed; rows canonically sorted before sampling; features compared as float32; "
    "leaf vote = weighted-majority class; forest output = vote argmax, ties to class order "
    "TYPING<SCROLLING<MKKM"
)


class InsufficientClasses(ValueError):
    pass


def feature_digest() -> str:
    text = ",".join(FEATURE_NAMES) + "|" + FEATURE_DEFINITIONS
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def n_threads() -> int:
    try:
        return max(1, int(os.environ.get("ZLAB_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True, eq=False)
class TrainingSet:
    X: np.ndarray
    y: np.ndarray  # InteractionKind values
    users: np.ndarray  # str
    sparse: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64).reshape(-1, N_FEATURES)
        y = np.asarray(self.y, dtype=np.int64)
        users = np.asarray(self.users, dtype=str)
        sparse = np.zeros(len(y), bool) if self.sparse is None else np.asarray(self.sparse, bool)
        if not (len(X) == len(y) == len(users) == len(sparse)):
            raise ValueError("training set columns differ in length")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "sparse", sparse)

    def __len__(self) -> int:
        return len(self.y)

    @classmethod
    def concat(cls, parts: Sequence["TrainingSet"]) -> "TrainingSet":
        parts = list(parts)
        return cls(
            np.concatenate([p.X for p in parts]) if parts else np.zeros((0, N_FEATURES)),
            np.concatenate([p.y for p in parts]) if parts else np.zeros(0, np.int64),
            np.concatenate([p.users for p in parts]) if parts else np.zeros(0, str),
            np.concatenate([p.sparse for p in parts]) if parts else np.zeros(0, bool),
        )

    def subset(self, mask) -> "TrainingSet":
        return TrainingSet(self.X[mask], self.y[mask], self.users[mask], self.sparse[mask])

    def usable(self) -> "TrainingSet":
        """Rows eligible for training: sparse segments are dropped."""
        return self.subset(~self.sparse)

    def canonical(self) -> "TrainingSet":
        # Storage order must not matter: sort by user, label, then feature values.
        keys = [self.X[:, j] for j in reversed(range(N_FEATURES))] + [self.y, self.users]
        order = np.lexsort(keys)
        return self.subset(order)


@dataclass(eq=False)
class Tree:
    """Flat binary tree.  ``left[i] == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray  # (n_nodes, n_classes) weighted class mass
    leaf_class: np.ndarray  # index into the model's class tuple

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=np.int64)
        active = np.nonzero(self.left[node] >= 0)[0]
        while len(active):
            n = node[active]
            go_left = X[active, self.feature[n]] <= self.threshold[n]
            node[active] = np.where(go_left, self.left[n], self.right[n])
            active = active[self.left[node[active]] >= 0]
        return node

    def predict_index(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_class[self.apply(X)]

    def to_json(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "counts": self.counts.tolist(),
        }

    @classmethod
    def from_arrays(cls, feature, threshold, left, right, counts) -> "Tree":
        counts = np.asarray(counts, dtype=np.float64)
        return cls(
            np.asarray(feature, dtype=np.int64),
            np.asarray(threshold, dtype=np.float64),
            np.asarray(left, dtype=np.int64),
            np.asarray(right, dtype=np.int64),
            counts,
            np.argmax(counts, axis=1) if counts.size else np.zeros(0, np.int64),
        )

    @classmethod
    def from_json(cls, d: dict) -> "Tree":
        return cls.from_arrays(d["feature"], d["threshold"], d["left"], d["right"], d["counts"])

    @property
    def n_nodes(self) -> int:
        return len(self.left)


@dataclass(eq=False)
class ForestModel:
    trees: list[Tree]
    classes: tuple[InteractionKind, ...]  # classes seen in training, in kind order
    class_weights: dict[InteractionKind, float]
    train_seed: int
    n_trees: int = 100
    features_per_split: int = 4
    digest: str = field(default_factory=feature_digest)

    def votes(self, X: np.ndarray) -> np.ndarray:
        """Per-row vote counts over (TYPING, SCROLLING, MKKM)."""
        X = _as_split_dtype(X)
        votes = np.zeros((len(X), len(BASE_KINDS)), dtype=np.int64)
        col = np.array([BASE_KINDS.index(c) for c in self.classes])
        rows = np.arange(len(X))
        for tree in self.trees:
            np.add.at(votes, (rows, col[tree.predict_index(X)]), 1)
        return votes

    def predict(self, X: np.ndarray) -> np.ndarray:
        return votes_to_kind(self.votes(X))

    def structure_equal(self, other: "ForestModel") -> bool:
        if self.classes != other.classes or len(self.trees) != len(other.trees):
            return False
        for a, b in zip(self.trees, other.trees):
            for name in ("feature", "threshold", "left", "right", "counts"):
                if not np.array_equal(getattr(a, name), getattr(b, name)):
                    return False
        return True


def _as_split_dtype(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64).reshape(-1, N_FEATURES)
    # Splits were found on float32 inputs; compare the same representation.
    return X.astype(np.float32).astype(np.float64)


def votes_to_kind(votes: np.ndarray) -> np.ndarray:
    """Argmax with ties resolved toward the earlier class (TYPING < SCROLLING < MKKM)."""
    idx = np.argmax(votes, axis=1)
    return np.array([BASE_KINDS[i] for i in idx], dtype=np.int64)


def class_weights_for(y: np.ndarray) -> dict[InteractionKind, float]:
    present, counts = np.unique(y, return_counts=True)
    total = len(y)
    k = len(present)
    return {InteractionKind(int(c)): total / (k * int(n)) for c, n in zip(present, counts)}


def _fit_tree(X32, y_idx, w_class, n_classes, features_per_split, seed_seq):
    rng = np.random.default_rng(seed_seq)
    n = len(y_idx)
    boot = rng.integers(0, n, size=n)
    counts = np.bincount(boot, minlength=n)
    keep = np.nonzero(counts)[0]
    sw = counts[keep] * w_class[y_idx[keep]]
    clf = DecisionTreeClassifier(
        criterion="gini",
        max_features=features_per_split,
        min_samples_split=2,
        random_state=int(rng.integers(0, 2**31 - 1)),
    )
    clf.fit(X32[keep], y_idx[keep], sample_weight=sw)
    t = clf.tree_
    # Map sklearn's local class indices (present in this bootstrap) to model indices.
    full = np.zeros((t.node_count, n_classes))
    value = t.value[:, 0, :] * t.weighted_n_node_samples[:, None]
    full[:, clf.classes_.astype(int)] = value
    left = t.children_left.astype(np.int64)
    feature = np.where(left >= 0, t.feature, 0)
    threshold = np.where(left >= 0, t.threshold, 0.0)
    return Tree.from_arrays(feature, threshold, left, t.children_right, full)


def train_forest(
    data: TrainingSet,
    seed: int,
    n_trees: int = 100,
    features_per_split: int | None = None,
) -> ForestModel:
    data = data.usable().canonical()
    base = np.isin(data.y, [int(k) for k in BASE_KINDS])
    data = data.subset(base)
    classes = tuple(InteractionKind(int(c)) for c in np.unique(data.y))
    if len(classes) < 2:
        raise InsufficientClasses(f"need at least 2 classes, got {[c.name for c in classes]}")
    if features_per_split is None:
        features_per_split = int(math.floor(math.sqrt(N_FEATURES)))
    weights = class_weights_for(data.y)
    y_idx = np.searchsorted([int(c) for c in classes], data.y)
    w_class = np.array([weights[c] for c in classes])
    X32 = data.X.astype(np.float32)
    seqs = np.random.SeedSequence(seed).spawn(n_trees)
    jobs = n_threads()
    if jobs > 1:
        trees = Parallel(n_jobs=jobs)(
            delayed(_fit_tree)(X32, y_idx, w_class, len(classes), features_per_split, s) for s in seqs
        )
    else:
        trees = [_fit_tree(X32, y_idx, w_class, len(classes), features_per_split, s) for s in seqs]
    return ForestModel(list(trees), classes, weights, seed, n_trees, features_per_split)


def predict3(model: ForestModel, fv: FeatureVector) -> tuple[InteractionKind, tuple[int, int, int]]:
    votes = model.votes(fv.values[None, :])[0]
    return InteractionKind(int(votes_to_kind(votes[None, :])[0])), tuple(int(v) for v in votes)


def leave_one_user_out(data: TrainingSet, seed: int, **kw) -> list[tuple[str, ForestModel]]:
    users = sorted(set(data.users.tolist()))
    if len(users) < 2:
        raise ValueError("leave-one-user-out needs at least two users")
    return [(u, train_forest(data.subset(data.users != u), seed, **kw)) for u in users]


# ---- vote post-classifier ----

def _entropy(counts: np.ndarray) -> float:
    tot = counts.sum()
    if tot <= 0:
        return 0.0
    p = counts[counts > 0] / tot
    return float(-(p * np.log2(p)).sum())


@dataclass(eq=False)
class VoteTreeModel:
    """Decision tree over the 3-vector of forest votes, predicting five classes."""

    feature: list[int]
    threshold: list[float]
    left: list[int]
    right: list[int]
    counts: list[list[int]]  # per node, over ALL_KINDS

    def _leaf(self, node: int) -> InteractionKind:
        c = self.counts[node]
        return ALL_KINDS[int(np.argmax(c))]

    def predict_votes(self, votes: Sequence[int]) -> InteractionKind:
        if len(votes) != 3:
            raise ValueError("vote vector must have exactly 3 entries")
        node = 0
        while self.left[node] >= 0:
            node = self.left[node] if votes[self.feature[node]] <= self.threshold[node] else self.right[node]
        return self._leaf(node)

    def predict_many(self, votes: np.ndarray) -> np.ndarray:
        return np.array([int(self.predict_votes(v)) for v in np.asarray(votes).tolist()], dtype=np.int64)

    def to_json(self) -> dict:
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "counts": self.counts,
        }

    @classmethod
    def from_json(cls, d: dict) -> "VoteTreeModel":
        return cls(d["feature"], d["threshold"], d["left"], d["right"], d["counts"])


def fit_gain_ratio_tree(V: np.ndarray, y: np.ndarray) -> VoteTreeModel:
    """Unpruned C4.5-style tree on continuous attributes.

    Per attribute the binary cut with the best information gain is taken;
    among attributes whose gain reaches the average gain, the one with the
    highest gain ratio wins.
    """
    V = np.asarray(V, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    k = len(ALL_KINDS)
    model = VoteTreeModel([], [], [], [], [])

    def new_node(idx):
        model.feature.append(-1)
        model.threshold.append(0.0)
        model.left.append(-1)
        model.right.append(-1)
        model.counts.append(np.bincount(y[idx], minlength=k).tolist())
        return len(model.left) - 1

    root = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)))]
    while stack:
        node, idx = stack.pop()
        counts = np.bincount(y[idx], minlength=k)
        if len(idx) < 2 or (counts > 0).sum() <= 1:
            continue
        base = _entropy(counts)
        cands = []
        for a in range(V.shape[1]):
            vals = V[idx, a]
            order = np.argsort(vals, kind="stable")
            sv = vals[order]
            sy = y[idx][order]
            onehot = np.zeros((len(sy), k))
            onehot[np.arange(len(sy)), sy] = 1
            cum = np.cumsum(onehot, axis=0)
            cut = np.nonzero(sv[1:] > sv[:-1])[0]  # split after position cut
            if not len(cut):
                continue
            n = len(sy)
            best = None
            for c in cut:
                lc = cum[c]
                rc = counts - lc
                nl = c + 1
                h = (nl * _entropy(lc) + (n - nl) * _entropy(rc)) / n
                gain = base - h
                if best is None or gain > best[0] + 1e-12:
                    best = (gain, c, nl)
            gain, c, nl = best
            if gain <= 1e-12:
                continue
            pl = nl / n
            split_info = -(pl * math.log2(pl) + (1 - pl) * math.log2(1 - pl))
            thr = (sv[c] + sv[c + 1]) / 2.0
            cands.append((gain, gain / split_info, a, thr))
        if not cands:
            continue
        avg = sum(c[0] for c in cands) / len(cands)
        eligible = [c for c in cands if c[0] >= avg - 1e-12]
        gain, ratio, a, thr = max(eligible, key=lambda c: (c[1], -c[2]))
        go_left = V[idx, a] <= thr
        li, ri = idx[go_left], idx[~go_left]
        model.feature[node] = a
        model.threshold[node] = float(thr)
        l_node = new_node(li)
        r_node = new_node(ri)
        model.left[node] = l_node
        model.right[node] = r_node
        stack.append((l_node, li))
        stack.append((r_node, ri))
    return model


def train_vote_tree(forest: ForestModel, data5: TrainingSet) -> VoteTreeModel:
    data5 = data5.usable()
    present = set(np.unique(data5.y).tolist())
    missing = [k.name for k in (InteractionKind.IDLE, InteractionKind.UPRIGHT) if int(k) not in present]
    if missing:
        raise InsufficientClasses(f"vote tree training data lacks {', '.join(missing)}")
    data5 = data5.canonical()
    return fit_gain_ratio_tree(forest.votes(data5.X), data5.y)


def predict5(forest: ForestModel, vote_tree: VoteTreeModel, fv: FeatureVector) -> InteractionKind:
    _, votes = predict3(forest, fv)
    return vote_tree.predict_votes(votes)


def predict5_many(forest: ForestModel, vote_tree: VoteTreeModel, X: np.ndarray) -> np.ndarray:
    return vote_tree.predict_many(forest.votes(X))


# ---- model file ----

def dumps_model(forest: ForestModel, vote_tree: VoteTreeModel | None = None) -> str:
    doc = {
        "format": MODEL_FORMAT,
        "notes": MODEL_NOTES,
        "feature_names": list(FEATURE_NAMES),
        "feature_definitions": FEATURE_DEFINITIONS,
        "feature_digest": forest.digest,
        "classes": [c.token for c in forest.classes],
        "class_weights": {c.token: w for c, w in forest.class_weights.items()},
        "train_seed": forest.train_seed,
        "n_trees": forest.n_trees,
        "features_per_split": forest.features_per_split,
        "trees": [t.to_json() for t in forest.trees],
        "vote_tree": vote_tree.to_json() if vote_tree is not None else None,
    }
    return json.dumps(doc, separators=(",", ":")) + "\n"


def loads_model(text: str) -> tuple[ForestModel, VoteTreeModel | None]:
    doc = json.loads(text)
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"unsupported model format {doc.get('format')!r}")
    if doc["feature_digest"] != feature_digest():
        raise ValueError("model was trained with different feature definitions")
    forest = ForestModel(
        [Tree.from_json(t) for t in doc["trees"]],
        tuple(InteractionKind.from_token(c) for c in doc["classes"]),
        {InteractionKind.from_token(c): float(w) for c, w in doc["class_weights"].items()},
        int(doc["train_seed"]),
        int(doc["n_trees"]),
        int(doc["features_per_split"]),
        doc["feature_digest"],
    )
    vt = VoteTreeModel.from_json(doc["vote_tree"]) if doc.get("vote_tree") else None
    return forest, vt


def save_model(path, forest: ForestModel, vote_tree: VoteTreeModel | None = None) -> None:
    atomic_write_text(path, dumps_model(forest, vote_tree))


def load_model(path) -> tuple[ForestModel, VoteTreeModel | None]:
    return loads_model(Path(path).read_text())

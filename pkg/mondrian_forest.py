#!/usr/bin/env python3
"""
Mondrian Forest - online random forest for classification and regression

Trees are grown from Mondrian processes and extended one point at a time:
a point outside a node's bounding box may introduce a new split above the
node at an exponentially distributed time; otherwise it is routed down and
the boxes are stretched. Leaves keep the indices of their points and are
grown further while they are impure (classification) or spread out enough
(regression). Leaves that stop growing are "paused".

Categorical features are one-hot encoded into the numeric split space;
numeric features are divided by a nominal per-feature scale first.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from errors import DomainError, NotTrainedError, SchemaError

logger = logging.getLogger(__name__)

FORMAT_NAME = "mondrian-forest"
FORMAT_VERSION = 1
DEFAULT_TREES = 25
DEFAULT_DISCOUNT_FACTOR = 10.0


class Task(str, Enum):
    CLASSIFICATION = "classification"
    REGRESSION = "regression"


@dataclass(frozen=True)
class FeatureVector:
    numeric: Tuple[float, ...]
    categorical: Tuple[int, ...] = ()


@dataclass(frozen=True)
class FeatureSchema:
    """Named numeric features (with nominal scales) and categoricals with cardinalities"""
    numeric: Tuple[str, ...]
    categorical: Tuple[Tuple[str, int], ...] = ()
    scales: Tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "numeric", tuple(self.numeric))
        object.__setattr__(self, "categorical", tuple((str(n), int(c)) for n, c in self.categorical))
        scales = tuple(float(s) for s in self.scales) or (1.0,) * len(self.numeric)
        object.__setattr__(self, "scales", scales)
        if len(scales) != len(self.numeric):
            raise SchemaError("one scale per numeric feature is required")
        if any(s <= 0 for s in scales):
            raise SchemaError("feature scales must be positive")
        if any(card < 1 for _, card in self.categorical):
            raise SchemaError("categorical cardinality must be at least 1")
        names = list(self.numeric) + [n for n, _ in self.categorical]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")
        if not names:
            raise SchemaError("schema has no features")

    @property
    def names(self) -> List[str]:
        return list(self.numeric) + [name for name, _ in self.categorical]

    @property
    def dims(self) -> int:
        return len(self.numeric) + sum(card for _, card in self.categorical)

    def dim_owners(self) -> List[str]:
        """Original feature name of every encoded dimension"""
        owners = list(self.numeric)
        for name, card in self.categorical:
            owners.extend([name] * card)
        return owners

    def vector(self, numeric: Mapping[str, float], categorical: Mapping[str, int] = None) -> FeatureVector:
        categorical = categorical or {}
        try:
            return FeatureVector(tuple(float(numeric[n]) for n in self.numeric),
                                 tuple(int(categorical[n]) for n, _ in self.categorical))
        except KeyError as exc:
            raise SchemaError(f"feature {exc.args[0]!r} missing from vector") from None

    def encode(self, x: FeatureVector) -> np.ndarray:
        if len(x.numeric) != len(self.numeric) or len(x.categorical) != len(self.categorical):
            raise SchemaError(f"vector has {len(x.numeric)}+{len(x.categorical)} features, "
                              f"schema expects {len(self.numeric)}+{len(self.categorical)}")
        numeric = np.asarray(x.numeric, dtype=float)
        if not np.all(np.isfinite(numeric)):
            raise SchemaError("numeric features must be finite")
        parts = [numeric / np.asarray(self.scales)]
        for value, (name, card) in zip(x.categorical, self.categorical):
            if not 0 <= value < card:
                raise SchemaError(f"{name}={value} outside cardinality {card}")
            onehot = np.zeros(card)
            onehot[value] = 1.0
            parts.append(onehot)
        return np.concatenate(parts)

    def to_dict(self) -> Dict:
        return {"numeric": list(self.numeric), "categorical": [list(c) for c in self.categorical],
                "scales": list(self.scales)}

    @classmethod
    def from_dict(cls, data: Dict) -> 'FeatureSchema':
        return cls(tuple(data["numeric"]), tuple(tuple(c) for c in data["categorical"]), tuple(data["scales"]))


@dataclass
class MondrianNode:
    lower: np.ndarray
    upper: np.ndarray
    tau: float = math.inf
    parent: Optional[int] = None
    left: Optional[int] = None
    right: Optional[int] = None
    dim: int = -1
    threshold: float = 0.0
    points: List[int] = field(default_factory=list)
    counts: Optional[np.ndarray] = None
    n: int = 0
    total: float = 0.0
    total_sq: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def extension(self, x: np.ndarray) -> float:
        return float(np.maximum(self.lower - x, 0).sum() + np.maximum(x - self.upper, 0).sum())

    def add(self, y) -> None:
        self.n += 1
        if self.counts is not None:
            self.counts[y] += 1
        else:
            self.total += y
            self.total_sq += y * y

    @property
    def mean(self) -> float:
        return self.total / self.n

    @property
    def variance(self) -> float:
        return max(0.0, self.total_sq / self.n - self.mean ** 2)

    def to_dict(self) -> Dict:
        data = {
            "lower": self.lower.tolist(), "upper": self.upper.tolist(),
            "tau": None if math.isinf(self.tau) else self.tau,
            "parent": self.parent, "left": self.left, "right": self.right,
            "dim": self.dim, "threshold": self.threshold, "points": list(self.points), "n": self.n,
        }
        if self.counts is not None:
            data["counts"] = self.counts.tolist()
        else:
            data["total"], data["total_sq"] = self.total, self.total_sq
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> 'MondrianNode':
        counts = data.get("counts")
        return cls(np.asarray(data["lower"], dtype=float), np.asarray(data["upper"], dtype=float),
                   math.inf if data["tau"] is None else data["tau"], data["parent"], data["left"],
                   data["right"], data["dim"], data["threshold"], list(data["points"]),
                   None if counts is None else np.asarray(counts, dtype=float), data["n"],
                   data.get("total", 0.0), data.get("total_sq", 0.0))


class MondrianTree:
    """One Mondrian tree over the forest's shared point store"""

    def __init__(self, forest: 'MondrianForest', rng: np.random.Generator):
        self.forest = forest
        self.rng = rng
        self.nodes: List[MondrianNode] = []
        self.root: Optional[int] = None
        self._tables: Optional[List[np.ndarray]] = None

    # ---------------------------------------------------------------- training

    def _new_node(self, lower, upper, **kwargs) -> int:
        node = MondrianNode(np.array(lower, dtype=float), np.array(upper, dtype=float), **kwargs)
        if self.forest.task is Task.CLASSIFICATION:
            node.counts = np.zeros(len(self.forest.labels))
        self.nodes.append(node)
        return len(self.nodes) - 1

    def _parent_tau(self, node: MondrianNode) -> float:
        return 0.0 if node.parent is None else self.nodes[node.parent].tau

    def _paused(self, node: MondrianNode) -> bool:
        ys = [self.forest._y[i] for i in node.points]
        if self.forest.task is Task.CLASSIFICATION:
            return len(set(ys)) <= 1
        return len(ys) < self.forest.min_samples_split or float(np.ptp(ys)) == 0.0

    def extend(self, i: int) -> None:
        self._tables = None
        x, y = self.forest._x[i], self.forest._y[i]
        if self.root is None:
            self.root = self._new_node(x, x, points=[i])
            self.nodes[self.root].add(y)
            return
        self._extend(self.root, i, x, y)

    def _extend(self, node_id: int, i: int, x: np.ndarray, y) -> None:
        while True:
            node = self.nodes[node_id]
            e_lower = np.maximum(node.lower - x, 0)
            e_upper = np.maximum(x - node.upper, 0)
            rate = float(e_lower.sum() + e_upper.sum())
            parent_tau = self._parent_tau(node)
            split_time = parent_tau + self.rng.exponential(1.0 / rate) if rate > 0 else math.inf
            if split_time < node.tau:
                self._split_above(node_id, i, x, y, split_time, e_lower, e_upper)
                return
            np.minimum(node.lower, x, out=node.lower)
            np.maximum(node.upper, x, out=node.upper)
            node.add(y)
            if node.is_leaf:
                node.points.append(i)
                self._grow(node_id)
                return
            node_id = node.left if x[node.dim] <= node.threshold else node.right

    def _split_above(self, node_id: int, i: int, x: np.ndarray, y, split_time: float,
                     e_lower: np.ndarray, e_upper: np.ndarray) -> None:
        node = self.nodes[node_id]
        extent = e_lower + e_upper
        dim = int(self.rng.choice(len(extent), p=extent / extent.sum()))
        if x[dim] < node.lower[dim]:
            threshold = float(self.rng.uniform(x[dim], node.lower[dim]))
        else:
            threshold = float(self.rng.uniform(node.upper[dim], x[dim]))

        parent_id = self._new_node(np.minimum(node.lower, x), np.maximum(node.upper, x),
                                   tau=split_time, parent=node.parent, dim=dim, threshold=threshold)
        parent = self.nodes[parent_id]
        parent.n = node.n
        if parent.counts is not None:
            parent.counts = node.counts.copy()
        else:
            parent.total, parent.total_sq = node.total, node.total_sq
        parent.add(y)

        leaf_id = self._new_node(x, x, parent=parent_id, points=[i])
        self.nodes[leaf_id].add(y)
        if x[dim] <= threshold:
            parent.left, parent.right = leaf_id, node_id
        else:
            parent.left, parent.right = node_id, leaf_id

        if node.parent is None:
            self.root = parent_id
        else:
            grand = self.nodes[node.parent]
            if grand.left == node_id:
                grand.left = parent_id
            else:
                grand.right = parent_id
        node.parent = parent_id

    def _grow(self, node_id: int) -> None:
        """Sample Mondrian splits below a leaf until its descendants are paused"""
        pending = [node_id]
        while pending:
            current = pending.pop()
            node = self.nodes[current]
            if self._paused(node):
                continue
            extent = node.upper - node.lower
            rate = float(extent.sum())
            if rate <= 0:
                continue
            node.tau = self._parent_tau(node) + self.rng.exponential(1.0 / rate)
            node.dim = int(self.rng.choice(len(extent), p=extent / rate))
            node.threshold = float(self.rng.uniform(node.lower[node.dim], node.upper[node.dim]))
            children = []
            for goes_left in (True, False):
                members = [p for p in node.points
                           if (self.forest._x[p][node.dim] <= node.threshold) == goes_left]
                xs = np.array([self.forest._x[p] for p in members])
                child_id = self._new_node(xs.min(axis=0), xs.max(axis=0), parent=current, points=members)
                for p in members:
                    self.nodes[child_id].add(self.forest._y[p])
                children.append(child_id)
            node.left, node.right = children
            node.points = []
            pending.extend(children)

    def pad_labels(self, n_labels: int) -> None:
        for node in self.nodes:
            if node.counts is not None and len(node.counts) < n_labels:
                node.counts = np.concatenate([node.counts, np.zeros(n_labels - len(node.counts))])
        self._tables = None

    # ---------------------------------------------------------------- prediction

    def leaf_for(self, x: np.ndarray) -> MondrianNode:
        node = self.nodes[self.root]
        while not node.is_leaf:
            node = self.nodes[node.left if x[node.dim] <= node.threshold else node.right]
        return node

    def _smoothing_counts(self) -> List[np.ndarray]:
        """Leaf counts, and for internal nodes the sum of their children's tables min(c, 1)"""
        if self._tables is None:
            tables: List[Optional[np.ndarray]] = [None] * len(self.nodes)
            stack = [(self.root, False)]
            while stack:
                node_id, done = stack.pop()
                node = self.nodes[node_id]
                if node.is_leaf:
                    tables[node_id] = node.counts
                elif done:
                    tables[node_id] = np.minimum(tables[node.left], 1) + np.minimum(tables[node.right], 1)
                else:
                    stack.extend([(node_id, True), (node.left, False), (node.right, False)])
            self._tables = tables
        return self._tables

    def predict_proba(self, x: np.ndarray, gamma: float) -> np.ndarray:
        counts = self._smoothing_counts()
        n_labels = len(self.forest.labels)
        parent_post = np.full(n_labels, 1.0 / n_labels)
        parent_tau = 0.0
        not_split = 1.0
        result = np.zeros(n_labels)
        node_id = self.root
        while True:
            node = self.nodes[node_id]
            c = counts[node_id]
            delta = node.tau - parent_tau
            eta = node.extension(x)
            p_split = 0.0 if eta == 0 else -math.expm1(-delta * eta) if math.isfinite(delta) else 1.0
            if p_split > 0:
                tables = np.minimum(c, 1)
                discount = _expected_discount(eta, gamma, delta)
                result += not_split * p_split * _posterior(tables, tables, discount, parent_post)
            posterior = _posterior(c, np.minimum(c, 1), math.exp(-gamma * delta), parent_post)
            if node.is_leaf:
                result += not_split * (1 - p_split) * posterior
                return result / result.sum()
            not_split *= 1 - p_split
            parent_post, parent_tau = posterior, node.tau
            node_id = node.left if x[node.dim] <= node.threshold else node.right

    # ---------------------------------------------------------------- persistence

    def to_dict(self) -> Dict:
        return {"root": self.root, "nodes": [n.to_dict() for n in self.nodes],
                "rng_state": self.rng.bit_generator.state}

    @classmethod
    def from_dict(cls, forest: 'MondrianForest', data: Dict) -> 'MondrianTree':
        rng = np.random.Generator(np.random.PCG64())
        rng.bit_generator.state = data["rng_state"]
        tree = cls(forest, rng)
        tree.root = data["root"]
        tree.nodes = [MondrianNode.from_dict(n) for n in data["nodes"]]
        return tree


def _posterior(counts: np.ndarray, tables: np.ndarray, discount: float, parent: np.ndarray) -> np.ndarray:
    total = counts.sum()
    if total <= 0:
        return parent
    return (counts - discount * tables + discount * tables.sum() * parent) / total


def _expected_discount(eta: float, gamma: float, delta: float) -> float:
    """Discount expected for a split cut between a node and its parent, truncated at delta"""
    if not math.isfinite(delta):
        return eta / (eta + gamma)
    return eta / (eta + gamma) * math.expm1(-(eta + gamma) * delta) / math.expm1(-eta * delta)


class MondrianForest:
    """
    Ensemble of Mondrian trees sharing one feature schema and task.

    Training points are kept in the forest and referenced by index from the
    leaves. Every tree draws from its own generator, spawned from the forest
    seed, so training is reproducible and a saved forest continues training
    exactly where it stopped. One writer at a time; predictions are read-only.
    """

    def __init__(self, schema: FeatureSchema, task: Task = Task.CLASSIFICATION, n_trees: int = DEFAULT_TREES,
                 seed: int = 0, labels: Sequence[str] = (), discount_factor: float = DEFAULT_DISCOUNT_FACTOR,
                 min_samples_split: int = 2):
        if n_trees < 1:
            raise DomainError("a forest needs at least one tree")
        if min_samples_split < 2:
            raise DomainError("min_samples_split must be at least 2")
        self.schema = schema
        self.task = Task(task)
        self.seed = int(seed)
        self.discount_factor = float(discount_factor)
        self.min_samples_split = int(min_samples_split)
        self.labels: List[str] = []
        self._label_index: Dict[str, int] = {}
        for label in labels:
            self._add_label(label)
        self._x: List[np.ndarray] = []
        self._y: List = []
        self.n_updates = 0
        rngs = [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(self.seed).spawn(n_trees)]
        self.trees = [MondrianTree(self, rng) for rng in rngs]

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def trained(self) -> bool:
        return bool(self._x)

    @property
    def gamma(self) -> float:
        return self.discount_factor * self.schema.dims

    def _add_label(self, label: str) -> int:
        if not isinstance(label, str):
            raise SchemaError(f"class labels must be strings, got {label!r}")
        if label not in self._label_index:
            self._label_index[label] = len(self.labels)
            self.labels.append(label)
        return self._label_index[label]

    def _check_trained(self) -> None:
        if not self.trained:
            raise NotTrainedError("forest has no training points")

    def update(self, x: FeatureVector, y: Union[str, float]) -> 'MondrianForest':
        """Extend every tree with one labelled point"""
        encoded = self.schema.encode(x)
        if self.task is Task.CLASSIFICATION:
            before = len(self.labels)
            target = self._add_label(y)
            if len(self.labels) > before:
                for tree in self.trees:
                    tree.pad_labels(len(self.labels))
        else:
            target = float(y)
            if not math.isfinite(target):
                raise DomainError("regression target must be finite")
        self._x.append(encoded)
        self._y.append(target)
        index = len(self._x) - 1
        for tree in self.trees:
            tree.extend(index)
        self.n_updates += 1
        return self

    def update_many(self, xs: Sequence[FeatureVector], ys: Sequence) -> 'MondrianForest':
        if len(xs) != len(ys):
            raise DomainError("features and targets differ in length")
        for x, y in zip(xs, ys):
            self.update(x, y)
        return self

    def predict_proba(self, x: FeatureVector) -> Dict[str, float]:
        """Average of the trees' smoothed class posteriors"""
        if self.task is not Task.CLASSIFICATION:
            raise DomainError("class probabilities need a classification forest")
        self._check_trained()
        encoded = self.schema.encode(x)
        probs = np.mean([tree.predict_proba(encoded, self.gamma) for tree in self.trees], axis=0)
        probs = probs / probs.sum()
        return {label: float(p) for label, p in zip(self.labels, probs)}

    def predict_regression(self, x: FeatureVector) -> Tuple[float, float]:
        """Mean of the leaf means and the variance of the leaf mixture"""
        if self.task is not Task.REGRESSION:
            raise DomainError("regression prediction needs a regression forest")
        self._check_trained()
        encoded = self.schema.encode(x)
        leaves = [tree.leaf_for(encoded) for tree in self.trees]
        means = np.array([leaf.mean for leaf in leaves])
        second = np.array([leaf.variance + leaf.mean ** 2 for leaf in leaves])
        mean = float(means.mean())
        return mean, max(0.0, float(second.mean() - mean * mean))

    def predict(self, x: FeatureVector) -> Union[str, float]:
        if self.task is Task.REGRESSION:
            return self.predict_regression(x)[0]
        probs = self.predict_proba(x)
        return max(self.labels, key=lambda label: (probs[label], -self._label_index[label]))

    def feature_importance(self) -> Dict[str, float]:
        """
        Mean decrease in impurity (Gini or variance), weighted by node sample
        counts, summed over encoded dimensions back to the original features.
        """
        self._check_trained()
        owners = self.schema.dim_owners()
        scores = dict.fromkeys(self.schema.names, 0.0)
        for tree in self.trees:
            for node in tree.nodes:
                if node.is_leaf:
                    continue
                left, right = tree.nodes[node.left], tree.nodes[node.right]
                decrease = (node.n * self._impurity(node) - left.n * self._impurity(left)
                            - right.n * self._impurity(right))
                scores[owners[node.dim]] += max(decrease, 0.0)
        total = sum(scores.values())
        if total <= 0:
            return {name: 1.0 / len(scores) for name in scores}
        return {name: value / total for name, value in scores.items()}

    def _impurity(self, node: MondrianNode) -> float:
        if node.n == 0:
            return 0.0
        if node.counts is not None:
            p = node.counts / node.n
            return float(1.0 - (p * p).sum())
        return node.variance

    # ---------------------------------------------------------------- persistence

    def to_dict(self) -> Dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "task": self.task.value,
            "schema": self.schema.to_dict(),
            "seed": self.seed,
            "discount_factor": self.discount_factor,
            "min_samples_split": self.min_samples_split,
            "labels": list(self.labels),
            "n_updates": self.n_updates,
            "x": [row.tolist() for row in self._x],
            "y": list(self._y),
            "trees": [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'MondrianForest':
        if data.get("format") != FORMAT_NAME:
            raise SchemaError("not a serialized Mondrian forest")
        if data.get("version") != FORMAT_VERSION:
            raise SchemaError(f"unsupported forest version {data.get('version')}")
        forest = cls(FeatureSchema.from_dict(data["schema"]), Task(data["task"]), len(data["trees"]),
                     data["seed"], data["labels"], data["discount_factor"], data["min_samples_split"])
        forest.n_updates = data["n_updates"]
        forest._x = [np.asarray(row, dtype=float) for row in data["x"]]
        forest._y = [int(y) if forest.task is Task.CLASSIFICATION else float(y) for y in data["y"]]
        forest.trees = [MondrianTree.from_dict(forest, tree) for tree in data["trees"]]
        return forest


def save_forest(forest: MondrianForest, path: Union[str, Path], header: Mapping[str, object] = None) -> None:
    data = dict(header or {})
    data.update(forest.to_dict())
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, sort_keys=True)
    logger.debug("Saved %s forest with %d points to %s", forest.task.value, len(forest._x), path)


def load_forest(path: Union[str, Path]) -> MondrianForest:
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: {exc}") from exc
    return MondrianForest.from_dict(data)


def forest_update(forest: MondrianForest, x: FeatureVector, y: Union[str, float]) -> MondrianForest:
    return forest.update(x, y)


def forest_predict(forest: MondrianForest, x: FeatureVector):
    if forest.task is Task.CLASSIFICATION:
        return forest.predict_proba(x)
    return forest.predict_regression(x)


def feature_importance(forest: MondrianForest) -> Dict[str, float]:
    return forest.feature_importance()

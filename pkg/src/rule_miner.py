"""CART decision trees over decision-point instances, rendered as rules."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, NamedTuple, Optional, Sequence

import numpy as np
import numpy.typing as npt

# Gains closer than this are ties.
TIE_TOLERANCE = 1e-12


class TrainingInstance(NamedTuple):
    """Features collected up to a decision and the class that was taken."""

    features: dict[str, float]
    label: str
    seq: int


@dataclass(frozen=True)
class TreeConfig:
    """Growth limits for fit_tree."""

    max_depth: int = 8
    min_leaf: int = 5
    min_gain: float = 1e-7


class Split(NamedTuple):
    """A candidate split: `attribute <= threshold` goes left."""

    attribute: str
    threshold: float
    gain: float


@dataclass(frozen=True)
class TreeNode:
    """
    Node of a binary CART tree.

    Every node keeps the class counts of the training instances that
    reached it; internal nodes also hold the split and both children.
    """

    counts: tuple[int, ...]
    attribute: Optional[str] = None
    threshold: Optional[float] = None
    left: Optional[TreeNode] = None
    right: Optional[TreeNode] = None

    @property
    def is_leaf(self) -> bool:
        """True for nodes without a split."""
        return self.attribute is None

    @property
    def n(self) -> int:
        """Number of training instances that reached the node."""
        return sum(self.counts)

    def majority(self) -> int:
        """Index of the majority class; ties go to the earlier class."""
        return int(np.argmax(self.counts))

    def route(self, features: Mapping[str, float]) -> TreeNode:
        """The child a feature map goes to at this (internal) node."""
        assert self.left is not None and self.right is not None
        assert self.attribute is not None and self.threshold is not None
        value = features.get(self.attribute)
        if value is None:
            # missing values follow the larger child
            return self.left if self.left.n >= self.right.n else self.right
        return self.left if value <= self.threshold else self.right


@dataclass(frozen=True)
class DecisionTree:
    """A fitted tree, its class order and the size of its training set."""

    root: TreeNode
    classes: tuple[str, ...]
    trained_on: int


def _class_index(instances: Sequence[TrainingInstance],
                 classes: Sequence[str]) -> npt.NDArray[np.int64]:
    index = {c: i for i, c in enumerate(classes)}
    return np.array([index[inst.label] for inst in instances],
                    dtype=np.int64)


def _gini(counts: npt.NDArray[np.float64],
          n: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    return 1.0 - ((counts / n[..., None]) ** 2).sum(axis=-1)


def _best_split_on(values: npt.NDArray[np.float64],
                   labels: npt.NDArray[np.int64],
                   n_classes: int, n_node: int,
                   min_leaf: int) -> Optional[tuple[float, float]]:
    """Best (threshold, gain) for one attribute, or None."""
    n = len(values)
    order = np.argsort(values, kind="stable")
    values, labels = values[order], labels[order]

    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), labels] = 1.0
    total = onehot.sum(axis=0)
    left = np.cumsum(onehot, axis=0)[:-1]
    right = total - left
    n_left = np.arange(1, n, dtype=np.float64)
    n_right = n - n_left

    valid = ((values[:-1] < values[1:])
             & (n_left >= min_leaf) & (n_right >= min_leaf))
    if not valid.any():
        return None

    parent = _gini(total, np.array(float(n)))
    children = (n_left * _gini(left, n_left)
                + n_right * _gini(right, n_right)) / n
    # instances lacking the attribute take no part; scale by the share
    # that has it
    gains = (parent - children) * (n / n_node)
    gains[~valid] = -np.inf

    best = gains.max()
    i = int(np.flatnonzero(gains >= best - TIE_TOLERANCE)[0])
    threshold = (values[i] + values[i + 1]) / 2
    return float(threshold), float(gains[i])


def best_split(instances: Sequence[TrainingInstance],
               min_leaf: int = 1,
               classes: Optional[Sequence[str]] = None) -> Optional[Split]:
    """
    Find the split with the largest decrease in Gini impurity.

    Thresholds are midpoints between consecutive distinct values. Ties
    go to the lexicographically smaller attribute, then the smaller
    threshold. Returns None when no split has positive gain.
    """
    if len(instances) < 2:
        return None
    if classes is None:
        classes = sorted({inst.label for inst in instances})
    if len({inst.label for inst in instances}) < 2:
        return None

    attributes = sorted({a for inst in instances for a in inst.features})
    best: Optional[Split] = None
    for attribute in attributes:
        present = [inst for inst in instances if attribute in inst.features]
        if len(present) < 2:
            continue
        values = np.array([inst.features[attribute] for inst in present],
                          dtype=np.float64)
        candidate = _best_split_on(values, _class_index(present, classes),
                                   len(classes), len(instances), min_leaf)
        if candidate is None:
            continue
        threshold, gain = candidate
        if gain <= TIE_TOLERANCE:
            continue
        if best is None or gain > best.gain + TIE_TOLERANCE:
            best = Split(attribute, threshold, gain)
    return best


def _counts(instances: Sequence[TrainingInstance],
            classes: Sequence[str]) -> tuple[int, ...]:
    idx = _class_index(instances, classes)
    return tuple(int(c) for c in np.bincount(idx, minlength=len(classes)))


def _grow(instances: Sequence[TrainingInstance], classes: Sequence[str],
          config: TreeConfig, depth: int) -> TreeNode:
    counts = _counts(instances, classes)
    n = len(instances)
    if (depth >= config.max_depth or n < 2 * config.min_leaf
            or max(counts) == n):
        return TreeNode(counts)

    split = best_split(instances, config.min_leaf, classes)
    if split is None or split.gain < config.min_gain:
        return TreeNode(counts)

    left: list[TrainingInstance] = []
    right: list[TrainingInstance] = []
    missing: list[TrainingInstance] = []
    for inst in instances:
        value = inst.features.get(split.attribute)
        if value is None:
            missing.append(inst)
        elif value <= split.threshold:
            left.append(inst)
        else:
            right.append(inst)
    if len(left) >= len(right):
        left.extend(missing)
    else:
        right.extend(missing)

    return TreeNode(
        counts, split.attribute, split.threshold,
        _grow(left, classes, config, depth + 1),
        _grow(right, classes, config, depth + 1)
    )


def fit_tree(instances: Sequence[TrainingInstance],
             config: TreeConfig = TreeConfig()) -> DecisionTree:
    """Grow a CART tree; a single class gives a single leaf."""
    if not instances:
        raise ValueError("cannot fit a tree on zero instances")
    classes = tuple(sorted({inst.label for inst in instances}))
    root = _grow(instances, classes, config, 0)
    return DecisionTree(root, classes, len(instances))


def leaf_for(tree: DecisionTree, features: Mapping[str, float]) -> TreeNode:
    """The leaf a feature map ends up in."""
    node = tree.root
    while not node.is_leaf:
        node = node.route(features)
    return node


def predict(tree: DecisionTree,
            features: Mapping[str, float]) -> tuple[str, float]:
    """Predicted class and the majority fraction of its leaf."""
    leaf = leaf_for(tree, features)
    i = leaf.majority()
    n = leaf.n
    return tree.classes[i], (leaf.counts[i] / n if n else 0.0)


class Condition(NamedTuple):
    """
    `attribute op value` with op one of '<=' and '>'.

    `missing` tells whether a feature map without the attribute satisfies
    the condition, i.e. whether the tree routes missing values this way.
    """

    attribute: str
    op: str
    value: float
    missing: bool = False

    def holds(self, features: Mapping[str, float]) -> bool:
        """Whether a feature map satisfies the condition."""
        x = features.get(self.attribute)
        if x is None:
            return self.missing
        return x <= self.value if self.op == "<=" else x > self.value

    def __str__(self) -> str:
        text = f"{self.attribute} {self.op} {self.value:.2f}"
        return f"({text} or missing)" if self.missing else text


class Rule(NamedTuple):
    """Conjunction of conditions implying a class."""

    conditions: tuple[Condition, ...]
    label: str

    def matches(self, features: Mapping[str, float]) -> bool:
        """Whether every condition holds."""
        return all(c.holds(features) for c in self.conditions)

    def __str__(self) -> str:
        if not self.conditions:
            return f"IF true THEN {self.label}"
        body = " AND ".join(str(c) for c in self.conditions)
        return f"IF {body} THEN {self.label}"


@dataclass(frozen=True)
class RuleSet:
    """The rules of one tree, one per leaf, in left-to-right leaf order."""

    rules: tuple[Rule, ...]

    def by_class(self) -> dict[str, list[Rule]]:
        """Rules grouped per class (a disjunction per class)."""
        grouped: dict[str, list[Rule]] = {}
        for rule in self.rules:
            grouped.setdefault(rule.label, []).append(rule)
        return grouped

    def classify(self, features: Mapping[str, float]) -> Optional[str]:
        """Class of the first matching rule; rules never overlap."""
        for rule in self.rules:
            if rule.matches(features):
                return rule.label
        return None

    def attributes(self) -> set[str]:
        """Attributes the rules test."""
        return {c.attribute for r in self.rules for c in r.conditions}

    def text(self) -> str:
        """One rule per line."""
        return "\n".join(str(r) for r in self.rules)


class Bounds(NamedTuple):
    """Bounds of one attribute along a path."""

    low: Optional[float]
    high: Optional[float]
    missing: bool  # absent values follow the path


def _conditions(bounds: dict[str, Bounds]) -> tuple[Condition, ...]:
    conds: list[Condition] = []
    for attribute in sorted(bounds):
        low, high, missing = bounds[attribute]
        if low is not None:
            conds.append(Condition(attribute, ">", low, missing))
        if high is not None:
            conds.append(Condition(attribute, "<=", high, missing))
    return tuple(conds)


def extract_rules(tree: DecisionTree) -> RuleSet:
    """
    Turn every root-to-leaf path into a rule.

    Conditions on the same attribute are merged into the tightest lower
    and upper bound, so a path reads `x > a AND x <= b`. A condition is
    marked `or missing` when every split on its attribute along the path
    sends missing values the path's way, so the rules classify partial
    feature maps exactly as predict does.
    """
    rules: list[Rule] = []

    def walk(node: TreeNode, bounds: dict[str, Bounds]) -> None:
        if node.is_leaf:
            rules.append(
                Rule(_conditions(bounds), tree.classes[node.majority()]))
            return
        assert node.attribute is not None and node.threshold is not None
        assert node.left is not None and node.right is not None
        low, high, missing = bounds.get(node.attribute,
                                        Bounds(None, None, True))
        t = node.threshold
        missing_left = node.left.n >= node.right.n

        left = dict(bounds)
        left[node.attribute] = Bounds(
            low, t if high is None else min(high, t),
            missing and missing_left)
        walk(node.left, left)

        right = dict(bounds)
        right[node.attribute] = Bounds(
            t if low is None else max(low, t), high,
            missing and not missing_left)
        walk(node.right, right)

    walk(tree.root, {})
    return RuleSet(tuple(rules))


def tree_to_dict(tree: DecisionTree) -> dict[str, Any]:
    """JSON-ready form of a tree, for debugging."""
    def node_dict(node: TreeNode) -> dict[str, Any]:
        if node.is_leaf:
            return {"counts": list(node.counts)}
        assert node.left is not None and node.right is not None
        return {
            "attribute": node.attribute,
            "threshold": node.threshold,
            "counts": list(node.counts),
            "left": node_dict(node.left),
            "right": node_dict(node.right),
        }
    return {
        "classes": list(tree.classes),
        "trained_on": tree.trained_on,
        "root": node_dict(tree.root),
    }

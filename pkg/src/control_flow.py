"""Heuristics-net mining and decision-point discovery."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, TextIO

from stream_dfg import WeightedEdge

DEFAULT_DEP_THRESHOLD = 0.9


class DependencyEdge(NamedTuple):
    """Edge a -> b of the heuristics net with its dependency value."""

    source: str
    target: str
    dependency: float


@dataclass(frozen=True)
class HeuristicsNet:
    """Dependency graph mined from a directly-follows snapshot."""

    nodes: frozenset[str]
    edges: tuple[DependencyEdge, ...]
    structural_hash: str

    def successors(self, activity: str) -> list[str]:
        """Direct successors of an activity, sorted."""
        return sorted(e.target for e in self.edges if e.source == activity)


class DecisionPoint(NamedTuple):
    """A split: the activity before the choice and the possible next ones."""

    id: str
    classes: frozenset[str]

    def __str__(self) -> str:
        return f"{self.id} -> {{{', '.join(sorted(self.classes))}}}"


@dataclass
class StructuralChange:
    """Difference between two sets of decision points, matched by id."""

    added_points: set[DecisionPoint] = field(default_factory=set)
    removed_points: set[DecisionPoint] = field(default_factory=set)
    class_changed_points: set[
        tuple[DecisionPoint, frozenset[str], frozenset[str]]
    ] = field(default_factory=set)

    def __bool__(self) -> bool:
        return bool(self.added_points or self.removed_points
                    or self.class_changed_points)


def structural_hash(nodes: Iterable[str],
                    edges: Iterable[DependencyEdge]) -> str:
    """Digest of the sorted node and edge sets."""
    h = hashlib.sha256()
    for node in sorted(nodes):
        h.update(b"n\0" + node.encode("utf-8") + b"\0")
    for a, b, _ in sorted(edges):
        h.update(b"e\0" + a.encode("utf-8") + b"\0"
                 + b.encode("utf-8") + b"\0")
    return h.hexdigest()


def dependency(ab: int, ba: int) -> float:
    """Heuristics-miner dependency of a => b from the two directed counts."""
    return (ab - ba) / (ab + ba + 1)


def loop_dependency(aa: int) -> float:
    """Dependency of a self loop a => a."""
    return aa / (aa + 1)


def mine_heuristics_net(snapshot: list[WeightedEdge],
                        dep_threshold: float = DEFAULT_DEP_THRESHOLD
                        ) -> HeuristicsNet:
    """
    Keep the directly-follows edges whose dependency reaches the threshold.

    Nodes are the activities incident to a kept edge; an empty snapshot
    gives an empty net.
    """
    counts = {(e.source, e.target): e.count for e in snapshot}
    edges = []
    for (a, b), ab in sorted(counts.items()):
        if a == b:
            dep = loop_dependency(ab)
        else:
            dep = dependency(ab, counts.get((b, a), 0))
        if dep >= dep_threshold:
            edges.append(DependencyEdge(a, b, dep))
    nodes = frozenset(n for a, b, _ in edges for n in (a, b))
    return HeuristicsNet(nodes, tuple(edges), structural_hash(nodes, edges))


def discover_decision_points(net: HeuristicsNet) -> set[DecisionPoint]:
    """One decision point per node with two or more outgoing edges."""
    successors: dict[str, set[str]] = {}
    for a, b, _ in net.edges:
        successors.setdefault(a, set()).add(b)
    return {
        DecisionPoint(a, frozenset(bs))
        for a, bs in successors.items() if len(bs) >= 2
    }


def diff(old: set[DecisionPoint],
         new: set[DecisionPoint]) -> StructuralChange:
    """Compare two decision-point sets by point id."""
    old_by_id = {p.id: p for p in old}
    new_by_id = {p.id: p for p in new}
    change = StructuralChange()
    for pid, point in new_by_id.items():
        before = old_by_id.get(pid)
        if before is None:
            change.added_points.add(point)
        elif before.classes != point.classes:
            change.class_changed_points.add(
                (point, before.classes, point.classes))
    for pid, point in old_by_id.items():
        if pid not in new_by_id:
            change.removed_points.add(point)
    return change


def _dot_id(name: str) -> str:
    return '"' + name.replace('\\', '\\\\').replace('"', '\\"') + '"'


def write_dot(net: HeuristicsNet, out: TextIO) -> None:
    """Write the net as a Graphviz digraph with dependency labels."""
    print("digraph heuristics_net {", file=out)
    for node in sorted(net.nodes):
        print(f"  {_dot_id(node)};", file=out)
    for a, b, dep in net.edges:
        print(f"  {_dot_id(a)} -> {_dot_id(b)} [label=\"{dep:.3f}\"];",
              file=out)
    print("}", file=out)

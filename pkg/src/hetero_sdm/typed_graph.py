"""Heterogeneous graph container: named node sets and directed, typed edge sets.

Graphs are immutable after construction. The builder functions return new
graphs and never mutate their inputs, so a constructed graph can be shared
freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from .errors import (
    DuplicateEdgeError,
    DuplicateNameError,
    IndexOutOfBoundsError,
    ShapeMismatchError,
    UnknownNodeSetError,
)

# Canonical set names. These double as join keys for parameter roles, so
# they are fixed constants rather than caller-chosen strings.
LOCATION = "location"
SPECIES = "species"
DET_L2S = "det_l2s"
DET_S2L = "det_s2l"
NONDET_L2S = "nondet_l2s"
NONDET_S2L = "nondet_s2l"


def _frozen(a: np.ndarray, dtype) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class NodeSet:
    """A named collection of `count` nodes with a dense feature matrix."""

    name: str
    count: int
    features: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise ShapeMismatchError(
                f"node set {self.name!r}: features must be 2-D, got shape {feats.shape}"
            )
        if self.count < 0:
            raise ShapeMismatchError(f"node set {self.name!r}: negative count {self.count}")
        if feats.shape[0] != self.count:
            raise ShapeMismatchError(
                f"node set {self.name!r}: {self.count} nodes but {feats.shape[0]} feature rows"
            )
        object.__setattr__(self, "features", _frozen(feats, np.float64))

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class EdgeSet:
    """Directed edges from one node set to another, with per-edge features.

    Duplicate (sender, receiver) pairs are rejected: an edge encodes that a
    relation exists, not how many times it was observed.
    """

    name: str
    sender_set: str
    receiver_set: str
    senders: np.ndarray
    receivers: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        snd = _frozen(self.senders, np.int64)
        rcv = _frozen(self.receivers, np.int64)
        feats = np.asarray(self.features, dtype=np.float64)
        if snd.ndim != 1 or rcv.ndim != 1:
            raise ShapeMismatchError(f"edge set {self.name!r}: index lists must be 1-D")
        if snd.shape[0] != rcv.shape[0]:
            raise ShapeMismatchError(
                f"edge set {self.name!r}: {snd.shape[0]} senders vs {rcv.shape[0]} receivers"
            )
        if feats.ndim != 2 or feats.shape[0] != snd.shape[0]:
            raise ShapeMismatchError(
                f"edge set {self.name!r}: feature matrix shape {feats.shape} "
                f"does not match {snd.shape[0]} edges"
            )
        if snd.shape[0] > 0:
            pairs = np.stack([snd, rcv], axis=1)
            if np.unique(pairs, axis=0).shape[0] != pairs.shape[0]:
                raise DuplicateEdgeError(
                    f"edge set {self.name!r} contains duplicate (sender, receiver) pairs"
                )
        object.__setattr__(self, "senders", snd)
        object.__setattr__(self, "receivers", rcv)
        object.__setattr__(self, "features", _frozen(feats, np.float64))

    @property
    def count(self) -> int:
        return self.senders.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class TypedGraph:
    """Immutable map of node sets and edge sets."""

    node_sets: Mapping[str, NodeSet] = field(default_factory=dict)
    edge_sets: Mapping[str, EdgeSet] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "node_sets", MappingProxyType(dict(self.node_sets)))
        object.__setattr__(self, "edge_sets", MappingProxyType(dict(self.edge_sets)))
        for es in self.edge_sets.values():
            _validate_edge_set_against(self.node_sets, es)


def _validate_edge_set_against(node_sets: Mapping[str, NodeSet], es: EdgeSet) -> None:
    for role, set_name in (("sender", es.sender_set), ("receiver", es.receiver_set)):
        if set_name not in node_sets:
            raise UnknownNodeSetError(
                f"edge set {es.name!r}: {role} set {set_name!r} is not a known node set"
            )
    n_snd = node_sets[es.sender_set].count
    n_rcv = node_sets[es.receiver_set].count
    if es.count > 0:
        if es.senders.min() < 0 or es.senders.max() >= n_snd:
            raise IndexOutOfBoundsError(
                f"edge set {es.name!r}: sender index outside [0, {n_snd})"
            )
        if es.receivers.min() < 0 or es.receivers.max() >= n_rcv:
            raise IndexOutOfBoundsError(
                f"edge set {es.name!r}: receiver index outside [0, {n_rcv})"
            )


def add_node_set(graph: TypedGraph, node_set: NodeSet) -> TypedGraph:
    """Return a new graph with `node_set` registered under its name."""
    if node_set.name in graph.node_sets:
        raise DuplicateNameError(f"node set {node_set.name!r} already present")
    sets = dict(graph.node_sets)
    sets[node_set.name] = node_set
    return TypedGraph(node_sets=sets, edge_sets=graph.edge_sets)


def add_edge_set(graph: TypedGraph, edge_set: EdgeSet) -> TypedGraph:
    """Return a new graph with `edge_set` registered.

    The reverse direction is never added implicitly; callers that want
    bidirectional message passing register both sets.
    """
    if edge_set.name in graph.edge_sets:
        raise DuplicateNameError(f"edge set {edge_set.name!r} already present")
    _validate_edge_set_against(graph.node_sets, edge_set)
    sets = dict(graph.edge_sets)
    sets[edge_set.name] = edge_set
    return TypedGraph(node_sets=graph.node_sets, edge_sets=sets)


def replace_edge_set(graph: TypedGraph, edge_set: EdgeSet) -> TypedGraph:
    """Like add_edge_set but overwrites an existing set of the same name."""
    _validate_edge_set_against(graph.node_sets, edge_set)
    sets = dict(graph.edge_sets)
    sets[edge_set.name] = edge_set
    return TypedGraph(node_sets=graph.node_sets, edge_sets=sets)


def reverse_edge_set(edge_set: EdgeSet, new_name: str) -> EdgeSet:
    """Swap direction: senders become receivers and vice versa."""
    return EdgeSet(
        name=new_name,
        sender_set=edge_set.receiver_set,
        receiver_set=edge_set.sender_set,
        senders=edge_set.receivers,
        receivers=edge_set.senders,
        features=edge_set.features,
    )

"""Encode / process / decode heterogeneous Interaction Network.

The model embeds location nodes, species nodes, and every active edge set
into a shared latent space, runs a configurable number of message-passing
steps, and scores (location, species) pairs with a dot product.

Within one step all updates are simultaneous: every right-hand side reads
the latents from before the step, and results land via residual addition.
Node sets with no incoming active edges (locations under one-way message
passing, or appended test locations with no edges at all) go through the
identical code path; their aggregates are simply absent or zero.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import typed_graph as tg
from .autodiff_nn import (
    ACTIVATIONS,
    MlpParams,
    MlpSpec,
    Tensor,
    mlp_apply,
    mlp_init,
    t_add,
    t_concat,
    t_const,
    t_rowwise_dot,
    t_segment_reduce,
    t_take_rows,
)
from .errors import (
    IndexOutOfBoundsError,
    MissingEdgeSetError,
    ShapeMismatchError,
    UnknownNodeSetError,
)

DIRECTIONS = ("one_way", "bidirectional")
AGGREGATIONS = ("segment_sum", "segment_mean")


@dataclass(frozen=True)
class ModelConfig:
    latent_dim: int
    num_hidden_layers: int
    num_message_passing_steps: int
    direction: str = "one_way"
    include_negative_edges: bool = False
    aggregation: str = "segment_sum"
    activation: str = "relu"

    def __post_init__(self):
        if self.latent_dim <= 0 or self.num_hidden_layers <= 0:
            raise ValueError("latent_dim and num_hidden_layers must be positive")
        if self.num_message_passing_steps < 1:
            raise ValueError("at least one message passing step is required")
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class ParamStore:
    """All MLP weights, keyed by role (embedder/processor per set and step)."""

    roles: dict = field(default_factory=dict)


@dataclass
class LatentGraph:
    """Per-set latent matrices; values are ndarrays (or Tensors internally)."""

    nodes: dict
    edges: dict


NODE_SET_NAMES = (tg.LOCATION, tg.SPECIES)


def active_edge_sets(config: ModelConfig) -> tuple[str, ...]:
    """Edge sets the config message-passes over, in declaration order."""
    sets = [tg.DET_L2S]
    if config.direction == "bidirectional":
        sets.append(tg.DET_S2L)
    if config.include_negative_edges:
        sets.append(tg.NONDET_L2S)
        if config.direction == "bidirectional":
            sets.append(tg.NONDET_S2L)
    return tuple(sets)


_EDGE_RECEIVER = {
    tg.DET_L2S: tg.SPECIES,
    tg.NONDET_L2S: tg.SPECIES,
    tg.DET_S2L: tg.LOCATION,
    tg.NONDET_S2L: tg.LOCATION,
}


def incoming_edge_sets(config: ModelConfig, node_set: str) -> tuple[str, ...]:
    return tuple(e for e in active_edge_sets(config) if _EDGE_RECEIVER[e] == node_set)


def required_roles(config: ModelConfig) -> tuple[str, ...]:
    roles = [f"embed/node/{n}" for n in NODE_SET_NAMES]
    roles += [f"embed/edge/{e}" for e in active_edge_sets(config)]
    for step in range(config.num_message_passing_steps):
        roles += [f"proc/{step}/edge/{e}" for e in active_edge_sets(config)]
        roles += [f"proc/{step}/node/{n}" for n in NODE_SET_NAMES]
    return tuple(roles)


def _role_seed(seed: int, role: str) -> int:
    digest = hashlib.sha256(f"{seed}/{role}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def init_param_store(graph: tg.TypedGraph, config: ModelConfig, seed: int) -> ParamStore:
    """Fresh parameters for every role the config requires.

    Edge feature width defaults to 1 for edge sets absent from `graph`
    (non-detection sets are built later, during training, with constant
    unit features).
    """
    d = config.latent_dim

    def spec(input_dim):
        return MlpSpec(
            input_dim=input_dim,
            hidden_dim=d,
            num_hidden_layers=config.num_hidden_layers,
            output_dim=d,
            activation=config.activation,
        )

    roles = {}
    for name in NODE_SET_NAMES:
        if name not in graph.node_sets:
            raise UnknownNodeSetError(f"graph lacks node set {name!r}")
        roles[f"embed/node/{name}"] = spec(graph.node_sets[name].feature_dim)
    for es_name in active_edge_sets(config):
        width = graph.edge_sets[es_name].feature_dim if es_name in graph.edge_sets else 1
        roles[f"embed/edge/{es_name}"] = spec(max(width, 1))
    for step in range(config.num_message_passing_steps):
        for es_name in active_edge_sets(config):
            roles[f"proc/{step}/edge/{es_name}"] = spec(3 * d)
        for name in NODE_SET_NAMES:
            n_in = len(incoming_edge_sets(config, name))
            roles[f"proc/{step}/node/{name}"] = spec(d * (1 + n_in))

    return ParamStore(
        roles={
            role: mlp_init(s, _role_seed(seed, role)) for role, s in roles.items()
        }
    )


def validate_param_store(store: ParamStore, config: ModelConfig) -> None:
    want = set(required_roles(config))
    have = set(store.roles)
    if want != have:
        missing = sorted(want - have)
        extra = sorted(have - want)
        raise ShapeMismatchError(
            f"parameter roles disagree with config (missing={missing}, extra={extra})"
        )
    d = config.latent_dim
    for role, params in store.roles.items():
        out = params.weights[-1]
        out_dim = (out.data if isinstance(out, Tensor) else out).shape[1]
        if out_dim != d:
            raise ShapeMismatchError(
                f"role {role!r} outputs width {out_dim}, expected latent {d}"
            )


# ---------------------------------------------------------------------------
# Forward passes (tape-based; public wrappers unwrap to ndarrays)
# ---------------------------------------------------------------------------


def _wrap_latent(latent: LatentGraph) -> LatentGraph:
    as_t = lambda v: v if isinstance(v, Tensor) else t_const(v)
    return LatentGraph(
        nodes={k: as_t(v) for k, v in latent.nodes.items()},
        edges={k: as_t(v) for k, v in latent.edges.items()},
    )


def _unwrap_latent(latent: LatentGraph) -> LatentGraph:
    return LatentGraph(
        nodes={k: v.data for k, v in latent.nodes.items()},
        edges={k: v.data for k, v in latent.edges.items()},
    )


def _encode(graph: tg.TypedGraph, roles: dict, config: ModelConfig) -> LatentGraph:
    nodes = {
        name: mlp_apply(roles[f"embed/node/{name}"], t_const(graph.node_sets[name].features))
        for name in NODE_SET_NAMES
    }
    edges = {}
    for es_name in active_edge_sets(config):
        if es_name not in graph.edge_sets:
            raise MissingEdgeSetError(
                f"model config requires edge set {es_name!r}, absent from graph"
            )
        edges[es_name] = mlp_apply(
            roles[f"embed/edge/{es_name}"], t_const(graph.edge_sets[es_name].features)
        )
    return LatentGraph(nodes=nodes, edges=edges)


def _process_step(
    latent: LatentGraph, graph: tg.TypedGraph, roles: dict, config: ModelConfig, step: int
) -> LatentGraph:
    mode = "sum" if config.aggregation == "segment_sum" else "mean"
    new_edges = {}
    for es_name in active_edge_sets(config):
        es = graph.edge_sets[es_name]
        inputs = t_concat(
            [
                latent.edges[es_name],
                t_take_rows(latent.nodes[es.sender_set], es.senders),
                t_take_rows(latent.nodes[es.receiver_set], es.receivers),
            ]
        )
        update = mlp_apply(roles[f"proc/{step}/edge/{es_name}"], inputs)
        new_edges[es_name] = t_add(latent.edges[es_name], update)

    new_nodes = {}
    for name in NODE_SET_NAMES:
        v = latent.nodes[name]
        incoming = incoming_edge_sets(config, name)
        if incoming:
            # Aggregates read the pre-step edge latents (simultaneous update).
            aggs = [
                t_segment_reduce(
                    latent.edges[e],
                    graph.edge_sets[e].receivers,
                    graph.node_sets[name].count,
                    mode,
                )
                for e in incoming
            ]
            update = mlp_apply(roles[f"proc/{step}/node/{name}"], t_concat([v, *aggs]))
        else:
            update = mlp_apply(roles[f"proc/{step}/node/{name}"], v)
        new_nodes[name] = t_add(v, update)
    return LatentGraph(nodes=new_nodes, edges=new_edges)


def _run_message_passing(graph: tg.TypedGraph, roles: dict, config: ModelConfig) -> LatentGraph:
    latent = _encode(graph, roles, config)
    for step in range(config.num_message_passing_steps):
        latent = _process_step(latent, graph, roles, config, step)
    return latent


def _pairs_arrays(pairs) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(pairs, dtype=np.int64)
    if arr.size == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ShapeMismatchError("pairs must be a sequence of (location, species) tuples")
    return arr[:, 0], arr[:, 1]


def score_pairs_tensor(
    graph: tg.TypedGraph, roles: dict, config: ModelConfig, loc_idx, sp_idx
) -> Tensor:
    """Full encode/process/decode returning raw scores on the tape."""
    latent = _run_message_passing(graph, roles, config)
    v_loc = t_take_rows(latent.nodes[tg.LOCATION], np.asarray(loc_idx, dtype=np.int64))
    v_sp = t_take_rows(latent.nodes[tg.SPECIES], np.asarray(sp_idx, dtype=np.int64))
    return t_rowwise_dot(v_loc, v_sp)


# Public, ndarray-facing API


def encode(graph: tg.TypedGraph, params: ParamStore, config: ModelConfig) -> LatentGraph:
    """Embed every node and active edge set into the latent space."""
    return _unwrap_latent(_encode(graph, params.roles, config))


def process_step(
    latent: LatentGraph,
    graph: tg.TypedGraph,
    params: ParamStore,
    config: ModelConfig,
    step: int = 0,
) -> LatentGraph:
    """One simultaneous message-passing update with residual connections."""
    wrapped = _process_step(_wrap_latent(latent), graph, params.roles, config, step)
    return _unwrap_latent(wrapped)


def run_message_passing(
    graph: tg.TypedGraph, params: ParamStore, config: ModelConfig
) -> LatentGraph:
    """Encode followed by all configured process steps."""
    return _unwrap_latent(_run_message_passing(graph, params.roles, config))


def decode_scores(latent: LatentGraph, pairs) -> np.ndarray:
    """Dot-product score for each (location index, species index) pair."""
    loc_idx, sp_idx = _pairs_arrays(pairs)
    v_loc = latent.nodes[tg.LOCATION]
    v_sp = latent.nodes[tg.SPECIES]
    for idx, n in ((loc_idx, v_loc.shape[0]), (sp_idx, v_sp.shape[0])):
        if idx.size > 0 and (idx.min() < 0 or idx.max() >= n):
            raise IndexOutOfBoundsError(f"pair index outside [0, {n})")
    return np.sum(v_loc[loc_idx] * v_sp[sp_idx], axis=1)


def forward(
    graph: tg.TypedGraph, params: ParamStore, config: ModelConfig, pairs
) -> np.ndarray:
    """Raw link scores (logits) for the given pairs; sigmoid is the caller's."""
    loc_idx, sp_idx = _pairs_arrays(pairs)
    return score_pairs_tensor(graph, params.roles, config, loc_idx, sp_idx).data

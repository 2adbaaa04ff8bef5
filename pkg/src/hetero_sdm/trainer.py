"""Full-batch training loop, loss, and the shared checkpoint container.

Each epoch draws fresh pseudo-negatives, optionally rebuilds the
non-detection message edges from them, runs one forward/backward pass over
all positives plus the sampled negatives, and applies one optimizer step.
Everything is a pure function of (graph, config), so a rerun with the same
seed reproduces the loss trajectory bit for bit.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import struct
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import typed_graph as tg
from .autodiff_nn import (
    MlpParams,
    OptimizerState,
    bce_logits_elements,
    loss_and_grad,
    optimizer_step,
    t_bce_mean,
)
from .errors import CheckpointError, EmptyInputError, ShapeMismatchError
from .interaction_gnn import (
    ModelConfig,
    ParamStore,
    init_param_store,
    score_pairs_tensor,
)
from .negative_sampling import (
    LabeledPair,
    SamplingConfig,
    build_epoch_batch,
    sample_negatives,
)

logger = logging.getLogger("hetero_sdm.trainer")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    num_epochs: int
    sampling: SamplingConfig
    model: ModelConfig
    seed: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.num_epochs < 1:
            raise ValueError("num_epochs must be at least 1")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be non-negative")


class EpochRecord(NamedTuple):
    epoch: int
    loss: float
    n_pos: int
    n_neg: int
    seconds: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def losses(self) -> np.ndarray:
        return np.array([r.loss for r in self.records])

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(
                {"epoch": r.epoch, "loss": r.loss, "n_pos": r.n_pos,
                 "n_neg": r.n_neg, "seconds": r.seconds}
            )
            for r in self.records
        ]
        return "\n".join(lines) + ("\n" if lines else "")


def bce_with_logits(scores, labels) -> float:
    """Mean sigmoid binary cross entropy, evaluated in stable logit form."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if s.size == 0:
        raise EmptyInputError("cross-entropy over zero pairs is undefined")
    if s.shape != y.shape:
        raise ShapeMismatchError(f"scores shape {s.shape} vs labels shape {y.shape}")
    return float(np.mean(bce_logits_elements(s, y)))


def positive_pairs(graph: tg.TypedGraph) -> list[LabeledPair]:
    """Label-1 pairs extracted from the detection edge set."""
    det = graph.edge_sets[tg.DET_L2S]
    return [
        LabeledPair(int(l), int(s), 1) for l, s in zip(det.senders, det.receivers)
    ]


def build_epoch_graph(
    graph: tg.TypedGraph, model: ModelConfig, negatives
) -> tg.TypedGraph:
    """Install this epoch's non-detection edges when the model uses them."""
    if not model.include_negative_edges:
        return graph
    neg = np.asarray([(p[0], p[1]) for p in negatives], dtype=np.int64).reshape(-1, 2)
    nondet = tg.EdgeSet(
        name=tg.NONDET_L2S,
        sender_set=tg.LOCATION,
        receiver_set=tg.SPECIES,
        senders=neg[:, 0],
        receivers=neg[:, 1],
        features=np.ones((neg.shape[0], 1)),
    )
    out = tg.replace_edge_set(graph, nondet)
    if model.direction == "bidirectional":
        out = tg.replace_edge_set(out, tg.reverse_edge_set(nondet, tg.NONDET_S2L))
    return out


def train(
    graph: tg.TypedGraph,
    config: TrainConfig,
    num_po_locations: int,
    checkpoint_path=None,
):
    """Optimize GNN parameters on the training graph.

    `num_po_locations` splits the location node set into the presence-only
    block [0, n) and the background block [n, count); negative sampling
    needs the boundary. When `checkpoint_path` is given, the parameters are
    saved every `checkpoint_every` epochs and at the end, so a non-finite
    loss abort leaves the last good checkpoint on disk.
    """
    n_loc = graph.node_sets[tg.LOCATION].count
    n_species = graph.node_sets[tg.SPECIES].count
    if not 0 <= num_po_locations <= n_loc:
        raise ShapeMismatchError(
            f"num_po_locations {num_po_locations} outside [0, {n_loc}]"
        )
    num_background = n_loc - num_po_locations
    positives = positive_pairs(graph)

    params = init_param_store(graph, config.model, config.seed)
    state = OptimizerState.init(params.roles)
    history = TrainHistory()

    for epoch in range(config.num_epochs):
        t0 = time.perf_counter()
        negatives = sample_negatives(
            positives, num_po_locations, num_background, n_species,
            config.sampling, epoch,
        )
        batch = build_epoch_batch(
            positives, negatives, seed=config.sampling.seed, epoch=epoch
        )
        pairs = np.asarray(batch, dtype=np.int64)
        loc_idx, sp_idx, labels = pairs[:, 0], pairs[:, 1], pairs[:, 2].astype(np.float64)
        epoch_graph = build_epoch_graph(graph, config.model, negatives)

        def loss_fn(roles):
            scores = score_pairs_tensor(epoch_graph, roles, config.model, loc_idx, sp_idx)
            return t_bce_mean(scores, labels)

        loss, grads = loss_and_grad(loss_fn, params.roles)
        new_roles, state = optimizer_step(params.roles, grads, state, config.learning_rate)
        params = ParamStore(roles=new_roles)
        history.records.append(
            EpochRecord(epoch, loss, len(positives), len(negatives),
                        time.perf_counter() - t0)
        )
        logger.debug("epoch %d loss %.6f (%d pos, %d neg)",
                     epoch, loss, len(positives), len(negatives))
        if (
            checkpoint_path is not None
            and config.checkpoint_every > 0
            and (epoch + 1) % config.checkpoint_every == 0
        ):
            save_checkpoint(params, config.model, checkpoint_path)

    if checkpoint_path is not None:
        save_checkpoint(params, config.model, checkpoint_path)
    return params, history


# ---------------------------------------------------------------------------
# Checkpoint container
# ---------------------------------------------------------------------------
#
# Layout: 8-byte magic, uint32 format version, uint64 header length, a JSON
# header (model kind, config, role names, per-layer shapes, dtype), then the
# raw little-endian float64 arrays concatenated in header order.

CHECKPOINT_MAGIC = b"HSDMCKPT"
CHECKPOINT_VERSION = 1


def _config_dict(config) -> dict:
    if dataclasses.is_dataclass(config) and not isinstance(config, type):
        return dataclasses.asdict(config)
    return dict(config)


def save_checkpoint(params, config, path, extra_header: dict | None = None) -> None:
    """Write parameters plus their self-describing config to `path`.

    `params` is a ParamStore (GNN) or a bare MlpParams (baseline); the
    model kind is recorded in the header.
    """
    if isinstance(params, ParamStore):
        kind, roles = "gnn", params.roles
    elif isinstance(params, MlpParams):
        kind, roles = "baseline", {"model": params}
    else:
        raise TypeError(f"cannot checkpoint object of type {type(params).__name__}")

    role_entries = []
    payload = []
    for role in sorted(roles):
        mp = roles[role]
        role_entries.append(
            {
                "role": role,
                "activation": mp.activation,
                "weight_shapes": [list(w.shape) for w in mp.weights],
                "bias_shapes": [list(b.shape) for b in mp.biases],
            }
        )
        for w, b in zip(mp.weights, mp.biases):
            payload.append(np.ascontiguousarray(w, dtype="<f8"))
            payload.append(np.ascontiguousarray(b, dtype="<f8"))

    header = {
        "format_version": CHECKPOINT_VERSION,
        "model_kind": kind,
        "dtype": "<f8",
        "config": _config_dict(config),
        "roles": role_entries,
    }
    if extra_header:
        overlap = set(extra_header) & set(header)
        if overlap:
            raise ValueError(f"extra header keys collide with core keys: {sorted(overlap)}")
        header.update(extra_header)

    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for arr in payload:
            f.write(arr.tobytes())


def load_checkpoint(path, expected_model_config: ModelConfig | None = None):
    """Read a checkpoint back; returns (params, header dict).

    Parameters compare bitwise equal to what was saved. If
    `expected_model_config` is given, any disagreement with the stored
    config raises a shape-mismatch error before parameters are used.
    """
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < len(CHECKPOINT_MAGIC) + 12 or not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"{path}: not a checkpoint file")
    off = len(CHECKPOINT_MAGIC)
    (version,) = struct.unpack_from("<I", data, off)
    off += 4
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: format version {version} unsupported (expected {CHECKPOINT_VERSION})"
        )
    (header_len,) = struct.unpack_from("<Q", data, off)
    off += 8
    if off + header_len > len(data):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(data[off : off + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from exc
    off += header_len

    roles = {}
    for entry in header["roles"]:
        weights, biases = [], []
        for w_shape, b_shape in zip(entry["weight_shapes"], entry["bias_shapes"]):
            for shape, dest in ((w_shape, weights), (b_shape, biases)):
                n = int(np.prod(shape)) if shape else 1
                nbytes = n * 8
                if off + nbytes > len(data):
                    raise CheckpointError(f"{path}: truncated parameter payload")
                arr = np.frombuffer(data[off : off + nbytes], dtype="<f8").reshape(shape)
                dest.append(arr.copy())
                off += nbytes
        roles[entry["role"]] = MlpParams(
            weights=tuple(weights), biases=tuple(biases), activation=entry["activation"]
        )
    if off != len(data):
        raise CheckpointError(f"{path}: {len(data) - off} unexpected trailing bytes")

    if expected_model_config is not None:
        stored = header.get("config", {})
        expected = _config_dict(expected_model_config)
        if stored != expected:
            diffs = {
                k: (stored.get(k), expected.get(k))
                for k in set(stored) | set(expected)
                if stored.get(k) != expected.get(k)
            }
            raise ShapeMismatchError(f"checkpoint config disagrees with pipeline: {diffs}")

    if header["model_kind"] == "baseline":
        return roles["model"], header
    return ParamStore(roles=roles), header

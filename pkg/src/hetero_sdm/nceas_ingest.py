"""Region CSV loading and training-graph construction.

Canonical schemas (UTF-8, header row, '.' decimal):

    po.csv:        species_id, x, y, <env_1..env_k>
    bg.csv:        x, y, <env_1..env_k>
    pa_env.csv:    site_id, x, y, <env_1..env_k>
    pa_labels.csv: site_id, <one 0/1 column per species_id>
    species.csv:   species_id, group        (group may be empty)

Node ordering is canonical regardless of input row order: locations sort by
their exact (x, y) key, species by id, test sites by site id. Records that
share an (x, y) key aggregate into one location node with mean features and
one detection edge per observed species.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from . import typed_graph as tg
from .autodiff_nn import segment_reduce
from .baseline_mlp import apply_normalizer, fit_normalizer
from .errors import (
    InconsistentWidthError,
    IngestError,
    MissingColumnError,
    NonNumericFeatureError,
    UnknownGroupError,
    UnknownSpeciesError,
)

logger = logging.getLogger("hetero_sdm.ingest")


@dataclass(frozen=True)
class PoRecords:
    species_idx: np.ndarray
    xy: np.ndarray
    env: np.ndarray


@dataclass(frozen=True)
class RegionDataset:
    region_code: str
    env_feature_names: tuple
    species_ids: tuple
    species_groups: tuple
    po: PoRecords
    bg_xy: np.ndarray
    bg_env: np.ndarray
    pa_site_ids: tuple
    pa_xy: np.ndarray
    pa_env: np.ndarray
    pa_labels: np.ndarray


@dataclass(frozen=True)
class AggregatedLocations:
    """Unique PO locations (sorted by key) with mean features and edges."""

    xy: np.ndarray
    env: np.ndarray
    detection_pairs: np.ndarray  # (n_pairs, 2) of (location_idx, species_idx)


@dataclass(frozen=True)
class SpeciesFeatureSpec:
    one_hot_dim: int
    include_group: bool
    group_vocabulary: tuple


def _numeric_matrix(df: pd.DataFrame, columns, path) -> np.ndarray:
    out = np.empty((len(df), len(columns)), dtype=np.float64)
    for j, col in enumerate(columns):
        values = pd.to_numeric(df[col], errors="coerce")
        if values.isna().any():
            row = int(values.isna().idxmax())
            raise NonNumericFeatureError(
                f"{path}: column {col!r} has a non-numeric or missing value (row {row})"
            )
        out[:, j] = values.to_numpy(dtype=np.float64)
    return out


def _require_columns(df: pd.DataFrame, required, path) -> None:
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise MissingColumnError(f"{path}: missing column(s) {missing}")


def _env_columns(df: pd.DataFrame, fixed, path) -> list:
    env = [c for c in df.columns if c not in fixed]
    if not env:
        raise MissingColumnError(f"{path}: no environmental feature columns found")
    return env


def load_region(
    po_path, bg_path, pa_env_path, pa_labels_path, species_path, region_code: str = ""
) -> RegionDataset:
    """Parse and cross-validate the five canonical CSVs."""
    species_df = pd.read_csv(species_path, dtype=str, keep_default_na=False)
    _require_columns(species_df, ["species_id", "group"], species_path)
    if species_df["species_id"].duplicated().any():
        raise IngestError(f"{species_path}: duplicate species ids")
    species_df = species_df.sort_values("species_id", kind="stable")
    species_ids = tuple(species_df["species_id"])
    species_groups = tuple(g if g else None for g in species_df["group"])
    sp_index = {sid: i for i, sid in enumerate(species_ids)}

    po_df = pd.read_csv(po_path, dtype={"species_id": str})
    _require_columns(po_df, ["species_id", "x", "y"], po_path)
    env_names = _env_columns(po_df, {"species_id", "x", "y"}, po_path)
    unknown = sorted(set(po_df["species_id"]) - set(species_ids))
    if unknown:
        raise UnknownSpeciesError(f"{po_path}: species not in table: {unknown}")
    po = PoRecords(
        species_idx=np.array([sp_index[s] for s in po_df["species_id"]], dtype=np.int64),
        xy=_numeric_matrix(po_df, ["x", "y"], po_path),
        env=_numeric_matrix(po_df, env_names, po_path),
    )

    bg_df = pd.read_csv(bg_path)
    _require_columns(bg_df, ["x", "y"], bg_path)
    bg_env_names = _env_columns(bg_df, {"x", "y"}, bg_path)
    if bg_env_names != env_names:
        raise InconsistentWidthError(
            f"{bg_path}: env columns {bg_env_names} differ from po.csv's {env_names}"
        )
    bg_xy = _numeric_matrix(bg_df, ["x", "y"], bg_path)
    bg_env = _numeric_matrix(bg_df, env_names, bg_path)

    pa_env_df = pd.read_csv(pa_env_path, dtype={"site_id": str})
    _require_columns(pa_env_df, ["site_id", "x", "y"], pa_env_path)
    pa_env_names = _env_columns(pa_env_df, {"site_id", "x", "y"}, pa_env_path)
    if pa_env_names != env_names:
        raise InconsistentWidthError(
            f"{pa_env_path}: env columns differ from po.csv's"
        )
    if pa_env_df["site_id"].duplicated().any():
        raise IngestError(f"{pa_env_path}: duplicate site ids")
    pa_env_df = pa_env_df.sort_values("site_id", kind="stable")

    pa_labels_df = pd.read_csv(pa_labels_path, dtype={"site_id": str})
    _require_columns(pa_labels_df, ["site_id"] + list(species_ids), pa_labels_path)
    extra = sorted(set(pa_labels_df.columns) - {"site_id"} - set(species_ids))
    if extra:
        raise UnknownSpeciesError(f"{pa_labels_path}: unknown species columns {extra}")
    if set(pa_labels_df["site_id"]) != set(pa_env_df["site_id"]):
        raise IngestError(
            f"{pa_labels_path}: site ids do not match {pa_env_path}"
        )
    pa_labels_df = pa_labels_df.set_index("site_id").loc[pa_env_df["site_id"]]
    labels = _numeric_matrix(pa_labels_df, list(species_ids), pa_labels_path)
    if not np.isin(labels, (0.0, 1.0)).all():
        raise IngestError(f"{pa_labels_path}: labels must be 0 or 1")

    dataset = RegionDataset(
        region_code=region_code,
        env_feature_names=tuple(env_names),
        species_ids=species_ids,
        species_groups=species_groups,
        po=po,
        bg_xy=bg_xy,
        bg_env=bg_env,
        pa_site_ids=tuple(pa_env_df["site_id"]),
        pa_xy=_numeric_matrix(pa_env_df, ["x", "y"], pa_env_path),
        pa_env=_numeric_matrix(pa_env_df, env_names, pa_env_path),
        pa_labels=labels.astype(np.int64),
    )
    logger.info(
        "region %s: %d po records, %d background, %d test sites, %d species, %d env features",
        region_code or "?", len(po.species_idx), bg_xy.shape[0],
        len(dataset.pa_site_ids), len(species_ids), len(env_names),
    )
    return dataset


REGION_FILES = {
    "po": "po.csv",
    "bg": "bg.csv",
    "pa_env": "pa_env.csv",
    "pa_labels": "pa_labels.csv",
    "species": "species.csv",
}


def load_region_dir(directory) -> RegionDataset:
    d = Path(directory)
    return load_region(
        d / REGION_FILES["po"],
        d / REGION_FILES["bg"],
        d / REGION_FILES["pa_env"],
        d / REGION_FILES["pa_labels"],
        d / REGION_FILES["species"],
        region_code=d.name,
    )


def aggregate_locations(po: PoRecords) -> AggregatedLocations:
    """Collapse records sharing an exact (x, y) key into one location.

    Features of co-located records are averaged; repeated detections of a
    species at one key collapse to a single detection pair.
    """
    if po.xy.shape[0] == 0:
        return AggregatedLocations(
            xy=np.zeros((0, 2)), env=np.zeros((0, po.env.shape[1])),
            detection_pairs=np.zeros((0, 2), dtype=np.int64),
        )
    keys, inverse = np.unique(po.xy, axis=0, return_inverse=True)
    env = segment_reduce(po.env, inverse, keys.shape[0], mode="mean")
    pairs = np.unique(
        np.stack([inverse.astype(np.int64), po.species_idx], axis=1), axis=0
    )
    return AggregatedLocations(xy=keys, env=env, detection_pairs=pairs)


def num_po_locations(dataset: RegionDataset) -> int:
    return aggregate_locations(dataset.po).xy.shape[0]


def species_feature_spec(dataset: RegionDataset) -> SpeciesFeatureSpec:
    groups = [g for g in dataset.species_groups if g is not None]
    return SpeciesFeatureSpec(
        one_hot_dim=len(dataset.species_ids),
        include_group=bool(groups),
        group_vocabulary=tuple(sorted(set(groups))),
    )


def build_species_features(species_table, spec: SpeciesFeatureSpec) -> np.ndarray:
    """Row j: one-hot(j), optionally followed by the group one-hot."""
    table = list(species_table)
    n = len(table)
    if n != spec.one_hot_dim:
        raise IngestError(
            f"species table has {n} rows but spec declares {spec.one_hot_dim}"
        )
    features = np.eye(n)
    if not spec.include_group:
        return features
    if not spec.group_vocabulary:
        raise UnknownGroupError("include_group set but the group vocabulary is empty")
    vocab = {g: i for i, g in enumerate(spec.group_vocabulary)}
    group_hot = np.zeros((n, len(vocab)))
    for j, (sid, group) in enumerate(table):
        if group not in vocab:
            raise UnknownGroupError(f"species {sid!r}: group {group!r} not in vocabulary")
        group_hot[j, vocab[group]] = 1.0
    return np.hstack([features, group_hot])


def location_feature_blocks(dataset: RegionDataset, include_coords: bool = False):
    """Raw (unnormalized) PO-aggregate and background feature blocks.

    Background rows are put in canonical order (sorted by coordinate key)
    so node indexing does not depend on input row order.
    """
    agg = aggregate_locations(dataset.po)
    bg_order = np.lexsort((dataset.bg_xy[:, 1], dataset.bg_xy[:, 0]))
    bg_xy = dataset.bg_xy[bg_order]
    bg_env = dataset.bg_env[bg_order]
    if include_coords:
        po_feats = np.hstack([agg.env, agg.xy])
        bg_feats = np.hstack([bg_env, bg_xy])
    else:
        po_feats, bg_feats = agg.env, bg_env
    return agg, po_feats, bg_feats


def test_feature_matrix(
    dataset: RegionDataset, include_coords: bool = False, normalize: bool = True
) -> np.ndarray:
    """PA site features in the exact feature space of the training graph."""
    _, po_feats, bg_feats = location_feature_blocks(dataset, include_coords)
    feats = (
        np.hstack([dataset.pa_env, dataset.pa_xy]) if include_coords else dataset.pa_env
    )
    if normalize:
        norm = fit_normalizer(np.vstack([po_feats, bg_feats]))
        feats = apply_normalizer(norm, feats)
    return feats


def build_training_graph(
    dataset: RegionDataset,
    model_config,
    include_coords: bool = False,
    normalize: bool = True,
) -> tg.TypedGraph:
    """Location and species node sets plus the detection edge set(s).

    Location nodes are the aggregated PO locations followed by the
    background locations. Detection edges run location-to-species; the
    species-to-location reversal is added for bidirectional configs.
    Features of both blocks are min-max normalized to [-1, 1] using the
    union of the blocks (disable with `normalize=False`).
    """
    agg, po_feats, bg_feats = location_feature_blocks(dataset, include_coords)
    loc_feats = np.vstack([po_feats, bg_feats])
    if normalize:
        loc_feats = apply_normalizer(fit_normalizer(loc_feats), loc_feats)

    spec = species_feature_spec(dataset)
    sp_feats = build_species_features(
        zip(dataset.species_ids, dataset.species_groups), spec
    )

    graph = tg.TypedGraph()
    graph = tg.add_node_set(graph, tg.NodeSet(tg.LOCATION, loc_feats.shape[0], loc_feats))
    graph = tg.add_node_set(graph, tg.NodeSet(tg.SPECIES, sp_feats.shape[0], sp_feats))
    det = tg.EdgeSet(
        name=tg.DET_L2S,
        sender_set=tg.LOCATION,
        receiver_set=tg.SPECIES,
        senders=agg.detection_pairs[:, 0],
        receivers=agg.detection_pairs[:, 1],
        features=np.ones((agg.detection_pairs.shape[0], 1)),
    )
    graph = tg.add_edge_set(graph, det)
    if model_config.direction == "bidirectional":
        graph = tg.add_edge_set(graph, tg.reverse_edge_set(det, tg.DET_S2L))
    return graph

"""Deterministic synthetic regions and toy graphs for tests and demos.

Presence probabilities follow a logistic-linear suitability per species:
p(species j at location) = sigmoid(scale * w_j . env). Presence-only
records thin the true presences by a detection rate, and presence-absence
test labels are Bernoulli draws from the true probabilities.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit as sigmoid

from . import typed_graph as tg
from .nceas_ingest import PoRecords, RegionDataset


def species_weights(n_species: int, n_env: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-norm preference directions, evenly spread when n_env == 2."""
    if n_env == 2:
        angles = 2.0 * np.pi * np.arange(n_species) / n_species
        return np.stack([np.cos(angles), np.sin(angles)], axis=1)
    w = rng.normal(size=(n_species, n_env))
    return w / np.linalg.norm(w, axis=1, keepdims=True)


def make_synthetic_region(
    n_species: int = 5,
    n_po_locations: int = 200,
    n_background: int = 500,
    n_test: int = 300,
    n_env: int = 2,
    weight_scale: float = 5.0,
    detection_rate: float = 0.8,
    duplicate_fraction: float = 0.1,
    groups=None,
    seed: int = 7,
    region_code: str = "synthetic",
) -> RegionDataset:
    """A fully in-memory region with known ground-truth suitabilities.

    A `duplicate_fraction` share of PO records repeats an earlier record's
    location to exercise location aggregation. Every PO location yields at
    least one record (the most suitable species is recorded when no random
    detection fires), mirroring how presence-only locations exist only
    because something was seen there.
    """
    rng = np.random.default_rng(seed)
    weights = weight_scale * species_weights(n_species, n_env, rng)

    def suitability(env):
        return sigmoid(env @ weights.T)

    po_env = rng.uniform(-1.0, 1.0, size=(n_po_locations, n_env))
    po_xy = rng.uniform(-10.0, 10.0, size=(n_po_locations, 2))
    probs = suitability(po_env)
    detected = rng.random(probs.shape) < probs * detection_rate
    for i in np.flatnonzero(~detected.any(axis=1)):
        detected[i, int(np.argmax(probs[i]))] = True

    rec_sp, rec_loc = [], []
    for i in range(n_po_locations):
        for j in np.flatnonzero(detected[i]):
            rec_sp.append(j)
            rec_loc.append(i)
    # Duplicate some records at the same coordinates (same environment).
    n_dup = int(duplicate_fraction * len(rec_sp))
    if n_dup:
        dup_idx = rng.choice(len(rec_sp), size=n_dup, replace=False)
        rec_sp += [rec_sp[k] for k in dup_idx]
        rec_loc += [rec_loc[k] for k in dup_idx]
    rec_loc = np.array(rec_loc, dtype=np.int64)

    bg_env = rng.uniform(-1.0, 1.0, size=(n_background, n_env))
    bg_xy = rng.uniform(-10.0, 10.0, size=(n_background, 2))

    pa_env = rng.uniform(-1.0, 1.0, size=(n_test, n_env))
    pa_xy = rng.uniform(-10.0, 10.0, size=(n_test, 2))
    pa_labels = (rng.random((n_test, n_species)) < suitability(pa_env)).astype(np.int64)

    species_ids = tuple(f"sp{j:03d}" for j in range(n_species))
    if groups:
        species_groups = tuple(groups[j * len(groups) // n_species] for j in range(n_species))
    else:
        species_groups = tuple(None for _ in species_ids)

    return RegionDataset(
        region_code=region_code,
        env_feature_names=tuple(f"env_{k + 1}" for k in range(n_env)),
        species_ids=species_ids,
        species_groups=species_groups,
        po=PoRecords(
            species_idx=np.array(rec_sp, dtype=np.int64),
            xy=po_xy[rec_loc],
            env=po_env[rec_loc],
        ),
        bg_xy=bg_xy,
        bg_env=bg_env,
        pa_site_ids=tuple(f"site{i:04d}" for i in range(n_test)),
        pa_xy=pa_xy,
        pa_env=pa_env,
        pa_labels=pa_labels,
    )


def write_region_csvs(dataset: RegionDataset, directory) -> None:
    """Emit the five canonical CSVs with full float round-trip precision."""
    import pandas as pd
    from pathlib import Path

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    fmt = "%.17g"

    po = pd.DataFrame(
        {
            "species_id": [dataset.species_ids[j] for j in dataset.po.species_idx],
            "x": dataset.po.xy[:, 0],
            "y": dataset.po.xy[:, 1],
        }
    )
    for k, name in enumerate(dataset.env_feature_names):
        po[name] = dataset.po.env[:, k]
    po.to_csv(d / "po.csv", index=False, float_format=fmt)

    bg = pd.DataFrame({"x": dataset.bg_xy[:, 0], "y": dataset.bg_xy[:, 1]})
    for k, name in enumerate(dataset.env_feature_names):
        bg[name] = dataset.bg_env[:, k]
    bg.to_csv(d / "bg.csv", index=False, float_format=fmt)

    pa_env = pd.DataFrame(
        {"site_id": dataset.pa_site_ids, "x": dataset.pa_xy[:, 0], "y": dataset.pa_xy[:, 1]}
    )
    for k, name in enumerate(dataset.env_feature_names):
        pa_env[name] = dataset.pa_env[:, k]
    pa_env.to_csv(d / "pa_env.csv", index=False, float_format=fmt)

    pa_labels = pd.DataFrame({"site_id": dataset.pa_site_ids})
    for j, sid in enumerate(dataset.species_ids):
        pa_labels[sid] = dataset.pa_labels[:, j]
    pa_labels.to_csv(d / "pa_labels.csv", index=False)

    species = pd.DataFrame(
        {
            "species_id": dataset.species_ids,
            "group": [g or "" for g in dataset.species_groups],
        }
    )
    species.to_csv(d / "species.csv", index=False)


def make_toy_graph(
    n_locations: int = 4,
    n_species: int = 3,
    n_env: int = 3,
    n_detections: int = 5,
    n_nondetections: int = 4,
    seed: int = 0,
):
    """A small random graph carrying all four edge sets, plus target pairs.

    Suitable for gradient checks under any model configuration; configs
    simply ignore the edge sets they do not message-pass over.
    """
    rng = np.random.default_rng(seed)
    loc_feats = rng.normal(size=(n_locations, n_env))
    sp_feats = np.eye(n_species)

    all_pairs = np.array(
        [(i, j) for i in range(n_locations) for j in range(n_species)], dtype=np.int64
    )
    picks = rng.choice(len(all_pairs), size=n_detections + n_nondetections, replace=False)
    det = all_pairs[picks[:n_detections]]
    nondet = all_pairs[picks[n_detections:]]

    graph = tg.TypedGraph()
    graph = tg.add_node_set(graph, tg.NodeSet(tg.LOCATION, n_locations, loc_feats))
    graph = tg.add_node_set(graph, tg.NodeSet(tg.SPECIES, n_species, sp_feats))
    det_set = tg.EdgeSet(
        tg.DET_L2S, tg.LOCATION, tg.SPECIES, det[:, 0], det[:, 1],
        np.ones((len(det), 1)),
    )
    nondet_set = tg.EdgeSet(
        tg.NONDET_L2S, tg.LOCATION, tg.SPECIES, nondet[:, 0], nondet[:, 1],
        np.ones((len(nondet), 1)),
    )
    graph = tg.add_edge_set(graph, det_set)
    graph = tg.add_edge_set(graph, tg.reverse_edge_set(det_set, tg.DET_S2L))
    graph = tg.add_edge_set(graph, nondet_set)
    graph = tg.add_edge_set(graph, tg.reverse_edge_set(nondet_set, tg.NONDET_S2L))

    pair_picks = rng.choice(len(all_pairs), size=min(6, len(all_pairs)), replace=False)
    pairs = all_pairs[pair_picks]
    labels = rng.integers(0, 2, size=len(pairs)).astype(np.float64)
    return graph, pairs, labels

"""Per-species AUC-ROC evaluation against presence-absence test data.

Test locations join the training graph as edge-less location nodes; one
message-passing pass then scores every (test location, species) pair.
Species whose test column contains a single class are skipped and listed
in the report, and the mean is taken over scored species only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit as sigmoid
from scipy.stats import rankdata

from . import typed_graph as tg
from .errors import DegenerateLabelsError, ShapeMismatchError
from .interaction_gnn import ModelConfig, ParamStore, run_message_passing

REPORT_SCHEMA_VERSION = 1


@dataclass
class EvalReport:
    per_species_auc: dict = field(default_factory=dict)
    mean_auc: float = float("nan")
    n_species_scored: int = 0
    skipped_species: list = field(default_factory=list)


def build_test_graph(train_graph: tg.TypedGraph, test_location_features):
    """Append test locations as nodes with no edges.

    Returns the extended graph and the contiguous index range the new
    nodes occupy. Edge sets are carried over untouched.
    """
    feats = np.asarray(test_location_features, dtype=np.float64)
    loc = train_graph.node_sets[tg.LOCATION]
    if feats.ndim != 2 or feats.shape[1] != loc.feature_dim:
        raise ShapeMismatchError(
            f"test features have width {feats.shape[1] if feats.ndim == 2 else '?'}, "
            f"training locations have {loc.feature_dim}"
        )
    extended = tg.NodeSet(
        name=tg.LOCATION,
        count=loc.count + feats.shape[0],
        features=np.vstack([loc.features, feats]),
    )
    node_sets = dict(train_graph.node_sets)
    node_sets[tg.LOCATION] = extended
    graph = tg.TypedGraph(node_sets=node_sets, edge_sets=train_graph.edge_sets)
    return graph, range(loc.count, loc.count + feats.shape[0])


def predict_matrix(
    params: ParamStore, config: ModelConfig, test_graph: tg.TypedGraph, test_range
) -> np.ndarray:
    """Link probabilities for every (test location, species) pair."""
    latent = run_message_passing(test_graph, params, config)
    v_loc = latent.nodes[tg.LOCATION][np.asarray(test_range, dtype=np.int64)]
    v_sp = latent.nodes[tg.SPECIES]
    return sigmoid(v_loc @ v_sp.T)


def auc_roc(scores, labels) -> float:
    """Rank-based AUC: P(score_pos > score_neg) with ties counted half.

    Average ranks make this exactly the Mann-Whitney statistic.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ShapeMismatchError("scores and labels must be equal-length vectors")
    n_pos = int(np.sum(y == 1))
    n_neg = int(np.sum(y == 0))
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabelsError(
            f"need both classes, got {n_pos} positives / {n_neg} negatives"
        )
    ranks = rankdata(s, method="average")
    pos_rank_sum = float(np.sum(ranks[y == 1]))
    u = pos_rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def evaluate_predictions(prob_matrix, labels, species_ids=None) -> EvalReport:
    """Per-species AUC over a probability matrix (rows: sites, cols: species)."""
    probs = np.asarray(prob_matrix, dtype=np.float64)
    lab = np.asarray(labels)
    if probs.shape != lab.shape:
        raise ShapeMismatchError(
            f"probability matrix {probs.shape} vs labels {lab.shape}"
        )
    n_species = probs.shape[1]
    if species_ids is None:
        species_ids = [str(j) for j in range(n_species)]
    report = EvalReport()
    scored = []
    for j in range(n_species):
        col = lab[:, j]
        try:
            auc = auc_roc(probs[:, j], col)
        except DegenerateLabelsError:
            reason = "all_present" if np.all(col == 1) else "all_absent"
            report.skipped_species.append((species_ids[j], reason))
            continue
        report.per_species_auc[species_ids[j]] = auc
        scored.append(auc)
    report.n_species_scored = len(scored)
    report.mean_auc = float(np.mean(scored)) if scored else float("nan")
    return report


def evaluate_region(
    params: ParamStore,
    config: ModelConfig,
    train_graph: tg.TypedGraph,
    test_features,
    test_labels,
    species_ids=None,
) -> EvalReport:
    """Extend the graph with test locations, predict, and score per species.

    `test_features` must be in the same feature space as the training
    location nodes (same normalization and columns).
    """
    test_graph, test_range = build_test_graph(train_graph, test_features)
    probs = predict_matrix(params, config, test_graph, test_range)
    return evaluate_predictions(probs, test_labels, species_ids)


def report_to_dict(report: EvalReport, region: str = "", model: str = "gnn") -> dict:
    per_species = [
        {"species_id": sid, "auc": auc} for sid, auc in report.per_species_auc.items()
    ] + [
        {"species_id": sid, "skipped": reason} for sid, reason in report.skipped_species
    ]
    per_species.sort(key=lambda d: d["species_id"])
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "region": region,
        "model": model,
        "per_species": per_species,
        "mean_auc": report.mean_auc,
        "n_species_scored": report.n_species_scored,
    }


def write_report_json(report: EvalReport, path, region: str = "", model: str = "gnn") -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report_to_dict(report, region, model), f, indent=2, sort_keys=True)
        f.write("\n")


def write_report_csv(report: EvalReport, path) -> None:
    lines = ["species_id,auc,skipped_reason"]
    rows = [(sid, f"{auc:.12g}", "") for sid, auc in report.per_species_auc.items()]
    rows += [(sid, "", reason) for sid, reason in report.skipped_species]
    for sid, auc, reason in sorted(rows):
        lines.append(f"{sid},{auc},{reason}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")

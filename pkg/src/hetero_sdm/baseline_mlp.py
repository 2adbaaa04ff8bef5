"""Feed-forward multi-species baseline over environmental features.

One logit per species; species observed at a presence-only location are
positive labels, everything else (including every species at background
locations) is negative. Inputs are min-max normalized to [-1, 1], and a
small uniform noise perturbs each presentation during training.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.special import expit as sigmoid

from .autodiff_nn import (
    MlpParams,
    MlpSpec,
    OptimizerState,
    Tensor,
    loss_and_grad,
    mlp_apply,
    mlp_forward,
    mlp_init,
    optimizer_step,
    t_bce_mean,
)
from .errors import EmptyInputError, ShapeMismatchError

_STREAM_SHUFFLE = 201
_STREAM_BACKGROUND = 202
_STREAM_NOISE = 203


@dataclass(frozen=True)
class BaselineConfig:
    hidden_dim: int = 32
    num_layers: int = 4
    background_mix_ratio: float = 0.0
    noise_scale: float = 0.02
    learning_rate: float = 0.001
    num_epochs: int = 100
    batch_size: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.hidden_dim <= 0 or self.num_layers <= 0 or self.batch_size <= 0:
            raise ValueError("hidden_dim, num_layers, and batch_size must be positive")
        if self.background_mix_ratio < 0 or self.noise_scale < 0:
            raise ValueError("background_mix_ratio and noise_scale must be non-negative")
        if self.learning_rate <= 0 or self.num_epochs < 1:
            raise ValueError("learning_rate must be positive and num_epochs at least 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class Normalizer:
    """Per-feature affine map sending the training min/max to -1/+1."""

    lo: np.ndarray
    hi: np.ndarray


def fit_normalizer(features) -> Normalizer:
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise EmptyInputError("normalizer needs at least one feature row")
    return Normalizer(lo=feats.min(axis=0), hi=feats.max(axis=0))


def apply_normalizer(norm: Normalizer, features) -> np.ndarray:
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != norm.lo.shape[0]:
        raise ShapeMismatchError(
            f"features have width {feats.shape[1] if feats.ndim == 2 else '?'}, "
            f"normalizer was fit on {norm.lo.shape[0]}"
        )
    span = norm.hi - norm.lo
    out = np.zeros_like(feats)
    live = span > 0
    # Constant training columns map to 0 regardless of the input value.
    out[:, live] = -1.0 + 2.0 * (feats[:, live] - norm.lo[live]) / span[live]
    return out


def _epoch_rng(seed: int, *streams: int) -> np.random.Generator:
    return np.random.default_rng([seed, *streams])


def training_rows(dataset, include_coords: bool = False):
    """Normalized PO/background design matrices and the PO label matrix.

    PO rows are the aggregated presence-only locations; the label matrix
    marks species with at least one detection there. The normalizer is fit
    on the union of PO and background rows.
    """
    from .nceas_ingest import location_feature_blocks

    agg, po_feats, bg_feats = location_feature_blocks(dataset, include_coords)
    norm = fit_normalizer(np.vstack([po_feats, bg_feats]))
    n_species = len(dataset.species_ids)
    labels = np.zeros((po_feats.shape[0], n_species))
    labels[agg.detection_pairs[:, 0], agg.detection_pairs[:, 1]] = 1.0
    return (
        apply_normalizer(norm, po_feats),
        apply_normalizer(norm, bg_feats),
        labels,
        norm,
    )


def train_baseline(dataset, config: BaselineConfig, include_coords: bool = False):
    """Minibatch training; returns (params, per-epoch TrainHistory).

    Each batch takes a slice of shuffled PO rows plus background rows in
    the proportion `background_mix_ratio` (background per PO row). With a
    ratio of 0 batches contain PO rows only.
    """
    from .trainer import EpochRecord, TrainHistory

    x_po, x_bg, y_po, _ = training_rows(dataset, include_coords)
    n_po, n_species = y_po.shape
    n_bg = x_bg.shape[0]

    ratio = config.background_mix_ratio
    batch_po = max(1, int(round(config.batch_size / (1.0 + ratio))))
    batch_bg = min(int(round(batch_po * ratio)), n_bg)

    spec = MlpSpec(
        input_dim=x_po.shape[1],
        hidden_dim=config.hidden_dim,
        num_hidden_layers=config.num_layers,
        output_dim=n_species,
        activation="relu",
    )
    params = mlp_init(spec, config.seed)
    state = OptimizerState.init(params)
    history = TrainHistory()

    for epoch in range(config.num_epochs):
        t0 = time.perf_counter()
        order = _epoch_rng(config.seed, epoch, _STREAM_SHUFFLE).permutation(n_po)
        losses = []
        for b, start in enumerate(range(0, n_po, batch_po)):
            po_idx = order[start : start + batch_po]
            if batch_bg:
                bg_idx = _epoch_rng(config.seed, epoch, _STREAM_BACKGROUND, b).choice(
                    n_bg, size=batch_bg, replace=False
                )
                x = np.vstack([x_po[po_idx], x_bg[bg_idx]])
                y = np.vstack([y_po[po_idx], np.zeros((batch_bg, n_species))])
            else:
                x = x_po[po_idx]
                y = y_po[po_idx]
            if config.noise_scale > 0:
                x = x + _epoch_rng(config.seed, epoch, _STREAM_NOISE, b).uniform(
                    -config.noise_scale, config.noise_scale, size=x.shape
                )

            def loss_fn(p):
                return t_bce_mean(mlp_apply(p, Tensor(x)), y)

            loss, grads = loss_and_grad(loss_fn, params)
            params, state = optimizer_step(params, grads, state, config.learning_rate)
            losses.append(loss)
        history.records.append(
            EpochRecord(
                epoch, float(np.mean(losses)), int(y_po.sum()),
                len(losses) * batch_bg * n_species, time.perf_counter() - t0,
            )
        )
    return params, history


def predict_baseline(params: MlpParams, normalized_features) -> np.ndarray:
    """Per-species probabilities; inference applies no noise."""
    feats = np.asarray(normalized_features, dtype=np.float64)
    return sigmoid(mlp_forward(params, feats))

"""Pseudo-negative target pairs for link-prediction training.

Negatives come from two pools: unobserved species at presence-only
locations, and any species at background locations. Observed (location,
species) pairs are never negatives. Sampling is without replacement
within an epoch and fully determined by (config.seed, epoch).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import IndexOutOfBoundsError, InfeasibleRequestError

STRATEGIES = ("uniform", "stratified_k_locations")
MATCH_POSITIVE_COUNT = "match_positive_count"

_STREAM_NEGATIVES = 101
_STREAM_PROPORTION = 102
_STREAM_BATCH = 103


class LabeledPair(NamedTuple):
    location_index: int
    species_index: int
    label: int


@dataclass(frozen=True)
class SamplingConfig:
    strategy: str = "uniform"
    k_locations: int = 1
    negatives_per_epoch: int | str = MATCH_POSITIVE_COUNT
    proportion_from_po: float | str = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.k_locations < 1:
            raise ValueError("k_locations must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if isinstance(self.negatives_per_epoch, str):
            if self.negatives_per_epoch != MATCH_POSITIVE_COUNT:
                raise ValueError(
                    f"negatives_per_epoch must be an integer or {MATCH_POSITIVE_COUNT!r}"
                )
        elif self.negatives_per_epoch < 0:
            raise ValueError("negatives_per_epoch must be non-negative")
        if isinstance(self.proportion_from_po, str):
            if self.proportion_from_po != "random":
                raise ValueError("proportion_from_po must be a real in [0, 1] or 'random'")
        elif not 0.0 <= self.proportion_from_po <= 1.0:
            raise ValueError("proportion_from_po must lie in [0, 1]")


def _epoch_rng(seed: int, epoch: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, epoch, stream])


def _resolve_proportion(config: SamplingConfig, epoch: int) -> float:
    if config.proportion_from_po == "random":
        # One uniform draw per epoch, from a stream separate from sampling.
        return float(_epoch_rng(config.seed, epoch, _STREAM_PROPORTION).uniform())
    return float(config.proportion_from_po)


def _positive_arrays(positives: Sequence, num_po_locations: int, num_species: int):
    if len(positives) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    arr = np.asarray([(p[0], p[1]) for p in positives], dtype=np.int64)
    locs, sps = arr[:, 0], arr[:, 1]
    if locs.min() < 0 or locs.max() >= num_po_locations:
        raise IndexOutOfBoundsError(
            "positive pairs must reference presence-only locations"
        )
    if sps.min() < 0 or sps.max() >= num_species:
        raise IndexOutOfBoundsError("positive species index out of range")
    return locs, sps


def sample_negatives(
    positives: Sequence,
    num_po_locations: int,
    num_background_locations: int,
    num_species: int,
    config: SamplingConfig,
    epoch: int,
) -> list[LabeledPair]:
    """Draw label-0 pairs for one epoch.

    A fraction `proportion_from_po` comes from (PO location, unobserved
    species); the rest from (background location, any species). Background
    location indices continue after the PO block, matching the training
    graph's node ordering.
    """
    pos_locs, pos_sps = _positive_arrays(positives, num_po_locations, num_species)
    pos_flat = np.unique(pos_locs * num_species + pos_sps)
    proportion = _resolve_proportion(config, epoch)
    rng = _epoch_rng(config.seed, epoch, _STREAM_NEGATIVES)

    if config.strategy == "uniform":
        return _sample_uniform(
            pos_flat, num_po_locations, num_background_locations, num_species,
            config, proportion, len(positives), rng,
        )
    return _sample_stratified(
        pos_flat, num_po_locations, num_background_locations, num_species,
        config, proportion, rng,
    )


def _decode_pairs(flat: np.ndarray, num_species: int, loc_offset: int) -> list[LabeledPair]:
    locs = loc_offset + flat // num_species
    sps = flat % num_species
    return [LabeledPair(int(l), int(s), 0) for l, s in zip(locs, sps)]


def _sample_uniform(
    pos_flat, num_po, num_bg, num_species, config, proportion, n_positive, rng
) -> list[LabeledPair]:
    if config.negatives_per_epoch == MATCH_POSITIVE_COUNT:
        count = n_positive
    else:
        count = int(config.negatives_per_epoch)
    n_po = int(round(proportion * count))
    n_bg = count - n_po

    po_pool = np.setdiff1d(np.arange(num_po * num_species, dtype=np.int64), pos_flat)
    bg_pool_size = num_bg * num_species
    if n_po > po_pool.size:
        raise InfeasibleRequestError(
            f"requested {n_po} PO negatives but only {po_pool.size} candidate pairs exist"
        )
    if n_bg > bg_pool_size:
        raise InfeasibleRequestError(
            f"requested {n_bg} background negatives but only {bg_pool_size} pairs exist"
        )
    po_draw = rng.choice(po_pool, size=n_po, replace=False) if n_po else np.zeros(0, np.int64)
    bg_draw = (
        rng.choice(bg_pool_size, size=n_bg, replace=False) if n_bg else np.zeros(0, np.int64)
    )
    return _decode_pairs(np.asarray(po_draw, np.int64), num_species, 0) + _decode_pairs(
        np.asarray(bg_draw, np.int64), num_species, num_po
    )


def _sample_stratified(
    pos_flat, num_po, num_bg, num_species, config, proportion, rng
) -> list[LabeledPair]:
    """k negative locations per species, split between pools by proportion.

    Species whose combined pool is smaller than k receive the whole pool;
    the per-species count never exceeds what is available, so no error is
    raised here.
    """
    k = config.k_locations
    pos_sp = pos_flat % num_species
    pos_loc = pos_flat // num_species
    out: list[LabeledPair] = []
    all_po = np.arange(num_po, dtype=np.int64)
    for sp in range(num_species):
        po_pool = np.setdiff1d(all_po, pos_loc[pos_sp == sp])
        target = min(k, po_pool.size + num_bg)
        n_po = min(int(round(proportion * target)), int(po_pool.size))
        n_bg = target - n_po
        if n_bg > num_bg:
            n_po += n_bg - num_bg
            n_bg = num_bg
        if n_po:
            for loc in rng.choice(po_pool, size=n_po, replace=False):
                out.append(LabeledPair(int(loc), sp, 0))
        if n_bg:
            for loc in rng.choice(num_bg, size=n_bg, replace=False):
                out.append(LabeledPair(int(num_po + loc), sp, 0))
    return out


def build_epoch_batch(
    positives: Sequence, negatives: Sequence, seed: int = 0, epoch: int = 0
) -> list[LabeledPair]:
    """All positives plus the epoch's negatives, deterministically shuffled."""
    for p in positives:
        if p[2] != 1:
            raise ValueError("positives must carry label 1")
    for n in negatives:
        if n[2] != 0:
            raise ValueError("negatives must carry label 0")
    combined = [LabeledPair(*p) for p in positives] + [LabeledPair(*n) for n in negatives]
    order = _epoch_rng(seed, epoch, _STREAM_BATCH).permutation(len(combined))
    return [combined[i] for i in order]

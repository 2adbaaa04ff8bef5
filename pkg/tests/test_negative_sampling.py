import numpy as np
import pytest

from hetero_sdm import negative_sampling as ns
from hetero_sdm.errors import InfeasibleRequestError


def pairs_set(samples):
    return {(p.location_index, p.species_index) for p in samples}


class TestUniform:
    def test_empty_po_pool_is_infeasible(self):
        # One PO location with both species observed, all negatives from PO.
        positives = [ns.LabeledPair(0, 0, 1), ns.LabeledPair(0, 1, 1)]
        config = ns.SamplingConfig(proportion_from_po=1.0, seed=0)
        with pytest.raises(InfeasibleRequestError):
            ns.sample_negatives(positives, 1, 5, 2, config, epoch=0)

    def test_complement_pool_exhausted_exactly(self):
        positives = [ns.LabeledPair(0, 0, 1), ns.LabeledPair(1, 1, 1)]
        config = ns.SamplingConfig(proportion_from_po=1.0, seed=0)
        out = ns.sample_negatives(positives, 2, 0, 2, config, epoch=0)
        assert pairs_set(out) == {(0, 1), (1, 0)}
        assert all(p.label == 0 for p in out)

    def test_background_pool_exhausted_exactly(self):
        positives = [ns.LabeledPair(0, 0, 1)]
        config = ns.SamplingConfig(
            proportion_from_po=0.0, negatives_per_epoch=4, seed=0
        )
        out = ns.sample_negatives(positives, 1, 2, 2, config, epoch=0)
        # Background locations index after the PO block: 1 and 2.
        assert pairs_set(out) == {(1, 0), (1, 1), (2, 0), (2, 1)}

    def test_match_positive_count(self):
        positives = [ns.LabeledPair(i, 0, 1) for i in range(5)]
        config = ns.SamplingConfig(proportion_from_po=0.0, seed=1)
        out = ns.sample_negatives(positives, 5, 10, 3, config, epoch=2)
        assert len(out) == 5

    def test_negatives_never_overlap_positives(self):
        rng = np.random.default_rng(3)
        for trial in range(20):
            n_po, n_sp = 6, 4
            flat = rng.choice(n_po * n_sp, size=8, replace=False)
            positives = [ns.LabeledPair(int(f // n_sp), int(f % n_sp), 1) for f in flat]
            config = ns.SamplingConfig(
                proportion_from_po=0.75, negatives_per_epoch=8, seed=trial
            )
            out = ns.sample_negatives(positives, n_po, 5, n_sp, config, epoch=trial)
            assert not (pairs_set(out) & {(p[0], p[1]) for p in positives})
            assert len(pairs_set(out)) == len(out)  # without replacement

    def test_proportion_respected_to_rounding(self):
        positives = [ns.LabeledPair(0, 0, 1)]
        for proportion in (0.0, 0.25, 0.5, 0.75, 1.0):
            config = ns.SamplingConfig(
                proportion_from_po=proportion, negatives_per_epoch=40, seed=5
            )
            out = ns.sample_negatives(positives, 10, 20, 5, config, epoch=0)
            realized = sum(1 for p in out if p.location_index < 10) / len(out)
            assert abs(realized - proportion) <= 1.0 / len(out) + 1e-12

    def test_deterministic_in_seed_and_epoch(self):
        positives = [ns.LabeledPair(0, 1, 1), ns.LabeledPair(3, 2, 1)]
        config = ns.SamplingConfig(proportion_from_po=0.5, negatives_per_epoch=10, seed=9)
        a = ns.sample_negatives(positives, 5, 8, 4, config, epoch=3)
        b = ns.sample_negatives(positives, 5, 8, 4, config, epoch=3)
        c = ns.sample_negatives(positives, 5, 8, 4, config, epoch=4)
        assert a == b
        assert a != c

    def test_random_proportion_mode(self):
        positives = [ns.LabeledPair(0, 0, 1)]
        config = ns.SamplingConfig(
            proportion_from_po="random", negatives_per_epoch=10, seed=2
        )
        a = ns.sample_negatives(positives, 6, 8, 4, config, epoch=0)
        b = ns.sample_negatives(positives, 6, 8, 4, config, epoch=0)
        assert a == b
        fractions = set()
        for epoch in range(5):
            out = ns.sample_negatives(positives, 6, 8, 4, config, epoch=epoch)
            fractions.add(sum(1 for p in out if p.location_index < 6))
        assert len(fractions) > 1  # the proportion actually varies by epoch


class TestStratified:
    def test_every_species_gets_min_k_pool(self):
        # Species 0 observed at 3 of 4 PO locations; no background.
        positives = [ns.LabeledPair(i, 0, 1) for i in range(3)]
        config = ns.SamplingConfig(
            strategy="stratified_k_locations", k_locations=2,
            proportion_from_po=1.0, seed=0,
        )
        out = ns.sample_negatives(positives, 4, 0, 2, config, epoch=0)
        by_species = {}
        for p in out:
            by_species.setdefault(p.species_index, []).append(p)
        assert len(by_species[0]) == 1  # pool is a single free location
        assert len(by_species[1]) == 2  # full k
        assert (3, 0) in pairs_set(out)

    def test_split_between_pools(self):
        config = ns.SamplingConfig(
            strategy="stratified_k_locations", k_locations=4,
            proportion_from_po=0.5, seed=1,
        )
        out = ns.sample_negatives([], 10, 10, 3, config, epoch=0)
        assert len(out) == 12
        for sp in range(3):
            members = [p for p in out if p.species_index == sp]
            po_count = sum(1 for p in members if p.location_index < 10)
            assert po_count == 2 and len(members) == 4

    def test_deterministic(self):
        config = ns.SamplingConfig(
            strategy="stratified_k_locations", k_locations=3, seed=4,
        )
        a = ns.sample_negatives([], 6, 6, 4, config, epoch=1)
        b = ns.sample_negatives([], 6, 6, 4, config, epoch=1)
        assert a == b


class TestBuildEpochBatch:
    def test_concatenation_counts(self):
        pos = [ns.LabeledPair(i, 0, 1) for i in range(10)]
        neg = [ns.LabeledPair(i, 1, 0) for i in range(10)]
        batch = ns.build_epoch_batch(pos, neg, seed=0, epoch=0)
        assert len(batch) == 20
        assert sum(p.label for p in batch) == 10

    def test_zero_negatives(self):
        pos = [ns.LabeledPair(i, 0, 1) for i in range(4)]
        batch = ns.build_epoch_batch(pos, [], seed=0, epoch=0)
        assert sorted(batch) == sorted(pos)

    def test_deterministic_shuffle(self):
        pos = [ns.LabeledPair(i, 0, 1) for i in range(8)]
        neg = [ns.LabeledPair(i, 1, 0) for i in range(8)]
        a = ns.build_epoch_batch(pos, neg, seed=3, epoch=5)
        b = ns.build_epoch_batch(pos, neg, seed=3, epoch=5)
        c = ns.build_epoch_batch(pos, neg, seed=3, epoch=6)
        assert a == b and a != c

    def test_label_consistency_enforced(self):
        with pytest.raises(ValueError):
            ns.build_epoch_batch([ns.LabeledPair(0, 0, 0)], [])
        with pytest.raises(ValueError):
            ns.build_epoch_batch([], [ns.LabeledPair(0, 0, 1)])


def test_config_validation():
    with pytest.raises(ValueError):
        ns.SamplingConfig(strategy="nearest")
    with pytest.raises(ValueError):
        ns.SamplingConfig(proportion_from_po=1.5)
    with pytest.raises(ValueError):
        ns.SamplingConfig(negatives_per_epoch="sometimes")
    with pytest.raises(ValueError):
        ns.SamplingConfig(k_locations=0)

"""
Pseudo-negative sampling strategies and the gradient check
==========================================================

Two short studies on machinery that is easy to get silently wrong.

First, negative sampling: negatives come either from presence-only
locations (pairing them with species never observed there) or from
background locations (pairing them with any species). The demo shows how
the PO/background proportion and the stratified strategy shape what the
trainer actually sees.

Second, the gradient check: analytic gradients from the reverse-mode tape
are compared against central finite differences for every parameter role
of a full model, which is the same check `hetero-sdm gradcheck` runs.
"""

from collections import Counter

import numpy as np

from hetero_sdm import autodiff_nn as ad
from hetero_sdm.interaction_gnn import ModelConfig, init_param_store, score_pairs_tensor
from hetero_sdm.negative_sampling import (
    LabeledPair,
    SamplingConfig,
    build_epoch_batch,
    sample_negatives,
)
from hetero_sdm.synthetic import make_toy_graph

# ---------------------------------------------------------------------------
# Sampling strategies on a small pool: 6 PO locations, 4 background, 3 species.
# ---------------------------------------------------------------------------

positives = [LabeledPair(0, 0, 1), LabeledPair(1, 0, 1), LabeledPair(2, 1, 1),
             LabeledPair(3, 2, 1), LabeledPair(4, 2, 1)]

for proportion in (1.0, 0.5, 0.0):
    config = SamplingConfig(proportion_from_po=proportion, negatives_per_epoch=8, seed=0)
    negs = sample_negatives(positives, 6, 4, 3, config, epoch=0)
    from_po = sum(1 for p in negs if p.location_index < 6)
    print(f"uniform, proportion {proportion:.1f}: {from_po}/8 negatives from PO locations")

config = SamplingConfig(
    strategy="stratified_k_locations", k_locations=3, proportion_from_po=0.5, seed=0
)
negs = sample_negatives(positives, 6, 4, 3, config, epoch=0)
per_species = Counter(p.species_index for p in negs)
print(f"stratified k=3: negatives per species {dict(sorted(per_species.items()))}")

batch = build_epoch_batch(positives, negs, seed=0, epoch=0)
print(f"epoch batch: {len(batch)} pairs, "
      f"{sum(p.label for p in batch)} positive / {sum(1 - p.label for p in batch)} negative")

# Resampling differs across epochs but is reproducible within one.
a0 = sample_negatives(positives, 6, 4, 3, config, epoch=0)
a1 = sample_negatives(positives, 6, 4, 3, config, epoch=1)
print("epoch 0 == epoch 0 resample:", a0 == sample_negatives(positives, 6, 4, 3, config, epoch=0))
print("epoch 0 == epoch 1 resample:", a0 == a1)

# ---------------------------------------------------------------------------
# Finite-difference gradient check on the fullest model variant.
# ---------------------------------------------------------------------------

model = ModelConfig(
    latent_dim=8, num_hidden_layers=1, num_message_passing_steps=2,
    direction="bidirectional", include_negative_edges=True,
    aggregation="segment_mean", activation="silu",
)
graph, pairs, labels = make_toy_graph(seed=2)
store = init_param_store(graph, model, seed=11)


def loss_fn(roles):
    scores = score_pairs_tensor(graph, roles, model, pairs[:, 0], pairs[:, 1])
    return ad.t_bce_mean(scores, labels)


analytic = ad.grad(loss_fn, store.roles)
numeric = ad.finite_difference_grads(loss_fn, store.roles, eps=1e-5)
result = ad.compare_gradients(analytic, numeric)
n_params = sum(leaf.size for leaf in ad.tree_leaves(store.roles))
print(f"\ngradient check over {len(store.roles)} roles / {n_params} parameters:")
print(f"  max relative error      {result.max_rel_error:.3e}")
print(f"  near-zero absolute error {result.max_abs_error_near_zero:.3e}")
print(f"  within tolerance: {result.ok}")

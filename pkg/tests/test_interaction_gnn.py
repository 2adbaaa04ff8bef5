import numpy as np
import pytest

from hetero_sdm import autodiff_nn as ad
from hetero_sdm import interaction_gnn as ig
from hetero_sdm import typed_graph as tg
from hetero_sdm.errors import (
    IndexOutOfBoundsError,
    MissingEdgeSetError,
    ShapeMismatchError,
)
from hetero_sdm.synthetic import make_toy_graph

from reference_impls import oracle_message_passing, oracle_one_way_step

ONE_WAY = ig.ModelConfig(
    latent_dim=2, num_hidden_layers=1, num_message_passing_steps=1,
    direction="one_way", aggregation="segment_sum", activation="silu",
)


def zero_roles_like(store):
    return ig.ParamStore(roles=ad.tree_map(np.zeros_like, store.roles))


class TestOracle:
    """Pinned-parameter comparison against the straight-line reference."""

    def test_encode_matches_reference(self, two_by_two_graph):
        store = ig.init_param_store(two_by_two_graph, ONE_WAY, seed=42)
        latent = ig.encode(two_by_two_graph, store, ONE_WAY)
        _, ref = oracle_one_way_step(two_by_two_graph, store.roles, pairs=[(0, 0)])
        np.testing.assert_allclose(latent.nodes["location"], ref["encoded_location"], atol=1e-6)
        np.testing.assert_allclose(latent.nodes["species"], ref["encoded_species"], atol=1e-6)
        np.testing.assert_allclose(latent.edges["det_l2s"], ref["encoded_det_l2s"], atol=1e-6)

    def test_process_step_matches_reference(self, two_by_two_graph):
        store = ig.init_param_store(two_by_two_graph, ONE_WAY, seed=42)
        latent = ig.encode(two_by_two_graph, store, ONE_WAY)
        stepped = ig.process_step(latent, two_by_two_graph, store, ONE_WAY, step=0)
        _, ref = oracle_one_way_step(two_by_two_graph, store.roles, pairs=[(0, 0)])
        np.testing.assert_allclose(stepped.nodes["location"], ref["location"], atol=1e-6)
        np.testing.assert_allclose(stepped.nodes["species"], ref["species"], atol=1e-6)
        np.testing.assert_allclose(stepped.edges["det_l2s"], ref["det_l2s"], atol=1e-6)

    def test_forward_matches_reference(self, two_by_two_graph):
        store = ig.init_param_store(two_by_two_graph, ONE_WAY, seed=42)
        pairs = [(0, 0), (0, 1), (1, 0), (1, 1)]
        scores = ig.forward(two_by_two_graph, store, ONE_WAY, pairs)
        ref_scores, _ = oracle_one_way_step(two_by_two_graph, store.roles, pairs)
        np.testing.assert_allclose(scores, ref_scores, atol=1e-6)

    @pytest.mark.parametrize("direction", ["one_way", "bidirectional"])
    @pytest.mark.parametrize("negative", [False, True])
    @pytest.mark.parametrize("aggregation", ["segment_sum", "segment_mean"])
    def test_all_variants_match_looped_reference(self, direction, negative, aggregation):
        config = ig.ModelConfig(
            latent_dim=5, num_hidden_layers=2, num_message_passing_steps=2,
            direction=direction, include_negative_edges=negative,
            aggregation=aggregation, activation="softplus",
        )
        graph, pairs, _ = make_toy_graph(seed=3)
        store = ig.init_param_store(graph, config, seed=17)
        scores = ig.forward(graph, store, config, pairs)
        ref = oracle_message_passing(graph, store.roles, config, pairs)
        np.testing.assert_allclose(scores, ref, atol=1e-9)


class TestEncode:
    def test_zero_weight_embedders_give_zero_latents(self, two_by_two_graph):
        store = zero_roles_like(ig.init_param_store(two_by_two_graph, ONE_WAY, seed=0))
        latent = ig.encode(two_by_two_graph, store, ONE_WAY)
        for mat in list(latent.nodes.values()) + list(latent.edges.values()):
            np.testing.assert_array_equal(mat, np.zeros_like(mat))

    def test_latent_widths_equal_config(self, two_by_two_graph):
        config = ig.ModelConfig(
            latent_dim=7, num_hidden_layers=1, num_message_passing_steps=1,
            activation="relu",
        )
        store = ig.init_param_store(two_by_two_graph, config, seed=1)
        latent = ig.encode(two_by_two_graph, store, config)
        assert all(m.shape[1] == 7 for m in latent.nodes.values())
        assert all(m.shape[1] == 7 for m in latent.edges.values())

    def test_missing_edge_set_error(self, two_by_two_graph):
        config = ig.ModelConfig(
            latent_dim=4, num_hidden_layers=1, num_message_passing_steps=1,
            include_negative_edges=True, activation="relu",
        )
        store = ig.init_param_store(two_by_two_graph, config, seed=0)
        with pytest.raises(MissingEdgeSetError):
            ig.encode(two_by_two_graph, store, config)


class TestProcessStep:
    def test_zero_processors_are_identity(self, two_by_two_graph):
        store = ig.init_param_store(two_by_two_graph, ONE_WAY, seed=5)
        zeroed = dict(store.roles)
        for role in ig.required_roles(ONE_WAY):
            if role.startswith("proc/"):
                zeroed[role] = ad.tree_map(np.zeros_like, store.roles[role])
        latent = ig.encode(two_by_two_graph, store, ONE_WAY)
        stepped = ig.process_step(latent, two_by_two_graph, ig.ParamStore(zeroed), ONE_WAY)
        for name in latent.nodes:
            np.testing.assert_array_equal(stepped.nodes[name], latent.nodes[name])
        for name in latent.edges:
            np.testing.assert_array_equal(stepped.edges[name], latent.edges[name])

    def test_one_way_location_latents_ignore_species(self, two_by_two_graph):
        store = ig.init_param_store(two_by_two_graph, ONE_WAY, seed=6)
        perturbed_nodes = dict(two_by_two_graph.node_sets)
        perturbed_nodes[tg.SPECIES] = tg.NodeSet(tg.SPECIES, 2, 5.0 * np.eye(2) + 1.0)
        perturbed = tg.TypedGraph(perturbed_nodes, two_by_two_graph.edge_sets)

        base = ig.run_message_passing(two_by_two_graph, store, ONE_WAY)
        other = ig.run_message_passing(perturbed, store, ONE_WAY)
        np.testing.assert_array_equal(
            base.nodes[tg.LOCATION], other.nodes[tg.LOCATION]
        )
        assert not np.array_equal(base.nodes[tg.SPECIES], other.nodes[tg.SPECIES])

    def test_mean_aggregation_invariant_to_duplicated_locations(self):
        config = ig.ModelConfig(
            latent_dim=3, num_hidden_layers=1, num_message_passing_steps=1,
            aggregation="segment_mean", activation="silu",
        )
        feats = np.array([[0.3, -0.7]])
        single = tg.TypedGraph()
        single = tg.add_node_set(single, tg.NodeSet(tg.LOCATION, 1, feats))
        single = tg.add_node_set(single, tg.NodeSet(tg.SPECIES, 1, np.eye(1)))
        single = tg.add_edge_set(
            single,
            tg.EdgeSet(tg.DET_L2S, tg.LOCATION, tg.SPECIES, [0], [0], np.ones((1, 1))),
        )
        doubled = tg.TypedGraph()
        doubled = tg.add_node_set(doubled, tg.NodeSet(tg.LOCATION, 2, np.vstack([feats, feats])))
        doubled = tg.add_node_set(doubled, tg.NodeSet(tg.SPECIES, 1, np.eye(1)))
        doubled = tg.add_edge_set(
            doubled,
            tg.EdgeSet(tg.DET_L2S, tg.LOCATION, tg.SPECIES, [0, 1], [0, 0], np.ones((2, 1))),
        )
        store = ig.init_param_store(single, config, seed=9)
        lat_single = ig.run_message_passing(single, store, config)
        lat_doubled = ig.run_message_passing(doubled, store, config)
        np.testing.assert_allclose(
            lat_single.nodes[tg.SPECIES], lat_doubled.nodes[tg.SPECIES], atol=1e-12
        )


class TestDecode:
    def test_orthogonal_latents_score_zero(self):
        latent = ig.LatentGraph(
            nodes={tg.LOCATION: np.array([[1.0, 0.0]]), tg.SPECIES: np.array([[0.0, 1.0]])},
            edges={},
        )
        scores = ig.decode_scores(latent, [(0, 0)])
        assert scores[0] == 0.0

    def test_identical_unit_latents_score_one(self):
        latent = ig.LatentGraph(
            nodes={tg.LOCATION: np.array([[1.0, 0.0]]), tg.SPECIES: np.array([[1.0, 0.0]])},
            edges={},
        )
        assert ig.decode_scores(latent, [(0, 0)])[0] == 1.0

    def test_score_order_follows_pair_order(self):
        rng = np.random.default_rng(2)
        latent = ig.LatentGraph(
            nodes={tg.LOCATION: rng.normal(size=(3, 4)), tg.SPECIES: rng.normal(size=(2, 4))},
            edges={},
        )
        pairs = [(0, 0), (2, 1), (1, 0), (1, 1)]
        scores = ig.decode_scores(latent, pairs)
        perm = [2, 0, 3, 1]
        permuted = ig.decode_scores(latent, [pairs[i] for i in perm])
        np.testing.assert_array_equal(permuted, scores[perm])

    def test_pair_index_out_of_range(self):
        latent = ig.LatentGraph(
            nodes={tg.LOCATION: np.zeros((2, 3)), tg.SPECIES: np.zeros((2, 3))},
            edges={},
        )
        with pytest.raises(IndexOutOfBoundsError):
            ig.decode_scores(latent, [(5, 0)])

    def test_doubling_species_latent_doubles_scores(self):
        rng = np.random.default_rng(3)
        loc = rng.normal(size=(3, 4))
        sp = rng.normal(size=(2, 4))
        pairs = [(i, 1) for i in range(3)]
        base = ig.decode_scores(ig.LatentGraph({tg.LOCATION: loc, tg.SPECIES: sp}, {}), pairs)
        sp2 = sp.copy()
        sp2[1] *= 2.0
        doubled = ig.decode_scores(ig.LatentGraph({tg.LOCATION: loc, tg.SPECIES: sp2}, {}), pairs)
        np.testing.assert_allclose(doubled, 2.0 * base, rtol=1e-12)


class TestForward:
    def test_steps_must_be_at_least_one(self):
        with pytest.raises(ValueError):
            ig.ModelConfig(latent_dim=4, num_hidden_layers=1, num_message_passing_steps=0)

    def test_matches_manual_composition(self, two_by_two_graph):
        config = ig.ModelConfig(
            latent_dim=4, num_hidden_layers=1, num_message_passing_steps=3,
            direction="bidirectional", aggregation="segment_mean", activation="relu",
        )
        store = ig.init_param_store(two_by_two_graph, config, seed=13)
        pairs = [(0, 0), (1, 1)]
        latent = ig.encode(two_by_two_graph, store, config)
        for step in range(3):
            latent = ig.process_step(latent, two_by_two_graph, store, config, step=step)
        composed = ig.decode_scores(latent, pairs)
        direct = ig.forward(two_by_two_graph, store, config, pairs)
        np.testing.assert_allclose(direct, composed, atol=1e-12)

    def test_pairs_need_no_graph_edges(self, two_by_two_graph):
        store = ig.init_param_store(two_by_two_graph, ONE_WAY, seed=0)
        # (0, 0) and (1, 1) carry no detection edge in the fixture.
        scores = ig.forward(two_by_two_graph, store, ONE_WAY, [(0, 0), (1, 1)])
        assert scores.shape == (2,) and np.all(np.isfinite(scores))

    def test_permutation_equivariance(self):
        config = ig.ModelConfig(
            latent_dim=4, num_hidden_layers=1, num_message_passing_steps=2,
            direction="bidirectional", aggregation="segment_sum", activation="silu",
        )
        graph, pairs, _ = make_toy_graph(n_locations=5, n_species=4, seed=21)
        store = ig.init_param_store(graph, config, seed=4)
        scores = ig.forward(graph, store, config, pairs)

        rng = np.random.default_rng(0)
        loc_perm = rng.permutation(5)
        sp_perm = rng.permutation(4)
        loc_inv = np.argsort(loc_perm)
        sp_inv = np.argsort(sp_perm)

        def relabel(es):
            perm_s = loc_inv if es.sender_set == tg.LOCATION else sp_inv
            perm_r = loc_inv if es.receiver_set == tg.LOCATION else sp_inv
            return tg.EdgeSet(
                es.name, es.sender_set, es.receiver_set,
                perm_s[es.senders], perm_r[es.receivers], es.features,
            )

        nodes = {
            tg.LOCATION: tg.NodeSet(
                tg.LOCATION, 5, graph.node_sets[tg.LOCATION].features[loc_perm]
            ),
            tg.SPECIES: tg.NodeSet(
                tg.SPECIES, 4, graph.node_sets[tg.SPECIES].features[sp_perm]
            ),
        }
        edges = {name: relabel(es) for name, es in graph.edge_sets.items()}
        permuted_graph = tg.TypedGraph(nodes, edges)
        permuted_pairs = [(loc_inv[i], sp_inv[j]) for i, j in pairs]
        permuted_scores = ig.forward(permuted_graph, store, config, permuted_pairs)
        np.testing.assert_allclose(permuted_scores, scores, atol=1e-10)


class TestParamStore:
    def test_exactly_required_roles(self, two_by_two_graph):
        config = ig.ModelConfig(
            latent_dim=4, num_hidden_layers=1, num_message_passing_steps=2,
            direction="bidirectional", activation="relu",
        )
        store = ig.init_param_store(two_by_two_graph, config, seed=0)
        assert set(store.roles) == set(ig.required_roles(config))
        ig.validate_param_store(store, config)

    def test_validation_rejects_missing_role(self, two_by_two_graph):
        store = ig.init_param_store(two_by_two_graph, ONE_WAY, seed=0)
        broken = dict(store.roles)
        broken.pop("proc/0/node/location")
        with pytest.raises(ShapeMismatchError):
            ig.validate_param_store(ig.ParamStore(broken), ONE_WAY)

    def test_unshared_parameters_across_steps(self, two_by_two_graph):
        config = ig.ModelConfig(
            latent_dim=4, num_hidden_layers=1, num_message_passing_steps=2,
            activation="relu",
        )
        store = ig.init_param_store(two_by_two_graph, config, seed=0)
        w0 = store.roles["proc/0/edge/det_l2s"].weights[0]
        w1 = store.roles["proc/1/edge/det_l2s"].weights[0]
        assert not np.array_equal(w0, w1)

    def test_gradients_flow_end_to_end(self, two_by_two_graph):
        config = ig.ModelConfig(
            latent_dim=3, num_hidden_layers=1, num_message_passing_steps=1,
            direction="bidirectional", aggregation="segment_mean", activation="silu",
        )
        store = ig.init_param_store(two_by_two_graph, config, seed=7)
        labels = np.array([1.0, 0.0])

        def loss_fn(roles):
            scores = ig.score_pairs_tensor(
                two_by_two_graph, roles, config, np.array([0, 1]), np.array([1, 0])
            )
            return ad.t_bce_mean(scores, labels)

        analytic = ad.grad(loss_fn, store.roles)
        numeric = ad.finite_difference_grads(loss_fn, store.roles)
        result = ad.compare_gradients(analytic, numeric)
        assert result.ok, (result.max_rel_error, result.max_abs_error_near_zero)

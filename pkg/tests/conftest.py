import numpy as np
import pytest

from hetero_sdm import typed_graph as tg
from hetero_sdm.synthetic import make_synthetic_region, write_region_csvs


@pytest.fixture
def two_by_two_graph():
    """2 locations, 2 species, detection edges (0->1) and (1->0)."""
    graph = tg.TypedGraph()
    graph = tg.add_node_set(
        graph, tg.NodeSet(tg.LOCATION, 2, np.array([[0.5, -1.0], [2.0, 0.25]]))
    )
    graph = tg.add_node_set(graph, tg.NodeSet(tg.SPECIES, 2, np.eye(2)))
    det = tg.EdgeSet(
        tg.DET_L2S, tg.LOCATION, tg.SPECIES,
        senders=np.array([0, 1]), receivers=np.array([1, 0]),
        features=np.ones((2, 1)),
    )
    graph = tg.add_edge_set(graph, det)
    graph = tg.add_edge_set(graph, tg.reverse_edge_set(det, tg.DET_S2L))
    return graph


@pytest.fixture(scope="session")
def synthetic_region():
    """Default synthetic region used by recovery-style tests."""
    return make_synthetic_region(seed=7)


@pytest.fixture(scope="session")
def separable_region():
    """Small, strongly separable region for fast convergence checks."""
    return make_synthetic_region(
        n_species=5, n_po_locations=50, n_background=100, n_test=200,
        weight_scale=12.0, seed=11,
    )


@pytest.fixture(scope="session")
def awt_like_dir(tmp_path_factory):
    """CSV fixture with the AWT schema (13 env vars, 40 grouped species)."""
    dataset = make_synthetic_region(
        n_species=40, n_po_locations=80, n_background=150, n_test=44,
        n_env=13, groups=("bird", "plant"), seed=23, region_code="awt_like",
    )
    directory = tmp_path_factory.mktemp("awt_like")
    write_region_csvs(dataset, directory)
    return directory

"""Heterogeneous-graph species distribution modeling on presence-only data."""

from .autodiff_nn import (
    ACTIVATIONS,
    MlpParams,
    MlpSpec,
    OptimizerState,
    mlp_forward,
    mlp_init,
    optimizer_step,
    segment_reduce,
)
from .baseline_mlp import (
    BaselineConfig,
    Normalizer,
    apply_normalizer,
    fit_normalizer,
    predict_baseline,
    train_baseline,
)
from .evaluator import (
    EvalReport,
    auc_roc,
    build_test_graph,
    evaluate_predictions,
    evaluate_region,
    predict_matrix,
)
from .interaction_gnn import (
    LatentGraph,
    ModelConfig,
    ParamStore,
    decode_scores,
    encode,
    forward,
    init_param_store,
    process_step,
    run_message_passing,
)
from .nceas_ingest import (
    RegionDataset,
    aggregate_locations,
    build_species_features,
    build_training_graph,
    load_region,
    load_region_dir,
)
from .negative_sampling import (
    LabeledPair,
    SamplingConfig,
    build_epoch_batch,
    sample_negatives,
)
from .trainer import (
    TrainConfig,
    TrainHistory,
    bce_with_logits,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .typed_graph import (
    EdgeSet,
    NodeSet,
    TypedGraph,
    add_edge_set,
    add_node_set,
    reverse_edge_set,
)

__version__ = "0.1.0"

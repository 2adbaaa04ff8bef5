"""Batch command-line entry point: train, eval, sweep, gradcheck.

Runs are described by JSON manifests so they diff cleanly and reproduce
exactly. Exit codes: 0 success, 1 validation failure, 2 runtime failure,
3 gradient-check tolerance breach.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import itertools
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema

from . import nceas_ingest, trainer
from . import typed_graph as tg
from .autodiff_nn import compare_gradients, finite_difference_grads, loss_and_grad, t_bce_mean
from .baseline_mlp import BaselineConfig, predict_baseline, train_baseline
from .errors import (
    CheckpointError,
    HeteroSdmError,
    IngestError,
    ManifestError,
    NonFiniteLossError,
)
from .evaluator import (
    evaluate_predictions,
    evaluate_region,
    write_report_csv,
    write_report_json,
)
from .interaction_gnn import ModelConfig, init_param_store, score_pairs_tensor
from .negative_sampling import SamplingConfig, sample_negatives
from .synthetic import make_toy_graph
from .trainer import TrainConfig, load_checkpoint, save_checkpoint, train

logger = logging.getLogger("hetero_sdm.cli")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_GRADCHECK = 3

GRADCHECK_REL_TOL = 1e-4
GRADCHECK_ABS_TOL = 1e-6

_REGION_KEYS = ["po", "bg", "pa_env", "pa_labels", "species"]

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["model_kind", "region", "seed", "out_dir"],
    "properties": {
        "model_kind": {"enum": ["gnn", "baseline"]},
        "region": {
            "oneOf": [
                {
                    "type": "object",
                    "required": ["dir"],
                    "properties": {"dir": {"type": "string"}},
                    "additionalProperties": False,
                },
                {
                    "type": "object",
                    "required": _REGION_KEYS,
                    "properties": {k: {"type": "string"} for k in _REGION_KEYS},
                    "additionalProperties": False,
                },
            ]
        },
        "seed": {"type": "integer", "minimum": 0},
        "out_dir": {"type": "string"},
        "region_code": {"type": "string"},
        "model": {"type": "object"},
        "train": {"type": "object"},
        "baseline": {"type": "object"},
        "include_coords": {"type": "boolean"},
        "normalize_inputs": {"type": "boolean"},
    },
    "additionalProperties": False,
}

SWEEP_SCHEMA = {
    "type": "object",
    "required": ["manifest", "grid", "out_dir"],
    "properties": {
        "manifest": {"type": ["string", "object"]},
        "grid": {
            "type": "object",
            "minProperties": 1,
            "additionalProperties": {"type": "array", "minItems": 1},
        },
        "out_dir": {"type": "string"},
    },
    "additionalProperties": False,
}

DEFAULT_MODEL = {
    "latent_dim": 16,
    "num_hidden_layers": 1,
    "num_message_passing_steps": 1,
}

DEFAULT_TRAIN = {
    "learning_rate": 0.001,
    "num_epochs": 100,
    "checkpoint_every": 0,
}


def _configure_logging() -> None:
    level = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("HETERO_SDM_LOG", "info"), logging.INFO
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _load_json(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ManifestError(f"file not found: {p}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{p}: invalid JSON ({exc})") from exc


def load_manifest(path) -> dict:
    manifest = _load_json(path)
    validate_manifest(manifest)
    return manifest


def validate_manifest(manifest: dict) -> None:
    try:
        jsonschema.validate(manifest, MANIFEST_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ManifestError(f"manifest invalid: {exc.message}") from exc
    if manifest["model_kind"] == "gnn" and "baseline" in manifest:
        raise ManifestError("manifest sets model_kind 'gnn' but carries a baseline block")
    if manifest["model_kind"] == "baseline" and ("model" in manifest or "train" in manifest):
        raise ManifestError("manifest sets model_kind 'baseline' but carries gnn blocks")


def _region_paths(region: dict) -> dict:
    if "dir" in region:
        d = Path(region["dir"])
        return {k: d / v for k, v in nceas_ingest.REGION_FILES.items()}
    return {k: Path(region[k]) for k in _REGION_KEYS}


def load_region_from_manifest(manifest: dict):
    paths = _region_paths(manifest["region"])
    for key, p in paths.items():
        if not p.exists():
            raise ManifestError(f"region file for {key!r} not found: {p}")
    code = manifest.get("region_code") or manifest["region"].get("dir", "")
    return nceas_ingest.load_region(
        paths["po"], paths["bg"], paths["pa_env"], paths["pa_labels"], paths["species"],
        region_code=str(Path(code).name) if code else "",
    )


def _build_config(cls, defaults: dict, given: dict, label: str):
    merged = {**defaults, **given}
    try:
        return cls(**merged)
    except TypeError as exc:
        raise ManifestError(f"{label} block invalid: {exc}") from exc
    except ValueError as exc:
        raise ManifestError(f"{label} block invalid: {exc}") from exc


def build_train_config(manifest: dict) -> TrainConfig:
    seed = int(manifest["seed"])
    model = _build_config(ModelConfig, DEFAULT_MODEL, manifest.get("model", {}), "model")
    train_block = dict(manifest.get("train", {}))
    sampling_block = train_block.pop("sampling", {})
    sampling = _build_config(
        SamplingConfig, {"seed": seed}, sampling_block, "train.sampling"
    )
    return _build_config(
        TrainConfig,
        {**DEFAULT_TRAIN, "seed": seed, "sampling": sampling, "model": model},
        train_block,
        "train",
    )


def build_baseline_config(manifest: dict) -> BaselineConfig:
    return _build_config(
        BaselineConfig, {"seed": int(manifest["seed"])}, manifest.get("baseline", {}),
        "baseline",
    )


def _data_flags(manifest_or_header: dict) -> tuple[bool, bool]:
    include_coords = bool(manifest_or_header.get("include_coords", False))
    normalize = bool(manifest_or_header.get("normalize_inputs", True))
    return include_coords, normalize


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def run_train(manifest: dict) -> Path:
    """Train per manifest; returns the checkpoint path it wrote."""
    dataset = load_region_from_manifest(manifest)
    include_coords, normalize = _data_flags(manifest)
    out_dir = Path(manifest["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint = out_dir / "checkpoint.bin"
    log_path = out_dir / "train_log.jsonl"

    if manifest["model_kind"] == "gnn":
        config = build_train_config(manifest)
        graph = nceas_ingest.build_training_graph(
            dataset, config.model, include_coords=include_coords, normalize=normalize
        )
        n_po = nceas_ingest.num_po_locations(dataset)
        params, history = train(graph, config, n_po)
        save_checkpoint(
            params,
            config.model,
            checkpoint,
            extra_header=_gnn_extra_header(manifest, config, dataset),
        )
    else:
        config = build_baseline_config(manifest)
        params, history = train_baseline(dataset, config, include_coords=include_coords)
        save_checkpoint(
            params,
            config,
            checkpoint,
            extra_header={
                "data": {
                    "include_coords": include_coords,
                    "normalize_inputs": normalize,
                    "region_code": dataset.region_code,
                }
            },
        )
    log_path.write_text(history.to_jsonl(), encoding="utf-8")
    logger.info("wrote %s and %s", checkpoint, log_path)
    return checkpoint


def _gnn_extra_header(manifest: dict, config: TrainConfig, dataset) -> dict:
    include_coords, normalize = _data_flags(manifest)
    return {
        "train": {
            "learning_rate": config.learning_rate,
            "num_epochs": config.num_epochs,
            "seed": config.seed,
            "checkpoint_every": config.checkpoint_every,
            "sampling": dataclasses.asdict(config.sampling),
        },
        "data": {
            "include_coords": include_coords,
            "normalize_inputs": normalize,
            "region_code": dataset.region_code,
        },
    }


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------


def final_training_graph(dataset, model: ModelConfig, sampling: SamplingConfig,
                         num_epochs: int, include_coords: bool, normalize: bool):
    """The training graph exactly as the last epoch saw it.

    When the model message-passes over non-detection edges, those edges are
    resampled deterministically for the final epoch.
    """
    graph = nceas_ingest.build_training_graph(
        dataset, model, include_coords=include_coords, normalize=normalize
    )
    if not model.include_negative_edges:
        return graph
    n_po = nceas_ingest.num_po_locations(dataset)
    n_bg = graph.node_sets[tg.LOCATION].count - n_po
    positives = trainer.positive_pairs(graph)
    negatives = sample_negatives(
        positives, n_po, n_bg, len(dataset.species_ids), sampling, num_epochs - 1
    )
    return trainer.build_epoch_graph(graph, model, negatives)


def run_eval(checkpoint_path, region: dict, out_path, csv_path=None,
             expected_kind=None) -> float:
    params, header = load_checkpoint(checkpoint_path)
    kind = header["model_kind"]
    if expected_kind is not None and expected_kind != kind:
        raise ManifestError(
            f"checkpoint holds a {kind!r} model but {expected_kind!r} was requested"
        )
    dataset = load_region_from_manifest({"region": region, "region_code": ""})
    data_header = header.get("data", {})
    include_coords = bool(data_header.get("include_coords", False))
    normalize = bool(data_header.get("normalize_inputs", True))

    if kind == "gnn":
        model = ModelConfig(**header["config"])
        train_header = header.get("train", {})
        sampling = SamplingConfig(**train_header.get("sampling", {}))
        graph = final_training_graph(
            dataset, model, sampling, int(train_header.get("num_epochs", 1)),
            include_coords, normalize,
        )
        test_feats = nceas_ingest.test_feature_matrix(
            dataset, include_coords=include_coords, normalize=normalize
        )
        report = evaluate_region(
            params, model, graph, test_feats, dataset.pa_labels, dataset.species_ids
        )
    else:
        # The baseline always trains on normalized inputs; the gnn-only
        # normalization knob does not apply to it.
        test_feats = nceas_ingest.test_feature_matrix(
            dataset, include_coords=include_coords, normalize=True
        )
        probs = predict_baseline(params, test_feats)
        report = evaluate_predictions(probs, dataset.pa_labels, dataset.species_ids)

    region_code = data_header.get("region_code", dataset.region_code)
    write_report_json(report, out_path, region=region_code, model=kind)
    if csv_path:
        write_report_csv(report, csv_path)
    print(f"{report.mean_auc:.4f}")
    return report.mean_auc


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _apply_override(manifest: dict, dotted_key: str, value) -> None:
    parts = dotted_key.split(".")
    node = manifest
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ManifestError(f"sweep key {dotted_key!r} does not address an object")
    node[parts[-1]] = value


def _sweep_runs(spec: dict, base_manifest: dict):
    keys = sorted(spec["grid"])
    value_lists = [spec["grid"][k] for k in keys]
    runs = []
    for idx, combo in enumerate(itertools.product(*value_lists)):
        manifest = copy.deepcopy(base_manifest)
        for key, value in zip(keys, combo):
            _apply_override(manifest, key, value)
        manifest["out_dir"] = str(Path(spec["out_dir"]) / f"run_{idx:03d}")
        validate_manifest(manifest)
        runs.append((idx, dict(zip(keys, combo)), manifest))
    return keys, runs


def _run_one_sweep_entry(entry):
    idx, combo, manifest = entry
    checkpoint = run_train(manifest)
    out_dir = Path(manifest["out_dir"])
    mean_auc = run_eval(checkpoint, manifest["region"], out_dir / "report.json")
    return idx, combo, mean_auc


def run_sweep(spec_path, parallel: int = 1) -> Path:
    spec = _load_json(spec_path)
    try:
        jsonschema.validate(spec, SWEEP_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ManifestError(f"sweep spec invalid: {exc.message}") from exc
    base = spec["manifest"]
    if isinstance(base, str):
        base_path = Path(spec_path).parent / base if not Path(base).is_absolute() else Path(base)
        base = load_manifest(base_path)
    else:
        validate_manifest(base)

    keys, runs = _sweep_runs(spec, base)
    logger.info("sweep: %d configurations", len(runs))
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_run_one_sweep_entry, runs))
    else:
        results = [_run_one_sweep_entry(entry) for entry in runs]
    results.sort(key=lambda r: r[0])

    out_dir = Path(spec["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = out_dir / "summary.csv"
    cell = lambda v: v if isinstance(v, str) else json.dumps(v)
    with open(summary, "w", encoding="utf-8") as f:
        f.write(",".join(["run"] + keys + ["mean_auc"]) + "\n")
        for idx, combo, mean_auc in results:
            cells = [f"run_{idx:03d}"] + [cell(combo[k]) for k in keys]
            cells.append(f"{mean_auc:.6f}")
            f.write(",".join(cells) + "\n")
    logger.info("wrote %s", summary)
    return summary


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

GRADCHECK_DEFAULTS = {
    "model": {
        "latent_dim": 8,
        "num_hidden_layers": 1,
        "num_message_passing_steps": 2,
        "direction": "one_way",
        "include_negative_edges": False,
        "aggregation": "segment_sum",
        "activation": "silu",
    },
    "seed": 0,
    "n_locations": 4,
    "n_species": 3,
}


def run_gradcheck(config: dict) -> tuple[bool, float, float]:
    """Finite-difference check over every parameter role of one config."""
    merged = copy.deepcopy(GRADCHECK_DEFAULTS)
    merged["model"].update(config.get("model", {}))
    for key in ("seed", "n_locations", "n_species"):
        if key in config:
            merged[key] = config[key]
    model = _build_config(ModelConfig, {}, merged["model"], "model")

    graph, pairs, labels = make_toy_graph(
        n_locations=merged["n_locations"], n_species=merged["n_species"],
        seed=merged["seed"],
    )
    store = init_param_store(graph, model, merged["seed"])
    loc_idx, sp_idx = pairs[:, 0], pairs[:, 1]

    def loss_fn(roles):
        return t_bce_mean(score_pairs_tensor(graph, roles, model, loc_idx, sp_idx), labels)

    _, analytic = loss_and_grad(loss_fn, store.roles)
    if config.get("corrupt_gradients"):
        # Test hook: damage one gradient so the negative control trips.
        role = sorted(analytic)[0]
        analytic[role].weights[0][0, 0] += 1.0
    numeric = finite_difference_grads(loss_fn, store.roles)
    result = compare_gradients(
        analytic, numeric, rel_tol=GRADCHECK_REL_TOL, abs_tol=GRADCHECK_ABS_TOL
    )
    return result.ok, result.max_rel_error, result.max_abs_error_near_zero


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------


def _make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hetero-sdm",
        description="Train and evaluate graph and baseline species distribution models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a JSON manifest")
    p_train.add_argument("--manifest", required=True)
    p_train.add_argument("--seed-override", type=int, default=None)
    p_train.add_argument("--include-coords", action="store_true", default=None,
                         help="use x,y as model features")
    p_train.add_argument("--no-normalize-gnn-inputs", action="store_true",
                         help="skip [-1,1] normalization of location features")
    p_train.add_argument("--out", default=None, help="override manifest out_dir")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a region")
    p_eval.add_argument("--checkpoint", required=True)
    group = p_eval.add_mutually_exclusive_group(required=True)
    group.add_argument("--region-dir", default=None)
    group.add_argument("--manifest", default=None,
                       help="reuse the region block of a train manifest")
    p_eval.add_argument("--out", required=True, help="report JSON path")
    p_eval.add_argument("--csv", default=None, help="optional per-species CSV path")
    p_eval.add_argument("--model-kind", choices=["gnn", "baseline"], default=None)

    p_sweep = sub.add_parser("sweep", help="run a cross-product of configurations")
    p_sweep.add_argument("--spec", required=True)
    p_sweep.add_argument("--parallel", type=int, default=1, metavar="N")

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p_grad.add_argument("--config", default=None, help="JSON config (defaults built in)")
    return parser


def _cmd_train(args) -> int:
    manifest = load_manifest(args.manifest)
    if args.seed_override is not None:
        manifest["seed"] = args.seed_override
        manifest.setdefault("train", {}).setdefault("sampling", {})["seed"] = args.seed_override
    if args.include_coords:
        manifest["include_coords"] = True
    if args.no_normalize_gnn_inputs:
        manifest["normalize_inputs"] = False
    if args.out is not None:
        manifest["out_dir"] = args.out
    validate_manifest(manifest)
    run_train(manifest)
    return EXIT_OK


def _cmd_eval(args) -> int:
    if args.region_dir is not None:
        region = {"dir": args.region_dir}
    else:
        region = load_manifest(args.manifest)["region"]
    run_eval(args.checkpoint, region, args.out, csv_path=args.csv,
             expected_kind=args.model_kind)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    run_sweep(args.spec, parallel=args.parallel)
    return EXIT_OK


def _cmd_gradcheck(args) -> int:
    config = _load_json(args.config) if args.config else {}
    ok, max_rel, max_abs = run_gradcheck(config)
    print(f"max relative error {max_rel:.3e} (near-zero absolute {max_abs:.3e})")
    return EXIT_OK if ok else EXIT_GRADCHECK


def main(argv=None) -> int:
    _configure_logging()
    parser = _make_parser()
    args = parser.parse_args(argv)
    handler = {
        "train": _cmd_train,
        "eval": _cmd_eval,
        "sweep": _cmd_sweep,
        "gradcheck": _cmd_gradcheck,
    }[args.command]
    try:
        return handler(args)
    except (ManifestError, IngestError, ValueError) as exc:
        logger.error("%s", exc)
        return EXIT_VALIDATION
    except (NonFiniteLossError, CheckpointError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_RUNTIME
    except HeteroSdmError as exc:
        logger.error("%s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

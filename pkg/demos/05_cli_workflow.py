"""
Batch workflow through the command-line interface
=================================================

Everything the library does is reachable through `hetero-sdm` subcommands
driven by JSON manifests, which is how region runs and hyperparameter
sweeps are meant to be scripted. This demo materializes a synthetic region
as canonical CSVs, writes a manifest, and exercises train, eval, and a
small sweep in-process. Rerunning any command with the same inputs
reproduces its outputs byte for byte (wall-clock timings aside).
"""

import json
import tempfile
from pathlib import Path

from hetero_sdm.cli import main
from hetero_sdm.synthetic import make_synthetic_region, write_region_csvs

workdir = Path(tempfile.mkdtemp(prefix="hetero_sdm_demo_"))
region_dir = workdir / "region"
write_region_csvs(
    make_synthetic_region(n_species=4, n_po_locations=60, n_background=80,
                          n_test=60, weight_scale=6.0, seed=29),
    region_dir,
)
print(f"region CSVs in {region_dir}")

manifest = {
    "model_kind": "gnn",
    "region": {"dir": str(region_dir)},
    "seed": 0,
    "out_dir": str(workdir / "run"),
    "model": {
        "latent_dim": 8, "num_hidden_layers": 1, "num_message_passing_steps": 1,
        "direction": "one_way", "aggregation": "segment_mean", "activation": "silu",
    },
    "train": {"learning_rate": 0.005, "num_epochs": 60},
}
manifest_path = workdir / "manifest.json"
manifest_path.write_text(json.dumps(manifest, indent=2))

print("\n$ hetero-sdm train --manifest manifest.json")
assert main(["train", "--manifest", str(manifest_path)]) == 0

print("\n$ hetero-sdm eval --checkpoint run/checkpoint.bin ... (prints mean AUC)")
assert main([
    "eval", "--checkpoint", str(workdir / "run" / "checkpoint.bin"),
    "--region-dir", str(region_dir),
    "--out", str(workdir / "report.json"),
    "--csv", str(workdir / "report.csv"),
]) == 0

sweep = {
    "manifest": str(manifest_path),
    "grid": {"model.latent_dim": [8, 16], "model.direction": ["one_way"]},
    "out_dir": str(workdir / "sweep"),
}
sweep_path = workdir / "sweep.json"
sweep_path.write_text(json.dumps(sweep, indent=2))
print("\n$ hetero-sdm sweep --spec sweep.json")
assert main(["sweep", "--spec", str(sweep_path)]) == 0
print("\nsweep summary:")
print((workdir / "sweep" / "summary.csv").read_text())

print("$ hetero-sdm gradcheck")
assert main(["gradcheck"]) == 0

print(f"\nall outputs under {workdir}")

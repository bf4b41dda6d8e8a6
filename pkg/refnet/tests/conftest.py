"""Shared fixtures: two synthetic subjects produced entirely through the
feature-stack CLI (`tistack`), consumed from its files only."""
import json
import shutil
import subprocess

import pytest

TISTACK = shutil.which("tistack")
DIMS = ("32", "32", "32")


def run_cli(args):
    proc = subprocess.run([TISTACK, *args], capture_output=True, text=True)
    assert proc.returncode == 0, f"tistack {args[0]} failed:\n{proc.stderr}"
    return proc


@pytest.fixture(scope="session")
def subjects(tmp_path_factory):
    if TISTACK is None:
        pytest.skip("tistack CLI not installed")
    root = tmp_path_factory.mktemp("subjects")
    out = []
    for seed in (101, 102):
        raw = root / f"s{seed}" / "raw"
        deriv = root / f"s{seed}" / "deriv"
        raw.parent.mkdir(parents=True, exist_ok=True)
        run_cli(["phantom", "--dims", *DIMS, "--seed", str(seed),
                 "--noise", "1.0", "--sparsity", "0.85", "--out", str(raw)])
        config = {
            "inputs": {
                "mprage": str(raw / "mprage.nii.gz"),
                "fgatir": str(raw / "fgatir.nii.gz"),
                "dwi": str(raw / "dwi.nii.gz"),
                "bval": str(raw / "dwi.bval"),
                "bvec": str(raw / "dwi.bvec"),
                "mask": str(raw / "mask.nii.gz"),
            },
            "out_dir": str(deriv),
            "crop": {"size": [32, 32, 32]},
        }
        cfg_path = root / f"s{seed}" / "config.json"
        cfg_path.write_text(json.dumps(config))
        run_cli(["run", "--config", str(cfg_path)])
        out.append({
            "stack": str(deriv / "stack.nii.gz"),
            "manifest": str(deriv / "stack_channels.json"),
            "sparse": str(raw / "labels_sparse.nii.gz"),
            "dense": str(raw / "labels_dense.nii.gz"),
        })
    return out

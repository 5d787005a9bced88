"""End-to-end run through the command-line interface.

Equivalent shell session:

    hypersolid train --epochs 3 --seed 7 --threads 1 --set encoder.projector_dim=64 --out-dir run
    hypersolid export-embeddings --checkpoint run/checkpoint.hsck --out-dir run
    hypersolid export-embeddings --checkpoint run/checkpoint.hsck --sample-seed 1 --out-dir run/test
    hypersolid analyze --embeddings run/embeddings.hseb --labels run/labels.txt --out-dir run
    hypersolid walk --embeddings run/test/embeddings.hseb --labels run/test/labels.txt \\
        --reference run/embeddings.hseb --out-dir run
    hypersolid probe --train-embeddings run/embeddings.hseb --train-labels run/labels.txt \\
        --test-embeddings run/test/embeddings.hseb --test-labels run/test/labels.txt --out-dir run

    python demos/05_cli_pipeline.py [out_dir]
"""

import sys
import tempfile
from pathlib import Path

from hypersolid.cli import main

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="hypersolid-demo-"))
run = str(out)
steps = [
    ["train", "--epochs", "3", "--seed", "7", "--threads", "1", "--set", "encoder.projector_dim=64", "--out-dir", run],
    ["export-embeddings", "--checkpoint", f"{run}/checkpoint.hsck", "--out-dir", run],
    ["export-embeddings", "--checkpoint", f"{run}/checkpoint.hsck", "--sample-seed", "1", "--out-dir", f"{run}/test"],
    ["analyze", "--embeddings", f"{run}/embeddings.hseb", "--labels", f"{run}/labels.txt", "--out-dir", run],
    ["walk", "--embeddings", f"{run}/test/embeddings.hseb", "--labels", f"{run}/test/labels.txt",
     "--reference", f"{run}/embeddings.hseb", "--out-dir", run],
    ["probe", "--train-embeddings", f"{run}/embeddings.hseb", "--train-labels", f"{run}/labels.txt",
     "--test-embeddings", f"{run}/test/embeddings.hseb", "--test-labels", f"{run}/test/labels.txt",
     "--out-dir", run],
]
for argv in steps:
    print("$ hypersolid", " ".join(argv))
    code = main(argv)
    if code:
        sys.exit(code)

print("\nartifacts in", out)
for p in sorted(out.rglob("*")):
    if p.is_file():
        print(f"  {p.relative_to(out)}  ({p.stat().st_size} bytes)")

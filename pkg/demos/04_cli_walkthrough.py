"""
The experiment runner from the command line
===========================================

Everything the library does for a run is also reachable from the ``beam``
command: validate a config, run it, stop and resume from a checkpoint, and
evaluate a frozen model. Here the same steps are driven from Python.
"""
import subprocess
import sys
import tempfile
from pathlib import Path

from beam.experiment import bundled_configs, read_metrics

def beam(*args):
    cmd = [sys.executable, "-m", "beam", *map(str, args)]
    print("$ beam", " ".join(map(str, args)))
    done = subprocess.run(cmd, capture_output=True, text=True)
    print(done.stdout.strip() or done.stderr.strip())
    return done.returncode

cfg = next(p for p in bundled_configs() if p.stem == "ring")
out = Path(tempfile.mkdtemp(prefix="beam-cli-"))

beam("validate", cfg)
beam("run", cfg, "--out-dir", out / "full", "--epochs-override", "3")

# stop after two epochs, then finish the third from the checkpoint
beam("run", cfg, "--out-dir", out / "part", "--epochs-override", "2")
beam("resume", out / "part" / "checkpoint_epoch002.json", cfg, "--out-dir", out / "part",
     "--epochs-override", "3")

full, part = (read_metrics(out / d / "metrics.csv") for d in ("full", "part"))
for a, b in zip(full, part):
    print(a["epoch"], a["phase"], a["reverse_kl"], "same" if a == b else "DIFFERENT")

beam("eval", out / "full" / "checkpoint_epoch003.json", "ring", "--steps", "200")

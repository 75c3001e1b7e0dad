#!/usr/bin/env python3
"""The batch CLI end to end: generate, pretrain, finetune, evaluate, predict.

Everything runs in a temporary directory through the installed entry point
(`python3 -m alignrec`). Takes ~30s.

Run:  python3 demos/05_cli_workflow.py
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

CONFIG = """\
d = 32
heads = 4
L = 2
dropout = 0.0
lr = 0.002
tau = 0.05
E1 = 25
E2 = 15
batch = 64
k_neg = 24
bank = 256
patience = 10
fanout = 8
seed = 5
"""


def run(*args):
    cmd = [sys.executable, "-m", "alignrec", *args]
    print("$", "alignrec", " ".join(args))
    proc = subprocess.run(cmd, capture_output=True, text=True, check=False)
    if proc.returncode != 0:
        print(proc.stderr)
        raise SystemExit(proc.returncode)
    return json.loads(proc.stdout)


with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)
    (root / "run.cfg").write_text(CONFIG)

    report = run("gen-synthetic", "--out", str(root / "data"),
                 "--entities", "60", "--seed", "3", "--latent-dim", "8",
                 "--users", "12", "--interactions-per-user", "12")
    print(f"  -> {report['triples']} triples, {report['interactions']} interactions\n")

    report = run("pretrain", "--config", str(root / "run.cfg"),
                 "--graph-a", str(root / "data/graph_a"),
                 "--graph-b", str(root / "data/graph_b"),
                 "--align", str(root / "data/alignments.tsv"),
                 "--out", str(root / "aligned.ckpt"))
    print(f"  -> {report['epochs_run']} epochs, "
          f"final val Hits@1 {report['val_hits1'][-1]}\n")

    report = run("eval-align", "--ckpt", str(root / "aligned.ckpt"),
                 "--graph-a", str(root / "data/graph_a"),
                 "--graph-b", str(root / "data/graph_b"),
                 "--align", str(root / "data/alignments.tsv"))
    print(f"  -> Hits@1 {report['Hits@1']}, Hits@10 {report['Hits@10']}, "
          f"MRR {report['MRR']}\n")

    report = run("finetune", "--ckpt", str(root / "aligned.ckpt"),
                 "--graph", str(root / "data/graph_a"),
                 "--interactions", str(root / "data/interactions.tsv"),
                 "--out", str(root / "tuned.ckpt"))
    print(f"  -> best val AUC {max(report['val_auc'])}\n")

    report = run("eval-rec", "--ckpt", str(root / "tuned.ckpt"),
                 "--graph", str(root / "data/graph_a"),
                 "--interactions", str(root / "data/interactions.tsv"))
    print(f"  -> AUC {report['AUC']}, Recall@10 {report['Recall@10']}\n")

    report = run("predict", "--ckpt", str(root / "tuned.ckpt"),
                 "--graph", str(root / "data/graph_a"),
                 "--user", "0", "--item", "7",
                 "--interactions", str(root / "data/interactions.tsv"))
    print(f"  -> P(user 0 likes item 7) = {report['probability']}")

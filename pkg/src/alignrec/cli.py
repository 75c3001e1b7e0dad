"""Batch command-line interface.

Commands: ``gen-synthetic``, ``pretrain``, ``finetune``, ``eval-align``,
``eval-rec``, ``predict``. Each run prints one JSON report to stdout that
includes the full effective configuration, so identical config+seed runs
produce byte-identical output. Exit codes: 0 success, 1 validation or
configuration error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import EncoderConfig, TrainConfig, config_dict, load_config
from .data import load_alignments, load_graph, load_interactions
from .errors import AlignrecError
from .metrics import eval_alignment, eval_recommendation
from .synth import SyntheticSpec, gen_synthetic, write_dataset
from .training import EVAL_SEED_TAG, encode_all, finetune, predict, pretrain

_METRIC_LABELS = {"mrr": "MRR", "auc": "AUC"}


def _label(key: str) -> str:
    if key in _METRIC_LABELS:
        return _METRIC_LABELS[key]
    for prefix, label in (("hits@", "Hits@"), ("recall@", "Recall@"), ("ndcg@", "NDCG@")):
        if key.startswith(prefix):
            return label + key[len(prefix):]
    return key


def _emit(report: dict, out_path: str | None = None) -> None:
    text = json.dumps(report, indent=2)
    print(text)
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text + "\n")


def _parse_ks(raw: str) -> list[int]:
    return [int(part) for part in raw.split(",") if part]


def _resolve_config(args) -> tuple[TrainConfig, EncoderConfig]:
    if getattr(args, "config", None):
        return load_config(args.config)
    return TrainConfig(), EncoderConfig()


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="alignrec")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a planted synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--entities", type=int, default=200)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--latent-dim", type=int, default=16)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--users", type=int, default=50)
    p.add_argument("--degree", type=float, default=8.0)
    p.add_argument("--interactions-per-user", type=int, default=30)

    p = sub.add_parser("pretrain", help="contrastive cross-graph pretraining")
    p.add_argument("--config")
    p.add_argument("--graph-a", required=True)
    p.add_argument("--graph-b", required=True)
    p.add_argument("--align", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("finetune", help="recommendation fine-tuning")
    p.add_argument("--ckpt", help="pretrained checkpoint; omit to train from scratch")
    p.add_argument("--config")
    p.add_argument("--graph", required=True)
    p.add_argument("--interactions", required=True)
    p.add_argument("--binarized", action="store_true")
    p.add_argument("--freeze-encoders", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval-align", help="alignment ranking metrics")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--graph-a", required=True)
    p.add_argument("--graph-b", required=True)
    p.add_argument("--align", required=True)
    p.add_argument("--ks", default="1,10")
    p.add_argument("--out")

    p = sub.add_parser("eval-rec", help="recommendation metrics")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--interactions", required=True)
    p.add_argument("--binarized", action="store_true")
    p.add_argument("--train-interactions", help="source of user anchor items")
    p.add_argument("--ks", default="5,10")
    p.add_argument("--out")

    p = sub.add_parser("predict", help="probability for one user-item pair")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--user", type=int, required=True)
    p.add_argument("--item", type=int, required=True)
    p.add_argument("--interactions", help="anchor the user via these interactions")
    p.add_argument("--binarized", action="store_true")
    return parser


def _cmd_gen_synthetic(args) -> dict:
    spec = SyntheticSpec(
        entities=args.entities,
        latent_dim=args.latent_dim,
        noise=args.noise,
        users=args.users,
        degree=args.degree,
        interactions_per_user=args.interactions_per_user,
        seed=args.seed,
    )
    dataset = gen_synthetic(spec)
    write_dataset(dataset, args.out)
    degrees = [len(adj) - 1 for adj in dataset.graph_a.adjacency]
    return {
        "command": "gen-synthetic",
        "out": args.out,
        "spec": {
            "entities": spec.entities,
            "latent_dim": spec.latent_dim,
            "noise": spec.noise,
            "users": spec.users,
            "degree": spec.degree,
            "interactions_per_user": spec.interactions_per_user,
            "text_dim": spec.text_dim,
            "image_dim": spec.image_dim,
            "text_slots": spec.text_slots,
            "relation_buckets": spec.relation_buckets,
            "seed": spec.seed,
        },
        "triples": len(dataset.graph_a.triples),
        "mean_degree": round(2 * len(dataset.graph_a.triples) / spec.entities, 4),
        "alignments": len(dataset.alignments),
        "interactions": len(dataset.interactions),
        "isolated_entities": int(sum(1 for d in degrees if d == 0)),
    }


def _cmd_pretrain(args) -> dict:
    train_cfg, enc_cfg = _resolve_config(args)
    graph_a, feats_a = load_graph(args.graph_a, k_attr=train_cfg.k_attr)
    graph_b, feats_b = load_graph(args.graph_b, k_attr=train_cfg.k_attr)
    alignments = load_alignments(args.align)
    params, report, rng_state = pretrain(
        graph_a, feats_a, graph_b, feats_b, alignments, train_cfg, enc_cfg
    )
    save_checkpoint(args.out, params, train_cfg, enc_cfg, rng_state, "pretrained")
    return {
        "command": "pretrain",
        "config": config_dict(train_cfg, enc_cfg),
        "pairs": len(alignments),
        "epochs_run": len(report.losses),
        "best_epoch": report.best_epoch,
        "stopped_epoch": report.stopped_epoch,
        "loss_history": [round(x, 6) for x in report.losses],
        "val_hits1": [round(x, 6) for x in report.val_history],
        "checkpoint": args.out,
        "phase": "pretrained",
    }


def _cmd_finetune(args) -> dict:
    if args.ckpt:
        ckpt = load_checkpoint(args.ckpt)
        params = ckpt.params
        rng_state = ckpt.rng_state
        train_cfg, enc_cfg = ckpt.train_cfg, ckpt.enc_cfg
        if args.config:
            train_cfg, enc_cfg = load_config(args.config)
        source = "pretrained"
    else:
        train_cfg, enc_cfg = _resolve_config(args)
        from .autodiff import ParameterSet

        params = ParameterSet(train_cfg.seed)
        rng_state = None
        source = "scratch"
    graph, feats = load_graph(args.graph, k_attr=train_cfg.k_attr)
    interactions = load_interactions(args.interactions, binarized=args.binarized)
    params, report, out_state = finetune(
        params,
        graph,
        feats,
        interactions,
        train_cfg,
        enc_cfg,
        freeze_encoders=args.freeze_encoders,
        rng_state=rng_state,
    )
    save_checkpoint(args.out, params, train_cfg, enc_cfg, out_state, "finetuned")
    return {
        "command": "finetune",
        "config": config_dict(train_cfg, enc_cfg),
        "source": source,
        "interactions": len(interactions),
        "epochs_run": len(report.losses),
        "best_epoch": report.best_epoch,
        "stopped_epoch": report.stopped_epoch,
        "loss_history": [round(x, 6) for x in report.losses],
        "val_auc": [round(x, 6) for x in report.val_history],
        "checkpoint": args.out,
        "phase": "finetuned",
    }


def _cmd_eval_align(args) -> dict:
    ckpt = load_checkpoint(args.ckpt)
    train_cfg, enc_cfg = ckpt.train_cfg, ckpt.enc_cfg
    graph_a, feats_a = load_graph(args.graph_a, k_attr=train_cfg.k_attr)
    graph_b, feats_b = load_graph(args.graph_b, k_attr=train_cfg.k_attr)
    pairs = load_alignments(args.align).pairs
    emb_a = encode_all(
        graph_a, feats_a, ckpt.params, enc_cfg, "a",
        train_cfg.hops, train_cfg.fanout, EVAL_SEED_TAG,
    )
    emb_b = encode_all(
        graph_b, feats_b, ckpt.params, enc_cfg, "b",
        train_cfg.hops, train_cfg.fanout, EVAL_SEED_TAG,
    )
    result = eval_alignment(emb_a, emb_b, pairs, ks=_parse_ks(args.ks))
    report = {
        "command": "eval-align",
        "config": config_dict(train_cfg, enc_cfg),
        "phase": ckpt.phase,
    }
    for key, value in result.metrics.items():
        report[_label(key)] = round(value, 6) if value is not None else None
    report.update({f"n_{k}": v for k, v in result.counts.items()})
    return report


def _anchor_map(interactions) -> dict[int, list[int]]:
    anchors: dict[int, list[int]] = {}
    for u, v, y in interactions.records:
        if y == 1:
            anchors.setdefault(u, []).append(v)
    return {u: sorted(vs) for u, vs in anchors.items()}


def _cmd_eval_rec(args) -> dict:
    from . import autodiff as ad
    from .training import _PathCache, _item_rows, _rec_logits

    ckpt = load_checkpoint(args.ckpt)
    train_cfg, enc_cfg = ckpt.train_cfg, ckpt.enc_cfg
    graph, feats = load_graph(args.graph, k_attr=train_cfg.k_attr)
    interactions = load_interactions(args.interactions, binarized=args.binarized)
    if args.train_interactions:
        anchor_source = load_interactions(args.train_interactions, binarized=args.binarized)
    else:
        anchor_source = interactions
    paths = _PathCache(graph, _anchor_map(anchor_source), train_cfg.path_max_len)
    records = interactions.records
    users = np.array([u for u, _, _ in records], dtype=np.int64)
    items = [v for _, v, _ in records]
    labels = np.array([y for _, _, y in records], dtype=np.int64)
    with ad.no_grad():
        item_rows = _item_rows(
            items, graph, feats, ckpt.params, enc_cfg, train_cfg,
            EVAL_SEED_TAG, False, None, "a",
        )
        logits = _rec_logits(users, item_rows, paths.matrix(users, items), ckpt.params, "a")
    result = eval_recommendation(logits.data, labels, users, ks=_parse_ks(args.ks))
    report = {
        "command": "eval-rec",
        "config": config_dict(train_cfg, enc_cfg),
        "phase": ckpt.phase,
    }
    for key, value in result.metrics.items():
        report[_label(key)] = round(value, 6) if value is not None else None
    report.update({f"n_{k}": v for k, v in result.counts.items()})
    return report


def _cmd_predict(args) -> dict:
    ckpt = load_checkpoint(args.ckpt)
    train_cfg, enc_cfg = ckpt.train_cfg, ckpt.enc_cfg
    graph, feats = load_graph(args.graph, k_attr=train_cfg.k_attr)
    anchors = None
    if args.interactions:
        interactions = load_interactions(args.interactions, binarized=args.binarized)
        anchors = _anchor_map(interactions).get(args.user, [])
    probability = predict(
        args.user, args.item, ckpt.params, graph, feats, enc_cfg, train_cfg,
        anchor_items=anchors,
    )
    return {
        "command": "predict",
        "config": config_dict(train_cfg, enc_cfg),
        "phase": ckpt.phase,
        "user": args.user,
        "item": args.item,
        "probability": round(probability, 10),
    }


_HANDLERS = {
    "gen-synthetic": _cmd_gen_synthetic,
    "pretrain": _cmd_pretrain,
    "finetune": _cmd_finetune,
    "eval-align": _cmd_eval_align,
    "eval-rec": _cmd_eval_rec,
    "predict": _cmd_predict,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        report = _HANDLERS[args.command](args)
    except AlignrecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    out_path = getattr(args, "out", None) if args.command.startswith("eval") else None
    _emit(report, out_path)
    return 0


if __name__ == "__main__":
    sys.exit(main())

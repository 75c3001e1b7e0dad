"""Two-phase optimization: contrastive cross-graph pretraining, then
recommendation fine-tuning with a path-aware predictor.

Phase 1 batches aligned entity pairs, encodes both sides with the shared
encoder, scores the positive against memory-bank and in-batch negatives
with a temperature-scaled contrastive loss, and early-stops on validation
Hits@1. Phase 2 trains user embeddings plus a scoring head whose features
are the projected user/item pair, averaged relation embeddings along
knowledge-graph paths from the user's interacted items, and the raw
user-item dot product; it early-stops on validation AUC.

Every random choice flows through one seeded generator per phase, so a
(config, seed) pair fully determines the run.
"""

from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterSet, Tensor
from .config import EncoderConfig, TrainConfig
from .data import (
    AlignmentSet,
    FeatureStore,
    InteractionSet,
    KnowledgeGraph,
    MemoryBank,
    sample_negatives,
)
from .encoders import build_encoder_params, encode_batch
from .errors import ConfigError, ContractError, ValidationError
from .metrics import auc_score, early_stop_check, eval_alignment

logger = logging.getLogger(__name__)

EVAL_SEED_TAG = 104729  # subgraph stream for evaluation-mode encoding
MAX_PATHS = 8


@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)
    val_history: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stopped_epoch: int | None = None
    wall_time: float = 0.0


# ---------------------------------------------------------------------------
# Similarities and losses
# ---------------------------------------------------------------------------


def cosine_sim(u, v) -> float:
    """Cosine similarity of two vectors; zero-norm inputs give 0 with a warning."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ContractError(f"cosine_sim shapes differ: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        logger.warning("cosine_sim: zero-norm input, returning 0")
        return 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def score_pair(h_u, h_v) -> float:
    """Plain dot-product affinity between two equal-length vectors."""
    h_u = np.asarray(h_u, dtype=np.float64)
    h_v = np.asarray(h_v, dtype=np.float64)
    if h_u.shape != h_v.shape:
        raise ContractError(f"score_pair shapes differ: {h_u.shape} vs {h_v.shape}")
    return float(h_u @ h_v)


def info_nce_loss(
    anchors: Tensor,
    positives: Tensor,
    negatives: list,
    tau: float,
) -> Tensor:
    """Temperature-scaled contrastive loss, batch mean.

    ``negatives[i]`` is a (k_i, d) tensor (or array) of negative embeddings
    for anchor i; the softmax denominator contains the positive plus all
    negatives, so equal similarities everywhere give exactly ln(1 + k).
    """
    if tau <= 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    batch = anchors.shape[0]
    if positives.shape != anchors.shape:
        raise ContractError(
            f"anchors {anchors.shape} and positives {positives.shape} differ"
        )
    if len(negatives) != batch:
        raise ContractError("one negative block per anchor required")
    anchor_norm = ad.l2_normalize_rows(anchors)
    blocks: list[Tensor] = []
    segments: list[np.ndarray] = []
    anchor_ids: list[np.ndarray] = []
    pos_positions = []
    offset = 0
    for i in range(batch):
        neg = ad.as_tensor(negatives[i])
        if neg.data.ndim != 2 or neg.shape[0] < 1:
            raise ValidationError(f"anchor {i}: need >= 1 negative")
        blocks.append(ad.slice_rows(positives, i, i + 1))
        blocks.append(neg)
        size = 1 + neg.shape[0]
        segments.append(np.full(size, i, dtype=np.int64))
        anchor_ids.append(np.full(size, i, dtype=np.int64))
        pos_positions.append(offset)
        offset += size
    flat = ad.l2_normalize_rows(ad.concat_rows(blocks))
    seg = np.concatenate(segments)
    rep = ad.gather_rows(anchor_norm, np.concatenate(anchor_ids))
    sims = ad.scale(ad.rows_dot(rep, flat), 1.0 / tau)
    lse = ad.segment_logsumexp(sims, seg, batch)
    pos_sims = ad.gather_vec(sims, np.array(pos_positions, dtype=np.int64))
    return ad.scale(ad.reduce_sum(ad.sub(lse, pos_sims)), 1.0 / batch)


def rec_loss(kind: str, a, b) -> Tensor:
    """Recommendation loss.

    ``kind='bce'``: ``a`` are score logits (tensor), ``b`` binary labels;
    stabilized as mean(softplus(s) - s * y). ``kind='bpr'``: ``a`` / ``b``
    are positive / negative score logits, mean(-log sigmoid(a - b)).
    """
    if kind == "bce":
        scores = ad.as_tensor(a)
        labels = np.asarray(b, dtype=np.float64)
        if scores.shape != labels.shape:
            raise ContractError(f"scores {scores.shape} and labels {labels.shape} differ")
        if not np.all((labels == 0) | (labels == 1)):
            raise ValidationError("bce labels must be binary")
        return ad.mean(ad.sub(ad.softplus(scores), ad.mul(scores, Tensor(labels))))
    if kind == "bpr":
        pos = ad.as_tensor(a)
        neg = ad.as_tensor(b)
        if pos.shape != neg.shape:
            raise ContractError(f"bpr score shapes differ: {pos.shape} vs {neg.shape}")
        return ad.mean(ad.softplus(ad.sub(neg, pos)))
    raise ConfigError(f"unknown rec loss kind {kind!r}")


# ---------------------------------------------------------------------------
# Path features
# ---------------------------------------------------------------------------


def enumerate_paths(
    graph: KnowledgeGraph,
    sources: list[int],
    target: int,
    max_len: int,
    cap: int = MAX_PATHS,
) -> list[list[int]]:
    """Up to ``cap`` shortest simple paths from any source to ``target``.

    Returns each path as its relation-id sequence, shortest first, visiting
    sources and neighbors in id order. Self-loop edges are ignored and a
    node never repeats within a path. Paths have 1..max_len edges.
    """
    self_rel = graph.self_relation
    dist_to_target = {target: 0}
    frontier = [target]
    while frontier:
        nxt = []
        for node in frontier:
            for nb, rel in graph.adjacency[node]:
                if rel == self_rel or nb in dist_to_target:
                    continue
                dist_to_target[nb] = dist_to_target[node] + 1
                nxt.append(nb)
        frontier = nxt
    paths: list[list[int]] = []
    queue: deque[tuple[int, list[int], list[int]]] = deque()
    for s in sorted(set(sources)):
        if s == target:
            continue
        if dist_to_target.get(s, max_len + 1) <= max_len:
            queue.append((s, [s], []))
    while queue and len(paths) < cap:
        node, visited, rels = queue.popleft()
        remaining = max_len - len(rels)
        for nb, rel in graph.adjacency[node]:
            if rel == self_rel or nb in visited:
                continue
            if nb == target:
                paths.append(rels + [rel])
                if len(paths) >= cap:
                    break
                continue
            if remaining >= 2 and dist_to_target.get(nb, max_len + 1) <= remaining - 1:
                queue.append((nb, visited + [nb], rels + [rel]))
    return paths


def path_coefficients(
    graph: KnowledgeGraph,
    anchor_items: list[int],
    item: int,
    max_len: int,
) -> np.ndarray:
    """Relation-table mixing weights for the mean-of-path-means feature."""
    coeff = np.zeros(graph.relation_table_size)
    paths = enumerate_paths(graph, anchor_items, item, max_len)
    if not paths:
        return coeff
    for rels in paths:
        for r in rels:
            coeff[r] += 1.0 / (len(rels) * len(paths))
    return coeff


def path_features(
    anchor_items: list[int],
    item: int,
    graph: KnowledgeGraph,
    params: ParameterSet,
    max_len: int,
    rel_tag: str = "a",
) -> Tensor:
    """Projected mean relation embedding over reasoning paths to ``item``.

    The user attaches to the graph through ``anchor_items`` (items it
    interacted with). Exactly zero when no path of length <= max_len
    exists: the projection has no bias, so the no-path case is the exact
    zero vector.
    """
    coeff = path_coefficients(graph, anchor_items, item, max_len)
    mixed = ad.matmul(Tensor(coeff[None, :]), params[f"rel.{rel_tag}"])
    return ad.matmul(mixed, params["rec.path.proj"])


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _batches(indices: np.ndarray, size: int) -> list[np.ndarray]:
    chunks = [indices[i : i + size] for i in range(0, len(indices), size)]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return chunks


def _split_90_10(count: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    perm = rng.permutation(count)
    n_val = max(1, count // 10) if count >= 2 else 0
    return perm[n_val:], perm[:n_val]


def _feature_dims(*stores: FeatureStore) -> tuple[int, int]:
    text_dim = image_dim = 0
    for store in stores:
        for name, dim in store.dims.items():
            if name == "text":
                if text_dim and dim != text_dim:
                    raise ValidationError("text feature dims differ between graphs")
                text_dim = dim
            elif name == "image":
                if image_dim and dim != image_dim:
                    raise ValidationError("image feature dims differ between graphs")
                image_dim = dim
    return max(text_dim, 1), max(image_dim, 1)


def encode_all(
    graph: KnowledgeGraph,
    feats: FeatureStore,
    params: ParameterSet,
    enc_cfg: EncoderConfig,
    rel_tag: str,
    hops: int,
    fanout: int,
    seed_base: int,
    chunk: int = 128,
) -> np.ndarray:
    """Evaluation-mode unified embeddings for every entity, row = entity id."""
    out = np.zeros((graph.num_entities, enc_cfg.dim))
    with ad.no_grad():
        for start in range(0, graph.num_entities, chunk):
            ids = list(range(start, min(start + chunk, graph.num_entities)))
            res = encode_batch(
                ids, graph, feats, params, enc_cfg, rel_tag, hops, fanout, seed_base
            )
            out[ids] = res["unified"].data
    return out


def _master_rng(seed_or_state) -> np.random.Generator:
    if isinstance(seed_or_state, bytes):
        return generator_from_state(seed_or_state)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed_or_state)))


def rng_state_bytes(rng: np.random.Generator) -> bytes:
    """Canonical 32-byte PCG64 state (drops any buffered half-draw)."""
    state = rng.bit_generator.state["state"]
    return state["state"].to_bytes(16, "little") + state["inc"].to_bytes(16, "little")


def generator_from_state(blob: bytes) -> np.random.Generator:
    if len(blob) != 32:
        raise ContractError(f"rng state must be 32 bytes, got {len(blob)}")
    bg = np.random.PCG64()
    bg.state = {
        "bit_generator": "PCG64",
        "state": {
            "state": int.from_bytes(blob[:16], "little"),
            "inc": int.from_bytes(blob[16:], "little"),
        },
        "has_uint32": 0,
        "uinteger": 0,
    }
    return np.random.Generator(bg)


# ---------------------------------------------------------------------------
# Phase 1: contrastive pretraining
# ---------------------------------------------------------------------------


def pretrain(
    graph_a: KnowledgeGraph,
    feats_a: FeatureStore,
    graph_b: KnowledgeGraph,
    feats_b: FeatureStore,
    alignments: AlignmentSet,
    train_cfg: TrainConfig,
    enc_cfg: EncoderConfig,
    params: ParameterSet | None = None,
) -> tuple[ParameterSet, TrainReport, bytes]:
    """Contrastive alignment pretraining; returns (best params, report, rng state)."""
    train_cfg.validate()
    enc_cfg.validate()
    if len(alignments) == 0:
        raise ValidationError("alignment set is empty")
    started = time.perf_counter()

    text_dim, image_dim = _feature_dims(feats_a, feats_b)
    if params is None:
        params = ParameterSet(train_cfg.seed)
    build_encoder_params(
        params,
        enc_cfg,
        text_dim,
        image_dim,
        {"a": graph_a.relation_table_size, "b": graph_b.relation_table_size},
    )

    rng = _master_rng((train_cfg.seed, 1))
    pairs = list(alignments.pairs)
    train_idx, val_idx = _split_90_10(len(pairs), rng)
    train_pairs = [pairs[i] for i in train_idx]
    val_pairs = [pairs[i] for i in val_idx]
    exclusion = {a: b for a, b in pairs}

    bank = MemoryBank(train_cfg.bank_capacity)
    report = TrainReport()
    best_params = params.copy()
    best_metric = -np.inf

    for epoch in range(train_cfg.epochs_pretrain):
        order = rng.permutation(len(train_pairs))
        epoch_losses = []
        for chunk in _batches(order, train_cfg.batch_size):
            batch_pairs = [train_pairs[i] for i in chunk]
            seed_a = int(rng.integers(2**62))
            seed_b = int(rng.integers(2**62))
            out_a = encode_batch(
                [a for a, _ in batch_pairs], graph_a, feats_a, params, enc_cfg,
                "a", train_cfg.hops, train_cfg.fanout, seed_a, training=True, rng=rng,
            )
            out_b = encode_batch(
                [b for _, b in batch_pairs], graph_b, feats_b, params, enc_cfg,
                "b", train_cfg.hops, train_cfg.fanout, seed_b, training=True, rng=rng,
            )
            za, zb = out_a["unified"], out_b["unified"]
            available = len(batch_pairs) - 1 + len(bank)
            num_neg = max(1, min(train_cfg.negatives, available))
            neg_seed = int(rng.integers(2**62))
            neg_samples = sample_negatives(
                batch_pairs, zb.data, bank, num_neg, exclusion, neg_seed
            )
            neg_blocks = []
            for samples in neg_samples:
                live = [s.batch_index for s in samples if s.batch_index is not None]
                frozen = [s.vector for s in samples if s.batch_index is None]
                parts = []
                if live:
                    parts.append(ad.gather_rows(zb, np.array(live, dtype=np.int64)))
                if frozen:
                    parts.append(Tensor(np.stack(frozen)))
                neg_blocks.append(parts[0] if len(parts) == 1 else ad.concat_rows(parts))
            loss = info_nce_loss(za, zb, neg_blocks, train_cfg.tau)
            if train_cfg.lam > 0:
                for z, out in ((za, out_a), (zb, out_b)):
                    diff = ad.sub(z, out["structural"].detach())
                    intra = ad.scale(ad.reduce_sum(ad.mul(diff, diff)), 1.0 / z.shape[0])
                    loss = ad.add(loss, ad.scale(intra, 0.5 * train_cfg.lam))
            params.zero_grads()
            loss.backward()
            params.adam_step(train_cfg.lr)
            epoch_losses.append(loss.item())
            for (_, b_id), row in zip(batch_pairs, zb.data):
                bank.push(b_id, row)
        report.losses.append(float(np.mean(epoch_losses)))

        metric = _alignment_validation(
            graph_a, feats_a, graph_b, feats_b, params, enc_cfg, train_cfg, val_pairs
        )
        report.val_history.append(metric)
        if metric > best_metric:
            best_metric = metric
            best_params = params.copy()
        stop, best_epoch = early_stop_check(report.val_history, train_cfg.patience)
        report.best_epoch = best_epoch
        if stop:
            report.stopped_epoch = epoch
            break

    report.wall_time = time.perf_counter() - started
    return best_params, report, rng_state_bytes(rng)


def _alignment_validation(
    graph_a, feats_a, graph_b, feats_b, params, enc_cfg, train_cfg, val_pairs
) -> float:
    if not val_pairs:
        return 0.0
    emb_b = encode_all(
        graph_b, feats_b, params, enc_cfg, "b",
        train_cfg.hops, train_cfg.fanout, EVAL_SEED_TAG,
    )
    anchor_ids = [a for a, _ in val_pairs]
    with ad.no_grad():
        res = encode_batch(
            anchor_ids, graph_a, feats_a, params, enc_cfg,
            "a", train_cfg.hops, train_cfg.fanout, EVAL_SEED_TAG,
        )
    emb_a = np.zeros((graph_a.num_entities, enc_cfg.dim))
    emb_a[anchor_ids] = res["unified"].data
    return eval_alignment(emb_a, emb_b, val_pairs, ks=[1]).metrics["hits@1"]


# ---------------------------------------------------------------------------
# Phase 2: recommendation fine-tuning
# ---------------------------------------------------------------------------


def build_rec_params(params: ParameterSet, dim: int, num_users: int) -> None:
    params.create("rec.users", (num_users, dim))
    params.create("rec.zproj.w", (2 * dim, dim))
    params.create("rec.zproj.b", (dim,), init="zeros")
    params.create("rec.path.proj", (dim, dim))
    params.create("rec.score", (2 * dim + 1, 1), init="zeros")


class _PathCache:
    def __init__(self, graph: KnowledgeGraph, anchors: dict[int, list[int]], max_len: int):
        self.graph = graph
        self.anchors = anchors
        self.max_len = max_len
        self._cache: dict[tuple[int, int], np.ndarray] = {}

    def coeff(self, user: int, item: int) -> np.ndarray:
        key = (user, item)
        if key not in self._cache:
            self._cache[key] = path_coefficients(
                self.graph, self.anchors.get(user, []), item, self.max_len
            )
        return self._cache[key]

    def matrix(self, users, items) -> np.ndarray:
        return np.stack([self.coeff(u, v) for u, v in zip(users, items)])


def _rec_logits(
    users: np.ndarray,
    item_rows: Tensor,
    coeffs: np.ndarray,
    params: ParameterSet,
    rel_tag: str,
) -> Tensor:
    """Score logits for (user, item) rows: v [z_uv ++ path_uv ++ h_u . h_v]."""
    hu = ad.gather_rows(params["rec.users"], users)
    hv = item_rows
    sdot = ad.rows_dot(hu, hv)
    zuv = ad.add(
        ad.matmul(ad.concat_cols([hu, hv]), params["rec.zproj.w"]),
        params["rec.zproj.b"],
    )
    path = ad.matmul(
        ad.matmul(Tensor(coeffs), params[f"rel.{rel_tag}"]), params["rec.path.proj"]
    )
    feats = ad.concat_cols([zuv, path, ad.reshape(sdot, (sdot.shape[0], 1))])
    return ad.reshape(ad.matmul(feats, params["rec.score"]), (feats.shape[0],))


def finetune(
    params: ParameterSet,
    graph: KnowledgeGraph,
    feats: FeatureStore,
    interactions: InteractionSet,
    train_cfg: TrainConfig,
    enc_cfg: EncoderConfig,
    freeze_encoders: bool = False,
    rel_tag: str = "a",
    rng_state: bytes | None = None,
) -> tuple[ParameterSet, TrainReport, bytes]:
    """Supervised fine-tuning on interactions; returns (best params, report, rng state)."""
    train_cfg.validate()
    enc_cfg.validate()
    records = list(interactions.records)
    if not any(y == 1 for _, _, y in records):
        raise ValidationError("no positive interactions to fine-tune on")
    started = time.perf_counter()

    text_dim, image_dim = _feature_dims(feats)
    build_encoder_params(
        params, enc_cfg, text_dim, image_dim, {rel_tag: graph.relation_table_size}
    )
    num_users = 1 + max(u for u, _, _ in records)
    build_rec_params(params, enc_cfg.dim, num_users)
    params.reset_optimizer_state()

    rng = _master_rng(rng_state if rng_state is not None else (train_cfg.seed, 2))
    train_idx, val_idx = _split_90_10(len(records), rng)
    train_records = [records[i] for i in train_idx]
    val_records = [records[i] for i in val_idx]

    # Supplement sampled non-interaction negatives up to a 1:1 ratio.
    known = {(u, v) for u, v, _ in records}
    positives = [r for r in train_records if r[2] == 1]
    negatives = [r for r in train_records if r[2] == 0]
    users_with_pos = sorted({u for u, _, _ in positives})
    guard = 0
    while len(negatives) < len(positives) and guard < 100 * len(positives):
        u = int(rng.choice(users_with_pos))
        v = int(rng.integers(graph.num_entities))
        if (u, v) not in known:
            known.add((u, v))
            negatives.append((u, v, 0))
            train_records.append((u, v, 0))
        guard += 1

    anchors: dict[int, list[int]] = {}
    for u, v, y in train_records:
        if y == 1:
            anchors.setdefault(u, []).append(v)
    for u in anchors:
        anchors[u] = sorted(anchors[u])
    paths = _PathCache(graph, anchors, train_cfg.path_max_len)

    trainable = None
    frozen_items: np.ndarray | None = None
    if freeze_encoders:
        trainable = [n for n in params.names() if n.startswith("rec.")]
        # Item encodings cannot change; encode every entity once and reuse.
        frozen_items = encode_all(
            graph, feats, params, enc_cfg, rel_tag,
            train_cfg.hops, train_cfg.fanout, EVAL_SEED_TAG,
        )

    report = TrainReport()
    best_params = params.copy()
    best_metric = -np.inf
    use_bpr = train_cfg.rec_loss_kind == "bpr"

    for epoch in range(train_cfg.epochs_finetune):
        order = rng.permutation(len(train_records))
        epoch_losses = []
        for chunk in _batches(order, train_cfg.batch_size):
            batch = [train_records[i] for i in chunk]
            if use_bpr:
                loss = _bpr_batch_loss(
                    batch, graph, feats, params, enc_cfg, train_cfg, paths, rng,
                    rel_tag, frozen_items,
                )
            else:
                loss = _bce_batch_loss(
                    batch, graph, feats, params, enc_cfg, train_cfg, paths, rng,
                    rel_tag, frozen_items,
                )
            if loss is None:
                continue
            params.zero_grads(trainable)
            loss.backward()
            params.adam_step(train_cfg.lr, names=trainable)
            epoch_losses.append(loss.item())
        report.losses.append(float(np.mean(epoch_losses)) if epoch_losses else 0.0)

        metric = _rec_validation(
            val_records, graph, feats, params, enc_cfg, train_cfg, paths, rel_tag,
            frozen_items,
        )
        report.val_history.append(metric)
        if metric > best_metric:
            best_metric = metric
            best_params = params.copy()
        stop, best_epoch = early_stop_check(report.val_history, train_cfg.patience)
        report.best_epoch = best_epoch
        if stop:
            report.stopped_epoch = epoch
            break

    report.wall_time = time.perf_counter() - started
    return best_params, report, rng_state_bytes(rng)


def _item_rows(
    items, graph, feats, params, enc_cfg, train_cfg, seed, training, rng, rel_tag,
    frozen: np.ndarray | None = None,
) -> Tensor:
    """One embedding row per requested item (deduplicated encode, or cache)."""
    if frozen is not None:
        return Tensor(frozen[np.asarray(items, dtype=np.int64)])
    unique = sorted(set(items))
    out = encode_batch(
        unique, graph, feats, params, enc_cfg, rel_tag,
        train_cfg.hops, train_cfg.fanout, seed, training=training, rng=rng,
    )
    position = {v: i for i, v in enumerate(unique)}
    return ad.gather_rows(out["unified"], np.array([position[v] for v in items], dtype=np.int64))


def _bce_batch_loss(batch, graph, feats, params, enc_cfg, train_cfg, paths, rng, rel_tag, frozen):
    users = np.array([u for u, _, _ in batch], dtype=np.int64)
    items = [v for _, v, _ in batch]
    labels = np.array([y for _, _, y in batch], dtype=np.float64)
    seed = int(rng.integers(2**62))
    item_rows = _item_rows(
        items, graph, feats, params, enc_cfg, train_cfg, seed, True, rng, rel_tag, frozen
    )
    logits = _rec_logits(users, item_rows, paths.matrix(users, items), params, rel_tag)
    return rec_loss("bce", logits, labels)


def _bpr_batch_loss(batch, graph, feats, params, enc_cfg, train_cfg, paths, rng, rel_tag, frozen):
    pos = [(u, v) for u, v, y in batch if y == 1]
    neg_pool = {}
    for u, v, y in batch:
        if y == 0:
            neg_pool.setdefault(u, []).append(v)
    pairs = []
    for u, v in pos:
        pool = neg_pool.get(u)
        if pool:
            pairs.append((u, v, pool[int(rng.integers(len(pool)))]))
        else:
            pairs.append((u, v, int(rng.integers(graph.num_entities))))
    if not pairs:
        return None
    users = np.array([u for u, _, _ in pairs], dtype=np.int64)
    pos_items = [v for _, v, _ in pairs]
    neg_items = [w for _, _, w in pairs]
    seed = int(rng.integers(2**62))
    all_rows = _item_rows(
        pos_items + neg_items, graph, feats, params, enc_cfg, train_cfg,
        seed, True, rng, rel_tag, frozen,
    )
    pos_rows = ad.slice_rows(all_rows, 0, len(pairs))
    neg_rows = ad.slice_rows(all_rows, len(pairs), 2 * len(pairs))
    pos_logits = _rec_logits(users, pos_rows, paths.matrix(users, pos_items), params, rel_tag)
    neg_logits = _rec_logits(users, neg_rows, paths.matrix(users, neg_items), params, rel_tag)
    return rec_loss("bpr", pos_logits, neg_logits)


def _rec_validation(
    val_records, graph, feats, params, enc_cfg, train_cfg, paths, rel_tag, frozen=None
) -> float:
    if not val_records:
        return 0.0
    users = np.array([u for u, _, _ in val_records], dtype=np.int64)
    items = [v for _, v, _ in val_records]
    labels = np.array([y for _, _, y in val_records], dtype=np.int64)
    with ad.no_grad():
        item_rows = _item_rows(
            items, graph, feats, params, enc_cfg, train_cfg,
            EVAL_SEED_TAG, False, None, rel_tag, frozen,
        )
        logits = _rec_logits(users, item_rows, paths.matrix(users, items), params, rel_tag)
    auc = auc_score(logits.data, labels)
    return auc if auc is not None else 0.0


def predict(
    user: int,
    item: int,
    params: ParameterSet,
    graph: KnowledgeGraph,
    feats: FeatureStore,
    enc_cfg: EncoderConfig,
    train_cfg: TrainConfig,
    anchor_items: list[int] | None = None,
    rel_tag: str = "a",
) -> float:
    """Interaction probability for one (user, item) pair, evaluation mode.

    Unknown users fall back to the zero profile; a missing scoring head is
    created (zero-initialized) so an untrained model predicts exactly 0.5.
    """
    if not 0 <= item < graph.num_entities:
        raise ValidationError(f"item {item} out of range")
    if user < 0:
        raise ValidationError(f"user {user} out of range")
    text_dim, image_dim = _feature_dims(feats)
    build_encoder_params(
        params, enc_cfg, text_dim, image_dim, {rel_tag: graph.relation_table_size}
    )
    if "rec.users" not in params:
        build_rec_params(params, enc_cfg.dim, user + 1)
    anchors = {user: sorted(anchor_items)} if anchor_items else {}
    paths = _PathCache(graph, anchors, train_cfg.path_max_len)
    with ad.no_grad():
        hv = _item_rows(
            [item], graph, feats, params, enc_cfg, train_cfg,
            EVAL_SEED_TAG, False, None, rel_tag,
        )
        user_table = params["rec.users"]
        if user < user_table.shape[0]:
            hu = ad.gather_rows(user_table, np.array([user], dtype=np.int64))
        else:
            hu = Tensor(np.zeros((1, enc_cfg.dim)))
        sdot = ad.rows_dot(hu, hv)
        zuv = ad.add(
            ad.matmul(ad.concat_cols([hu, hv]), params["rec.zproj.w"]),
            params["rec.zproj.b"],
        )
        coeffs = paths.matrix([user], [item])
        path = ad.matmul(
            ad.matmul(Tensor(coeffs), params[f"rel.{rel_tag}"]), params["rec.path.proj"]
        )
        feats_vec = ad.concat_cols([zuv, path, ad.reshape(sdot, (1, 1))])
        logit = ad.matmul(feats_vec, params["rec.score"])
        prob = ad.sigmoid(logit)
    return float(prob.data[0, 0])

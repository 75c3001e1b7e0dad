"""Entity representation pipeline.

Per entity: pooled text attributes and a projected image vector are fused by
bidirectional multi-head cross-attention into a multimodal vector, which
seeds the node states of a relation-aware graph-attention stack over the
entity's sampled neighborhood. A jumping-knowledge max over all layer
outputs gives the structural vector, and a configurable aggregation merges
the multimodal and structural views into the unified embedding.

Everything is implemented twice over the same parameters: a per-entity
public surface (used by tests and small tools) and a flat batched path
(`encode_batch`) that vectorizes all entities of a mini-batch through one
disjoint-union graph. With single-vector modalities each cross-attention
softmax runs over one key and collapses to the value projection; the
multi-token path is exercised when callers pass token matrices directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterSet, Tensor
from .config import EncoderConfig
from .data import FeatureStore, KnowledgeGraph, Subgraph, sample_subgraph
from .errors import ConfigError, SchemaError

TEXT = "text"
IMAGE = "image"


@dataclass
class EntityEncoding:
    """Evaluation-mode views of one entity's representations."""

    entity: int
    fused: np.ndarray
    layer_outputs: list[np.ndarray]
    structural: np.ndarray
    unified: np.ndarray


def build_encoder_params(
    params: ParameterSet,
    cfg: EncoderConfig,
    text_dim: int,
    image_dim: int,
    relation_tables: dict[str, int],
) -> None:
    """Create every encoder parameter up front (idempotent)."""
    d = cfg.dim
    params.create("attr.score", (text_dim, 1))
    params.create("attr.proj", (text_dim, d))
    params.create("attr.bias", (d,), init="zeros")
    params.create("img.proj", (image_dim, d))
    params.create("img.bias", (d,), init="zeros")
    params.create("cold.text", (1, d))
    params.create("cold.image", (1, d))
    for direction in ("ti", "it"):
        for role in ("q", "k", "v"):
            params.create(f"fuse.{direction}.{role}", (d, d))
    params.create("fuse.out", (d, d))
    params.create("fuse.out_b", (d,), init="zeros")
    for layer in range(1, cfg.layers + 1):
        params.create(f"gat{layer}.wh", (d, d))
        params.create(f"gat{layer}.wr", (d, d))
        params.create(f"gat{layer}.a", (3 * d, 1))
    params.create("jk.proj", (d, d))
    params.create("jk.bias", (d,), init="zeros")
    params.create("agg.cat.w", (2 * d, d))
    params.create("agg.cat.b", (d,), init="zeros")
    params.create("agg.gate.w", (2 * d, d))
    params.create("agg.gate.b", (d,), init="zeros")
    params.create("agg.pool.q", (d, 1))
    params.create("agg.pers.w", (d, 2))
    params.create("agg.pers.b", (2,), init="zeros")
    for tag, size in relation_tables.items():
        params.create(f"rel.{tag}", (size, d))


# ---------------------------------------------------------------------------
# Attribute aggregation
# ---------------------------------------------------------------------------


def _attr_pool(
    stacked: Tensor,
    segments: np.ndarray,
    count: int,
    params: ParameterSet,
    training: bool,
    dropout: float,
    rng: np.random.Generator | None,
) -> Tensor:
    """Self-attention pooling over stacked attribute rows grouped by entity."""
    scores = ad.reshape(ad.matmul(stacked, params["attr.score"]), (stacked.shape[0],))
    alpha = ad.segment_softmax(scores, segments, count)
    if training and dropout > 0 and rng is not None:
        alpha = ad.dropout(alpha, dropout, rng)
    pooled = ad.segment_sum(ad.scale_rows(stacked, alpha), segments, count)
    return ad.add(ad.matmul(pooled, params["attr.proj"]), params["attr.bias"])


def aggregate_attributes(
    attr_vectors,
    params: ParameterSet,
    training: bool = False,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Pool a non-empty list of attribute vectors into one dim-d row.

    Attention weights depend only on each vector itself, so any permutation
    of the input list leaves the pooled output unchanged.
    """
    arr = np.asarray(attr_vectors, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise SchemaError(f"expected a (k, dim) stack of attribute vectors, got {arr.shape}")
    if arr.shape[1] != params["attr.proj"].shape[0]:
        raise SchemaError(
            f"attribute dim {arr.shape[1]} != expected {params['attr.proj'].shape[0]}"
        )
    segments = np.zeros(arr.shape[0], dtype=np.int64)
    return _attr_pool(Tensor(arr), segments, 1, params, training, dropout, rng)


# ---------------------------------------------------------------------------
# Cross-modal fusion
# ---------------------------------------------------------------------------


def _attend(query: Tensor, keys: Tensor, values: Tensor, heads: int) -> Tensor:
    """Multi-head scaled dot-product attention, mean-pooled over query tokens."""
    d = query.shape[1]
    head_dim = d // heads
    outs = []
    for h in range(heads):
        lo, hi = h * head_dim, (h + 1) * head_dim
        q = ad.slice_cols(query, lo, hi)
        k = ad.slice_cols(keys, lo, hi)
        v = ad.slice_cols(values, lo, hi)
        scores = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / np.sqrt(head_dim))
        outs.append(ad.matmul(ad.softmax_rows(scores), v))
    merged = ad.concat_cols(outs) if heads > 1 else outs[0]
    pooled = ad.scale(ad.reduce_sum(merged, axis=0), 1.0 / merged.shape[0])
    return ad.reshape(pooled, (1, d))


def cross_modal_fuse(
    text_tokens,
    image_tokens,
    params: ParameterSet,
    heads: int,
) -> Tensor:
    """Bidirectional cross-attention between text and image token matrices.

    Runs text-queries-image and image-queries-text, averages the two pooled
    direction outputs and projects. Accepts (k, d) matrices or single (d,)
    vectors; returns a (1, d) row.
    """
    t = ad.as_tensor(text_tokens)
    i = ad.as_tensor(image_tokens)
    if t.data.ndim == 1:
        t = ad.reshape(t, (1, t.shape[0]))
    if i.data.ndim == 1:
        i = ad.reshape(i, (1, i.shape[0]))
    d = t.shape[1]
    if d % heads != 0:
        raise ConfigError(f"model dim {d} not divisible by heads {heads}")
    ti = _attend(
        ad.matmul(t, params["fuse.ti.q"]),
        ad.matmul(i, params["fuse.ti.k"]),
        ad.matmul(i, params["fuse.ti.v"]),
        heads,
    )
    it = _attend(
        ad.matmul(i, params["fuse.it.q"]),
        ad.matmul(t, params["fuse.it.k"]),
        ad.matmul(t, params["fuse.it.v"]),
        heads,
    )
    both = ad.scale(ad.add(ti, it), 0.5)
    return ad.add(ad.matmul(both, params["fuse.out"]), params["fuse.out_b"])


def _fuse_single_token(h_text: Tensor, h_image: Tensor, params: ParameterSet) -> Tensor:
    """Batched fusion for one token per modality per entity.

    With a single key the attention softmax is identically one, so each
    direction reduces to its value projection; this matches
    :func:`cross_modal_fuse` exactly on (1, d) inputs.
    """
    v_ti = ad.matmul(h_image, params["fuse.ti.v"])
    v_it = ad.matmul(h_text, params["fuse.it.v"])
    both = ad.scale(ad.add(v_ti, v_it), 0.5)
    return ad.add(ad.matmul(both, params["fuse.out"]), params["fuse.out_b"])


# ---------------------------------------------------------------------------
# Graph attention
# ---------------------------------------------------------------------------


def _gat_forward(
    h: Tensor,
    src: np.ndarray,
    dst: np.ndarray,
    rel: np.ndarray,
    num_nodes: int,
    rel_table: Tensor,
    wh: Tensor,
    wr: Tensor,
    a: Tensor,
    activation: str,
    training: bool = False,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor]:
    """One attention layer over a flat edge list; returns (next state, alpha)."""
    d = h.shape[1]
    wh_h = ad.matmul(h, wh)
    rel_proj = ad.matmul(rel_table, wr)
    s_dst = ad.reshape(ad.matmul(wh_h, ad.slice_rows(a, 0, d)), (num_nodes,))
    s_rel = ad.reshape(ad.matmul(rel_proj, ad.slice_rows(a, d, 2 * d)), (rel_table.shape[0],))
    s_src = ad.reshape(ad.matmul(wh_h, ad.slice_rows(a, 2 * d, 3 * d)), (num_nodes,))
    scores = ad.add(
        ad.add(ad.gather_vec(s_dst, dst), ad.gather_vec(s_rel, rel)),
        ad.gather_vec(s_src, src),
    )
    alpha = ad.segment_softmax(scores, dst, num_nodes)
    applied = alpha
    if training and dropout > 0 and rng is not None:
        applied = ad.dropout(alpha, dropout, rng)
    messages = ad.scale_rows(ad.gather_rows(wh_h, src), applied)
    aggregated = ad.segment_sum(messages, dst, num_nodes)
    out = ad.add(ad.apply_activation(activation, aggregated), h)
    if training and dropout > 0 and rng is not None:
        out = ad.dropout(out, dropout, rng)
    return out, alpha


def _edge_arrays(subgraph: Subgraph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    local = subgraph.local_index()
    src = np.array([local[s] for s, _, _ in subgraph.edges], dtype=np.int64)
    dst = np.array([local[t] for _, t, _ in subgraph.edges], dtype=np.int64)
    rel = np.array([r for _, _, r in subgraph.edges], dtype=np.int64)
    return src, dst, rel


def gat_layer(
    subgraph: Subgraph,
    node_states,
    rel_table,
    params: ParameterSet,
    layer: int = 1,
    activation: str = "leaky_relu",
) -> tuple[Tensor, Tensor]:
    """Public single-subgraph attention layer; nodes follow subgraph order."""
    src, dst, rel = _edge_arrays(subgraph)
    h = ad.as_tensor(node_states)
    return _gat_forward(
        h,
        src,
        dst,
        rel,
        len(subgraph.nodes),
        ad.as_tensor(rel_table),
        params[f"gat{layer}.wh"],
        params[f"gat{layer}.wr"],
        params[f"gat{layer}.a"],
        activation,
    )


def jumping_knowledge(layer_outputs: list[Tensor], params: ParameterSet) -> Tensor:
    """Elementwise max across layer states followed by a learned projection."""
    if not layer_outputs:
        raise ConfigError("jumping_knowledge requires at least one layer output")
    merged = layer_outputs[0]
    for h in layer_outputs[1:]:
        merged = ad.maximum(merged, h)
    return ad.add(ad.matmul(merged, params["jk.proj"]), params["jk.bias"])


# ---------------------------------------------------------------------------
# Modality aggregation
# ---------------------------------------------------------------------------


def personalized_fusion_weights(profile, params: ParameterSet) -> Tensor:
    """Softmax weights over the two modality channels for a profile vector."""
    p = ad.as_tensor(profile)
    squeeze = p.data.ndim == 1
    if squeeze:
        p = ad.reshape(p, (1, p.shape[0]))
    logits = ad.add(ad.matmul(p, params["agg.pers.w"]), params["agg.pers.b"])
    weights = ad.softmax_rows(logits)
    return ad.reshape(weights, (2,)) if squeeze else weights


def aggregate_modalities(
    fused,
    structural,
    strategy: str,
    params: ParameterSet,
    profile_weights: Tensor | None = None,
) -> Tensor:
    """Merge the multimodal and structural views into unified rows.

    ``profile_weights`` (simplex rows from
    :func:`personalized_fusion_weights`) scale the two modality
    contributions before attention pooling; the other strategies ignore
    them.
    """
    x = ad.as_tensor(fused)
    s = ad.as_tensor(structural)
    if x.data.ndim == 1:
        x = ad.reshape(x, (1, x.shape[0]))
    if s.data.ndim == 1:
        s = ad.reshape(s, (1, s.shape[0]))
    if strategy == "concat_project":
        return ad.add(ad.matmul(ad.concat_cols([x, s]), params["agg.cat.w"]), params["agg.cat.b"])
    if strategy == "gated":
        gate = ad.sigmoid(
            ad.add(ad.matmul(ad.concat_cols([x, s]), params["agg.gate.w"]), params["agg.gate.b"])
        )
        inverse = ad.add_const(ad.scale(gate, -1.0), 1.0)
        return ad.add(ad.mul(gate, x), ad.mul(inverse, s))
    if strategy == "attention_pool":
        if profile_weights is not None:
            w = profile_weights
            if w.data.ndim == 1:
                w = ad.reshape(w, (1, 2))
            rows = x.shape[0]
            w0 = ad.reshape(ad.slice_cols(w, 0, 1), (rows,))
            w1 = ad.reshape(ad.slice_cols(w, 1, 2), (rows,))
            x = ad.scale_rows(x, w0)
            s = ad.scale_rows(s, w1)
        l_x = ad.matmul(x, params["agg.pool.q"])
        l_s = ad.matmul(s, params["agg.pool.q"])
        alpha = ad.softmax_rows(ad.concat_cols([l_x, l_s]))
        rows = x.shape[0]
        a0 = ad.reshape(ad.slice_cols(alpha, 0, 1), (rows,))
        a1 = ad.reshape(ad.slice_cols(alpha, 1, 2), (rows,))
        return ad.add(ad.scale_rows(x, a0), ad.scale_rows(s, a1))
    raise ConfigError(f"unknown aggregation strategy {strategy!r}")


# ---------------------------------------------------------------------------
# Batched end-to-end encoding
# ---------------------------------------------------------------------------


def _modality_rows(
    entities: list[int],
    feats: FeatureStore,
    modality: str,
    params: ParameterSet,
    training: bool,
    dropout: float,
    rng: np.random.Generator | None,
) -> Tensor:
    """Dim-d rows for every entity: encoded features or the learned default."""
    store = feats.vectors.get(modality, {})
    covered = [e for e in entities if e in store]
    cold = [e for e in entities if e not in store]
    parts: list[Tensor] = []
    position: dict[int, int] = {}
    if covered:
        if modality == TEXT:
            stacks = [np.atleast_2d(store[e]) for e in covered]
            expected = params["attr.proj"].shape[0]
            for e, block in zip(covered, stacks):
                if block.shape[1] != expected:
                    raise SchemaError(
                        f"text dim {block.shape[1]} for entity {e} != expected {expected}"
                    )
            segments = np.concatenate(
                [np.full(b.shape[0], i, dtype=np.int64) for i, b in enumerate(stacks)]
            )
            stacked = Tensor(np.concatenate(stacks, axis=0))
            encoded = _attr_pool(stacked, segments, len(covered), params, training, dropout, rng)
        else:
            raw = np.stack([store[e] for e in covered], axis=0)
            expected = params["img.proj"].shape[0]
            if raw.shape[1] != expected:
                raise SchemaError(f"image dim {raw.shape[1]} != expected {expected}")
            encoded = ad.add(ad.matmul(Tensor(raw), params["img.proj"]), params["img.bias"])
        parts.append(encoded)
        for i, e in enumerate(covered):
            position[e] = i
    if cold:
        default = params[f"cold.{modality}"]
        parts.append(ad.gather_rows(default, np.zeros(len(cold), dtype=np.int64)))
        for i, e in enumerate(cold):
            position[e] = len(covered) + i
    block = parts[0] if len(parts) == 1 else ad.concat_rows(parts)
    order = np.array([position[e] for e in entities], dtype=np.int64)
    return ad.gather_rows(block, order)


def encode_batch(
    entities: list[int],
    graph: KnowledgeGraph,
    feats: FeatureStore,
    params: ParameterSet,
    cfg: EncoderConfig,
    rel_tag: str,
    hops: int,
    fanout: int,
    seed_base: int,
    training: bool = False,
    rng: np.random.Generator | None = None,
    profile_weights: Tensor | None = None,
) -> dict:
    """Encode several entities through one disjoint-union attention pass.

    Subgraph sampling is seeded per (seed_base, entity), so a fixed
    seed_base makes the whole batch a pure function of parameters.
    """
    subgraphs = [
        sample_subgraph(
            graph, e, hops, fanout, np.random.SeedSequence((seed_base, int(e)))
        )
        for e in entities
    ]
    needed = sorted({n for sg in subgraphs for n in sg.nodes})
    slot = {e: i for i, e in enumerate(needed)}

    h_text = _modality_rows(needed, feats, TEXT, params, training, cfg.dropout, rng)
    h_image = _modality_rows(needed, feats, IMAGE, params, training, cfg.dropout, rng)
    fused_unique = _fuse_single_token(h_text, h_image, params)
    if training and cfg.dropout > 0 and rng is not None:
        fused_unique = ad.dropout(fused_unique, cfg.dropout, rng)

    union_index: list[int] = []
    centers: list[int] = []
    src_parts, dst_parts, rel_parts = [], [], []
    offset = 0
    for sg in subgraphs:
        local = sg.local_index()
        union_index.extend(slot[n] for n in sg.nodes)
        centers.append(offset + local[sg.center])
        src, dst, rel = _edge_arrays(sg)
        src_parts.append(src + offset)
        dst_parts.append(dst + offset)
        rel_parts.append(rel)
        offset += len(sg.nodes)
    src = np.concatenate(src_parts)
    dst = np.concatenate(dst_parts)
    rel = np.concatenate(rel_parts)
    centers_arr = np.array(centers, dtype=np.int64)

    h = ad.gather_rows(fused_unique, np.array(union_index, dtype=np.int64))
    rel_table = params[f"rel.{rel_tag}"]
    layer_states = [h]
    for layer in range(1, cfg.layers + 1):
        activation = cfg.activation if layer < cfg.layers else "identity"
        h, _ = _gat_forward(
            h,
            src,
            dst,
            rel,
            offset,
            rel_table,
            params[f"gat{layer}.wh"],
            params[f"gat{layer}.wr"],
            params[f"gat{layer}.a"],
            activation,
            training,
            cfg.dropout,
            rng,
        )
        layer_states.append(h)
    structural = jumping_knowledge(layer_states, params)

    fused_centers = ad.gather_rows(
        fused_unique, np.array([slot[sg.center] for sg in subgraphs], dtype=np.int64)
    )
    struct_centers = ad.gather_rows(structural, centers_arr)
    unified = aggregate_modalities(
        fused_centers, struct_centers, cfg.fusion, params, profile_weights
    )
    return {
        "unified": unified,
        "fused": fused_centers,
        "structural": struct_centers,
        "layers": [ad.gather_rows(state, centers_arr) for state in layer_states],
        "subgraphs": subgraphs,
    }


def encode_entity(
    entity: int,
    graph: KnowledgeGraph,
    feats: FeatureStore,
    params: ParameterSet,
    cfg: EncoderConfig,
    rel_tag: str = "a",
    hops: int = 2,
    fanout: int = 16,
    seed: int = 0,
) -> EntityEncoding:
    """Evaluation-mode encoding of one entity (dropout off, no gradients)."""
    with ad.no_grad():
        out = encode_batch(
            [entity], graph, feats, params, cfg, rel_tag, hops, fanout, seed
        )
    return EntityEncoding(
        entity=entity,
        fused=out["fused"].data[0].copy(),
        layer_outputs=[state.data[0].copy() for state in out["layers"]],
        structural=out["structural"].data[0].copy(),
        unified=out["unified"].data[0].copy(),
    )

"""Planted synthetic benchmark: two feature-linked graphs plus interactions.

Each aligned entity pair shares one latent vector. Every (graph, modality,
slot) gets its own random linear map, so the two graphs see different
projections of the same latent plus Gaussian noise. Edges connect entities
whose latent cosine clears a threshold chosen to hit a target mean degree,
with the relation id given by the similarity bucket. Interaction labels are
the sign of the user-latent / item-latent dot product, so alignment and
preference are both recoverable by construction.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .data import AlignmentSet, FeatureStore, InteractionSet, KnowledgeGraph, build_graph
from .errors import ValidationError


@dataclass
class SyntheticSpec:
    entities: int = 200
    latent_dim: int = 16
    noise: float = 0.1
    users: int = 50
    degree: float = 8.0
    interactions_per_user: int = 30
    text_dim: int = 32
    image_dim: int = 24
    text_slots: int = 3
    relation_buckets: int = 4
    seed: int = 7

    def validate(self) -> None:
        if self.entities < 10:
            raise ValidationError(f"entities must be >= 10, got {self.entities}")
        if self.latent_dim < 2:
            raise ValidationError(f"latent_dim must be >= 2, got {self.latent_dim}")
        if self.users < 1 or self.interactions_per_user < 1:
            raise ValidationError("users and interactions_per_user must be >= 1")
        if not 0 <= self.interactions_per_user <= self.entities:
            raise ValidationError("interactions_per_user cannot exceed entities")
        if self.noise < 0:
            raise ValidationError("noise must be non-negative")


@dataclass
class SyntheticDataset:
    spec: SyntheticSpec
    graph_a: KnowledgeGraph
    graph_b: KnowledgeGraph
    features_a: FeatureStore
    features_b: FeatureStore
    alignments: AlignmentSet
    interactions: InteractionSet
    ratings: list[tuple[int, int, int]]
    latents: np.ndarray
    user_latents: np.ndarray
    maps: dict[str, np.ndarray] = field(default_factory=dict)
    permutation_b: np.ndarray | None = None


def _feature_block(
    rng: np.random.Generator,
    latents: np.ndarray,
    dim: int,
    noise: float,
    maps: dict[str, np.ndarray],
    key: str,
) -> np.ndarray:
    k = latents.shape[1]
    m = rng.normal(size=(dim, k)) / np.sqrt(k)
    maps[key] = m
    clean = latents @ m.T
    if noise > 0:
        clean = clean + noise * rng.normal(size=clean.shape)
    return clean


def gen_synthetic(spec: SyntheticSpec) -> SyntheticDataset:
    """Generate the full planted dataset; byte-stable for a fixed seed."""
    spec.validate()
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(spec.seed)))
    n, k = spec.entities, spec.latent_dim

    latents = rng.normal(size=(n, k))
    latents /= np.linalg.norm(latents, axis=1, keepdims=True)

    # Threshold at the (n * degree / 2)-th largest pairwise cosine.
    sims = latents @ latents.T
    iu = np.triu_indices(n, k=1)
    flat = sims[iu]
    num_edges = max(1, int(round(n * spec.degree / 2)))
    num_edges = min(num_edges, flat.size)
    order = np.argsort(flat)[::-1]
    threshold = flat[order[num_edges - 1]]
    chosen = order[:num_edges]

    edge_pairs = {(int(iu[0][e]), int(iu[1][e])) for e in chosen}
    # Every entity keeps at least one edge (to its nearest latent neighbor),
    # so isolated ids cannot drop out of the triples file.
    covered = {i for pair in edge_pairs for i in pair}
    masked = sims - 2.0 * np.eye(n)
    for i in range(n):
        if i not in covered:
            j = int(np.argmax(masked[i]))
            edge_pairs.add((min(i, j), max(i, j)))
            covered.update((i, j))

    sim_lo, sim_hi = threshold, 1.0
    span = max(sim_hi - sim_lo, 1e-12)
    triples_a = []
    for i, j in sorted(edge_pairs):
        sim = max(float(sims[i, j]), sim_lo)
        bucket = min(int((sim - sim_lo) / span * spec.relation_buckets),
                     spec.relation_buckets - 1)
        triples_a.append((i, bucket, j))
    graph_a = build_graph(sorted(triples_a), num_entities=n)

    perm = rng.permutation(n)
    triples_b = sorted((int(perm[h]), r, int(perm[t])) for h, r, t in triples_a)
    graph_b = build_graph(triples_b, num_entities=n)

    maps: dict[str, np.ndarray] = {}
    features_a = FeatureStore()
    features_b = FeatureStore()
    for store, tag, order_map in ((features_a, "a", None), (features_b, "b", perm)):
        store.add_modality("text", spec.text_dim)
        store.add_modality("image", spec.image_dim)
        slot_blocks = [
            _feature_block(rng, latents, spec.text_dim, spec.noise, maps, f"{tag}.text.{s}")
            for s in range(spec.text_slots)
        ]
        image_block = _feature_block(
            rng, latents, spec.image_dim, spec.noise, maps, f"{tag}.image"
        )
        for i in range(n):
            entity = i if order_map is None else int(order_map[i])
            store.vectors["text"][entity] = np.stack(
                [block[i] for block in slot_blocks], axis=0
            )
            store.vectors["image"][entity] = image_block[i]

    alignments = AlignmentSet([(i, int(perm[i])) for i in range(n)])

    user_latents = rng.normal(size=(spec.users, k))
    user_latents /= np.linalg.norm(user_latents, axis=1, keepdims=True)
    records = []
    ratings = []
    for u in range(spec.users):
        items = rng.choice(n, size=spec.interactions_per_user, replace=False)
        for v in sorted(int(x) for x in items):
            y = 1 if float(user_latents[u] @ latents[v]) > 0 else 0
            records.append((u, v, y))
            if y == 1:
                ratings.append((u, v, int(rng.integers(4, 6))))
            else:
                ratings.append((u, v, int(rng.integers(1, 3))))
    interactions = InteractionSet(records)

    return SyntheticDataset(
        spec=spec,
        graph_a=graph_a,
        graph_b=graph_b,
        features_a=features_a,
        features_b=features_b,
        alignments=alignments,
        interactions=interactions,
        ratings=ratings,
        latents=latents,
        user_latents=user_latents,
        maps=maps,
        permutation_b=perm,
    )


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_triples(path: str, graph: KnowledgeGraph) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for h, r, t in graph.triples:
            fh.write(f"{h}\t{r}\t{t}\n")


def write_features(path: str, modality: str, dim: int, vectors: dict[int, np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#dim={dim} modality={modality}\n")
        for entity in sorted(vectors):
            arr = vectors[entity]
            if modality == "text":
                for slot in range(arr.shape[0]):
                    row = ",".join(_fmt(v) for v in arr[slot])
                    fh.write(f"{entity}\t{slot}\t{row}\n")
            else:
                row = ",".join(_fmt(v) for v in arr)
                fh.write(f"{entity}\t{row}\n")


def write_alignments(path: str, alignments: AlignmentSet) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for a, b in alignments.pairs:
            fh.write(f"{a}\t{b}\n")


def write_interactions(path: str, rows: list[tuple[int, int, int]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, v, value in rows:
            fh.write(f"{u}\t{v}\t{value}\n")


def write_graph_dir(directory: str, graph: KnowledgeGraph, store: FeatureStore) -> None:
    os.makedirs(directory, exist_ok=True)
    write_triples(os.path.join(directory, "triples.tsv"), graph)
    for modality in sorted(store.dims):
        write_features(
            os.path.join(directory, f"features_{modality}.tsv"),
            modality,
            store.dims[modality],
            store.vectors[modality],
        )


def write_dataset(dataset: SyntheticDataset, out_dir: str) -> None:
    """Write graph_a/, graph_b/, alignments.tsv and raw-rating interactions.tsv."""
    os.makedirs(out_dir, exist_ok=True)
    write_graph_dir(os.path.join(out_dir, "graph_a"), dataset.graph_a, dataset.features_a)
    write_graph_dir(os.path.join(out_dir, "graph_b"), dataset.graph_b, dataset.features_b)
    write_alignments(os.path.join(out_dir, "alignments.tsv"), dataset.alignments)
    write_interactions(os.path.join(out_dir, "interactions.tsv"), dataset.ratings)

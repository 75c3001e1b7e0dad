"""Knowledge-graph and interaction data model, TSV ingestion, and samplers.

File formats (UTF-8, LF, tab-separated):

* ``triples.tsv``   -- ``head<TAB>relation<TAB>tail`` with non-negative
  integer ids; ``#`` lines are comments.
* ``features_<modality>.tsv`` -- header ``#dim=<d> modality=<name>``; image
  lines are ``entity<TAB>v1,v2,...,vd``, text-attribute lines are
  ``entity<TAB>slot<TAB>v1,...,vd`` with ``slot < k_attr``.
* ``alignments.tsv``   -- ``idA<TAB>idB`` positive pairs.
* ``interactions.tsv`` -- ``user<TAB>item<TAB>rating`` (raw 1..5) or
  ``user<TAB>item<TAB>y`` when already binarized.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, SamplingError, SchemaError, ValidationError


@dataclass
class KnowledgeGraph:
    """Entities, typed triples, and a symmetric adjacency index.

    Adjacency lists contain both directions of every triple plus one
    self-loop per entity carrying the reserved relation id
    ``num_relations`` (one past the largest file relation), so every node
    has at least one incident edge.
    """

    num_entities: int
    num_relations: int
    triples: list[tuple[int, int, int]]
    relation_counts: dict[int, int]
    adjacency: list[list[tuple[int, int]]]

    @property
    def self_relation(self) -> int:
        return self.num_relations

    @property
    def relation_table_size(self) -> int:
        return self.num_relations + 1


@dataclass
class FeatureStore:
    """Per-modality fixed-dimension vectors keyed by entity id.

    Image vectors are ``(dim,)`` arrays; text attributes are ``(slots, dim)``
    arrays holding one vector per retained attribute slot. Entities absent
    from a modality are cold and get a learned default downstream.
    """

    dims: dict[str, int] = field(default_factory=dict)
    vectors: dict[str, dict[int, np.ndarray]] = field(default_factory=dict)

    def add_modality(self, name: str, dim: int) -> None:
        self.dims[name] = dim
        self.vectors.setdefault(name, {})

    def get(self, modality: str, entity: int) -> np.ndarray | None:
        return self.vectors.get(modality, {}).get(entity)

    def covered(self, modality: str) -> set[int]:
        return set(self.vectors.get(modality, {}))


@dataclass
class AlignmentSet:
    """Positive cross-graph entity pairs (a-side id, b-side id)."""

    pairs: list[tuple[int, int]]

    def __post_init__(self):
        if len(set(self.pairs)) != len(self.pairs):
            raise ValidationError("alignment pairs must be unique")

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass
class InteractionSet:
    """Binary user-item feedback records (user, item, y)."""

    records: list[tuple[int, int, int]]

    def __post_init__(self):
        seen = set()
        for u, v, y in self.records:
            if y not in (0, 1):
                raise ValidationError(f"interaction label must be 0/1, got {y}")
            if (u, v) in seen:
                raise ValidationError(f"duplicate interaction ({u}, {v})")
            seen.add((u, v))

    def __len__(self) -> int:
        return len(self.records)

    def users(self) -> list[int]:
        return sorted({u for u, _, _ in self.records})

    def items(self) -> list[int]:
        return sorted({v for _, v, _ in self.records})


@dataclass
class Subgraph:
    """A hop-limited neighborhood: original entity ids plus induced edges."""

    center: int
    nodes: list[int]
    edges: list[tuple[int, int, int]]

    def local_index(self) -> dict[int, int]:
        return {e: i for i, e in enumerate(self.nodes)}


class MemoryBank:
    """Fixed-capacity ring buffer of (entity id, embedding) pairs.

    Writes overwrite oldest-first once full. Stored vectors are detached
    copies; they act as constant negatives for contrastive batches.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValidationError(f"memory bank capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.slots: list[tuple[int, np.ndarray]] = []
        self._cursor = 0

    def __len__(self) -> int:
        return len(self.slots)

    def push(self, entity: int, vector: np.ndarray) -> None:
        item = (int(entity), np.array(vector, dtype=np.float64))
        if len(self.slots) < self.capacity:
            self.slots.append(item)
        else:
            self.slots[self._cursor] = item
        self._cursor = (self._cursor + 1) % self.capacity


# ---------------------------------------------------------------------------
# Construction and ingestion
# ---------------------------------------------------------------------------


def build_graph(triples: list[tuple[int, int, int]], num_entities: int | None = None) -> KnowledgeGraph:
    """Assemble a KnowledgeGraph from triples, adding self-loops."""
    seen = set()
    for t in triples:
        if t in seen:
            raise ValidationError(f"duplicate triple {t}")
        seen.add(t)
    if num_entities is None:
        num_entities = 1 + max(
            (max(h, t) for h, _, t in triples), default=-1
        )
    num_relations = 1 + max((r for _, r, _ in triples), default=-1)
    counts: dict[int, int] = {}
    neighbor_sets: list[set[tuple[int, int]]] = [set() for _ in range(num_entities)]
    for h, r, t in triples:
        if not (0 <= h < num_entities and 0 <= t < num_entities):
            raise ValidationError(f"triple ({h}, {r}, {t}) references unknown entity")
        counts[r] = counts.get(r, 0) + 1
        neighbor_sets[h].add((t, r))
        neighbor_sets[t].add((h, r))
    self_rel = num_relations
    adjacency = []
    for e in range(num_entities):
        neighbor_sets[e].add((e, self_rel))
        adjacency.append(sorted(neighbor_sets[e]))
    return KnowledgeGraph(
        num_entities=num_entities,
        num_relations=num_relations,
        triples=sorted(triples),
        relation_counts=counts,
        adjacency=adjacency,
    )


def _parse_int(token: str, path: str, lineno: int) -> int:
    try:
        value = int(token)
    except ValueError:
        raise ParseError(f"{path}:{lineno}: expected integer, got {token!r}") from None
    if value < 0:
        raise ParseError(f"{path}:{lineno}: negative id {value}")
    return value


def _data_lines(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def load_triples(path: str) -> list[tuple[int, int, int]]:
    triples = []
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(f"{path}:{lineno}: expected 3 tab-separated fields")
        h, r, t = (_parse_int(p, path, lineno) for p in parts)
        triples.append((h, r, t))
    return triples


def _read_feature_header(path: str) -> tuple[int, str]:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
    if not header.startswith("#"):
        raise SchemaError(f"{path}:1: missing '#dim=<d> modality=<name>' header")
    fields = dict(
        part.split("=", 1) for part in header[1:].split() if "=" in part
    )
    if "dim" not in fields or "modality" not in fields:
        raise SchemaError(f"{path}:1: header must declare dim= and modality=")
    try:
        dim = int(fields["dim"])
    except ValueError:
        raise SchemaError(f"{path}:1: bad dim {fields['dim']!r}") from None
    if dim < 1:
        raise SchemaError(f"{path}:1: dim must be positive")
    return dim, fields["modality"]


def _parse_values(token: str, dim: int, path: str, lineno: int) -> np.ndarray:
    parts = token.split(",")
    if len(parts) != dim:
        raise SchemaError(
            f"{path}:{lineno}: expected {dim} values, got {len(parts)}"
        )
    try:
        return np.array([float(p) for p in parts])
    except ValueError:
        raise ParseError(f"{path}:{lineno}: non-numeric feature value") from None


def load_features(path: str, num_entities: int, k_attr: int = 10) -> tuple[str, int, dict[int, np.ndarray]]:
    """Parse one feature file; returns (modality, dim, entity -> array)."""
    dim, modality = _read_feature_header(path)
    is_text = modality == "text"
    raw: dict[int, dict[int, np.ndarray]] = {}
    vectors: dict[int, np.ndarray] = {}
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if is_text:
            if len(parts) != 3:
                raise ParseError(f"{path}:{lineno}: expected entity, slot, values")
            entity = _parse_int(parts[0], path, lineno)
            slot = _parse_int(parts[1], path, lineno)
            if slot >= k_attr:
                raise SchemaError(f"{path}:{lineno}: slot {slot} >= k_attr {k_attr}")
            values = _parse_values(parts[2], dim, path, lineno)
            slots = raw.setdefault(entity, {})
            if slot in slots:
                raise SchemaError(f"{path}:{lineno}: duplicate slot {slot} for entity {entity}")
            slots[slot] = values
        else:
            if len(parts) != 2:
                raise ParseError(f"{path}:{lineno}: expected entity, values")
            entity = _parse_int(parts[0], path, lineno)
            if entity in vectors:
                raise SchemaError(f"{path}:{lineno}: duplicate entity {entity}")
            vectors[entity] = _parse_values(parts[1], dim, path, lineno)
        if entity >= num_entities:
            raise SchemaError(
                f"{path}:{lineno}: entity {entity} not present in the graph"
            )
    if is_text:
        for entity, slots in raw.items():
            ordered = [slots[s] for s in sorted(slots)]
            vectors[entity] = np.stack(ordered, axis=0)
    return modality, dim, vectors


def load_graph(directory: str, k_attr: int = 10) -> tuple[KnowledgeGraph, FeatureStore]:
    """Load ``triples.tsv`` plus any ``features_*.tsv`` from a dataset directory."""
    triples_path = os.path.join(directory, "triples.tsv")
    graph = build_graph(load_triples(triples_path))
    store = FeatureStore()
    for name in sorted(os.listdir(directory)):
        if not (name.startswith("features_") and name.endswith(".tsv")):
            continue
        modality, dim, vectors = load_features(
            os.path.join(directory, name), graph.num_entities, k_attr=k_attr
        )
        store.add_modality(modality, dim)
        store.vectors[modality] = vectors
    return graph, store


def load_alignments(path: str) -> AlignmentSet:
    pairs = []
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(f"{path}:{lineno}: expected idA, idB")
        pairs.append((_parse_int(parts[0], path, lineno), _parse_int(parts[1], path, lineno)))
    return AlignmentSet(pairs)


def binarize_interactions(raw: list[tuple[int, int, int]]) -> InteractionSet:
    """Map 1..5 ratings to binary labels: >=4 positive, <=2 negative, ==3 dropped."""
    records = []
    for u, v, rating in raw:
        if not 1 <= rating <= 5:
            raise ValidationError(f"rating {rating} for ({u}, {v}) outside 1..5")
        if rating >= 4:
            records.append((u, v, 1))
        elif rating <= 2:
            records.append((u, v, 0))
    return InteractionSet(records)


def load_interactions(path: str, binarized: bool = False) -> InteractionSet:
    rows = []
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseError(f"{path}:{lineno}: expected user, item, value")
        rows.append(tuple(_parse_int(p, path, lineno) for p in parts))
    if binarized:
        return InteractionSet([(u, v, y) for u, v, y in rows])
    return binarize_interactions(rows)


# ---------------------------------------------------------------------------
# Samplers
# ---------------------------------------------------------------------------


def select_top_k_attributes(counts: dict[int, int], k: int) -> list[int]:
    """The k most frequent attribute ids, ties broken by the smaller id."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [attr for attr, _ in ranked[:k]]


def sample_subgraph(
    graph: KnowledgeGraph,
    center: int,
    hops: int,
    fanout: int,
    seed,
) -> Subgraph:
    """Fanout-bounded BFS neighborhood of ``center`` with induced edges.

    Per frontier node and hop, at most ``fanout`` distinct neighbors are kept
    (sampled without replacement, seeded). The edge set is every graph edge
    whose endpoints were both sampled, plus one self-loop per node.
    """
    if not 0 <= center < graph.num_entities:
        raise ValidationError(f"center {center} out of range")
    if hops < 1 or fanout < 1:
        raise ValidationError("hops and fanout must be >= 1")
    rng = np.random.Generator(np.random.PCG64(seed))
    nodes = {center}
    frontier = [center]
    for _ in range(hops):
        next_frontier: list[int] = []
        for node in sorted(frontier):
            neighbors = sorted(
                {nb for nb, rel in graph.adjacency[node] if nb != node}
            )
            if len(neighbors) > fanout:
                picked = rng.choice(len(neighbors), size=fanout, replace=False)
                neighbors = [neighbors[i] for i in sorted(picked)]
            for nb in neighbors:
                if nb not in nodes:
                    nodes.add(nb)
                    next_frontier.append(nb)
        frontier = next_frontier
        if not frontier:
            break
    node_list = sorted(nodes)
    self_rel = graph.self_relation
    edges = []
    for node in node_list:
        for nb, rel in graph.adjacency[node]:
            if rel == self_rel:
                continue
            if nb in nodes:
                edges.append((nb, node, rel))
        edges.append((node, node, self_rel))
    return Subgraph(center=center, nodes=node_list, edges=sorted(edges))


@dataclass
class NegativeSample:
    """One contrastive negative: where it came from and its stored vector.

    ``batch_index`` is set for in-batch candidates (so the trainer can route
    gradients through the live embedding); bank candidates carry the frozen
    vector only.
    """

    entity: int
    vector: np.ndarray
    batch_index: int | None = None


def sample_negatives(
    batch_pairs: list[tuple[int, int]],
    batch_embeddings: np.ndarray,
    bank: MemoryBank,
    num: int,
    exclusion: dict[int, int],
    seed,
) -> list[list[NegativeSample]]:
    """Draw ``num`` negatives per anchor from (other graph's) batch plus bank.

    ``batch_pairs`` are (anchor, positive) pairs; ``batch_embeddings`` holds
    the positive-side embedding per pair, row-aligned. Candidates matching
    the anchor's aligned counterpart (per ``exclusion``) are never returned.
    Draws are uniform without replacement and fully seeded.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    results = []
    for anchor, positive in batch_pairs:
        excluded = {positive, exclusion.get(anchor)}
        candidates: list[NegativeSample] = []
        for j, (_, other_pos) in enumerate(batch_pairs):
            if other_pos in excluded:
                continue
            candidates.append(
                NegativeSample(other_pos, batch_embeddings[j], batch_index=j)
            )
        for entity, vector in bank.slots:
            if entity in excluded:
                continue
            candidates.append(NegativeSample(entity, vector))
        if len(candidates) < num:
            raise SamplingError(
                f"anchor {anchor}: need {num} negatives, only {len(candidates)} available"
            )
        picked = rng.choice(len(candidates), size=num, replace=False)
        results.append([candidates[i] for i in sorted(picked)])
    return results


def bfs_distances(graph: KnowledgeGraph, source: int) -> dict[int, int]:
    """Hop distance from source to every reachable entity (test oracle helper)."""
    dist = {source: 0}
    frontier = [source]
    while frontier:
        nxt = []
        for node in frontier:
            for nb, _ in graph.adjacency[node]:
                if nb not in dist:
                    dist[nb] = dist[node] + 1
                    nxt.append(nb)
        frontier = nxt
    return dist

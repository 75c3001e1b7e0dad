"""Graph/interaction ingestion, samplers, and the synthetic generator."""

import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alignrec.data import (
    MemoryBank,
    bfs_distances,
    binarize_interactions,
    build_graph,
    load_alignments,
    load_graph,
    load_interactions,
    sample_negatives,
    sample_subgraph,
    select_top_k_attributes,
)
from alignrec.errors import (
    ParseError,
    SamplingError,
    SchemaError,
    ValidationError,
)
from alignrec.synth import SyntheticSpec, gen_synthetic, write_dataset


@pytest.fixture
def tiny_graph_dir(tmp_path):
    d = tmp_path / "g"
    d.mkdir()
    (d / "triples.tsv").write_text(
        "# comment line\n0\t0\t1\n1\t1\t2\n0\t1\t2\n", encoding="utf-8"
    )
    (d / "features_image.tsv").write_text(
        "#dim=3 modality=image\n0\t1.0,2.0,3.0\n1\t0.5,0.5,0.5\n", encoding="utf-8"
    )
    (d / "features_text.tsv").write_text(
        "#dim=2 modality=text\n0\t0\t1.0,0.0\n0\t1\t0.0,1.0\n2\t0\t0.25,0.75\n",
        encoding="utf-8",
    )
    return str(d)


class TestLoadGraph:
    def test_three_triples(self, tiny_graph_dir):
        graph, store = load_graph(tiny_graph_dir)
        assert graph.num_entities == 3
        assert graph.num_relations == 2
        # Adjacency is symmetric plus one self-loop per entity.
        assert len(graph.adjacency[0]) == 3  # neighbors 1, 2 + self
        assert len(graph.adjacency[1]) == 3
        assert len(graph.adjacency[2]) == 3
        assert (0, graph.self_relation) in graph.adjacency[0]
        assert store.dims == {"image": 3, "text": 2}
        assert store.get("text", 0).shape == (2, 2)
        assert store.get("image", 2) is None  # cold entity

    def test_empty_triples(self, tmp_path):
        d = tmp_path / "empty"
        d.mkdir()
        (d / "triples.tsv").write_text("", encoding="utf-8")
        graph, store = load_graph(str(d))
        assert graph.num_entities == 0
        assert graph.triples == []

    def test_wrong_value_count_is_schema_error(self, tmp_path):
        d = tmp_path / "bad"
        d.mkdir()
        (d / "triples.tsv").write_text("0\t0\t1\n", encoding="utf-8")
        values = ",".join(["0.5"] * 63)
        (d / "features_image.tsv").write_text(
            f"#dim=64 modality=image\n0\t{values}\n", encoding="utf-8"
        )
        with pytest.raises(SchemaError, match=":2"):
            load_graph(str(d))

    def test_malformed_line_reports_line_number(self, tmp_path):
        d = tmp_path / "bad2"
        d.mkdir()
        (d / "triples.tsv").write_text("0\t0\t1\n0\t0\n", encoding="utf-8")
        with pytest.raises(ParseError, match=":2"):
            load_graph(str(d))

    def test_dangling_feature_entity(self, tmp_path):
        d = tmp_path / "bad3"
        d.mkdir()
        (d / "triples.tsv").write_text("0\t0\t1\n", encoding="utf-8")
        (d / "features_image.tsv").write_text(
            "#dim=2 modality=image\n7\t1.0,2.0\n", encoding="utf-8"
        )
        with pytest.raises(SchemaError, match="7"):
            load_graph(str(d))

    def test_duplicate_triple_rejected(self):
        with pytest.raises(ValidationError):
            build_graph([(0, 0, 1), (0, 0, 1)])

    def test_slot_beyond_k_attr_rejected(self, tmp_path):
        d = tmp_path / "bad4"
        d.mkdir()
        (d / "triples.tsv").write_text("0\t0\t1\n", encoding="utf-8")
        (d / "features_text.tsv").write_text(
            "#dim=2 modality=text\n0\t12\t1.0,2.0\n", encoding="utf-8"
        )
        with pytest.raises(SchemaError):
            load_graph(str(d), k_attr=10)


class TestBinarize:
    def test_paper_rules(self):
        out = binarize_interactions([(1, 2, 4), (1, 3, 3), (1, 4, 2), (2, 2, 5), (2, 4, 1)])
        assert out.records == [(1, 2, 1), (1, 4, 0), (2, 2, 1), (2, 4, 0)]

    def test_rating_three_dropped(self):
        assert binarize_interactions([(0, 0, 3)]).records == []

    def test_out_of_range_rating(self):
        with pytest.raises(ValidationError):
            binarize_interactions([(0, 0, 6)])
        with pytest.raises(ValidationError):
            binarize_interactions([(0, 0, 0)])

    @given(
        st.lists(
            st.tuples(
                st.integers(0, 20), st.integers(0, 50), st.integers(1, 5)
            ),
            max_size=60,
        )
    )
    @settings(max_examples=60, deadline=None)
    def test_count_preserved_except_threes(self, raw):
        unique = {}
        for u, v, r in raw:
            unique[(u, v)] = r
        rows = [(u, v, r) for (u, v), r in unique.items()]
        out = binarize_interactions(rows)
        threes = sum(1 for _, _, r in rows if r == 3)
        assert len(out) == len(rows) - threes


class TestTopK:
    def test_orders_by_frequency(self):
        assert select_top_k_attributes({0: 5, 1: 3, 2: 1}, 2) == [0, 1]

    def test_k_larger_than_distinct(self):
        assert select_top_k_attributes({4: 1, 2: 9}, 10) == [2, 4]

    def test_tie_breaks_to_smaller_id(self):
        assert select_top_k_attributes({7: 3, 2: 3}, 1) == [2]

    def test_k_zero_rejected(self):
        with pytest.raises(ValidationError):
            select_top_k_attributes({0: 1}, 0)


class TestSubgraph:
    def test_isolated_node(self):
        graph = build_graph([(1, 0, 2)], num_entities=4)
        sg = sample_subgraph(graph, 3, hops=2, fanout=4, seed=0)
        assert sg.nodes == [3]
        assert sg.edges == [(3, 3, graph.self_relation)]

    def test_star_graph_one_hop(self):
        graph = build_graph([(0, 0, 1), (0, 0, 2), (0, 0, 3)])
        sg = sample_subgraph(graph, 0, hops=1, fanout=5, seed=1)
        assert sg.nodes == [0, 1, 2, 3]

    def test_same_seed_identical(self):
        rng = np.random.default_rng(0)
        triples = {(int(a), int(r), int(b)) for a, r, b in rng.integers(0, 30, size=(80, 3)) if a != b}
        graph = build_graph(sorted(triples), num_entities=30)
        one = sample_subgraph(graph, 5, hops=2, fanout=3, seed=99)
        two = sample_subgraph(graph, 5, hops=2, fanout=3, seed=99)
        assert one.nodes == two.nodes and one.edges == two.edges

    def test_never_exceeds_hop_limit(self):
        rng = np.random.default_rng(4)
        triples = {(int(a), int(r % 3), int(b)) for a, r, b in rng.integers(0, 40, size=(120, 3)) if a != b}
        graph = build_graph(sorted(triples), num_entities=40)
        for center in (0, 7, 13):
            for hops in (1, 2):
                sg = sample_subgraph(graph, center, hops=hops, fanout=4, seed=center)
                dist = bfs_distances(graph, center)
                assert all(dist[n] <= hops for n in sg.nodes)
                assert sg.center in sg.nodes
                node_set = set(sg.nodes)
                assert all(s in node_set and t in node_set for s, t, _ in sg.edges)

    def test_invalid_center(self):
        graph = build_graph([(0, 0, 1)])
        with pytest.raises(ValidationError):
            sample_subgraph(graph, 9, hops=1, fanout=1, seed=0)


class TestMemoryBankAndNegatives:
    def test_ring_overwrites_oldest(self):
        bank = MemoryBank(2)
        bank.push(0, np.zeros(2))
        bank.push(1, np.ones(2))
        bank.push(2, np.full(2, 2.0))
        assert len(bank) == 2
        assert sorted(e for e, _ in bank.slots) == [1, 2]

    def test_in_batch_negatives_exclude_counterpart(self):
        pairs = [(0, 10), (1, 11), (2, 12), (3, 13)]
        embeddings = np.arange(8.0).reshape(4, 2)
        bank = MemoryBank(8)
        exclusion = dict(pairs)
        out = sample_negatives(pairs, embeddings, bank, 3, exclusion, seed=5)
        assert len(out) == 4
        for (anchor, positive), negs in zip(pairs, out):
            assert len(negs) == 3
            assert all(n.entity != positive for n in negs)
            assert all(n.batch_index is not None for n in negs)

    def test_insufficient_candidates(self):
        pairs = [(0, 10), (1, 11)]
        embeddings = np.zeros((2, 2))
        with pytest.raises(SamplingError, match="1"):
            sample_negatives(pairs, embeddings, MemoryBank(4), 2, dict(pairs), seed=0)

    def test_bank_candidates_used_and_excluded(self):
        pairs = [(0, 10), (1, 11)]
        embeddings = np.zeros((2, 2))
        bank = MemoryBank(4)
        bank.push(10, np.ones(2))
        bank.push(99, np.full(2, 9.0))
        out = sample_negatives(pairs, embeddings, bank, 2, dict(pairs), seed=1)
        # anchor 0: candidates are in-batch 11 and bank 99 (bank 10 excluded).
        assert sorted(n.entity for n in out[0]) == [11, 99]

    def test_same_seed_same_negatives(self):
        pairs = [(i, 100 + i) for i in range(6)]
        embeddings = np.random.default_rng(0).normal(size=(6, 3))
        bank = MemoryBank(10)
        for i in range(5):
            bank.push(200 + i, np.full(3, float(i)))
        a = sample_negatives(pairs, embeddings, bank, 4, dict(pairs), seed=7)
        b = sample_negatives(pairs, embeddings, bank, 4, dict(pairs), seed=7)
        assert [[n.entity for n in row] for row in a] == [[n.entity for n in row] for row in b]


class TestSynthetic:
    def test_zero_noise_features_solve_linear_map(self):
        spec = SyntheticSpec(entities=30, latent_dim=4, noise=0.0, users=5, seed=2,
                             interactions_per_user=5)
        ds = gen_synthetic(spec)
        # With zero noise, image features equal the stored map applied to latents.
        m = ds.maps["a.image"]
        for i in range(30):
            np.testing.assert_allclose(
                ds.features_a.vectors["image"][i], m @ ds.latents[i], atol=1e-10
            )
        # Recover latents from graph-b features via least squares; aligned rows match.
        mb = ds.maps["b.image"]
        for i in range(0, 30, 7):
            b_id = int(ds.permutation_b[i])
            recovered, *_ = np.linalg.lstsq(mb, ds.features_b.vectors["image"][b_id], rcond=None)
            np.testing.assert_allclose(recovered, ds.latents[i], atol=1e-8)

    def test_mean_degree_near_target(self):
        spec = SyntheticSpec(entities=200, latent_dim=16, noise=0.1, seed=7)
        ds = gen_synthetic(spec)
        mean_degree = 2 * len(ds.graph_a.triples) / spec.entities
        assert 4.0 <= mean_degree <= 16.0

    def test_same_seed_byte_identical_files(self, tmp_path):
        spec = SyntheticSpec(entities=25, latent_dim=4, users=4, seed=13,
                             interactions_per_user=6)
        out1, out2 = tmp_path / "one", tmp_path / "two"
        write_dataset(gen_synthetic(spec), str(out1))
        write_dataset(gen_synthetic(spec), str(out2))
        files1 = sorted(os.path.relpath(os.path.join(r, f), out1)
                        for r, _, fs in os.walk(out1) for f in fs)
        files2 = sorted(os.path.relpath(os.path.join(r, f), out2)
                        for r, _, fs in os.walk(out2) for f in fs)
        assert files1 == files2
        for rel in files1:
            assert (out1 / rel).read_bytes() == (out2 / rel).read_bytes()

    def test_interaction_labels_match_latent_sign(self):
        spec = SyntheticSpec(entities=20, latent_dim=4, users=6, seed=5,
                             interactions_per_user=8)
        ds = gen_synthetic(spec)
        for u, v, y in ds.interactions.records:
            expected = 1 if ds.user_latents[u] @ ds.latents[v] > 0 else 0
            assert y == expected

    def test_invalid_sizes(self):
        with pytest.raises(ValidationError):
            gen_synthetic(SyntheticSpec(entities=5))
        with pytest.raises(ValidationError):
            gen_synthetic(SyntheticSpec(latent_dim=1))

    def test_roundtrip_reload_equals_generated(self, tmp_path):
        spec = SyntheticSpec(entities=25, latent_dim=4, users=4, seed=13,
                             interactions_per_user=6)
        ds = gen_synthetic(spec)
        out = tmp_path / "ds"
        write_dataset(ds, str(out))
        graph_a, feats_a = load_graph(str(out / "graph_a"))
        assert graph_a.triples == ds.graph_a.triples
        assert graph_a.adjacency == ds.graph_a.adjacency
        assert feats_a.dims == ds.features_a.dims
        for modality in feats_a.dims:
            for entity, vec in ds.features_a.vectors[modality].items():
                np.testing.assert_array_equal(feats_a.vectors[modality][entity], vec)
        alignments = load_alignments(str(out / "alignments.tsv"))
        assert alignments.pairs == ds.alignments.pairs
        interactions = load_interactions(str(out / "interactions.tsv"))
        assert interactions.records == ds.interactions.records

"""Extractor conformance: preprocessing rules, schema, engine round trip."""

import json
import shutil
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from featx.encoders import (
    make_image_encoder,
    make_text_encoder,
    resize_image,
    truncate_words,
)
from featx.errors import ManifestError
from featx.extract import (
    ExtractionManifest,
    extract_image_features,
    extract_text_features,
    select_attributes,
)

WORDS = ("drama thriller space noir mystery castle river storm ember quartz "
         "violet monsoon harbor lantern meadow").split()


def long_text(n_words, offset=0):
    return " ".join(WORDS[(offset + i) % len(WORDS)] + str(i) for i in range(n_words))


def make_image(path, size, seed):
    rng = np.random.default_rng(seed)
    arr = rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
    Image.fromarray(arr, "RGB").save(path)


@pytest.fixture
def workspace(tmp_path):
    imgs = tmp_path / "imgs"
    imgs.mkdir()
    items = {}
    for e in range(10):
        make_image(imgs / f"{e}.png", (64 + 16 * e, 48 + 8 * e), seed=e)
        items[str(e)] = {
            "attributes": [f"title entity {e}", long_text(40, offset=e), "shared tag"],
            "image": f"imgs/{e}.png",
        }
    manifest = {
        "text_model": "hash:24",
        "image_model": "pixel:16",
        "k_attr": 10,
        "items": items,
    }
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest), encoding="utf-8")
    return tmp_path, path


class TestTextRules:
    def test_truncation_to_256_words(self, workspace):
        root, _ = workspace
        encoder = make_text_encoder("hash:24")
        full = long_text(300)
        prefix = " ".join(full.split()[:256])
        np.testing.assert_array_equal(
            encoder.encode(truncate_words(full)), encoder.encode(prefix)
        )
        assert truncate_words(full) == prefix

    def test_identical_strings_identical_vectors(self):
        encoder = make_text_encoder("hash:24")
        np.testing.assert_array_equal(
            encoder.encode("the same plot summary"),
            encoder.encode("the same plot summary"),
        )

    def test_truncation_applied_in_extraction(self, tmp_path):
        full = long_text(300)
        prefix = " ".join(full.split()[:256])
        for name, text in (("full", full), ("prefix", prefix)):
            manifest = ExtractionManifest(
                text_model="hash:8", image_model="pixel:8", k_attr=10,
                items={0: {"attributes": [text], "image": None}}, base_dir=str(tmp_path),
            )
            extract_text_features(manifest, str(tmp_path / f"{name}.tsv"))
        assert (tmp_path / "full.tsv").read_bytes() == (tmp_path / "prefix.tsv").read_bytes()

    def test_empty_attribute_skipped_with_warning(self, tmp_path):
        manifest = ExtractionManifest(
            text_model="hash:8", image_model="pixel:8", k_attr=10,
            items={0: {"attributes": ["   "], "image": None},
                   1: {"attributes": ["fine"], "image": None}},
            base_dir=str(tmp_path),
        )
        report = extract_text_features(manifest, str(tmp_path / "t.tsv"))
        assert any(row["entity"] == 0 for row in report.skipped["text"])
        body = (tmp_path / "t.tsv").read_text().splitlines()
        assert len(body) == 2  # header + entity 1

    def test_frequency_filter_keeps_top_k(self):
        items = {
            0: {"attributes": ["common", "rare0"], "image": None},
            1: {"attributes": ["common", "rare1"], "image": None},
            2: {"attributes": ["common", "alpha"], "image": None},
            3: {"attributes": ["alpha"], "image": None},
        }
        manifest = ExtractionManifest("hash:8", "pixel:8", 2, items)
        kept = select_attributes(manifest)
        assert kept[0] == ["common"]
        assert kept[2] == ["common", "alpha"]
        assert kept[3] == ["alpha"]


class TestImageRules:
    def test_resize_applied_before_encoding(self, workspace):
        root, _ = workspace
        encoder = make_image_encoder("pixel:16")
        with Image.open(root / "imgs" / "3.png") as img:
            direct = encoder.encode(resize_image(img))
            resized = resize_image(img)
            assert resized.size == (224, 224)
            again = encoder.encode(resized)
        np.testing.assert_array_equal(direct, again)

    def test_same_file_twice_identical(self, workspace):
        root, _ = workspace
        encoder = make_image_encoder("pixel:16")
        with Image.open(root / "imgs" / "0.png") as img:
            a = encoder.encode(resize_image(img))
        with Image.open(root / "imgs" / "0.png") as img:
            b = encoder.encode(resize_image(img))
        np.testing.assert_array_equal(a, b)

    def test_missing_image_lands_in_skip_report(self, tmp_path):
        manifest = ExtractionManifest(
            text_model="hash:8", image_model="pixel:8", k_attr=10,
            items={0: {"attributes": [], "image": "does-not-exist.png"}},
            base_dir=str(tmp_path),
        )
        report = extract_image_features(manifest, str(tmp_path / "i.tsv"))
        assert report.skipped["image"][0]["entity"] == 0
        assert (tmp_path / "i.tsv").read_text().splitlines() == ["#dim=8 modality=image"]


class TestManifest:
    def test_missing_keys_rejected(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({"text_model": "hash:8"}), encoding="utf-8")
        with pytest.raises(ManifestError):
            ExtractionManifest.load(str(path))

    def test_non_integer_entity_rejected(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps({
            "text_model": "hash:8", "image_model": "pixel:8",
            "items": {"movie-7": {"attributes": []}},
        }), encoding="utf-8")
        with pytest.raises(ManifestError):
            ExtractionManifest.load(str(path))

    def test_unknown_backend_rejected(self, tmp_path):
        manifest = ExtractionManifest("fancy:8", "pixel:8", 10, {0: {"attributes": ["a"], "image": None}})
        with pytest.raises(ManifestError):
            extract_text_features(manifest, str(tmp_path / "x.tsv"))


def run_featx(*args):
    return subprocess.run(
        [sys.executable, "-m", "featx", *args], capture_output=True, text=True
    )


def run_engine(*args):
    return subprocess.run(
        [sys.executable, "-m", "alignrec", *args], capture_output=True, text=True
    )


class TestCliAndEngineRoundTrip:
    def test_rerun_identical_outputs(self, workspace):
        root, manifest = workspace
        for tag in ("one", "two"):
            proc = run_featx(
                "extract", "--manifest", str(manifest),
                "--text-out", str(root / f"text_{tag}.tsv"),
                "--image-out", str(root / f"image_{tag}.tsv"),
            )
            assert proc.returncode == 0, proc.stderr
        assert (root / "text_one.tsv").read_bytes() == (root / "text_two.tsv").read_bytes()
        assert (root / "image_one.tsv").read_bytes() == (root / "image_two.tsv").read_bytes()

    def test_ten_item_fixture_drives_full_cycle(self, workspace):
        root, manifest = workspace
        proc = run_featx(
            "extract", "--manifest", str(manifest),
            "--text-out", str(root / "features_text.tsv"),
            "--image-out", str(root / "features_image.tsv"),
            "--skip-report", str(root / "skips.json"),
        )
        assert proc.returncode == 0, proc.stderr
        assert json.loads((root / "skips.json").read_text()) == {"skipped": {}}

        # Assemble the two graph directories around the extracted features.
        triples = "\n".join(f"{i}\t0\t{(i + 1) % 10}" for i in range(10)) + "\n"
        for graph in ("graph_a", "graph_b"):
            d = root / graph
            d.mkdir()
            (d / "triples.tsv").write_text(triples, encoding="utf-8")
            shutil.copy(root / "features_text.tsv", d / "features_text.tsv")
            shutil.copy(root / "features_image.tsv", d / "features_image.tsv")
        (root / "alignments.tsv").write_text(
            "\n".join(f"{i}\t{i}" for i in range(10)) + "\n", encoding="utf-8"
        )
        rows = []
        for u in range(4):
            for v in range(10):
                rating = 5 if (u + v) % 2 == 0 else 1
                rows.append(f"{u}\t{v}\t{rating}")
        (root / "interactions.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")
        (root / "run.cfg").write_text(
            "d = 16\nheads = 2\nL = 1\ndropout = 0.0\nE1 = 2\nE2 = 2\n"
            "batch = 8\nk_neg = 4\nbank = 32\npatience = 50\nfanout = 4\nseed = 3\n",
            encoding="utf-8",
        )

        proc = run_engine(
            "pretrain", "--config", str(root / "run.cfg"),
            "--graph-a", str(root / "graph_a"), "--graph-b", str(root / "graph_b"),
            "--align", str(root / "alignments.tsv"), "--out", str(root / "m.ckpt"),
        )
        assert proc.returncode == 0, proc.stderr
        assert json.loads(proc.stdout)["phase"] == "pretrained"

        proc = run_engine(
            "finetune", "--ckpt", str(root / "m.ckpt"),
            "--graph", str(root / "graph_a"),
            "--interactions", str(root / "interactions.tsv"),
            "--out", str(root / "m2.ckpt"),
        )
        assert proc.returncode == 0, proc.stderr
        report = json.loads(proc.stdout)
        assert report["phase"] == "finetuned"
        assert len(report["loss_history"]) == 2

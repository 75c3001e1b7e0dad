"""Text and image encoder backends.

Backends are addressed by pinned identifier strings so outputs are
reproducible:

* ``hash:<dim>``   -- offline text encoder: each word token maps to a fixed
  pseudo-random unit vector (derived from its digest) and the text embeds
  as the normalized token sum. No model download, fully deterministic.
* ``pixel:<dim>``  -- offline image encoder: mean RGB over a coarse grid of
  the (already resized) image, projected by a fixed seeded matrix.
* ``st:<model>``   -- sentence-transformers text model (weights must be
  available locally).
* ``clip:<model>`` -- transformers CLIP vision tower (weights must be
  available locally).
"""

from __future__ import annotations

import hashlib

import numpy as np
from PIL import Image

from .errors import ManifestError, SetupError

TEXT_TRUNCATE_WORDS = 256
IMAGE_SIZE = (224, 224)


def truncate_words(text: str, limit: int = TEXT_TRUNCATE_WORDS) -> str:
    """Keep only the first ``limit`` whitespace-delimited words."""
    words = text.split()
    return " ".join(words[:limit])


def resize_image(image: Image.Image) -> Image.Image:
    """Canonical preprocessing: RGB, 224x224 bicubic."""
    return image.convert("RGB").resize(IMAGE_SIZE, Image.BICUBIC)


def _parse_backend(spec: str) -> tuple[str, str]:
    if ":" not in spec:
        raise ManifestError(f"model id {spec!r} must look like '<backend>:<ref>'")
    kind, _, ref = spec.partition(":")
    return kind, ref


def _token_vector(token: str, dim: int) -> np.ndarray:
    digest = hashlib.blake2s(token.encode("utf-8"), digest_size=8).digest()
    rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


class HashTextEncoder:
    """Deterministic bag-of-words embedding; suitable for tests and fixtures."""

    def __init__(self, dim: int):
        self.dim = dim

    def encode(self, text: str) -> np.ndarray:
        tokens = text.split()
        if not tokens:
            raise ManifestError("cannot encode empty text")
        total = np.zeros(self.dim)
        for token in tokens:
            total += _token_vector(token.lower(), self.dim)
        norm = np.linalg.norm(total)
        return total / norm if norm > 0 else total


class PixelImageEncoder:
    """Deterministic coarse color-grid embedding of the resized image."""

    GRID = 4

    def __init__(self, dim: int):
        self.dim = dim
        rng = np.random.Generator(np.random.PCG64(20240601))
        base = 3 * self.GRID * self.GRID
        self._proj = rng.normal(size=(base, dim)) / np.sqrt(base)

    def encode(self, image: Image.Image) -> np.ndarray:
        arr = np.asarray(image, dtype=np.float64) / 255.0
        h, w, _ = arr.shape
        cells = []
        for i in range(self.GRID):
            for j in range(self.GRID):
                block = arr[
                    i * h // self.GRID : (i + 1) * h // self.GRID,
                    j * w // self.GRID : (j + 1) * w // self.GRID,
                ]
                cells.append(block.mean(axis=(0, 1)))
        return np.concatenate(cells) @ self._proj


class SentenceTransformerEncoder:
    def __init__(self, model_id: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise SetupError("sentence-transformers is not installed") from exc
        try:
            self._model = SentenceTransformer(model_id)
        except Exception as exc:
            raise SetupError(f"text model {model_id!r} unavailable: {exc}") from exc
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def encode(self, text: str) -> np.ndarray:
        return np.asarray(self._model.encode([text])[0], dtype=np.float64)


class ClipImageEncoder:
    def __init__(self, model_id: str):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise SetupError("transformers/torch are not installed") from exc
        try:
            self._model = CLIPModel.from_pretrained(model_id)
            self._processor = CLIPProcessor.from_pretrained(model_id)
        except Exception as exc:
            raise SetupError(f"image model {model_id!r} unavailable: {exc}") from exc
        self._torch = torch
        self.dim = int(self._model.config.projection_dim)

    def encode(self, image: Image.Image) -> np.ndarray:
        inputs = self._processor(images=image, return_tensors="pt")
        with self._torch.no_grad():
            feats = self._model.get_image_features(**inputs)
        return feats[0].numpy().astype(np.float64)


def make_text_encoder(spec: str):
    kind, ref = _parse_backend(spec)
    if kind == "hash":
        return HashTextEncoder(int(ref))
    if kind == "st":
        return SentenceTransformerEncoder(ref)
    raise ManifestError(f"unknown text backend {kind!r}")


def make_image_encoder(spec: str):
    kind, ref = _parse_backend(spec)
    if kind == "pixel":
        return PixelImageEncoder(int(ref))
    if kind == "clip":
        return ClipImageEncoder(ref)
    raise ManifestError(f"unknown image backend {kind!r}")

"""Offline feature extraction into the engine's TSV interchange format.

Item text attributes and poster images are encoded by pinned backends
(deterministic offline encoders for fixtures, pretrained text/vision models
when available locally) after the canonical preprocessing: text truncated
to its first 256 words, images resized to 224x224.
"""

from .encoders import (
    IMAGE_SIZE,
    TEXT_TRUNCATE_WORDS,
    make_image_encoder,
    make_text_encoder,
    resize_image,
    truncate_words,
)
from .extract import (
    ExtractionManifest,
    SkipReport,
    extract_image_features,
    extract_text_features,
    select_attributes,
)

__all__ = [
    "ExtractionManifest",
    "IMAGE_SIZE",
    "SkipReport",
    "TEXT_TRUNCATE_WORDS",
    "extract_image_features",
    "extract_text_features",
    "make_image_encoder",
    "make_text_encoder",
    "resize_image",
    "select_attributes",
    "truncate_words",
]

__version__ = "0.1.0"

"""Manifest-driven extraction into the engine's TSV feature schema."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field

from PIL import Image, UnidentifiedImageError

from .encoders import (
    make_image_encoder,
    make_text_encoder,
    resize_image,
    truncate_words,
)
from .errors import ManifestError

logger = logging.getLogger(__name__)


@dataclass
class ExtractionManifest:
    text_model: str
    image_model: str
    k_attr: int
    items: dict[int, dict]
    base_dir: str = "."

    @classmethod
    def load(cls, path: str) -> "ExtractionManifest":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        for key in ("text_model", "image_model", "items"):
            if key not in raw:
                raise ManifestError(f"manifest missing required key {key!r}")
        k_attr = int(raw.get("k_attr", 10))
        if k_attr < 1:
            raise ManifestError("k_attr must be >= 1")
        items: dict[int, dict] = {}
        for key, value in raw["items"].items():
            try:
                entity = int(key)
            except ValueError:
                raise ManifestError(f"entity id {key!r} is not an integer") from None
            if entity < 0:
                raise ManifestError(f"entity id {entity} is negative")
            attributes = value.get("attributes", [])
            if not isinstance(attributes, list) or not all(
                isinstance(a, str) for a in attributes
            ):
                raise ManifestError(f"entity {entity}: attributes must be strings")
            items[entity] = {
                "attributes": attributes,
                "image": value.get("image"),
            }
        return cls(
            text_model=raw["text_model"],
            image_model=raw["image_model"],
            k_attr=k_attr,
            items=items,
            base_dir=os.path.dirname(os.path.abspath(path)),
        )


@dataclass
class SkipReport:
    """Entities dropped from an output, with the reason."""

    skipped: dict[str, list[dict]] = field(default_factory=dict)

    def add(self, modality: str, entity: int, reason: str) -> None:
        self.skipped.setdefault(modality, []).append(
            {"entity": entity, "reason": reason}
        )
        logger.warning("%s: entity %d skipped (%s)", modality, entity, reason)

    def as_dict(self) -> dict:
        return {"skipped": self.skipped}


def select_attributes(manifest: ExtractionManifest) -> dict[int, list[str]]:
    """Keep each entity's attributes that survive the global top-K filter.

    Attributes are ranked by how many entities carry them; ties break
    lexicographically. Surviving attributes keep their per-entity order and
    occupy slots 0..k-1.
    """
    counts: dict[str, int] = {}
    for item in manifest.items.values():
        for attr in set(a for a in item["attributes"] if a.strip()):
            counts[attr] = counts.get(attr, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    retained = {attr for attr, _ in ranked[: manifest.k_attr]}
    out = {}
    for entity, item in manifest.items.items():
        kept = [a for a in item["attributes"] if a in retained]
        out[entity] = kept[: manifest.k_attr]
    return out


def _fmt(x: float) -> str:
    return repr(float(x))


def extract_text_features(
    manifest: ExtractionManifest, out_path: str, report: SkipReport | None = None
) -> SkipReport:
    """Encode retained attribute strings (truncated to 256 words) per entity."""
    report = report or SkipReport()
    encoder = make_text_encoder(manifest.text_model)
    selected = select_attributes(manifest)
    lines = []
    for entity in sorted(manifest.items):
        slot = 0
        for attr in selected[entity]:
            truncated = truncate_words(attr)
            if not truncated:
                report.add("text", entity, "empty attribute")
                continue
            vector = encoder.encode(truncated)
            lines.append(
                f"{entity}\t{slot}\t" + ",".join(_fmt(v) for v in vector)
            )
            slot += 1
        if slot == 0 and manifest.items[entity]["attributes"]:
            report.add("text", entity, "no attribute survived the filter")
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#dim={encoder.dim} modality=text\n")
        fh.write("\n".join(lines) + ("\n" if lines else ""))
    return report


def extract_image_features(
    manifest: ExtractionManifest, out_path: str, report: SkipReport | None = None
) -> SkipReport:
    """Encode each entity's poster image, resized to 224x224 first."""
    report = report or SkipReport()
    encoder = make_image_encoder(manifest.image_model)
    lines = []
    for entity in sorted(manifest.items):
        rel = manifest.items[entity]["image"]
        if not rel:
            continue
        path = rel if os.path.isabs(rel) else os.path.join(manifest.base_dir, rel)
        try:
            with Image.open(path) as img:
                vector = encoder.encode(resize_image(img))
        except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
            report.add("image", entity, f"unreadable image: {exc}")
            continue
        lines.append(f"{entity}\t" + ",".join(_fmt(v) for v in vector))
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"#dim={encoder.dim} modality=image\n")
        fh.write("\n".join(lines) + ("\n" if lines else ""))
    return report

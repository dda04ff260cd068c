"""Synthetic datasets and the on-disk formats.

Datasets and prediction tables are JSON lines (one record per line);
mask sets, reports, and profile fixtures are single JSON documents.
Loading is strict: malformed JSON, schema problems, duplicates, and
out-of-range values are distinct error types that carry the offending
line number. Serialization is canonical (sorted keys, fixed separators)
so identical inputs produce byte-identical files.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from .classifiers import HashClassifier, Prediction, TableClassifier, VariantKey
from .cover import MaskSet
from .defenders import MutantProfile
from .errors import (
    DuplicateKeyError,
    InvalidInputError,
    MalformedLineError,
    SchemaViolationError,
    ValueOutOfRangeError,
)
from .tensor import Image, Mask, PatchSpec, Rect

__all__ = [
    "FORMAT_VERSION",
    "DatasetRecord",
    "ProfileFixture",
    "gen_synthetic_dataset",
    "save_dataset",
    "load_dataset",
    "save_maskset",
    "load_maskset",
    "save_predictions",
    "load_predictions",
    "save_report",
    "load_profile_fixture",
    "dumps_canonical",
]

FORMAT_VERSION = 1

LABEL_MODES = ("classifier", "uniform")


@dataclass(frozen=True)
class DatasetRecord:
    """A sample: an image, its identity, and its ground-truth label."""

    id: str
    true_label: int
    image: Image


@dataclass(frozen=True)
class ProfileFixture:
    """Hand-written attack scenario expressed purely as predictions.

    `benign` names the clean sample; every id in `variants` is treated
    as an in-scope tampered version of it. Profiles come from the
    bundled prediction rows, so scenarios stay classifier-free.
    """

    true_label: int
    benign_id: str
    variant_ids: tuple[str, ...]
    num_masks: int
    table: TableClassifier

    def benign_profile(self) -> MutantProfile:
        return self.table.profile_for(self.benign_id)

    def variant_profiles(self) -> list[tuple[str, MutantProfile]]:
        return [(vid, self.table.profile_for(vid)) for vid in self.variant_ids]


def dumps_canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def gen_synthetic_dataset(
    count: int,
    plane: tuple[int, int],
    channels: int,
    alphabet_size: int,
    num_labels: int,
    seed: int,
    label_mode: str = "classifier",
) -> list[DatasetRecord]:
    """Seeded random pixels with either aligned or uniform labels.

    "classifier" labels each sample with the hash classifier built from
    the same seed and label count, so evaluating under that classifier
    gives clean accuracy 1 by construction. "uniform" draws labels
    independently of the pixels, landing clean accuracy near
    1/num_labels.
    """
    if count < 1:
        raise InvalidInputError("count must be positive")
    if label_mode not in LABEL_MODES:
        raise InvalidInputError(
            f"label_mode must be one of {LABEL_MODES}, got {label_mode!r}"
        )
    h, w = plane
    rng = random.Random(seed)
    labeler = HashClassifier(seed=seed, num_labels=num_labels)
    records = []
    npix = h * w * channels
    for i in range(count):
        pixels = tuple(rng.randrange(alphabet_size) for _ in range(npix))
        image = Image(h, w, channels, alphabet_size, pixels)
        if label_mode == "classifier":
            label = labeler.classify(image).label
        else:
            label = rng.randrange(num_labels)
        records.append(DatasetRecord(f"s{i:05d}", label, image))
    return records


# ---------- json-lines plumbing ----------


def _read_jsonl(path: str) -> Iterable[tuple[int, dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedLineError(path, lineno, f"invalid JSON: {e.msg}")
            if not isinstance(obj, dict):
                raise SchemaViolationError(path, lineno, "record must be an object")
            yield lineno, obj


def _need(path: str, lineno: int, obj: dict, key: str, types) -> Any:
    if key not in obj:
        raise SchemaViolationError(path, lineno, f"missing field {key!r}")
    val = obj[key]
    if not isinstance(val, types) or isinstance(val, bool):
        raise SchemaViolationError(
            path, lineno, f"field {key!r} has the wrong type"
        )
    return val


# ---------- datasets ----------


def save_dataset(records: Sequence[DatasetRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            img = r.image
            fh.write(
                dumps_canonical(
                    {
                        "format_version": FORMAT_VERSION,
                        "id": r.id,
                        "label": r.true_label,
                        "shape": [img.height, img.width, img.channels],
                        "alphabet": img.alphabet_size,
                        "pixels": list(img.pixels),
                    }
                )
                + "\n"
            )


def load_dataset(path: str) -> list[DatasetRecord]:
    records = []
    seen: set[str] = set()
    for lineno, obj in _read_jsonl(path):
        version = _need(path, lineno, obj, "format_version", int)
        if version != FORMAT_VERSION:
            raise SchemaViolationError(
                path, lineno, f"unsupported format_version {version}"
            )
        rid = _need(path, lineno, obj, "id", str)
        if rid in seen:
            raise DuplicateKeyError(path, lineno, f"duplicate sample id {rid!r}")
        seen.add(rid)
        label = _need(path, lineno, obj, "label", int)
        if label < 0:
            raise ValueOutOfRangeError(path, lineno, "label must be non-negative")
        shape = _need(path, lineno, obj, "shape", list)
        if len(shape) != 3 or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in shape
        ):
            raise SchemaViolationError(path, lineno, "shape must be [h, w, c]")
        alphabet = _need(path, lineno, obj, "alphabet", int)
        pixels = _need(path, lineno, obj, "pixels", list)
        try:
            image = Image(shape[0], shape[1], shape[2], alphabet, tuple(pixels))
        except (InvalidInputError, TypeError) as e:
            raise ValueOutOfRangeError(path, lineno, str(e))
        records.append(DatasetRecord(rid, label, image))
    if not records:
        raise SchemaViolationError(path, 0, "dataset holds no records")
    return records


# ---------- mask sets ----------


def save_maskset(mask_set: MaskSet, path: str) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "plane": [mask_set.spec.plane_height, mask_set.spec.plane_width],
        "spec": mask_set.spec.to_dict(),
        "masks_per_axis": mask_set.masks_per_axis,
        "compound": mask_set.compound,
        "masks": [
            {"rects": [r.to_list() for r in m.rects]} for m in mask_set.masks
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_canonical(doc) + "\n")


def load_maskset(path: str) -> MaskSet:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise MalformedLineError(path, e.lineno, f"invalid JSON: {e.msg}")
    if not isinstance(doc, dict):
        raise SchemaViolationError(path, 0, "document must be an object")
    version = _need(path, 0, doc, "format_version", int)
    if version != FORMAT_VERSION:
        raise SchemaViolationError(path, 0, f"unsupported format_version {version}")
    plane = _need(path, 0, doc, "plane", list)
    if len(plane) != 2:
        raise SchemaViolationError(path, 0, "plane must be [h, w]")
    spec_doc = _need(path, 0, doc, "spec", dict)
    masks_doc = _need(path, 0, doc, "masks", list)
    try:
        spec = PatchSpec.from_dict(plane[0], plane[1], spec_doc)
        masks = []
        for m in masks_doc:
            rects = tuple(Rect(*r) for r in m["rects"])
            masks.append(Mask(plane[0], plane[1], rects))
        return MaskSet(
            tuple(masks),
            spec,
            doc.get("masks_per_axis", 1),
            compound=bool(doc.get("compound", False)),
        )
    except (InvalidInputError, KeyError, TypeError) as e:
        raise SchemaViolationError(path, 0, f"bad mask set: {e}")


# ---------- prediction tables ----------


def _variant_key(path: str, lineno: int, raw) -> VariantKey:
    if raw == "base":
        return "base"
    if isinstance(raw, dict) and set(raw) == {"mask_index"}:
        idx = raw["mask_index"]
        if isinstance(idx, int) and not isinstance(idx, bool) and idx >= 0:
            return idx
    raise SchemaViolationError(
        path, lineno, 'variant must be "base" or {"mask_index": n}'
    )


def save_predictions(
    rows: Sequence[tuple[str, VariantKey, Prediction]], path: str
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample_id, variant, pred in rows:
            variant_doc = (
                "base" if variant == "base" else {"mask_index": variant}
            )
            fh.write(
                dumps_canonical(
                    {
                        "sample_id": sample_id,
                        "variant": variant_doc,
                        "label": pred.label,
                        "confidence": pred.confidence,
                    }
                )
                + "\n"
            )


def load_predictions(path: str) -> TableClassifier:
    rows: dict[tuple[str, VariantKey], Prediction] = {}
    max_index = -1
    for lineno, obj in _read_jsonl(path):
        sample_id = _need(path, lineno, obj, "sample_id", str)
        if "variant" not in obj:
            raise SchemaViolationError(path, lineno, "missing field 'variant'")
        variant = _variant_key(path, lineno, obj["variant"])
        label = _need(path, lineno, obj, "label", int)
        confidence = _need(path, lineno, obj, "confidence", (int, float))
        if label < 0:
            raise ValueOutOfRangeError(path, lineno, "label must be non-negative")
        if not 0.0 < confidence < 1.0:
            raise ValueOutOfRangeError(
                path, lineno, "confidence must lie strictly inside (0, 1)"
            )
        key = (sample_id, variant)
        if key in rows:
            raise DuplicateKeyError(
                path, lineno, f"duplicate prediction for {key!r}"
            )
        rows[key] = Prediction(label, float(confidence))
        if isinstance(variant, int):
            max_index = max(max_index, variant)
    if not rows:
        raise SchemaViolationError(path, 0, "prediction table holds no rows")
    return TableClassifier(rows, num_masks=max_index + 1)


# ---------- reports and fixtures ----------


def save_report(doc: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def load_profile_fixture(path: str) -> ProfileFixture:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise MalformedLineError(path, e.lineno, f"invalid JSON: {e.msg}")
    if not isinstance(doc, dict):
        raise SchemaViolationError(path, 0, "document must be an object")
    version = _need(path, 0, doc, "format_version", int)
    if version != FORMAT_VERSION:
        raise SchemaViolationError(path, 0, f"unsupported format_version {version}")
    true_label = _need(path, 0, doc, "true_label", int)
    benign = _need(path, 0, doc, "benign", str)
    variants = _need(path, 0, doc, "variants", list)
    if not all(isinstance(v, str) for v in variants):
        raise SchemaViolationError(path, 0, "variants must be sample id strings")
    rows_doc = _need(path, 0, doc, "rows", list)

    rows: dict[tuple[str, VariantKey], Prediction] = {}
    max_index = -1
    for i, obj in enumerate(rows_doc):
        lineno = 0
        if not isinstance(obj, dict):
            raise SchemaViolationError(path, lineno, f"row {i} must be an object")
        sample_id = _need(path, lineno, obj, "sample_id", str)
        variant = _variant_key(path, lineno, obj.get("variant"))
        label = _need(path, lineno, obj, "label", int)
        confidence = _need(path, lineno, obj, "confidence", (int, float))
        if not 0.0 < confidence < 1.0:
            raise ValueOutOfRangeError(
                path, lineno, f"row {i}: confidence must lie strictly inside (0, 1)"
            )
        key = (sample_id, variant)
        if key in rows:
            raise DuplicateKeyError(path, lineno, f"duplicate row for {key!r}")
        rows[key] = Prediction(label, float(confidence))
        if isinstance(variant, int):
            max_index = max(max_index, variant)
    table = TableClassifier(rows, num_masks=max_index + 1)
    fixture = ProfileFixture(
        true_label=true_label,
        benign_id=benign,
        variant_ids=tuple(variants),
        num_masks=max_index + 1,
        table=table,
    )
    # Fail fast if any referenced profile is incomplete.
    fixture.benign_profile()
    fixture.variant_profiles()
    return fixture

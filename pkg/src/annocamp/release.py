"""Dataset ingestion and the anonymized release format.

The release file is JSON-lines, one image per line::

    {"image_id": "...", "feature": [...], "subject": "...",
     "judgments": [{"annotator": "p0007", "verdict": "yes",
                    "comment": {"text": "...", "trigger": "..."}}]}

``feature``, ``subject`` and ``comment`` are omitted when absent. Annotator
identities are replaced by a pseudonym mapping generated fresh per export
(seeded, so identical seeds give byte-identical files); usernames,
credentials, and image sources never appear in a release. Feature vectors
are float32 and serialize as decimal text with 9 significant digits, which
round-trips float32 exactly; an optional binary sidecar stores the same
matrix as little-endian float32 rows.
"""

from __future__ import annotations

import io
import json
import random
import struct
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np

from . import errors
from .model import (
    DEFAULT_CATEGORIES,
    MAX_COMMENT_LENGTH,
    SUBJECT_LABELS,
    Campaign,
    Comment,
    ImageItem,
    Judgment,
)
from .store import CampaignSnapshot, IngestResult, Store

SIDECAR_MAGIC = b"ACFV0001"

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


# -- ingestion -----------------------------------------------------------------

def classify_source(source: str) -> tuple[str, str]:
    kind = "url" if source.startswith(("http://", "https://")) else "path"
    return kind, source


def iter_manifest(lines: Iterable[str]) -> Iterator[tuple[str, str]]:
    """One source per line; blank lines and ``#`` comments are skipped."""
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield classify_source(line)


def ingest_images(store: Store, campaign_id: str, manifest: str | Path | IO[str]) -> IngestResult:
    """Stream a manifest file into the campaign's image pool."""
    if hasattr(manifest, "read"):
        result = store.add_images(campaign_id, iter_manifest(manifest))
    else:
        with open(manifest, "r", encoding="utf-8") as handle:
            result = store.add_images(campaign_id, iter_manifest(handle))
    if result.registered == 0 and not result.duplicates:
        raise errors.EmptyManifest("manifest contains no sources")
    return result


def iter_feature_csv(lines: Iterable[str]) -> Iterator[tuple[str, np.ndarray]]:
    """Parse ``image_id,f0,...,f{d-1}`` rows into float32 vectors."""
    it = iter(lines)
    try:
        header = next(it).strip()
    except StopIteration:
        raise errors.SchemaViolation("feature file is empty", line=1)
    fields = header.split(",")
    if fields[0] != "image_id" or len(fields) < 2:
        raise errors.SchemaViolation(
            "feature file header must be image_id,f0,...,f{d-1}", line=1
        )
    for i, name in enumerate(fields[1:]):
        if name != f"f{i}":
            raise errors.SchemaViolation(
                f"unexpected feature column {name!r} at position {i + 1}", line=1
            )
    d = len(fields) - 1
    for line_no, raw in enumerate(it, start=2):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) - 1 != d:
            raise errors.DimensionMismatch(
                f"row {line_no}: expected {d} values, got {len(parts) - 1}"
            )
        try:
            vec = np.array([float(x) for x in parts[1:]], dtype="<f4")
        except ValueError:
            raise errors.SchemaViolation(
                f"row {line_no}: non-numeric feature value", line=line_no
            )
        yield parts[0], vec


def attach_features(store: Store, campaign_id: str, feature_file: str | Path | IO[str]) -> int:
    if hasattr(feature_file, "read"):
        return store.attach_features(campaign_id, iter_feature_csv(feature_file))
    with open(feature_file, "r", encoding="utf-8") as handle:
        return store.attach_features(campaign_id, iter_feature_csv(handle))


# -- export ----------------------------------------------------------------------

def _format_feature(vec: np.ndarray) -> list[float]:
    # 9 significant decimal digits identify any float32 uniquely
    return [float(f"{float(x):.9g}") for x in vec]


def _pseudonym_map(annotator_ids: Iterable[str], seed: int) -> dict[str, str]:
    ordered = sorted(set(annotator_ids))
    rng = random.Random(seed)
    rng.shuffle(ordered)
    return {aid: f"p{k:04d}" for k, aid in enumerate(ordered, start=1)}


def _record_for_image(
    image_id: str,
    feature: np.ndarray | None,
    subject: str | None,
    judgments: list[Judgment],
    pseudonyms: dict[str, str],
) -> str:
    entries = []
    for j in sorted(judgments, key=lambda j: pseudonyms[j.annotator_id]):
        entry: dict = {
            "annotator": pseudonyms[j.annotator_id],
            "verdict": j.verdict,
        }
        if j.comment is not None:
            entry["comment"] = {
                "text": j.comment.text,
                "trigger": j.comment.trigger_category,
            }
        entries.append(entry)
    record: dict = {"image_id": image_id}
    if feature is not None:
        record["feature"] = _format_feature(feature)
    if subject is not None:
        record["subject"] = subject
    record["judgments"] = entries
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def _iter_snapshot_records(snapshot: CampaignSnapshot):
    by_image: dict[str, list[Judgment]] = {}
    for j in snapshot.judgments:
        by_image.setdefault(j.image_id, []).append(j)
    for image_id in sorted(by_image):
        image = snapshot.images[image_id]
        yield (
            image_id,
            snapshot.features.get(image_id),
            image.subject_label,
            by_image[image_id],
        )


def _record_stream(source: Store | CampaignSnapshot, campaign_id: str | None):
    if isinstance(source, Store):
        if campaign_id is None:
            raise ValueError("campaign_id is required when exporting from a store")
        annotator_ids = {a.id for a in source.list_annotators(campaign_id)}
        annotator_ids.update(source.judging_annotator_ids(campaign_id))
        return annotator_ids, source.iter_judged_images(campaign_id)
    annotator_ids = {j.annotator_id for j in source.judgments}
    return annotator_ids, _iter_snapshot_records(source)


def iter_release_lines(
    source: Store | CampaignSnapshot,
    campaign_id: str | None = None,
    pseudonym_seed: int = 0,
) -> Iterator[str]:
    """Yield release records as JSON lines (without the newline)."""
    annotator_ids, records = _record_stream(source, campaign_id)
    pseudonyms = _pseudonym_map(annotator_ids, pseudonym_seed)
    for image_id, feature, subject, judgments in records:
        yield _record_for_image(image_id, feature, subject, judgments, pseudonyms)


def export_release(
    source: Store | CampaignSnapshot,
    destination: str | Path | IO[str],
    campaign_id: str | None = None,
    pseudonym_seed: int = 0,
    sidecar: str | Path | None = None,
) -> int:
    """Write one line per judged image; returns the record count.

    Deterministic for a fixed ``pseudonym_seed``. ``sidecar`` additionally
    writes the feature vectors of exported records, in record order, as a
    binary float32 matrix.
    """
    annotator_ids, records = _record_stream(source, campaign_id)
    pseudonyms = _pseudonym_map(annotator_ids, pseudonym_seed)

    own_handle = not hasattr(destination, "write")
    out = open(destination, "w", encoding="utf-8") if own_handle else destination
    sidecar_state: tuple[IO[bytes], int] | None = None
    count = 0
    try:
        for image_id, feature, subject, judgments in records:
            out.write(
                _record_for_image(image_id, feature, subject, judgments, pseudonyms)
            )
            out.write("\n")
            count += 1
            if sidecar is not None and feature is not None:
                if sidecar_state is None:
                    handle = open(sidecar, "wb")
                    handle.write(SIDECAR_MAGIC + struct.pack("<II", feature.size, 0))
                    sidecar_state = (handle, feature.size)
                handle, dim = sidecar_state
                if feature.size != dim:
                    raise errors.DimensionMismatch(
                        f"sidecar expects dimension {dim}, image {image_id}"
                        f" has {feature.size}"
                    )
                handle.write(feature.astype("<f4").tobytes())
    finally:
        if own_handle:
            out.close()
    if sidecar_state is not None:
        handle, dim = sidecar_state
        rows = (handle.tell() - 16) // (4 * dim)
        handle.seek(len(SIDECAR_MAGIC))
        handle.write(struct.pack("<II", dim, rows))
        handle.close()
    if count == 0:
        raise errors.NothingToExport("campaign has no judgments")
    return count


def read_feature_sidecar(path: str | Path) -> np.ndarray:
    with open(path, "rb") as handle:
        header = handle.read(16)
        if len(header) != 16 or header[:8] != SIDECAR_MAGIC:
            raise errors.SchemaViolation("not a feature sidecar file", line=1)
        dim, count = struct.unpack("<II", header[8:])
        data = np.frombuffer(handle.read(), dtype="<f4")
    if data.size != dim * count:
        raise errors.SchemaViolation(
            f"sidecar payload holds {data.size} floats, header promises"
            f" {count}x{dim}"
        )
    return data.reshape(count, dim)


# -- import ------------------------------------------------------------------------

_RECORD_KEYS = {"image_id", "feature", "subject", "judgments"}
_JUDGMENT_KEYS = {"annotator", "verdict", "comment"}
_COMMENT_KEYS = {"text", "trigger"}


def _violation(line_no: int, message: str) -> errors.SchemaViolation:
    return errors.SchemaViolation(f"record {line_no}: {message}", line=line_no)


def _parse_record(line_no: int, raw: str) -> dict:
    try:
        record = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise _violation(line_no, f"invalid JSON ({exc.msg})")
    if not isinstance(record, dict):
        raise _violation(line_no, "record must be a JSON object")
    unknown = set(record) - _RECORD_KEYS
    if unknown:
        raise _violation(line_no, f"unknown fields {sorted(unknown)}")
    if not isinstance(record.get("image_id"), str) or not record["image_id"]:
        raise _violation(line_no, "image_id must be a non-empty string")
    judgments = record.get("judgments")
    if not isinstance(judgments, list) or not judgments:
        raise _violation(line_no, "judgments must be a non-empty list")
    subject = record.get("subject")
    if subject is not None and subject not in SUBJECT_LABELS:
        raise _violation(line_no, f"unknown subject {subject!r}")
    feature = record.get("feature")
    if feature is not None:
        if not isinstance(feature, list) or not feature or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) for x in feature
        ):
            raise _violation(line_no, "feature must be a non-empty numeric array")
    for entry in judgments:
        if not isinstance(entry, dict) or set(entry) - _JUDGMENT_KEYS:
            raise _violation(line_no, "malformed judgment entry")
        if not isinstance(entry.get("annotator"), str) or not entry["annotator"]:
            raise _violation(line_no, "judgment needs an annotator pseudonym")
        verdict = entry.get("verdict")
        if verdict not in ("yes", "no"):
            raise _violation(line_no, f"verdict must be yes or no, got {verdict!r}")
        comment = entry.get("comment")
        if verdict == "no" and comment is not None:
            raise _violation(line_no, "a no-verdict must not carry a comment")
        if verdict == "yes":
            if not isinstance(comment, dict) or set(comment) - _COMMENT_KEYS:
                raise _violation(line_no, "a yes-verdict requires a comment object")
            text = comment.get("text")
            if (
                not isinstance(text, str)
                or not text.strip()
                or len(text.strip()) > MAX_COMMENT_LENGTH
            ):
                raise _violation(line_no, "comment text empty or oversized")
            if not isinstance(comment.get("trigger"), str) or not comment["trigger"]:
                raise _violation(line_no, "comment needs a trigger category")
    return record


def import_release(
    source: str | Path | IO[str], campaign_id: str = "imported"
) -> CampaignSnapshot:
    """Parse a release file into an analytics-ready read-only snapshot.

    Campaign metadata is not part of the release format, so it is inferred:
    the category set is the default list extended with any other observed
    triggers, and the quota is the deepest observed judgment count.
    """
    if hasattr(source, "read"):
        handle = source
        own_handle = False
        name = campaign_id
    else:
        handle = open(source, "r", encoding="utf-8")
        own_handle = True
        name = Path(source).name
    images: dict[str, ImageItem] = {}
    features: dict[str, np.ndarray] = {}
    judgments: list[Judgment] = []
    triggers: set[str] = set()
    dim: int | None = None
    max_depth = 1
    try:
        for line_no, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            record = _parse_record(line_no, line)
            image_id = record["image_id"]
            if image_id in images:
                raise _violation(line_no, f"duplicate image_id {image_id!r}")
            feature = record.get("feature")
            if feature is not None:
                if dim is None:
                    dim = len(feature)
                elif len(feature) != dim:
                    raise _violation(
                        line_no,
                        f"feature dimension {len(feature)} != {dim} seen earlier",
                    )
                features[image_id] = np.array(feature, dtype="<f4")
            images[image_id] = ImageItem(
                id=image_id,
                campaign_id=campaign_id,
                source_kind="none",
                source="",
                subject_label=record.get("subject"),
                has_feature=feature is not None,
            )
            entries = record["judgments"]
            max_depth = max(max_depth, len(entries))
            seen_annotators = set()
            for k, entry in enumerate(entries, start=1):
                if entry["annotator"] in seen_annotators:
                    raise _violation(
                        line_no, f"annotator {entry['annotator']} judged twice"
                    )
                seen_annotators.add(entry["annotator"])
                comment = None
                if entry["verdict"] == "yes":
                    comment = Comment(
                        text=entry["comment"]["text"].strip(),
                        trigger_category=entry["comment"]["trigger"],
                    )
                    triggers.add(comment.trigger_category)
                judgments.append(
                    Judgment(
                        id=f"j{len(judgments) + 1:08d}",
                        campaign_id=campaign_id,
                        annotator_id=entry["annotator"],
                        image_id=image_id,
                        verdict=entry["verdict"],
                        timestamp=_EPOCH,
                        comment=comment,
                    )
                )
    finally:
        if own_handle:
            handle.close()
    if not images:
        raise errors.SchemaViolation("release file holds no records", line=1)
    categories = tuple(DEFAULT_CATEGORIES) + tuple(
        sorted(triggers - set(DEFAULT_CATEGORIES))
    )
    campaign = Campaign(
        id=campaign_id,
        name=name,
        prompt_key="prompt.main",
        category_set=categories,
        quota=max_depth,
        default_language="en",
        status="closed",
        feature_dim=dim if dim is not None else 0,
    )
    return CampaignSnapshot(
        campaign=campaign,
        images=images,
        features=features,
        judgments=tuple(judgments),
    )


def export_to_string(
    source: Store | CampaignSnapshot,
    campaign_id: str | None = None,
    pseudonym_seed: int = 0,
) -> str:
    buf = io.StringIO()
    export_release(source, buf, campaign_id=campaign_id, pseudonym_seed=pseudonym_seed)
    return buf.getvalue()

"""SQLite-backed persistence for campaigns, images, annotators, judgments.

One store holds any number of campaigns; campaigns never share rows. All
writes run under a single process-wide lock plus a UNIQUE constraint on the
(annotator, image) pair, so duplicate-judgment races resolve to exactly one
winner even with concurrent callers. Reads of analytics data go through
:meth:`Store.snapshot`, which returns an immutable view safe to share across
threads.
"""

from __future__ import annotations

import json
import secrets
import sqlite3
import threading
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from . import errors, model
from .model import Annotator, Campaign, Comment, ImageItem, Judgment

_SCHEMA = """
CREATE TABLE IF NOT EXISTS campaigns (
    id TEXT PRIMARY KEY,
    name TEXT NOT NULL,
    prompt_key TEXT NOT NULL,
    category_set TEXT NOT NULL,
    quota INTEGER NOT NULL,
    default_language TEXT NOT NULL,
    status TEXT NOT NULL,
    feature_dim INTEGER NOT NULL,
    has_features INTEGER NOT NULL DEFAULT 0,
    rng_seed INTEGER NOT NULL,
    created_at TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS images (
    id TEXT NOT NULL,
    campaign_id TEXT NOT NULL,
    seq INTEGER NOT NULL,
    source_kind TEXT NOT NULL,
    source TEXT NOT NULL,
    subject TEXT,
    subject_set_at TEXT,
    feature BLOB,
    PRIMARY KEY (campaign_id, id),
    UNIQUE (campaign_id, source)
);
CREATE TABLE IF NOT EXISTS annotators (
    id TEXT NOT NULL,
    campaign_id TEXT NOT NULL,
    username TEXT NOT NULL UNIQUE,
    credential_hash TEXT NOT NULL,
    ui_language TEXT NOT NULL,
    PRIMARY KEY (campaign_id, id)
);
CREATE TABLE IF NOT EXISTS judgments (
    id TEXT NOT NULL,
    campaign_id TEXT NOT NULL,
    annotator_id TEXT NOT NULL,
    image_id TEXT NOT NULL,
    verdict TEXT NOT NULL,
    comment_text TEXT,
    comment_trigger TEXT,
    created_at TEXT NOT NULL,
    PRIMARY KEY (campaign_id, id),
    UNIQUE (campaign_id, annotator_id, image_id)
);
CREATE INDEX IF NOT EXISTS judgments_by_image
    ON judgments (campaign_id, image_id);
CREATE TABLE IF NOT EXISTS offers (
    campaign_id TEXT NOT NULL,
    annotator_id TEXT NOT NULL,
    image_id TEXT NOT NULL,
    fallback INTEGER NOT NULL DEFAULT 0,
    PRIMARY KEY (campaign_id, annotator_id)
);
"""


@dataclass(frozen=True)
class IngestResult:
    registered: int
    duplicates: tuple[str, ...]


@dataclass(frozen=True)
class CampaignSnapshot:
    """Immutable read-only view of one campaign, the input to all analytics.

    ``images`` preserves registration order; ``features`` maps image id to a
    float32 vector for the subset of images that have one.
    """

    campaign: Campaign
    images: dict[str, ImageItem]
    features: dict[str, np.ndarray]
    judgments: tuple[Judgment, ...]

    def comments_by_image(self) -> dict[str, list[Comment]]:
        out: dict[str, list[Comment]] = {}
        for j in self.judgments:
            if j.comment is not None:
                out.setdefault(j.image_id, []).append(j.comment)
        return out

    def judgment_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for j in self.judgments:
            out[j.image_id] = out.get(j.image_id, 0) + 1
        return out

    def total_comments(self) -> int:
        return sum(1 for j in self.judgments if j.comment is not None)


class Store:
    """Durable transactional store; ``:memory:`` gives an ephemeral one."""

    def __init__(self, path: str | Path = ":memory:"):
        self._path = str(path)
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(
            self._path, check_same_thread=False, isolation_level=None
        )
        self._conn.execute("PRAGMA foreign_keys = ON")
        if self._path != ":memory:":
            self._conn.execute("PRAGMA journal_mode = WAL")
            self._conn.execute("PRAGMA synchronous = NORMAL")
        self._conn.executescript(_SCHEMA)

    @property
    def lock(self) -> threading.RLock:
        return self._lock

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    # -- campaigns ---------------------------------------------------------

    def create_campaign(
        self,
        name: str,
        quota: int,
        categories: Iterable[str] | None = None,
        prompt_key: str = "prompt.main",
        language: str = "en",
        feature_dim: int = model.DEFAULT_FEATURE_DIM,
        rng_seed: int | None = None,
        campaign_id: str | None = None,
    ) -> Campaign:
        cats = model.validate_campaign_config(
            name, quota, tuple(categories) if categories else None
        )
        if not isinstance(feature_dim, int) or feature_dim < 1:
            raise errors.InvalidConfig(
                "feature_dim must be a positive integer", field="feature_dim"
            )
        cid = campaign_id or ("c" + secrets.token_hex(4))
        seed = rng_seed if rng_seed is not None else secrets.randbits(63)
        campaign = Campaign(
            id=cid,
            name=name.strip(),
            prompt_key=prompt_key,
            category_set=cats,
            quota=quota,
            default_language=language,
            status="draft",
            feature_dim=feature_dim,
            rng_seed=seed,
        )
        with self._lock:
            try:
                self._conn.execute(
                    "INSERT INTO campaigns VALUES (?,?,?,?,?,?,?,?,?,?,?)",
                    (
                        cid,
                        campaign.name,
                        prompt_key,
                        json.dumps(list(cats)),
                        quota,
                        language,
                        "draft",
                        feature_dim,
                        0,
                        seed,
                        model.utcnow().isoformat(),
                    ),
                )
            except sqlite3.IntegrityError:
                raise errors.InvalidConfig(
                    f"campaign id {cid!r} already exists", field="id"
                )
        return campaign

    def get_campaign(self, campaign_id: str) -> Campaign:
        with self._lock:
            row = self._conn.execute(
                "SELECT id, name, prompt_key, category_set, quota,"
                " default_language, status, feature_dim, rng_seed"
                " FROM campaigns WHERE id = ?",
                (campaign_id,),
            ).fetchone()
        if row is None:
            raise errors.UnknownCampaign(f"no campaign {campaign_id!r}")
        return Campaign(
            id=row[0],
            name=row[1],
            prompt_key=row[2],
            category_set=tuple(json.loads(row[3])),
            quota=row[4],
            default_language=row[5],
            status=row[6],
            feature_dim=row[7],
            rng_seed=row[8],
        )

    def list_campaign_ids(self) -> list[str]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT id FROM campaigns ORDER BY created_at, id"
            ).fetchall()
        return [r[0] for r in rows]

    def set_campaign_status(self, campaign_id: str, status: str) -> Campaign:
        if status not in model.CAMPAIGN_STATUSES:
            raise errors.InvalidConfig(
                f"status must be one of {model.CAMPAIGN_STATUSES}", field="status"
            )
        with self._lock:
            self.get_campaign(campaign_id)
            self._conn.execute(
                "UPDATE campaigns SET status = ? WHERE id = ?", (status, campaign_id)
            )
        return self.get_campaign(campaign_id)

    # -- images ------------------------------------------------------------

    def add_images(
        self,
        campaign_id: str,
        entries: Iterable[tuple[str, str]],
        require_draft: bool = True,
    ) -> IngestResult:
        """Register (source_kind, source) pairs; duplicates are reported,
        not fatal. Streams: entries may be any iterable."""
        with self._lock:
            campaign = self.get_campaign(campaign_id)
            if require_draft:
                campaign.require_draft()
            seq = self._conn.execute(
                "SELECT COALESCE(MAX(seq), 0) FROM images WHERE campaign_id = ?",
                (campaign_id,),
            ).fetchone()[0]
            registered = 0
            duplicates: list[str] = []
            self._conn.execute("BEGIN")
            try:
                for kind, source in entries:
                    try:
                        seq += 1
                        self._conn.execute(
                            "INSERT INTO images (id, campaign_id, seq, source_kind,"
                            " source) VALUES (?,?,?,?,?)",
                            (f"i{seq:06d}", campaign_id, seq, kind, source),
                        )
                        registered += 1
                    except sqlite3.IntegrityError:
                        seq -= 1
                        duplicates.append(source)
                self._conn.execute("COMMIT")
            except BaseException:
                self._conn.execute("ROLLBACK")
                raise
        return IngestResult(registered, tuple(duplicates))

    def _image_from_row(self, row) -> ImageItem:
        return ImageItem(
            id=row[0],
            campaign_id=row[1],
            source_kind=row[2],
            source=row[3],
            subject_label=row[4],
            has_feature=row[5] is not None,
        )

    def get_image(self, campaign_id: str, image_id: str) -> ImageItem:
        with self._lock:
            row = self._conn.execute(
                "SELECT id, campaign_id, source_kind, source, subject, feature"
                " FROM images WHERE campaign_id = ? AND id = ?",
                (campaign_id, image_id),
            ).fetchone()
        if row is None:
            raise errors.UnknownImage(
                f"no image {image_id!r} in campaign {campaign_id!r}"
            )
        return self._image_from_row(row)

    def list_image_ids(self, campaign_id: str) -> list[str]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT id FROM images WHERE campaign_id = ? ORDER BY seq",
                (campaign_id,),
            ).fetchall()
        return [r[0] for r in rows]

    def image_count(self, campaign_id: str) -> int:
        with self._lock:
            return self._conn.execute(
                "SELECT COUNT(*) FROM images WHERE campaign_id = ?", (campaign_id,)
            ).fetchone()[0]

    def set_subject_label(
        self, campaign_id: str, image_id: str, label: str
    ) -> ImageItem:
        """Assign the subject of an image; relabeling is last-write-wins."""
        model.validate_subject_label(label)
        with self._lock:
            self.get_image(campaign_id, image_id)
            self._conn.execute(
                "UPDATE images SET subject = ?, subject_set_at = ?"
                " WHERE campaign_id = ? AND id = ?",
                (label, model.utcnow().isoformat(), campaign_id, image_id),
            )
            return self.get_image(campaign_id, image_id)

    def attach_features(
        self, campaign_id: str, rows: Iterable[tuple[str, np.ndarray]]
    ) -> int:
        """Set feature vectors; the vector dimension is recorded on the
        campaign. The whole attach is one transaction: any bad row aborts."""
        with self._lock:
            campaign = self.get_campaign(campaign_id)
            has_features = self._conn.execute(
                "SELECT has_features FROM campaigns WHERE id = ?", (campaign_id,)
            ).fetchone()[0]
            dim: int | None = campaign.feature_dim if has_features else None
            attached = 0
            self._conn.execute("BEGIN")
            try:
                for line_no, (image_id, vector) in enumerate(rows, start=1):
                    vec = np.asarray(vector, dtype="<f4")
                    if vec.ndim != 1 or vec.size == 0:
                        raise errors.DimensionMismatch(
                            f"row {line_no}: feature vector must be 1-d and non-empty"
                        )
                    if dim is None:
                        dim = int(vec.size)
                    elif vec.size != dim:
                        raise errors.DimensionMismatch(
                            f"row {line_no}: expected dimension {dim}, got {vec.size}"
                        )
                    cur = self._conn.execute(
                        "UPDATE images SET feature = ? WHERE campaign_id = ? AND id = ?",
                        (vec.tobytes(), campaign_id, image_id),
                    )
                    if cur.rowcount == 0:
                        raise errors.UnknownImageId(
                            f"row {line_no}: unknown image id {image_id!r}"
                        )
                    attached += 1
                if attached:
                    self._conn.execute(
                        "UPDATE campaigns SET feature_dim = ?, has_features = 1"
                        " WHERE id = ?",
                        (dim, campaign_id),
                    )
                self._conn.execute("COMMIT")
            except BaseException:
                self._conn.execute("ROLLBACK")
                raise
        return attached

    # -- annotators ----------------------------------------------------------

    def add_annotator(
        self,
        campaign_id: str,
        username: str,
        credential_hash: str,
        ui_language: str,
        annotator_id: str | None = None,
    ) -> Annotator:
        with self._lock:
            self.get_campaign(campaign_id)
            if annotator_id is None:
                n = self._conn.execute(
                    "SELECT COUNT(*) FROM annotators WHERE campaign_id = ?",
                    (campaign_id,),
                ).fetchone()[0]
                annotator_id = f"a{n + 1:04d}"
            self._conn.execute(
                "INSERT INTO annotators VALUES (?,?,?,?,?)",
                (annotator_id, campaign_id, username, credential_hash, ui_language),
            )
        return Annotator(
            id=annotator_id,
            campaign_id=campaign_id,
            username=username,
            ui_language=ui_language,
        )

    def get_annotator(self, campaign_id: str, annotator_id: str) -> Annotator:
        with self._lock:
            row = self._conn.execute(
                "SELECT id, campaign_id, username, ui_language FROM annotators"
                " WHERE campaign_id = ? AND id = ?",
                (campaign_id, annotator_id),
            ).fetchone()
        if row is None:
            raise errors.UnknownAnnotator(
                f"no annotator {annotator_id!r} in campaign {campaign_id!r}"
            )
        return Annotator(*row)

    def list_annotators(self, campaign_id: str) -> list[Annotator]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT id, campaign_id, username, ui_language FROM annotators"
                " WHERE campaign_id = ? ORDER BY id",
                (campaign_id,),
            ).fetchall()
        return [Annotator(*r) for r in rows]

    def lookup_credentials(self, username: str) -> tuple[Annotator, str] | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT id, campaign_id, username, ui_language, credential_hash"
                " FROM annotators WHERE username = ?",
                (username,),
            ).fetchone()
        if row is None:
            return None
        return Annotator(*row[:4]), row[4]

    # -- judgments -----------------------------------------------------------

    def insert_judgment(
        self,
        campaign_id: str,
        annotator_id: str,
        image_id: str,
        verdict: str,
        comment: Comment | None,
        clear_offer: bool = True,
    ) -> Judgment:
        """Insert one judgment, atomically clearing the annotator's current
        offer. The UNIQUE (annotator, image) constraint makes exactly one of
        two racing duplicates win."""
        now = model.utcnow()
        with self._lock:
            self._conn.execute("BEGIN")
            try:
                n = self._conn.execute(
                    "SELECT COUNT(*) FROM judgments WHERE campaign_id = ?",
                    (campaign_id,),
                ).fetchone()[0]
                jid = f"j{n + 1:08d}"
                self._conn.execute(
                    "INSERT INTO judgments VALUES (?,?,?,?,?,?,?,?)",
                    (
                        jid,
                        campaign_id,
                        annotator_id,
                        image_id,
                        verdict,
                        comment.text if comment else None,
                        comment.trigger_category if comment else None,
                        now.isoformat(),
                    ),
                )
                if clear_offer:
                    self._conn.execute(
                        "DELETE FROM offers WHERE campaign_id = ? AND annotator_id = ?",
                        (campaign_id, annotator_id),
                    )
                self._conn.execute("COMMIT")
            except sqlite3.IntegrityError:
                self._conn.execute("ROLLBACK")
                raise errors.DuplicateJudgment(
                    f"annotator {annotator_id} already judged image {image_id}"
                )
            except BaseException:
                self._conn.execute("ROLLBACK")
                raise
        return Judgment(
            id=jid,
            campaign_id=campaign_id,
            annotator_id=annotator_id,
            image_id=image_id,
            verdict=verdict,
            timestamp=now,
            comment=comment,
        )

    def judging_annotator_ids(self, campaign_id: str) -> list[str]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT DISTINCT annotator_id FROM judgments WHERE campaign_id = ?",
                (campaign_id,),
            ).fetchall()
        return [r[0] for r in rows]

    def judgment_exists(
        self, campaign_id: str, annotator_id: str, image_id: str
    ) -> bool:
        with self._lock:
            row = self._conn.execute(
                "SELECT 1 FROM judgments WHERE campaign_id = ? AND annotator_id = ?"
                " AND image_id = ?",
                (campaign_id, annotator_id, image_id),
            ).fetchone()
        return row is not None

    def judgment_count(self, campaign_id: str) -> int:
        with self._lock:
            return self._conn.execute(
                "SELECT COUNT(*) FROM judgments WHERE campaign_id = ?",
                (campaign_id,),
            ).fetchone()[0]

    def counts_by_image(self, campaign_id: str) -> dict[str, int]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT image_id, COUNT(*) FROM judgments WHERE campaign_id = ?"
                " GROUP BY image_id",
                (campaign_id,),
            ).fetchall()
        return dict(rows)

    def seen_by_annotator(self, campaign_id: str) -> dict[str, set[str]]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT annotator_id, image_id FROM judgments WHERE campaign_id = ?",
                (campaign_id,),
            ).fetchall()
        out: dict[str, set[str]] = {}
        for aid, iid in rows:
            out.setdefault(aid, set()).add(iid)
        return out

    def _judgment_from_row(self, row) -> Judgment:
        comment = None
        if row[5] is not None:
            comment = Comment(text=row[5], trigger_category=row[6])
        return Judgment(
            id=row[0],
            campaign_id=row[1],
            annotator_id=row[2],
            image_id=row[3],
            verdict=row[4],
            timestamp=datetime.fromisoformat(row[7]),
            comment=comment,
        )

    def judgments(self, campaign_id: str) -> Iterator[Judgment]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT id, campaign_id, annotator_id, image_id, verdict,"
                " comment_text, comment_trigger, created_at FROM judgments"
                " WHERE campaign_id = ? ORDER BY id",
                (campaign_id,),
            ).fetchall()
        for row in rows:
            yield self._judgment_from_row(row)

    # -- offers ---------------------------------------------------------------

    def get_offer(
        self, campaign_id: str, annotator_id: str
    ) -> tuple[str, bool] | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT image_id, fallback FROM offers WHERE campaign_id = ?"
                " AND annotator_id = ?",
                (campaign_id, annotator_id),
            ).fetchone()
        return (row[0], bool(row[1])) if row else None

    def set_offer(
        self, campaign_id: str, annotator_id: str, image_id: str, fallback: bool
    ) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT OR REPLACE INTO offers VALUES (?,?,?,?)",
                (campaign_id, annotator_id, image_id, int(fallback)),
            )

    def clear_offer(self, campaign_id: str, annotator_id: str) -> None:
        with self._lock:
            self._conn.execute(
                "DELETE FROM offers WHERE campaign_id = ? AND annotator_id = ?",
                (campaign_id, annotator_id),
            )

    def iter_judged_images(
        self, campaign_id: str
    ) -> Iterator[tuple[str, np.ndarray | None, str | None, list[Judgment]]]:
        """Yield (image_id, feature, subject, judgments) for every judged
        image in image-id order, loading one image's rows at a time."""
        for image_id in sorted(self.list_image_ids(campaign_id)):
            with self._lock:
                # ORDER BY id here would push sqlite onto the primary-key
                # index and a full prefix scan per image; sort the handful
                # of rows in Python instead
                rows = self._conn.execute(
                    "SELECT id, campaign_id, annotator_id, image_id, verdict,"
                    " comment_text, comment_trigger, created_at FROM judgments"
                    " WHERE campaign_id = ? AND image_id = ?",
                    (campaign_id, image_id),
                ).fetchall()
                if not rows:
                    continue
                rows.sort(key=lambda r: r[0])
                img = self._conn.execute(
                    "SELECT subject, feature FROM images WHERE campaign_id = ?"
                    " AND id = ?",
                    (campaign_id, image_id),
                ).fetchone()
            judgments = [self._judgment_from_row(r) for r in rows]
            feature = (
                np.frombuffer(img[1], dtype="<f4") if img[1] is not None else None
            )
            yield image_id, feature, img[0], judgments

    # -- snapshots --------------------------------------------------------------

    def snapshot(self, campaign_id: str) -> CampaignSnapshot:
        with self._lock:
            campaign = self.get_campaign(campaign_id)
            image_rows = self._conn.execute(
                "SELECT id, campaign_id, source_kind, source, subject, feature"
                " FROM images WHERE campaign_id = ? ORDER BY seq",
                (campaign_id,),
            ).fetchall()
            judgment_list = list(self.judgments(campaign_id))
        images: dict[str, ImageItem] = {}
        features: dict[str, np.ndarray] = {}
        for row in image_rows:
            images[row[0]] = self._image_from_row(row)
            if row[5] is not None:
                vec = np.frombuffer(row[5], dtype="<f4")
                features[row[0]] = vec
        return CampaignSnapshot(
            campaign=campaign,
            images=images,
            features=features,
            judgments=tuple(judgment_list),
        )

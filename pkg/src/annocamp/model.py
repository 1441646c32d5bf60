"""Domain model: campaigns, images, annotators, judgments, comments.

Types are plain immutable dataclasses. All validation lives here so that the
assignment engine, the HTTP service, and the CLI share one set of rules.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from datetime import datetime, timezone

from . import errors

DEFAULT_CATEGORIES = (
    "Body",
    "Clothing",
    "Pose",
    "Facial expression",
    "Location",
    "Activity",
    "Other",
)

SUBJECT_LABELS = ("Females", "Males", "Mixed", "Nobody")

CAMPAIGN_STATUSES = ("draft", "active", "closed")

VERDICTS = ("yes", "no")

MAX_COMMENT_LENGTH = 2000

DEFAULT_FEATURE_DIM = 512


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


@dataclass(frozen=True)
class Campaign:
    """One annotation exercise: image pool + roster + per-image quota."""

    id: str
    name: str
    prompt_key: str
    category_set: tuple[str, ...]
    quota: int
    default_language: str
    status: str
    feature_dim: int = DEFAULT_FEATURE_DIM
    rng_seed: int = 0

    def require_active(self) -> None:
        if self.status != "active":
            raise errors.CampaignClosed(
                f"campaign {self.id} is {self.status}, not active"
            )

    def require_draft(self) -> None:
        if self.status != "draft":
            raise errors.CampaignActive(
                f"campaign {self.id} is {self.status}, not draft"
            )


@dataclass(frozen=True)
class ImageItem:
    """An annotatable image, referenced by local path or external URL."""

    id: str
    campaign_id: str
    source_kind: str  # "path" | "url"
    source: str
    subject_label: str | None = None
    has_feature: bool = False


@dataclass(frozen=True)
class Annotator:
    id: str
    campaign_id: str
    username: str
    ui_language: str


@dataclass(frozen=True)
class Comment:
    text: str
    trigger_category: str


@dataclass(frozen=True)
class Judgment:
    id: str
    campaign_id: str
    annotator_id: str
    image_id: str
    verdict: str
    timestamp: datetime
    comment: Comment | None = None


@dataclass(frozen=True)
class ValidatedSubmission:
    """A judgment submission that passed all domain rules.

    Producing one of these is a precondition for recording a judgment; the
    engine still re-checks the duplicate constraint atomically at write time.
    """

    campaign_id: str
    annotator_id: str
    image_id: str
    verdict: str
    comment: Comment | None


def validate_campaign_config(
    name: str,
    quota: int,
    categories: tuple[str, ...] | list[str] | None = None,
) -> tuple[str, ...]:
    """Check campaign parameters, returning the effective category set."""
    if not isinstance(name, str) or not name.strip():
        raise errors.InvalidConfig("name must be a non-empty string", field="name")
    if not isinstance(quota, int) or isinstance(quota, bool) or quota < 1:
        raise errors.InvalidConfig("quota must be a positive integer", field="quota")
    cats = tuple(categories) if categories else DEFAULT_CATEGORIES
    if any(not isinstance(c, str) or not c.strip() for c in cats):
        raise errors.InvalidConfig(
            "category labels must be non-empty strings", field="categories"
        )
    if len(set(cats)) != len(cats):
        raise errors.InvalidConfig(
            "category labels must be unique", field="categories"
        )
    return cats


def validate_comment(campaign: Campaign, text: str, trigger_category: str) -> Comment:
    if not isinstance(text, str):
        raise errors.EmptyCommentText("comment text must be a string", field="text")
    trimmed = text.strip()
    if not trimmed:
        raise errors.EmptyCommentText(
            "comment text is empty after trimming", field="text"
        )
    if len(trimmed) > MAX_COMMENT_LENGTH:
        raise errors.EmptyCommentText(
            f"comment text exceeds {MAX_COMMENT_LENGTH} characters", field="text"
        )
    if trigger_category not in campaign.category_set:
        raise errors.UnknownCategory(
            f"{trigger_category!r} is not one of the campaign categories",
            field="trigger",
        )
    return Comment(text=trimmed, trigger_category=trigger_category)


def validate_submission(
    campaign: Campaign,
    annotator: Annotator,
    image: ImageItem,
    verdict: str,
    comment: Comment | dict | None = None,
    *,
    already_judged: bool = False,
) -> ValidatedSubmission:
    """Validate one judgment submission against all domain rules.

    ``comment`` may be a :class:`Comment` or a ``{"text", "trigger"}`` dict as
    received on the wire. ``already_judged`` is the caller's view of whether
    the (annotator, image) pair is taken; the persistence layer re-checks it
    under its write lock, so a stale False here cannot corrupt state.
    """
    campaign.require_active()
    if annotator.campaign_id != campaign.id:
        raise errors.UnknownAnnotator(
            f"annotator {annotator.id} does not belong to campaign {campaign.id}"
        )
    if image.campaign_id != campaign.id:
        raise errors.UnknownImage(
            f"image {image.id} does not belong to campaign {campaign.id}"
        )
    if verdict not in VERDICTS:
        raise errors.InvalidVerdict(
            f"verdict must be 'yes' or 'no', got {verdict!r}", field="verdict"
        )
    if already_judged:
        raise errors.DuplicateJudgment(
            f"annotator {annotator.id} already judged image {image.id}"
        )

    if verdict == "no":
        if comment is not None:
            raise errors.UnexpectedComment(
                "a 'no' verdict must not carry a comment", field="comment"
            )
        return ValidatedSubmission(campaign.id, annotator.id, image.id, "no", None)

    if comment is None:
        raise errors.MissingComment(
            "a 'yes' verdict requires a comment", field="comment"
        )
    if isinstance(comment, dict):
        comment = validate_comment(
            campaign, comment.get("text", ""), comment.get("trigger", "")
        )
    else:
        comment = validate_comment(campaign, comment.text, comment.trigger_category)
    return ValidatedSubmission(campaign.id, annotator.id, image.id, "yes", comment)


def validate_subject_label(label: str) -> str:
    if label not in SUBJECT_LABELS:
        raise errors.UnknownSubject(
            f"{label!r} is not a subject label; valid values: "
            + ", ".join(SUBJECT_LABELS),
            field="subject",
        )
    return label

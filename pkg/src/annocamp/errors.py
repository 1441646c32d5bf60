"""Error types shared by all modules.

Every error carries a stable ``code`` string that is used verbatim in CLI
messages and in the JSON error payloads of the HTTP service, and an optional
``field`` naming the offending input field.
"""

from __future__ import annotations


class AnnotationError(Exception):
    """Base class for all domain errors."""

    code = "AnnotationError"
    http_status = 400

    def __init__(self, message: str = "", field: str | None = None):
        super().__init__(message or self.code)
        self.message = message or self.code
        self.field = field

    def payload(self) -> dict:
        body = {"code": self.code, "message": self.message}
        if self.field:
            body["field"] = self.field
        return body


# -- campaign / roster lookups -------------------------------------------

class UnknownCampaign(AnnotationError):
    code = "UnknownCampaign"
    http_status = 404


class UnknownAnnotator(AnnotationError):
    code = "UnknownAnnotator"
    http_status = 404


class UnknownImage(AnnotationError):
    code = "UnknownImage"
    http_status = 404


class CampaignClosed(AnnotationError):
    """Raised when an operation requires an active campaign."""

    code = "CampaignClosed"
    http_status = 409


class CampaignActive(AnnotationError):
    """Raised when an operation requires a draft campaign."""

    code = "CampaignActive"
    http_status = 409


# -- judgment validation ---------------------------------------------------

class DuplicateJudgment(AnnotationError):
    code = "DuplicateJudgment"
    http_status = 409


class MissingComment(AnnotationError):
    code = "MissingComment"


class UnexpectedComment(AnnotationError):
    code = "UnexpectedComment"


class UnknownCategory(AnnotationError):
    code = "UnknownCategory"


class EmptyCommentText(AnnotationError):
    code = "EmptyCommentText"


class UnknownSubject(AnnotationError):
    code = "UnknownSubject"


class InvalidVerdict(AnnotationError):
    code = "InvalidVerdict"


# -- analytics -------------------------------------------------------------

class NoPairableUnits(AnnotationError):
    code = "NoPairableUnits"
    http_status = 409


class DegenerateMarginals(AnnotationError):
    """All values fall in one category, expected disagreement is zero."""

    code = "DegenerateMarginals"
    http_status = 409


class ZeroMarginal(AnnotationError):
    """A contingency table row or column sums to zero."""

    code = "ZeroMarginal"
    http_status = 409


class SampleContainsCommentedImage(AnnotationError):
    code = "SampleContainsCommentedImage"


class InvalidSample(AnnotationError):
    """A no-sample entry is unknown, unjudged, or unlabeled."""

    code = "InvalidSample"


class UnlabeledImage(AnnotationError):
    """An image in scope is missing its required subject label."""

    code = "UnlabeledImage"
    http_status = 409


class UnknownReport(AnnotationError):
    code = "UnknownReport"
    http_status = 404


# -- dataset io ------------------------------------------------------------

class EmptyManifest(AnnotationError):
    code = "EmptyManifest"


class DimensionMismatch(AnnotationError):
    code = "DimensionMismatch"


class UnknownImageId(UnknownImage):
    """An ingest row references an image that was never registered."""

    code = "UnknownImageId"


class NothingToExport(AnnotationError):
    code = "NothingToExport"
    http_status = 409


class SchemaViolation(AnnotationError):
    """A release file record breaks the export schema.

    ``line`` is the 1-based position of the offending record.
    """

    code = "SchemaViolation"

    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        super().__init__(message, field=field)
        self.line = line

    def payload(self) -> dict:
        body = super().payload()
        if self.line is not None:
            body["line"] = self.line
        return body


# -- service ---------------------------------------------------------------

class InvalidCredentials(AnnotationError):
    code = "InvalidCredentials"
    http_status = 401


class Unauthorized(AnnotationError):
    code = "Unauthorized"
    http_status = 401


class StaleImage(AnnotationError):
    """The submitted image is not the one currently offered."""

    code = "StaleImage"
    http_status = 409


class InvalidConfig(AnnotationError):
    code = "InvalidConfig"


class InvalidCount(AnnotationError):
    code = "InvalidCount"

"""annocamp: self-hostable image annotation campaign platform.

Quota-aware assignment of images to pseudonymous annotators, a two-step
verdict + categorized-comment workflow, campaign analytics (agreement and
association statistics), and an anonymized line-delimited release format.
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    DEFAULT_CATEGORIES,
    SUBJECT_LABELS,
    Annotator,
    Campaign,
    Comment,
    ImageItem,
    Judgment,
    ValidatedSubmission,
)
from .store import CampaignSnapshot, Store  # noqa: F401
from .assignment import AssignmentEngine  # noqa: F401

"""Quota-aware image assignment.

Policy: among images the annotator has not judged, serve one with the lowest
current judgment count, restricted to under-quota images while any such
unseen image exists; ties break uniformly at random. When every unseen image
already reached quota, assignment falls back to the least-annotated unseen
image rather than blocking the annotator (the quota is a soft target). The
offered image is stable until the annotator records a judgment.

All state transitions run under the store lock, so the engine is a
per-campaign serialization point; the RNG is seeded from the campaign, which
makes full assignment sequences reproducible bit-for-bit.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import errors, model
from .model import Comment, ImageItem, Judgment, ValidatedSubmission
from .store import Store

_REJECTION_TRIES = 64


class _IndexedSet:
    """Set with O(1) add/discard and O(1) uniform sampling.

    Iteration order is the internal list order, which is deterministic for a
    fixed operation sequence (swap-remove layout).
    """

    __slots__ = ("items", "pos")

    def __init__(self) -> None:
        self.items: list[str] = []
        self.pos: dict[str, int] = {}

    def add(self, item: str) -> None:
        if item not in self.pos:
            self.pos[item] = len(self.items)
            self.items.append(item)

    def discard(self, item: str) -> None:
        i = self.pos.pop(item, None)
        if i is None:
            return
        last = self.items.pop()
        if last != item:
            self.items[i] = last
            self.pos[last] = i

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, item: str) -> bool:
        return item in self.pos

    def sample_excluding(
        self, excluded: set[str], rng: random.Random
    ) -> str | None:
        """Uniform draw from items not in ``excluded``, or None."""
        k = len(self.items)
        if k == 0:
            return None
        if k > len(excluded):
            # excluded cannot cover the whole bucket: rejection terminates
            for _ in range(_REJECTION_TRIES):
                item = self.items[rng.randrange(k)]
                if item not in excluded:
                    return item
        candidates = [i for i in self.items if i not in excluded]
        if not candidates:
            return None
        return candidates[rng.randrange(len(candidates))]


@dataclass
class _CampaignState:
    """In-memory mirror of one campaign's assignment bookkeeping."""

    rng: random.Random
    n_images: int
    counts: dict[str, int]
    buckets: dict[int, _IndexedSet]
    seen: dict[str, set[str]]
    offers: dict[str, tuple[str, bool]]
    underquota_offers: int = 0
    fallback_offers: int = 0
    # (annotator, image, count before recording, offer was fallback or None)
    overshoots: list[tuple[str, str, int, bool | None]] = field(default_factory=list)


@dataclass(frozen=True)
class AssignmentView:
    """Read-only inspection of assignment state, for audits and tests."""

    counts: dict[str, int]
    seen: dict[str, frozenset[str]]
    rng_seed: int
    underquota_offers: int
    fallback_offers: int
    overshoots: tuple[tuple[str, str, int, bool | None], ...]


class AssignmentEngine:
    """Drives the judgment workflow for campaigns in one :class:`Store`.

    Campaigns served by an engine must receive judgments only through it;
    direct store writes would desynchronize the in-memory mirror (call
    :meth:`invalidate` after any such write).
    """

    def __init__(self, store: Store):
        self.store = store
        self._states: dict[str, _CampaignState] = {}

    def invalidate(self, campaign_id: str | None = None) -> None:
        if campaign_id is None:
            self._states.clear()
        else:
            self._states.pop(campaign_id, None)

    def _state(self, campaign_id: str) -> _CampaignState:
        state = self._states.get(campaign_id)
        if state is not None:
            return state
        campaign = self.store.get_campaign(campaign_id)
        counts = self.store.counts_by_image(campaign_id)
        buckets: dict[int, _IndexedSet] = {}
        n_images = 0
        for iid in self.store.list_image_ids(campaign_id):
            n_images += 1
            c = counts.setdefault(iid, 0)
            buckets.setdefault(c, _IndexedSet()).add(iid)
        seen = self.store.seen_by_annotator(campaign_id)
        offers: dict[str, tuple[str, bool]] = {}
        for annotator in self.store.list_annotators(campaign_id):
            offer = self.store.get_offer(campaign_id, annotator.id)
            if offer is not None:
                offers[annotator.id] = offer
        state = _CampaignState(
            rng=random.Random(campaign.rng_seed),
            n_images=n_images,
            counts=counts,
            buckets=buckets,
            seen=seen,
            offers=offers,
        )
        self._states[campaign_id] = state
        return state

    def view(self, campaign_id: str) -> AssignmentView:
        with self.store.lock:
            state = self._state(campaign_id)
            campaign = self.store.get_campaign(campaign_id)
            return AssignmentView(
                counts=dict(state.counts),
                seen={a: frozenset(s) for a, s in state.seen.items()},
                rng_seed=campaign.rng_seed,
                underquota_offers=state.underquota_offers,
                fallback_offers=state.fallback_offers,
                overshoots=tuple(state.overshoots),
            )

    # -- the assignment policy ------------------------------------------------

    def _pick(
        self, state: _CampaignState, seen: set[str], quota: int
    ) -> tuple[str, bool] | None:
        """Lowest-count bucket holding an unseen image wins; the offer is a
        fallback when that bucket is already at or over quota."""
        for count in sorted(state.buckets):
            bucket = state.buckets[count]
            if len(bucket) == 0:
                continue
            image_id = bucket.sample_excluding(seen, state.rng)
            if image_id is not None:
                return image_id, count >= quota
        return None

    def next_image(self, campaign_id: str, annotator_id: str) -> ImageItem | None:
        """Return the annotator's current image, or None when exhausted."""
        with self.store.lock:
            campaign = self.store.get_campaign(campaign_id)
            campaign.require_active()
            self.store.get_annotator(campaign_id, annotator_id)
            state = self._state(campaign_id)
            seen = state.seen.setdefault(annotator_id, set())

            offer = state.offers.get(annotator_id)
            if offer is not None and offer[0] not in seen:
                return self.store.get_image(campaign_id, offer[0])

            if len(seen) >= state.n_images:
                return None
            picked = self._pick(state, seen, campaign.quota)
            if picked is None:
                return None
            image_id, fallback = picked
            state.offers[annotator_id] = (image_id, fallback)
            self.store.set_offer(campaign_id, annotator_id, image_id, fallback)
            if fallback:
                state.fallback_offers += 1
            else:
                state.underquota_offers += 1
            return self.store.get_image(campaign_id, image_id)

    def record_judgment(self, submission: ValidatedSubmission) -> Judgment:
        """Persist a validated submission and update assignment state
        atomically. Raises DuplicateJudgment when the pair is taken."""
        cid = submission.campaign_id
        aid = submission.annotator_id
        iid = submission.image_id
        with self.store.lock:
            state = self._state(cid)
            seen = state.seen.setdefault(aid, set())
            if iid in seen:
                raise errors.DuplicateJudgment(
                    f"annotator {aid} already judged image {iid}"
                )
            judgment = self.store.insert_judgment(
                cid, aid, iid, submission.verdict, submission.comment
            )
            count = state.counts.get(iid, 0)
            state.buckets.setdefault(count, _IndexedSet()).discard(iid)
            state.counts[iid] = count + 1
            state.buckets.setdefault(count + 1, _IndexedSet()).add(iid)
            seen.add(iid)
            campaign = self.store.get_campaign(cid)
            if count + 1 > campaign.quota:
                offer = state.offers.get(aid)
                offered_fallback = (
                    offer[1] if offer is not None and offer[0] == iid else None
                )
                state.overshoots.append((aid, iid, count, offered_fallback))
            state.offers.pop(aid, None)
            return judgment

    def submit(
        self,
        campaign_id: str,
        annotator_id: str,
        image_id: str,
        verdict: str,
        comment: Comment | dict | None = None,
        *,
        enforce_offer: bool = False,
    ) -> Judgment:
        """Validate and record one judgment in a single serialized step.

        ``enforce_offer`` rejects submissions for any image other than the
        one currently offered (the HTTP service sets it)."""
        with self.store.lock:
            campaign = self.store.get_campaign(campaign_id)
            annotator = self.store.get_annotator(campaign_id, annotator_id)
            image = self.store.get_image(campaign_id, image_id)
            state = self._state(campaign_id)
            if enforce_offer:
                offer = state.offers.get(annotator_id)
                if offer is None or offer[0] != image_id:
                    raise errors.StaleImage(
                        f"image {image_id} is not the currently offered one"
                    )
            submission = model.validate_submission(
                campaign,
                annotator,
                image,
                verdict,
                comment,
                already_judged=image_id in state.seen.get(annotator_id, set()),
            )
            return self.record_judgment(submission)

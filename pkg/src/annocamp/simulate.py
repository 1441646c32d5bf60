"""Deterministic load simulator: drives synthetic annotators through the
full judgment workflow and audits the invariants the engine must uphold.

Sequential mode (parallelism=1) advances annotators round-robin, one
serialized step at a time, and is fully reproducible for a fixed seed.
Parallel mode runs annotators on worker threads to exercise the engine's
write serialization; outcomes stay consistent but interleaving makes the
exact assignment sequence scheduling-dependent.
"""

from __future__ import annotations

import random
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .analytics import DepthRow, judgment_depth_table, trigger_distribution
from .assignment import AssignmentEngine
from .store import Store


@dataclass
class SimulationResult:
    campaign_id: str
    seed: int
    yes_rate: float
    annotators: int
    steps: int
    yes_judgments: int
    judged_images: int
    commented_images: int
    depth_rows: list[DepthRow]
    triggers: dict[str, int]
    invariant_failures: list[str] = field(default_factory=list)

    @property
    def commented_fraction(self) -> float:
        return self.commented_images / self.judged_images if self.judged_images else 0.0

    def summary_lines(self) -> list[str]:
        lines = [
            f"campaign: {self.campaign_id}",
            f"seed: {self.seed}  yes-rate: {self.yes_rate}  annotators: {self.annotators}",
            f"judgments: {self.steps}  yes: {self.yes_judgments}",
            f"judged images: {self.judged_images}  with comment: "
            f"{self.commented_images} ({100 * self.commented_fraction:.2f}%)",
            "depth table (min_judgments, images_with_comment, total_comments,"
            " images_without_comment):",
        ]
        for row in self.depth_rows:
            lines.append(
                f"  >= {row.min_judgments}: {row.images_with_comment}"
                f" / {row.total_comments} / {row.images_without_comment}"
            )
        lines.append("triggers: " + ", ".join(
            f"{k}={v}" for k, v in self.triggers.items()
        ))
        if self.invariant_failures:
            lines.append("INVARIANT FAILURES:")
            lines.extend(f"  - {msg}" for msg in self.invariant_failures)
        else:
            lines.append("invariants: all checks passed")
        return lines


class _Budget:
    def __init__(self, limit: int):
        self._limit = limit
        self._taken = 0
        self._lock = threading.Lock()

    def take(self) -> bool:
        with self._lock:
            if self._taken >= self._limit:
                return False
            self._taken += 1
            return True

    def give_back(self) -> None:
        with self._lock:
            self._taken -= 1


def _annotator_step(engine, campaign, annotator_id, rng, counter) -> bool:
    """One next-image + judgment step; False when the annotator is done."""
    image = engine.next_image(campaign.id, annotator_id)
    if image is None:
        return False
    if rng.random() < counter["yes_rate"]:
        counter["n"] += 1
        comment = {
            "text": f"sim-{counter['n']}",
            "trigger": rng.choice(campaign.category_set),
        }
        engine.submit(campaign.id, annotator_id, image.id, "yes", comment)
    else:
        engine.submit(campaign.id, annotator_id, image.id, "no")
    return True


def run_simulation(
    store: Store,
    campaign_id: str,
    seed: int,
    yes_rate: float,
    annotator_count: int,
    step_budget: int | None = None,
    parallelism: int = 1,
    engine: AssignmentEngine | None = None,
) -> SimulationResult:
    if not 0.0 <= yes_rate <= 1.0:
        raise ValueError("yes_rate must be within [0, 1]")
    campaign = store.get_campaign(campaign_id)
    campaign.require_active()
    roster = store.list_annotators(campaign_id)
    if annotator_count < 1 or annotator_count > len(roster):
        raise ValueError(
            f"annotator_count must be within 1..{len(roster)} (campaign roster)"
        )
    engine = engine or AssignmentEngine(store)
    annotators = [a.id for a in roster[:annotator_count]]
    budget = _Budget(
        step_budget if step_budget is not None
        else store.image_count(campaign_id) * campaign.quota
    )
    # per-annotator verdict streams are independent of scheduling
    rngs = {
        aid: random.Random(f"{seed}:{aid}") for aid in annotators
    }
    counters = {
        aid: {"n": 0, "yes_rate": yes_rate} for aid in annotators
    }

    if parallelism <= 1:
        done = {aid: False for aid in annotators}
        while not all(done.values()):
            progressed = False
            for aid in annotators:
                if done[aid]:
                    continue
                if not budget.take():
                    done[aid] = True
                    continue
                if _annotator_step(engine, campaign, aid, rngs[aid], counters[aid]):
                    progressed = True
                else:
                    budget.give_back()
                    done[aid] = True
            if not progressed:
                break
    else:
        def loop(aid: str) -> None:
            while budget.take():
                if not _annotator_step(
                    engine, campaign, aid, rngs[aid], counters[aid]
                ):
                    budget.give_back()
                    return

        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            list(pool.map(loop, annotators))

    return audit(store, engine, campaign_id, seed, yes_rate, annotator_count,
                 sequential=parallelism <= 1)


def audit(
    store: Store,
    engine: AssignmentEngine,
    campaign_id: str,
    seed: int,
    yes_rate: float,
    annotator_count: int,
    sequential: bool,
) -> SimulationResult:
    """Re-derive every invariant from the persisted judgments."""
    campaign = store.get_campaign(campaign_id)
    snapshot = store.snapshot(campaign_id)
    failures: list[str] = []

    pairs = set()
    yes_count = 0
    for j in snapshot.judgments:
        key = (j.annotator_id, j.image_id)
        if key in pairs:
            failures.append(f"duplicate judgment pair {key}")
        pairs.add(key)
        if (j.verdict == "yes") != (j.comment is not None):
            failures.append(f"judgment {j.id}: comment/verdict mismatch")
        if j.verdict == "yes":
            yes_count += 1

    counts = snapshot.judgment_counts()
    view = engine.view(campaign_id)
    for image_id, count in counts.items():
        if view.counts.get(image_id) != count:
            failures.append(
                f"engine count for {image_id} is {view.counts.get(image_id)},"
                f" store has {count}"
            )

    for aid, iid, count_before, offered_fallback in view.overshoots:
        if offered_fallback is not True:
            failures.append(
                f"quota overshoot on {iid} by {aid} outside the fallback rule"
            )

    if sequential:
        under = [c for c in view.counts.values() if c < campaign.quota]
        if under and max(under) - min(under) > 1:
            failures.append(
                f"balance violated among under-quota images:"
                f" min={min(under)} max={max(under)}"
            )

    comments = snapshot.comments_by_image()
    return SimulationResult(
        campaign_id=campaign_id,
        seed=seed,
        yes_rate=yes_rate,
        annotators=annotator_count,
        steps=len(snapshot.judgments),
        yes_judgments=yes_count,
        judged_images=len(counts),
        commented_images=len(comments),
        depth_rows=judgment_depth_table(snapshot),
        triggers=trigger_distribution(snapshot),
        invariant_failures=failures,
    )

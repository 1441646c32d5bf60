import pytest

from annocamp.model import Comment
from annocamp.store import Store

_acceptance_results = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call":
        _acceptance_results.append((name, report.outcome))
    elif report.when == "setup" and report.outcome == "skipped":
        _acceptance_results.append((name, "skipped"))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    labels = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}
    for name, outcome in _acceptance_results:
        terminalreporter.write_line(
            f"{labels.get(outcome, outcome.upper())}: {name}"
        )


@pytest.fixture
def store():
    s = Store(":memory:")
    yield s
    s.close()


def build_campaign(
    store,
    n_images=5,
    n_annotators=3,
    quota=2,
    seed=7,
    campaign_id="camp",
    categories=None,
    activate=True,
):
    """Campaign with n sequentially-sourced images and n password-less
    annotators (credential hash is a placeholder; engine tests never log in).
    """
    campaign = store.create_campaign(
        "test campaign",
        quota,
        categories=categories,
        rng_seed=seed,
        campaign_id=campaign_id,
    )
    store.add_images(
        campaign_id,
        (("url", f"http://images.example/{campaign_id}/{i}") for i in range(n_images)),
    )
    annotators = [
        store.add_annotator(campaign_id, f"{campaign_id}-user{i:03d}", "x", "en")
        for i in range(n_annotators)
    ]
    if activate:
        store.set_campaign_status(campaign_id, "active")
    return store.get_campaign(campaign_id), annotators


def seed_judgments(store, campaign_id, rows):
    """Insert judgments directly (bypassing the engine) for analytics
    fixtures. rows: (annotator_id, image_id, verdict, trigger_or_None)."""
    for annotator_id, image_id, verdict, trigger in rows:
        comment = None
        if trigger is not None:
            comment = Comment(text=f"note on {image_id}", trigger_category=trigger)
        store.insert_judgment(campaign_id, annotator_id, image_id, verdict, comment)

import json

import pytest
from click.testing import CliRunner

from annocamp.cli import main, parse_config
from annocamp import errors
from annocamp.store import Store


@pytest.fixture
def runner():
    return CliRunner()


def write_setup_files(tmp_path, n_images=8, n_annotators=3, quota=2, seed=11,
                      campaign_id="classroom", extra=""):
    manifest = tmp_path / "images.txt"
    manifest.write_text(
        "\n".join(f"http://pool.example/{i}.jpg" for i in range(n_images)) + "\n"
    )
    config = tmp_path / "campaign.conf"
    config.write_text(
        f"id = {campaign_id}\n"
        f"name = Classroom study\n"
        f"quota = {quota}\n"
        f"annotators = {n_annotators}\n"
        f"images = images.txt\n"
        f"seed = {seed}\n"
        f"credentials_out = {tmp_path / 'creds.txt'}\n"
        + extra
    )
    return config


def test_parse_config_rejects_unknown_key(tmp_path):
    bad = tmp_path / "c.conf"
    bad.write_text("name = x\nquota = 1\ncolor = blue\n")
    with pytest.raises(errors.InvalidConfig) as exc:
        parse_config(bad)
    assert exc.value.field == "color"


def test_parse_config_requires_quota(tmp_path):
    bad = tmp_path / "c.conf"
    bad.write_text("name = x\n")
    with pytest.raises(errors.InvalidConfig) as exc:
        parse_config(bad)
    assert exc.value.field == "quota"


def test_setup_creates_campaign_and_credentials(runner, tmp_path):
    config = write_setup_files(tmp_path)
    db = tmp_path / "s.db"
    result = runner.invoke(main, ["--store", str(db), "setup", str(config)])
    assert result.exit_code == 0, result.output
    assert result.output.strip().splitlines()[-1] == "classroom"
    creds = (tmp_path / "creds.txt").read_text().splitlines()
    assert len(creds) == 3
    username, password = creds[0].split()
    assert username.startswith("u") and len(password) == 12
    store = Store(str(db))
    assert store.get_campaign("classroom").status == "active"
    assert store.image_count("classroom") == 8
    store.close()


def test_setup_malformed_config_exits_2(runner, tmp_path):
    config = tmp_path / "bad.conf"
    config.write_text("name = x\nquota = soon\n")
    result = runner.invoke(main, ["--store", str(tmp_path / "s.db"),
                                  "setup", str(config)])
    assert result.exit_code == 2
    assert "quota" in result.output


def test_setup_rejects_uncataloged_prompt_key(runner, tmp_path):
    config = tmp_path / "p.conf"
    config.write_text("name = x\nquota = 1\nprompt_key = prompt.custom\n")
    result = runner.invoke(main, ["--store", str(tmp_path / "s.db"),
                                  "setup", str(config)])
    assert result.exit_code == 2
    assert "prompt.custom" in result.output


def test_simulate_deterministic_and_clean(runner, tmp_path):
    def run(db_name):
        config = write_setup_files(tmp_path)
        db = tmp_path / db_name
        r = runner.invoke(main, ["--store", str(db), "setup", str(config)])
        assert r.exit_code == 0
        r = runner.invoke(main, [
            "--store", str(db), "simulate",
            "--campaign", "classroom", "--seed", "4",
            "--yes-rate", "0.5", "--annotators", "3",
        ])
        assert r.exit_code == 0, r.output
        return r.output

    first = run("a.db")
    second = run("b.db")
    assert first == second
    assert "all checks passed" in first


def test_simulate_zero_yes_rate_means_no_comments(runner, tmp_path):
    config = write_setup_files(tmp_path)
    db = tmp_path / "z.db"
    runner.invoke(main, ["--store", str(db), "setup", str(config)])
    result = runner.invoke(main, [
        "--store", str(db), "simulate",
        "--campaign", "classroom", "--seed", "1",
        "--yes-rate", "0", "--annotators", "3",
    ])
    assert result.exit_code == 0
    assert "yes: 0" in result.output
    assert "with comment: 0" in result.output


def test_simulate_rejects_oversized_roster(runner, tmp_path):
    config = write_setup_files(tmp_path, n_annotators=2)
    db = tmp_path / "r.db"
    runner.invoke(main, ["--store", str(db), "setup", str(config)])
    result = runner.invoke(main, [
        "--store", str(db), "simulate",
        "--campaign", "classroom", "--annotators", "50",
    ])
    assert result.exit_code == 2


def test_report_after_simulation(runner, tmp_path):
    config = write_setup_files(tmp_path, n_images=12)
    db = tmp_path / "rep.db"
    runner.invoke(main, ["--store", str(db), "setup", str(config)])
    runner.invoke(main, [
        "--store", str(db), "simulate",
        "--campaign", "classroom", "--seed", "2",
        "--yes-rate", "0.4", "--annotators", "3",
    ])
    result = runner.invoke(main, [
        "--store", str(db), "report", "judgment-depth",
        "--campaign", "classroom", "--format", "csv",
    ])
    assert result.exit_code == 0, result.output
    header = result.output.splitlines()[0]
    assert header == ("min_judgments,images_with_comment,total_comments,"
                      "images_without_comment")
    result = runner.invoke(main, [
        "--store", str(db), "report", "trigger-distribution",
        "--campaign", "classroom", "--format", "json",
    ])
    body = json.loads(result.output)
    assert body["report"] == "trigger-distribution"


def test_unknown_report_exits_2(runner, tmp_path):
    config = write_setup_files(tmp_path)
    db = tmp_path / "u.db"
    runner.invoke(main, ["--store", str(db), "setup", str(config)])
    result = runner.invoke(main, [
        "--store", str(db), "report", "nonsense", "--campaign", "classroom",
    ])
    assert result.exit_code == 2


def test_label_subjects_reports_rejected_rows(runner, tmp_path):
    config = write_setup_files(tmp_path)
    db = tmp_path / "l.db"
    runner.invoke(main, ["--store", str(db), "setup", str(config)])
    labels = tmp_path / "labels.csv"
    labels.write_text(
        "i000001,Females\ni000002,Animals\ni000003,Nobody\n"
    )
    result = runner.invoke(main, [
        "--store", str(db), "label-subjects",
        "--campaign", "classroom", str(labels),
    ])
    assert result.exit_code == 0
    assert "labeled 2" in result.output
    assert "Animals" in result.output or "rejected i000002" in result.output
    assert "Females" in result.output  # valid values listed in the message


def test_export_then_report_on_release(runner, tmp_path):
    config = write_setup_files(tmp_path, n_images=10)
    db = tmp_path / "e.db"
    runner.invoke(main, ["--store", str(db), "setup", str(config)])
    runner.invoke(main, [
        "--store", str(db), "simulate",
        "--campaign", "classroom", "--seed", "3",
        "--yes-rate", "0.6", "--annotators", "3",
    ])
    out = tmp_path / "release.jsonl"
    result = runner.invoke(main, [
        "--store", str(db), "export",
        "--campaign", "classroom", "--out", str(out), "--seed", "5",
    ])
    assert result.exit_code == 0, result.output
    assert out.exists()

    result = runner.invoke(main, [
        "report", "judgment-depth", "--release", str(out), "--format", "json",
    ])
    assert result.exit_code == 0, result.output
    body = json.loads(result.output)
    assert body["rows"]  # depth table reproduced from the release file

    # alpha on the release, excluding a category
    result = runner.invoke(main, [
        "report", "alpha", "--release", str(out), "--format", "json",
        "--exclude", "Other",
    ])
    if result.exit_code == 0:
        stats = json.loads(result.output)["stats"]
        assert -1.0 <= stats["alpha"] <= 1.0
    else:
        assert result.exit_code == 2  # degenerate small sample is acceptable


def test_status_transitions(runner, tmp_path):
    config = write_setup_files(tmp_path)
    db = tmp_path / "st.db"
    runner.invoke(main, ["--store", str(db), "setup", str(config)])
    result = runner.invoke(main, [
        "--store", str(db), "status", "--campaign", "classroom", "closed",
    ])
    assert result.exit_code == 0
    store = Store(str(db))
    assert store.get_campaign("classroom").status == "closed"
    store.close()


def test_embedded_and_server_conflict(runner):
    result = runner.invoke(main, [
        "--embedded", "--server", "http://x", "--admin-token", "t",
        "report", "alpha", "--campaign", "c",
    ])
    assert result.exit_code == 2


@pytest.mark.slow
def test_setup_at_deployment_scale(runner, tmp_path):
    # 95 annotators over a 20,000-image pool, quota 4
    config = write_setup_files(
        tmp_path, n_images=20_000, n_annotators=95, quota=4, seed=1,
    )
    db = tmp_path / "scale.db"
    result = runner.invoke(main, ["--store", str(db), "setup", str(config)])
    assert result.exit_code == 0, result.output
    creds = (tmp_path / "creds.txt").read_text().splitlines()
    assert len(creds) == 95
    assert len({line.split()[0] for line in creds}) == 95
    store = Store(str(db))
    assert store.image_count("classroom") == 20_000
    store.close()

import json

import pytest
from fastapi.testclient import TestClient

from annocamp import errors
from annocamp.i18n import load_catalogs, parse_catalog, MessageCatalog
from annocamp.service import create_app
from annocamp.store import Store

ADMIN = {"Authorization": "Bearer admin-secret"}


@pytest.fixture
def client(store):
    app = create_app(store, admin_token="admin-secret")
    with TestClient(app) as c:
        yield c


def make_campaign(client, n_images=5, n_annotators=2, quota=2, language="en", **extra):
    body = {"name": "session", "quota": quota, "language": language, **extra}
    r = client.post("/api/admin/campaigns", json=body, headers=ADMIN)
    assert r.status_code == 201, r.text
    cid = r.json()["id"]
    r = client.post(
        f"/api/admin/campaigns/{cid}/annotators",
        json={"count": n_annotators},
        headers=ADMIN,
    )
    assert r.status_code == 201, r.text
    creds = r.json()["annotators"]
    r = client.post(
        f"/api/admin/campaigns/{cid}/images",
        json={"sources": [f"http://pool/{cid}/{i}.jpg" for i in range(n_images)]},
        headers=ADMIN,
    )
    assert r.status_code == 201, r.text
    r = client.post(
        f"/api/admin/campaigns/{cid}/status", json={"status": "active"}, headers=ADMIN
    )
    assert r.status_code == 200, r.text
    return cid, creds


def login(client, creds):
    r = client.post(
        "/api/login",
        json={"username": creds["username"], "password": creds["password"]},
    )
    assert r.status_code == 200, r.text
    return {"Authorization": "Bearer " + r.json()["token"]}


class TestLogin:
    def test_valid_credentials(self, client):
        cid, creds = make_campaign(client)
        body = client.post(
            "/api/login",
            json={"username": creds[0]["username"], "password": creds[0]["password"]},
        ).json()
        assert body["language"] == "en"
        assert body["catalog"]["answer.yes"] == "Yes"

    def test_wrong_password_uniform_error(self, client):
        cid, creds = make_campaign(client)
        r1 = client.post(
            "/api/login",
            json={"username": creds[0]["username"], "password": "nope"},
        )
        r2 = client.post(
            "/api/login", json={"username": "ghost", "password": "nope"}
        )
        assert r1.status_code == r2.status_code == 401
        assert r1.json()["code"] == r2.json()["code"] == "InvalidCredentials"

    def test_second_login_invalidates_first(self, client):
        cid, creds = make_campaign(client)
        first = login(client, creds[0])
        assert client.get("/api/task", headers=first).status_code == 200
        second = login(client, creds[0])
        assert client.get("/api/task", headers=first).status_code == 401
        assert client.get("/api/task", headers=second).status_code == 200

    def test_missing_token(self, client):
        assert client.get("/api/task").status_code == 401


class TestWorkflow:
    def test_task_payload_localized(self, client):
        cid, creds = make_campaign(client, language="it")
        headers = login(client, creds[0])
        task = client.get("/api/task", headers=headers).json()
        assert task["exhausted"] is False
        assert task["prompt"].startswith("Se vedessi questa foto su Instagram")
        labels = [c["label"] for c in task["categories"]]
        assert labels == [
            "Corpo", "Abbigliamento", "Posa", "Espressione del viso",
            "Luogo", "Attività", "Altro",
        ]
        assert task["answers"] == {"yes": "Sì", "no": "No"}

    def test_task_stable_between_calls(self, client):
        cid, creds = make_campaign(client)
        headers = login(client, creds[0])
        a = client.get("/api/task", headers=headers).json()
        b = client.get("/api/task", headers=headers).json()
        assert a["image_id"] == b["image_id"]

    def test_submit_no_then_next(self, client):
        cid, creds = make_campaign(client)
        headers = login(client, creds[0])
        task = client.get("/api/task", headers=headers).json()
        ack = client.post(
            "/api/judgment",
            json={"image_id": task["image_id"], "verdict": "no"},
            headers=headers,
        ).json()
        assert ack["accepted"] is True and ack["has_next"] is True
        again = client.get("/api/task", headers=headers).json()
        assert again["image_id"] != task["image_id"]

    def test_submit_yes_requires_comment(self, client):
        cid, creds = make_campaign(client)
        headers = login(client, creds[0])
        task = client.get("/api/task", headers=headers).json()
        r = client.post(
            "/api/judgment",
            json={"image_id": task["image_id"], "verdict": "yes"},
            headers=headers,
        )
        assert r.status_code == 400
        assert r.json()["code"] == "MissingComment"
        r = client.post(
            "/api/judgment",
            json={
                "image_id": task["image_id"],
                "verdict": "yes",
                "comment": {"text": "Inquietante", "trigger": "Other"},
            },
            headers=headers,
        )
        assert r.status_code == 200

    def test_stale_image_rejected(self, client):
        cid, creds = make_campaign(client)
        headers = login(client, creds[0])
        first = client.get("/api/task", headers=headers).json()
        client.post(
            "/api/judgment",
            json={"image_id": first["image_id"], "verdict": "no"},
            headers=headers,
        )
        client.get("/api/task", headers=headers)
        r = client.post(
            "/api/judgment",
            json={"image_id": first["image_id"], "verdict": "no"},
            headers=headers,
        )
        assert r.status_code == 409
        assert r.json()["code"] == "StaleImage"

    def test_exhaustion_message_localized(self, client):
        cid, creds = make_campaign(client, n_images=2, language="fr")
        headers = login(client, creds[0])
        for _ in range(2):
            task = client.get("/api/task", headers=headers).json()
            client.post(
                "/api/judgment",
                json={"image_id": task["image_id"], "verdict": "no"},
                headers=headers,
            )
        done = client.get("/api/task", headers=headers).json()
        assert done["exhausted"] is True
        assert done["message"] == "Tu as jugé toutes les photos. Merci !"

    def test_double_submit_with_idempotency_key(self, client):
        cid, creds = make_campaign(client)
        headers = login(client, creds[0])
        task = client.get("/api/task", headers=headers).json()
        payload = {"image_id": task["image_id"], "verdict": "no"}
        key_headers = dict(headers, **{"Idempotency-Key": "click-1"})
        first = client.post("/api/judgment", json=payload, headers=key_headers)
        second = client.post("/api/judgment", json=payload, headers=key_headers)
        assert first.status_code == second.status_code == 200
        assert first.json() == second.json()

    def test_isolation_no_other_annotator_data(self, client):
        cid, creds = make_campaign(client)
        h0, h1 = login(client, creds[0]), login(client, creds[1])
        task = client.get("/api/task", headers=h0).json()
        text = json.dumps(task)
        assert creds[1]["username"] not in text
        ack = client.post(
            "/api/judgment",
            json={"image_id": task["image_id"], "verdict": "no"},
            headers=h0,
        ).json()
        assert creds[1]["username"] not in json.dumps(ack)


class TestAdmin:
    def test_admin_requires_token(self, client):
        r = client.post("/api/admin/campaigns", json={"name": "x", "quota": 1})
        assert r.status_code == 401
        r = client.post(
            "/api/admin/campaigns",
            json={"name": "x", "quota": 1},
            headers={"Authorization": "Bearer wrong"},
        )
        assert r.status_code == 401

    def test_create_campaign_defaults(self, client):
        r = client.post(
            "/api/admin/campaigns",
            json={"name": "minimal", "quota": 4},
            headers=ADMIN,
        )
        body = r.json()
        assert body["categories"] == [
            "Body", "Clothing", "Pose", "Facial expression", "Location",
            "Activity", "Other",
        ]
        assert body["status"] == "draft"

    def test_create_campaign_rejects_zero_quota(self, client):
        r = client.post(
            "/api/admin/campaigns",
            json={"name": "bad", "quota": 0},
            headers=ADMIN,
        )
        assert r.status_code == 400
        body = r.json()
        assert body["code"] == "InvalidConfig" and body["field"] == "quota"

    def test_create_campaign_rejects_unknown_prompt_key(self, client):
        r = client.post(
            "/api/admin/campaigns",
            json={"name": "bad", "quota": 1, "prompt_key": "prompt.missing"},
            headers=ADMIN,
        )
        assert r.status_code == 400
        assert r.json()["field"] == "prompt_key"

    def test_annotator_count_validation(self, client):
        r = client.post("/api/admin/campaigns", json={"name": "x", "quota": 1},
                        headers=ADMIN)
        cid = r.json()["id"]
        r = client.post(
            f"/api/admin/campaigns/{cid}/annotators",
            json={"count": 0},
            headers=ADMIN,
        )
        assert r.status_code == 400
        assert r.json()["code"] == "InvalidCount"

    def test_annotator_language_must_have_a_catalog(self, client):
        r = client.post("/api/admin/campaigns", json={"name": "x", "quota": 1},
                        headers=ADMIN)
        cid = r.json()["id"]
        r = client.post(
            f"/api/admin/campaigns/{cid}/annotators",
            json={"count": 1, "language": "de"},
            headers=ADMIN,
        )
        assert r.status_code == 400
        assert r.json()["field"] == "language"
        r = client.post(
            f"/api/admin/campaigns/{cid}/annotators",
            json={"count": 1, "language": "fr"},
            headers=ADMIN,
        )
        assert r.status_code == 201

    def test_manifest_text_upload(self, client):
        r = client.post("/api/admin/campaigns", json={"name": "x", "quota": 1},
                        headers=ADMIN)
        cid = r.json()["id"]
        manifest = "# pool\nhttp://a/1.jpg\n/local/2.png\nhttp://a/1.jpg\n"
        r = client.post(
            f"/api/admin/campaigns/{cid}/images",
            content=manifest,
            headers=dict(ADMIN, **{"Content-Type": "text/plain"}),
        )
        body = r.json()
        assert body["registered"] == 2
        assert body["duplicates"] == ["http://a/1.jpg"]

    def test_subject_upload_reports_rejects(self, client, store):
        cid, creds = make_campaign(client, n_images=3)
        ids = store.list_image_ids(cid)
        csv_body = f"{ids[0]},Females\n{ids[1]},Animals\n{ids[2]},Nobody\n"
        r = client.post(
            f"/api/admin/campaigns/{cid}/subjects",
            content=csv_body,
            headers=dict(ADMIN, **{"Content-Type": "text/csv"}),
        )
        body = r.json()
        assert body["labeled"] == 2
        assert len(body["rejected"]) == 1
        assert body["rejected"][0]["image_id"] == ids[1]
        assert body["rejected"][0]["error"]["code"] == "UnknownSubject"

    def test_status_cannot_go_backwards(self, client):
        cid, creds = make_campaign(client)
        r = client.post(
            f"/api/admin/campaigns/{cid}/status",
            json={"status": "draft"},
            headers=ADMIN,
        )
        assert r.status_code == 400

    def test_reports_endpoint(self, client, store):
        cid, creds = make_campaign(client, n_images=3)
        headers = login(client, creds[0])
        task = client.get("/api/task", headers=headers).json()
        client.post(
            "/api/judgment",
            json={
                "image_id": task["image_id"],
                "verdict": "yes",
                "comment": {"text": "hm", "trigger": "Pose"},
            },
            headers=headers,
        )
        r = client.get(
            f"/api/admin/campaigns/{cid}/reports/trigger-distribution",
            headers=ADMIN,
        )
        body = json.loads(r.text)
        assert ["Pose", 1] in body["rows"]
        r = client.get(
            f"/api/admin/campaigns/{cid}/reports/trigger-distribution?format=csv",
            headers=ADMIN,
        )
        assert r.headers["content-type"].startswith("text/csv")
        assert r.text.splitlines()[0] == "category,comments"

    def test_alpha_report_structured_error(self, client):
        cid, creds = make_campaign(client)
        r = client.get(
            f"/api/admin/campaigns/{cid}/reports/alpha", headers=ADMIN
        )
        assert r.status_code == 409
        assert r.json()["code"] == "NoPairableUnits"

    def test_unknown_report(self, client):
        cid, creds = make_campaign(client)
        r = client.get(
            f"/api/admin/campaigns/{cid}/reports/wordcloud", headers=ADMIN
        )
        assert r.status_code == 404
        assert r.json()["code"] == "UnknownReport"

    def test_export_endpoint_streams_jsonl(self, client):
        cid, creds = make_campaign(client, n_images=2)
        headers = login(client, creds[0])
        for _ in range(2):
            task = client.get("/api/task", headers=headers).json()
            client.post(
                "/api/judgment",
                json={"image_id": task["image_id"], "verdict": "no"},
                headers=headers,
            )
        r = client.get(f"/api/admin/campaigns/{cid}/export?seed=1", headers=ADMIN)
        lines = [json.loads(l) for l in r.text.strip().splitlines()]
        assert len(lines) == 2
        assert all(set(l) == {"image_id", "judgments"} for l in lines)
        again = client.get(
            f"/api/admin/campaigns/{cid}/export?seed=1", headers=ADMIN
        )
        assert again.text == r.text

    def test_export_empty_campaign(self, client):
        cid, creds = make_campaign(client)
        r = client.get(f"/api/admin/campaigns/{cid}/export", headers=ADMIN)
        assert r.status_code == 409
        assert r.json()["code"] == "NothingToExport"

    def test_admin_posts_replay_on_idempotency_key(self, client):
        headers = dict(ADMIN, **{"Idempotency-Key": "create-once"})
        first = client.post(
            "/api/admin/campaigns",
            json={"name": "idem", "quota": 1},
            headers=headers,
        )
        second = client.post(
            "/api/admin/campaigns",
            json={"name": "idem", "quota": 1},
            headers=headers,
        )
        assert first.json() == second.json()  # no second campaign created
        cid = first.json()["id"]

        gen = dict(ADMIN, **{"Idempotency-Key": "annotators-once"})
        a1 = client.post(
            f"/api/admin/campaigns/{cid}/annotators",
            json={"count": 2},
            headers=gen,
        )
        a2 = client.post(
            f"/api/admin/campaigns/{cid}/annotators",
            json={"count": 2},
            headers=gen,
        )
        assert a1.json() == a2.json()
        r = client.post(
            f"/api/admin/campaigns/{cid}/annotators",
            json={"count": 1},
            headers=ADMIN,
        )
        assert r.status_code == 201  # keyless call still executes


class TestCatalogs:
    def test_shipped_catalogs_complete(self):
        catalog = load_catalogs()
        assert set(catalog.languages) == {"en", "fr", "it"}

    def test_incomplete_catalog_fails_at_startup(self, tmp_path):
        (tmp_path / "en.txt").write_text("a.key = hello\nb.key = there\n")
        (tmp_path / "de.txt").write_text("a.key = hallo\n")
        with pytest.raises(errors.InvalidConfig) as exc:
            load_catalogs(tmp_path)
        assert "b.key" in str(exc.value)

    def test_extra_keys_in_translation_are_fine(self):
        catalog = MessageCatalog(
            {"en": {"a": "x"}, "it": {"a": "y", "extra": "z"}}
        )
        assert catalog.get("it", "a") == "y"

    def test_parse_catalog_values_may_contain_equals(self):
        entries = parse_catalog("query = a = b\n# comment\n\nother = v\n")
        assert entries == {"query": "a = b", "other": "v"}

    def test_unknown_language_falls_back_to_default(self, client):
        # per-user language codes outside the installed set resolve to en
        catalog = load_catalogs()
        assert catalog.get("xx", "answer.yes") == "Yes"

    def test_custom_category_label_passthrough(self):
        catalog = load_catalogs()
        assert catalog.category_label("it", "Pose") == "Posa"
        assert catalog.category_label("it", "Sfondo") == "Sfondo"

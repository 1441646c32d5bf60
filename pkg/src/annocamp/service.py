"""HTTP service: annotator login and workflow, admin campaign management,
reports, and release export.

All endpoints speak JSON; errors are ``{"code", "message", "field"?}`` with
the code taken from the domain error. Admin endpoints authenticate with a
static bearer token supplied at app creation; annotators authenticate with
session tokens issued by ``POST /api/login`` (one active session per
annotator, a new login invalidates the previous token).

State-changing endpoints honor an ``Idempotency-Key`` header: retrying with
the same key replays the original response instead of re-executing, which
makes double-click submissions safe.
"""

from __future__ import annotations

import secrets
import threading
from collections import OrderedDict
from datetime import timedelta

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse

from . import errors, model, release
from .assignment import AssignmentEngine
from .auth import generate_annotators, verify_password
from .analytics import get_report, report_to_csv, report_to_json
from .i18n import MessageCatalog, load_catalogs
from .store import Store

SESSION_TTL = timedelta(hours=8)
_IDEMPOTENCY_CACHE_SIZE = 4096


class SessionManager:
    """Single active session per annotator, with expiry."""

    def __init__(self, ttl: timedelta = SESSION_TTL):
        self._ttl = ttl
        self._lock = threading.Lock()
        self._by_token: dict[str, dict] = {}
        self._by_annotator: dict[str, str] = {}

    def issue(self, campaign_id: str, annotator_id: str) -> dict:
        token = secrets.token_urlsafe(32)
        session = {
            "token": token,
            "campaign_id": campaign_id,
            "annotator_id": annotator_id,
            "expires_at": model.utcnow() + self._ttl,
        }
        with self._lock:
            old = self._by_annotator.pop(annotator_id, None)
            if old is not None:
                self._by_token.pop(old, None)
            self._by_token[token] = session
            self._by_annotator[annotator_id] = token
        return session

    def resolve(self, token: str | None) -> dict:
        if not token:
            raise errors.Unauthorized("missing bearer token")
        with self._lock:
            session = self._by_token.get(token)
            if session is None:
                raise errors.Unauthorized("unknown or superseded token")
            if session["expires_at"] < model.utcnow():
                self._by_token.pop(token, None)
                self._by_annotator.pop(session["annotator_id"], None)
                raise errors.Unauthorized("session expired")
        return session


class IdempotencyCache:
    def __init__(self, size: int = _IDEMPOTENCY_CACHE_SIZE):
        self._size = size
        self._lock = threading.Lock()
        self._entries: OrderedDict[tuple[str, str], tuple[int, dict]] = OrderedDict()

    def get(self, scope: str, key: str | None):
        if not key:
            return None
        with self._lock:
            return self._entries.get((scope, key))

    def put(self, scope: str, key: str | None, status: int, body: dict) -> None:
        if not key:
            return
        with self._lock:
            self._entries[(scope, key)] = (status, body)
            while len(self._entries) > self._size:
                self._entries.popitem(last=False)


def _bearer(request: Request) -> str | None:
    header = request.headers.get("authorization", "")
    if header.lower().startswith("bearer "):
        return header[7:].strip()
    return None


async def _json_body(request: Request) -> dict:
    try:
        body = await request.json()
    except Exception:
        raise errors.InvalidConfig("request body must be valid JSON")
    if not isinstance(body, dict):
        raise errors.InvalidConfig("request body must be a JSON object")
    return body


def _require(body: dict, field: str, kind: type, message: str | None = None):
    value = body.get(field)
    if not isinstance(value, kind) or (kind is str and not value.strip()):
        raise errors.InvalidConfig(
            message or f"{field} must be a {kind.__name__}", field=field
        )
    return value


def create_app(
    store: Store,
    admin_token: str,
    catalog_dir: str | None = None,
    engine: AssignmentEngine | None = None,
    session_ttl: timedelta = SESSION_TTL,
) -> FastAPI:
    """Build the service around an open store.

    The message catalogs are loaded (and completeness-checked) here, so a
    missing translation fails at startup.
    """
    catalog: MessageCatalog = load_catalogs(catalog_dir)
    engine = engine or AssignmentEngine(store)
    sessions = SessionManager(session_ttl)
    idempotency = IdempotencyCache()
    app = FastAPI(title="annocamp", version="0.1.0", docs_url=None, redoc_url=None)

    @app.exception_handler(errors.AnnotationError)
    async def _domain_error(request: Request, exc: errors.AnnotationError):
        return JSONResponse(status_code=exc.http_status, content=exc.payload())

    def require_admin(request: Request) -> None:
        if _bearer(request) != admin_token:
            raise errors.Unauthorized("admin credential required")

    def annotator_session(request: Request) -> dict:
        return sessions.resolve(_bearer(request))

    def replay_for(request: Request, scope: str):
        """Cached (status, body) for this idempotency key, or None."""
        key = request.headers.get("idempotency-key")
        cached = idempotency.get(scope, key)
        if cached is None:
            return key, None
        return key, JSONResponse(status_code=cached[0], content=cached[1])

    # -- annotator endpoints -------------------------------------------------

    @app.post("/api/login")
    async def login(request: Request):
        body = await _json_body(request)
        username = body.get("username", "")
        password = body.get("password", "")
        if not isinstance(username, str) or not isinstance(password, str):
            raise errors.InvalidCredentials("wrong username or password")
        found = store.lookup_credentials(username) if username else None
        if found is None or not verify_password(password, found[1]):
            # uniform error: do not reveal which field failed
            raise errors.InvalidCredentials("wrong username or password")
        annotator = found[0]
        session = sessions.issue(annotator.campaign_id, annotator.id)
        language = catalog.language_for(annotator.ui_language)
        return {
            "token": session["token"],
            "language": language,
            "expires_at": session["expires_at"].isoformat(),
            "catalog": catalog.entries(language),
        }

    def _task_payload(session: dict) -> dict:
        campaign = store.get_campaign(session["campaign_id"])
        annotator = store.get_annotator(session["campaign_id"], session["annotator_id"])
        language = annotator.ui_language
        image = engine.next_image(campaign.id, annotator.id)
        if image is None:
            return {
                "exhausted": True,
                "message": catalog.get(language, "done.message"),
            }
        return {
            "exhausted": False,
            "image_id": image.id,
            "image": {"id": image.id, "kind": image.source_kind, "source": image.source},
            "prompt": catalog.get(language, campaign.prompt_key),
            "categories": [
                {"value": c, "label": catalog.category_label(language, c)}
                for c in campaign.category_set
            ],
            "answers": {
                "yes": catalog.get(language, "answer.yes"),
                "no": catalog.get(language, "answer.no"),
            },
            "language": language,
        }

    @app.get("/api/task")
    async def get_task(request: Request):
        return _task_payload(annotator_session(request))

    @app.post("/api/judgment")
    async def submit_judgment(request: Request):
        session = annotator_session(request)
        idem_key = request.headers.get("idempotency-key")
        cached = idempotency.get(session["annotator_id"], idem_key)
        if cached is not None:
            status, body = cached
            return JSONResponse(status_code=status, content=body)
        body = await _json_body(request)
        image_id = _require(body, "image_id", str)
        verdict = body.get("verdict")
        comment = body.get("comment")
        judgment = engine.submit(
            session["campaign_id"],
            session["annotator_id"],
            image_id,
            verdict,
            comment,
            enforce_offer=True,
        )
        has_next = (
            engine.next_image(session["campaign_id"], session["annotator_id"])
            is not None
        )
        payload = {
            "accepted": True,
            "judgment_id": judgment.id,
            "next": "/api/task",
            "has_next": has_next,
        }
        idempotency.put(session["annotator_id"], idem_key, 200, payload)
        return payload

    # -- admin endpoints --------------------------------------------------------

    @app.post("/api/admin/campaigns", status_code=201)
    async def create_campaign(request: Request):
        require_admin(request)
        idem_key, replay = replay_for(request, "admin")
        if replay is not None:
            return replay
        body = await _json_body(request)
        name = _require(body, "name", str)
        quota = body.get("quota")
        if not isinstance(quota, int) or isinstance(quota, bool):
            raise errors.InvalidConfig("quota must be an integer", field="quota")
        prompt_key = body.get("prompt_key", "prompt.main")
        if not catalog.has_key(prompt_key):
            raise errors.InvalidConfig(
                f"prompt key {prompt_key!r} is not in the message catalog",
                field="prompt_key",
            )
        language = body.get("language", catalog.default_language)
        if language not in catalog.languages:
            raise errors.InvalidConfig(
                f"language {language!r} has no catalog; installed: "
                + ", ".join(catalog.languages),
                field="language",
            )
        campaign = store.create_campaign(
            name,
            quota,
            categories=body.get("categories"),
            prompt_key=prompt_key,
            language=language,
            feature_dim=body.get("feature_dim", model.DEFAULT_FEATURE_DIM),
            rng_seed=body.get("rng_seed"),
            campaign_id=body.get("id"),
        )
        payload = _campaign_payload(campaign)
        idempotency.put("admin", idem_key, 201, payload)
        return payload

    def _campaign_payload(campaign) -> dict:
        return {
            "id": campaign.id,
            "name": campaign.name,
            "quota": campaign.quota,
            "categories": list(campaign.category_set),
            "prompt_key": campaign.prompt_key,
            "language": campaign.default_language,
            "status": campaign.status,
            "feature_dim": campaign.feature_dim,
        }

    @app.post("/api/admin/campaigns/{campaign_id}/annotators", status_code=201)
    async def add_annotators(campaign_id: str, request: Request):
        require_admin(request)
        idem_key, replay = replay_for(request, "admin")
        if replay is not None:
            return replay
        body = await _json_body(request)
        count = body.get("count")
        if not isinstance(count, int) or isinstance(count, bool):
            raise errors.InvalidCount("count must be an integer", field="count")
        language = body.get("language")
        if language is not None and language not in catalog.languages:
            raise errors.InvalidConfig(
                f"language {language!r} has no catalog; installed: "
                + ", ".join(catalog.languages),
                field="language",
            )
        created = generate_annotators(store, campaign_id, count, language=language)
        payload = {
            "annotators": [
                {"id": a.id, "username": a.username, "password": password}
                for a, password in created
            ]
        }
        idempotency.put("admin", idem_key, 201, payload)
        return payload

    @app.post("/api/admin/campaigns/{campaign_id}/images", status_code=201)
    async def add_images(campaign_id: str, request: Request):
        require_admin(request)
        idem_key, replay = replay_for(request, "admin")
        if replay is not None:
            return replay
        content_type = request.headers.get("content-type", "")
        if content_type.startswith("application/json"):
            body = await _json_body(request)
            sources = body.get("sources")
            if not isinstance(sources, list) or not all(
                isinstance(s, str) and s.strip() for s in sources
            ):
                raise errors.InvalidConfig(
                    "sources must be a list of non-empty strings", field="sources"
                )
            entries = [release.classify_source(s.strip()) for s in sources]
            if not entries:
                raise errors.EmptyManifest("no sources supplied")
            result = store.add_images(campaign_id, entries)
        else:
            text = (await request.body()).decode("utf-8")
            entries = list(release.iter_manifest(text.splitlines()))
            if not entries:
                raise errors.EmptyManifest("no sources supplied")
            result = store.add_images(campaign_id, entries)
        payload = {
            "registered": result.registered,
            "duplicates": list(result.duplicates),
        }
        idempotency.put("admin", idem_key, 201, payload)
        return payload

    @app.post("/api/admin/campaigns/{campaign_id}/subjects")
    async def label_subjects(campaign_id: str, request: Request):
        require_admin(request)
        idem_key, replay = replay_for(request, "admin")
        if replay is not None:
            return replay
        content_type = request.headers.get("content-type", "")
        rows: list[tuple[str, str]] = []
        if content_type.startswith("application/json"):
            body = await _json_body(request)
            labels = body.get("labels")
            if not isinstance(labels, list):
                raise errors.InvalidConfig(
                    "labels must be a list of {image_id, subject}", field="labels"
                )
            for entry in labels:
                if not isinstance(entry, dict):
                    raise errors.InvalidConfig(
                        "labels must be a list of {image_id, subject}", field="labels"
                    )
                rows.append((entry.get("image_id", ""), entry.get("subject", "")))
        else:
            text = (await request.body()).decode("utf-8")
            for line in text.splitlines():
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                image_id, _, subject = line.partition(",")
                rows.append((image_id.strip(), subject.strip()))
        labeled = 0
        rejected = []
        for image_id, subject in rows:
            try:
                store.set_subject_label(campaign_id, image_id, subject)
                labeled += 1
            except errors.AnnotationError as exc:
                rejected.append({"image_id": image_id, "error": exc.payload()})
        payload = {"labeled": labeled, "rejected": rejected}
        idempotency.put("admin", idem_key, 200, payload)
        return payload

    @app.post("/api/admin/campaigns/{campaign_id}/status")
    async def set_status(campaign_id: str, request: Request):
        require_admin(request)
        idem_key, replay = replay_for(request, "admin")
        if replay is not None:
            return replay
        body = await _json_body(request)
        status = _require(body, "status", str)
        current = store.get_campaign(campaign_id).status
        order = {"draft": 0, "active": 1, "closed": 2}
        if status not in order:
            raise errors.InvalidConfig(
                f"status must be one of {tuple(order)}", field="status"
            )
        if order[status] < order[current]:
            raise errors.InvalidConfig(
                f"cannot move campaign from {current} back to {status}",
                field="status",
            )
        campaign = store.set_campaign_status(campaign_id, status)
        payload = {"id": campaign.id, "status": campaign.status}
        idempotency.put("admin", idem_key, 200, payload)
        return payload

    @app.get("/api/admin/campaigns/{campaign_id}/reports/{name}")
    async def get_campaign_report(campaign_id: str, name: str, request: Request):
        require_admin(request)
        params = request.query_params
        no_sample = None
        if params.get("no_sample"):
            no_sample = [s for s in params["no_sample"].split(",") if s]
        snapshot = store.snapshot(campaign_id)
        report = get_report(
            snapshot, name, exclude=params.get("exclude"), no_sample=no_sample
        )
        if params.get("format", "json") == "csv":
            return Response(report_to_csv(report), media_type="text/csv")
        return Response(report_to_json(report), media_type="application/json")

    @app.get("/api/admin/campaigns/{campaign_id}/export")
    async def export_campaign(campaign_id: str, request: Request):
        require_admin(request)
        store.get_campaign(campaign_id)
        if store.judgment_count(campaign_id) == 0:
            raise errors.NothingToExport("campaign has no judgments")
        seed = int(request.query_params.get("seed", "0"))

        def lines():
            for line in release.iter_release_lines(
                store, campaign_id, pseudonym_seed=seed
            ):
                yield line + "\n"

        return StreamingResponse(lines(), media_type="application/x-ndjson")

    return app

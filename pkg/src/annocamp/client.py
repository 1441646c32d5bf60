"""Thin HTTP client used by the CLI's client mode."""

from __future__ import annotations

import requests


class ServiceError(Exception):
    def __init__(self, status: int, payload: dict):
        self.status = status
        self.payload = payload
        super().__init__(
            f"{payload.get('code', 'Error')}: {payload.get('message', '')}"
        )


class ServiceClient:
    def __init__(self, base_url: str, admin_token: str, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._session = requests.Session()
        self._session.headers["Authorization"] = f"Bearer {admin_token}"

    def _check(self, response: requests.Response):
        if response.status_code >= 400:
            try:
                payload = response.json()
            except ValueError:
                payload = {"code": "HTTPError", "message": response.text[:200]}
            raise ServiceError(response.status_code, payload)
        return response

    def _post(self, path: str, **kwargs) -> dict:
        r = self._check(
            self._session.post(self.base_url + path, timeout=self.timeout, **kwargs)
        )
        return r.json()

    def create_campaign(self, config: dict) -> dict:
        return self._post("/api/admin/campaigns", json=config)

    def generate_annotators(self, campaign_id: str, count: int, language=None) -> list[dict]:
        body = {"count": count}
        if language:
            body["language"] = language
        return self._post(
            f"/api/admin/campaigns/{campaign_id}/annotators", json=body
        )["annotators"]

    def upload_manifest(self, campaign_id: str, manifest_text: str) -> dict:
        return self._post(
            f"/api/admin/campaigns/{campaign_id}/images",
            data=manifest_text.encode("utf-8"),
            headers={"Content-Type": "text/plain; charset=utf-8"},
        )

    def label_subjects(self, campaign_id: str, csv_text: str) -> dict:
        return self._post(
            f"/api/admin/campaigns/{campaign_id}/subjects",
            data=csv_text.encode("utf-8"),
            headers={"Content-Type": "text/csv; charset=utf-8"},
        )

    def set_status(self, campaign_id: str, status: str) -> dict:
        return self._post(
            f"/api/admin/campaigns/{campaign_id}/status", json={"status": status}
        )

    def report(
        self,
        campaign_id: str,
        name: str,
        fmt: str = "json",
        exclude: str | None = None,
        no_sample: list[str] | None = None,
    ) -> str:
        params: dict = {"format": fmt}
        if exclude:
            params["exclude"] = exclude
        if no_sample:
            params["no_sample"] = ",".join(no_sample)
        r = self._check(
            self._session.get(
                f"{self.base_url}/api/admin/campaigns/{campaign_id}/reports/{name}",
                params=params,
                timeout=self.timeout,
            )
        )
        return r.text

    def export(self, campaign_id: str, destination, seed: int = 0) -> int:
        r = self._check(
            self._session.get(
                f"{self.base_url}/api/admin/campaigns/{campaign_id}/export",
                params={"seed": seed},
                stream=True,
                timeout=self.timeout,
            )
        )
        count = 0
        for line in r.iter_lines():
            if line:
                destination.write(line.decode("utf-8") + "\n")
                count += 1
        return count

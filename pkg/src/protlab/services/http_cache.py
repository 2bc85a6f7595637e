"""
HTTP GET client with on-disk recordings.

Each response is stored as `<sha256 of the canonical URL>.json` in the
recordings directory. Recorded responses are served without touching the
network; in offline mode a request with no recording raises NetworkError.
Credential parameters (api_key) never enter the key or the stored URL.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping, Optional
from urllib.parse import urlencode

import httpx

from .errors import MalformedResponse, NetworkError

logger = logging.getLogger(__name__)

SECRET_PARAMS = frozenset({"api_key", "apikey", "token"})


@dataclass(frozen=True)
class HttpRecord:
    url: str
    status: int
    text: str

    def json(self) -> Any:
        try:
            return json.loads(self.text)
        except json.JSONDecodeError as e:
            raise MalformedResponse(f"Invalid JSON from {self.url}: {e}")


def canonical_url(url: str, params: Optional[Mapping[str, Any]] = None) -> str:
    """URL with sorted, secret-free query parameters."""
    public = {k: v for k, v in (params or {}).items() if k not in SECRET_PARAMS and v is not None}
    if not public:
        return url
    return f"{url}?{urlencode(sorted((k, str(v)) for k, v in public.items()))}"


def recording_key(url: str, params: Optional[Mapping[str, Any]] = None) -> str:
    return hashlib.sha256(canonical_url(url, params).encode("utf-8")).hexdigest()


class RecordedHttpClient:
    """
    GET client that serves and writes recordings.

    Usage:
        http = RecordedHttpClient(Path("runs/x/recordings/http"), offline=True)
        record = http.get("https://www.proteinatlas.org/api/search_download.php", {...})
    """

    def __init__(
        self,
        recordings_dir: Optional[Path] = None,
        offline: bool = False,
        timeout: float = 30.0,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        self.recordings_dir = Path(recordings_dir) if recordings_dir else None
        self.offline = offline
        self.timeout = timeout
        self._transport = transport
        self.network_requests = 0
        if self.recordings_dir:
            self.recordings_dir.mkdir(parents=True, exist_ok=True)

    def _recording_path(self, key: str) -> Optional[Path]:
        return self.recordings_dir / f"{key}.json" if self.recordings_dir else None

    def _read_recording(self, key: str) -> Optional[HttpRecord]:
        path = self._recording_path(key)
        if path is None or not path.exists():
            return None
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
            return HttpRecord(url=entry["url"], status=int(entry["status"]), text=entry["body"])
        except (json.JSONDecodeError, KeyError, ValueError) as e:
            logger.warning(f"[HTTP] Ignoring corrupt recording {path.name}: {e}")
            return None

    def _write_recording(self, key: str, record: HttpRecord) -> None:
        path = self._recording_path(key)
        if path is None:
            return
        entry = {
            "url": record.url,
            "status": record.status,
            "body": record.text,
            "recorded_at": datetime.now(timezone.utc).isoformat(),
        }
        path.write_text(json.dumps(entry, indent=2, ensure_ascii=False), encoding="utf-8")

    def get(self, url: str, params: Optional[Mapping[str, Any]] = None) -> HttpRecord:
        """GET a URL, from the recordings when present."""
        key = recording_key(url, params)
        recorded = self._read_recording(key)
        if recorded is not None:
            logger.debug(f"[HTTP] Recording hit for {recorded.url}")
            return recorded
        public_url = canonical_url(url, params)
        if self.offline:
            raise NetworkError(f"Offline mode: no recording for {public_url}")

        self.network_requests += 1
        try:
            with httpx.Client(timeout=self.timeout, transport=self._transport, follow_redirects=True) as client:
                response = client.get(url, params={k: v for k, v in (params or {}).items() if v is not None})
        except httpx.HTTPError as e:
            raise NetworkError(f"Request to {public_url} failed: {e}")

        record = HttpRecord(url=public_url, status=response.status_code, text=response.text)
        if response.status_code >= 500:
            raise NetworkError(f"Server error {response.status_code} from {public_url}")
        self._write_recording(key, record)
        logger.debug(f"[HTTP] {response.status_code} {public_url}")
        return record

"""Static-map image fetching with an on-disk cache.

The provider is template-driven (any XYZ or static-map endpoint with
``{lon} {lat} {zoom} {w} {h}`` placeholders works), responses must decode
as PNG or JPEG, and repeat fetches for the same key are served from
``cache/<site_id>/<zoom>_<w>x<h>.<ext>`` without touching the network.
Clock and sleep are injectable so rate limiting and backoff are testable
against a virtual clock.
"""

from __future__ import annotations

import io
import json
import os
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import httpx
from PIL import Image, UnidentifiedImageError

from .errors import PipelineError
from .geo import SiteRecord


class ImageryError(PipelineError):
    pass


class HttpError(ImageryError):
    def __init__(self, status: int, url: str = ""):
        super().__init__(f"HTTP {status} fetching {url}")
        self.status = status


class RateLimited(ImageryError):
    pass


class DecodeError(ImageryError):
    pass


class CacheWriteError(ImageryError):
    pass


@dataclass(frozen=True)
class ImageAsset:
    id: str
    site_id: str
    path: str            # relative to the cache root
    width: int
    height: int
    zoom: int


@dataclass
class ImageryConfig:
    url_template: str
    cache_dir: Path
    auth_header: Optional[str] = None   # "Header-Name: value"
    max_rps: float = 2.0
    max_concurrency: int = 4
    width: int = 1024
    height: int = 1024
    # Backoff for 429/5xx: base * factor**attempt, up to max_retries retries.
    max_retries: int = 4
    backoff_base: float = 0.5
    backoff_factor: float = 2.0


def cache_key(site_id: str, zoom: int, width: int, height: int) -> str:
    return f"{site_id}/{zoom}_{width}x{height}"


class _RateLimiter:
    """Spaces request starts at least 1/max_rps apart."""

    def __init__(self, max_rps: float, clock: Callable[[], float], sleep: Callable[[float], None]):
        self._interval = 1.0 / max_rps if max_rps > 0 else 0.0
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next_allowed = 0.0

    def acquire(self) -> None:
        if self._interval == 0.0:
            return
        with self._lock:
            now = self._clock()
            wait = self._next_allowed - now
            self._next_allowed = max(now, self._next_allowed) + self._interval
        if wait > 0:
            self._sleep(wait)


class ImageryClient:
    """Fetches, validates, and caches overhead images.

    Thread-safe; duplicate in-flight keys coalesce to a single request.
    """

    def __init__(
        self,
        cfg: ImageryConfig,
        transport: Optional[httpx.BaseTransport] = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.cfg = cfg
        self._http = httpx.Client(transport=transport, follow_redirects=True)
        self._sleep = sleep
        self._limiter = _RateLimiter(cfg.max_rps, clock, sleep)
        self._lock = threading.Lock()
        self._inflight: dict[str, Future] = {}
        self._index_path = Path(cfg.cache_dir) / "index.json"
        self._index: dict[str, dict] = self._load_index()

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "ImageryClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _load_index(self) -> dict[str, dict]:
        if self._index_path.exists():
            return json.loads(self._index_path.read_text(encoding="utf-8"))
        return {}

    def _save_index(self) -> None:
        try:
            self._index_path.parent.mkdir(parents=True, exist_ok=True)
            tmp = self._index_path.with_suffix(".json.tmp")
            tmp.write_text(json.dumps(self._index, indent=1, sort_keys=True), encoding="utf-8")
            os.replace(tmp, self._index_path)
        except OSError as exc:
            raise CacheWriteError(f"cannot write cache index: {exc}") from exc

    def fetch_image(self, site: SiteRecord, zoom: int) -> ImageAsset:
        key = cache_key(site.id, zoom, self.cfg.width, self.cfg.height)
        with self._lock:
            cached = self._index.get(key)
            if cached is not None and (Path(self.cfg.cache_dir) / cached["path"]).exists():
                return self._asset(site.id, zoom, cached["path"])
            fut = self._inflight.get(key)
            if fut is None:
                fut = Future()
                self._inflight[key] = fut
                owner = True
            else:
                owner = False
        if not owner:
            return fut.result()
        try:
            asset = self._fetch_remote(site, zoom, key)
            fut.set_result(asset)
            return asset
        except BaseException as exc:
            fut.set_exception(exc)
            raise
        finally:
            with self._lock:
                self._inflight.pop(key, None)

    def fetch_many(self, sites: Sequence[SiteRecord], zoom: int) -> list[ImageAsset]:
        with ThreadPoolExecutor(max_workers=max(1, self.cfg.max_concurrency)) as pool:
            return list(pool.map(lambda s: self.fetch_image(s, zoom), sites))

    def _asset(self, site_id: str, zoom: int, rel_path: str) -> ImageAsset:
        key = cache_key(site_id, zoom, self.cfg.width, self.cfg.height)
        return ImageAsset(
            id=key,
            site_id=site_id,
            path=rel_path,
            width=self.cfg.width,
            height=self.cfg.height,
            zoom=zoom,
        )

    def _request_headers(self) -> dict[str, str]:
        if not self.cfg.auth_header:
            return {}
        name, _, value = self.cfg.auth_header.partition(":")
        return {name.strip(): value.strip()}

    def _fetch_remote(self, site: SiteRecord, zoom: int, key: str) -> ImageAsset:
        url = self.cfg.url_template.format(
            lon=site.point.lon,
            lat=site.point.lat,
            zoom=zoom,
            w=self.cfg.width,
            h=self.cfg.height,
        )
        response = None
        for attempt in range(self.cfg.max_retries + 1):
            self._limiter.acquire()
            response = self._http.get(url, headers=self._request_headers())
            if response.status_code == 429 or response.status_code >= 500:
                if attempt < self.cfg.max_retries:
                    self._sleep(self.cfg.backoff_base * self.cfg.backoff_factor**attempt)
                    continue
                if response.status_code == 429:
                    raise RateLimited(f"still throttled after {self.cfg.max_retries} retries: {url}")
                raise HttpError(response.status_code, url)
            break
        if response.status_code != 200:
            raise HttpError(response.status_code, url)

        content = response.content
        try:
            with Image.open(io.BytesIO(content)) as img:
                fmt = img.format
                img.verify()
        except (UnidentifiedImageError, OSError) as exc:
            raise DecodeError(f"response for {key} is not a decodable image: {exc}") from exc
        if fmt not in ("PNG", "JPEG"):
            raise DecodeError(f"unsupported image format {fmt!r} for {key}")

        ext = "png" if fmt == "PNG" else "jpg"
        rel_path = f"{site.id}/{zoom}_{self.cfg.width}x{self.cfg.height}.{ext}"
        abs_path = Path(self.cfg.cache_dir) / rel_path
        try:
            abs_path.parent.mkdir(parents=True, exist_ok=True)
            tmp = abs_path.with_suffix(abs_path.suffix + ".tmp")
            tmp.write_bytes(content)
            os.replace(tmp, abs_path)
        except OSError as exc:
            raise CacheWriteError(f"cannot write {abs_path}: {exc}") from exc

        with self._lock:
            self._index[key] = {"path": rel_path, "fetched_at": time.time()}
            self._save_index()
        return self._asset(site.id, zoom, rel_path)

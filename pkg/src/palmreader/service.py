"""HTTP front end: upload a palm photo, read back lines and report.

The API is JSON-first; the web UI is a static client of it. Results live
in an in-memory store under unguessable 128-bit ids until their TTL
lapses; an optional directory mirror survives restarts. Models, config,
and rules are loaded once at startup and never mutated, so request
handling shares no mutable state beyond the store.
"""

from __future__ import annotations

import asyncio
import json
import logging
import os
import re
import secrets
import threading
import time
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import FileResponse, JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from starlette.exceptions import HTTPException as StarletteHTTPException

from . import __version__
from .errors import BadImageError, PalmError
from .features import LineKind
from .imaging import encode_png
from .ml import load_model
from .pipeline import AnalysisResult, PipelineConfig, analyze, load_config
from .reading import RuleTable
from .synth import HandCategory

__all__ = ["ServiceConfig", "StoredResult", "ResultStore", "create_app"]

log = logging.getLogger("palmreader.service")

MAX_UPLOAD_BYTES_DEFAULT = 8 * 1024 * 1024
RESULT_TTL_DEFAULT = 3600.0


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    max_upload_bytes: int = MAX_UPLOAD_BYTES_DEFAULT
    result_ttl_seconds: float = RESULT_TTL_DEFAULT
    static_dir: str | None = None
    model_path: str | None = None
    config_path: str | None = None
    persist_dir: str | None = None

    def __post_init__(self):
        if self.max_upload_bytes <= 0:
            raise ValueError("max_upload_bytes must be positive")
        if self.result_ttl_seconds <= 0:
            raise ValueError("result_ttl_seconds must be positive")
        if not 1 <= self.port <= 65535:
            raise ValueError("port must be in [1, 65535]")

    @classmethod
    def from_env(cls, base: "ServiceConfig | None" = None) -> "ServiceConfig":
        base = base or cls()
        host = os.environ.get("PALMREADER_HOST", base.host)
        port = int(os.environ.get("PALMREADER_PORT", base.port))
        config_path = os.environ.get("PALMREADER_CONFIG", base.config_path)
        return ServiceConfig(
            host=host,
            port=port,
            max_upload_bytes=base.max_upload_bytes,
            result_ttl_seconds=base.result_ttl_seconds,
            static_dir=base.static_dir,
            model_path=base.model_path,
            config_path=config_path,
            persist_dir=base.persist_dir,
        )


@dataclass(frozen=True)
class StoredResult:
    result_id: str
    result: AnalysisResult | None  # None when revived from the disk mirror
    created_at: float
    json_bytes: bytes
    png_bytes: bytes


class ResultStore:
    """TTL-bounded result map; ids are 128-bit URL-safe tokens."""

    def __init__(self, ttl_seconds: float, clock=time.monotonic, persist_dir=None):
        if ttl_seconds <= 0:
            raise ValueError("ttl_seconds must be positive")
        self.ttl = ttl_seconds
        self.clock = clock
        self.persist_dir = Path(persist_dir) if persist_dir else None
        if self.persist_dir:
            self.persist_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._items: dict[str, StoredResult] = {}

    def new_id(self) -> str:
        return secrets.token_urlsafe(16)

    def put(self, result_id: str, result: AnalysisResult, json_bytes: bytes, png_bytes: bytes) -> None:
        with self._lock:
            if result_id in self._items:
                raise RuntimeError("result id collision")
            self._items[result_id] = StoredResult(
                result_id=result_id,
                result=result,
                created_at=self.clock(),
                json_bytes=json_bytes,
                png_bytes=png_bytes,
            )
        if self.persist_dir:
            (self.persist_dir / f"{result_id}.json").write_bytes(json_bytes)
            (self.persist_dir / f"{result_id}.png").write_bytes(png_bytes)

    def get(self, result_id: str) -> StoredResult | None:
        now = self.clock()
        with self._lock:
            item = self._items.get(result_id)
            if item is not None and now - item.created_at > self.ttl:
                del self._items[result_id]
                item = None
        if item is None:
            item = self._load_persisted(result_id)
        return item

    def _load_persisted(self, result_id: str) -> StoredResult | None:
        # fallback for restarts; TTL judged by file age
        if not self.persist_dir or not _SAFE_ID.fullmatch(result_id):
            return None
        jpath = self.persist_dir / f"{result_id}.json"
        ppath = self.persist_dir / f"{result_id}.png"
        if not (jpath.is_file() and ppath.is_file()):
            return None
        age = time.time() - jpath.stat().st_mtime
        if age > self.ttl:
            return None
        return StoredResult(
            result_id=result_id,
            result=None,
            created_at=self.clock(),
            json_bytes=jpath.read_bytes(),
            png_bytes=ppath.read_bytes(),
        )

    def sweep(self) -> int:
        now = self.clock()
        with self._lock:
            stale = [k for k, v in self._items.items() if now - v.created_at > self.ttl]
            for k in stale:
                del self._items[k]
        return len(stale)

    def __len__(self) -> int:
        with self._lock:
            return len(self._items)


_SAFE_ID = re.compile(r"[A-Za-z0-9_-]{1,64}")


def _error(status: int, error: str, detail=None) -> JSONResponse:
    body = {"error": error}
    if detail is not None:
        body["detail"] = detail
    return JSONResponse(body, status_code=status)


def _result_json(result_id: str, res: AnalysisResult) -> bytes:
    by_kind = {e.descriptor.kind: e for e in res.report.entries}
    lines = []
    for line in res.lines:
        desc = by_kind[line.kind].descriptor
        lines.append(
            {
                "kind": line.kind.label,
                "arc_length": line.arc_length,
                "depth": line.depth,
                "confidence": line.confidence,
                "length_class": desc.length_class.value,
                "shape_class": desc.shape_class.value,
            }
        )
    payload = {
        "id": result_id,
        "model": res.model_name,
        "lines": lines,
        "report": res.report.as_dict(),
        "annotated_url": f"/api/annotated/{result_id}.png",
        "timings": res.timings_ms,
    }
    return json.dumps(payload).encode("utf-8")


def create_app(
    service_cfg: ServiceConfig | None = None,
    pipeline_cfg: PipelineConfig | None = None,
    model=None,
    rules: RuleTable | None = None,
) -> FastAPI:
    """Build the application; a failed model load starts degraded, not dead."""
    service_cfg = service_cfg or ServiceConfig()

    load_error = None
    if pipeline_cfg is None:
        try:
            pipeline_cfg = (
                load_config(service_cfg.config_path) if service_cfg.config_path else PipelineConfig()
            )
        except PalmError as exc:
            pipeline_cfg = PipelineConfig()
            load_error = str(exc)

    if model is None and load_error is None:
        model_path = service_cfg.model_path or pipeline_cfg.forest_path
        if model_path is None:
            load_error = "no model path configured"
        else:
            try:
                model = load_model(model_path)
            except (PalmError, OSError) as exc:
                load_error = str(exc)

    if rules is None and load_error is None:
        try:
            rules = pipeline_cfg.rules()
        except PalmError as exc:
            load_error = str(exc)

    store = ResultStore(
        service_cfg.result_ttl_seconds, persist_dir=service_cfg.persist_dir
    )
    sweep_interval = min(service_cfg.result_ttl_seconds / 4, 60.0)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        async def sweeper():
            while True:
                await asyncio.sleep(sweep_interval)
                store.sweep()

        task = asyncio.get_running_loop().create_task(sweeper())
        try:
            yield
        finally:
            task.cancel()

    app = FastAPI(title="palmreader", version=__version__, lifespan=lifespan)
    app.state.store = store
    app.state.model = model
    app.state.load_error = load_error
    app.state.service_cfg = service_cfg
    app.state.pipeline_cfg = pipeline_cfg

    @app.exception_handler(StarletteHTTPException)
    async def http_error(request: Request, exc: StarletteHTTPException):
        if isinstance(exc.detail, dict) and "error" in exc.detail:
            return JSONResponse(exc.detail, status_code=exc.status_code)
        return _error(exc.status_code, str(exc.detail))

    @app.exception_handler(RequestValidationError)
    async def validation_error(request: Request, exc: RequestValidationError):
        return _error(400, "validation error", detail=str(exc.errors()[:3]))

    @app.exception_handler(Exception)
    async def internal_error(request: Request, exc: Exception):
        error_id = uuid.uuid4().hex[:12]
        log.exception("unhandled error %s on %s", error_id, request.url.path)
        return _error(500, "internal error", detail=error_id)

    @app.get("/health")
    def health():
        if model is None:
            return _error(503, "degraded", detail="model not loaded")
        return {
            "status": "ok",
            "model_loaded": True,
            "version": __version__,
            # clients pre-check file size against this before uploading
            "max_upload_bytes": service_cfg.max_upload_bytes,
        }

    @app.post("/api/analyze")
    def analyze_endpoint(
        image: UploadFile | None = File(None), category: str | None = Form(None)
    ):
        if model is None:
            return _error(503, "service degraded", detail=load_error)
        if image is None:
            return _error(400, "missing field", detail="image")
        if category is None:
            return _error(400, "missing field", detail="category")
        try:
            cat = HandCategory.from_label(category)
        except ValueError:
            return _error(400, "unknown category", detail="category")
        data = image.file.read(service_cfg.max_upload_bytes + 1)
        if len(data) > service_cfg.max_upload_bytes:
            return _error(413, "upload too large", detail=f"limit {service_cfg.max_upload_bytes} bytes")
        try:
            res = analyze(data, cat, model, pipeline_cfg, rules=rules)
        except BadImageError as exc:
            return _error(422, "bad image", detail=str(exc))
        png = encode_png(res.annotated)
        # serialize once; result GETs replay these exact bytes
        result_id = store.new_id()
        json_bytes = _result_json(result_id, res)
        store.put(result_id, res, json_bytes, png)
        return Response(content=json_bytes, media_type="application/json")

    @app.get("/api/result/{result_id}")
    def get_result(result_id: str):
        item = store.get(result_id)
        if item is None:
            return _error(404, "unknown or expired result id")
        return Response(content=item.json_bytes, media_type="application/json")

    @app.get("/api/annotated/{result_id}.png")
    def get_annotated(result_id: str):
        item = store.get(result_id)
        if item is None:
            return _error(404, "unknown or expired result id")
        return Response(content=item.png_bytes, media_type="image/png")

    static_dir = Path(service_cfg.static_dir) if service_cfg.static_dir else None
    if static_dir and static_dir.is_dir():
        assets = static_dir / "assets"
        if assets.is_dir():
            app.mount("/assets", StaticFiles(directory=assets), name="assets")

        @app.get("/", include_in_schema=False)
        def index():
            index_file = static_dir / "index.html"
            if not index_file.is_file():
                return _error(404, "ui not built")
            return FileResponse(index_file)

    else:

        @app.get("/", include_in_schema=False)
        def index_missing():
            return _error(404, "ui not built")

    return app

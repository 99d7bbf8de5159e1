"""HTTP classification service.

One approach is active per served bundle; artifacts are immutable after
load, so identical requests always produce identical responses. The body is
parsed by hand so malformed JSON and oversize batches map to 400 instead of
framework defaults.
"""

from __future__ import annotations

import json
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .net import load_bundle

MAX_BATCH = 10_000


def create_app(bundle_path, approach: str, tap: str | None = None) -> FastAPI:
    state = {"bundle": None}

    @asynccontextmanager
    async def _lifespan(_app):
        state["bundle"] = load_bundle(bundle_path)
        yield

    app = FastAPI(title="dgadetect", docs_url=None, redoc_url=None,
                  lifespan=_lifespan)

    @app.get("/v1/health")
    def health():
        bundle = state["bundle"]
        if bundle is None:
            return JSONResponse({"status": "loading"}, status_code=503)
        return {
            "status": "ok",
            "classes": len(bundle.classes),
            "approach": approach,
        }

    @app.post("/v1/classify")
    async def classify(request: Request):
        bundle = state["bundle"]
        if bundle is None:
            return JSONResponse({"error": "bundle not loaded"}, status_code=503)
        try:
            body = json.loads(await request.body())
        except (json.JSONDecodeError, UnicodeDecodeError):
            return JSONResponse({"error": "malformed JSON"}, status_code=400)
        if (
            not isinstance(body, dict)
            or not isinstance(body.get("domains"), list)
            or not all(isinstance(d, str) for d in body["domains"])
        ):
            return JSONResponse(
                {"error": 'body must be {"domains": [<strings>]}'},
                status_code=400,
            )
        domains = body["domains"]
        if len(domains) > MAX_BATCH:
            return JSONResponse(
                {"error": f"batch exceeds {MAX_BATCH} domains"}, status_code=400
            )

        from .cli import classify_raw

        results = classify_raw(bundle, approach, domains, tap=tap)
        status = 422 if any("error" in r for r in results) else 200
        return JSONResponse({"results": results}, status_code=status)

    return app

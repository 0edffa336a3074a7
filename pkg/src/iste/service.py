"""HTTP tile service: loads a frozen checkpoint plus a directory of images
and serves super-resolved tiles at arbitrary continuous scale.

Tiles are rendered with an 8-pixel LR context halo (cropped away after
inference) to suppress seams between adjacent tiles. Responses are lossless
PNG. A bounded worker gate limits concurrent inferences; excess requests
queue up to a limit and then get 503. An LRU cache keyed on the quantized
request geometry returns byte-identical bodies on hits.
"""

from __future__ import annotations

import hashlib
import io
import os
import threading
from collections import OrderedDict
from contextlib import asynccontextmanager
from pathlib import Path

import torch
from fastapi import FastAPI, HTTPException, Query, Response

from .data import load_corpus
from .errors import CorpusError
from .model import MAX_SCALE, MIN_SCALE, load_model
from .resample import bicubic_upscale

HALO = 8  # LR pixels of context on each side
SCALE_QUANTUM = 0.01
METHODS = ("iste", "bicubic")


def _round(x: float) -> int:
    import math

    return int(math.floor(x + 0.5))


class LruCache:
    def __init__(self, maxsize=256):
        self.maxsize = maxsize
        self._data = OrderedDict()
        self._lock = threading.Lock()

    def get(self, key):
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                return self._data[key]
        return None

    def put(self, key, value):
        with self._lock:
            self._data[key] = value
            self._data.move_to_end(key)
            while len(self._data) > self.maxsize:
                self._data.popitem(last=False)


class InferenceGate:
    """At most `workers` inferences in flight; up to `queue` callers wait."""

    def __init__(self, workers: int, queue: int = 32):
        self.workers = workers
        self.queue = queue
        self._active = 0
        self._waiting = 0
        self._cond = threading.Condition()

    def __enter__(self):
        with self._cond:
            if self._active >= self.workers:
                if self._waiting >= self.queue:
                    raise HTTPException(503, "inference queue full")
                self._waiting += 1
                try:
                    self._cond.wait_for(lambda: self._active < self.workers)
                finally:
                    self._waiting -= 1
            self._active += 1
        return self

    def __exit__(self, *exc):
        with self._cond:
            self._active -= 1
            self._cond.notify()
        return False


class Registry:
    """Frozen model + decoded source images; immutable after load()."""

    def __init__(self, checkpoint_path, images_dir):
        self.checkpoint_path = Path(checkpoint_path)
        self.images_dir = Path(images_dir)
        self.ready = False
        self.model = None
        self.images = OrderedDict()
        self.model_hash = ""

    def load(self):
        self.model = load_model(self.checkpoint_path)
        self.model.eval()
        for p in self.model.parameters():
            p.requires_grad_(False)
        digest = hashlib.sha256()
        for _, p in sorted(self.model.state_dict().items()):
            digest.update(p.numpy().tobytes())
        self.model_hash = digest.hexdigest()[:16]
        try:
            tensors = load_corpus(self.images_dir)
        except CorpusError:
            tensors = []
        names = sorted(p.stem for p in self.images_dir.glob("*.png")) if self.images_dir.is_dir() else []
        for name, t in zip(names, tensors):
            self.images[name] = t
        self.ready = True


def _encode_png(tensor: torch.Tensor) -> bytes:
    from PIL import Image

    arr = (tensor.permute(1, 2, 0).numpy() * 255.0).round().clip(0, 255).astype("uint8")
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def render_tile(registry: Registry, image_id, x, y, w, h, scale, method) -> bytes:
    image = registry.images[image_id]
    _, img_h, img_w = image.shape
    x = max(0, min(int(x), img_w - 1))
    y = max(0, min(int(y), img_h - 1))
    w = min(int(w), img_w - x)
    h = min(int(h), img_h - y)
    if w < 1 or h < 1:
        raise HTTPException(422, "degenerate region after clamping")
    x0, y0 = max(0, x - HALO), max(0, y - HALO)
    x1, y1 = min(img_w, x + w + HALO), min(img_h, y + h + HALO)
    crop = image[:, y0:y1, x0:x1]
    if method == "iste":
        pred = registry.model.predict_image(crop, scale)
    else:
        pred = bicubic_upscale(crop, scale).clamp(0.0, 1.0)
    out_h, out_w = _round(scale * h), _round(scale * w)
    oy = min(max(0, _round(scale * (y - y0))), pred.shape[-2] - out_h)
    ox = min(max(0, _round(scale * (x - x0))), pred.shape[-1] - out_w)
    return _encode_png(pred[:, oy : oy + out_h, ox : ox + out_w])


def create_app(
    checkpoint_path,
    images_dir,
    workers: int | None = None,
    queue: int = 32,
    cache_size: int = 256,
    cors_origin: str | None = None,
    frontend_dir=None,
    defer_load: bool = False,
) -> FastAPI:
    registry = Registry(checkpoint_path, images_dir)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if not defer_load and not registry.ready:
            registry.load()
        yield

    app = FastAPI(title="iste tile service", lifespan=lifespan)
    gate = InferenceGate(workers or os.cpu_count() or 1, queue)
    cache = LruCache(cache_size)
    app.state.registry = registry
    app.state.gate = gate
    app.state.cache = cache

    if cors_origin:
        from fastapi.middleware.cors import CORSMiddleware

        app.add_middleware(
            CORSMiddleware,
            allow_origins=[cors_origin],
            allow_methods=["GET"],
            allow_headers=["*"],
        )

    @app.get("/healthz")
    def healthz():
        if not registry.ready:
            return Response("loading", status_code=503, media_type="text/plain")
        return Response("ok", media_type="text/plain")

    @app.get("/v1/images")
    def list_images():
        if not registry.ready:
            raise HTTPException(503, "registry not loaded")
        return [
            {"image_id": name, "width": t.shape[2], "height": t.shape[1]}
            for name, t in registry.images.items()
        ]

    def _tile_common(image_id, x, y, w, h, scale, method):
        if not registry.ready:
            raise HTTPException(503, "registry not loaded")
        if method not in METHODS:
            raise HTTPException(422, f"unknown method {method!r}")
        if image_id not in registry.images:
            raise HTTPException(404, f"unknown image_id {image_id!r}")
        if not (MIN_SCALE <= scale <= MAX_SCALE):
            raise HTTPException(422, f"scale must be in [{MIN_SCALE}, {MAX_SCALE}]")
        if w < 1 or h < 1:
            raise HTTPException(422, "region extents must be positive")
        scale_q = _round(scale / SCALE_QUANTUM) * SCALE_QUANTUM
        key = (image_id, x, y, w, h, _round(scale / SCALE_QUANTUM), method)
        cached = cache.get(key)
        headers = {"X-Model-Hash": registry.model_hash}
        if cached is not None:
            headers["X-Cache"] = "hit"
            return Response(cached, media_type="image/png", headers=headers)
        with gate:
            body = render_tile(registry, image_id, x, y, w, h, scale_q, method)
        cache.put(key, body)
        headers["X-Cache"] = "miss"
        return Response(body, media_type="image/png", headers=headers)

    @app.get("/v1/tile")
    def tile(
        image_id: str,
        x: int = Query(...),
        y: int = Query(...),
        w: int = Query(...),
        h: int = Query(...),
        scale: float = Query(...),
    ):
        return _tile_common(image_id, x, y, w, h, scale, "iste")

    @app.get("/v1/compare")
    def compare(
        image_id: str,
        x: int = Query(...),
        y: int = Query(...),
        w: int = Query(...),
        h: int = Query(...),
        scale: float = Query(...),
        method: str = Query(...),
    ):
        return _tile_common(image_id, x, y, w, h, scale, method)

    if frontend_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=frontend_dir, html=True), name="viewer")

    return app

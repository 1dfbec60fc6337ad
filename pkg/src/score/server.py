"""HTTP service backing the annotation UI.

JSON API:
  GET  /api/cases                         -> [{case_id, K, labeled}]
  GET  /api/cases/{id}                    -> metadata + dims + stored labels
  GET  /api/cases/{id}/slice?axis=&index=&overlay= -> PNG
  POST /api/cases/{id}/labels             -> 200 / 404 / 422

Slices are windowed to the [p1, p99] intensity range in 8-bit gray;
masks overlay at 40% opacity with a fixed per-region color table.
Label submissions are validated before they are appended to the
manifest; writes are serialized, last write wins per case.  Static
assets (the UI bundle) are served from an optional directory.
"""

from __future__ import annotations

import io
import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

import numpy as np
from PIL import Image

from .labels import CaseRecord, WeakLabelSet, append_record, load_manifest, validate, with_labels
from .volume import read_header, read_masks, read_volume

REGION_COLORS = (
    (230, 60, 50), (60, 160, 60), (60, 90, 220), (230, 200, 40),
    (170, 70, 190), (60, 200, 200), (240, 140, 40), (150, 150, 150),
)
OVERLAY_ALPHA = 0.4

_MIME = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".png": "image/png",
    ".svg": "image/svg+xml",
    ".map": "application/json",
    ".ico": "image/x-icon",
}


class ManifestStore:
    """In-memory view of the manifest with serialized appends."""

    def __init__(self, manifest_path):
        self.path = Path(manifest_path)
        self.root = self.path.parent
        self._lock = threading.Lock()
        self._records = {r.case_id: r for r in load_manifest(self.path)}
        self._order = [r for r in self._records]

    def ids(self):
        return list(self._order)

    def get(self, case_id) -> CaseRecord | None:
        return self._records.get(case_id)

    def submit(self, case_id, labels: WeakLabelSet, annotator: str) -> CaseRecord:
        with self._lock:
            rec = self._records[case_id]
            updated = with_labels(rec, labels, annotator)
            append_record(self.path, updated)
            self._records[case_id] = updated
            return updated


class VolumeCache:
    def __init__(self, limit=8):
        self._limit = limit
        self._lock = threading.Lock()
        self._items: dict[str, object] = {}

    def get(self, key, loader):
        with self._lock:
            if key in self._items:
                return self._items[key]
        value = loader()
        with self._lock:
            if len(self._items) >= self._limit:
                self._items.pop(next(iter(self._items)))
            self._items[key] = value
        return value


def render_slice(img_data, masks, axis: str, index: int, overlay: bool) -> bytes:
    """One windowed grayscale slice as PNG, optionally with mask overlay."""
    ax = "xyz".index(axis)
    plane = np.take(img_data, index, axis=ax)
    lo, hi = np.percentile(img_data, (1, 99))
    if hi <= lo:
        hi = lo + 1
    gray = np.clip((plane.astype(np.float64) - lo) / (hi - lo), 0, 1)
    rgb = np.stack([gray, gray, gray], axis=-1)
    if overlay and masks is not None:
        for k in range(masks.shape[0]):
            m = np.take(masks[k], index, axis=ax).astype(bool)
            color = np.asarray(REGION_COLORS[k % len(REGION_COLORS)]) / 255.0
            rgb[m] = (1 - OVERLAY_ALPHA) * rgb[m] + OVERLAY_ALPHA * color
    # image rows run down the second grid axis of the plane
    arr = (np.clip(rgb, 0, 1) * 255).astype(np.uint8).transpose(1, 0, 2)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def _case_k(store: ManifestStore, rec: CaseRecord) -> int:
    return read_header(store.root / rec.init_masks).K


def make_handler(store: ManifestStore, cache: VolumeCache, assets_dir):
    assets = Path(assets_dir).resolve() if assets_dir else None

    class Handler(BaseHTTPRequestHandler):
        server_version = "score-annotator/1"

        def log_message(self, *args):  # tests stay quiet
            pass

        def _send(self, code, body: bytes, ctype="application/json"):
            self.send_response(code)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _json(self, code, obj):
            self._send(code, json.dumps(obj).encode("utf-8"))

        def do_GET(self):
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]
            try:
                if parts[:2] == ["api", "cases"]:
                    if len(parts) == 2:
                        return self._list_cases()
                    rec = store.get(parts[2])
                    if rec is None:
                        return self._json(404, {"error": f"unknown case {parts[2]}"})
                    if len(parts) == 3:
                        return self._case_meta(rec)
                    if len(parts) == 4 and parts[3] == "slice":
                        return self._slice(rec, parse_qs(url.query))
                    return self._json(404, {"error": "no such endpoint"})
                return self._static(url.path)
            except BrokenPipeError:
                pass
            except Exception as exc:  # keep the service alive
                self._json(500, {"error": str(exc)})

        def _list_cases(self):
            out = []
            for cid in store.ids():
                rec = store.get(cid)
                k = _case_k(store, rec)
                out.append({"case_id": cid, "K": k, "labeled": rec.labeled(k)})
            self._json(200, out)

        def _case_meta(self, rec):
            hdr = read_header(store.root / rec.image)
            k = _case_k(store, rec)
            labels = None
            if rec.labels is not None:
                labels = [{"k": i + 1, "q": q, "l": l} for i, (q, l) in
                          enumerate(zip(rec.labels.scores, rec.labels.error_labels))]
            self._json(200, {
                "case_id": rec.case_id, "K": k,
                "dims": list(hdr.dims), "spacing": list(hdr.spacing),
                "labeled": rec.labeled(k), "labels": labels,
                "annotator": rec.annotator, "timestamp": rec.timestamp,
            })

        def _slice(self, rec, query):
            axis = query.get("axis", ["z"])[0]
            if axis not in ("x", "y", "z"):
                return self._json(400, {"error": f"axis must be x, y or z, got {axis!r}"})
            try:
                index = int(query.get("index", ["0"])[0])
            except ValueError:
                return self._json(400, {"error": "index must be an integer"})
            overlay = query.get("overlay", ["1"])[0] not in ("0", "false")

            img = cache.get(f"img:{rec.case_id}",
                            lambda: read_volume(store.root / rec.image))
            if not 0 <= index < img.dims["xyz".index(axis)]:
                return self._json(404, {"error": f"slice {index} outside grid {img.dims}"})
            masks = None
            if overlay:
                masks = cache.get(f"masks:{rec.case_id}",
                                  lambda: read_masks(store.root / rec.init_masks)).masks
            png = render_slice(img.data, masks, axis, index, overlay)
            self._send(200, png, "image/png")

        def _static(self, path):
            if assets is None:
                return self._send(200, b"<!doctype html><title>score</title>"
                                       b"<p>No UI assets configured.</p>",
                                  "text/html; charset=utf-8")
            rel = path.lstrip("/") or "index.html"
            target = (assets / rel).resolve()
            if not str(target).startswith(str(assets)) or not target.is_file():
                if (assets / "index.html").is_file() and "." not in rel:
                    target = assets / "index.html"  # SPA fallback
                else:
                    return self._json(404, {"error": "not found"})
            ctype = _MIME.get(target.suffix, "application/octet-stream")
            self._send(200, target.read_bytes(), ctype)

        def do_POST(self):
            url = urlparse(self.path)
            parts = [p for p in url.path.split("/") if p]
            if len(parts) != 4 or parts[:2] != ["api", "cases"] or parts[3] != "labels":
                return self._json(404, {"error": "no such endpoint"})
            rec = store.get(parts[2])
            if rec is None:
                return self._json(404, {"error": f"unknown case {parts[2]}"})
            try:
                length = int(self.headers.get("Content-Length", "0"))
                body = json.loads(self.rfile.read(length) or b"{}")
            except (ValueError, json.JSONDecodeError):
                return self._json(422, {"errors": ["body is not valid JSON"]})

            items = body.get("labels")
            annotator = str(body.get("annotator", ""))
            k_expected = _case_k(store, rec)
            problems = []
            if not isinstance(items, list):
                problems.append("labels must be a list of {k, q, l}")
            else:
                ks = sorted(int(d.get("k", -1)) for d in items if isinstance(d, dict))
                if ks != list(range(1, k_expected + 1)):
                    problems.append(
                        f"labels must cover regions 1..{k_expected} exactly once, got {ks}")
            if problems:
                return self._json(422, {"errors": problems})

            by_k = sorted(items, key=lambda d: int(d["k"]))
            try:
                labels = WeakLabelSet(
                    scores=tuple(int(d["q"]) for d in by_k),
                    error_labels=tuple(int(d["l"]) for d in by_k),
                )
            except (KeyError, ValueError, TypeError):
                return self._json(422, {"errors": ["each label needs integer k, q, l"]})
            problems = validate(labels)
            if problems:
                return self._json(422, {"errors": problems})
            store.submit(rec.case_id, labels, annotator)
            self._json(200, {"ok": True, "case_id": rec.case_id})

    return Handler


class AnnotationServer:
    """Thin wrapper owning the HTTP server; usable from tests and the CLI."""

    def __init__(self, manifest_path, bind="127.0.0.1:8000", assets_dir=None):
        host, _, port = bind.partition(":")
        self.store = ManifestStore(manifest_path)
        handler = make_handler(self.store, VolumeCache(), assets_dir)
        self.httpd = ThreadingHTTPServer((host or "127.0.0.1", int(port or "8000")), handler)

    @property
    def address(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def serve_forever(self):
        self.httpd.serve_forever()

    def start_background(self):
        t = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        t.start()
        return t

    def shutdown(self):
        self.httpd.shutdown()
        self.httpd.server_close()


def serve(manifest_path, bind="127.0.0.1:8000", assets_dir=None):
    server = AnnotationServer(manifest_path, bind, assets_dir)
    print(f"serving {manifest_path} at {server.address}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()

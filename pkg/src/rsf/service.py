"""HTTP preview and editing service behind the browser editor.

Sessions live in memory (optionally mirrored to a directory): the source
image, the current recipe, and a bounded undo stack.  Previews render at
a capped resolution for latency; export renders full size.  Preview
rendering is pure in (image, recipe, size), so identical requests return
byte-identical PNGs.

Endpoints (errors are JSON {code, message, field?}):
  POST  /sessions                       multipart: image, masks?, recipe?,
                                        palette_k?, auto_fit?, target?
  GET   /sessions/{id}/preview?rev=     current preview PNG
  PATCH /sessions/{id}/recipe           {patches: [{layer, kind, theta} |
                                         {layer, sigma}]}
  GET   /sessions/{id}/masks?full=      mask thumbnails (or full size)
  GET   /sessions/{id}/recipe           recipe document + mask names
  POST  /sessions/{id}/undo             pop the undo stack
  GET   /sessions/{id}/export?full=1    rendered PNG, full or preview size
"""

from __future__ import annotations

import base64
import io
import json
import secrets
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, File, Form, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, Response
from PIL import Image as PILImage

from . import imageio
from .filters import SHIFT_KINDS, TIED_KINDS, FilterArg, FilterKind
from .fit import FitConfig, FitError, fit
from .imageio import ImageFormatError
from .palette import extract_palette, palette_to_masks
from .recipe import (
    GLOBAL_MASK,
    Layer,
    Recipe,
    RecipeError,
    quantize_mask,
    recipe_from_json,
    recipe_to_json,
)
from .render import render
from .resample import bilinear_resize, preview_scale

DEFAULT_PREVIEW_CAP = 480
DEFAULT_MAX_PIXELS = 24_000_000
UNDO_LIMIT = 64
THUMB_CAP = 160


class ApiError(Exception):
    def __init__(self, status: int, message: str, field_name: str | None = None):
        super().__init__(message)
        self.status = status
        self.message = message
        self.field = field_name

    def response(self) -> JSONResponse:
        body = {"code": self.status, "message": self.message}
        if self.field:
            body["field"] = self.field
        return JSONResponse(status_code=self.status, content=body)


@dataclass
class Session:
    id: str
    image: np.ndarray
    preview_image: np.ndarray
    recipe: Recipe
    revision: int = 0
    undo_stack: list[Recipe] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)

    def push_undo(self) -> None:
        self.undo_stack.append(self.recipe)
        if len(self.undo_stack) > UNDO_LIMIT:
            self.undo_stack.pop(0)


def identity_recipe(
    masks: list[np.ndarray],
    shape: tuple[int, int],
    names: list[str] | None = None,
) -> Recipe:
    """All-zero knobs: one layer per mask with the tied filter set, plus a
    global shift layer.  Without masks a single all-ones region is used so
    non-shift sliders still exist (stored tiny; constants resize exactly)."""
    if not masks:
        masks = [np.ones((min(8, shape[0]), min(8, shape[1])))]
    layers = [
        Layer(
            args=[FilterArg(kind, 0.0) for kind in TIED_KINDS],
            mask=mask,
            sigma=0.0,
            name=(names[i] if names and i < len(names) else f"mask_{i:02d}"),
        )
        for i, mask in enumerate(masks)
    ]
    layers.append(Layer(args=[FilterArg(k, 0.0) for k in SHIFT_KINDS], mask=None))
    return Recipe(layers=layers)


class SessionStore:
    def __init__(self, root: str | None = None, preview_cap: int = DEFAULT_PREVIEW_CAP):
        self.sessions: dict[str, Session] = {}
        self.lock = threading.Lock()
        self.preview_cap = preview_cap
        self.root = Path(root) if root else None
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            self._restore()

    def add(self, session: Session) -> None:
        with self.lock:
            self.sessions[session.id] = session
        self.persist(session)

    def get(self, session_id: str) -> Session:
        with self.lock:
            session = self.sessions.get(session_id)
        if session is None:
            raise ApiError(404, f"unknown session {session_id!r}")
        return session

    def persist(self, session: Session) -> None:
        if self.root is None:
            return
        sdir = self.root / session.id
        sdir.mkdir(parents=True, exist_ok=True)
        imageio.save_image(session.image, sdir / "image.png")
        from .recipe import save_recipe

        save_recipe(session.recipe, sdir / "recipe.json")
        imageio.write_text_atomic(
            json.dumps({"revision": session.revision}) + "\n", sdir / "meta.json"
        )

    def _restore(self) -> None:
        from .recipe import load_recipe

        for sdir in sorted(self.root.iterdir()):
            image_path = sdir / "image.png"
            recipe_path = sdir / "recipe.json"
            if not (sdir.is_dir() and image_path.exists() and recipe_path.exists()):
                continue
            try:
                image = imageio.load_image(image_path)
                recipe = load_recipe(recipe_path)
                meta = json.loads((sdir / "meta.json").read_text())
                revision = int(meta.get("revision", 0))
            except (ImageFormatError, RecipeError, OSError, ValueError):
                continue  # skip unreadable session dirs rather than fail startup
            h, w = image.shape[:2]
            ph, pw = preview_scale(h, w, self.preview_cap)
            self.sessions[sdir.name] = Session(
                id=sdir.name,
                image=image,
                preview_image=np.clip(bilinear_resize(image, ph, pw), 0.0, 1.0),
                recipe=recipe,
                revision=revision,
            )


def _render_preview_png(session: Session) -> bytes:
    return imageio.encode_png(render(session.preview_image, session.recipe))


def _session_summary(session: Session) -> dict:
    h, w = session.image.shape[:2]
    ph, pw = session.preview_image.shape[:2]
    mask_names = [
        (layer.name or f"mask_{i:02d}") if layer.mask is not None else GLOBAL_MASK
        for i, layer in enumerate(session.recipe.layers)
    ]
    return {
        "id": session.id,
        "revision": session.revision,
        "width": w,
        "height": h,
        "preview_width": pw,
        "preview_height": ph,
        "masks": mask_names,
        "recipe": recipe_to_json(session.recipe),
    }


def create_app(
    root: str | None = None,
    preview_cap: int = DEFAULT_PREVIEW_CAP,
    max_pixels: int = DEFAULT_MAX_PIXELS,
) -> FastAPI:
    app = FastAPI(title="rsf edit service")
    # the browser editor may be served from any static host on localhost
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=["X-Revision"],
    )
    store = SessionStore(root, preview_cap)
    app.state.store = store

    @app.exception_handler(ApiError)
    async def _api_error(_req: Request, exc: ApiError):
        return exc.response()

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_req: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        parts = [
            str(p) for p in first.get("loc", [])
            if p != "body" and not isinstance(p, int)
        ]
        return ApiError(
            422, first.get("msg", "invalid request"), ".".join(parts) or None
        ).response()

    def decode_upload(data: bytes, field_name: str) -> np.ndarray:
        try:
            img = imageio.load_image_bytes(data, field_name)
        except ImageFormatError as exc:
            raise ApiError(400, str(exc), field_name)
        if img.shape[0] * img.shape[1] > max_pixels:
            raise ApiError(
                413,
                f"image has {img.shape[0] * img.shape[1]} pixels, "
                f"limit is {max_pixels}",
                field_name,
            )
        return img

    @app.post("/sessions")
    def create_session(
        image: UploadFile = File(...),
        masks: list[UploadFile] = File(default=[]),
        recipe: str | None = Form(default=None),
        palette_k: int | None = Form(default=None),
        auto_fit: bool = Form(default=False),
        target: UploadFile | None = File(default=None),
        fit_iters: int = Form(default=500),
        fit_lr: float = Form(default=0.05),
    ):
        img = decode_upload(image.file.read(), "image")
        mask_arrays: list[np.ndarray] = []
        named: dict[str, np.ndarray] = {}
        for i, up in enumerate(masks):
            data = up.file.read()
            try:
                with PILImage.open(io.BytesIO(data)) as pil:
                    pil.load()
                    if "A" in pil.getbands():
                        raise ApiError(400, "mask uploads may not carry alpha", "masks")
                    arr = np.asarray(pil.convert("L"), dtype=np.float64) / 255.0
            except ApiError:
                raise
            except Exception as exc:
                raise ApiError(400, f"masks[{i}]: cannot decode ({exc})", "masks")
            arr = quantize_mask(arr)
            mask_arrays.append(arr)
            named[up.filename or f"mask_{i:02d}.png"] = arr
        if palette_k:
            if mask_arrays:
                raise ApiError(422, "palette_k conflicts with uploaded masks", "palette_k")
            try:
                pal = extract_palette(img, palette_k, seed=0)
            except ValueError as exc:
                raise ApiError(422, str(exc), "palette_k")
            mask_arrays = [quantize_mask(m) for m in palette_to_masks(img, pal)]
            named = {f"mask_{i:02d}.png": m for i, m in enumerate(mask_arrays)}

        if recipe is not None:
            try:
                doc = json.loads(recipe)
            except json.JSONDecodeError as exc:
                raise ApiError(422, f"recipe is not valid JSON ({exc})", "recipe")
            try:
                rec = recipe_from_json(doc, mask_loader=lambda ref: named[ref])
            except KeyError as exc:
                raise ApiError(422, f"recipe references unknown mask {exc}", "recipe")
            except RecipeError as exc:
                raise ApiError(422, str(exc), "recipe")
        elif auto_fit:
            if target is None:
                raise ApiError(422, "auto_fit requires a target upload", "target")
            tgt = decode_upload(target.file.read(), "target")
            if tgt.shape != img.shape:
                raise ApiError(422, "target size must match image", "target")
            fit_masks = mask_arrays or None
            if fit_masks is None:
                pal = extract_palette(img, 3, seed=0)
                fit_masks = [quantize_mask(m) for m in palette_to_masks(img, pal)]
            try:
                report = fit(
                    img, tgt, fit_masks,
                    FitConfig(lr=fit_lr, iterations=fit_iters, seed=0),
                )
            except FitError as exc:
                raise ApiError(422, str(exc), "auto_fit")
            rec = report.recipe
        else:
            rec = identity_recipe(
                mask_arrays, img.shape[:2], [Path(n).stem for n in named]
            )

        h, w = img.shape[:2]
        ph, pw = preview_scale(h, w, preview_cap)
        session = Session(
            id=secrets.token_hex(8),
            image=img,
            preview_image=np.clip(bilinear_resize(img, ph, pw), 0.0, 1.0),
            recipe=rec,
        )
        store.add(session)
        body = _session_summary(session)
        body["preview_png_base64"] = base64.b64encode(
            _render_preview_png(session)
        ).decode("ascii")
        return body

    @app.get("/sessions/{session_id}/preview")
    def get_preview(session_id: str, rev: int | None = None):
        session = store.get(session_id)
        with session.lock:
            if rev is not None and rev != session.revision:
                raise ApiError(
                    409, f"revision {rev} is stale (current {session.revision})", "rev"
                )
            png = _render_preview_png(session)
            headers = {"X-Revision": str(session.revision)}
        return Response(content=png, media_type="image/png", headers=headers)

    @app.patch("/sessions/{session_id}/recipe")
    def patch_recipe(session_id: str, body: dict):
        session = store.get(session_id)
        patches = body.get("patches") if isinstance(body, dict) else None
        if not isinstance(patches, list) or not patches:
            raise ApiError(422, "body must carry a non-empty 'patches' list", "patches")
        with session.lock:
            layers = [
                Layer(args=list(l.args), mask=l.mask, sigma=l.sigma, name=l.name)
                for l in session.recipe.layers
            ]
            for i, patch in enumerate(patches):
                if not isinstance(patch, dict):
                    raise ApiError(422, f"patches[{i}] must be an object", "patches")
                idx = patch.get("layer")
                if not isinstance(idx, int) or not (0 <= idx < len(layers)):
                    raise ApiError(422, f"patches[{i}].layer: bad index {idx!r}", "layer")
                layer = layers[idx]
                if "sigma" in patch:
                    extra = set(patch) - {"layer", "sigma"}
                    if extra:
                        raise ApiError(
                            422, f"patches[{i}].{sorted(extra)[0]}: unknown field",
                            "patches",
                        )
                    sigma = patch["sigma"]
                    if not isinstance(sigma, (int, float)) or not (
                        np.isfinite(sigma) and sigma >= 0
                    ):
                        raise ApiError(
                            422, f"patches[{i}].sigma: must be >= 0", "sigma"
                        )
                    layers[idx] = Layer(
                        args=layer.args, mask=layer.mask, sigma=float(sigma),
                        name=layer.name,
                    )
                    continue
                extra = set(patch) - {"layer", "kind", "theta"}
                if extra:
                    raise ApiError(
                        422, f"patches[{i}].{sorted(extra)[0]}: unknown field", "patches"
                    )
                try:
                    kind = FilterKind(patch.get("kind"))
                except ValueError:
                    raise ApiError(
                        422, f"patches[{i}].kind: unknown kind {patch.get('kind')!r}",
                        "kind",
                    )
                theta = patch.get("theta")
                if not isinstance(theta, (int, float)) or not np.isfinite(theta):
                    raise ApiError(422, f"patches[{i}].theta: not a number", "theta")
                arg_index = next(
                    (j for j, a in enumerate(layer.args) if a.kind is kind), None
                )
                if arg_index is None:
                    raise ApiError(
                        422,
                        f"patches[{i}].kind: layer {idx} has no {kind.value} filter",
                        "kind",
                    )
                bound = layer.args[arg_index].bound
                if abs(theta) > bound:
                    raise ApiError(
                        422,
                        f"patches[{i}].theta: {theta} outside [-{bound}, {bound}]",
                        "theta",
                    )
                new_args = list(layer.args)
                new_args[arg_index] = FilterArg(kind, float(theta), bound=bound)
                layers[idx] = Layer(
                    args=new_args, mask=layer.mask, sigma=layer.sigma, name=layer.name
                )
                layer = layers[idx]
            session.push_undo()
            session.recipe = Recipe(layers=layers, constants=session.recipe.constants)
            session.revision += 1
            png = _render_preview_png(session)
            revision = session.revision
        store.persist(session)
        return {
            "revision": revision,
            "preview_png_base64": base64.b64encode(png).decode("ascii"),
        }

    @app.get("/sessions/{session_id}/masks")
    def get_masks(session_id: str, full: int = 0):
        session = store.get(session_id)
        with session.lock:
            out = []
            for i, layer in enumerate(session.recipe.layers):
                if layer.mask is None:
                    out.append({"index": i, "name": GLOBAL_MASK})
                    continue
                mask = layer.mask
                if not full:
                    th, tw = preview_scale(mask.shape[0], mask.shape[1], THUMB_CAP)
                    mask = np.clip(bilinear_resize(mask, th, tw), 0.0, 1.0)
                out.append(
                    {
                        "index": i,
                        "name": (layer.name or f"mask_{i:02d}") + ".png",
                        "width": mask.shape[1],
                        "height": mask.shape[0],
                        "png_base64": base64.b64encode(
                            imageio.encode_mask_png(mask)
                        ).decode("ascii"),
                    }
                )
        return {"masks": out}

    @app.get("/sessions/{session_id}/recipe")
    def get_recipe(session_id: str):
        session = store.get(session_id)
        with session.lock:
            return {
                "revision": session.revision,
                "recipe": recipe_to_json(session.recipe),
            }

    @app.post("/sessions/{session_id}/undo")
    def undo(session_id: str):
        session = store.get(session_id)
        with session.lock:
            if not session.undo_stack:
                raise ApiError(409, "nothing to undo")
            session.recipe = session.undo_stack.pop()
            session.revision += 1
            png = _render_preview_png(session)
            revision = session.revision
        store.persist(session)
        return {
            "revision": revision,
            "preview_png_base64": base64.b64encode(png).decode("ascii"),
        }

    @app.get("/sessions/{session_id}/export")
    def export(session_id: str, full: int = 0):
        session = store.get(session_id)
        with session.lock:
            source = session.image if full else session.preview_image
            png = imageio.encode_png(render(source, session.recipe))
            headers = {"X-Revision": str(session.revision)}
        return Response(content=png, media_type="image/png", headers=headers)

    return app

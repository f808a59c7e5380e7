"""PNG/JPEG decode and encode for images and grayscale masks.

8-bit only.  Decoded values are v/255 as float64; images with an alpha
channel are rejected rather than silently flattened.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .color import require_image


class ImageFormatError(ValueError):
    """Unsupported or malformed image data."""


def _reject_alpha(pil: PILImage.Image, source: str) -> None:
    if "A" in pil.getbands() or "transparency" in pil.info:
        raise ImageFormatError(
            f"{source}: alpha channels are not supported (mode {pil.mode})"
        )


def decode_image(pil: PILImage.Image, source: str = "image") -> np.ndarray:
    """PIL image -> float64 (H, W, 3) in [0, 1]."""
    _reject_alpha(pil, source)
    if pil.mode != "RGB":
        pil = pil.convert("RGB")
    return np.asarray(pil, dtype=np.float64) / 255.0


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Load an 8-bit PNG or JPEG as a float image."""
    path = Path(path)
    try:
        with PILImage.open(path) as pil:
            return decode_image(pil, str(path))
    except FileNotFoundError:
        raise
    except ImageFormatError:
        raise
    except Exception as exc:  # PIL raises a zoo of types for bad files
        raise ImageFormatError(f"{path}: cannot decode image ({exc})") from exc


def load_image_bytes(data: bytes, source: str = "upload") -> np.ndarray:
    """Decode raw PNG/JPEG bytes."""
    import io

    try:
        with PILImage.open(io.BytesIO(data)) as pil:
            pil.load()
            return decode_image(pil, source)
    except ImageFormatError:
        raise
    except Exception as exc:
        raise ImageFormatError(f"{source}: cannot decode image ({exc})") from exc


def to_uint8(img: np.ndarray) -> np.ndarray:
    arr = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    return np.round(arr * 255.0).astype(np.uint8)


def encode_png(img: np.ndarray) -> bytes:
    """Encode a float image to PNG bytes (deterministic for equal pixels)."""
    import io

    arr = to_uint8(require_image(img))
    buf = io.BytesIO()
    PILImage.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_image(img: np.ndarray, path: str | os.PathLike) -> None:
    """Save a float image as 8-bit PNG or JPEG, atomically (tmp + rename)."""
    path = Path(path)
    arr = to_uint8(require_image(img))
    suffix = path.suffix.lower()
    if suffix in (".jpg", ".jpeg"):
        fmt = "JPEG"
    elif suffix == ".png":
        fmt = "PNG"
    else:
        raise ImageFormatError(f"{path}: unsupported output format {suffix!r}")
    _atomic_pil_save(PILImage.fromarray(arr, mode="RGB"), path, fmt)


def load_mask(path: str | os.PathLike) -> np.ndarray:
    """Load an 8-bit grayscale PNG as a float64 (H, W) mask in [0, 1]."""
    path = Path(path)
    try:
        with PILImage.open(path) as pil:
            _reject_alpha(pil, str(path))
            if pil.mode != "L":
                pil = pil.convert("L")
            return np.asarray(pil, dtype=np.float64) / 255.0
    except FileNotFoundError:
        raise
    except ImageFormatError:
        raise
    except Exception as exc:
        raise ImageFormatError(f"{path}: cannot decode mask ({exc})") from exc


def encode_mask_png(mask: np.ndarray) -> bytes:
    import io

    arr = np.clip(np.asarray(mask, dtype=np.float64), 0.0, 1.0)
    if arr.ndim != 2:
        raise ImageFormatError(f"mask must be 2-D, got shape {arr.shape}")
    buf = io.BytesIO()
    PILImage.fromarray(np.round(arr * 255.0).astype(np.uint8), mode="L").save(
        buf, format="PNG"
    )
    return buf.getvalue()


def save_mask(mask: np.ndarray, path: str | os.PathLike) -> None:
    """Save an (H, W) mask as 8-bit grayscale PNG, atomically."""
    path = Path(path)
    arr = np.clip(np.asarray(mask, dtype=np.float64), 0.0, 1.0)
    if arr.ndim != 2:
        raise ImageFormatError(f"mask must be 2-D, got shape {arr.shape}")
    pil = PILImage.fromarray(np.round(arr * 255.0).astype(np.uint8), mode="L")
    _atomic_pil_save(pil, path, "PNG")


def _atomic_pil_save(pil: PILImage.Image, path: Path, fmt: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=path.suffix)
    try:
        with os.fdopen(fd, "wb") as fh:
            pil.save(fh, format=fmt)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_bytes_atomic(data: bytes, path: str | os.PathLike) -> None:
    """Write arbitrary bytes with the tmp-file + rename pattern."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=path.suffix)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text_atomic(text: str, path: str | os.PathLike) -> None:
    write_bytes_atomic(text.encode("utf-8"), path)

"""Render identities to binary visual prompts (dark creases on white).

Images are 2-D ``uint8`` arrays indexed ``[row, col]``; pixel centers sit at
integer coordinates with ``y`` pointing down.
"""
from __future__ import annotations

import hashlib
import io
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ValidationError
from .geometry import N_ROWS, IdentityRecord, curve_polyline

FOREGROUND = 0
BACKGROUND = 255


@dataclass(frozen=True)
class CanvasConfig:
    width: int = 256
    height: int = 256
    margin: int = 8
    stroke_thickness: int = 3
    samples_per_curve: int = 256

    def __post_init__(self):
        if self.width - 2 * self.margin <= 0 or self.height - 2 * self.margin <= 0:
            raise ValidationError("canvas drawable area must be positive")
        if self.margin < 0:
            raise ValidationError("margin must be non-negative")
        if self.stroke_thickness < 1:
            raise ValidationError("stroke thickness must be >= 1")
        if self.samples_per_curve < 64:
            raise ValidationError("samples_per_curve must be >= 64")

    def to_dict(self) -> dict:
        return asdict(self)

    def grid_to_pixel(self, pts: np.ndarray) -> np.ndarray:
        """Map grid coordinates ``[0, 6]^2`` affinely onto the drawable area."""
        pts = np.asarray(pts, dtype=float)
        sx = (self.width - 2 * self.margin) / N_ROWS
        sy = (self.height - 2 * self.margin) / N_ROWS
        return np.column_stack([self.margin + pts[:, 0] * sx, self.margin + pts[:, 1] * sy])


def blank(width: int, height: int, value: int = BACKGROUND) -> np.ndarray:
    return np.full((height, width), value, dtype=np.uint8)


def _densify(points: np.ndarray, max_step: float = 1.0) -> np.ndarray:
    # Split segments so none is longer than max_step; the union is unchanged.
    seg = np.diff(points, axis=0)
    n_sub = np.maximum(1, np.ceil(np.linalg.norm(seg, axis=1) / max_step)).astype(int)
    if np.all(n_sub == 1):
        return points
    out = [points[:1]]
    for a, d, k in zip(points[:-1], seg, n_sub):
        out.append(a + d * (np.arange(1, k + 1)[:, None] / k))
    return np.concatenate(out)


def draw_polyline(image: np.ndarray, points, thickness: float, value: int = FOREGROUND) -> None:
    """Stroke a polyline in place.

    Sets every pixel whose center lies within ``thickness / 2`` of the
    polyline; pixels outside the image are skipped.
    """
    if thickness < 1:
        raise ValidationError("thickness must be >= 1")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return
    if len(pts) == 1:
        pts = np.vstack([pts, pts])
    pts = _densify(pts)
    radius = thickness / 2.0
    a, b = pts[:-1], pts[1:]
    lo = np.floor(np.minimum(a, b) - radius).astype(int)
    side = int(np.ceil(1.0 + 2 * radius)) + 2
    off = np.arange(side)
    # candidate pixel grid per segment: (n_seg, side, side)
    px = lo[:, 0, None, None] + off[None, None, :]
    py = lo[:, 1, None, None] + off[None, :, None]
    d = (b - a)[:, None, None, :]
    rel = np.stack(np.broadcast_arrays(px - a[:, 0, None, None], py - a[:, 1, None, None]), axis=-1)
    num = np.sum(rel * d, axis=-1)
    dd = np.broadcast_to(np.sum(d * d, axis=-1), num.shape)
    t = np.divide(num, dd, out=np.zeros(num.shape), where=dd > 0)
    t = np.clip(t, 0.0, 1.0)
    diff = rel - t[..., None] * d
    hit = np.sum(diff * diff, axis=-1) <= radius * radius
    px, py = np.broadcast_arrays(px, py)
    xs, ys = px[hit], py[hit]
    h, w = image.shape
    keep = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    image[ys[keep], xs[keep]] = value


def identity_polylines(identity: IdentityRecord, canvas: CanvasConfig) -> list[np.ndarray]:
    """Pixel-space polylines, one per crease."""
    return [canvas.grid_to_pixel(curve_polyline(c, canvas.samples_per_curve)) for c in identity.curves]


def render_identity(identity: IdentityRecord, canvas: CanvasConfig = CanvasConfig()) -> np.ndarray:
    img = blank(canvas.width, canvas.height)
    for line in identity_polylines(identity, canvas):
        draw_polyline(img, line, canvas.stroke_thickness, FOREGROUND)
    return img


def is_binary(img: np.ndarray) -> bool:
    return bool(np.all((img == 0) | (img == 255)))


def encode_png(img: np.ndarray) -> bytes:
    if img.dtype != np.uint8 or img.ndim != 2:
        raise ValidationError("expected a 2-D uint8 image")
    buf = io.BytesIO()
    Image.fromarray(img, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def write_png(img: np.ndarray, path: str | Path) -> str:
    """Write an 8-bit grayscale PNG and return the SHA-256 of its bytes."""
    data = encode_png(img)
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def read_gray(path: str | Path) -> np.ndarray:
    """Load any image Pillow understands as 8-bit grayscale."""
    with Image.open(path) as im:
        if im.mode != "L":
            im = im.convert("L")
        return np.array(im, dtype=np.uint8)

"""Visual prompt augmentations.

A frozen registry of 14 named augmentations used to make mated samples
from one rendered prompt. All of them take and return binary images
(creases 0 on a 255 background) of unchanged size. Geometric warps sample
bilinearly and re-binarize at 127.5; uncovered regions become background.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

import numpy as np
from scipy import ndimage

from .edgeproc import dilate, erode
from .errors import NumericalError, ValidationError

KINDS = (
    "dropout", "elastic", "mesh_affine", "perspective", "rotate", "scale",
    "translate", "shear", "morph_thicken", "morph_thin", "noise_rethreshold",
)
REBINARIZE_AT = 127.5


@dataclass(frozen=True)
class AugmentationSpec:
    """A named augmentation.

    ``params`` values are either scalars or ``[lo, hi]`` ranges; ranges are
    drawn uniformly from the rng when the augmentation is applied.
    """

    name: str
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown augmentation kind {self.kind!r}")

    def with_params(self, **params) -> "AugmentationSpec":
        return replace(self, params={**self.params, **params})

    def to_dict(self) -> dict:
        return {"name": self.name, "kind": self.kind,
                "params": {k: list(v) if isinstance(v, (list, tuple)) else v for k, v in self.params.items()}}


_REGISTRY = (
    AugmentationSpec("dropout_small", "dropout", {"patch_frac": 0.06, "n_patches": 4}),
    AugmentationSpec("dropout_large", "dropout", {"patch_frac": 0.12, "n_patches": 3}),
    AugmentationSpec("elastic_mild", "elastic", {"alpha": [40.0, 60.0], "sigma": 6.0}),
    AugmentationSpec("elastic_strong", "elastic", {"alpha": [100.0, 140.0], "sigma": 8.0}),
    AugmentationSpec("mesh_mild", "mesh_affine", {"lattice_n": 4, "jitter": [3.0, 6.0]}),
    AugmentationSpec("mesh_strong", "mesh_affine", {"lattice_n": 5, "jitter": [6.0, 9.0]}),
    AugmentationSpec("perspective_mild", "perspective", {"corner_jitter_frac": 0.015}),
    AugmentationSpec("perspective_strong", "perspective", {"corner_jitter_frac": 0.025}),
    AugmentationSpec("rotate_pm5", "rotate", {"angle_deg": [-5.0, 5.0]}),
    AugmentationSpec("scale_95_105", "scale", {"factor": [0.95, 1.05]}),
    # vertical shift capped at 2%: larger shifts move whole creases off their stroke band
    AugmentationSpec("translate_3pct", "translate", {"frac_x": [-0.03, 0.03], "frac_y": [-0.02, 0.02]}),
    AugmentationSpec("shear_5deg", "shear", {"angle_deg": [-5.0, 5.0]}),
    AugmentationSpec("morph_thicken", "morph_thicken", {"kernel": 3, "iterations": 2}),
    # speckle mimics the skin texture left in real self-quotient edge maps
    AugmentationSpec("noise_rethreshold", "noise_rethreshold", {"blur_sigma": 1.0, "noise_std": [50.0, 70.0]}),
)


def list_augmentations() -> list[AugmentationSpec]:
    return list(_REGISTRY)


def get_augmentation(name: str) -> AugmentationSpec:
    for spec in _REGISTRY:
        if spec.name == name:
            return spec
    raise ValidationError(f"unknown augmentation {name!r}")


def registry_json(specs=None) -> str:
    return json.dumps([s.to_dict() for s in (specs or _REGISTRY)])


def _check(img) -> np.ndarray:
    a = np.asarray(img)
    if a.ndim != 2:
        raise ValidationError(f"expected a 2-D image, got shape {a.shape}")
    if not np.all((a == 0) | (a == 255)):
        raise ValidationError("augmentations expect a binary {0, 255} image")
    return a.astype(np.uint8)


def _draw(rng: np.random.Generator, value) -> float:
    if isinstance(value, (list, tuple)):
        lo, hi = value
        return float(rng.uniform(lo, hi)) if hi > lo else float(lo)
    return float(value)


def _rebinarize(v: np.ndarray) -> np.ndarray:
    return np.where(v > REBINARIZE_AT, 255, 0).astype(np.uint8)


def remap(img: np.ndarray, src_x: np.ndarray, src_y: np.ndarray) -> np.ndarray:
    """Backward-map: output pixel ``(y, x)`` reads the input at ``(src_y, src_x)``."""
    v = ndimage.map_coordinates(img.astype(np.float64), [src_y, src_x], order=1,
                                mode="constant", cval=255.0)
    return _rebinarize(v)


def _pixel_grid(shape):
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    return xx.astype(np.float64), yy.astype(np.float64)


def affine_warp(img, matrix: np.ndarray) -> np.ndarray:
    """Apply a forward 3x3 affine (or projective) map in pixel coordinates."""
    a = _check(img)
    inv = np.linalg.inv(np.asarray(matrix, dtype=float))
    xx, yy = _pixel_grid(a.shape)
    pts = np.stack([xx.ravel(), yy.ravel(), np.ones(xx.size)])
    src = inv @ pts
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = (src[0] / src[2]).reshape(a.shape)
        sy = (src[1] / src[2]).reshape(a.shape)
    bad = ~np.isfinite(sx) | ~np.isfinite(sy)
    sx[bad] = -10.0
    sy[bad] = -10.0
    return remap(a, sx, sy)


def _about_center(shape, linear: np.ndarray, shift=(0.0, 0.0)) -> np.ndarray:
    h, w = shape
    c = np.array([(w - 1) / 2.0, (h - 1) / 2.0])
    m = np.eye(3)
    m[:2, :2] = linear
    m[:2, 2] = c - linear @ c + np.asarray(shift)
    return m


def rotate(img, angle_deg: float) -> np.ndarray:
    th = math.radians(angle_deg)
    lin = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    return affine_warp(img, _about_center(np.shape(img), lin))


def scale(img, factor: float) -> np.ndarray:
    if factor <= 0:
        raise ValidationError("scale factor must be positive")
    return affine_warp(img, _about_center(np.shape(img), np.eye(2) * factor))


def translate(img, dx: float, dy: float) -> np.ndarray:
    return affine_warp(img, _about_center(np.shape(img), np.eye(2), (dx, dy)))


def shear(img, angle_deg: float) -> np.ndarray:
    lin = np.array([[1.0, math.tan(math.radians(angle_deg))], [0.0, 1.0]])
    return affine_warp(img, _about_center(np.shape(img), lin))


def elastic_displacement(shape, alpha: float, sigma: float, rng: np.random.Generator):
    """Smoothed uniform noise fields ``(dx, dy)``; ``|d| <= alpha`` per axis."""
    if alpha < 0:
        raise ValidationError("alpha must be non-negative")
    if sigma <= 0:
        raise ValidationError("sigma must be positive")
    dx = ndimage.gaussian_filter(rng.uniform(-1.0, 1.0, size=shape), sigma, mode="reflect") * alpha
    dy = ndimage.gaussian_filter(rng.uniform(-1.0, 1.0, size=shape), sigma, mode="reflect") * alpha
    return dx, dy


def elastic_warp(img, alpha: float, sigma: float, rng: np.random.Generator) -> np.ndarray:
    a = _check(img)
    dx, dy = elastic_displacement(a.shape, alpha, sigma, rng)
    if alpha == 0:
        return a.copy()
    xx, yy = _pixel_grid(a.shape)
    return remap(a, xx + dx, yy + dy)


def mesh_displacement(shape, lattice_n: int, jitter: float, rng: np.random.Generator):
    """Dense ``(dx, dy)`` from a jittered ``lattice_n x lattice_n`` control lattice.

    Border nodes stay put; inside each lattice cell the node offsets are
    interpolated bilinearly.
    """
    if lattice_n < 2:
        raise ValidationError("lattice_n must be >= 2")
    if jitter < 0:
        raise ValidationError("jitter must be non-negative")
    h, w = shape
    node = rng.uniform(-jitter, jitter, size=(2, lattice_n, lattice_n))
    node[:, 0, :] = node[:, -1, :] = 0.0
    node[:, :, 0] = node[:, :, -1] = 0.0
    xx, yy = _pixel_grid(shape)
    gx = xx * (lattice_n - 1) / max(w - 1, 1)
    gy = yy * (lattice_n - 1) / max(h - 1, 1)
    out = []
    for k in range(2):
        out.append(ndimage.map_coordinates(node[k], [gy, gx], order=1, mode="nearest"))
    return out[0], out[1]


def mesh_warp(img, lattice_n: int, jitter: float, rng: np.random.Generator) -> np.ndarray:
    a = _check(img)
    dx, dy = mesh_displacement(a.shape, lattice_n, jitter, rng)
    if jitter == 0:
        return a.copy()
    xx, yy = _pixel_grid(a.shape)
    return remap(a, xx + dx, yy + dy)


def homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """3x3 projective map sending the four ``src`` points to ``dst``."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    A = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((x, y), (u, v)) in enumerate(zip(src, dst)):
        A[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        A[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * i], b[2 * i + 1] = u, v
    h = np.linalg.solve(A, b)
    return np.append(h, 1.0).reshape(3, 3)


def apply_homography(H: np.ndarray, pts) -> np.ndarray:
    p = np.column_stack([np.asarray(pts, dtype=float), np.ones(len(pts))]) @ np.asarray(H).T
    return p[:, :2] / p[:, 2:3]


def _convex(quad: np.ndarray) -> bool:
    cross = []
    for i in range(4):
        a, b, c = quad[i], quad[(i + 1) % 4], quad[(i + 2) % 4]
        cross.append((b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0]))
    cross = np.array(cross)
    return bool(np.all(cross > 1e-9) or np.all(cross < -1e-9))


def perspective_corners(shape, frac: float, rng: np.random.Generator, max_attempts: int = 8):
    """Original and jittered image corners; jitter is ``+-frac * min(h, w)``."""
    if not 0 <= frac < 0.5:
        raise ValidationError("corner_jitter_frac must be in [0, 0.5)")
    h, w = shape
    corners = np.array([[0.0, 0.0], [w - 1.0, 0.0], [w - 1.0, h - 1.0], [0.0, h - 1.0]])
    amp = frac * min(h, w)
    for _ in range(max_attempts):
        moved = corners + rng.uniform(-amp, amp, size=(4, 2))
        if _convex(moved):
            try:
                H = homography(corners, moved)
            except np.linalg.LinAlgError:
                continue
            if np.all(np.isfinite(H)) and np.linalg.cond(H) < 1e12:
                return corners, moved, H
    raise NumericalError("could not draw a non-degenerate corner set")


def perspective_warp(img, corner_jitter_frac: float, rng: np.random.Generator) -> np.ndarray:
    a = _check(img)
    _, _, H = perspective_corners(a.shape, corner_jitter_frac, rng)
    if corner_jitter_frac == 0:
        return a.copy()
    return affine_warp(a, H)


def coarse_dropout(img, patch_frac: float, n_patches: int, rng: np.random.Generator) -> np.ndarray:
    """Paint ``n_patches`` square patches of side ``patch_frac * min(h, w)`` with background."""
    a = _check(img)
    if not 0 < patch_frac <= 0.25:
        raise ValidationError("patch_frac must be in (0, 0.25]")
    if n_patches < 0:
        raise ValidationError("n_patches must be non-negative")
    h, w = a.shape
    side = max(1, int(round(patch_frac * min(h, w))))
    out = a.copy()
    for _ in range(int(n_patches)):
        y = int(rng.integers(0, h - side + 1))
        x = int(rng.integers(0, w - side + 1))
        out[y:y + side, x:x + side] = 255
    return out


def noise_rethreshold(img, blur_sigma: float, noise_std: float, rng: np.random.Generator) -> np.ndarray:
    """Blur, add Gaussian noise, threshold again: roughens stroke edges."""
    a = _check(img)
    v = a.astype(np.float64)
    if blur_sigma > 0:
        v = ndimage.gaussian_filter(v, blur_sigma, mode="nearest")
    v = v + rng.normal(0.0, 1.0, size=a.shape) * noise_std
    return _rebinarize(v)


def thicken(img, kernel: int = 3, iterations: int = 1) -> np.ndarray:
    # creases are 0, so growing them is an erosion of the 255 class
    return erode(_check(img), kernel, iterations)


def thin(img, kernel: int = 3, iterations: int = 1) -> np.ndarray:
    return dilate(_check(img), kernel, iterations)


def apply_augmentation(img, spec: AugmentationSpec, rng: np.random.Generator) -> np.ndarray:
    """Apply ``spec`` with parameters drawn from its ranges via ``rng``."""
    a = _check(img)
    p = spec.params
    k = spec.kind
    if k == "dropout":
        return coarse_dropout(a, _draw(rng, p["patch_frac"]), int(_draw(rng, p["n_patches"])), rng)
    if k == "elastic":
        return elastic_warp(a, _draw(rng, p["alpha"]), _draw(rng, p["sigma"]), rng)
    if k == "mesh_affine":
        return mesh_warp(a, int(_draw(rng, p["lattice_n"])), _draw(rng, p["jitter"]), rng)
    if k == "perspective":
        return perspective_warp(a, _draw(rng, p["corner_jitter_frac"]), rng)
    if k == "rotate":
        return rotate(a, _draw(rng, p["angle_deg"]))
    if k == "scale":
        return scale(a, _draw(rng, p["factor"]))
    if k == "translate":
        h, w = a.shape
        return translate(a, _draw(rng, p["frac_x"]) * w, _draw(rng, p["frac_y"]) * h)
    if k == "shear":
        return shear(a, _draw(rng, p["angle_deg"]))
    if k == "morph_thicken":
        return thicken(a, int(p.get("kernel", 3)), int(_draw(rng, p.get("iterations", 1))))
    if k == "morph_thin":
        return thin(a, int(p.get("kernel", 3)), int(_draw(rng, p.get("iterations", 1))))
    if k == "noise_rethreshold":
        return noise_rethreshold(a, _draw(rng, p["blur_sigma"]), _draw(rng, p["noise_std"]), rng)
    raise ValidationError(f"unknown augmentation kind {k!r}")


def foreground_survival(before: np.ndarray, after: np.ndarray, radius: float = 5.0) -> float:
    """Fraction of input crease pixels within ``radius`` of some output crease pixel."""
    fg = before == 0
    if not fg.any():
        return 1.0
    if not (after == 0).any():
        return 0.0
    dist = ndimage.distance_transform_edt(after != 0)
    return float(np.mean(dist[fg] <= radius))

"""Edge maps from real crease images.

Pipeline: Gaussian blur, self-quotient, Otsu binarization, 3x3 dilation of
the crease class, inversion. The result is binary with creases dark on
white, the same convention the renderer uses.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ValidationError


class ConstantImageWarning(UserWarning):
    """Otsu was asked to threshold an image with a single gray level."""


@dataclass(frozen=True)
class EdgePipelineConfig:
    blur_kernel: int = 15
    blur_sigma: float = 30.0
    dilate_kernel: int = 3
    dilate_iterations: int = 1
    quotient_epsilon: float = 1.0

    def __post_init__(self):
        for name in ("blur_kernel", "dilate_kernel"):
            k = getattr(self, name)
            if k < 3 or k % 2 == 0:
                raise ValidationError(f"{name} must be odd and >= 3, got {k}")
        if self.blur_sigma <= 0:
            raise ValidationError("blur_sigma must be positive")
        if self.quotient_epsilon <= 0:
            raise ValidationError("quotient_epsilon must be positive")
        if self.dilate_iterations < 0:
            raise ValidationError("dilate_iterations must be non-negative")


def _as_u8(img) -> np.ndarray:
    a = np.asarray(img)
    if a.ndim != 2:
        raise ValidationError(f"expected a 2-D grayscale image, got shape {a.shape}")
    return a


def _round_u8(a: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(a + 0.5), 0, 255).astype(np.uint8)


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """1-D Gaussian truncated to ``size`` taps and normalized to sum 1."""
    if size < 1 or size % 2 == 0:
        raise ValidationError(f"kernel size must be odd, got {size}")
    if sigma <= 0:
        raise ValidationError("sigma must be positive")
    x = np.arange(size) - size // 2
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def gaussian_blur_float(img, kernel: int, sigma: float) -> np.ndarray:
    g = gaussian_kernel(kernel, sigma)
    a = _as_u8(img).astype(np.float64)
    a = ndimage.correlate1d(a, g, axis=0, mode="nearest")
    return ndimage.correlate1d(a, g, axis=1, mode="nearest")


def gaussian_blur(img, kernel: int = 15, sigma: float = 30.0) -> np.ndarray:
    """Separable Gaussian blur with edge replication, rounded to 8 bits."""
    return _round_u8(gaussian_blur_float(img, kernel, sigma))


def self_quotient(img, blurred, epsilon: float = 1.0) -> np.ndarray:
    """``img / (blurred + epsilon)`` rescaled to [0, 255] by its own range."""
    a, b = _as_u8(img), _as_u8(blurred)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch: {a.shape} vs {b.shape}")
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    q = a.astype(np.float64) / (b.astype(np.float64) + epsilon)
    lo, hi = q.min(), q.max()
    if hi - lo <= 1e-12 * max(1.0, abs(hi)):
        return np.zeros(a.shape, dtype=np.uint8)
    return _round_u8((q - lo) * (255.0 / (hi - lo)))


def otsu_threshold(img) -> tuple[int, np.ndarray]:
    """Otsu's threshold over the 256-bin histogram.

    The class split is ``v <= t`` versus ``v > t``. Between-class variance
    is compared exactly in integers; ties go to the smallest ``t``. Returns
    the threshold and the binary image ``255 where v > t else 0``. A constant
    image yields its own value and an all-zero image, with a warning.
    """
    a = _as_u8(img)
    if a.dtype != np.uint8:
        raise ValidationError("otsu_threshold expects an 8-bit image")
    hist = np.bincount(a.ravel(), minlength=256).astype(object)
    nonzero = np.flatnonzero(np.asarray(hist, dtype=np.int64))
    if len(nonzero) <= 1:
        t = int(a.flat[0]) if a.size else 0
        warnings.warn("otsu_threshold: constant image", ConstantImageWarning, stacklevel=2)
        return t, np.zeros(a.shape, dtype=np.uint8)
    total_n = int(a.size)
    total_s = int(np.dot(np.arange(256, dtype=np.int64), np.bincount(a.ravel(), minlength=256)))
    # sigma_B^2 * N^2 = (N*S0 - n0*S)^2 / (n0*n1); maximize the fraction exactly
    best_t, best_num, best_den = None, -1, 1
    n0 = s0 = 0
    for t in range(255):
        n0 += int(hist[t])
        s0 += t * int(hist[t])
        n1 = total_n - n0
        if n0 == 0 or n1 == 0:
            continue
        num = (total_n * s0 - n0 * total_s) ** 2
        den = n0 * n1
        if best_t is None or num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    binary = np.where(a > best_t, 255, 0).astype(np.uint8)
    return best_t, binary


def _check_binary(a: np.ndarray) -> None:
    if not np.all((a == 0) | (a == 255)):
        raise ValidationError("expected a binary {0, 255} image")


def dilate(img, kernel: int = 3, iterations: int = 1) -> np.ndarray:
    """Grow the 255 class with a ``kernel x kernel`` square, ``iterations`` times."""
    a = _as_u8(img)
    _check_binary(a)
    if kernel < 1 or kernel % 2 == 0:
        raise ValidationError(f"kernel must be odd, got {kernel}")
    out = a.astype(np.uint8)
    for _ in range(iterations):
        out = ndimage.maximum_filter(out, size=kernel, mode="nearest")
    return out


def erode(img, kernel: int = 3, iterations: int = 1) -> np.ndarray:
    """Dual of :func:`dilate`: shrink the 255 class."""
    return invert(dilate(invert(img), kernel, iterations))


def invert(img) -> np.ndarray:
    return (255 - _as_u8(img).astype(np.int16)).astype(np.uint8)


def extract_edge_map(img, config: EdgePipelineConfig = EdgePipelineConfig(),
                     return_stages: bool = False):
    """Binary edge map of a grayscale crease image.

    Creases are the darker self-quotient class. That class is made the 255
    foreground before dilation so dilation thickens creases, and the final
    inversion leaves them dark on white. With ``return_stages`` a dict of
    the intermediate images keyed ``input, blurred, quotient, binary,
    dilated, edge_map`` is returned as well.
    """
    a = _as_u8(img)
    if a.dtype != np.uint8:
        raise ValidationError("extract_edge_map expects an 8-bit grayscale image")
    blurred = gaussian_blur(a, config.blur_kernel, config.blur_sigma)
    quotient = self_quotient(a, blurred, config.quotient_epsilon)
    if quotient.min() == quotient.max():
        creases = np.zeros(a.shape, dtype=np.uint8)
    else:
        _, bright = otsu_threshold(quotient)
        creases = invert(bright)
    dilated = dilate(creases, config.dilate_kernel, config.dilate_iterations)
    edge_map = invert(dilated)
    if return_stages:
        stages = {"input": a, "blurred": blurred, "quotient": quotient,
                  "binary": creases, "dilated": dilated, "edge_map": edge_map}
        return edge_map, stages
    return edge_map

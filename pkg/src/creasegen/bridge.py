"""Brownian-bridge diffusion schedule and regression target.

The forward process interpolates from ``x0`` (t = 0) to the conditioning
image ``y`` (t = T) with variance ``delta_t = 2 (r_t - r_t^2)``, which
vanishes at both ends. Only the schedule math lives here; no network.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

DEFAULT_T = 1000


def schedule(t: int, T: int = DEFAULT_T) -> tuple[float, float]:
    """Return ``(r_t, delta_t)`` with ``r_t = t / T``."""
    if T < 1:
        raise ValidationError("T must be >= 1")
    if not 0 <= t <= T:
        raise ValidationError(f"t={t} outside [0, {T}]")
    r = t / T
    return r, 2.0 * (r - r * r)


def _pair(x0, y) -> tuple[np.ndarray, np.ndarray]:
    x0 = np.asarray(x0, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x0.shape != y.shape:
        raise ValidationError(f"shape mismatch: {x0.shape} vs {y.shape}")
    return x0, y


def forward_sample(x0, y, t: int, T: int, rng: np.random.Generator, return_noise: bool = False):
    """Draw ``q_t = (1 - r_t) x0 + r_t y + sqrt(delta_t) eps`` with i.i.d. normal ``eps``."""
    x0, y = _pair(x0, y)
    r, delta = schedule(t, T)
    eps = rng.standard_normal(x0.shape)
    q = (1.0 - r) * x0 + r * y + math.sqrt(delta) * eps
    if return_noise:
        return q, eps
    return q


def training_target(x0, y, eps, t: int, T: int) -> np.ndarray:
    """Regression target ``sqrt(delta_t) eps + r_t (y - x0)``."""
    x0, y = _pair(x0, y)
    eps = np.asarray(eps, dtype=np.float64)
    if eps.shape != x0.shape:
        raise ValidationError(f"shape mismatch: eps {eps.shape} vs {x0.shape}")
    r, delta = schedule(t, T)
    return math.sqrt(delta) * eps + r * (y - x0)


def image_to_tensor(img) -> np.ndarray:
    return np.asarray(img, dtype=np.float64) / 127.5 - 1.0


def tensor_to_image(x) -> np.ndarray:
    v = (np.asarray(x, dtype=np.float64) + 1.0) * 127.5
    return np.clip(np.floor(v + 0.5), 0, 255).astype(np.uint8)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


def run_checks(T: int = DEFAULT_T, samples: int = 100_000, seed: int = 0) -> list[CheckResult]:
    """Monte Carlo verification of the forward process.

    Endpoint exactness, variance at ``T/2`` and the mean at ``T/4, T/2,
    3T/4`` (each within 3 standard errors), and the identity
    ``q_t - x0 == training_target`` under shared noise.
    """
    if samples < 2:
        raise ValidationError("samples must be >= 2")
    if T < 4:
        raise ValidationError("T must be >= 4 for the quarter-point checks")
    rng = np.random.default_rng(seed)
    out = []

    x0 = rng.uniform(-1, 1, size=64)
    y = rng.uniform(-1, 1, size=64)
    q0 = forward_sample(x0, y, 0, T, rng)
    qT = forward_sample(x0, y, T, T, rng)
    out.append(CheckResult("endpoint_t0", bool(np.array_equal(q0, x0)), "q_0 == x0"))
    out.append(CheckResult("endpoint_tT", bool(np.array_equal(qT, y)), "q_T == y"))

    half = T // 2
    _, delta = schedule(half, T)
    q = forward_sample(np.zeros(samples), np.zeros(samples), half, T, rng)
    var = float(q.var(ddof=1))
    se = delta * math.sqrt(2.0 / (samples - 1))
    out.append(CheckResult(
        "variance_half", abs(var - delta) <= 3 * se,
        f"var={var:.6f} expected={delta:.6f} se={se:.6f}"))

    a, b = 0.3, -0.7
    for t in (T // 4, T // 2, 3 * T // 4):
        r, delta = schedule(t, T)
        q = forward_sample(np.full(samples, a), np.full(samples, b), t, T, rng)
        mean = float(q.mean())
        expected = (1 - r) * a + r * b
        se = math.sqrt(delta / samples)
        out.append(CheckResult(
            f"mean_t{t}", abs(mean - expected) <= 3 * se,
            f"mean={mean:.6f} expected={expected:.6f} se={se:.6f}"))

    worst, tol = 0.0, 0.0
    for t in (0, 1, T // 3, T // 2, T - 1, T):
        q, eps = forward_sample(x0, y, t, T, rng, return_noise=True)
        worst = max(worst, float(np.max(np.abs((q - x0) - training_target(x0, y, eps, t, T)))))
        # a few rounding steps at the magnitude of the operands
        tol = max(tol, 8 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(q)))))
    out.append(CheckResult("target_identity", worst <= tol,
                           f"max |q_t - x0 - target| = {worst:.3e} (tolerance {tol:.1e})"))
    return out

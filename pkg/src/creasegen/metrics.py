"""Dataset quality and verification metrics.

Scores follow the similarity convention: higher means more likely the same
identity. Callers holding distances must negate them first.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .errors import NumericalError, ValidationError

log = logging.getLogger(__name__)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 255.0


# --- SSIM -------------------------------------------------------------------

def _gauss_window(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _valid_filter(a: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable 'valid' correlation
    k = len(g)
    rows = np.lib.stride_tricks.sliding_window_view(a, k, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ g


def ssim_map(a, b, window: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA,
             k1: float = SSIM_K1, k2: float = SSIM_K2, data_range: float = SSIM_L) -> np.ndarray:
    """Local SSIM at every valid window position (no padding)."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise ValidationError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.ndim != 2 or min(x.shape) < window:
        raise ValidationError(f"image {x.shape} smaller than the {window}x{window} window")
    g = _gauss_window(window, sigma)
    mx, my = _valid_filter(x, g), _valid_filter(y, g)
    # central moments as windowed means of products of deviations keep precision
    vx = _valid_filter(x * x, g) - mx * mx
    vy = _valid_filter(y * y, g) - my * my
    cxy = _valid_filter(x * y, g) - mx * my
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    return ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))


def ssim(a, b, window: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA,
         k1: float = SSIM_K1, k2: float = SSIM_K2, data_range: float = SSIM_L) -> float:
    """Mean SSIM over valid window positions."""
    if np.array_equal(np.asarray(a), np.asarray(b)):
        ssim_map(a, b, window, sigma, k1, k2, data_range)  # still validate shapes
        return 1.0
    return float(np.mean(ssim_map(a, b, window, sigma, k1, k2, data_range)))


def intra_subject_ssim(groups: Mapping[str, Sequence[np.ndarray]]) -> float:
    """First-pose SSIM protocol.

    For every identity, SSIM of its first sample against each remaining
    sample is averaged; the result is the mean over identities. Identities
    with a single sample are skipped with a warning.
    """
    per_id = []
    for ident in sorted(groups):
        poses = list(groups[ident])
        if len(poses) < 2:
            log.warning("identity %s has %d sample(s); skipped", ident, len(poses))
            continue
        first = poses[0]
        per_id.append(float(np.mean([ssim(first, p) for p in poses[1:]])))
    if not per_id:
        raise ValidationError("no identity has two or more samples")
    return float(np.mean(per_id))


# --- diversity and Frechet distance ----------------------------------------

@dataclass(frozen=True, eq=False)
class FeatureSet:
    rows: np.ndarray
    group_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        r = np.asarray(self.rows, dtype=np.float64)
        if r.ndim != 2:
            raise ValidationError("feature rows must form an n x d matrix")
        if self.group_ids is not None and len(self.group_ids) != len(r):
            raise ValidationError("one group id per feature row required")
        object.__setattr__(self, "rows", r)

    def groups(self) -> dict[str, np.ndarray]:
        if self.group_ids is None:
            raise ValidationError("feature set has no group ids")
        out: dict[str, list[int]] = {}
        for i, g in enumerate(self.group_ids):
            out.setdefault(g, []).append(i)
        return {g: self.rows[idx] for g, idx in out.items()}


def diversity(features: FeatureSet) -> float:
    """Mean over identities of the mean pairwise Euclidean feature distance."""
    per_id = []
    for ident, rows in sorted(features.groups().items()):
        if len(rows) < 2:
            log.warning("identity %s has %d feature row(s); skipped", ident, len(rows))
            continue
        per_id.append(float(pdist(rows).mean()))
    if not per_id:
        raise ValidationError("no identity has two or more feature rows")
    return float(np.mean(per_id))


def pixel_features(img, block: int = 16) -> np.ndarray:
    """Block-mean intensities of an image, flattened.

    Binary strokes a few pixels wide stop overlapping after a shift of one
    stroke width, so raw pixels only register *whether* a stroke moved.
    Averaging over ``block x block`` tiles keeps the distance growing with
    the size of the displacement. ``block=1`` gives raw pixels.
    """
    a = np.asarray(img, dtype=np.float64)
    h, w = a.shape
    if h % block or w % block:
        raise ValidationError(f"image {a.shape} not divisible into {block}-pixel blocks")
    return a.reshape(h // block, block, w // block, block).mean(axis=(1, 3)).ravel()


@dataclass(frozen=True, eq=False)
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray
    n: int

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=np.float64))
        if cov.shape != (len(mu), len(mu)):
            raise ValidationError("covariance must be d x d for a length-d mean")
        if not np.allclose(cov, cov.T, atol=1e-10, rtol=0):
            raise ValidationError("covariance is not symmetric")
        object.__setattr__(self, "mean", mu)
        object.__setattr__(self, "cov", cov)


def gaussian_stats(features) -> GaussianStats:
    rows = features.rows if isinstance(features, FeatureSet) else np.asarray(features, dtype=np.float64)
    if rows.ndim != 2 or len(rows) < 2:
        raise ValidationError("need at least two feature rows")
    mu = rows.mean(axis=0)
    centered = rows - mu
    cov = centered.T @ centered / (len(rows) - 1)
    return GaussianStats(mu, (cov + cov.T) / 2.0, len(rows))


def trace_sqrt_product(s1: np.ndarray, s2: np.ndarray) -> float:
    """``Tr((s1 s2)^(1/2))`` from the eigenvalues of the product.

    For PSD inputs the product is similar to a PSD matrix, so its spectrum
    is real and non-negative up to round-off; small negative or imaginary
    parts are clipped, large ones are an error.
    """
    ev = np.linalg.eigvals(s1 @ s2)
    scale = max(float(np.max(np.abs(ev))), 1e-300)
    if np.max(np.abs(ev.imag)) > 1e-6 * scale:
        raise NumericalError("covariance product has a complex spectrum")
    re = ev.real
    if re.min() < -1e-6 * scale:
        raise NumericalError(f"covariance product has negative eigenvalue {re.min():.3e}")
    return float(np.sum(np.sqrt(np.clip(re, 0.0, None))))


def frechet_distance(s1: GaussianStats, s2: GaussianStats) -> float:
    """``||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2))``, clipped at 0."""
    if s1.mean.shape != s2.mean.shape:
        raise ValidationError(f"dimension mismatch: {s1.mean.shape} vs {s2.mean.shape}")
    diff = s1.mean - s2.mean
    d = float(diff @ diff + np.trace(s1.cov) + np.trace(s2.cov) - 2.0 * trace_sqrt_product(s1.cov, s2.cov))
    scale = max(1.0, float(np.trace(s1.cov) + np.trace(s2.cov)))
    if d < -1e-6 * scale:
        raise NumericalError(f"negative Frechet distance {d}")
    return max(d, 0.0)


# --- verification -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ScoreSet:
    genuine: np.ndarray
    impostor: np.ndarray

    def __post_init__(self):
        g = np.sort(np.asarray(self.genuine, dtype=np.float64).ravel())
        i = np.sort(np.asarray(self.impostor, dtype=np.float64).ravel())
        if len(g) == 0 or len(i) == 0:
            raise ValidationError("genuine and impostor score lists must both be non-empty")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(i))):
            raise ValidationError("scores must be finite")
        object.__setattr__(self, "genuine", g)
        object.__setattr__(self, "impostor", i)


def error_counts(scores: ScoreSet, thresholds: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Counts of impostors ``>= tau`` and genuines ``< tau`` for each threshold."""
    fm = len(scores.impostor) - np.searchsorted(scores.impostor, thresholds, side="left")
    fnm = np.searchsorted(scores.genuine, thresholds, side="left")
    return fm.astype(np.int64), fnm.astype(np.int64)


def candidate_thresholds(scores: ScoreSet) -> np.ndarray:
    return np.unique(np.concatenate([scores.genuine, scores.impostor]))


def eer(scores: ScoreSet) -> tuple[float, float]:
    """Equal error rate and its threshold.

    Sweeps the distinct scores; picks the threshold with the smallest
    ``|FMR - FNMR|`` (compared exactly, smallest threshold on ties) and
    reports ``(FMR + FNMR) / 2`` there.
    """
    taus = candidate_thresholds(scores)
    fm, fnm = error_counts(scores, taus)
    n_i, n_g = len(scores.impostor), len(scores.genuine)
    gap = np.abs(fm * n_g - fnm * n_i)  # |FMR - FNMR| * n_i * n_g, exact
    k = int(np.argmin(gap))  # argmin returns the first (smallest tau) on ties
    # one integer division, so the mean rate is correctly rounded
    return (int(fm[k]) * n_g + int(fnm[k]) * n_i) / (2 * n_i * n_g), float(taus[k])


def tmr_at_fmr(scores: ScoreSet, fmr_target: float) -> float:
    """True-match rate at the smallest threshold whose FMR is at most ``fmr_target``."""
    if not 0 < fmr_target < 1:
        raise ValidationError("fmr_target must be in (0, 1)")
    taus = np.append(candidate_thresholds(scores), np.inf)
    fm, _ = error_counts(scores, taus)
    ok = np.flatnonzero(fm / len(scores.impostor) <= fmr_target)
    tau = taus[ok[0]]
    return float(np.count_nonzero(scores.genuine >= tau) / len(scores.genuine))


def det_curve(scores: ScoreSet, n_points: int = 100) -> list[tuple[float, float]]:
    """(FMR, FNMR) pairs over the full threshold sweep, FMR ascending.

    The sweep includes a threshold above every score, so the curve reaches
    FMR = 0. It is downsampled to ``n_points`` evenly spaced sweep positions
    with both ends kept.
    """
    if n_points < 2:
        raise ValidationError("n_points must be >= 2")
    taus = np.append(candidate_thresholds(scores), np.inf)
    fm, fnm = error_counts(scores, taus)
    fmr = fm / len(scores.impostor)
    fnmr = fnm / len(scores.genuine)
    order = np.lexsort((-fnmr, fmr))
    fmr, fnmr = fmr[order], fnmr[order]
    if len(fmr) > n_points:
        idx = np.unique(np.round(np.linspace(0, len(fmr) - 1, n_points)).astype(int))
        fmr, fnmr = fmr[idx], fnmr[idx]
    return [(float(a), float(b)) for a, b in zip(fmr, fnmr)]


# --- file formats -----------------------------------------------------------

def read_scores(path: str | Path) -> ScoreSet:
    """CSV with header ``label,score``; label is ``genuine`` or ``impostor``."""
    gen, imp = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["label", "score"]:
            raise ValidationError(f"{path}: expected header 'label,score'")
        for lineno, row in enumerate(reader, start=2):
            label = (row["label"] or "").strip()
            try:
                value = float(row["score"])
            except (TypeError, ValueError):
                raise ValidationError(f"{path}:{lineno}: bad score {row['score']!r}") from None
            if label == "genuine":
                gen.append(value)
            elif label == "impostor":
                imp.append(value)
            else:
                raise ValidationError(f"{path}:{lineno}: bad label {label!r}")
    return ScoreSet(np.array(gen), np.array(imp))


def write_scores(scores_genuine, scores_impostor, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "score"])
        w.writerows(("genuine", repr(float(s))) for s in scores_genuine)
        w.writerows(("impostor", repr(float(s))) for s in scores_impostor)


def read_features(path: str | Path) -> FeatureSet:
    """CSV with header ``id,f0,...,f{d-1}``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "id" or header[1:] != [f"f{i}" for i in range(len(header) - 1)]:
            raise ValidationError(f"{path}: expected header 'id,f0,...'")
        ids, rows = [], []
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise ValidationError(f"{path}:{lineno}: expected {len(header)} fields")
            ids.append(rec[0])
            try:
                rows.append([float(v) for v in rec[1:]])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: non-numeric feature") from None
    if not rows:
        raise ValidationError(f"{path}: no feature rows")
    return FeatureSet(np.array(rows), tuple(ids))


def write_features(features: FeatureSet, path: str | Path) -> None:
    d = features.rows.shape[1]
    ids = features.group_ids or tuple(str(i) for i in range(len(features.rows)))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id"] + [f"f{i}" for i in range(d)])
        for g, row in zip(ids, features.rows):
            w.writerow([g] + [repr(float(v)) for v in row])


def write_det(curve, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fmr", "fnmr"])
        w.writerows((repr(a), repr(b)) for a, b in curve)

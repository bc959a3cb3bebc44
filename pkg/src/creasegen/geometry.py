"""Crease geometry: grid masks, guide points, B-spline and Bezier curves.

Coordinates are in grid units on a 6x6 canvas, ``x`` in ``[0, 6]`` to the
right and ``y`` in ``[0, 6]`` downward, so grid row ``i`` occupies
``y in [i, i + 1]``. A principal crease spans a whole row and is drawn as an
interpolating clamped B-spline; a non-prominent crease lives in one of the
three 1x2 merged cells of a row and is drawn as a quadratic Bezier curve.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConstraintError, DomainError, NumericalError, ValidationError
from .seeding import rng_from_seed

N_ROWS = 6
N_CELLS = 3
MIN_GAP = 0.05
MARGIN_RANGE = (0.3, 0.6)
PRINCIPAL_DEGREES = (3, 4)
BEZIER_DEGREE = 2
GENERATOR_VERSION = "creasegen-geometry/1"
SCHEMA_VERSION = 1

_TOL = 1e-9


def _q(v: float) -> float:
    """Round to 12 significant digits so records survive a JSON round trip."""
    return float(f"{float(v):.12g}")


class RowKind(str, Enum):
    PRINCIPAL = "principal"
    NON_PROMINENT = "non_prominent"
    EMPTY = "empty"


@dataclass(frozen=True)
class RowMask:
    kind: RowKind
    cells: tuple[bool, bool, bool] = (False, False, False)

    @property
    def active(self) -> bool:
        return self.kind is not RowKind.EMPTY

    def to_json(self):
        if self.kind is RowKind.PRINCIPAL:
            return True
        if self.kind is RowKind.NON_PROMINENT:
            return [bool(c) for c in self.cells]
        return None

    @classmethod
    def from_json(cls, value) -> "RowMask":
        if value is None:
            return EMPTY_ROW
        if value is True:
            return PRINCIPAL_ROW
        if isinstance(value, list) and len(value) == N_CELLS and all(isinstance(c, bool) for c in value):
            return cls(RowKind.NON_PROMINENT, tuple(value))
        raise ValidationError(f"bad row mask entry: {value!r}")


PRINCIPAL_ROW = RowMask(RowKind.PRINCIPAL)
EMPTY_ROW = RowMask(RowKind.EMPTY)


@dataclass(frozen=True)
class GridMask:
    """Per-row crease layout; this is the identity label.

    The active block runs from the first to the last non-empty row. Rows
    inside the block may be empty; the padding outside it is centered with
    the odd row going on top.
    """

    rows: tuple[RowMask, ...]

    def active_span(self) -> tuple[int, int] | None:
        idx = [i for i, r in enumerate(self.rows) if r.active]
        if not idx:
            return None
        return idx[0], idx[-1]

    @property
    def n_principal(self) -> int:
        return sum(r.kind is RowKind.PRINCIPAL for r in self.rows)

    @property
    def n_non_prominent(self) -> int:
        return sum(r.kind is RowKind.NON_PROMINENT for r in self.rows)

    def violations(self) -> list[str]:
        out = []
        if len(self.rows) != N_ROWS:
            return [f"expected {N_ROWS} rows, got {len(self.rows)}"]
        span = self.active_span()
        if span is None:
            return ["no active rows"]
        first, last = span
        size = last - first + 1
        if not 3 <= size <= N_ROWS:
            out.append(f"active block spans {size} rows, expected 3..6")
        top, bottom = first, N_ROWS - 1 - last
        if abs(top - bottom) > 1:
            out.append(f"active block not centered: {top} empty rows above, {bottom} below")
        if self.n_principal < 1:
            out.append("no principal row")
        for i, r in enumerate(self.rows):
            if r.kind is RowKind.NON_PROMINENT and not any(r.cells):
                out.append(f"row {i}: non-prominent row without active cells")
            if r.kind is not RowKind.NON_PROMINENT and any(r.cells):
                out.append(f"row {i}: cells set on a {r.kind.value} row")
        return out

    def to_json(self) -> list:
        return [r.to_json() for r in self.rows]

    @classmethod
    def from_json(cls, value) -> "GridMask":
        if not isinstance(value, list):
            raise ValidationError("grid mask must be a list")
        return cls(tuple(RowMask.from_json(v) for v in value))

    def key(self) -> bytes:
        """Canonical bytes; equal masks have equal keys."""
        return json.dumps(self.to_json(), separators=(",", ":")).encode()


def sample_grid_mask(rng: np.random.Generator) -> GridMask:
    """Draw a random grid mask.

    Sampling order is fixed (it is part of the reproducibility contract):
    block size, principal count, non-prominent count, row-role permutation,
    then one active-cell subset per non-prominent row from top to bottom.
    Rows of the block that get neither role stay empty; the permutation is
    redrawn until both ends of the block hold a crease, so the block keeps
    its sampled height.
    """
    r = int(rng.integers(3, N_ROWS + 1))
    n_principal = int(rng.integers(1, r + 1))
    rest = r - n_principal
    n_np = int(rng.integers(1, rest + 1)) if rest >= 1 else 0
    roles = [RowKind.PRINCIPAL] * n_principal + [RowKind.NON_PROMINENT] * n_np
    roles += [RowKind.EMPTY] * (r - len(roles))
    while True:
        block = [roles[i] for i in rng.permutation(r)]
        if block[0] is not RowKind.EMPTY and block[-1] is not RowKind.EMPTY:
            break

    pad_top = (N_ROWS - r + 1) // 2
    rows = [EMPTY_ROW] * N_ROWS
    for k, kind in enumerate(block):
        if kind is RowKind.PRINCIPAL:
            rows[pad_top + k] = PRINCIPAL_ROW
        elif kind is RowKind.NON_PROMINENT:
            w = int(rng.integers(1, N_CELLS + 1))
            chosen = set(rng.choice(N_CELLS, size=w, replace=False).tolist())
            cells = tuple(c in chosen for c in range(N_CELLS))
            rows[pad_top + k] = RowMask(RowKind.NON_PROMINENT, cells)
    return GridMask(tuple(rows))


@dataclass(frozen=True)
class GuidePointSet:
    points: tuple[tuple[float, float], ...]
    role: RowKind
    row_index: int
    cell_index: int | None = None
    degree: int = 3

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)

    def bounds(self, margin: float) -> tuple[float, float, float, float]:
        """(x_lo, x_hi, y_lo, y_hi) of the owning row or cell, grown by ``margin``."""
        if self.role is RowKind.PRINCIPAL:
            x_lo, x_hi = 0.0, float(N_ROWS)
        else:
            x_lo = 2.0 * self.cell_index
            x_hi = x_lo + 2.0
        return x_lo - margin, x_hi + margin, self.row_index - margin, self.row_index + 1 + margin

    def violations(self, margin: float) -> list[str]:
        out = []
        pts = self.as_array()
        if self.role is RowKind.PRINCIPAL:
            if self.degree not in PRINCIPAL_DEGREES:
                out.append(f"principal degree {self.degree}")
            if len(pts) != self.degree + 4:
                out.append(f"principal crease has {len(pts)} points, expected {self.degree + 4}")
        elif self.role is RowKind.NON_PROMINENT:
            if self.degree != BEZIER_DEGREE or len(pts) != 3:
                out.append("non-prominent crease must be 3 points of degree 2")
            if self.cell_index not in range(N_CELLS):
                out.append(f"cell index {self.cell_index}")
        else:
            out.append(f"bad role {self.role}")
        if np.any(np.diff(pts[:, 0]) <= 0):
            out.append("x not strictly increasing")
        x_lo, x_hi, y_lo, y_hi = self.bounds(margin)
        if (pts[:, 0].min() < x_lo - _TOL or pts[:, 0].max() > x_hi + _TOL
                or pts[:, 1].min() < y_lo - _TOL or pts[:, 1].max() > y_hi + _TOL):
            out.append("points outside owning bounds")
        return out

    def to_json(self) -> dict:
        return {
            "role": self.role.value,
            "row": self.row_index,
            "cell": self.cell_index,
            "degree": self.degree,
            "points": [[x, y] for x, y in self.points],
        }

    @classmethod
    def from_json(cls, d: dict) -> "GuidePointSet":
        try:
            return cls(
                points=tuple((float(x), float(y)) for x, y in d["points"]),
                role=RowKind(d["role"]),
                row_index=int(d["row"]),
                cell_index=None if d["cell"] is None else int(d["cell"]),
                degree=int(d["degree"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"bad curve record: {exc}") from exc


def _order_x(xs: np.ndarray, lo: float, hi: float, gap: float) -> np.ndarray:
    # Forward then backward pass; values already gap-separated are left alone.
    xs = np.clip(xs, lo, hi)
    for i in range(1, len(xs)):
        if xs[i] < xs[i - 1] + gap - _TOL:
            xs[i] = xs[i - 1] + gap
    if xs[-1] > hi:
        xs[-1] = hi
    for i in range(len(xs) - 2, -1, -1):
        if xs[i] > xs[i + 1] - gap + _TOL:
            xs[i] = xs[i + 1] - gap
    return xs


def _check_margin(m: float, strict: bool) -> None:
    lo, hi = MARGIN_RANGE
    if strict and not lo <= m <= hi:
        raise ConstraintError(f"perturbation margin {m} outside [{lo}, {hi}]")
    if m < 0:
        raise ConstraintError(f"negative perturbation margin {m}")


def _check_row(row_index: int) -> None:
    if row_index not in range(N_ROWS):
        raise ConstraintError(f"row index {row_index} outside 0..{N_ROWS - 1}")


def _quantized(pts: np.ndarray) -> tuple[tuple[float, float], ...]:
    return tuple((_q(x), _q(y)) for x, y in pts)


def sample_principal_guides(rng: np.random.Generator, row_index: int, m: float, degree: int,
                            *, min_gap: float = MIN_GAP, strict: bool = True) -> GuidePointSet:
    """Guide points for a principal crease of ``degree`` on ``row_index``.

    Start and end sit at the centers of the first and last unit cells. The
    ``degree + 2`` interior guides start evenly spaced on the baseline and
    each coordinate is shifted by U(-m, m). ``strict=False`` admits margins
    outside [0.3, 0.6], e.g. ``m=0`` for diagnostics.
    """
    if degree not in PRINCIPAL_DEGREES:
        raise ConstraintError(f"principal degree must be one of {PRINCIPAL_DEGREES}, got {degree}")
    _check_margin(m, strict)
    _check_row(row_index)
    n = degree + 4
    y0 = row_index + 0.5
    pts = np.column_stack([np.linspace(0.5, N_ROWS - 0.5, n), np.full(n, y0)])
    pts[1:-1] += rng.uniform(-m, m, size=(n - 2, 2))
    pts[1:-1, 1] = np.clip(pts[1:-1, 1], row_index - m, row_index + 1 + m)
    pts[1:-1, 0] = _order_x(pts[1:-1, 0], pts[0, 0] + min_gap, pts[-1, 0] - min_gap, min_gap)
    return GuidePointSet(_quantized(pts), RowKind.PRINCIPAL, row_index, None, degree)


def sample_bezier_guides(rng: np.random.Generator, row_index: int, cell_index: int, m: float,
                         *, min_gap: float = MIN_GAP, strict: bool = True) -> GuidePointSet:
    """Start, control and end point of a non-prominent crease in one 1x2 cell."""
    _check_margin(m, strict)
    _check_row(row_index)
    if cell_index not in range(N_CELLS):
        raise ConstraintError(f"cell index {cell_index} outside 0..{N_CELLS - 1}")
    x0 = 2.0 * cell_index
    y0 = row_index + 0.5
    pts = np.array([[x0 + 0.5, y0], [x0 + 1.0, y0], [x0 + 1.5, y0]])
    pts += rng.uniform(-m, m, size=(3, 2))
    pts[:, 1] = np.clip(pts[:, 1], row_index - m, row_index + 1 + m)
    pts[:, 0] = _order_x(pts[:, 0], x0 - m, x0 + 2.0 + m, min_gap)
    return GuidePointSet(_quantized(pts), RowKind.NON_PROMINENT, row_index, cell_index, BEZIER_DEGREE)


# --- B-splines -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BSplineCurve:
    degree: int
    knots: np.ndarray
    coefficients: np.ndarray  # (n, 2)
    params: np.ndarray | None = field(default=None, repr=False)  # guide parameters used in fitting

    def __post_init__(self):
        if len(self.knots) != len(self.coefficients) + self.degree + 1:
            raise ValidationError("knot count must equal coefficient count + degree + 1")
        if np.any(np.diff(self.knots) < 0):
            raise ValidationError("knots must be non-decreasing")


def chord_length_params(points: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(np.diff(points, axis=0), axis=1)
    total = d.sum()
    if total <= 0:
        raise NumericalError("guide points coincide")
    u = np.concatenate([[0.0], np.cumsum(d) / total])
    u[-1] = 1.0
    return u


def averaged_knots(params: np.ndarray, degree: int) -> np.ndarray:
    n = len(params) - 1
    interior = [params[j:j + degree].mean() for j in range(1, n - degree + 1)]
    return np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])


def find_span(knots: np.ndarray, degree: int, n_coef: int, u: np.ndarray) -> np.ndarray:
    """Index ``k`` with ``knots[k] <= u < knots[k + 1]``; the right end maps to the last span."""
    span = np.searchsorted(knots, u, side="right") - 1
    return np.clip(span, degree, n_coef - 1)


def basis_functions(knots: np.ndarray, degree: int, span: int, u: float) -> np.ndarray:
    """The ``degree + 1`` non-vanishing basis values at ``u`` (triangular scheme)."""
    N = np.zeros(degree + 1)
    left = np.zeros(degree + 1)
    right = np.zeros(degree + 1)
    N[0] = 1.0
    for j in range(1, degree + 1):
        left[j] = u - knots[span + 1 - j]
        right[j] = knots[span + j] - u
        saved = 0.0
        for r in range(j):
            tmp = N[r] / (right[r + 1] + left[j - r])
            N[r] = saved + right[r + 1] * tmp
            saved = left[j - r] * tmp
        N[j] = saved
    return N


def fit_bspline(guides: GuidePointSet | Sequence[Sequence[float]], degree: int | None = None) -> BSplineCurve:
    """Interpolating clamped B-spline through the guide points.

    Chord-length parameters, knots by averaging, coefficients from the
    banded collocation system. Endpoint coefficients equal the end guides.
    """
    if isinstance(guides, GuidePointSet):
        pts = guides.as_array()
        degree = guides.degree if degree is None else degree
    else:
        pts = np.asarray(guides, dtype=float)
    if degree is None or degree < 1:
        raise ValidationError("degree must be a positive integer")
    n1 = len(pts)
    if n1 < degree + 1:
        raise ValidationError(f"need at least {degree + 1} guide points, got {n1}")
    if np.any(np.diff(pts[:, 0]) <= 0):
        raise ValidationError("guide x coordinates must be strictly increasing")

    u = chord_length_params(pts)
    knots = averaged_knots(u, degree)
    spans = find_span(knots, degree, n1, u)
    A = np.zeros((n1, n1))
    for k in range(n1):
        s = spans[k]
        A[k, s - degree:s + 1] = basis_functions(knots, degree, s, u[k])

    nz_rows, nz_cols = np.nonzero(np.abs(A) > 0)
    lower = int(max(0, (nz_rows - nz_cols).max()))
    upper = int(max(0, (nz_cols - nz_rows).max()))
    ab = np.zeros((lower + upper + 1, n1))
    for i, j in zip(nz_rows, nz_cols):
        ab[upper + i - j, j] = A[i, j]
    try:
        coef = solve_banded((lower, upper), ab, pts)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"collocation system is singular: {exc}") from exc
    if not np.all(np.isfinite(coef)):
        raise NumericalError("collocation solve produced non-finite coefficients")
    coef[0], coef[-1] = pts[0], pts[-1]
    return BSplineCurve(degree, knots, coef, u)


def _check_t(t) -> np.ndarray:
    ta = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(ta)) or np.any(ta < 0.0) or np.any(ta > 1.0):
        raise DomainError("curve parameter must lie in [0, 1]")
    return ta


def eval_bspline(curve: BSplineCurve, t):
    """Evaluate ``curve`` by de Boor's algorithm.

    ``t`` (scalar or array, in [0, 1]) is mapped affinely onto the clamped
    knot domain. Returns an ``(x, y)`` tuple for scalar ``t`` and an
    ``(n, 2)`` array otherwise.
    """
    ta = _check_t(t)
    p = curve.degree
    knots = curve.knots
    coef = curve.coefficients
    lo, hi = knots[p], knots[len(coef)]
    u = lo + np.atleast_1d(ta) * (hi - lo)
    spans = find_span(knots, p, len(coef), u)
    d = coef[spans[:, None] - p + np.arange(p + 1)].copy()
    for r in range(1, p + 1):
        for j in range(p, r - 1, -1):
            i = spans - p + j
            denom = knots[i + 1 + p - r] - knots[i]
            alpha = np.divide(u - knots[i], denom, out=np.zeros_like(u), where=denom > 0)
            d[:, j] = (1.0 - alpha)[:, None] * d[:, j - 1] + alpha[:, None] * d[:, j]
    out = d[:, p]
    if ta.ndim == 0:
        return float(out[0, 0]), float(out[0, 1])
    return out


def eval_bezier(s, p, e, t):
    """Quadratic Bezier ``(1-t)^2 s + 2(1-t)t p + t^2 e``."""
    ta = _check_t(t)
    s, p, e = (np.asarray(v, dtype=float) for v in (s, p, e))
    tt = np.atleast_1d(ta)[:, None]
    omt = 1.0 - tt
    out = omt * omt * s + 2.0 * omt * tt * p + tt * tt * e
    if ta.ndim == 0:
        return float(out[0, 0]), float(out[0, 1])
    return out


def bezier_as_bspline(s, p, e) -> BSplineCurve:
    """The same quadratic as a single-segment clamped B-spline."""
    return BSplineCurve(2, np.array([0.0, 0, 0, 1, 1, 1]), np.array([s, p, e], dtype=float))


def curve_polyline(guides: GuidePointSet, n_samples: int) -> np.ndarray:
    """Dense ``(n_samples, 2)`` samples of the crease described by ``guides``."""
    t = np.linspace(0.0, 1.0, n_samples)
    if guides.role is RowKind.PRINCIPAL:
        return eval_bspline(fit_bspline(guides), t)
    s, p, e = guides.points
    return eval_bezier(s, p, e, t)


# --- identities ------------------------------------------------------------

@dataclass(frozen=True)
class IdentityConfig:
    margin_range: tuple[float, float] = MARGIN_RANGE
    degrees: tuple[int, ...] = PRINCIPAL_DEGREES
    min_gap: float = MIN_GAP

    def __post_init__(self):
        lo, hi = self.margin_range
        if not MARGIN_RANGE[0] <= lo <= hi <= MARGIN_RANGE[1]:
            raise ConstraintError(f"margin range {self.margin_range} outside {MARGIN_RANGE}")
        if not self.degrees or any(d not in PRINCIPAL_DEGREES for d in self.degrees):
            raise ConstraintError(f"degrees must be drawn from {PRINCIPAL_DEGREES}")


@dataclass(frozen=True)
class IdentityRecord:
    id: str
    seed: int
    mask: GridMask
    curves: tuple[GuidePointSet, ...]
    perturb_margin: float
    generator_version: str = GENERATOR_VERSION
    parent_id: str | None = None
    variant_index: int | None = None

    def violations(self) -> list[str]:
        out = [f"mask: {v}" for v in self.mask.violations()]
        expected = []
        for i, r in enumerate(self.mask.rows):
            if r.kind is RowKind.PRINCIPAL:
                expected.append((RowKind.PRINCIPAL, i, None))
            elif r.kind is RowKind.NON_PROMINENT:
                expected += [(RowKind.NON_PROMINENT, i, c) for c in range(N_CELLS) if r.cells[c]]
        got = [(c.role, c.row_index, c.cell_index) for c in self.curves]
        if got != expected:
            out.append("curves do not match the grid mask")
        for c in self.curves:
            out += [f"curve row {c.row_index}: {v}" for v in c.violations(self.perturb_margin)]
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "id": self.id,
            "seed": self.seed,
            "generator_version": self.generator_version,
            "perturb_margin": self.perturb_margin,
            "parent_id": self.parent_id,
            "variant_index": self.variant_index,
            "mask": self.mask.to_json(),
            "curves": [c.to_json() for c in self.curves],
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, d: dict) -> "IdentityRecord":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValidationError(f"unsupported identity schema version {d.get('schema_version')!r}")
        try:
            return cls(
                id=str(d["id"]),
                seed=int(d["seed"]),
                mask=GridMask.from_json(d["mask"]),
                curves=tuple(GuidePointSet.from_json(c) for c in d["curves"]),
                perturb_margin=float(d["perturb_margin"]),
                generator_version=str(d["generator_version"]),
                parent_id=d.get("parent_id"),
                variant_index=d.get("variant_index"),
            )
        except KeyError as exc:
            raise ValidationError(f"identity record missing field {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "IdentityRecord":
        return cls.from_dict(json.loads(text))


def sample_identity(seed: int, config: IdentityConfig = IdentityConfig(),
                    identity_id: str | None = None) -> IdentityRecord:
    """Sample a full identity from its own 64-bit seed.

    Draw order: margin, grid mask, then per row from top to bottom either the
    principal degree and its guides or one guide triple per active cell.
    """
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValidationError("seed must be a 64-bit unsigned integer")
    rng = rng_from_seed(seed)
    m = _q(rng.uniform(*config.margin_range))
    mask = sample_grid_mask(rng)
    curves = []
    for row, rm in enumerate(mask.rows):
        if rm.kind is RowKind.PRINCIPAL:
            degree = int(config.degrees[rng.integers(len(config.degrees))])
            curves.append(sample_principal_guides(rng, row, m, degree, min_gap=config.min_gap))
        elif rm.kind is RowKind.NON_PROMINENT:
            for c in range(N_CELLS):
                if rm.cells[c]:
                    curves.append(sample_bezier_guides(rng, row, c, m, min_gap=config.min_gap))
    return IdentityRecord(
        id=identity_id if identity_id is not None else f"seed{seed}",
        seed=seed,
        mask=mask,
        curves=tuple(curves),
        perturb_margin=m,
    )


def cpd_variant(identity: IdentityRecord, rng: np.random.Generator, magnitude: float | None = None,
                variant_index: int = 0, *, min_gap: float = MIN_GAP,
                move_endpoints: bool = True) -> IdentityRecord:
    """Mated sample by control-point noise; the grid mask is kept as is.

    Every guide point of every curve (principal endpoints included) moves by
    U(-magnitude, magnitude) per coordinate, then the ordering and bounds
    clamps are re-applied against the identity's own margin. ``magnitude``
    defaults to that margin. With ``move_endpoints=False`` principal creases
    keep their start and end points and only the interior guides move.
    """
    mag = identity.perturb_margin if magnitude is None else float(magnitude)
    if mag < 0:
        raise ConstraintError("CPD magnitude must be non-negative")
    margin = identity.perturb_margin
    curves = []
    for c in identity.curves:
        pts = c.as_array()
        noise = rng.uniform(-mag, mag, size=pts.shape)
        x_lo, x_hi, y_lo, y_hi = c.bounds(margin)
        if c.role is RowKind.PRINCIPAL and not move_endpoints:
            pts[1:-1] += noise[1:-1]
            pts[1:-1, 1] = np.clip(pts[1:-1, 1], y_lo, y_hi)
            pts[1:-1, 0] = _order_x(pts[1:-1, 0], pts[0, 0] + min_gap, pts[-1, 0] - min_gap, min_gap)
        else:
            pts += noise
            pts[:, 1] = np.clip(pts[:, 1], y_lo, y_hi)
            pts[:, 0] = _order_x(pts[:, 0], x_lo, x_hi, min_gap)
        curves.append(GuidePointSet(_quantized(pts), c.role, c.row_index, c.cell_index, c.degree))
    return IdentityRecord(
        id=f"{identity.id}/cpd{variant_index:02d}",
        seed=identity.seed,
        mask=identity.mask,
        curves=tuple(curves),
        perturb_margin=identity.perturb_margin,
        generator_version=identity.generator_version,
        parent_id=identity.id,
        variant_index=variant_index,
    )

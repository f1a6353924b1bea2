"""Iterated function systems on [0,1]: covers, staircase functions, dimensions.

The sets built here are attractors of affine contractions
``x -> offset + ratio * x`` carrying probability weights.  The cumulative
mass function of the attractor measure is a Devil's staircase (a Cantor
function): monotone, continuous, and locally constant on the gaps.  It is
evaluated by recursive descent through the pieces.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import optimize, stats

from . import _kernels
from ._io import write_csv
from .errors import DomainError, NumericError, ResourceLimitError, ValidationError

CELL_CAP_ENV = "MFLAB_MAX_CELLS"
DEFAULT_CELL_CAP = 2**24

STAIRCASE_TOL = 1e-12
STAIRCASE_MAX_DEPTH = 64


def cell_cap() -> int:
    """Cap on interval/cell counts; override with MFLAB_MAX_CELLS."""
    raw = os.environ.get(CELL_CAP_ENV)
    if raw is None:
        return DEFAULT_CELL_CAP
    try:
        cap = int(raw)
    except ValueError as exc:
        raise ValidationError(f"{CELL_CAP_ENV} must be an integer, got {raw!r}") from exc
    if cap < 2:
        raise ValidationError(f"{CELL_CAP_ENV} must be >= 2, got {cap}")
    return cap


@dataclass(frozen=True)
class IfsSpec:
    """Ordered affine pieces (offset, ratio, weight) on [0,1], separated by gaps.

    Weights must sum to 1.  A zero weight is allowed so that degenerate
    staircases (all plateaus at one value) can be expressed.
    """

    pieces: tuple[tuple[float, float, float], ...]
    label: str = ""

    def __post_init__(self):
        pieces = tuple((float(o), float(r), float(w)) for o, r, w in self.pieces)
        object.__setattr__(self, "pieces", pieces)
        if len(pieces) < 2:
            raise ValidationError("need at least 2 pieces, otherwise there are no gaps")
        for o, r, w in pieces:
            if not 0.0 <= o < 1.0:
                raise ValidationError(f"offset {o} outside [0, 1)")
            if not 0.0 < r < 1.0:
                raise ValidationError(f"ratio {r} outside (0, 1)")
            if not 0.0 <= w <= 1.0:
                raise ValidationError(f"weight {w} outside [0, 1]")
        for (o1, r1, _), (o2, _, _) in zip(pieces, pieces[1:]):
            if o1 + r1 >= o2:
                raise ValidationError(
                    f"pieces must be separated by a gap: [{o1}, {o1 + r1}] "
                    f"touches the piece at offset {o2}"
                )
        last_o, last_r, _ = pieces[-1]
        if last_o + last_r > 1.0 + 1e-12:
            raise ValidationError(f"last piece ends at {last_o + last_r} > 1")
        total = math.fsum(w for _, _, w in pieces)
        if abs(total - 1.0) > 1e-12:
            raise ValidationError(f"weights sum to {total}, expected 1 within 1e-12")

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.array([p[0] for p in self.pieces])

    @cached_property
    def ratios(self) -> np.ndarray:
        return np.array([p[1] for p in self.pieces])

    @cached_property
    def weights(self) -> np.ndarray:
        return np.array([p[2] for p in self.pieces])

    @cached_property
    def rights(self) -> np.ndarray:
        return self.offsets + self.ratios

    @cached_property
    def cum_weights(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.weights)))

    @classmethod
    def equal_pieces(cls, count: int, ratio: float, weights=None, label: str = "") -> "IfsSpec":
        """``count`` pieces of equal ratio separated by equal gaps."""
        if count < 2:
            raise ValidationError("count must be >= 2")
        if not (0.0 < ratio < 1.0) or count * ratio >= 1.0:
            raise ValidationError(
                f"{count} pieces of ratio {ratio} leave no gaps (need count*ratio < 1)"
            )
        gap = (1.0 - count * ratio) / (count - 1)
        if weights is None:
            weights = [1.0 / count] * count
        elif len(weights) != count:
            raise ValidationError(f"expected {count} weights, got {len(weights)}")
        pieces = tuple(
            (k * (gap + ratio), ratio, float(w)) for k, w in enumerate(weights)
        )
        return cls(pieces, label or f"{count}x{ratio:g}")

    @classmethod
    def middle_thirds(cls) -> "IfsSpec":
        return cls.equal_pieces(2, 1.0 / 3.0, label="middle-thirds")

    def to_dict(self) -> dict:
        return {"label": self.label, "pieces": [list(p) for p in self.pieces]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "IfsSpec":
        try:
            pieces = tuple(tuple(p) for p in data["pieces"])
            label = data.get("label", "")
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed IFS description: {data!r}") from exc
        return cls(pieces, label)

    @classmethod
    def from_json(cls, text: str) -> "IfsSpec":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON for IFS spec: {exc}") from exc
        return cls.from_dict(data)


@dataclass(frozen=True, eq=False)
class Cover:
    """All level-n images of [0,1] under the IFS, with product-weight masses."""

    level: int
    lefts: np.ndarray
    rights: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        if self.level < 0:
            raise ValidationError("cover level must be >= 0")
        n = self.lefts.shape[0]
        if self.rights.shape[0] != n or self.masses.shape[0] != n:
            raise ValidationError("cover arrays must have equal length")
        total = float(np.sum(self.masses))
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"cover masses sum to {total}, expected 1 within 1e-9")

    def __len__(self) -> int:
        return self.lefts.shape[0]

    @property
    def intervals(self):
        return list(zip(self.lefts.tolist(), self.rights.tolist(), self.masses.tolist()))

    def to_csv(self, path: str, comments=()) -> None:
        rows = zip(
            [self.level] * len(self),
            self.lefts.tolist(),
            self.rights.tolist(),
            self.masses.tolist(),
        )
        write_csv(path, "level,left,right,mass", rows, comments)


def build_cover(spec: IfsSpec, level: int) -> Cover:
    """Refine [0,1] ``level`` times under the IFS.  Deterministic."""
    if level < 0:
        raise ValidationError("level must be >= 0")
    m = len(spec.pieces)
    count = m**level
    cap = cell_cap()
    if count > cap:
        raise ResourceLimitError(
            f"cover at level {level} would hold {count} intervals, above the "
            f"cap {cap} (raise {CELL_CAP_ENV} to override)"
        )
    lefts = np.zeros(1)
    widths = np.ones(1)
    masses = np.ones(1)
    for _ in range(level):
        lefts = (lefts[:, None] + widths[:, None] * spec.offsets[None, :]).reshape(-1)
        masses = (masses[:, None] * spec.weights[None, :]).reshape(-1)
        widths = (widths[:, None] * spec.ratios[None, :]).reshape(-1)
    return Cover(level, lefts, lefts + widths, masses)


@dataclass(frozen=True)
class DimensionEstimate:
    value: float
    stderr: float
    method: str  # "similarity" or "box-counting"
    levels_used: tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "stderr": self.stderr,
            "method": self.method,
            "levels_used": list(self.levels_used),
        }


def similarity_dimension(spec: IfsSpec) -> DimensionEstimate:
    """Dimension from the contraction ratios: the s with sum(r_i**s) = 1.

    Equal ratios give the closed form log(m)/log(1/a); unequal ratios are
    solved by bracketed root finding to |sum r_i**s - 1| < 1e-12.
    """
    r = spec.ratios
    if float(np.ptp(r)) < 1e-15:
        s = math.log(len(r)) / math.log(1.0 / float(r[0]))
        return DimensionEstimate(s, 0.0, "similarity", (0, 0))

    def moran(s):
        return float(np.sum(r**s) - 1.0)

    # gaps force sum(r_i) < 1, so the root is bracketed by [0, 1]
    s = optimize.brentq(moran, 0.0, 1.0, xtol=1e-15, rtol=8.9e-16, maxiter=200)
    if abs(moran(s)) >= 1e-12:
        raise NumericError(f"root residual {moran(s):.3e} at s={s}")
    return DimensionEstimate(float(s), 0.0, "similarity", (0, 0))


def _boxes_for_cover(lefts: np.ndarray, rights: np.ndarray, eps: float) -> int:
    # grid of exactly round(1/eps) boxes over [0,1], the last one closed
    nbox = int(round(1.0 / eps))
    lo = np.minimum(np.floor(lefts / eps).astype(np.int64), nbox - 1)
    hi = np.minimum(np.floor(rights / eps).astype(np.int64), nbox - 1)
    prev_hi = np.concatenate(([np.int64(-1)], np.maximum.accumulate(hi)[:-1]))
    eff_lo = np.maximum(lo, prev_hi + 1)
    return int(np.maximum(0, hi - eff_lo + 1).sum())


def _boxes_for_points(points: np.ndarray, eps: float) -> int:
    nbox = int(round(1.0 / eps))
    idx = np.minimum(np.floor(points / eps).astype(np.int64), nbox - 1)
    return int(np.unique(idx).size)


def box_counting_dimension(source, grid_exponents=None) -> DimensionEstimate:
    """OLS slope of log N(eps) against log(1/eps) over dyadic grids eps = 2**-k.

    ``source`` is either a :class:`Cover` or a 1-d array of points in [0,1].
    The default grid for a cover spans exponents 4..min(level-2, 16): the
    upper end keeps the boxes coarser than the cover intervals, and the grids
    at k < 4 are dropped because a set spanning [0,1] saturates them (almost
    every coarse box is occupied), which biases the slope upward.
    """
    if isinstance(source, Cover):
        if grid_exponents is None:
            hi = min(source.level - 2, 16)
            if hi < 7:
                raise ValidationError(
                    "cover too shallow for the default grid; pass grid_exponents"
                )
            grid_exponents = range(4, hi + 1)
        lefts, rights = source.lefts, source.rights

        def count(eps):
            return _boxes_for_cover(lefts, rights, eps)

    else:
        pts = np.asarray(source, dtype=float).reshape(-1)
        if pts.size == 0:
            raise ValidationError("empty point sample")
        if pts.min() < 0.0 or pts.max() > 1.0:
            raise DomainError("points outside [0,1]")
        if grid_exponents is None:
            grid_exponents = range(2, 9)

        def count(eps):
            return _boxes_for_points(pts, eps)

    ks = np.array(sorted({int(k) for k in grid_exponents}))
    if ks.size < 4:
        raise ValidationError("need at least 4 grid sizes")
    if ks[0] < 1:
        raise ValidationError("grid exponents must be >= 1")

    counts = np.array([count(2.0**-k) for k in ks], dtype=float)
    if np.all(counts == counts[0]):
        if counts[0] == 1.0:
            # a single occupied box at every size: a point, dimension zero
            return DimensionEstimate(0.0, 0.0, "box-counting", (int(ks[0]), int(ks[-1])))
        raise NumericError(
            f"box counts saturated at N={int(counts[0])} for every grid size"
        )
    res = stats.linregress(ks * math.log(2.0), np.log(counts))
    return DimensionEstimate(
        float(res.slope), float(res.stderr), "box-counting", (int(ks[0]), int(ks[-1]))
    )


def staircase_profile(spec: IfsSpec, xs, tol: float = STAIRCASE_TOL) -> np.ndarray:
    """Vectorised staircase evaluation; see :func:`staircase_eval`."""
    if tol <= 0.0:
        raise ValidationError("tol must be positive")
    arr = np.ascontiguousarray(xs, dtype=np.float64)
    flat = arr.reshape(-1)
    if flat.size and (flat.min() < 0.0 or flat.max() > 1.0):
        raise DomainError("staircase argument outside [0,1]")
    out = _kernels.staircase_batch(
        spec.offsets,
        spec.rights,
        spec.ratios,
        spec.weights,
        spec.cum_weights,
        flat,
        float(tol),
        STAIRCASE_MAX_DEPTH,
    )
    return out.reshape(arr.shape)


def staircase_eval(spec: IfsSpec, x: float, tol: float = STAIRCASE_TOL) -> float:
    """Cumulative mass of [0, x] under the IFS measure.

    Descends through the pieces, accumulating the weights to the left.  A
    point inside a gap terminates exactly (the staircase is locally constant
    there); otherwise descent stops once the remaining mass window drops
    below ``tol``, so the returned value is within ``tol`` of the exact one.
    """
    return float(staircase_profile(spec, np.array([float(x)]), tol)[0])


def sample_gap_crossings(spec: IfsSpec, us) -> tuple[np.ndarray, np.ndarray]:
    """Locate the gap containing each uniform point ``u``.

    Returns the gap widths (in global scale) and the staircase plateau over
    each gap.  Almost every point of [0,1] lies in some gap; descent is
    capped at STAIRCASE_MAX_DEPTH levels for the measure-zero remainder.
    """
    arr = np.ascontiguousarray(us, dtype=np.float64).reshape(-1)
    if arr.size and (arr.min() < 0.0 or arr.max() >= 1.0):
        raise DomainError("gap sampling needs points in [0,1)")
    widths, plateaus = _kernels.sample_gaps(
        spec.offsets,
        spec.rights,
        spec.ratios,
        spec.weights,
        spec.cum_weights,
        arr,
        STAIRCASE_MAX_DEPTH,
    )
    return widths, plateaus

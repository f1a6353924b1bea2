"""Structure functions, scaling-exponent fits, and the spectrum transforms.

S_q(tau) is the mean of |v(t+tau) - v(t)|**q over all sample pairs at lag
tau.  Power-law scaling S_q ~ tau**xi(q) is fitted by OLS in log-log, and
xi(q) is exchanged with a spectrum D(h) through the conjugate pair

    xi(q) = inf_h [q h + 1 - D(h)],      D(h) = inf_q [q h + 1 - xi(q)],

evaluated as grid infima so no smoothness of D is assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import _kernels
from ._io import write_csv
from .errors import DomainError, NumericError, ValidationError
from .generators import VelocitySeries

DEFAULT_Q_GRID = np.arange(-8.0, 8.0 + 1e-9, 0.25)
DEFAULT_SPECTRUM_FLOOR = -10.0


@dataclass(frozen=True, eq=False)
class StructureFunctionTable:
    """Empirical S_q over a (q, tau) grid, with pair counts per cell."""

    q: np.ndarray
    tau: np.ndarray
    S: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        nq, nt = self.q.shape[0], self.tau.shape[0]
        if self.S.shape != (nq, nt) or self.counts.shape != (nq, nt):
            raise ValidationError("S and counts must have shape (len(q), len(tau))")
        if np.any(np.diff(self.tau) <= 0.0):
            raise ValidationError("tau grid must be strictly increasing")
        filled = self.counts > 0
        if np.any(self.S[filled] < 0.0):
            raise ValidationError("structure functions must be nonnegative")

    def to_csv(self, path: str, comments=()) -> None:
        rows = []
        for qi, q in enumerate(self.q.tolist()):
            for ti, tau in enumerate(self.tau.tolist()):
                rows.append((q, tau, self.S[qi, ti], int(self.counts[qi, ti])))
        write_csv(path, "q,tau,S,count", rows, comments)


def structure_functions(series: VelocitySeries, q_grid, tau_grid=None) -> StructureFunctionTable:
    """Empirical structure functions of a series.

    Each requested lag is mapped to the nearest integer multiple of the
    sample spacing; lags beyond the series span produce empty cells (count 0)
    that the fits skip.  Moments require q >= 0.
    """
    q = np.atleast_1d(np.asarray(q_grid, dtype=float))
    if np.any(q < 0.0):
        raise DomainError(
            "negative moments are not estimated from series (near-zero "
            "increments make them unstable); use the analytic transforms"
        )
    dt = series.spacing
    if tau_grid is None:
        hi = max(4, series.n // 4)
        lags = np.unique(np.rint(np.geomspace(1, hi, 33)).astype(np.int64))
        tau = lags * dt
    else:
        tau = np.atleast_1d(np.asarray(tau_grid, dtype=float))
        if np.any(tau <= 0.0):
            raise ValidationError("lags must be positive")
        if np.any(np.diff(tau) <= 0.0):
            raise ValidationError("tau grid must be strictly increasing")
        lags = np.rint(tau / dt).astype(np.int64)
    S, counts = _kernels.structure_sums(
        np.ascontiguousarray(series.v, dtype=np.float64), lags, np.ascontiguousarray(q)
    )
    if not np.any(counts > 0):
        raise ValidationError("no usable lags: every requested tau falls outside the series")
    return StructureFunctionTable(q, tau, S, counts)


def average_tables(tables) -> StructureFunctionTable:
    """Pair-count-weighted average of tables from an ensemble of series.

    All tables must share the same (q, tau) grids.  Averaging independent
    realisations shrinks the estimator noise without touching its scaling.
    """
    tables = list(tables)
    if not tables:
        raise ValidationError("no tables to average")
    first = tables[0]
    for t in tables[1:]:
        if not (np.array_equal(t.q, first.q) and np.array_equal(t.tau, first.tau)):
            raise ValidationError("tables must share identical q and tau grids")
    weighted = np.zeros_like(first.S)
    counts = np.zeros_like(first.counts)
    for t in tables:
        weighted += np.where(t.counts > 0, t.S, 0.0) * t.counts
        counts += t.counts
    S = np.where(counts > 0, weighted / np.maximum(counts, 1), np.nan)
    return StructureFunctionTable(first.q.copy(), first.tau.copy(), S, counts)


@dataclass(frozen=True, eq=False)
class ScalingFit:
    """Per-q scaling exponents with regression diagnostics."""

    q: np.ndarray
    xi: np.ndarray
    stderr: np.ndarray
    r_squared: np.ndarray
    fit_range: tuple[float, float] | None = None

    def to_dict(self) -> dict:
        out = {
            "q": self.q.tolist(),
            "xi": self.xi.tolist(),
            "stderr": self.stderr.tolist(),
            "r2": self.r_squared.tolist(),
        }
        if self.fit_range is not None:
            out["fit_min"], out["fit_max"] = float(self.fit_range[0]), float(self.fit_range[1])
        return out


def _loglog_slope(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    if np.allclose(y, y[0], rtol=0.0, atol=1e-300):
        # an exactly flat line is a perfect zero-exponent power law
        return 0.0, 0.0, 1.0
    res = stats.linregress(x, y)
    return float(res.slope), float(res.stderr), float(res.rvalue**2)


def fit_exponents(table: StructureFunctionTable, fit_range=None) -> ScalingFit:
    """OLS exponents log S_q ~ xi(q) log tau over the fit range.

    Needs at least 4 usable lags (nonzero S, nonzero count) per moment.
    """
    if fit_range is None:
        fit_range = (float(table.tau[0]), float(table.tau[-1]))
    lo, hi = float(fit_range[0]), float(fit_range[1])
    if not lo < hi:
        raise ValidationError(f"empty fit range ({lo}, {hi})")
    xi = np.empty_like(table.q)
    stderr = np.empty_like(table.q)
    r2 = np.empty_like(table.q)
    in_range = (table.tau >= lo) & (table.tau <= hi)
    for i, q in enumerate(table.q.tolist()):
        if q < 0.0:
            raise ValidationError("negative moments cannot be fitted from a series")
        usable = (
            in_range
            & (table.counts[i] > 0)
            & np.isfinite(table.S[i])
            & (table.S[i] > 0.0)
        )
        if int(usable.sum()) < 4:
            raise NumericError(
                f"only {int(usable.sum())} usable lags for q={q}; need at least 4"
            )
        xi[i], stderr[i], r2[i] = _loglog_slope(
            np.log(table.tau[usable]), np.log(table.S[i][usable])
        )
    return ScalingFit(table.q.copy(), xi, stderr, r2, (lo, hi))


@dataclass(frozen=True, eq=False)
class Spectrum:
    """A sampled spectrum D(h) on an increasing grid of scaling exponents."""

    h: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        if self.h.shape != self.D.shape or self.h.ndim != 1 or self.h.size < 1:
            raise ValidationError("need matching 1-d h and D arrays")
        if self.h.size > 1 and np.any(np.diff(self.h) <= 0.0):
            raise ValidationError("h grid must be strictly increasing")
        if np.any(self.D > 1.0 + 1e-9):
            raise ValidationError(
                "D(h) must not exceed 1: the codimension 1 - D(h) is nonnegative"
            )

    def to_csv(self, path: str, comments=()) -> None:
        write_csv(path, "h,D", zip(self.h.tolist(), self.D.tolist()), comments)

    @classmethod
    def from_csv(cls, path: str) -> "Spectrum":
        hs, Ds = [], []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#") or line == "h,D":
                    continue
                a, _, b = line.partition(",")
                hs.append(float(a))
                Ds.append(float(b))
        if not hs:
            raise ValidationError(f"no spectrum data in {path}")
        return cls(np.asarray(hs), np.asarray(Ds))


def legendre_xi_from_D(spectrum: Spectrum, q_grid) -> ScalingFit:
    """Exponents xi(q) = inf_h [q h + 1 - D(h)], a grid infimum.

    The output is concave in q by construction (a pointwise infimum of
    affine functions of q).  A single-point spectrum {D(h0) = 1} collapses
    to the monofractal line xi(q) = q h0.
    """
    q = np.atleast_1d(np.asarray(q_grid, dtype=float))
    if q.size < 1:
        raise ValidationError("empty q grid")
    values = q[:, None] * spectrum.h[None, :] + 1.0 - spectrum.D[None, :]
    xi = np.min(values, axis=1)
    zeros = np.zeros_like(q)
    return ScalingFit(q, xi, zeros, np.full_like(q, np.nan), None)


def legendre_D_from_xi(source, h_grid, floor: float = DEFAULT_SPECTRUM_FLOOR) -> Spectrum:
    """Spectrum D(h) = inf_q [q h + 1 - xi(q)], floored at ``floor``.

    ``source`` is a ScalingFit or a (q, xi) pair.  Include q = 0 with
    xi(0) = 0 in the grid to guarantee D <= 1.
    """
    if isinstance(source, ScalingFit):
        q, xi = source.q, source.xi
    else:
        q, xi = (np.asarray(a, dtype=float) for a in source)
    keep = np.isfinite(xi)
    if int(keep.sum()) < 1:
        raise ValidationError("no finite exponents to transform")
    q, xi = q[keep], xi[keep]
    h = np.atleast_1d(np.asarray(h_grid, dtype=float))
    if h.size < 1:
        raise ValidationError("empty h grid")
    D = np.min(h[:, None] * q[None, :] + 1.0 - xi[None, :], axis=1)
    return Spectrum(h, np.maximum(D, floor))


@dataclass(frozen=True)
class ConcavityReport:
    concave: bool
    violations: tuple
    max_defect: float


def concavity_report(fit: ScalingFit) -> ConcavityReport:
    """Check concavity of xi(q) through second differences.

    A point violates concavity when its second difference exceeds twice the
    propagated regression error (plus a 1e-12 floating-point allowance).
    """
    q, xi, se = fit.q, fit.xi, fit.stderr
    if q.size < 3:
        raise ValidationError("need at least 3 exponents for a concavity check")
    uniform = np.allclose(np.diff(q), q[1] - q[0], rtol=1e-9, atol=1e-12)
    violations = []
    max_defect = -math.inf
    for i in range(1, q.size - 1):
        if uniform:
            d2 = xi[i + 1] - 2.0 * xi[i] + xi[i - 1]
        else:
            left = (xi[i] - xi[i - 1]) / (q[i] - q[i - 1])
            right = (xi[i + 1] - xi[i]) / (q[i + 1] - q[i])
            d2 = right - left
        tol = 2.0 * math.sqrt(se[i - 1] ** 2 + 4.0 * se[i] ** 2 + se[i + 1] ** 2) + 1e-12
        max_defect = max(max_defect, d2)
        if d2 > tol:
            violations.append({"q": float(q[i]), "second_diff": float(d2), "tol": float(tol)})
    return ConcavityReport(not violations, tuple(violations), float(max_defect))


def flatness(table: StructureFunctionTable) -> tuple[np.ndarray, np.ndarray]:
    """F(tau) = S_4 / S_2**2 per lag; 3 for Gaussian increments."""
    try:
        i2 = int(np.flatnonzero(table.q == 2.0)[0])
        i4 = int(np.flatnonzero(table.q == 4.0)[0])
    except IndexError as exc:
        raise ValidationError("flatness needs q = 2 and q = 4 in the table") from exc
    with np.errstate(divide="ignore", invalid="ignore"):
        F = table.S[i4] / table.S[i2] ** 2
    return table.tau.copy(), F

"""Velocity-series generators.

Three mechanisms produce series with known or controllable scaling:

* multiplicative cascades refined to a measure grid, with the closed-form
  moment exponent zeta(q) = 1 - log_b(sum w_i**q) for deterministic weights;
* subordination: a Gaussian walk run in cascade time theta(t), which imprints
  the cascade scaling on the walk (expected exponent zeta(q/2));
* valuation jumps: a signed walk whose step sizes phi * log(1/x) come from
  staircase plateaus phi and gap widths x of an IFS, giving bursty,
  heavy-tailed increments that re-Gaussianise under aggregation;

plus a plain Brownian walk as the non-intermittent control.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._io import fmt, write_csv
from .errors import DomainError, ResourceLimitError, ValidationError
from .fractal import CELL_CAP_ENV, IfsSpec, cell_cap, sample_gap_crossings

MIN_SAMPLES = 2**10


@dataclass(frozen=True)
class CascadeSpec:
    """A multiplicative cascade: branching, depth, and the weight law.

    ``weights`` fixes a deterministic cascade (must sum to 1).  Leaving it
    None selects log-normal weights exp(mu + sigma*Z), normalised within each
    family of siblings so total mass is conserved pathwise.  The ``mu`` shift
    cancels under that normalisation and is kept only for completeness.
    """

    branching: int
    depth: int
    weights: tuple[float, ...] | None = None
    mu: float = 0.0
    sigma: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.branching < 2:
            raise ValidationError(f"branching {self.branching} must be >= 2")
        if self.depth < 1:
            raise ValidationError(f"depth {self.depth} must be >= 1")
        cap = cell_cap()
        if self.branching**self.depth > cap:
            raise ResourceLimitError(
                f"cascade would hold {self.branching ** self.depth} cells, above "
                f"the cap {cap} (raise {CELL_CAP_ENV} to override)"
            )
        if self.weights is not None:
            w = tuple(float(x) for x in self.weights)
            object.__setattr__(self, "weights", w)
            if len(w) != self.branching:
                raise ValidationError(
                    f"expected {self.branching} weights, got {len(w)}"
                )
            if any(x <= 0.0 for x in w):
                raise ValidationError("deterministic weights must be positive")
            if abs(math.fsum(w) - 1.0) > 1e-12:
                raise ValidationError(
                    f"weights sum to {math.fsum(w)}, expected 1 within 1e-12"
                )
        else:
            if self.sigma is None:
                raise ValidationError("give either weights or a log-normal sigma")
            if self.sigma < 0.0:
                raise ValidationError(f"sigma {self.sigma} must be >= 0")

    @property
    def is_deterministic(self) -> bool:
        return self.weights is not None


@dataclass(frozen=True, eq=False)
class MeasureGrid:
    """Cell masses of a cascade at its finest depth."""

    branching: int
    depth: int
    masses: np.ndarray

    def __post_init__(self):
        expected = self.branching**self.depth
        if self.masses.shape != (expected,):
            raise ValidationError(
                f"expected {expected} masses, got shape {self.masses.shape}"
            )
        if not np.all(np.isfinite(self.masses)) or np.any(self.masses < 0.0):
            raise ValidationError("masses must be finite and nonnegative")
        total = float(np.sum(self.masses))
        if abs(total - 1.0) > 1e-9:
            raise ValidationError(f"masses sum to {total}, expected 1 within 1e-9")

    def cdf(self, u) -> np.ndarray:
        """Cumulative mass of [0, u], linear within the finest cells."""
        arr = np.asarray(u, dtype=float)
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise DomainError("cdf argument outside [0, 1]")
        cells = self.masses.shape[0]
        cum = np.concatenate(([0.0], np.cumsum(self.masses)))
        pos = arr * cells
        idx = np.minimum(pos.astype(np.int64), cells - 1)
        frac = pos - idx
        return cum[idx] + self.masses[idx] * frac


def build_cascade(spec: CascadeSpec) -> MeasureGrid:
    """Refine unit mass down to branching**depth cells.  Seeded, deterministic."""
    b = spec.branching
    masses = np.ones(1)
    if spec.is_deterministic:
        w = np.asarray(spec.weights)
        for _ in range(spec.depth):
            masses = (masses[:, None] * w[None, :]).reshape(-1)
    else:
        rng = np.random.default_rng(spec.seed)
        for _ in range(spec.depth):
            raw = np.exp(spec.mu + spec.sigma * rng.standard_normal((masses.size, b)))
            w = raw / raw.sum(axis=1, keepdims=True)
            masses = (masses[:, None] * w).reshape(-1)
    return MeasureGrid(b, spec.depth, masses)


def analytic_zeta(weights, q):
    """Moment-scaling exponent zeta(q) = 1 - log_b(sum w_i**q), deterministic only.

    zeta(0) = 0, zeta(1) = 1 (mass conservation) and zeta is concave in q.
    A subordinated series built on these weights scales with zeta(q/2).
    """
    if isinstance(weights, CascadeSpec):
        if not weights.is_deterministic:
            raise ValidationError(
                "random-weight cascades have no closed-form exponents"
            )
        weights = weights.weights
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size < 2:
        raise ValidationError("need at least two weights")
    if np.any(w <= 0.0) or abs(float(np.sum(w)) - 1.0) > 1e-12:
        raise ValidationError("weights must be positive and sum to 1")
    q_arr = np.asarray(q, dtype=float)
    zeta = 1.0 - np.log(np.sum(w[:, None] ** q_arr.reshape(1, -1), axis=0)) / np.log(
        w.size
    )
    return float(zeta[0]) if q_arr.ndim == 0 else zeta.reshape(q_arr.shape)


@dataclass(frozen=True, eq=False)
class VelocitySeries:
    """A sampled velocity signal with its integral scales."""

    t: np.ndarray
    v: np.ndarray
    v0: float
    tau0: float
    generator_tag: str
    seed: object = None

    def __post_init__(self):
        if self.t.shape != self.v.shape or self.t.ndim != 1 or self.t.size < 2:
            raise ValidationError("need matching 1-d t and v arrays of length >= 2")
        if not (np.all(np.isfinite(self.t)) and np.all(np.isfinite(self.v))):
            raise ValidationError("series values must be finite")
        if np.any(np.diff(self.t) <= 0.0):
            raise ValidationError("sample times must be strictly increasing")
        if self.v0 <= 0.0 or self.tau0 <= 0.0:
            raise ValidationError("integral scales v0 and tau0 must be positive")

    @property
    def n(self) -> int:
        return self.t.shape[0]

    @property
    def spacing(self) -> float:
        return float((self.t[-1] - self.t[0]) / (self.n - 1))

    @property
    def span(self) -> float:
        return float(self.t[-1] - self.t[0])

    def to_csv(self, path: str, comments=()) -> None:
        meta = [
            f"generator = {self.generator_tag}",
            f"seed = {self.seed}",
            f"v0 = {fmt(self.v0)}",
            f"tau0 = {fmt(self.tau0)}",
        ]
        write_csv(path, "t,v", zip(self.t.tolist(), self.v.tolist()), list(comments) + meta)

    @classmethod
    def from_csv(cls, path: str) -> "VelocitySeries":
        meta = {}
        ts, vs = [], []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    body = line[1:].strip()
                    if "=" in body:
                        key, _, val = body.partition("=")
                        meta[key.strip()] = val.strip()
                    continue
                if line == "t,v":
                    continue
                a, _, b = line.partition(",")
                ts.append(float(a))
                vs.append(float(b))
        if not ts:
            raise ValidationError(f"no series data in {path}")
        t = np.asarray(ts)
        v = np.asarray(vs)
        v0 = float(meta.get("v0", 1.0))
        tau0 = float(meta.get("tau0", t[-1] - t[0] if t[-1] > t[0] else 1.0))
        tag = meta.get("generator", "imported")
        return cls(t, v, v0, tau0, tag, meta.get("seed"))


def _check_samples(n: int) -> None:
    if n < MIN_SAMPLES:
        raise ValidationError(f"need at least {MIN_SAMPLES} samples, got {n}")


def synthesize_subordinated(
    spec: CascadeSpec,
    v0: float = 1.0,
    tau0: float = 1.0,
    n_samples: int = 2**14,
    seed=0,
) -> VelocitySeries:
    """Gaussian walk in cascade time: v(t) = v0 * W(theta(t)).

    theta is the running mass of the cascade measure, so increments inherit
    its scaling; with deterministic weights the structure functions scale
    with exponent zeta(q/2) for lags above the finest cell.
    """
    _check_samples(n_samples)
    grid = build_cascade(spec)
    u = np.linspace(0.0, 1.0, n_samples)
    theta = grid.cdf(u)
    dtheta = np.maximum(np.diff(theta), 0.0)
    g = np.random.default_rng(seed).standard_normal(n_samples - 1)
    walk = np.concatenate(([0.0], np.cumsum(np.sqrt(dtheta) * g)))
    return VelocitySeries(u * tau0, v0 * walk, v0, tau0, "subordinated", seed)


def synthesize_inversion_jumps(
    ifs: IfsSpec,
    v0: float = 1.0,
    tau0: float = 1.0,
    n_steps: int = 2**14,
    seed=0,
) -> VelocitySeries:
    """Signed jump walk driven by gap crossings of an IFS.

    Each step places a uniform point in [0,1); the gap containing it has
    width x and staircase plateau phi, and v/v0 jumps by the increment
    phi * log(1/x) with a fair random sign.  Deep gaps are rare but carry
    large increments, so small-lag increments are strongly super-Gaussian
    while aggregation over many jumps returns them toward Gaussian.
    """
    _check_samples(n_steps)
    rng = np.random.default_rng(seed)
    us = rng.random(n_steps - 1)
    signs = np.where(rng.random(n_steps - 1) < 0.5, -1.0, 1.0)
    widths, plateaus = sample_gap_crossings(ifs, us)
    steps = plateaus * np.log(1.0 / widths)
    v = v0 * (1.0 + np.concatenate(([0.0], np.cumsum(signs * steps))))
    t = np.arange(n_steps) * (tau0 / (n_steps - 1))
    return VelocitySeries(t, v, v0, tau0, "inversion-jumps", seed)


def brownian_baseline(v0: float = 1.0, n_samples: int = 2**14, seed=0) -> VelocitySeries:
    """Plain Gaussian walk scaled by v0, on unit time steps.  The control case."""
    _check_samples(n_samples)
    g = np.random.default_rng(seed).standard_normal(n_samples - 1)
    v = v0 * np.concatenate(([0.0], np.cumsum(g)))
    t = np.arange(n_samples, dtype=float)
    return VelocitySeries(t, v, v0, float(n_samples), "brownian", seed)

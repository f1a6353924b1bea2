"""Ultrametric valuation machinery.

Relative infinitesimals below a scale delta, the finite-scale valuation
log(delta/x)/log(1/delta), inversion-rule jumps tau_plus * tau_minus**(1+a) = 1,
power-law deformations of a small variable, and the measure-conservation
identity that ties the contraction a, the multiplier p and the dimension
s = log(p)/log(1/a) together.

All identities are evaluated in the log domain so they stay exact down to
scales near the double-precision floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError
from .fractal import STAIRCASE_TOL, IfsSpec, staircase_eval


def finite_valuation(delta: float, xtilde: float) -> float:
    """Valuation of 0 < xtilde < delta at finite scale: log(delta/x)/log(1/delta).

    For xtilde = lam * delta**(1+l) this equals l - log(lam)/log(1/delta),
    converging to l as delta -> 0 at rate 1/log(1/delta).
    """
    if not 0.0 < delta < 1.0:
        raise DomainError(f"scale delta={delta} outside (0, 1)")
    if not 0.0 < xtilde < delta:
        raise DomainError(f"need 0 < xtilde < delta, got xtilde={xtilde}, delta={delta}")
    return (math.log(delta) - math.log(xtilde)) / -math.log(delta)


def family_valuation(delta: float, lam: float, l: float) -> float:
    """Valuation of lam * delta**(1+l), computed without forming the product.

    Equals l - log(lam)/log(1/delta) exactly, valid for scales so small that
    delta**(1+l) would underflow.
    """
    if not 0.0 < delta < 1.0:
        raise DomainError(f"scale delta={delta} outside (0, 1)")
    if lam <= 0.0:
        raise DomainError(f"coefficient lam={lam} must be positive")
    return l - math.log(lam) / math.log(1.0 / delta)


@dataclass(frozen=True)
class RelativeInfinitesimal:
    """A quantity lam * delta**(1+l) sitting below its scale delta."""

    delta: float
    lam: float
    l: float

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValidationError(f"delta={self.delta} outside (0, 1)")
        if self.lam <= 0.0:
            raise ValidationError(f"lam={self.lam} must be positive")
        if not 0.0 < self.l < 1.0:
            raise ValidationError(f"exponent l={self.l} outside (0, 1)")
        # 0 < value < delta iff lam * delta**l < 1; check in the log domain
        if math.log(self.lam) + self.l * math.log(self.delta) >= 0.0:
            raise ValidationError(
                f"lam*delta**l = {self.lam}*{self.delta}**{self.l} >= 1: "
                "the value would not sit below its scale"
            )

    @property
    def value(self) -> float:
        """The represented number lam * delta**(1+l); may underflow to 0.0."""
        return math.exp(math.log(self.lam) + (1.0 + self.l) * math.log(self.delta))

    @property
    def scale_invariant(self) -> float:
        """The rescaled form value/delta = lam * delta**l."""
        return math.exp(math.log(self.lam) + self.l * math.log(self.delta))

    def valuation(self) -> float:
        return family_valuation(self.delta, self.lam, self.l)


@dataclass(frozen=True)
class InversionJump:
    """A jump across a gap: tau_plus * tau_minus**(1+a) = 1."""

    tau_minus: float
    a: float
    tau_plus: float

    def __post_init__(self):
        if not 0.0 < self.tau_minus < 1.0:
            raise ValidationError(f"tau_minus={self.tau_minus} outside (0, 1)")
        if self.a < 0.0:
            raise ValidationError(f"jump exponent a={self.a} must be >= 0")
        if self.tau_plus <= 1.0:
            raise ValidationError(f"tau_plus={self.tau_plus} must exceed 1")
        residual = abs(
            math.exp(math.log(self.tau_plus) + (1.0 + self.a) * math.log(self.tau_minus))
            - 1.0
        )
        if residual > 1e-12:
            raise ValidationError(f"inversion constraint violated by {residual:.3e}")

    @property
    def residual(self) -> float:
        return abs(
            math.exp(math.log(self.tau_plus) + (1.0 + self.a) * math.log(self.tau_minus))
            - 1.0
        )


def inversion_image(tau_minus: float, a: float) -> InversionJump:
    """Image of tau_minus under the inversion rule, tau_plus = tau_minus**-(1+a)."""
    if not 0.0 < tau_minus < 1.0:
        raise DomainError(
            f"tau_minus={tau_minus} outside (0, 1); inversion acts about tau=1"
        )
    if a < 0.0:
        raise DomainError(f"jump exponent a={a} must be >= 0")
    tau_plus = math.exp(-(1.0 + a) * math.log(tau_minus))
    return InversionJump(tau_minus, a, tau_plus)


def valuation_exponent(tau_minus: float, tau_plus: float) -> float:
    """Jump exponent recovered from the pair: log(tau_plus)/log(1/tau_minus) - 1."""
    if not 0.0 < tau_minus < 1.0:
        raise DomainError(f"tau_minus={tau_minus} outside (0, 1)")
    if tau_plus <= 1.0:
        raise DomainError(f"tau_plus={tau_plus} must exceed 1")
    return math.log(tau_plus) / math.log(1.0 / tau_minus) - 1.0


def deform(x: float, phi: float) -> tuple[float, float]:
    """Valuation-weighted deformation of x: (x**(1-phi), x**(1+phi)).

    The geometric mean of the pair is x: x_plus * x_minus = x**2.
    """
    if not 0.0 < x < 1.0:
        raise DomainError(f"x={x} outside (0, 1)")
    if not 0.0 <= phi <= 1.0:
        raise DomainError(f"phi={phi} outside [0, 1]")
    # x * x**(-phi) keeps phi = 0 exactly at (x, x)
    return x * math.pow(x, -phi), x * math.pow(x, phi)


def scale_invariant_increment(x: float, phi: float) -> float:
    """Jump size phi * log(1/x) of the rescaled variable across a gap of width x."""
    if not 0.0 < x < 1.0:
        raise DomainError(f"x={x} outside (0, 1)")
    if phi < 0.0:
        raise DomainError(f"phi={phi} must be >= 0")
    return phi * math.log(1.0 / x)


def linear_increment(x: float, phi: float) -> float:
    """Companion linear form phi * x * log(1/x) of the un-rescaled variable."""
    return x * scale_invariant_increment(x, phi)


def cascade_dimension(a: float, p: float) -> float:
    """Dimension log(p)/log(1/a) of the set built from contraction a, multiplier p."""
    _check_ap(a, p)
    return math.log(p) / math.log(1.0 / a)


def inverted_cascade_dimension(a: float, p: float) -> float:
    """Dimension log(1/(a*p))/log(p) of the set carried by the inverted variable."""
    _check_ap(a, p)
    return math.log(1.0 / (a * p)) / math.log(p)


def _check_ap(a: float, p: float) -> None:
    if not 0.0 < a < 1.0:
        raise DomainError(f"contraction a={a} outside (0, 1)")
    if not 1.0 < p < 1.0 / a:
        raise DomainError(f"multiplier p={p} outside (1, 1/a) = (1, {1.0 / a})")


@dataclass(frozen=True)
class ConservationCheck:
    """Log-domain defect of the refinement identity t = t*a**(n log 1/t) * p**(n log T)."""

    t: float
    a: float
    p: float
    n: int
    t_big: float  # the fattened variable T, defaults to t**(-1/s)
    s: float = field(repr=False)
    residual: float = 0.0


def measure_conservation_residual(
    t: float, a: float, p: float, n: int, t_big_factor: float = 1.0
) -> ConservationCheck:
    """Check that the n-fold refinement conserves the linear measure of (0, t).

    With s = log(p)/log(1/a) and T = t**(-1/s), the identity
    ``n*log(1/t)*log(a) + n*log(T)*log(p) = 0`` holds for every n.  A factor
    ``t_big_factor != 1`` perturbs T and exposes the defect, which grows as
    ``n * log(p) * log(t_big_factor)``.
    """
    if not 0.0 < t < 1.0:
        raise DomainError(f"t={t} outside (0, 1)")
    _check_ap(a, p)
    if n < 1:
        raise DomainError(f"n={n} must be >= 1")
    if t_big_factor <= 0.0:
        raise DomainError(f"t_big_factor={t_big_factor} must be positive")
    s = cascade_dimension(a, p)
    log_t_big = -math.log(t) / s + math.log(t_big_factor)
    residual = abs(n * math.log(1.0 / t) * math.log(a) + n * log_t_big * math.log(p))
    return ConservationCheck(t, a, p, n, math.exp(log_t_big), s, residual)


def ultrametric_defect(
    delta: float, l1: float, l2: float, lam1: float = 1.0, lam2: float = 1.0
) -> float:
    """Deviation of the valuation of a sum from the smaller of the valuations.

    For x_i = lam_i * delta**(1+l_i) the valuation of x_1 + x_2 approaches
    min(v(x_1), v(x_2)) as delta -> 0; the finite-scale defect is bounded by
    log(2)/log(1/delta) and shrinks with the scale.  Since the sum exceeds
    both terms, the ultrametric bound v(x_1+x_2) <= max(v(x_1), v(x_2)) holds
    with room to spare at every finite delta.
    """
    if not 0.0 < delta < 1.0:
        raise DomainError(f"scale delta={delta} outside (0, 1)")
    if lam1 <= 0.0 or lam2 <= 0.0:
        raise DomainError("coefficients must be positive")
    ld = math.log(delta)
    lx1 = math.log(lam1) + (1.0 + l1) * ld
    lx2 = math.log(lam2) + (1.0 + l2) * ld
    v1 = (ld - lx1) / -ld
    v2 = (ld - lx2) / -ld
    v_sum = (ld - float(np.logaddexp(lx1, lx2))) / -ld
    return min(v1, v2) - v_sum


def staircase_valuation(
    spec: IfsSpec, delta: float, xtilde: float, tol: float = STAIRCASE_TOL
) -> float:
    """Valuation pushed through the staircase of ``spec``.

    The raw valuation of xtilde lands in [0,1] whenever delta**2 < xtilde
    < delta; the staircase then assigns it a plateau value, realising the
    locally constant, intermittent profile of the valuation.
    """
    nu = finite_valuation(delta, xtilde)
    if nu > 1.0:
        raise DomainError(
            f"valuation {nu} exceeds 1 (xtilde below delta**2); no staircase value"
        )
    return staircase_eval(spec, nu, tol)

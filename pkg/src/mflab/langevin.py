"""Relaxation and multiplicative-noise flow integrators.

The linear relaxation dv/dt = -v/T0 has the exact solution v0*exp(-t/T0).
Adding the scale-invariant forcing dF = v dlog(tau) with dlog(tau) = sigma dW
(Ito convention) gives geometric decay with log-normal fluctuations and the
closed-form moments log E[v**q] = q log(v0) + (-q/T0 + q(q-1) sigma**2/2) t,
used throughout the tests as oracles.  A Stratonovich variant (Euler-Heun)
is available behind the scheme flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._io import write_csv
from .errors import DomainError, ValidationError

SCHEMES = ("euler", "exact", "euler-maruyama", "euler-heun")


@dataclass(frozen=True)
class LangevinParams:
    T0: float
    sigma: float
    v0: float
    dt: float
    steps: int
    seed: object = 0
    l0: float = 1.0
    nu: float = 1.0

    def __post_init__(self):
        if self.T0 <= 0.0:
            raise ValidationError(f"relaxation time T0={self.T0} must be positive")
        if self.sigma < 0.0:
            raise ValidationError(f"noise amplitude sigma={self.sigma} must be >= 0")
        if self.dt <= 0.0:
            raise ValidationError(f"time step dt={self.dt} must be positive")
        if self.steps < 1:
            raise ValidationError(f"steps={self.steps} must be >= 1")
        if self.l0 <= 0.0 or self.nu <= 0.0:
            raise ValidationError("l0 and nu must be positive")
        if self.dt > self.T0 / 10.0:
            raise ValidationError(
                f"dt={self.dt} above the stability guard T0/10 = {self.T0 / 10.0}"
            )

    @property
    def horizon(self) -> float:
        return self.dt * self.steps

    def time_grid(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt


@dataclass(frozen=True, eq=False)
class Trajectory:
    t: np.ndarray
    v: np.ndarray
    params: LangevinParams
    scheme: str

    def __post_init__(self):
        if self.t.shape != self.v.shape:
            raise ValidationError("trajectory arrays must have equal length")
        if not np.all(np.isfinite(self.v)):
            raise ValidationError("trajectory values must be finite")
        if self.t[0] != 0.0 or self.v[0] != self.params.v0:
            raise ValidationError("trajectory must start at (0, v0)")
        if self.scheme not in SCHEMES:
            raise ValidationError(f"unknown scheme {self.scheme!r}")

    @property
    def samples(self):
        return list(zip(self.t.tolist(), self.v.tolist()))

    def to_csv(self, path: str, comments=()) -> None:
        meta = [f"scheme = {self.scheme}", f"seed = {self.params.seed}"]
        write_csv(path, "t,v", zip(self.t.tolist(), self.v.tolist()), list(comments) + meta)


def exact_relaxation(params: LangevinParams) -> Trajectory:
    """The closed-form relaxation v0 * exp(-t/T0) on the parameter grid."""
    t = params.time_grid()
    return Trajectory(t, params.v0 * np.exp(-t / params.T0), params, "exact")


def integrate_linear(params: LangevinParams, scheme: str = "euler") -> Trajectory:
    """Integrate dv/dt = -v/T0 (noise ignored).

    Forward Euler has first-order error: halving dt halves the maximum
    deviation from the exact solution.
    """
    if scheme == "exact":
        return exact_relaxation(params)
    if scheme != "euler":
        raise ValidationError(f"linear integrator supports euler/exact, not {scheme!r}")
    # forward Euler is the zero-noise limit of the stochastic update; sharing
    # the kernel keeps the sigma=0 degeneracy exact sample by sample
    paths = _kernels.em_paths(
        params.v0, params.T0, 0.0, params.dt, np.zeros((1, params.steps))
    )
    return Trajectory(params.time_grid(), paths[0], params, "euler")


def _normals(params: LangevinParams, n_paths: int) -> np.ndarray:
    return np.random.default_rng(params.seed).standard_normal((n_paths, params.steps))


def _paths(params: LangevinParams, normals: np.ndarray, scheme: str) -> np.ndarray:
    T0, sigma, v0, dt = params.T0, params.sigma, params.v0, params.dt
    if scheme == "euler-maruyama":
        return _kernels.em_paths(v0, T0, sigma, dt, normals)
    t = params.time_grid()
    if scheme == "exact":
        w = np.concatenate(
            (np.zeros((normals.shape[0], 1)), np.cumsum(normals, axis=1)), axis=1
        ) * math.sqrt(dt)
        return v0 * np.exp(-t / T0 - 0.5 * sigma**2 * t + sigma * w)
    if scheme == "euler-heun":
        # Stratonovich predictor-corrector; for linear drift/diffusion the
        # per-step factor closes to 1 + a dt + b dW + (b dW)(a dt + b dW)/2
        a = -1.0 / T0
        b = sigma
        dw = math.sqrt(dt) * normals
        factors = 1.0 + a * dt + b * dw + 0.5 * b * dw * (a * dt + b * dw)
        out = np.empty((normals.shape[0], params.steps + 1))
        out[:, 0] = v0
        out[:, 1:] = v0 * np.cumprod(factors, axis=1)
        return out
    raise ValidationError(f"unknown scheme {scheme!r}")


def integrate_langevin(params: LangevinParams, scheme: str = "euler-maruyama") -> Trajectory:
    """One path of dv = -v/T0 dt + sigma v dW under the chosen scheme.

    With sigma = 0 the Euler-Maruyama path reduces to the forward-Euler
    relaxation exactly, sample by sample.
    """
    paths = _paths(params, _normals(params, 1), scheme)
    return Trajectory(params.time_grid(), paths[0], params, scheme)


def ensemble_paths(
    params: LangevinParams, n_paths: int, scheme: str = "euler-maruyama"
) -> tuple[np.ndarray, np.ndarray]:
    """All paths of a seeded ensemble, shape (n_paths, steps + 1).

    Row i is the path fed by the i-th stream of the seeded generator, so the
    result does not depend on how the rows would be scheduled.
    """
    if n_paths < 1:
        raise ValidationError("n_paths must be >= 1")
    return params.time_grid(), _paths(params, _normals(params, n_paths), scheme)


def ensemble_moments(
    params: LangevinParams,
    n_paths: int,
    q_list=(1.0, 2.0),
    scheme: str = "euler-maruyama",
    n_times: int = 9,
) -> list[dict]:
    """Ensemble moment summaries {q, t, mean, stderr, n} on a strided time grid."""
    t, paths = ensemble_paths(params, n_paths, scheme)
    idx = np.unique(np.linspace(0, params.steps, n_times).astype(int))
    out = []
    for q in q_list:
        for j in idx:
            x = paths[:, j] ** q
            out.append(
                {
                    "q": float(q),
                    "t": float(t[j]),
                    "mean": float(np.mean(x)),
                    "stderr": float(np.std(x, ddof=1) / math.sqrt(n_paths)),
                    "n": int(n_paths),
                }
            )
    return out


def moment_exponent(T0: float, sigma: float, q: float) -> float:
    """Closed-form growth rate of log E[v**q]: -q/T0 + q(q-1) sigma**2 / 2."""
    return -q / T0 + 0.5 * q * (q - 1.0) * sigma**2


def scale_invariant_solution(tau1: float, t_grid) -> tuple[np.ndarray, np.ndarray]:
    """Solve log(1/t) dtau/dlog(1/t) = tau: tau(t) = C log(1/t).

    C is fixed by tau = tau1 at the first grid point.  The grid must stay
    strictly inside (0, 1); t = 1 makes log(1/t) vanish.
    """
    t = np.asarray(t_grid, dtype=float)
    if t.size < 1:
        raise ValidationError("empty grid")
    if t.min() <= 0.0 or t.max() >= 1.0:
        raise DomainError("grid must lie strictly inside (0, 1)")
    u = np.log(1.0 / t)
    return t, (tau1 / u[0]) * u


def log_flow_residual(t: np.ndarray, tau: np.ndarray) -> float:
    """Max defect of log(1/t) dtau/dlog(1/t) = tau by central differences."""
    t = np.asarray(t, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if t.size < 3:
        raise ValidationError("need at least 3 grid points")
    u = np.log(1.0 / t)
    d = (tau[2:] - tau[:-2]) / (u[2:] - u[:-2])
    return float(np.max(np.abs(u[1:-1] * d - tau[1:-1])))


def correlated_time(T0: float, eta: float, tau: float) -> float:
    """Correlated time T0 * (1 + eta + log(tau)); reduces to T0*(1+eta) at tau=1."""
    if T0 <= 0.0:
        raise DomainError(f"T0={T0} must be positive")
    if tau <= 0.0:
        raise DomainError(f"tau={tau} must be positive")
    return T0 * (1.0 + eta + math.log(tau))


def reynolds(l0: float, v0: float, nu: float) -> float:
    """Reynolds number l0 * v0 / nu."""
    if l0 <= 0.0 or v0 <= 0.0 or nu <= 0.0:
        raise DomainError("l0, v0 and nu must all be positive")
    return l0 * v0 / nu

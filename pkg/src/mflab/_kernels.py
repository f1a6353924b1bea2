"""Hot numeric kernels, each with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import time: numba is used when available
unless the environment variable MFLAB_NO_NUMBA is set to 1/true/yes.
``benchmarks/bench_kernels.py`` times both paths side by side through
:func:`numpy_impls` and :func:`numba_impls`.

All kernels are deterministic and consume pre-drawn random numbers, so the
two backends produce matching results (bit-identical where the arithmetic
order is the same, within 1e-12 relative for the compensated reductions).
"""

from __future__ import annotations

import os

import numpy as np

NUMBA_ENV_FLAG = "MFLAB_NO_NUMBA"


def numba_disabled_by_env() -> bool:
    return os.environ.get(NUMBA_ENV_FLAG, "").strip().lower() in ("1", "true", "yes")


# --------------------------------------------------------------------------
# staircase evaluation: recursive descent through the IFS, one point at a time
# --------------------------------------------------------------------------

def _staircase_batch_loop(offsets, rights, ratios, weights, cumw, xs, tol, max_depth):
    n = xs.shape[0]
    npieces = offsets.shape[0]
    out = np.empty(n)
    for i in range(n):
        x = xs[i]
        acc = 0.0
        mass = 1.0
        depth = 0
        while True:
            if x <= 0.0:
                out[i] = acc
                break
            if x >= 1.0:
                out[i] = acc + mass
                break
            j = -1
            for k in range(npieces):
                if x < offsets[k]:
                    break
                j = k
            if j < 0:
                out[i] = acc  # gap left of the first piece
                break
            if x > rights[j]:
                out[i] = acc + mass * cumw[j + 1]  # plateau inside a gap
                break
            acc += mass * cumw[j]
            mass *= weights[j]
            x = (x - offsets[j]) / ratios[j]
            depth += 1
            if mass < tol or depth >= max_depth:
                # remaining mass bounds the value window; midpoint halves it
                out[i] = acc + 0.5 * mass
                break
    return out


def _staircase_batch_numpy(offsets, rights, ratios, weights, cumw, xs, tol, max_depth):
    x = np.array(xs, dtype=np.float64, copy=True)
    out = np.zeros_like(x)
    acc = np.zeros_like(x)
    mass = np.ones_like(x)
    alive = np.ones(x.shape[0], dtype=bool)
    depth = 0
    while alive.any():
        idx = np.flatnonzero(alive)
        xi = x[idx]
        ai = acc[idx]
        mi = mass[idx]

        left = xi <= 0.0
        right = (~left) & (xi >= 1.0)
        j = np.searchsorted(offsets, xi, side="right") - 1
        jc = np.clip(j, 0, offsets.shape[0] - 1)
        interior = (~left) & (~right)
        left_gap = interior & (j < 0)
        in_gap = interior & (j >= 0) & (xi > rights[jc])
        descend = interior & (j >= 0) & ~in_gap

        out[idx[left]] = ai[left]
        out[idx[right]] = ai[right] + mi[right]
        out[idx[left_gap]] = ai[left_gap]
        out[idx[in_gap]] = ai[in_gap] + mi[in_gap] * cumw[jc[in_gap] + 1]

        d_idx = idx[descend]
        jd = jc[descend]
        new_acc = ai[descend] + mi[descend] * cumw[jd]
        new_mass = mi[descend] * weights[jd]
        new_x = (xi[descend] - offsets[jd]) / ratios[jd]
        depth += 1
        stop = (new_mass < tol) | (depth >= max_depth)
        out[d_idx[stop]] = new_acc[stop] + 0.5 * new_mass[stop]
        acc[d_idx] = new_acc
        mass[d_idx] = new_mass
        x[d_idx] = new_x
        alive[idx] = False
        alive[d_idx[~stop]] = True
    return out


# --------------------------------------------------------------------------
# gap sampling: map a uniform point to the gap containing it, returning the
# gap width (global scale) and the staircase plateau over that gap
# --------------------------------------------------------------------------

def _sample_gaps_loop(offsets, rights, ratios, weights, cumw, us, max_depth):
    n = us.shape[0]
    npieces = offsets.shape[0]
    widths = np.empty(n)
    plateaus = np.empty(n)
    for i in range(n):
        u = us[i]
        acc = 0.0
        mass = 1.0
        geom = 1.0
        depth = 0
        while True:
            j = -1
            for k in range(npieces):
                if u < offsets[k]:
                    break
                j = k
            if j < 0:
                widths[i] = geom * offsets[0]
                plateaus[i] = acc
                break
            if u > rights[j]:
                nxt = offsets[j + 1] if j + 1 < npieces else 1.0
                widths[i] = geom * (nxt - rights[j])
                plateaus[i] = acc + mass * cumw[j + 1]
                break
            acc += mass * cumw[j]
            mass *= weights[j]
            u = (u - offsets[j]) / ratios[j]
            geom *= ratios[j]
            depth += 1
            if depth >= max_depth:
                widths[i] = geom
                plateaus[i] = acc + 0.5 * mass
                break
    return widths, plateaus


def _sample_gaps_numpy(offsets, rights, ratios, weights, cumw, us, max_depth):
    u = np.array(us, dtype=np.float64, copy=True)
    acc = np.zeros_like(u)
    mass = np.ones_like(u)
    geom = np.ones_like(u)
    widths = np.zeros_like(u)
    plateaus = np.zeros_like(u)
    alive = np.ones(u.shape[0], dtype=bool)
    gap_right = np.append(offsets[1:], 1.0)
    depth = 0
    while alive.any():
        idx = np.flatnonzero(alive)
        ui = u[idx]
        ai = acc[idx]
        mi = mass[idx]
        gi = geom[idx]

        j = np.searchsorted(offsets, ui, side="right") - 1
        jc = np.clip(j, 0, offsets.shape[0] - 1)
        left_gap = j < 0
        in_gap = (~left_gap) & (ui > rights[jc])
        descend = (~left_gap) & ~in_gap

        widths[idx[left_gap]] = gi[left_gap] * offsets[0]
        plateaus[idx[left_gap]] = ai[left_gap]
        widths[idx[in_gap]] = gi[in_gap] * (gap_right[jc[in_gap]] - rights[jc[in_gap]])
        plateaus[idx[in_gap]] = ai[in_gap] + mi[in_gap] * cumw[jc[in_gap] + 1]

        d_idx = idx[descend]
        jd = jc[descend]
        new_acc = ai[descend] + mi[descend] * cumw[jd]
        new_mass = mi[descend] * weights[jd]
        new_geom = gi[descend] * ratios[jd]
        new_u = (ui[descend] - offsets[jd]) / ratios[jd]
        depth += 1
        stop = depth >= max_depth
        if stop:
            widths[d_idx] = new_geom
            plateaus[d_idx] = new_acc + 0.5 * new_mass
        acc[d_idx] = new_acc
        mass[d_idx] = new_mass
        geom[d_idx] = new_geom
        u[d_idx] = new_u
        alive[idx] = False
        if not stop:
            alive[d_idx] = True
    return widths, plateaus


# --------------------------------------------------------------------------
# structure functions: mean |v(t+lag) - v(t)|**q over all pairs, per (q, lag)
# --------------------------------------------------------------------------

def _structure_sums_loop(v, lags, qs):
    n = v.shape[0]
    nq = qs.shape[0]
    nl = lags.shape[0]
    S = np.full((nq, nl), np.nan)
    counts = np.zeros((nq, nl), np.int64)
    for li in range(nl):
        lag = lags[li]
        m = n - lag
        if lag <= 0 or m <= 0:
            continue
        sums = np.zeros(nq)
        comps = np.zeros(nq)  # Kahan compensation, order-stable reduction
        for i in range(m):
            d = v[i + lag] - v[i]
            if d < 0.0:
                d = -d
            for qi in range(nq):
                q = qs[qi]
                if q == 0.0:
                    term = 1.0
                elif q == 1.0:
                    term = d
                elif q == 2.0:
                    term = d * d
                elif q == 3.0:
                    term = d * d * d
                elif q == 4.0:
                    dd = d * d
                    term = dd * dd
                else:
                    term = d ** q
                y = term - comps[qi]
                t = sums[qi] + y
                comps[qi] = (t - sums[qi]) - y
                sums[qi] = t
        for qi in range(nq):
            S[qi, li] = sums[qi] / m
            counts[qi, li] = m
    return S, counts


def _structure_sums_numpy(v, lags, qs):
    n = v.shape[0]
    nq = qs.shape[0]
    nl = lags.shape[0]
    S = np.full((nq, nl), np.nan)
    counts = np.zeros((nq, nl), np.int64)
    for li in range(nl):
        lag = int(lags[li])
        m = n - lag
        if lag <= 0 or m <= 0:
            continue
        d = np.abs(v[lag:] - v[:m])
        for qi in range(nq):
            q = qs[qi]
            if q == 0.0:
                S[qi, li] = 1.0
            elif q == 1.0:
                S[qi, li] = float(np.mean(d))
            elif q == 2.0:
                S[qi, li] = float(np.mean(d * d))
            else:
                S[qi, li] = float(np.mean(d ** q))
            counts[qi, li] = m
    return S, counts


# --------------------------------------------------------------------------
# Euler-Maruyama ensemble for dv = -v/T0 dt + sigma v dW, multiplicative form
# --------------------------------------------------------------------------

def _em_paths_loop(v0, T0, sigma, dt, normals):
    n_paths, steps = normals.shape
    out = np.empty((n_paths, steps + 1))
    drift = 1.0 - dt / T0
    amp = sigma * np.sqrt(dt)
    for p in range(n_paths):
        v = v0
        out[p, 0] = v
        for k in range(steps):
            v = v * (drift + amp * normals[p, k])
            out[p, k + 1] = v
    return out


def _em_paths_numpy(v0, T0, sigma, dt, normals):
    n_paths, steps = normals.shape
    out = np.empty((n_paths, steps + 1))
    drift = 1.0 - dt / T0
    amp = sigma * np.sqrt(dt)
    v = np.full(n_paths, float(v0))
    out[:, 0] = v
    for k in range(steps):
        v = v * (drift + amp * normals[:, k])
        out[:, k + 1] = v
    return out


# --------------------------------------------------------------------------
# backend selection
# --------------------------------------------------------------------------

_LOOPS = {
    "staircase_batch": _staircase_batch_loop,
    "sample_gaps": _sample_gaps_loop,
    "structure_sums": _structure_sums_loop,
    "em_paths": _em_paths_loop,
}

_NUMPY = {
    "staircase_batch": _staircase_batch_numpy,
    "sample_gaps": _sample_gaps_numpy,
    "structure_sums": _structure_sums_numpy,
    "em_paths": _em_paths_numpy,
}

_compiled: dict | None = None


def numpy_impls() -> dict:
    """The pure-numpy implementations, keyed by kernel name."""
    return dict(_NUMPY)


def numba_impls() -> dict:
    """The numba-compiled implementations (compiled lazily, then cached)."""
    global _compiled
    if _compiled is None:
        import numba

        _compiled = {
            name: numba.njit(fn, cache=True) for name, fn in _LOOPS.items()
        }
    return dict(_compiled)


def _select_backend():
    if not numba_disabled_by_env():
        try:
            return numba_impls(), True
        except ImportError:
            pass
    return numpy_impls(), False


_active, USING_NUMBA = _select_backend()

staircase_batch = _active["staircase_batch"]
sample_gaps = _active["sample_gaps"]
structure_sums = _active["structure_sums"]
em_paths = _active["em_paths"]


def backend_name() -> str:
    return "numba" if USING_NUMBA else "numpy"

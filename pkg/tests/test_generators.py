import math

import numpy as np
import pytest

from mflab import (
    CascadeSpec,
    IfsSpec,
    ResourceLimitError,
    ValidationError,
    VelocitySeries,
    analytic_zeta,
    average_tables,
    brownian_baseline,
    build_cascade,
    concavity_report,
    fit_exponents,
    flatness,
    structure_functions,
    synthesize_inversion_jumps,
    synthesize_subordinated,
)
from mflab.fractal import CELL_CAP_ENV

UNEVEN = (0.7, 0.3)


def make_table(series, qs, lag_lo, lag_hi, n_lags=17):
    dt = series.spacing
    lags = np.unique(np.rint(np.geomspace(lag_lo, lag_hi, n_lags)).astype(int))
    return structure_functions(series, qs, lags * dt)


# ---------------------------------------------------------------- cascades

def test_uniform_cascade_masses():
    grid = build_cascade(CascadeSpec(2, 3, weights=(0.5, 0.5)))
    np.testing.assert_allclose(grid.masses, np.full(8, 0.125))


def test_uneven_cascade_hand_product():
    grid = build_cascade(CascadeSpec(2, 2, weights=UNEVEN))
    np.testing.assert_allclose(grid.masses, [0.49, 0.21, 0.21, 0.09], atol=1e-15)


def test_cascade_mass_conserved_at_every_depth():
    for depth in range(1, 9):
        grid = build_cascade(CascadeSpec(2, depth, weights=UNEVEN))
        assert abs(float(grid.masses.sum()) - 1.0) < 1e-12


def test_lognormal_cascade_mass_and_spread():
    totals = []
    for seed in range(100):
        grid = build_cascade(CascadeSpec(2, 10, sigma=0.3, seed=seed))
        totals.append(float(grid.masses.sum()))
    # per-family normalisation conserves mass pathwise, well within 0.05
    assert abs(np.mean(totals) - 1.0) < 0.05
    assert max(abs(t - 1.0) for t in totals) < 1e-9
    grid = build_cascade(CascadeSpec(2, 10, sigma=0.3, seed=1))
    assert float(grid.masses.std()) > 0.0


def test_cascade_seeded_determinism():
    a = build_cascade(CascadeSpec(2, 8, sigma=0.5, seed=7))
    b = build_cascade(CascadeSpec(2, 8, sigma=0.5, seed=7))
    c = build_cascade(CascadeSpec(2, 8, sigma=0.5, seed=8))
    assert np.array_equal(a.masses, b.masses)
    assert not np.array_equal(a.masses, c.masses)


def test_cascade_cap(monkeypatch):
    monkeypatch.setenv(CELL_CAP_ENV, "256")
    with pytest.raises(ResourceLimitError):
        CascadeSpec(2, 9, weights=(0.5, 0.5))


def test_cascade_cdf_endpoints():
    grid = build_cascade(CascadeSpec(2, 4, weights=UNEVEN))
    cdf = grid.cdf(np.array([0.0, 1.0]))
    assert cdf[0] == 0.0
    assert cdf[-1] == pytest.approx(1.0, abs=1e-12)


# ----------------------------------------------------------- analytic zeta

def test_zeta_uniform_is_linear():
    q = np.linspace(-2, 6, 33)
    np.testing.assert_allclose(analytic_zeta((0.5, 0.5), q), q, atol=1e-12)


def test_zeta_uneven_closed_form():
    expected = 1.0 - math.log(0.7**2 + 0.3**2) / math.log(2.0)
    assert analytic_zeta(UNEVEN, 2.0) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(1.78588, abs=5e-6)


def test_zeta_normalisations():
    for w in ((0.5, 0.5), UNEVEN, (0.2, 0.3, 0.5)):
        assert analytic_zeta(w, 0.0) == pytest.approx(0.0, abs=1e-14)
        assert analytic_zeta(w, 1.0) == pytest.approx(1.0, abs=1e-14)


def test_zeta_concave():
    q = np.linspace(0.0, 8.0, 65)
    z = analytic_zeta(UNEVEN, q)
    d2 = z[2:] - 2.0 * z[1:-1] + z[:-2]
    assert np.all(d2 <= 1e-12)


def test_zeta_rejects_random_spec():
    with pytest.raises(ValidationError):
        analytic_zeta(CascadeSpec(2, 4, sigma=0.2), 2.0)


# ---------------------------------------------------------- velocity series

def test_series_validation():
    with pytest.raises(ValidationError):
        VelocitySeries(np.array([0.0, 0.0]), np.array([0.0, 1.0]), 1.0, 1.0, "x")
    with pytest.raises(ValidationError):
        VelocitySeries(np.array([0.0, 1.0]), np.array([0.0, np.inf]), 1.0, 1.0, "x")


def test_series_csv_round_trip(tmp_path):
    ser = brownian_baseline(2.0, 2**10, seed=3)
    path = tmp_path / "series.csv"
    ser.to_csv(str(path))
    back = VelocitySeries.from_csv(str(path))
    np.testing.assert_array_equal(back.t, ser.t)
    np.testing.assert_array_equal(back.v, ser.v)
    assert back.v0 == ser.v0 and back.tau0 == ser.tau0
    assert back.generator_tag == "brownian"


def test_generators_are_seed_deterministic(middle_thirds):
    spec = CascadeSpec(2, 8, weights=UNEVEN)
    for make in (
        lambda s: brownian_baseline(1.0, 2**10, s),
        lambda s: synthesize_subordinated(spec, 1.0, 1.0, 2**10, s),
        lambda s: synthesize_inversion_jumps(middle_thirds, 1.0, 1.0, 2**10, s),
    ):
        a, b, c = make(11), make(11), make(12)
        assert np.array_equal(a.v, b.v)
        assert not np.array_equal(a.v, c.v)


def test_generators_reject_short_series(middle_thirds):
    with pytest.raises(ValidationError):
        brownian_baseline(1.0, 512, 0)
    with pytest.raises(ValidationError):
        synthesize_inversion_jumps(middle_thirds, n_steps=100)


# ------------------------------------------------------------ subordination

def test_subordinated_second_moment_exponent():
    # mass conservation forces xi(2) = 1 at every lag
    spec = CascadeSpec(2, 10, weights=UNEVEN)
    ser = synthesize_subordinated(spec, 1.0, 1.0, 2**16, seed=5)
    tab = make_table(ser, [2.0], 64, 1024)
    fit = fit_exponents(tab)
    assert abs(fit.xi[0] - 1.0) < 0.05


def test_subordination_oracle_within_jackknife_error():
    # ensemble of walks over the fixed cascade; the averaged-table fit must
    # match zeta(q/2) within 3 standard errors (jackknife over the walks)
    spec = CascadeSpec(2, 12, weights=UNEVEN)
    qs = np.array([1.0, 2.0, 3.0, 4.0])
    target = analytic_zeta(UNEVEN, qs / 2.0)
    m = 32
    tables = [
        make_table(
            synthesize_subordinated(spec, 1.0, 1.0, 2**18, seed=[202408, i]),
            qs,
            64,
            1024,
        )
        for i in range(m)
    ]
    full = fit_exponents(average_tables(tables))
    leave_one_out = np.array(
        [
            fit_exponents(average_tables(tables[:i] + tables[i + 1 :])).xi
            for i in range(m)
        ]
    )
    se = np.sqrt((m - 1) * np.var(leave_one_out, axis=0, ddof=0) * m / (m - 1))
    err = np.abs(full.xi - target)
    assert np.all(err < 3.0 * np.maximum(se, 1e-6)), (err, se)


def test_subordinated_fit_is_concave_and_subadditive():
    spec = CascadeSpec(2, 12, weights=UNEVEN)
    qs = np.array([1.0, 2.0, 3.0, 4.0])
    tables = [
        make_table(
            synthesize_subordinated(spec, 1.0, 1.0, 2**17, seed=[7, i]), qs, 64, 1024
        )
        for i in range(16)
    ]
    fit = fit_exponents(average_tables(tables))
    assert concavity_report(fit).concave
    # subadditivity of a concave curve through the origin
    i1, i2, i4 = 0, 1, 3
    assert fit.xi[i4] <= fit.xi[i2] + fit.xi[i2] + 2.0 * (fit.stderr[i2] + fit.stderr[i4])
    assert fit.xi[i2] <= 2.0 * fit.xi[i1] + 2.0 * (fit.stderr[i1] + fit.stderr[i2])


def test_flatness_ordering_for_uneven_cascade():
    spec = CascadeSpec(2, 12, weights=UNEVEN)
    qs = [2.0, 4.0]
    lags = np.array([1, 4, 16, 64, 256, 1024], dtype=float)
    tables = []
    for i in range(16):
        ser = synthesize_subordinated(spec, 1.0, 1.0, 2**17, seed=[99, i])
        tables.append(structure_functions(ser, qs, lags * ser.spacing))
    tau, F = flatness(average_tables(tables))
    assert F[0] > 3.2  # intermittent at small lags
    assert np.all(np.diff(F) < 0.3)  # nonincreasing within noise


# -------------------------------------------------------- inversion jumps

def test_inversion_jumps_degenerate_weight_is_constant():
    # all staircase plateaus vanish when the first piece carries no weight
    flat = IfsSpec(((0.0, 1 / 3, 0.0), (2 / 3, 1 / 3, 1.0)))
    ser = synthesize_inversion_jumps(flat, v0=2.5, n_steps=2**10, seed=4)
    assert np.all(ser.v == 2.5)


def test_inversion_jumps_intermittency(middle_thirds):
    ser = synthesize_inversion_jumps(middle_thirds, 1.0, 1.0, 2**16, seed=3)
    lags = np.array([1, 4, 16, 64, 256], dtype=float)
    tab = structure_functions(ser, [2.0, 4.0], lags * ser.spacing)
    tau, F = flatness(tab)
    assert F[0] > 4.0  # strongly super-Gaussian at the smallest lag
    assert F[-1] < F[0]
    assert abs(F[-1] - 3.0) < 1.0  # aggregation returns toward Gaussian


def test_inversion_jump_steps_match_increment_law(middle_thirds):
    # reconstruct the walk from the same random stream and the increment law
    from mflab import sample_gap_crossings, scale_invariant_increment

    n = 2**10
    seed = 21
    rng = np.random.default_rng(seed)
    us = rng.random(n - 1)
    signs = np.where(rng.random(n - 1) < 0.5, -1.0, 1.0)
    widths, plateaus = sample_gap_crossings(middle_thirds, us)
    steps = np.array(
        [scale_invariant_increment(x, p) for x, p in zip(widths, plateaus)]
    )
    expected = 1.0 + np.concatenate(([0.0], np.cumsum(signs * steps)))
    ser = synthesize_inversion_jumps(middle_thirds, 1.0, 1.0, n, seed)
    np.testing.assert_allclose(ser.v, expected, rtol=1e-12)


# ---------------------------------------------------------------- brownian

def test_brownian_exponents():
    ser = brownian_baseline(1.0, 2**17, seed=2)
    qs = np.array([1.0, 2.0, 4.0])
    tab = make_table(ser, qs, 4, ser.n // 256, n_lags=25)
    fit = fit_exponents(tab)
    np.testing.assert_allclose(fit.xi, qs / 2.0, atol=0.05)
    # a linear spectrum: concavity defect of the fitted line stays small
    assert abs(2.0 * fit.xi[1] - fit.xi[2]) <= 0.1


def test_brownian_row_count_and_scale():
    ser = brownian_baseline(3.0, 2**10, seed=0)
    assert ser.n == 2**10
    assert ser.v[0] == 0.0
    assert ser.t[1] - ser.t[0] == 1.0

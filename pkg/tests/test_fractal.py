import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mflab import (
    IfsSpec,
    NumericError,
    ResourceLimitError,
    ValidationError,
    box_counting_dimension,
    build_cover,
    similarity_dimension,
    staircase_eval,
    staircase_profile,
)
from mflab.fractal import CELL_CAP_ENV

TERNARY_DIM = math.log(2) / math.log(3)


def bisect_moran(ratios, tol=1e-13):
    """Independent oracle: solve sum(r**s) = 1 by plain bisection."""
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if sum(r**mid for r in ratios) > 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def staircase_digit_oracle(x, digits=64):
    """Independent oracle for the ternary staircase: map ternary digits of x
    to binary (0 -> 0, 2 -> 1; a 1 truncates at the half-step)."""
    value = 0.0
    for k in range(1, digits + 1):
        x *= 3.0
        d = int(x)
        x -= d
        if d == 1:
            return value + 0.5 ** k
        value += (d // 2) * 0.5 ** k
    return value


# ----------------------------------------------------------------- IfsSpec

def test_spec_requires_two_pieces():
    with pytest.raises(ValidationError):
        IfsSpec(((0.0, 0.5, 1.0),))


def test_spec_rejects_touching_pieces():
    with pytest.raises(ValidationError):
        IfsSpec(((0.0, 0.5, 0.5), (0.5, 0.5, 0.5)))


def test_spec_rejects_bad_weights():
    with pytest.raises(ValidationError):
        IfsSpec(((0.0, 0.3, 0.6), (0.5, 0.3, 0.6)))


def test_spec_rejects_overflowing_piece():
    with pytest.raises(ValidationError):
        IfsSpec(((0.0, 0.3, 0.5), (0.8, 0.3, 0.5)))


def test_equal_pieces_geometry(middle_thirds):
    np.testing.assert_allclose(middle_thirds.offsets, [0.0, 2 / 3], atol=1e-15)
    np.testing.assert_allclose(middle_thirds.ratios, [1 / 3, 1 / 3], atol=1e-15)
    np.testing.assert_allclose(middle_thirds.weights, [0.5, 0.5], atol=1e-15)


def test_spec_json_round_trip(middle_thirds):
    again = IfsSpec.from_json(middle_thirds.to_json())
    assert again.pieces == middle_thirds.pieces
    assert again.label == middle_thirds.label
    data = json.loads(middle_thirds.to_json())
    assert set(data) == {"label", "pieces"}
    assert [len(p) for p in data["pieces"]] == [3, 3]


# ------------------------------------------------------------------ covers

def test_cover_level_zero(middle_thirds):
    cov = build_cover(middle_thirds, 0)
    assert len(cov) == 1
    assert cov.lefts[0] == 0.0 and cov.rights[0] == 1.0 and cov.masses[0] == 1.0


def test_cover_level_one(middle_thirds):
    cov = build_cover(middle_thirds, 1)
    np.testing.assert_allclose(cov.lefts, [0.0, 2 / 3])
    np.testing.assert_allclose(cov.rights, [1 / 3, 1.0])
    np.testing.assert_allclose(cov.masses, [0.5, 0.5])


def test_cover_level_two_hand_composition(middle_thirds):
    # composing the two affine maps by hand gives widths 1/9 and masses 1/4
    cov = build_cover(middle_thirds, 2)
    assert len(cov) == 4
    np.testing.assert_allclose(cov.rights - cov.lefts, np.full(4, 1 / 9))
    np.testing.assert_allclose(cov.masses, np.full(4, 0.25))
    np.testing.assert_allclose(cov.lefts[0], 0.0)
    np.testing.assert_allclose(cov.rights[0], 1 / 9)


def test_cover_mass_conservation_and_nesting(middle_thirds):
    previous = None
    for level in range(7):
        cov = build_cover(middle_thirds, level)
        assert abs(float(np.sum(cov.masses)) - 1.0) < 1e-9
        if previous is not None:
            # each interval sits inside exactly one parent interval
            parent = np.searchsorted(previous.lefts, cov.lefts + 1e-15) - 1
            assert np.all(cov.rights <= previous.rights[parent] + 1e-12)
            assert np.all(cov.lefts >= previous.lefts[parent] - 1e-12)
        previous = cov


def test_cover_cap(monkeypatch, middle_thirds):
    monkeypatch.setenv(CELL_CAP_ENV, "100")
    with pytest.raises(ResourceLimitError):
        build_cover(middle_thirds, 7)
    build_cover(middle_thirds, 6)  # 64 <= 100 still fine


def test_cover_csv_header(tmp_path, middle_thirds):
    cov = build_cover(middle_thirds, 1)
    path = tmp_path / "cover.csv"
    cov.to_csv(str(path), comments=["hello"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# hello"
    assert lines[1] == "level,left,right,mass"
    assert len(lines) == 2 + 2


# -------------------------------------------------------------- dimensions

def test_similarity_middle_thirds(middle_thirds):
    est = similarity_dimension(middle_thirds)
    assert est.method == "similarity"
    assert est.stderr == 0.0
    assert abs(est.value - TERNARY_DIM) < 1e-14


def test_similarity_near_half_ratio():
    spec = IfsSpec.equal_pieces(2, 0.499)
    oracle = bisect_moran([0.499, 0.499])
    est = similarity_dimension(spec)
    assert abs(est.value - oracle) < 1e-10
    assert abs(est.value - 0.9971) < 5e-4


def test_similarity_moran_mixed_ratios():
    spec = IfsSpec(((0.0, 0.25, 0.5), (0.5, 0.5, 0.5)))
    oracle = bisect_moran([0.25, 0.5])
    est = similarity_dimension(spec)
    assert abs(est.value - oracle) < 1e-10
    assert abs(est.value - 0.6942) < 5e-4
    r = spec.ratios
    assert abs(float(np.sum(r**est.value)) - 1.0) < 1e-12


def test_box_counting_middle_thirds(middle_thirds):
    cov = build_cover(middle_thirds, 16)
    est = box_counting_dimension(cov)
    assert est.method == "box-counting"
    assert abs(est.value - TERNARY_DIM) / TERNARY_DIM < 0.02


def test_box_counting_full_interval():
    est = box_counting_dimension(np.linspace(0.0, 1.0, 50001))
    assert abs(est.value - 1.0) < 0.02


def test_box_counting_single_point():
    est = box_counting_dimension(np.array([0.37]))
    assert est.value == 0.0 and est.stderr == 0.0


def test_box_counting_saturated_counts():
    # two far-apart points occupy two boxes at every scale tested
    with pytest.raises(NumericError):
        box_counting_dimension(np.array([0.1, 0.9]), range(1, 5))


def test_box_counting_needs_four_grids(middle_thirds):
    cov = build_cover(middle_thirds, 10)
    with pytest.raises(ValidationError):
        box_counting_dimension(cov, [2, 3, 4])


def test_dimension_consistency(middle_thirds):
    # box counting agrees with the ratio-based value within 3 stderr
    for spec, level in ((middle_thirds, 16), (IfsSpec.equal_pieces(3, 0.2), 12)):
        sim = similarity_dimension(spec)
        box = box_counting_dimension(build_cover(spec, level))
        assert abs(box.value - sim.value) < 3.0 * box.stderr


# --------------------------------------------------------------- staircase

def test_staircase_gap_value_exact(middle_thirds):
    assert staircase_eval(middle_thirds, 0.5) == 0.5
    assert staircase_eval(middle_thirds, 0.4) == 0.5
    assert staircase_eval(middle_thirds, 0.65) == 0.5


def test_staircase_boundaries(middle_thirds):
    assert staircase_eval(middle_thirds, 0.0) == 0.0
    assert staircase_eval(middle_thirds, 1.0) == 1.0
    assert staircase_eval(middle_thirds, 1 / 3) == 0.5


def test_staircase_quarter_digit_oracle(middle_thirds):
    # ternary 0.020202... maps to binary 0.0101... = 1/3
    oracle = staircase_digit_oracle(0.25)
    assert abs(oracle - 1 / 3) < 1e-15
    assert abs(staircase_eval(middle_thirds, 0.25, tol=1e-9) - oracle) < 1e-9


def test_staircase_domain_errors(middle_thirds):
    with pytest.raises(ValidationError):
        staircase_eval(middle_thirds, -0.1)
    with pytest.raises(ValidationError):
        staircase_eval(middle_thirds, 1.1)
    with pytest.raises(ValidationError):
        staircase_eval(middle_thirds, 0.5, tol=0.0)


@settings(max_examples=200, deadline=None)
@given(
    x=st.floats(min_value=0.0, max_value=1.0),
    y=st.floats(min_value=0.0, max_value=1.0),
)
def test_staircase_monotone(x, y):
    spec = IfsSpec.middle_thirds()
    lo, hi = min(x, y), max(x, y)
    tol = 1e-12
    assert staircase_eval(spec, lo, tol) <= staircase_eval(spec, hi, tol) + tol


def test_staircase_gap_constancy_is_exact(middle_thirds, rng):
    # level-1 gap
    values = staircase_profile(middle_thirds, rng.uniform(1 / 3 + 1e-9, 2 / 3 - 1e-9, 50))
    assert np.all(values == values[0])
    # a level-2 gap: (1/9, 2/9) has plateau 1/4
    values = staircase_profile(middle_thirds, rng.uniform(1 / 9 + 1e-9, 2 / 9 - 1e-9, 50))
    assert np.all(values == 0.25)


def test_staircase_self_similarity(middle_thirds, rng):
    # first piece has offset 0: phi(x/3) = w1 * phi(x)
    xs = rng.uniform(0.0, 1.0, 100)
    left = staircase_profile(middle_thirds, xs / 3.0)
    right = 0.5 * staircase_profile(middle_thirds, xs)
    np.testing.assert_allclose(left, right, atol=1e-9)


def test_staircase_unequal_weights():
    spec = IfsSpec.equal_pieces(2, 1 / 3, weights=[0.7, 0.3])
    assert staircase_eval(spec, 0.5) == 0.7
    assert abs(staircase_eval(spec, 1.0) - 1.0) < 1e-15

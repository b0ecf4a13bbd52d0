from fractions import Fraction
from math import factorial

import numpy as np
import pytest

from obx.coefficients import (
    alpha,
    amplification,
    amplification_mp,
    is_a_stable_sample,
    in_stable_band,
    make_scheme,
    pade_error_ratio,
    stability_class,
    truncation_residual,
)
from obx.errors import PoleError, SchemeError

PAIRS_UP_TO_8 = [(l, m) for m in range(1, 9) for l in range(0, 9 - m)]


def test_alpha_leading_coefficient_is_one():
    for l, m in PAIRS_UP_TO_8:
        assert alpha(0, l, m) == 1


def test_backward_euler_coefficients():
    scheme = make_scheme(0, 1)
    assert scheme.alpha_current == (Fraction(1), Fraction(1))
    assert scheme.alpha_past == (Fraction(1),)


def test_trapezoidal_coefficients():
    scheme = make_scheme(1, 1)
    assert scheme.alpha_current == (Fraction(1), Fraction(1, 2))
    assert scheme.alpha_past == (Fraction(1), Fraction(1, 2))
    np.testing.assert_array_equal(scheme.signed_current_weights, [1.0, -0.5])


def test_one_two_coefficients():
    scheme = make_scheme(1, 2)
    assert scheme.alpha_current == (Fraction(1), Fraction(2, 3), Fraction(1, 6))
    assert scheme.alpha_past == (Fraction(1), Fraction(1, 3))
    assert scheme.order == 3
    assert scheme.as_pair() == (1, 2)


@pytest.mark.parametrize("l,m", [(0, 0), (-1, 2), (2, -1), (1.5, 1), (True, 1), (15, 6), ("1", 2)])
def test_invalid_parameters_are_rejected(l, m):
    with pytest.raises(SchemeError):
        make_scheme(l, m)


def test_coefficient_index_out_of_range():
    with pytest.raises(SchemeError):
        alpha(3, 1, 2)


@pytest.mark.parametrize("l,m", PAIRS_UP_TO_8)
def test_truncation_residual_vanishes_up_to_order(l, m):
    scheme = make_scheme(l, m)
    h = Fraction(1, 3)
    for p in range(l + m + 1):
        assert truncation_residual(scheme, p, h) == 0
    assert truncation_residual(scheme, l + m + 1, h) != 0


def test_truncation_residual_is_exact_rational():
    residual = truncation_residual(make_scheme(1, 1), 3, "1/2")
    assert isinstance(residual, Fraction)
    # current side h^3 - (1/2) h * 3h^2, past side zero at t = 0
    assert residual == Fraction(-1, 16)


@pytest.mark.parametrize("z", [-1.0, -0.1 + 2.0j, 0.3j, -50.0])
def test_trapezoidal_amplification(z):
    expected = (1 + z / 2) / (1 - z / 2)
    assert amplification(make_scheme(1, 1), z) == pytest.approx(expected, rel=1e-14)


def test_backward_euler_amplification():
    assert amplification(make_scheme(0, 1), -3.0) == pytest.approx(0.25)


def test_pole_is_reported():
    with pytest.raises(PoleError):
        amplification(make_scheme(0, 1), 1.0)


def test_extended_precision_matches_double():
    scheme = make_scheme(2, 3)
    z = -0.5 + 0.3j
    assert complex(amplification_mp(scheme, z)) == pytest.approx(amplification(scheme, z), rel=1e-12)


@pytest.mark.parametrize("l,m", [(0, 1), (1, 1), (1, 2), (2, 2), (1, 3)])
def test_pade_error_ratio_bounded_near_zero(l, m):
    scheme = make_scheme(l, m)
    ratios = np.array([pade_error_ratio(scheme, 2.0 ** -k) for k in range(1, 21)])
    tail = ratios[-5:]
    assert tail.max() / tail.min() - 1.0 < 0.1
    constant = factorial(l) * factorial(m) / (factorial(l + m) * factorial(l + m + 1))
    assert ratios[-1] == pytest.approx(constant, rel=1e-3)


def test_a_stable_pairs_on_left_half_plane_grid():
    x, y = np.meshgrid(-np.logspace(-3, 3, 25), np.linspace(-100, 100, 21))
    points = np.concatenate([(x + 1j * y).ravel(), 1j * np.linspace(-100, 100, 41)])
    for l, m in [(0, 1), (1, 1), (1, 2), (2, 2), (0, 2), (2, 3)]:
        assert is_a_stable_sample(make_scheme(l, m), points)


def test_explicit_heavy_pair_is_not_a_stable():
    assert not is_a_stable_sample(make_scheme(2, 1), np.array([-100.0]))


def test_stability_classification():
    assert stability_class(1, 2) == "L-stable"
    assert stability_class(0, 2) == "L-stable"
    assert stability_class(2, 2) == "A-stable"
    assert stability_class(3, 1) == "unclassified"
    assert stability_class(0, 3) == "unclassified"
    assert in_stable_band(1, 3)
    assert in_stable_band(2, 2) and stability_class(2, 2) != "L-stable"
    assert not in_stable_band(2, 1)


def test_l_stable_scheme_vanishes_at_infinity():
    assert abs(amplification(make_scheme(1, 2), -1e8)) < 1e-7

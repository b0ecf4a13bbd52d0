"""Obreshkov formula coefficients, truncation functional and amplification.

A scheme with parameters (l, m) couples the current point and the past point
through

    sum_{i=0}^{m} (-1)^i a(i, l, m) h^i x_n^(i) = sum_{i=0}^{l} a(i, m, l) h^i x_{n-1}^(i)

with a(i, l, m) = (m+l-i)! / (m+l)! * binom(m, i). Coefficients are built as
exact rationals and converted to floats once, when the scheme is created.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb, factorial
from numbers import Rational

import mpmath
import numpy as np

from .errors import PoleError, SchemeError

logger = logging.getLogger(__name__)

# Largest supported l + m; factorial ratios beyond this lose too much
# resolution once converted to float.
MAX_TOTAL_ORDER = 20

# Relative size under which the amplification denominator counts as a pole.
POLE_TOL = 1e-14


def alpha(i: int, l: int, m: int) -> Fraction:
    """Exact coefficient a(i, l, m) for 0 <= i <= m."""
    if not 0 <= i <= m:
        raise SchemeError(f"coefficient index i={i} outside [0, {m}]")
    return Fraction(factorial(m + l - i), factorial(m + l)) * comb(m, i)


@dataclass(frozen=True)
class ObreshkovScheme:
    """An Obreshkov integration rule.

    Attributes:
        l: Number of derivatives used at the past point.
        m: Number of derivatives used at the current (implicit) point.
        alpha_current: Exact [a(0,l,m) ... a(m,l,m)].
        alpha_past: Exact [a(0,m,l) ... a(l,m,l)].
    """
    l: int
    m: int
    alpha_current: tuple[Fraction, ...]
    alpha_past: tuple[Fraction, ...]
    current_weights: tuple[float, ...] = field(repr=False, compare=False)
    past_weights: tuple[float, ...] = field(repr=False, compare=False)

    @property
    def order(self) -> int:
        """Local order l+m of the rule on ODEs (one-step error is O(h^{l+m+1}))."""
        return self.l + self.m

    @property
    def signed_current_weights(self) -> np.ndarray:
        """Floats (-1)^i a(i,l,m), the left-hand side row of the formula."""
        signs = np.array([(-1.0) ** i for i in range(self.m + 1)])
        return signs * np.asarray(self.current_weights)

    def as_pair(self) -> tuple[int, int]:
        return (self.l, self.m)


def make_scheme(l: int, m: int) -> ObreshkovScheme:
    """Builds the scheme (l, m).

    Args:
        l: Past-side derivative count, l >= 0.
        m: Current-side derivative count, m >= 1 (m = 0 would make the rule explicit
           and degenerate).

    Raises:
        SchemeError: For non-integer, negative, m = 0 or too large parameters.
    """
    for name, value in (("l", l), ("m", m)):
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            raise SchemeError(f"scheme parameter {name} must be an integer, got {value!r}")
    l, m = int(l), int(m)
    if l < 0 or m < 0:
        raise SchemeError(f"scheme parameters must be non-negative (l={l}, m={m})")
    if m == 0:
        raise SchemeError("m must be at least 1: the formula needs an implicit derivative")
    if l + m > MAX_TOTAL_ORDER:
        raise SchemeError(f"l + m = {l + m} exceeds the supported maximum {MAX_TOTAL_ORDER}")

    current = tuple(alpha(i, l, m) for i in range(m + 1))
    past = tuple(alpha(i, m, l) for i in range(l + 1))
    logger.debug(f"Built scheme (l={l}, m={m}): current={current}, past={past}")
    return ObreshkovScheme(
        l=l,
        m=m,
        alpha_current=current,
        alpha_past=past,
        current_weights=tuple(float(a) for a in current),
        past_weights=tuple(float(a) for a in past),
    )


def stability_class(l: int, m: int) -> str:
    """Classifies (l, m) by the known stable band m-2 <= l <= m.

    Returns "L-stable" for m-2 <= l < m, "A-stable" for l == m, and
    "unclassified" otherwise. Purely informative; any valid pair is accepted.
    """
    if m - 2 <= l < m:
        return "L-stable"
    if l == m:
        return "A-stable"
    return "unclassified"


def _to_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, Rational):
        return Fraction(value)
    if isinstance(value, (float, np.floating)):
        return Fraction(float(value))
    if isinstance(value, str):
        return Fraction(value)
    raise TypeError(f"cannot convert {value!r} to an exact rational")


def _monomial_derivative(p: int, i: int, t: Fraction) -> Fraction:
    """i-th derivative of t**p evaluated at t, exactly."""
    if i > p:
        return Fraction(0)
    return Fraction(factorial(p), factorial(p - i)) * t ** (p - i)


def truncation_residual(scheme: ObreshkovScheme, poly_degree: int, h) -> Fraction:
    """Applies the formula's truncation functional to z(t) = t**p.

    The past point is t = 0 and the current point is t = h. The result is
    exactly zero for p <= l + m and generally nonzero at p = l + m + 1.
    """
    if poly_degree < 0:
        raise SchemeError(f"polynomial degree must be non-negative, got {poly_degree}")
    h = _to_fraction(h)
    current = sum(
        (-1) ** i * a * h ** i * _monomial_derivative(poly_degree, i, h)
        for i, a in enumerate(scheme.alpha_current)
    )
    past = sum(
        a * h ** i * _monomial_derivative(poly_degree, i, Fraction(0))
        for i, a in enumerate(scheme.alpha_past)
    )
    return Fraction(current) - Fraction(past)


def amplification(scheme: ObreshkovScheme, z: complex) -> complex:
    """One-step multiplier R(z) of the scheme on x' = lambda x, z = h*lambda.

    Raises:
        PoleError: When z is (numerically) a pole of R.
    """
    z = complex(z)
    numerator = np.polyval(np.asarray(scheme.past_weights)[::-1], z)
    den_terms = scheme.signed_current_weights * np.array([z ** i for i in range(scheme.m + 1)])
    denominator = den_terms.sum()
    scale = max(1.0, float(np.abs(den_terms).sum()))
    if abs(denominator) <= POLE_TOL * scale:
        raise PoleError(f"z={z} is a pole of the amplification function of scheme {scheme.as_pair()}")
    return complex(numerator / denominator)


def amplification_mp(scheme: ObreshkovScheme, z, dps: int = 50):
    """R(z) evaluated in ``dps`` decimal digits from the exact coefficients."""
    with mpmath.workdps(dps):
        z = mpmath.mpmathify(z)
        numerator = mpmath.mpf(0)
        for i, a in enumerate(scheme.alpha_past):
            numerator += mpmath.mpf(a.numerator) / a.denominator * z ** i
        denominator = mpmath.mpf(0)
        for i, a in enumerate(scheme.alpha_current):
            denominator += (-1) ** i * mpmath.mpf(a.numerator) / a.denominator * z ** i
        if denominator == 0:
            raise PoleError(f"z={z} is a pole of the amplification function of scheme {scheme.as_pair()}")
        return numerator / denominator


def pade_error_ratio(scheme: ObreshkovScheme, z, dps: int = 60) -> float:
    """|R(z) - e^z| / |z|^(l+m+1), computed in extended precision.

    Bounded as z -> 0 because R is the (l, m) Pade approximant of e^z.
    """
    with mpmath.workdps(dps):
        z = mpmath.mpmathify(z)
        diff = amplification_mp(scheme, z, dps) - mpmath.exp(z)
        return float(abs(diff) / abs(z) ** (scheme.order + 1))


def is_a_stable_sample(scheme: ObreshkovScheme, points: np.ndarray) -> bool:
    """True when |R(z)| <= 1 on every sample point of the closed left half plane."""
    for z in np.ravel(points):
        if complex(z).real > 0:
            continue
        try:
            if abs(amplification(scheme, z)) > 1.0 + 1e-12:
                return False
        except PoleError:
            return False
    return True


def in_stable_band(l: int, m: int) -> bool:
    """True when (l, m) lies in the A/L-stable band m-2 <= l <= m."""
    return stability_class(l, m) != "unclassified"

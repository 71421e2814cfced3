"""Exact rational helpers: coercion, decimal rendering, and log intervals.

Everything here stays in ``fractions.Fraction``; the log-interval routines
return rational lower/upper bounds with directed rounding so that strict
comparisons decided through them are exact.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Union

Rationalish = Union[Fraction, int, str]


def as_fraction(value: Rationalish) -> Fraction:
    """Coerce an int, Fraction, or 'num/den' string; floats are rejected."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rational values")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return parse_rational(value)
    raise TypeError(f"expected an exact rational, got {type(value).__name__}")


def parse_rational(text: str) -> Fraction:
    """Parse 'num/den' or integer text; decimal notation is rejected."""
    cleaned = text.strip()
    if not cleaned:
        raise ValueError("empty rational")
    if "." in cleaned or "e" in cleaned.lower():
        raise ValueError(f"decimals are not accepted, write a fraction: {text!r}")
    parts = cleaned.split("/")
    if len(parts) == 1:
        return Fraction(int(parts[0]))
    if len(parts) == 2:
        den = int(parts[1])
        if den == 0:
            raise ValueError("zero denominator")
        return Fraction(int(parts[0]), den)
    raise ValueError(f"malformed rational: {text!r}")


def decimal_str(value: Fraction, places: int = 12, fixed: bool = False) -> str:
    """Deterministic decimal rendering, rounded half away from zero at ``places``.

    With ``fixed`` the fractional part keeps exactly ``places`` digits;
    otherwise trailing zeros are trimmed. Display only: engine comparisons
    never go through this.
    """
    sign = "-" if value < 0 else ""
    scaled = abs(value) * 10**places
    whole, rem = divmod(scaled.numerator, scaled.denominator)
    if 2 * rem >= scaled.denominator:
        whole += 1
    digits = str(whole).rjust(places + 1, "0")
    int_part, frac_part = digits[:-places], digits[-places:]
    if not fixed:
        frac_part = frac_part.rstrip("0")
    return sign + int_part + ("." + frac_part if frac_part else "")


def rational_json(value: Fraction) -> dict:
    """JSON form used everywhere a report carries a rational."""
    return {
        "num": value.numerator,
        "den": value.denominator,
        "decimal": decimal_str(value),
    }


# --------------------------------------------------------------------------
# Rational interval bounds on natural logs.
#
# ln(x) = 2 * atanh(y) with y = (x-1)/(x+1); the series 2*sum y^(2k+1)/(2k+1)
# has absolute error at most 2*|y|^(2m+1) / ((2m+1)*(1-y^2)) after m terms.


def ln_interval(x: Fraction, terms: int = 24) -> tuple[Fraction, Fraction]:
    """Rational (lower, upper) bounds on ln(x) for x > 0."""
    if x <= 0:
        raise ValueError("ln requires a positive argument")
    if x == 1:
        return Fraction(0), Fraction(0)
    y = (x - 1) / (x + 1)
    total = Fraction(0)
    power = y
    y2 = y * y
    for k in range(terms):
        total += power / (2 * k + 1)
        power *= y2
    total *= 2
    # power is now |y|^(2*terms+1) up to sign; bound the dropped tail
    tail = 2 * abs(power) / ((2 * terms + 1) * (1 - y2))
    return total - tail, total + tail


def compare_with_ln(
    coeff: Fraction, x: Fraction, bound: Fraction, max_terms: int = 512
) -> bool:
    """Exactly decide ``coeff * ln(x) < ln(bound)`` via widening-precision intervals.

    Raises if the two sides cannot be separated (they are equal only when
    x**coeff == bound, which the caller should handle directly).
    """
    terms = 16
    while terms <= max_terms:
        lo_x, hi_x = ln_interval(x, terms)
        left = (coeff * lo_x, coeff * hi_x) if coeff >= 0 else (coeff * hi_x, coeff * lo_x)
        right = ln_interval(bound, terms)
        if left[1] < right[0]:
            return True
        if left[0] > right[1]:
            return False
        terms *= 2
    raise ValueError("log comparison did not separate; sides may be equal")


def power_self(eps: Fraction) -> Union[Fraction, None]:
    """eps**(1/eps) as an exact Fraction when 1/eps is an integer, else None."""
    inv = 1 / eps
    if inv.denominator == 1:
        return eps ** inv.numerator
    return None

"""Deterministic 64.64 fixed-point arithmetic for consensus-critical values.

Every quantity that takes part in a consensus decision (VRF thresholds,
retarget values, chain trust) is an ``int`` holding ``value * 2**64``.
Floating point is never used on those paths.

The exponential ``e**-x`` is computed with integer-only range reduction
(``x = n*ln2 + j/64 + u``), a 64-entry table and a short Taylor tail.  The
table and ``ln 2`` are derived at import from integer series, so results are
bit-identical on every platform.
"""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational
from typing import Union

FRAC_BITS = 64
ONE = 1 << FRAC_BITS
HALF = ONE >> 1

# internal working precision for the exponential
_P = 192
_ONE_P = 1 << _P
# wide results carry 128 fractional bits
WIDE_BITS = 128
WIDE_ONE = 1 << WIDE_BITS

_TABLE_BITS = 6
_TABLE_SIZE = 1 << _TABLE_BITS

Number = Union[int, float, str, Fraction]


def _ln2(bits: int) -> int:
    # ln 2 = 2 * atanh(1/3) = sum_k 2 / ((2k+1) * 3**(2k+1))
    scale = 1 << (bits + 16)
    total = 0
    k = 0
    while True:
        term = (2 * scale) // ((2 * k + 1) * 3 ** (2 * k + 1))
        if term == 0:
            break
        total += term
        k += 1
    return total >> 16


def _exp_neg_taylor(u: int, bits: int) -> int:
    """e**-u for 0 <= u < 1 where ``u`` carries ``bits`` fractional bits."""
    one = 1 << bits
    term = one
    total = one
    i = 1
    while term:
        term = (term * u >> bits) // i
        total += -term if i & 1 else term
        i += 1
    return total


def _build_table() -> list[int]:
    bits = _P + 64
    step = _exp_neg_taylor((1 << bits) >> _TABLE_BITS, bits)
    table = []
    acc = 1 << bits
    for _ in range(_TABLE_SIZE):
        table.append(acc >> 64)
        acc = acc * step >> bits
    return table


LN2_P = _ln2(_P)
_EXP_TABLE = _build_table()
# e**-x underflows the wide format well before this many halvings
_MAX_HALVINGS = WIDE_BITS + 8


def to_fixed(x: Number) -> int:
    """Convert a number to 64.64 raw form, rounding toward zero.

    Floats are read through their shortest decimal repr so ``0.9`` means
    nine tenths, not the nearest binary double.
    """
    if isinstance(x, bool):
        raise TypeError("bool is not a fixed-point operand")
    if isinstance(x, int):
        return x << FRAC_BITS
    if isinstance(x, float):
        x = Fraction(repr(x))
    elif isinstance(x, str):
        x = Fraction(x)
    elif isinstance(x, Rational):
        x = Fraction(x)
    else:
        raise TypeError(f"unsupported fixed-point operand {x!r}")
    num = x.numerator * ONE
    q = abs(num) // x.denominator
    return q if num >= 0 else -q


def to_fraction(raw: int) -> Fraction:
    return Fraction(raw, ONE)


def to_float(raw: int) -> float:
    return raw / ONE


def mul(a: int, b: int) -> int:
    """Product of two 64.64 values, truncated."""
    return a * b >> FRAC_BITS


def round_wide(w: int) -> int:
    """Round a 128-fraction-bit value to 64.64, half up."""
    return (w + (1 << (WIDE_BITS - FRAC_BITS - 1))) >> (WIDE_BITS - FRAC_BITS)


def exp_neg_wide(x: int) -> int:
    """``e**-x`` for a non-negative 64.64 ``x``, returned with 128 fraction bits."""
    if x < 0:
        raise ValueError("exp_neg_wide expects x >= 0")
    xp = x << (_P - FRAC_BITS)
    n, r = divmod(xp, LN2_P)
    if n > _MAX_HALVINGS:
        return 0
    shift = _P - _TABLE_BITS
    j = r >> shift
    u = r - (j << shift)
    y = _EXP_TABLE[j] * _exp_neg_taylor(u, _P) >> _P
    return (y >> n) >> (_P - WIDE_BITS)


def exp_neg(x: int) -> int:
    """``e**-x`` for a non-negative 64.64 ``x``, rounded to 64.64."""
    return round_wide(exp_neg_wide(x))

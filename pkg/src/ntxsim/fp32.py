"""IEEE 754 binary32 bit manipulation and correct rounding.

The simulator's canonical scalar format is the raw 32-bit pattern (a Python
int in [0, 2**32)). Memory holds words of these bits; value-level helpers
convert to Python float / numpy float32 where convenient. Field-level
decode/encode never goes through host floating point, so arbitrary NaN
payloads survive round trips.
"""

from __future__ import annotations

import struct

MASK32 = 0xFFFFFFFF
SIGN_BIT = 0x80000000
EXP_MASK = 0x7F800000
FRAC_MASK = 0x007FFFFF
FRAC_BITS = 23
EXP_BIAS = 127

POS_INF = 0x7F800000
NEG_INF = 0xFF800000
QNAN = 0x7FC00000  # canonical quiet NaN
POS_ZERO = 0x00000000
NEG_ZERO = 0x80000000
MAX_FINITE = 0x7F7FFFFF

# Smallest exponent of any finite binary32 expressed as mag * 2**e with an
# integer mag: subnormals sit at 2**-149.
MIN_EXP = -149


def sign_of(bits: int) -> int:
    return (bits >> 31) & 1


def exp_field(bits: int) -> int:
    return (bits >> FRAC_BITS) & 0xFF


def frac_field(bits: int) -> int:
    return bits & FRAC_MASK


def pack_fields(sign: int, exp: int, frac: int) -> int:
    return ((sign & 1) << 31) | ((exp & 0xFF) << FRAC_BITS) | (frac & FRAC_MASK)


def is_nan(bits: int) -> bool:
    return (bits & ~SIGN_BIT) > EXP_MASK


def is_inf(bits: int) -> bool:
    return (bits & ~SIGN_BIT) == EXP_MASK


def is_finite(bits: int) -> bool:
    return exp_field(bits) != 0xFF


def is_zero(bits: int) -> bool:
    return (bits & ~SIGN_BIT) == 0


def decompose(bits: int) -> tuple[int, int, int]:
    """Split a finite value into (sign, mag, e) with value = (-1)^sign * mag * 2**e.

    mag is an integer in [0, 2**24); subnormals and zero come out with
    e = -149. Raises ValueError on inf/NaN.
    """
    if not is_finite(bits):
        raise ValueError(f"cannot decompose non-finite bits {bits:#010x}")
    s = sign_of(bits)
    e = exp_field(bits)
    f = frac_field(bits)
    if e == 0:
        return s, f, MIN_EXP
    return s, f | (1 << FRAC_BITS), e - EXP_BIAS - FRAC_BITS


def compose_round(sign: int, mag: int, e: int, sticky: bool = False) -> tuple[int, bool]:
    """Round (-1)^sign * (mag + eps) * 2**e to binary32, round-to-nearest-even.

    mag is an arbitrary-precision non-negative integer. `sticky` asserts an
    extra eps strictly inside (0, 1) ulp of 2**e; it is only meaningful when
    the kept quantum exceeds 2**e (our accumulator always satisfies this),
    otherwise the interval would straddle a rounding boundary.

    Returns (bits, overflowed). Overflow to +-inf follows the IEEE rule:
    magnitudes at or beyond 2**128 - 2**103 become infinite.
    """
    if mag == 0:
        # A bare sticky residue is below half the smallest subnormal by the
        # contract above, so it rounds to signed zero.
        return (SIGN_BIT if sign else 0), False

    nb = mag.bit_length()
    exp_top = e + nb - 1  # floor(log2(value)); sticky never changes this
    q = max(exp_top - FRAC_BITS, MIN_EXP)  # quantum (ulp) exponent
    shift = q - e
    if shift <= 0:
        if sticky:
            raise ValueError("sticky residue at or above the kept quantum")
        sig = mag << -shift
    else:
        rem = mag & ((1 << shift) - 1)
        sig = mag >> shift
        half = 1 << (shift - 1)
        if rem > half or (rem == half and sticky):
            sig += 1
        elif rem == half:
            sig += sig & 1  # ties to even
        # rem < half (sticky or not): eps < 2**e <= half quantum, round down

    if sig == 0:
        return (SIGN_BIT if sign else 0), False
    nb2 = sig.bit_length()
    if nb2 > FRAC_BITS + 1:
        # carry out of the 24-bit significand; the low bits are zero
        sig >>= 1
        q += 1
        nb2 -= 1
    if q == MIN_EXP and nb2 <= FRAC_BITS:
        return pack_fields(sign, 0, sig), False  # subnormal
    biased = q + FRAC_BITS + EXP_BIAS
    if biased >= 0xFF:
        return (NEG_INF if sign else POS_INF), True
    return pack_fields(sign, biased, sig & FRAC_MASK), False


def to_float(bits: int) -> float:
    """Value of the bit pattern as a Python float (exact for all finite values)."""
    return struct.unpack("<f", struct.pack("<I", bits & MASK32))[0]


def from_float(x: float) -> int:
    """Bits of the binary32 nearest to x (host double->single conversion, RNE)."""
    try:
        return struct.unpack("<I", struct.pack("<f", x))[0]
    except OverflowError:
        return NEG_INF if x < 0 else POS_INF

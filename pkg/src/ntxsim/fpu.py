"""Functional model of the co-processor FPU data path.

The centerpiece is a wide two's-complement fixed-point accumulator that holds
sums of exact binary32 products without intermediate rounding; results round
once, at write-back. A small side path (comparator + index counter + ALU
register) covers the non-MAC commands: min/max/argmin/argmax, ReLU,
thresholding/masking, copy and fill.

All scalar operands are raw binary32 bit patterns (ints); array helpers take
numpy float32 arrays. The hardware's partial-carry-save organization is a
timing technique with no observable effect on values and is not modeled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple, Optional

import numpy as np

from . import fp32
from .fp32 import (
    FRAC_BITS,
    MASK32,
    NEG_INF,
    POS_INF,
    QNAN,
    SIGN_BIT,
    compose_round,
    decompose,
    is_finite,
    is_nan,
)

# Accumulator geometry: 300 data bits spanning weights 2**-150 .. 2**149,
# plus 4 guard bits for intermediate carries. Products with nonzero bits
# below 2**-150 (only possible when both inputs are deep in the subnormal
# range) are truncated toward -inf with a sticky residue that participates
# in the final rounding.
ACC_DATA_BITS = 300
ACC_GUARD_BITS = 4
ACC_WIDTH = ACC_DATA_BITS + ACC_GUARD_BITS
ACC_LSB_EXP = -150
ACC_MAX = (1 << (ACC_WIDTH - 1)) - 1
ACC_MIN = -(1 << (ACC_WIDTH - 1))


class FpuOpcode(IntEnum):
    MAC = 0
    VMUL = 1
    VADD = 2
    VSUB = 3
    MIN = 4
    MAX = 5
    ARGMIN = 6
    ARGMAX = 7
    RELU = 8
    THRESHOLD_MASK = 9
    COPY = 10
    FILL = 11

    @property
    def reads(self) -> int:
        """Operand streams consumed per element (0, 1 or 2)."""
        return _READS[self]

    @property
    def writes_each_element(self) -> bool:
        """True for elementwise commands that emit one word per element."""
        return self in _ELEMENTWISE

    @property
    def is_reduction(self) -> bool:
        """True for commands whose result is produced at scope close."""
        return not self.writes_each_element


_READS = {
    FpuOpcode.MAC: 2,
    FpuOpcode.VMUL: 2,
    FpuOpcode.VADD: 2,
    FpuOpcode.VSUB: 2,
    FpuOpcode.MIN: 1,
    FpuOpcode.MAX: 1,
    FpuOpcode.ARGMIN: 1,
    FpuOpcode.ARGMAX: 1,
    FpuOpcode.RELU: 1,
    FpuOpcode.THRESHOLD_MASK: 1,
    FpuOpcode.COPY: 1,
    FpuOpcode.FILL: 0,
}

_ELEMENTWISE = frozenset(
    {
        FpuOpcode.VMUL,
        FpuOpcode.VADD,
        FpuOpcode.VSUB,
        FpuOpcode.RELU,
        FpuOpcode.THRESHOLD_MASK,
        FpuOpcode.COPY,
        FpuOpcode.FILL,
    }
)

_COMPARISONS = frozenset(
    {FpuOpcode.MIN, FpuOpcode.MAX, FpuOpcode.ARGMIN, FpuOpcode.ARGMAX}
)


class ExactProduct(NamedTuple):
    """Exact product of two finite binary32 values: (-1)^sign * mag * 2**exp2."""

    sign: int
    mag: int  # < 2**48
    exp2: int

    def as_float(self) -> float:
        # Exact: 48-bit magnitudes fit a double, exponents stay in range.
        v = math.ldexp(self.mag, self.exp2)
        return -v if self.sign else v


def product_exact(a_bits: int, b_bits: int) -> ExactProduct:
    """Exact product of two finite binary32 operands. No rounding occurs.

    Raises ValueError for inf/NaN inputs; callers turn that into an
    `invalid` indication.
    """
    sa, ma, ea = decompose(a_bits)
    sb, mb, eb = decompose(b_bits)
    return ExactProduct(sa ^ sb, ma * mb, ea + eb)


@dataclass
class WideAccumulator:
    """Two's-complement fixed-point register holding exact product sums.

    While neither flag is set, value * 2**ACC_LSB_EXP plus the sub-lsb
    sticky residue equals the exact real sum accumulated since init.
    """

    value: int = 0
    sticky: bool = False
    overflow: bool = False
    invalid: bool = False

    def init(self, seed_bits: Optional[int] = None) -> None:
        """Reset to zero or to the exact fixed-point image of a binary32 seed."""
        self.value = 0
        self.sticky = False
        self.overflow = False
        self.invalid = False
        if seed_bits is None:
            return
        if not is_finite(seed_bits):
            self.invalid = True
            return
        s, mag, e = decompose(seed_bits)
        v = mag << (e - ACC_LSB_EXP)  # binary32 never has bits below the lsb
        self.value = -v if s else v

    def add_product(self, p: ExactProduct) -> None:
        shift = p.exp2 - ACC_LSB_EXP
        v = -p.mag if p.sign else p.mag
        if shift >= 0:
            self.value += v << shift
        else:
            if v & ((1 << -shift) - 1):
                self.sticky = True
            self.value += v >> -shift  # arithmetic shift == two's-complement truncate
        # Guard-bit hardware is modular, so a transient excursion that returns
        # in range is harmless; the flag tracks the current value.
        self.overflow = not ACC_MIN <= self.value <= ACC_MAX

    def mac(self, a_bits: int, b_bits: int) -> None:
        if not (is_finite(a_bits) and is_finite(b_bits)):
            self.invalid = True
            return
        self.add_product(product_exact(a_bits, b_bits))

    def round(self) -> int:
        """Single rounding of the accumulated value to binary32 (RNE)."""
        if self.invalid:
            return QNAN
        if self.overflow:
            return NEG_INF if self.value < 0 else POS_INF
        if self.value >= 0:
            bits, ovf = compose_round(0, self.value, ACC_LSB_EXP, self.sticky)
        else:
            # sticky is a positive residue: |v| = |value| - eps, so fold it in
            # as (|value| - 1) + (1 - eps), i.e. decrement and re-stick.
            mag = -self.value
            if self.sticky:
                bits, ovf = compose_round(1, mag - 1, ACC_LSB_EXP, True)
            else:
                bits, ovf = compose_round(1, mag, ACC_LSB_EXP, False)
        if ovf:
            self.overflow = True
        return bits


@dataclass
class FpuSidePath:
    """Comparator value + index counter + ALU register."""

    cmp_bits: int = 0
    cmp_index: int = 0
    alu_bits: int = 0

    def reset(self, op: FpuOpcode, seed_bits: Optional[int] = None) -> None:
        if seed_bits is not None:
            self.cmp_bits = seed_bits
        elif op in (FpuOpcode.MIN, FpuOpcode.ARGMIN):
            self.cmp_bits = POS_INF
        else:
            self.cmp_bits = NEG_INF
        self.cmp_index = 0


def _beats(op: FpuOpcode, challenger: int, incumbent: int) -> bool:
    """Strict comparison win; NaN loses all comparisons, first winner keeps ties."""
    if is_nan(challenger):
        return False
    if is_nan(incumbent):
        return True
    c = fp32.to_float(challenger)
    i = fp32.to_float(incumbent)
    return c < i if op in (FpuOpcode.MIN, FpuOpcode.ARGMIN) else c > i


def _f32_binop(op: FpuOpcode, a_bits: int, b_bits: int) -> int:
    a = np.uint32(a_bits).view(np.float32)
    b = np.uint32(b_bits).view(np.float32)
    with np.errstate(all="ignore"):  # overflow/invalid follow IEEE defaults
        if op is FpuOpcode.VMUL:
            r = a * b
        elif op is FpuOpcode.VADD:
            r = a + b
        else:
            r = a - b
    bits = int(np.float32(r).view(np.uint32))
    return QNAN if is_nan(bits) else bits  # canonical NaN for determinism


def execute_element(
    op: FpuOpcode,
    side: FpuSidePath,
    acc: WideAccumulator,
    in0_bits: int = 0,
    in1_bits: int = 0,
    index: int = 0,
) -> Optional[int]:
    """Run one innermost-loop element; returns the per-element write word if any.

    Reduction opcodes (MAC and the comparisons) update `acc`/`side` and
    return None; their result is sampled by `store_value` at scope close.
    """
    if op is FpuOpcode.MAC:
        acc.mac(in0_bits, in1_bits)
        return None
    if op in _COMPARISONS:
        if _beats(op, in0_bits, side.cmp_bits):
            side.cmp_bits = in0_bits
            side.cmp_index = index & MASK32
        return None
    if op in (FpuOpcode.VMUL, FpuOpcode.VADD, FpuOpcode.VSUB):
        return _f32_binop(op, in0_bits, in1_bits)
    if op is FpuOpcode.RELU:
        if is_nan(in0_bits) or fp32.to_float(in0_bits) <= 0.0:
            return 0
        return in0_bits
    if op is FpuOpcode.THRESHOLD_MASK:
        if is_nan(in0_bits) or is_nan(side.alu_bits):
            return 0
        above = fp32.to_float(in0_bits) > fp32.to_float(side.alu_bits)
        return fp32.from_float(1.0) if above else 0
    if op is FpuOpcode.COPY:
        return in0_bits
    if op is FpuOpcode.FILL:
        return side.alu_bits
    raise ValueError(f"unknown opcode {op!r}")


def store_value(op: FpuOpcode, side: FpuSidePath, acc: WideAccumulator) -> int:
    """Word written back when a reduction scope closes."""
    if op is FpuOpcode.MAC:
        return acc.round()
    if op in (FpuOpcode.MIN, FpuOpcode.MAX):
        return side.cmp_bits
    if op in (FpuOpcode.ARGMIN, FpuOpcode.ARGMAX):
        return side.cmp_index & MASK32  # raw index word
    raise ValueError(f"{op!r} has no scope-close store")


def fma32(a_bits: int, b_bits: int, c_bits: int) -> int:
    """Correctly rounded binary32 fused multiply-add (single rounding)."""
    if is_nan(a_bits) or is_nan(b_bits) or is_nan(c_bits):
        return QNAN
    if not (is_finite(a_bits) and is_finite(b_bits) and is_finite(c_bits)):
        return QNAN  # inf handling is out of scope for the data path
    p = product_exact(a_bits, b_bits)
    sc, mc, ec = decompose(c_bits)
    e = min(p.exp2, ec)
    total = ((-p.mag if p.sign else p.mag) << (p.exp2 - e)) + (
        (-mc if sc else mc) << (ec - e)
    )
    if total == 0:
        # Exact zero: -0 only when both addends are -0 (IEEE RNE rule).
        neg = bool(p.mag == 0 and p.sign and mc == 0 and sc)
        return SIGN_BIT if neg else 0
    sign = 1 if total < 0 else 0
    bits, _ = compose_round(sign, abs(total), e)
    return bits


# ---------------------------------------------------------------------------
# Vectorized exact accumulation
# ---------------------------------------------------------------------------

_F64_MANT = 53


class DotFlags(NamedTuple):
    overflow: bool
    invalid: bool


def exact_dot32(
    a: np.ndarray, b: np.ndarray, seed_bits: Optional[int] = None
) -> tuple[int, DotFlags]:
    """Exact sum of elementwise binary32 products, rounded once to binary32.

    Vectorized twin of folding `WideAccumulator.mac` over (a, b); the two are
    kept semantically identical (see the property tests). Returns
    (result_bits, flags).
    """
    acc_val, sticky, invalid = _exact_dot_int(a, b)
    if invalid:
        return QNAN, DotFlags(False, True)
    if seed_bits is not None:
        if not is_finite(seed_bits):
            return QNAN, DotFlags(False, True)
        s, mag, e = decompose(seed_bits)
        v = mag << (e - ACC_LSB_EXP)
        acc_val += -v if s else v
    if not ACC_MIN <= acc_val <= ACC_MAX:
        return (NEG_INF if acc_val < 0 else POS_INF), DotFlags(True, False)
    if acc_val >= 0:
        bits, ovf = compose_round(0, acc_val, ACC_LSB_EXP, sticky)
    elif sticky:
        bits, ovf = compose_round(1, -acc_val - 1, ACC_LSB_EXP, True)
    else:
        bits, ovf = compose_round(1, -acc_val, ACC_LSB_EXP, False)
    return bits, DotFlags(ovf, False)


def _exact_dot_int(a: np.ndarray, b: np.ndarray) -> tuple[int, bool, bool]:
    """Accumulate exact products as a fixed-point integer at 2**ACC_LSB_EXP."""
    a64 = np.asarray(a, dtype=np.float64)
    b64 = np.asarray(b, dtype=np.float64)
    if a64.size == 0:
        return 0, False, False
    p = a64 * b64  # exact: 48-bit products fit a double
    if not np.isfinite(p).all() or not (np.isfinite(a64).all() and np.isfinite(b64).all()):
        return 0, False, True
    m, e = np.frexp(p)
    iv = (m * (1 << _F64_MANT)).astype(np.int64)  # exact integer mantissas
    sh = e.astype(np.int64) - _F64_MANT - ACC_LSB_EXP
    total = 0
    sticky = False
    neg_shift = sh < 0
    if neg_shift.any():
        # Products below the accumulator lsb: truncate toward -inf, sticky.
        for v, s in zip(iv[neg_shift].tolist(), sh[neg_shift].tolist()):
            if v == 0:
                continue
            k = -s
            if v & ((1 << k) - 1):
                sticky = True
            total += v >> k
        keep = ~neg_shift
        iv = iv[keep]
        sh = sh[keep]
    if iv.size:
        # Bucket by shift; chunked int64 partial sums stay exact
        # (|mantissa| < 2**53, chunks of 512 < 2**63).
        order = np.argsort(sh, kind="stable")
        iv = iv[order]
        sh = sh[order]
        bounds = np.flatnonzero(np.diff(sh)) + 1
        starts = np.concatenate(([0], bounds))
        ends = np.concatenate((bounds, [iv.size]))
        for s0, s1 in zip(starts.tolist(), ends.tolist()):
            shift = int(sh[s0])
            bucket = iv[s0:s1]
            part = 0
            for c0 in range(0, bucket.size, 512):
                part += int(bucket[c0 : c0 + 512].sum())
            total += part << shift
    return total, sticky, False

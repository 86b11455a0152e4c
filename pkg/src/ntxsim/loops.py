"""Cascaded hardware loops and address generation.

Five 16-bit loop counters form an odometer: the innermost (level 0)
increments every element, a counter wrapping at its maximum carries into the
next level. Three address generators each hold a 32-bit byte address plus
five signed strides; after an element, every AGU adds the stride of the
outermost level that incremented on that step. `compile_affine_strides`
inverts this delta scheme so an affine index map lowers onto it directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import AddressOverflow

N_LEVELS = 5
N_AGUS = 3
MAX_COUNT = 0xFFFF
ADDR_SPACE = 1 << 32
STRIDE_MIN = -(1 << 31)
STRIDE_MAX = (1 << 31) - 1


@dataclass(frozen=True)
class HwLoopConfig:
    counts: tuple[int, ...]
    enabled: tuple[bool, ...]

    def __post_init__(self):
        assert len(self.counts) == N_LEVELS and len(self.enabled) == N_LEVELS
        seen_disabled = False
        for lvl in range(N_LEVELS):
            if self.enabled[lvl]:
                if seen_disabled:
                    raise ValueError("enabled loops must form a contiguous prefix")
                if not 1 <= self.counts[lvl] <= MAX_COUNT:
                    raise ValueError(f"loop {lvl} count {self.counts[lvl]} out of range")
            else:
                seen_disabled = True
        if not self.enabled[0]:
            raise ValueError("level 0 must be enabled")

    @classmethod
    def from_counts(cls, counts: Sequence[int]) -> "HwLoopConfig":
        """Enable levels 0..len(counts)-1 with the given iteration counts."""
        if not 1 <= len(counts) <= N_LEVELS:
            raise ValueError("1 to 5 loop levels")
        full = tuple(counts) + (1,) * (N_LEVELS - len(counts))
        enabled = tuple(i < len(counts) for i in range(N_LEVELS))
        return cls(full, enabled)

    @property
    def outer_level(self) -> int:
        return max(lvl for lvl in range(N_LEVELS) if self.enabled[lvl])

    @property
    def total_iterations(self) -> int:
        n = 1
        for lvl in range(N_LEVELS):
            if self.enabled[lvl]:
                n *= self.counts[lvl]
        return n


@dataclass(frozen=True)
class LoopState:
    counters: tuple[int, ...] = (0,) * N_LEVELS
    done: bool = False


def loop_step(cfg: HwLoopConfig, st: LoopState) -> tuple[LoopState, Optional[int], bool]:
    """Advance the odometer one element.

    Returns (state', incremented_level, done). `incremented_level` is the
    level whose counter advanced without wrapping, or None when the step
    wrapped the outermost enabled counter (nest complete).
    """
    if st.done:
        raise RuntimeError("loop_step on a completed nest")
    counters = list(st.counters)
    for lvl in range(cfg.outer_level + 1):
        if not cfg.enabled[lvl]:
            continue
        counters[lvl] += 1
        if counters[lvl] < cfg.counts[lvl]:
            return LoopState(tuple(counters)), lvl, False
        counters[lvl] = 0
    return LoopState(tuple(counters), done=True), None, True


@dataclass(frozen=True)
class AguConfig:
    base: int
    strides: tuple[int, ...]

    def __post_init__(self):
        if not 0 <= self.base < ADDR_SPACE:
            raise AddressOverflow(f"base {self.base:#x} outside 32-bit space")
        assert len(self.strides) == N_LEVELS
        for s in self.strides:
            if not STRIDE_MIN <= s <= STRIDE_MAX:
                raise AddressOverflow(f"stride {s} outside signed 32-bit range")


@dataclass(frozen=True)
class AguState:
    address: int = 0


def agu_step(cfg: AguConfig, st: AguState, incremented_level: int) -> AguState:
    """Add the stride selected by the outermost loop that incremented."""
    addr = st.address + cfg.strides[incremented_level]
    if not 0 <= addr < ADDR_SPACE:
        raise AddressOverflow(f"address {addr:#x} left the 32-bit space")
    return AguState(addr)


def compile_affine_strides(coeffs: Sequence[int], counts: Sequence[int]) -> tuple[int, ...]:
    """Delta strides reproducing address = base + sum(coeffs[j] * i[j]).

    Level j iterates i_j in [0, counts[j]); level 0 is innermost. The stride
    for level m compensates the wrap of all inner levels:
    strides[m] = coeffs[m] - sum_{j<m} (counts[j]-1) * coeffs[j].
    """
    if not 1 <= len(coeffs) <= N_LEVELS or len(coeffs) != len(counts):
        raise ValueError("need matching coefficient/count lists of 1 to 5 levels")
    strides = []
    rewind = 0
    for m, a in enumerate(coeffs):
        s = a - rewind
        if not STRIDE_MIN <= s <= STRIDE_MAX:
            raise AddressOverflow(f"compiled stride {s} overflows signed 32 bits")
        strides.append(s)
        rewind += (counts[m] - 1) * a
    return tuple(strides + [0] * (N_LEVELS - len(strides)))


def reconstruct_coeffs(strides: Sequence[int], counts: Sequence[int]) -> list[int]:
    """Inverse of compile_affine_strides for an enabled prefix of levels."""
    coeffs: list[int] = []
    rewind = 0
    for m in range(len(counts)):
        a = strides[m] + rewind
        coeffs.append(a)
        rewind += (counts[m] - 1) * a
    return coeffs


def stride_addresses(base: int, strides: Sequence[int], counts: Sequence[int]) -> np.ndarray:
    """All addresses visited by delta stepping, in element order (vectorized).

    Equivalent to starting at `base` and folding agu_step over loop_step; the
    identity addr(i) = base + sum(a_j * i_j) with a = reconstruct_coeffs holds
    for arbitrary stride programming, not just compiled affine maps.
    """
    coeffs = reconstruct_coeffs(strides, counts)
    addr = np.asarray([base], dtype=np.int64)
    # Each level added becomes the slowest axis, leaving i_0 varying fastest.
    for m, n in enumerate(counts):
        idx = np.arange(n, dtype=np.int64) * coeffs[m]
        addr = (addr.reshape(1, -1) + idx.reshape(-1, 1)).reshape(-1)
    return addr

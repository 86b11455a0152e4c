import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ntxsim.errors import AddressOverflow
from ntxsim.loops import (
    AguConfig,
    AguState,
    HwLoopConfig,
    LoopState,
    agu_step,
    compile_affine_strides,
    loop_step,
    stride_addresses,
)


def run_nest(counts):
    """Drive loop_step to completion; return visited counter tuples and levels."""
    cfg = HwLoopConfig.from_counts(counts)
    st_ = LoopState()
    visited = [st_.counters[: len(counts)]]
    levels = []
    while True:
        st_, lvl, done = loop_step(cfg, st_)
        if done:
            levels.append(lvl)
            break
        visited.append(st_.counters[: len(counts)])
        levels.append(lvl)
    return visited, levels


class TestLoopStep:
    def test_single_level_wrap(self):
        cfg = HwLoopConfig.from_counts([3])
        st_, lvl, done = loop_step(cfg, LoopState((2, 0, 0, 0, 0)))
        assert done and lvl is None and st_.done

    def test_two_level_carry(self):
        cfg = HwLoopConfig.from_counts([2, 2])
        st_, lvl, done = loop_step(cfg, LoopState((1, 0, 0, 0, 0)))
        assert st_.counters[:2] == (0, 1) and lvl == 1 and not done

    def test_step_done_state_raises(self):
        cfg = HwLoopConfig.from_counts([1])
        st_, _, done = loop_step(cfg, LoopState())
        assert done
        with pytest.raises(RuntimeError):
            loop_step(cfg, st_)

    @pytest.mark.parametrize("counts", [[3], [2, 3], [2, 3, 2], [1, 4, 1, 2], [2, 1, 2, 1, 2]])
    def test_odometer_matches_nested_loops(self, counts):
        visited, _ = run_nest(counts)
        # explicit nested-loop oracle, outer level slowest
        want = [
            tuple(reversed(idx))
            for idx in itertools.product(*(range(n) for n in reversed(counts)))
        ]
        assert visited == want

    @given(st.lists(st.integers(1, 5), min_size=1, max_size=5))
    def test_iteration_count(self, counts):
        visited, _ = run_nest(counts)
        total = 1
        for n in counts:
            total *= n
        assert len(visited) == total
        assert HwLoopConfig.from_counts(counts).total_iterations == total

    def test_counter_bounds_invariant(self):
        counts = [3, 2, 4]
        cfg = HwLoopConfig.from_counts(counts)
        st_ = LoopState()
        while not st_.done:
            for lvl, n in enumerate(counts):
                assert 0 <= st_.counters[lvl] < n
            st_, _, _ = loop_step(cfg, st_)

    def test_enabled_prefix_enforced(self):
        with pytest.raises(ValueError):
            HwLoopConfig((2, 2, 2, 1, 1), (True, False, True, False, False))
        with pytest.raises(ValueError):
            HwLoopConfig.from_counts([2, 0])


class TestAguStep:
    def test_unit_stride_walk(self):
        cfg = AguConfig(0, (4, 0, 0, 0, 0))
        st_ = AguState(0)
        seen = []
        for _ in range(3):
            st_ = agu_step(cfg, st_, 0)
            seen.append(st_.address)
        assert seen == [4, 8, 12]

    def test_all_zero_strides_constant(self):
        cfg = AguConfig(100, (0, 0, 0, 0, 0))
        st_ = AguState(100)
        for lvl in (0, 1, 0, 2):
            st_ = agu_step(cfg, st_, lvl)
            assert st_.address == 100

    def test_two_level_affine_example(self):
        # base + 100*i + 4*j with N_j = 10: strides (4, 64); 64 = 100 - 9*4
        strides = compile_affine_strides([4, 100], [10, 3])
        assert strides[:2] == (4, 64)
        cfg = HwLoopConfig.from_counts([10, 3])
        acfg = AguConfig(0, strides)
        lst, ast = LoopState(), AguState(0)
        got = [ast.address]
        while True:
            lst, lvl, done = loop_step(cfg, lst)
            if done:
                break
            ast = agu_step(acfg, ast, lvl)
            got.append(ast.address)
        want = [100 * i + 4 * j for i in range(3) for j in range(10)]
        assert got == want

    def test_address_overflow_is_hard_error(self):
        cfg = AguConfig(2**32 - 4, (8, 0, 0, 0, 0))
        with pytest.raises(AddressOverflow):
            agu_step(cfg, AguState(2**32 - 4), 0)


class TestCompileAffine:
    def test_single_level(self):
        assert compile_affine_strides([4], [8])[:1] == (4,)

    def test_tile_walk_in_wider_image(self):
        # 8x8 tile of 4-byte words inside a 64-wide row-major image
        coeffs = [4, 64 * 4, 64 * 4 * 8]
        counts = [8, 8, 8]
        strides = compile_affine_strides(coeffs, counts)
        addrs = stride_addresses(0, strides, counts)
        want = np.array(
            [c * 64 * 4 * 8 + r * 64 * 4 + x * 4
             for c in range(8) for r in range(8) for x in range(8)],
            dtype=np.int64,
        )
        assert np.array_equal(addrs, want)

    def test_stride_overflow_rejected(self):
        with pytest.raises(AddressOverflow):
            compile_affine_strides([2**30, 2**30], [64, 2])


@st.composite
def affine_maps(draw):
    levels = draw(st.integers(1, 5))
    counts = [draw(st.integers(1, 6)) for _ in range(levels)]
    coeffs = [draw(st.integers(-256, 256)) * 4 for _ in range(levels)]
    base = draw(st.integers(0, 2**14)) * 4 + 2**18  # keep walks in range
    return base, coeffs, counts


class TestAffineCompleteness:
    @settings(max_examples=300, deadline=None)
    @given(affine_maps())
    def test_compiled_strides_reproduce_affine_oracle(self, m):
        base, coeffs, counts = m
        strides = compile_affine_strides(coeffs, counts)
        lcfg = HwLoopConfig.from_counts(counts)
        acfg = AguConfig(base, strides)
        lst, ast = LoopState(), AguState(base)
        got = [ast.address]
        while True:
            lst, lvl, done = loop_step(lcfg, lst)
            if done:
                break
            ast = agu_step(acfg, ast, lvl)
            got.append(ast.address)
        idx_space = itertools.product(*(range(n) for n in reversed(counts)))
        want = [
            base + sum(coeffs[j] * idx for j, idx in enumerate(reversed(point)))
            for point in idx_space
        ]
        assert got == want

    @settings(max_examples=200, deadline=None)
    @given(affine_maps())
    def test_vectorized_addresses_match_stepping(self, m):
        base, coeffs, counts = m
        strides = compile_affine_strides(coeffs, counts)
        lcfg = HwLoopConfig.from_counts(counts)
        acfg = AguConfig(base, strides)
        lst, ast = LoopState(), AguState(base)
        stepped = [ast.address]
        while True:
            lst, lvl, done = loop_step(lcfg, lst)
            if done:
                break
            ast = agu_step(acfg, ast, lvl)
            stepped.append(ast.address)
        vec = stride_addresses(base, strides, counts)
        assert vec.tolist() == stepped

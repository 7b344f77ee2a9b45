import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from opuclab.coeffs import (
    PartitionPlan,
    adaptive_partition,
    block_count,
    block_diagnostics,
    build_plan,
    cell_masses,
    default_goal_exponent,
    dyadic_partition,
    from_values,
    gen_power_decay,
    gen_random_weighted,
    gen_sparse,
    load_sequence,
    regenerate,
    rotate,
    save_sequence,
    verify_dichotomy,
    weighted_partial_sums,
    weighted_tail,
)
from oracles import dyadic_partition_loop


def _with_nonzeros(idx, n_max, value=0.3):
    vals = np.zeros(n_max, dtype=np.complex128)
    vals[list(idx)] = value
    return from_values(vals)


class TestGenerators:
    def test_zero_c_gives_zero_sequence(self):
        seq = gen_power_decay(0.0, 1.3, 5, 64)
        assert np.all(seq.values == 0)

    def test_first_modulus(self):
        seq = gen_power_decay(0.5, 1.0, 0, 10)
        assert seq.moduli[0] == 0.5
        assert abs(abs(seq.values[0]) - 0.5) < 1e-16

    def test_strictly_decreasing_moduli(self):
        seq = gen_power_decay(0.9, 0.8, 7, 4096)
        assert seq.moduli.max() == 0.9
        assert np.abs(seq.values).max() < 1
        assert np.all(np.diff(seq.moduli) < 0)

    def test_power_decay_modulus_formula_exact(self):
        seq = gen_power_decay(0.7, 1.1, 2, 500)
        n = np.arange(500)
        assert np.array_equal(seq.moduli, 0.7 * (1.0 + n) ** -1.1)
        np.testing.assert_allclose(np.abs(seq.values), seq.moduli, rtol=1e-15)

    @pytest.mark.parametrize("c", [1.0, 1.5])
    def test_rejects_c_at_least_one(self, c):
        with pytest.raises(ValueError):
            gen_power_decay(c, 1.0, 0, 10)

    def test_rejects_bad_n_max(self):
        with pytest.raises(ValueError):
            gen_power_decay(0.5, 1.0, 0, 0)

    def test_regeneration_bit_identical(self):
        a = gen_random_weighted(0.6, 0.2, 42, 3000)
        b = gen_random_weighted(0.6, 0.2, 42, 3000)
        assert a.values.tobytes() == b.values.tobytes()
        assert a.fingerprint() == b.fingerprint()

    def test_phase_stream_is_prefix_stable(self):
        a = gen_power_decay(0.5, 1.0, 9, 100)
        b = gen_power_decay(0.5, 1.0, 9, 1000)
        assert np.array_equal(a.values, b.values[:100])

    def test_two_seeds_differ_but_share_moduli(self):
        a = gen_random_weighted(0.6, 0.2, 1, 2000)
        b = gen_random_weighted(0.6, 0.2, 2, 2000)
        assert not np.array_equal(a.values, b.values)
        n = np.arange(2000)
        formula = 0.9 * (1.0 + n) ** (-(1 + 0.6 + 0.2) / 2)
        assert np.array_equal(a.moduli, formula)
        assert np.array_equal(b.moduli, formula)

    def test_random_weighted_tail_is_cauchy(self, rw06):
        seq = gen_random_weighted(0.6, 0.2, 11, 200_000)
        incr = np.diff(weighted_partial_sums(seq, 0.6))
        assert np.all(incr >= 0)
        assert incr[-100_000:].max() < 1e-6

    def test_single_coefficient_tail(self):
        seq = gen_random_weighted(0.6, 0.2, 0, 1)
        assert seq.n_max == 1
        assert weighted_tail(seq, 0.6, 0) == 0.0

    def test_sparse_support(self):
        seq = gen_sparse([3, 9, 0], 0.5, 1.0, 4, 32)
        assert set(np.flatnonzero(seq.moduli)) == {0, 3, 9}
        assert seq.moduli[3] == 0.5 * 4.0**-1

    def test_values_are_read_only(self, rw06):
        with pytest.raises(ValueError):
            rw06.values[0] = 0

    def test_rejects_coefficient_outside_disk(self):
        with pytest.raises(ValueError):
            from_values([0.2, 1.0])

    @given(st.floats(0, 0.99), st.floats(0.05, 3), st.integers(0, 2**32), st.integers(1, 300))
    def test_moduli_inside_disk(self, c, delta, seed, n):
        seq = gen_power_decay(c, delta, seed, n)
        assert np.all(np.abs(seq.values) < 1)


class TestRotate:
    def test_zero_is_identity(self, rw06):
        assert rotate(rw06, 0.0) is rw06

    def test_pi_flips_sign(self):
        seq = rotate(from_values([0.5]), math.pi)
        assert seq.values[0] == -0.5

    @given(st.floats(0, 2 * math.pi, exclude_max=True), st.floats(0, 1))
    def test_modulus_diagnostics_unchanged(self, beta, gamma):
        seq = gen_power_decay(0.8, 0.7, 5, 256)
        rot = rotate(seq, beta)
        assert np.array_equal(rot.moduli, seq.moduli)
        assert np.array_equal(weighted_partial_sums(rot, gamma), weighted_partial_sums(seq, gamma))
        assert dyadic_partition(rot).x == dyadic_partition(seq).x
        plan = dyadic_partition(seq)
        assert block_diagnostics(rot, plan, 0.7, N=2) == block_diagnostics(seq, plan, 0.7, N=2)


class TestWeightedTail:
    def test_zero_sequence(self):
        assert weighted_tail(from_values(np.zeros(8)), 0.5, 7) == 0.0

    def test_single_term(self):
        seq = from_values([0, 0.5, 0, 0])
        for n in (1, 2, 3):
            assert weighted_tail(seq, 0.5, n) == 0.25

    def test_zero_weight_convention(self):
        seq = from_values([0.5, 0.0])
        assert weighted_tail(seq, 0.3, 1) == 0.0
        assert weighted_tail(seq, 0.0, 1) == 0.25

    def test_power_decay_sums_increase_and_converge(self):
        seq = gen_power_decay(0.5, 1.0, 0, 10**6)
        s = weighted_partial_sums(seq, 0.5)
        assert np.all(np.diff(s[1:]) > 0)
        # sum k^0.5 / (4 (1+k)^2) converges; tail beyond N is about N^-0.5 / 2
        k = np.arange(1, 10**6, dtype=np.float64)
        direct = math.fsum(k**0.5 * 0.25 / (1 + k) ** 2)
        assert abs(s[-1] - direct) < 1e-9
        assert s[-1] - s[10**5] < 0.5 * (10**5) ** -0.5 * 1.01


class TestDyadicPartition:
    def test_worked_example(self):
        assert dyadic_partition(_with_nonzeros({0, 3, 9}, 32)).x == [0, 1, 4, 16]

    def test_second_example(self):
        assert dyadic_partition(_with_nonzeros({0, 5}, 32)).x == [0, 1, 8]

    def test_all_nonzero(self, power_seq):
        x = dyadic_partition(power_seq).x
        assert x == [0] + [2**k for k in range(12)]

    def test_zero_sequence_rejected(self):
        with pytest.raises(ValueError, match="finitely supported / trivial partition"):
            dyadic_partition(from_values(np.zeros(16)))

    def test_partial_last_block(self):
        plan = dyadic_partition(_with_nonzeros({0, 20}, 24))
        assert plan.x == [0, 1, 32]
        assert plan.has_partial
        assert plan.completed_blocks() == [(0, 1)]

    @given(st.sets(st.integers(0, 511), min_size=1, max_size=30), st.integers(512, 600))
    def test_matches_loop_oracle(self, idx, n_max):
        seq = _with_nonzeros(idx, n_max)
        x = dyadic_partition(seq).x
        assert x == dyadic_partition_loop(idx, n_max)
        assert x[0] == 0
        assert all(math.log2(v).is_integer() for v in x[1:])
        assert all(a < b for a, b in zip(x, x[1:]))
        for lo, hi in zip(x, x[1:]):
            assert np.any(seq.moduli[lo:hi] != 0)


class TestBlockDiagnostics:
    def test_block_count_examples(self):
        assert block_count(0.04) == 5
        assert block_count(4.0) == 1

    def test_default_goal_exponent(self):
        # (2 - 0.6 - 0.7) / (0.7 + 0.6 - 1) = 2.333...
        assert default_goal_exponent(0.6, 0.7) == 3
        with pytest.raises(ValueError):
            default_goal_exponent(0.6, 0.3)

    def test_row_values(self):
        seq = from_values([0.1, 0.2, 0.3, 0.4])
        plan = dyadic_partition(seq)
        rows = block_diagnostics(seq, plan, 0.5, N=2)
        assert [(r["lo"], r["hi"]) for r in rows] == [(0, 1), (1, 2), (2, 4)]
        last = rows[-1]
        assert math.isclose(last["l1"], 0.7)
        assert math.isclose(last["l2"], 0.5)
        assert math.isclose(last["weighted"], 2**0.5 * 0.25)
        assert math.isclose(last["goal"], 2**0.25 * 0.5)
        assert math.isclose(last["goal2"], 0.7 * (2**0.25 * 0.5) ** 2)

    def test_window_holds_in_tail(self):
        seq = gen_random_weighted(0.6, 0.2, 3, 2**20)
        rows = block_diagnostics(seq, dyadic_partition(seq), 0.7, gamma=0.6)
        windows = [r["window"] for r in rows]
        tail = windows[len(windows) // 2 :]
        assert all(0.5 <= w <= 1.0 for w in tail)
        goals = np.cumsum([r["goal"] for r in rows])
        assert goals[-1] - goals[-2] < 0.05 * goals[-1]

    def test_warns_outside_window(self, rw06):
        with pytest.warns(UserWarning):
            block_diagnostics(rw06, dyadic_partition(rw06), 0.3, gamma=0.6, N=2)


class TestAdaptivePartition:
    def test_uniform_block_example(self):
        seq = from_values(np.full(8, 0.1))
        cells = adaptive_partition(seq, (0, 8), 2, 2)
        assert math.isclose(cells.threshold, 0.8 * 2**-1.5)
        for (a, b), m in zip(cells.cells, cell_masses(seq, cells.points)):
            assert b - a <= 1 or m <= 0.2829
        assert verify_dichotomy(seq, cells)

    def test_zero_block(self):
        seq = from_values(np.zeros(16))
        cells = adaptive_partition(seq, (0, 16), 3, 1)
        assert verify_dichotomy(seq, cells)
        assert cells.points[0] == 0 and cells.points[-1] == 16

    def test_overflow_guard(self, rw06):
        with pytest.raises(OverflowError):
            adaptive_partition(rw06, (0, 64), 2**11, 2)

    def test_padding_repeats_right_endpoint(self):
        seq = from_values([0.0, 0.9, 0.0, 0.0])
        cells = adaptive_partition(seq, (0, 4), 8, 1)
        assert len(cells.points) == cells.budget + 1
        assert cells.points[:5] == [0, 1, 2, 3, 4]
        assert cells.points[4:] == [4] * 5

    @given(
        st.lists(st.floats(0, 0.95), min_size=2, max_size=200),
        st.integers(1, 6),
        st.integers(1, 3),
    )
    def test_dichotomy_under_recomputation(self, mods, N_n, j):
        seq = from_values(mods)
        cells = adaptive_partition(seq, (0, len(mods)), N_n, j)
        pts = cells.points
        assert pts[0] == 0 and pts[-1] == len(mods)
        assert pts == sorted(pts)
        assert verify_dichotomy(seq, cells)
        assert cells.over_budget or len(pts) == cells.budget + 1

    def test_build_plan_nests(self, rw06):
        plan = build_plan(rw06, 0.7, gamma=0.6, j=1)
        assert isinstance(plan, PartitionPlan)
        assert len(plan.nested) == len(plan.completed_blocks())
        for (lo, hi), pts in zip(plan.completed_blocks(), plan.nested):
            assert pts[0] == lo and pts[-1] == hi


class TestSerialization:
    def test_round_trip(self, tmp_path, rw06):
        csv_path, json_path = save_sequence(rw06, tmp_path / "s")
        assert load_sequence(json_path) == rw06
        assert load_sequence(csv_path).values.tobytes() == rw06.values.tobytes()
        assert csv_path.read_text().splitlines()[0] == "n,re,im"

    def test_explicit_resolves_csv(self, tmp_path):
        seq = from_values([0.1 + 0.2j, -0.3j])
        _, json_path = save_sequence(seq, tmp_path / "e")
        assert load_sequence(json_path).values.tobytes() == seq.values.tobytes()

    def test_regenerate_rejects_explicit(self):
        with pytest.raises(ValueError):
            regenerate({"family": "explicit", "n_max": 3})

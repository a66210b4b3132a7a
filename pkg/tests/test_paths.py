import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughfolio.errors import GridAlignmentError, ParameterError
from roughfolio.paths import (
    PartitionSequence,
    SampledPath,
    TimeGrid,
    p_variation,
    p_variation_control,
    p_variation_exhaustive,
    p_variation_power,
    p_variation_power_bracket,
    piecewise_constant_approx,
    two_param_p_variation,
)

from conftest import brownian_like


def path_1d(values):
    values = np.asarray(values, dtype=float)
    return SampledPath(TimeGrid(np.arange(len(values), dtype=float)), values)


class TestTimeGrid:
    def test_rejects_bad_grids(self):
        with pytest.raises(ParameterError):
            TimeGrid(np.array([0.0]))
        with pytest.raises(ParameterError):
            TimeGrid(np.array([1.0, 2.0]))
        with pytest.raises(ParameterError):
            TimeGrid(np.array([0.0, 1.0, 1.0]))

    def test_index_of_off_grid(self):
        g = TimeGrid.uniform(1.0, 4)
        assert g.index_of(0.5) == 2
        with pytest.raises(GridAlignmentError):
            g.index_of(0.3)


class TestSampledPath:
    def test_linear_interpolation_between_nodes(self):
        p = path_1d([0.0, 2.0, 0.0])
        assert p.at(0.5)[0] == pytest.approx(1.0)
        assert p.at(1.0)[0] == 2.0  # exact at nodes
        np.testing.assert_allclose(p.at([0.25, 1.5]), [[0.5], [1.0]])

    def test_values_immutable(self):
        p = path_1d([0.0, 1.0])
        with pytest.raises(ValueError):
            p.values[0] = 5.0


class TestPVariation:
    def test_constant_path_is_zero(self):
        p = path_1d([3.0, 3.0, 3.0, 3.0])
        for q in (1.0, 2.0, 2.5):
            assert p_variation(p, q) == 0.0

    def test_zigzag_example(self):
        # values (0, 1, 0): using all three nodes gives 1^2 + 1^2 = 2
        p = path_1d([0.0, 1.0, 0.0])
        assert p_variation_power(p, 2.0) == pytest.approx(2.0, abs=1e-14)

    def test_monotone_path_coarsest_partition_dominates(self):
        t = np.linspace(0, 1, 9)
        p = SampledPath(TimeGrid(t), t)
        assert p_variation_power(p, 2.0) == pytest.approx(1.0, abs=1e-14)

    def test_window_monotonicity(self):
        p = brownian_like(3, 64, 2)
        t = p.grid.times
        v1 = p_variation(p, 2.5, (0.0, t[32]))
        v2 = p_variation(p, 2.5, (0.0, t[48]))
        assert v1 <= v2 + 1e-14

    def test_p_below_one_rejected(self):
        with pytest.raises(ParameterError):
            p_variation(path_1d([0.0, 1.0]), 0.5)

    def test_refinement_of_linear_segments_is_invariant(self):
        # new nodes on segments leave the p-variation unchanged
        coarse = path_1d([0.0, 1.0, -0.5, 2.0])
        fine_t = np.linspace(0, 3, 13)
        fine = SampledPath(TimeGrid(fine_t), coarse.at(fine_t))
        for q in (1.5, 2.0, 2.5):
            assert p_variation_power(fine, q) == pytest.approx(
                p_variation_power(coarse, q), rel=1e-12
            )

    @settings(max_examples=40, deadline=None)
    @given(
        vals=st.lists(
            st.floats(-5, 5, allow_nan=False, allow_infinity=False),
            min_size=2,
            max_size=10,
        ),
        p=st.sampled_from([1.0, 1.5, 2.0, 2.5]),
    )
    def test_dp_matches_exhaustive_enumeration(self, vals, p):
        path = path_1d(vals)
        dp = p_variation_power(path, p)
        brute = p_variation_exhaustive(np.asarray(vals), p)
        assert dp == pytest.approx(brute, rel=1e-12, abs=1e-12)

    def test_dp_matches_exhaustive_2d(self):
        path = brownian_like(5, 11, 2)
        dp = p_variation_power(path, 2.5)
        brute = p_variation_exhaustive(path.values, 2.5)
        assert dp == pytest.approx(brute, rel=1e-12)

    def test_coarsened_bracket_contains_exact_value(self):
        path = brownian_like(9, 400, 1)
        exact = p_variation_power(path, 2.5)
        lo, hi = p_variation_power_bracket(path, 2.5, node_cap=80)
        assert lo <= exact * (1 + 1e-12)
        assert hi >= exact * (1 - 1e-12)


class TestTwoParamPVariation:
    def test_zero_map(self):
        g = TimeGrid.uniform(1.0, 8)
        assert two_param_p_variation(lambda i, j: 0.0, 1.5, g) == 0.0

    def test_squared_cell_widths(self):
        # Xi_{s,t} = (t-s)^2, p = 1: the trivial partition attains sup = 1
        g = TimeGrid.uniform(1.0, 16)
        t = g.times
        val = two_param_p_variation(lambda i, j: (t[j] - t[i]) ** 2, 1.0, g)
        assert val == pytest.approx(1.0, abs=1e-14)

    def test_matches_bruteforce_on_lift_area(self):
        from roughfolio.rough import RoughLift

        path = brownian_like(21, 11, 2)
        lift = RoughLift.from_path(path)
        p = 1.25
        dp = two_param_p_variation(lambda i, j: lift.area(i, j), p, path.grid)
        # exhaustive search over all partitions of the 12-node grid
        n = len(path)
        best = 0.0
        for mask in range(1 << (n - 2)):
            pts = [0] + [i + 1 for i in range(n - 2) if mask >> i & 1] + [n - 1]
            s = sum(
                np.linalg.norm(lift.area(a, b)) ** p for a, b in zip(pts, pts[1:])
            )
            best = max(best, s)
        assert dp**p == pytest.approx(best, rel=1e-12)


class TestControlFunctions:
    def test_pvariation_control_is_superadditive(self):
        path = brownian_like(13, 48, 2)
        c = p_variation_control(path, 2.5)
        assert c.superadditivity_residual() <= 1e-12

    def test_zero_on_diagonal(self):
        path = brownian_like(13, 16, 1)
        c = p_variation_control(path, 2.0)
        t = path.grid.times
        assert c(t[5], t[5]) == 0.0

    def test_scaled_and_sum_remain_superadditive(self):
        path = brownian_like(17, 32, 1)
        c = p_variation_control(path, 2.5)
        combo = c.scaled(3.0) + c
        assert combo.is_superadditive()


class TestPartitions:
    def test_dyadic_levels_nested_and_halving(self):
        g = TimeGrid.uniform(2.0, 64)
        seq = PartitionSequence.dyadic(g, 4)
        assert len(seq) == 4
        meshes = [lvl.mesh for lvl in seq]
        assert meshes == sorted(meshes, reverse=True)
        for a, b in zip(seq, list(seq)[1:]):
            assert set(a.times).issubset(set(b.times))
            assert b.mesh <= a.mesh / 2 + 1e-15

    def test_dyadic_requires_divisible_cells(self):
        g = TimeGrid.uniform(1.0, 6)
        with pytest.raises(ParameterError):
            PartitionSequence.dyadic(g, 3)

    def test_non_nested_rejected(self):
        a = TimeGrid(np.array([0.0, 0.3, 1.0]))
        b = TimeGrid(np.array([0.0, 0.5, 1.0]))
        with pytest.raises(GridAlignmentError):
            PartitionSequence((a, b), enforce_mesh_halving=False)


class TestPiecewiseConstant:
    def test_identity_partition(self):
        p = brownian_like(1, 8, 2)
        out = piecewise_constant_approx(p, p.grid)
        np.testing.assert_array_equal(out.values, p.values)

    def test_constant_path(self):
        p = path_1d([2.0] * 5)
        part = TimeGrid(np.array([0.0, 2.0, 4.0]))
        out = piecewise_constant_approx(p, part)
        np.testing.assert_array_equal(out.values, p.values)

    def test_linear_path_three_node_partition(self):
        t = np.linspace(0, 1, 5)
        p = SampledPath(TimeGrid(t), t)
        part = TimeGrid(np.array([0.0, 0.5, 1.0]))
        out = piecewise_constant_approx(p, part)
        np.testing.assert_allclose(out.values[:, 0], [0.0, 0.0, 0.5, 0.5, 1.0])

    def test_partition_must_be_nested(self):
        p = path_1d([0.0, 1.0, 2.0])
        with pytest.raises(GridAlignmentError):
            piecewise_constant_approx(p, TimeGrid(np.array([0.0, 0.7, 2.0])))

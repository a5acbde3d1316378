import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajrss.errors import DegenerateGeometryError
from trajrss.model import (
    NoiseModel,
    PathLossParams,
    RssMatrix,
    Scenario,
    TrajectoryKnowledge,
    displacement,
    distance,
    mean_rss,
    mean_rss_matrix,
    synthesize,
    virtual_bs_position,
)
from trajrss.scenario import hexagon_scenario

coord = st.floats(-2000, 2000, allow_nan=False)
vec3 = st.tuples(coord, coord, coord)


def one_bs_scenario(bs, u1, K=3, gamma=3.3, d0=1.0, sigma=0.0, alpha=-40.0):
    traj = TrajectoryKnowledge.constant([10.0, 0.0, 0.0], 5.0, K)
    return Scenario(np.atleast_2d(bs), traj, PathLossParams(gamma, d0, alpha),
                    NoiseModel.homogeneous(sigma, K, 1), true_u1=u1)


class TestTrajectory:
    def test_first_displacement_is_zero(self):
        traj = TrajectoryKnowledge([[3.0, -1.0, 2.0]], [4.0])
        assert displacement(traj, 0).tolist() == [0.0, 0.0, 0.0]

    def test_hexagon_flight_reaches_450m(self):
        traj = TrajectoryKnowledge.constant([10.0, 0.0], 5.0, 10)
        np.testing.assert_array_equal(displacement(traj, 9), [450.0, 0.0, 0.0])

    def test_symmetric_cancellation(self):
        traj = TrajectoryKnowledge([[1, 2, 3], [-1, -2, -3]], [1, 1])
        np.testing.assert_array_equal(displacement(traj, 2), [0.0, 0.0, 0.0])

    def test_2d_velocities_are_zero_filled(self):
        traj = TrajectoryKnowledge([[10.0, 0.0]], [5.0])
        assert traj.velocities.shape == (1, 3)
        assert traj.velocities[0, 2] == 0.0

    def test_single_point_trajectory(self):
        traj = TrajectoryKnowledge.constant([10.0, 0.0, 0.0], 5.0, 1)
        assert traj.K == 1

    @pytest.mark.parametrize("k", [-1, 3])
    def test_index_out_of_range(self, k):
        traj = TrajectoryKnowledge.constant([1.0, 0.0, 0.0], 1.0, 3)
        with pytest.raises(IndexError):
            displacement(traj, k)

    @pytest.mark.parametrize("vel,dt", [
        ([[1, 0, 0]], [0.0]),
        ([[1, 0, 0]], [-2.0]),
        ([[1, 0, 0], [1, 0, 0]], [1.0]),
    ])
    def test_invalid(self, vel, dt):
        with pytest.raises(ValueError):
            TrajectoryKnowledge(vel, dt)

    @given(st.lists(st.tuples(vec3, st.floats(0.01, 100)), min_size=1, max_size=12))
    def test_prefix_sum_identity(self, steps):
        vel = [v for v, _ in steps]
        dt = [t for _, t in steps]
        traj = TrajectoryKnowledge(vel, dt)
        for k in range(1, traj.K):
            scale = np.abs(traj.displacements).max() + 1.0
            np.testing.assert_allclose(
                displacement(traj, k) - displacement(traj, k - 1),
                np.asarray(vel[k - 1]) * dt[k - 1],
                rtol=0, atol=4 * np.finfo(float).eps * scale,
            )


class TestGeometry:
    def test_virtual_bs_at_first_step(self):
        traj = TrajectoryKnowledge.constant([10.0, 0.0, 0.0], 5.0, 4)
        np.testing.assert_array_equal(virtual_bs_position([500, 0, 20], traj, 0), [500, 0, 20])

    def test_virtual_bs_subtracts_displacement(self):
        traj = TrajectoryKnowledge.constant([10.0, 0.0, 0.0], 5.0, 4)
        np.testing.assert_array_equal(virtual_bs_position([500, 0, 20], traj, 1), [450, 0, 20])

    def test_345_triangle(self):
        traj = TrajectoryKnowledge.constant([1.0, 0.0, 0.0], 1.0, 1)
        assert distance([3, 4, 0], [0, 0, 0], traj, 0) == 5.0

    def test_vertical_offset(self):
        traj = TrajectoryKnowledge.constant([1.0, 0.0, 0.0], 1.0, 1)
        assert distance([0, 0, 100], [0, 0, 20], traj, 0) == 80.0

    def test_hexagon_corner_second_step(self):
        traj = TrajectoryKnowledge.constant([10.0, 0.0, 0.0], 5.0, 10)
        d = distance([0, 0, 100], [1000, 0, 20], traj, 1)
        # oracle: math.hypot(950, 0, 80)
        assert d == pytest.approx(953.3624704172071, rel=1e-12)

    def test_below_d_min_is_degenerate(self):
        traj = TrajectoryKnowledge.constant([1.0, 0.0, 0.0], 1.0, 1)
        with pytest.raises(DegenerateGeometryError):
            distance([0, 0, 0.5], [0, 0, 0], traj, 0)
        with pytest.raises(DegenerateGeometryError):
            distance([0, 0, 5], [0, 0, 0], traj, 0, d_min=10.0)

    @given(vec3, vec3, st.lists(st.tuples(vec3, st.floats(0.1, 10)), min_size=1, max_size=5),
           st.integers(0, 5))
    def test_virtual_bs_equivalence(self, u1, bs, steps, k):
        traj = TrajectoryKnowledge([v for v, _ in steps], [t for _, t in steps])
        k = k % traj.K
        uk = np.asarray(u1) + displacement(traj, k)
        direct = float(np.linalg.norm(uk - np.asarray(bs)))
        virtual = float(np.linalg.norm(np.asarray(u1) - virtual_bs_position(bs, traj, k)))
        assert virtual == pytest.approx(direct, rel=1e-12, abs=1e-9)


class TestMeanRss:
    def test_reference_distance_gives_zero(self):
        sc = one_bs_scenario([0, 0, 0], [0, 0, 5.0], d0=5.0)
        assert mean_rss(sc.true_u1, sc, 0, 0) == pytest.approx(0.0, abs=1e-12)

    def test_one_decade_at_gamma_2(self):
        sc = one_bs_scenario([0, 0, 0], [0, 0, 10.0], gamma=2.0)
        assert mean_rss(sc.true_u1, sc, 0, 0) == pytest.approx(-20.0, abs=1e-12)

    def test_hexagon_geometry_value(self):
        sc = one_bs_scenario([1000, 0, 20], [0, 0, 100], gamma=3.3)
        # oracle: 10 * 3.3 * log10(1 / math.hypot(950, 0, 80))
        assert mean_rss(sc.true_u1, sc, 1, 0) == pytest.approx(-98.31551570648018, rel=1e-12)

    @given(st.floats(2.0, 5.0), st.floats(2.0, 1e4))
    def test_doubling_distance(self, gamma, d):
        sc = one_bs_scenario([0, 0, 0], [0, 0, d], gamma=gamma)
        far = one_bs_scenario([0, 0, 0], [0, 0, 2 * d], gamma=gamma)
        diff = mean_rss(far.true_u1, far, 0, 0) - mean_rss(sc.true_u1, sc, 0, 0)
        assert diff == pytest.approx(-10 * gamma * math.log10(2), abs=1e-9)

    def test_strictly_decreasing(self):
        sc = one_bs_scenario([0, 0, 0], [0, 0, 10.0])
        values = [mean_rss([0, 0, z], sc, 0, 0) for z in (2.0, 5.0, 50.0, 500.0)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_bs_index_checked(self):
        sc = one_bs_scenario([0, 0, 0], [0, 0, 10.0])
        with pytest.raises(IndexError):
            mean_rss(sc.true_u1, sc, 0, 1)


class TestSynthesize:
    def test_noiseless_reproduces_mean_model(self):
        sc = hexagon_scenario(sigma=0.0)
        rss = synthesize(sc, 123)
        expected = sc.path_loss.alpha + mean_rss_matrix(sc.true_u1, sc)
        np.testing.assert_array_equal(rss.values, expected)

    def test_same_seed_same_matrix(self):
        sc = hexagon_scenario()
        np.testing.assert_array_equal(synthesize(sc, 7).values, synthesize(sc, 7).values)
        assert not np.array_equal(synthesize(sc, 7).values, synthesize(sc, 8).values)

    def test_shape(self):
        assert synthesize(hexagon_scenario(), 0).shape == (10, 6)

    def test_heterogeneous_sigma_scales_noise(self):
        sc = hexagon_scenario()
        sigma = np.tile(np.arange(1.0, 7.0), (10, 1))
        noisy = synthesize(sc.with_sigma(sigma), 5).values
        unit = synthesize(sc.with_sigma(1.0), 5).values
        mean = sc.path_loss.alpha + mean_rss_matrix(sc.true_u1, sc)
        np.testing.assert_allclose(noisy - mean, sigma * (unit - mean), rtol=1e-9, atol=1e-9)

    def test_noise_mean_law_of_large_numbers(self):
        # 10**5 independent seeds; the shadowing in cell (0, 0) averages to ~0
        sc = one_bs_scenario([1000, 0, 20], [0, 0, 100], K=2, sigma=6.0)
        mean = sc.path_loss.alpha + mean_rss_matrix(sc.true_u1, sc)[0, 0]
        n = 100_000
        w = np.array([synthesize(sc, s).values[0, 0] - mean for s in range(n)])
        assert abs(w.mean()) <= 3 * 6.0 / math.sqrt(n)
        assert w.std() == pytest.approx(6.0, rel=0.01)


class TestValidation:
    def test_gamma_range(self):
        with pytest.raises(ValueError):
            PathLossParams(1.5)
        PathLossParams(1.5, check_gamma=False)

    def test_negative_sigma(self):
        with pytest.raises(ValueError):
            NoiseModel(np.full((2, 2), -1.0))

    def test_sigma_shape_mismatch(self):
        with pytest.raises(ValueError):
            Scenario([[0, 0, 0]], TrajectoryKnowledge.constant([1, 0, 0], 1, 3), PathLossParams(3),
                     NoiseModel.homogeneous(1.0, 2, 1), true_u1=[0, 0, 100])

    def test_bs_on_trajectory_rejected(self):
        with pytest.raises(DegenerateGeometryError):
            Scenario([[10, 0, 100]], TrajectoryKnowledge.constant([10, 0, 0], 1, 3), PathLossParams(3),
                     NoiseModel.homogeneous(1.0, 3, 1), true_u1=[0, 0, 100])

    def test_immutable(self):
        sc = hexagon_scenario()
        with pytest.raises(ValueError):
            sc.base_stations[0, 0] = 1.0
        rss = RssMatrix(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            rss.values[0, 0] = 1.0

    def test_mixed_zero_sigma_cannot_weight(self):
        with pytest.raises(ValueError):
            NoiseModel(np.array([[0.0, 1.0]])).weights()

"""
Tests for gravity torque, the regressor and base-parameter reduction
"""
import math
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from conftest import planar_chain, random_chain
from errors import DimensionError
from gravity_model import (
    GravityParams,
    base_map_from_regressor,
    base_reduction,
    gravity_regressor,
    gravity_regressor_batch,
    gravity_torque,
    potential_energy,
    sample_poses,
)
from kinematics import LinkInertia, RobotModel


def numeric_gradient(model, q, params, h=1e-6):
    grad = np.empty(model.n)
    for k in range(model.n):
        step = np.zeros(model.n)
        step[k] = h
        grad[k] = (potential_energy(model, q + step, params)
                   - potential_energy(model, q - step, params)) / (2 * h)
    return grad


class TestPotentialEnergy:
    def test_zero_params(self, mtm, rng):
        """Test that no mass means no potential"""
        assert potential_energy(mtm, rng.uniform(-1, 1, 7), np.zeros(28)) == 0.0

    def test_raised_pendulum(self, one_link):
        """Test a pendulum raised one metre"""
        params = GravityParams.from_model(one_link)
        assert potential_energy(one_link, [math.pi / 2], params) == pytest.approx(9.81, abs=1e-12)

    def test_linear_in_params(self, rng):
        """Doubling the parameters doubles the potential"""
        model = random_chain(3, rng)
        q, params = rng.uniform(-np.pi, np.pi, 3), rng.uniform(-1.0, 1.0, 12)
        assert potential_energy(model, q, 2.0 * params) == pytest.approx(
            2.0 * potential_energy(model, q, params), rel=1e-12, abs=1e-15
        )


class TestGravityTorque:
    """Torque is the gradient of the potential"""

    @pytest.mark.parametrize("n", [1, 3, 7])
    def test_matches_potential_gradient(self, n, rng):
        """Test torque against the numerical gradient of the potential"""
        worst = 0.0
        for _ in range(70):
            model = random_chain(n, rng)
            params = rng.uniform(-1.0, 1.0, 4 * n)
            q = rng.uniform(-np.pi, np.pi, n)
            error = np.max(np.abs(gravity_torque(model, q, params) - numeric_gradient(model, q, params)))
            worst = max(worst, error)
        assert worst < 1e-6

    def test_pendulum_holding_torque(self, one_link):
        """Test the horizontal pendulum holding torque"""
        params = GravityParams.from_model(one_link)
        assert gravity_torque(one_link, [0.0], params)[0] == pytest.approx(9.81, abs=1e-12)
        assert gravity_torque(one_link, [math.pi / 2], params)[0] == pytest.approx(0.0, abs=1e-12)

    def test_zero_gravity_gives_zero_torque(self, mtm, rng):
        """Test zero gravity"""
        model = mtm.with_gravity((0.0, 0.0, 0.0))
        tau = gravity_torque(model, rng.uniform(-1, 1, 7), rng.uniform(-1, 1, 28))
        np.testing.assert_array_equal(tau, np.zeros(7))

    def test_vertical_first_axis_carries_no_load(self, mtm, rng):
        """A vertical first axis carries no gravity load"""
        # joint 1 of the MTM rotates about the gravity direction
        for q in rng.uniform(-np.pi, np.pi, (10, 7)):
            assert abs(gravity_torque(mtm, q, GravityParams.from_model(mtm))[0]) < 1e-12

    def test_negated_gravity_negates_torque(self, mtm, rng):
        """Test that flipping gravity flips the torque exactly"""
        flipped = mtm.with_gravity(-mtm.gravity)
        for _ in range(20):
            q, params = rng.uniform(-np.pi, np.pi, 7), rng.uniform(-1.0, 1.0, 28)
            np.testing.assert_array_equal(gravity_torque(flipped, q, params), -gravity_torque(mtm, q, params))

    def test_wrong_param_length(self, one_link):
        """Test a parameter vector of the wrong length"""
        with pytest.raises(DimensionError):
            gravity_torque(one_link, [0.0], [1.0, 0.0, 0.0])

    def test_params_length_multiple_of_four(self):
        """Parameter blocks come in fours"""
        with pytest.raises(DimensionError):
            GravityParams(np.zeros(5))


class TestRegressor:
    """Y(q) @ params == gravity_torque(q, params)"""

    def test_faithful_on_random_samples(self, rng):
        """Test the regressor on random poses and parameters"""
        for n in (1, 3, 7):
            for _ in range(34):
                model = random_chain(n, rng)
                params = rng.uniform(-1.0, 1.0, 4 * n)
                q = rng.uniform(-np.pi, np.pi, n)
                tau = gravity_torque(model, q, params)
                error = np.max(np.abs(gravity_regressor(model, q) @ params - tau))
                assert error < 1e-10 * (1.0 + np.max(np.abs(tau)))

    def test_pendulum_regressor(self, one_link):
        """Test the pendulum regressor row"""
        q = 0.7
        expected = [9.81 * math.cos(q), 9.81 * math.cos(q), -9.81 * math.sin(q), 0.0]
        np.testing.assert_allclose(gravity_regressor(one_link, [q])[0], expected, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(a=st.floats(-10, 10), b=st.floats(-10, 10), seed=st.integers(0, 2**16))
    def test_linear_in_params(self, a, b, seed):
        """Test linearity of the regressor map"""
        rng = np.random.default_rng(seed)
        model = random_chain(3, rng)
        q = rng.uniform(-np.pi, np.pi, 3)
        p1, p2 = rng.uniform(-1, 1, 12), rng.uniform(-1, 1, 12)
        combined = gravity_torque(model, q, a * p1 + b * p2)
        separate = a * gravity_torque(model, q, p1) + b * gravity_torque(model, q, p2)
        np.testing.assert_allclose(combined, separate, atol=1e-9)

    def test_independent_of_inertial_values(self, mtm, rng):
        """The regressor depends on geometry only"""
        massless = RobotModel("massless", mtm.dh, [LinkInertia(0.0)] * 7, mtm.gravity)
        Q = rng.uniform(-np.pi, np.pi, (5, 7))
        np.testing.assert_array_equal(gravity_regressor_batch(mtm, Q), gravity_regressor_batch(massless, Q))


class TestBaseReduction:
    """Identifiable parameter combinations"""

    def test_mtm_rank_is_stable_across_seeds(self, mtm):
        """Test that the MTM rank does not depend on the pose seed"""
        ranks = {base_reduction(mtm, n_poses=500, seed=seed).rank for seed in range(5)}
        assert ranks == {12}

    def test_pendulum_rank(self, one_link):
        """Test the pendulum base rank"""
        base_map = base_reduction(one_link, n_poses=50, seed=1)
        assert base_map.rank == 2
        assert np.isfinite(base_map.condition_number)

    def test_three_link_planar_rank(self, three_link):
        """Three-link planar chain rank"""
        # each planar link adds one cos/sin pair of its absolute angle
        assert base_reduction(three_link, n_poses=100).rank == 6

    def test_base_regressor_reproduces_torque(self, mtm, rng):
        """Test that base columns reproduce the full torque"""
        base_map = base_reduction(mtm, n_poses=300, seed=2)
        for _ in range(10):
            params = rng.uniform(-1, 1, 28)
            q = rng.uniform(-np.pi, np.pi, 7)
            Y = gravity_regressor(mtm, q)
            base_torque = Y[:, base_map.independent_columns] @ base_map.to_base(params)
            np.testing.assert_allclose(base_torque, Y @ params, atol=1e-9)

    def test_lifted_base_params_give_same_torque(self, mtm, rng):
        """Test lifting base parameters back to the full vector"""
        base_map = base_reduction(mtm, n_poses=300, seed=2)
        params = GravityParams(rng.uniform(-1, 1, 28))
        lifted = base_map.from_base(base_map.to_base(params))
        for q in rng.uniform(-np.pi, np.pi, (10, 7)):
            np.testing.assert_allclose(gravity_torque(mtm, q, lifted), gravity_torque(mtm, q, params), atol=1e-9)

    def test_column_names(self, one_link):
        """Base column names follow the link blocks"""
        base_map = base_reduction(one_link, n_poses=50)
        names = base_map.column_names(GravityParams.zeros(1).names())
        assert len(names) == 2
        assert set(names) <= {"m1", "mcx1", "mcy1", "mcz1"}

    def test_zero_gravity_has_rank_zero(self, mtm):
        """Test the rank without gravity"""
        base_map = base_reduction(mtm.with_gravity((0, 0, 0)), n_poses=50)
        assert base_map.rank == 0
        assert math.isinf(base_map.condition_number)
        assert base_map.to_base(np.ones(28)).size == 0

    def test_rejects_no_poses(self, one_link):
        """Test an empty pose set"""
        with pytest.raises(ValueError):
            base_reduction(one_link, n_poses=0)

    def test_identity_regressor_is_full_rank(self):
        """Test an identity regressor"""
        base_map = base_map_from_regressor(np.eye(8))
        assert base_map.rank == 8
        np.testing.assert_array_equal(base_map.independent_columns, np.arange(8))


class TestSamplePoses:
    def test_respects_joint_limits(self, rng):
        """Test that samples stay inside the joint limits"""
        model = planar_chain([1.0, 1.0], [1.0, 1.0])
        limited = RobotModel(model.name, model.dh, model.links, model.gravity,
                             joint_limits=[(-0.5, 0.5), (0.0, 1.0)])
        Q = sample_poses(limited, 500, rng)
        assert Q.shape == (500, 2)
        assert np.all(Q[:, 0] >= -0.5) and np.all(Q[:, 0] <= 0.5)
        assert np.all(Q[:, 1] >= 0.0) and np.all(Q[:, 1] <= 1.0)

    def test_default_range(self, one_link, rng):
        """Unlimited joints sample within +/- pi"""
        Q = sample_poses(one_link, 200, rng)
        assert np.all(np.abs(Q) <= np.pi)

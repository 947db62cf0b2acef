"""
Tests for the point-mass plant: dynamics terms, integration and logging
"""
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.linalg

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from conftest import planar_chain
from controller import GravityPIDController, Gains
from errors import DimensionError, SimulationDivergence, SingularMassMatrixError
from gravity_model import GravityParams, gravity_torque, sample_poses
from kinematics import JointState
from plant_sim import (
    PlantState,
    PointMassPlant,
    SimConfig,
    TrajectoryLog,
    coriolis_torque,
    forward_dynamics,
    mass_matrix,
    simulate,
    step,
    total_energy,
)


def zero_controller(n):
    return lambda t, measured, dt: np.zeros(n)


def feedforward(model, params):
    return GravityPIDController(model, params, Gains.zeros(model.n))


class TestMassMatrix:
    def test_massless_chain_is_armature(self, mtm):
        """Test that a massless chain leaves only the armature"""
        massless = mtm.with_params(np.zeros(28))
        np.testing.assert_allclose(mass_matrix(massless, np.ones(7), 1e-3), 1e-3 * np.eye(7), atol=1e-18)

    def test_pendulum_inertia(self, one_link):
        """Test the pendulum inertia"""
        np.testing.assert_allclose(mass_matrix(one_link, [0.4], armature=0.0), [[1.0]], atol=1e-15)

    def test_symmetric_positive_definite(self, mtm, rng):
        """M(q) is symmetric positive definite"""
        for q in sample_poses(mtm, 1000, rng):
            M = mass_matrix(mtm, q, armature=1e-4)
            assert np.max(np.abs(M - M.T)) < 1e-12
            scipy.linalg.cho_factor(M)

    def test_per_joint_armature(self, three_link):
        """Test per-joint armature"""
        M0 = mass_matrix(three_link, [0.1, 0.2, 0.3], armature=0.0)
        M1 = mass_matrix(three_link, [0.1, 0.2, 0.3], armature=[0.1, 0.2, 0.3])
        np.testing.assert_allclose(M1 - M0, np.diag([0.1, 0.2, 0.3]), atol=1e-15)


class TestCoriolis:
    def test_zero_velocity(self, mtm, rng):
        """Test the velocity term at rest"""
        np.testing.assert_array_equal(coriolis_torque(mtm, rng.uniform(-1, 1, 7), np.zeros(7)), np.zeros(7))

    def test_pendulum_has_none(self, one_link):
        """A single joint has no velocity coupling"""
        assert abs(coriolis_torque(one_link, [0.3], [2.0])[0]) < 1e-8

    def test_two_link_analytic(self):
        """Test the two-link velocity term against the textbook formula"""
        # point masses at the tips: c1 = -m2 l1 l2 sin(q2) (2 qd1 qd2 + qd2^2), c2 = m2 l1 l2 sin(q2) qd1^2
        model = planar_chain([0.5, 0.4], [1.0, 2.0])
        q, qd = np.array([0.3, 0.8]), np.array([1.1, -0.7])
        h = 2.0 * 0.5 * 0.4 * np.sin(q[1])
        expected = [-h * (2 * qd[0] * qd[1] + qd[1] ** 2), h * qd[0] ** 2]
        np.testing.assert_allclose(coriolis_torque(model, q, qd), expected, atol=1e-7)

    def test_closed_form_matches_christoffel(self, mtm, rng):
        """Test the closed-form terms against the Christoffel reference"""
        params = GravityParams.from_model(mtm)
        plant = PointMassPlant(mtm, params, SimConfig(armature=1e-3))
        for _ in range(20):
            q, qd = rng.uniform(-np.pi, np.pi, 7), rng.uniform(-2.0, 2.0, 7)
            M, c, G = plant.terms(q, qd)
            np.testing.assert_allclose(M, mass_matrix(mtm, q, armature=1e-3), atol=1e-12)
            np.testing.assert_allclose(c, coriolis_torque(mtm, q, qd, armature=1e-3), atol=1e-6)
            np.testing.assert_array_equal(G, gravity_torque(mtm, q, params))

    def test_closed_form_two_link(self):
        """Closed-form velocity term of the two-link arm"""
        model = planar_chain([0.5, 0.4], [1.0, 2.0])
        q, qd = np.array([0.3, 0.8]), np.array([1.1, -0.7])
        h = 2.0 * 0.5 * 0.4 * np.sin(q[1])
        expected = [-h * (2 * qd[0] * qd[1] + qd[1] ** 2), h * qd[0] ** 2]
        _, c, _ = PointMassPlant(model, GravityParams.from_model(model), SimConfig()).terms(q, qd)
        np.testing.assert_allclose(c, expected, atol=1e-12)


class TestForwardDynamics:
    def test_compensated_equilibrium(self, mtm, rng):
        """Test that exact compensation gives zero acceleration"""
        params = GravityParams.from_model(mtm)
        for q in sample_poses(mtm, 20, rng):
            qdd = forward_dynamics(mtm, q, np.zeros(7), gravity_torque(mtm, q, params), params, SimConfig())
            np.testing.assert_allclose(qdd, np.zeros(7), atol=1e-12)

    def test_free_pendulum_acceleration(self, one_link):
        """Test free pendulum acceleration"""
        qdd = forward_dynamics(one_link, [0.0], [0.0], [0.0], GravityParams.from_model(one_link),
                               SimConfig(armature=0.0))
        assert qdd[0] == pytest.approx(-9.81, abs=1e-12)

    def test_massless_chain_stays_put(self, mtm):
        """A massless chain stays put"""
        massless = mtm.with_params(np.zeros(28))
        qdd = forward_dynamics(massless, np.zeros(7), np.zeros(7), np.zeros(7), np.zeros(28),
                               SimConfig(armature=1e-3))
        np.testing.assert_array_equal(qdd, np.zeros(7))

    def test_singular_mass_matrix_names_pose(self, mtm):
        """Test that a singular mass matrix reports the pose"""
        massless = mtm.with_params(np.zeros(28))
        with pytest.raises(SingularMassMatrixError, match="q="):
            forward_dynamics(massless, np.zeros(7), np.zeros(7), np.zeros(7), np.zeros(28),
                             SimConfig(armature=0.0))

    def test_locked_joints_do_not_accelerate(self, three_link):
        """Test locked joints"""
        params = GravityParams.from_model(three_link)
        qdd = forward_dynamics(three_link, [0.0, 0.0, 0.0], np.zeros(3), np.zeros(3), params,
                               SimConfig(locked=(True, False, True)))
        assert qdd[0] == 0.0 and qdd[2] == 0.0
        assert qdd[1] < 0.0

    def test_dimension_mismatch(self, one_link):
        """Test vectors of the wrong length"""
        with pytest.raises(DimensionError):
            forward_dynamics(one_link, [0.0, 0.0], [0.0], [0.0], [1.0, 0, 0, 0], SimConfig())


class TestStep:
    def test_rest_state_only_advances_time(self, mtm):
        """Test that a rest state only advances time"""
        massless = mtm.with_params(np.zeros(28))
        state = PlantState(0.5, JointState.at_rest(np.full(7, 0.2)))
        after = step(state, np.zeros(7), massless, np.zeros(28), SimConfig(dt=1e-3))
        np.testing.assert_array_equal(after.joint.q, state.joint.q)
        np.testing.assert_array_equal(after.joint.qdot, state.joint.qdot)
        assert after.t == pytest.approx(0.501)

    def test_non_finite_torque(self, one_link):
        """Non-finite torque is refused"""
        state = PlantState(0.0, JointState.at_rest([0.0]))
        with pytest.raises(SimulationDivergence):
            step(state, [np.inf], one_link, [1.0, 0, 0, 0], SimConfig())

    @pytest.mark.slow
    def test_rk4_is_fourth_order(self, one_link):
        """Test the RK4 convergence order"""
        params = GravityParams.from_model(one_link)

        def final_q(dt):
            cfg = SimConfig(dt=dt, duration=0.5, integrator="rk4")
            return simulate(one_link, params, zero_controller(1), cfg, [0.0]).q[-1, 0]

        reference = final_q(0.002)
        ratio = abs(final_q(0.02) - reference) / abs(final_q(0.01) - reference)
        assert 12.0 < ratio < 20.0


class TestConfigAndLog:
    def test_sim_config_validation(self):
        """Test sim config validation"""
        with pytest.raises(ValueError):
            SimConfig(dt=0.0)
        with pytest.raises(ValueError):
            SimConfig(dt=2.0, duration=1.0)
        with pytest.raises(ValueError):
            SimConfig(integrator="euler")
        with pytest.raises(ValueError):
            SimConfig(armature=-1.0)

    def test_log_requires_uniform_time(self):
        """Logs need uniform time steps"""
        with pytest.raises(ValueError):
            TrajectoryLog.from_signal([0.0, 0.1, 0.3], [0.0, 0.0, 0.0])
        with pytest.raises(ValueError):
            TrajectoryLog.from_signal([0.0, 0.0, 0.1], [0.0, 0.0, 0.0])

    def test_negative_time_rejected(self):
        """Test negative time"""
        with pytest.raises(ValueError):
            PlantState(-1.0, JointState.at_rest([0.0]))


class TestSimulate:
    def test_exact_feedforward_holds_pose(self, mtm, rng):
        """Test that exact feedforward holds a pose"""
        params = GravityParams.from_model(mtm)
        cfg = SimConfig(duration=1.0)
        for q0 in sample_poses(mtm, 5, rng):
            log = simulate(mtm, params, feedforward(mtm, params), cfg, q0)
            assert np.max(np.abs(log.q - q0)) < 1e-6

    @pytest.mark.slow
    def test_exact_feedforward_holds_twenty_poses(self, mtm, rng):
        """Exact feedforward holds twenty random poses"""
        params = GravityParams.from_model(mtm)
        cfg = SimConfig(duration=1.0)
        for q0 in sample_poses(mtm, 20, rng):
            log = simulate(mtm, params, feedforward(mtm, params), cfg, q0)
            assert np.max(np.abs(log.q - q0)) < 1e-6

    def test_uncompensated_arm_falls(self, three_link):
        """Test that an uncompensated arm falls"""
        log = simulate(three_link, GravityParams.from_model(three_link), zero_controller(3),
                       SimConfig(duration=0.1), np.zeros(3))
        assert np.linalg.norm(log.q[-1] - log.q[0]) > 0

    def test_log_layout(self, three_link):
        """Test the log column layout"""
        log = simulate(three_link, GravityParams.from_model(three_link), zero_controller(3),
                       SimConfig(dt=0.01, duration=0.2), np.zeros(3))
        assert len(log) == 21
        assert log.t[0] == 0.0
        assert log.t[-1] == pytest.approx(0.2)
        np.testing.assert_allclose(np.diff(log.t), 0.01)
        assert log.tau.shape == (21, 3)

    def test_deterministic(self, three_link):
        """Test that two runs are identical"""
        params = GravityParams.from_model(three_link)
        cfg = SimConfig(dt=0.005, duration=0.3)
        a = simulate(three_link, params, zero_controller(3), cfg, [0.1, 0.2, 0.3])
        b = simulate(three_link, params, zero_controller(3), cfg, [0.1, 0.2, 0.3])
        np.testing.assert_array_equal(a.q, b.q)
        np.testing.assert_array_equal(a.qdot, b.qdot)

    def test_actuation_delay_shifts_commands(self, one_link):
        """Test that actuation delay shifts the commands"""
        cfg = SimConfig(dt=0.01, duration=0.1, actuation_delay=2)
        log = simulate(one_link, np.zeros(4), lambda t, m, dt: np.array([t]), cfg, [0.0])
        expected = np.maximum(log.t - 0.02, 0.0)
        np.testing.assert_allclose(log.tau[:, 0], expected, atol=1e-12)

    def test_locked_joints_hold(self, three_link):
        """Locked joints hold their pose"""
        cfg = SimConfig(dt=0.001, duration=0.2, locked=(True, False, False))
        log = simulate(three_link, GravityParams.from_model(three_link), zero_controller(3), cfg,
                       [0.2, 0.0, 0.0], qdot0=[1.0, 0.0, 0.0])
        np.testing.assert_array_equal(log.q[:, 0], 0.2)

    def test_divergence_reports_time(self, one_link):
        """Test that divergence reports its time"""
        cfg = SimConfig(dt=0.01, duration=1.0)
        with pytest.raises(SimulationDivergence, match="t="):
            simulate(one_link, [1.0, 0, 0, 0], lambda t, m, dt: np.array([1e12]), cfg, [0.0])

    def test_energy_is_conserved(self, three_link):
        """Free 3-link chain under RK4 keeps its energy, within the runtime budget"""
        params = GravityParams.from_model(three_link)
        cfg = SimConfig(dt=1e-4, duration=2.0, integrator="rk4", viscous_friction=0.0)
        q0, qd0 = np.array([-1.2, 0.3, 0.2]), np.array([0.5, -0.3, 0.2])
        # compile the kernels outside the timed run
        PointMassPlant(three_link, params, cfg).acceleration(q0, qd0, np.zeros(3))
        started = time.perf_counter()
        log = simulate(three_link, params, zero_controller(3), cfg, q0, qd0)
        assert time.perf_counter() - started < 10.0
        e0 = total_energy(three_link, params, JointState(q0, qd0), cfg.armature)
        energies = [total_energy(three_link, params, JointState(log.q[k], log.qdot[k]), cfg.armature)
                    for k in range(0, len(log), 2000)]
        energies.append(total_energy(three_link, params, JointState(log.q[-1], log.qdot[-1]), cfg.armature))
        assert max(abs(e - e0) for e in energies) / abs(e0) < 1e-6

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from overfly.dynamics import (
    AttitudeCommand, DisturbanceModel, EavParams, EavState, NonFiniteStateError,
    StickLimits, hover_thrust, map_stick, rotation_from_euler, sample_disturbance,
    step, velocity, wrap_angle,
)

angles = st.floats(min_value=-4 * math.pi, max_value=4 * math.pi)


def iterate_recurrence(x0, x_prev, params, cmd, n, dist=None):
    """Direct evaluation of the position recurrence, independent of step()."""
    dist = np.zeros(3) if dist is None else np.asarray(dist, float)
    rot = rotation_from_euler(cmd.roll_rad, cmd.pitch_rad, cmd.yaw_rad)
    pos = np.asarray(x0, float).copy()
    prev = np.asarray(x_prev, float).copy()
    out = [pos.copy()]
    for _ in range(n):
        force = (rot @ np.array([0.0, 0.0, cmd.thrust_n])
                 - np.array([0.0, 0.0, params.mass_kg * params.gravity])
                 - (params.drag_coeff / params.dt_s) * (pos - prev)
                 + dist)
        new = 2 * pos - prev + (params.dt_s ** 2 / params.mass_kg) * force
        prev, pos = pos, new
        out.append(pos.copy())
    return out


class TestRotation:
    def test_identity(self):
        assert np.array_equal(rotation_from_euler(0, 0, 0), np.eye(3))

    def test_pure_yaw_quarter_turn(self):
        r = rotation_from_euler(0, 0, math.pi / 2)
        np.testing.assert_allclose(r @ [1, 0, 0], [0, 1, 0], atol=1e-15)

    @given(angles, angles, angles)
    def test_orthonormal_det_one(self, roll, pitch, yaw):
        r = rotation_from_euler(roll, pitch, yaw)
        assert np.linalg.norm(r.T @ r - np.eye(3)) < 1e-12
        assert abs(np.linalg.det(r) - 1.0) < 1e-12


class TestStep:
    def test_hover_is_exact_equilibrium(self):
        params = EavParams(mass_kg=0.25)
        cmd = AttitudeCommand(thrust_n=hover_thrust(params))
        state = EavState.at_rest((1.0, -2.0, 50.0))
        for _ in range(100):
            state = step(state, params, cmd)
        assert np.array_equal(state.pos, np.array([1.0, -2.0, 50.0]))

    def test_free_fall_matches_triangular_sum(self):
        # T=0, no drag: z_k = -g dt^2 k(k+1)/2; at k=3 with g=9.81, dt=1/30
        params = EavParams(mass_kg=0.25, drag_coeff=0.0)
        cmd = AttitudeCommand(thrust_n=0.0)
        state = EavState.at_rest((0, 0, 0))
        for _ in range(3):
            state = step(state, params, cmd)
        assert state.pos[2] == pytest.approx(-0.0654, abs=1e-12)
        expected = iterate_recurrence((0, 0, 0), (0, 0, 0), params, cmd, 3)[-1]
        np.testing.assert_array_equal(state.pos, expected)

    def test_drag_scales_velocity_each_tick(self):
        params = EavParams(mass_kg=0.5, drag_coeff=0.2)
        cmd = AttitudeCommand(thrust_n=hover_thrust(params))
        v0 = 3.0
        state = EavState(pos=np.array([v0 * params.dt_s, 0, 10.0]),
                         pos_prev=np.array([0.0, 0, 10.0]))
        factor = 1.0 - params.drag_coeff * params.dt_s / params.mass_kg
        v = v0
        for _ in range(50):
            state = step(state, params, cmd)
            v *= factor
            assert velocity(state, params)[0] == pytest.approx(v, rel=1e-12)

    def test_matches_direct_iteration_with_tilt(self):
        params = EavParams(mass_kg=0.3, drag_coeff=0.05)
        cmd = AttitudeCommand(roll_rad=0.1, pitch_rad=-0.2, yaw_rad=0.7, thrust_n=3.1)
        state = EavState.at_rest((0, 0, 20.0))
        for _ in range(40):
            state = step(state, params, cmd)
        expected = iterate_recurrence((0, 0, 20.0), (0, 0, 20.0), params, cmd, 40)[-1]
        np.testing.assert_array_equal(state.pos, expected)

    def test_step_is_deterministic(self):
        params = EavParams()
        cmd = AttitudeCommand(roll_rad=0.05, thrust_n=2.0)
        s1 = step(EavState.at_rest((1, 2, 3)), params, cmd, np.array([0.1, 0, 0]))
        s2 = step(EavState.at_rest((1, 2, 3)), params, cmd, np.array([0.1, 0, 0]))
        assert np.array_equal(s1.pos, s2.pos)
        assert s1.tick == s2.tick == 1

    def test_nonfinite_aborts(self):
        params = EavParams(mass_kg=1e-300)
        cmd = AttitudeCommand(thrust_n=1e300)
        with pytest.raises(NonFiniteStateError):
            step(EavState.at_rest((0, 0, 0)), params, cmd)

    def test_ballistic_closed_form(self):
        params = EavParams(mass_kg=0.25, drag_coeff=0.0)
        cmd = AttitudeCommand(pitch_rad=0.3, thrust_n=1.7)
        x0 = np.array([1.0, 2.0, 100.0])
        dx0 = np.array([0.02, -0.01, 0.0])
        state = EavState(pos=x0.copy(), pos_prev=x0 - dx0)
        rot = rotation_from_euler(0, 0.3, 0)
        accel = (rot @ [0, 0, cmd.thrust_n]
                 - np.array([0, 0, params.mass_kg * params.gravity])) / params.mass_kg
        for k in range(1, 200):
            state = step(state, params, cmd)
            closed = x0 + k * dx0 + params.dt_s ** 2 * accel * (k * (k + 1) / 2)
            np.testing.assert_allclose(state.pos, closed, rtol=1e-9, atol=1e-12)


class TestHoverThrust:
    def test_reference_mass(self):
        assert hover_thrust(EavParams(mass_kg=0.25, gravity=9.81)) == pytest.approx(2.4525)

    def test_unit(self):
        assert hover_thrust(EavParams(mass_kg=1.0, gravity=1.0)) == 1.0


class TestMapStick:
    limits = StickLimits(attitude_max_rad=0.35, thrust_min_n=0.0, thrust_max_n=4.905,
                         hover_n=2.4525, thrust_headroom=1.0, yaw_rate_max=1.0)

    def test_zero_stick_hovers(self):
        cmd = map_stick((0, 0, 0, 0), self.limits, prev_yaw=0.4, dt_s=1 / 30)
        assert cmd.roll_rad == 0 and cmd.pitch_rad == 0
        assert cmd.thrust_n == self.limits.hover_n
        assert cmd.yaw_rad == 0.4

    def test_full_roll(self):
        cmd = map_stick((1, 0, 0, 0), self.limits, 0.0, 1 / 30)
        assert cmd.roll_rad == pytest.approx(0.35)

    def test_pitch_sign(self):
        cmd = map_stick((0, 1, 0, 0), self.limits, 0.0, 1 / 30)
        assert cmd.pitch_rad == pytest.approx(-0.35)

    def test_yaw_rate_accumulates(self):
        yaw = 0.0
        for _ in range(30):
            yaw = map_stick((0, 0, 0, 1), self.limits, yaw, 1 / 30).yaw_rad
        assert yaw == pytest.approx(1.0, abs=1e-12)

    def test_thrust_range(self):
        up = map_stick((0, 0, 1, 0), self.limits, 0.0, 1 / 30)
        down = map_stick((0, 0, -1, 0), self.limits, 0.0, 1 / 30)
        assert up.thrust_n == pytest.approx(2 * self.limits.hover_n)
        assert down.thrust_n == 0.0

    @pytest.mark.parametrize("stick", [(1.5, 0, 0, 0), (0, 0, 0, -1.01)])
    def test_out_of_range_rejected(self, stick):
        with pytest.raises(ValueError, match="out of range"):
            map_stick(stick, self.limits, 0.0, 1 / 30)

    @given(st.floats(min_value=-50, max_value=50))
    def test_wrap_angle_range(self, x):
        w = wrap_angle(x)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.sin(w), math.sin(x), abs_tol=1e-9)


class TestDisturbance:
    def test_none_is_zero(self):
        model = DisturbanceModel(kind="none")
        s = model.sampler()
        assert all(np.array_equal(s.sample(k), np.zeros(3)) for k in range(10))

    def test_constant(self):
        model = DisturbanceModel(kind="constant", force=(0.1, -0.2, 0.0))
        assert np.array_equal(model.sampler().sample(0), [0.1, -0.2, 0.0])

    def test_same_seed_identical_sequences(self):
        model = DisturbanceModel(kind="gauss-markov", std_n=0.5, corr_time_s=2.0, seed=99)
        a = [model.sampler().sample(0)]
        s1, s2 = model.sampler(), model.sampler()
        seq1 = [s1.sample(k) for k in range(500)]
        seq2 = [s2.sample(k) for k in range(500)]
        assert all(np.array_equal(u, v) for u, v in zip(seq1, seq2))

    def test_pure_function_matches_sampler(self):
        model = DisturbanceModel(kind="gauss-markov", std_n=1.0, corr_time_s=0.5, seed=3)
        s = model.sampler()
        seq = [s.sample(k) for k in range(20)]
        assert np.array_equal(sample_disturbance(model, 19), seq[19])
        assert np.array_equal(sample_disturbance(model, 0), seq[0])

    def test_horizontal_only_by_default(self):
        model = DisturbanceModel(kind="gauss-markov", std_n=1.0, corr_time_s=0.5, seed=3)
        s = model.sampler()
        assert all(s.sample(k)[2] == 0.0 for k in range(100))

    def test_out_of_order_sampling_rejected(self):
        s = DisturbanceModel(kind="none").sampler()
        s.sample(0)
        with pytest.raises(ValueError):
            s.sample(2)

    def test_ar1_long_run_std(self):
        model = DisturbanceModel(kind="gauss-markov", std_n=0.8, corr_time_s=1.0,
                                 dt_s=1 / 30, seed=12345)
        s = model.sampler()
        xs = np.empty(10 ** 6)
        for k in range(10 ** 6):
            xs[k] = s.sample(k)[0]
        assert abs(xs.std() - 0.8) < 0.05 * 0.8

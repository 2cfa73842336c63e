"""Translational dynamics of the emulated vehicle.

The vehicle is a point mass driven by total thrust along its body z-axis,
gravity, linear drag, and an optional disturbance force, integrated by the
position recurrence

    X_k = 2 X_{k-1} - X_{k-2}
          + (dt^2 / m) * (R T e3 - m g e3 - (k_d / dt)(X_{k-1} - X_{k-2}) + xi)

State is the pair of most recent positions; velocity is always derived as
(pos - pos_prev) / dt, never integrated separately, so replays are bit-exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "EavParams", "EavState", "AttitudeCommand", "StickLimits", "DisturbanceModel",
    "DisturbanceSampler", "rotation_from_euler", "step", "hover_thrust",
    "map_stick", "sample_disturbance", "wrap_angle", "velocity",
]

DISTURBANCE_KINDS = ("none", "constant", "gauss-markov")


class NonFiniteStateError(ArithmeticError):
    """Integration produced a non-finite position; the session must abort."""


@dataclass(frozen=True)
class EavParams:
    mass_kg: float = 0.25
    gravity: float = 9.81
    drag_coeff: float = 0.0  # kg/s, linear velocity drag
    dt_s: float = 1.0 / 30.0

    def __post_init__(self):
        if not self.mass_kg > 0:
            raise ValueError(f"mass_kg must be > 0, got {self.mass_kg}")
        if not self.dt_s > 0:
            raise ValueError(f"dt_s must be > 0, got {self.dt_s}")
        if self.drag_coeff < 0:
            raise ValueError(f"drag_coeff must be >= 0, got {self.drag_coeff}")
        if not self.gravity > 0:
            raise ValueError(f"gravity must be > 0, got {self.gravity}")


@dataclass(frozen=True)
class EavState:
    pos: np.ndarray       # X_k, meters
    pos_prev: np.ndarray  # X_{k-1}, meters
    tick: int = 0

    @staticmethod
    def at_rest(pos, tick: int = 0) -> "EavState":
        p = np.asarray(pos, dtype=np.float64)
        return EavState(pos=p.copy(), pos_prev=p.copy(), tick=tick)


def velocity(state: EavState, params: EavParams) -> np.ndarray:
    return (state.pos - state.pos_prev) / params.dt_s


@dataclass(frozen=True)
class AttitudeCommand:
    roll_rad: float = 0.0
    pitch_rad: float = 0.0
    yaw_rad: float = 0.0
    thrust_n: float = 0.0


@dataclass(frozen=True)
class StickLimits:
    attitude_max_rad: float = 0.35
    thrust_min_n: float = 0.0
    thrust_max_n: float = 4.905   # 2*m*g for the 0.25 kg default
    hover_n: float = 2.4525       # m*g
    thrust_headroom: float = 1.0
    yaw_rate_max: float = 1.0     # rad/s

    @staticmethod
    def for_params(params: EavParams, attitude_max_rad: float = 0.35,
                   thrust_headroom: float = 1.0, yaw_rate_max: float = 1.0) -> "StickLimits":
        hover = hover_thrust(params)
        return StickLimits(
            attitude_max_rad=attitude_max_rad,
            thrust_min_n=0.0,
            thrust_max_n=2.0 * hover,
            hover_n=hover,
            thrust_headroom=thrust_headroom,
            yaw_rate_max=yaw_rate_max,
        )


def rotation_from_euler(roll_rad: float, pitch_rad: float, yaw_rad: float) -> np.ndarray:
    """Body-to-world rotation, ZYX convention: R = Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    cr, sr = math.cos(roll_rad), math.sin(roll_rad)
    cp, sp = math.cos(pitch_rad), math.sin(pitch_rad)
    cy, sy = math.cos(yaw_rad), math.sin(yaw_rad)
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp,     cp * sr,               cp * cr],
    ], dtype=np.float64)


def hover_thrust(params: EavParams) -> float:
    """Thrust balancing gravity at level attitude: m * g."""
    return params.mass_kg * params.gravity


def step(state: EavState, params: EavParams, cmd: AttitudeCommand,
         dist: np.ndarray | None = None) -> EavState:
    """Advance one tick of the position recurrence."""
    xi = np.zeros(3) if dist is None else np.asarray(dist, dtype=np.float64)
    rot = rotation_from_euler(cmd.roll_rad, cmd.pitch_rad, cmd.yaw_rad)
    with np.errstate(over="ignore", invalid="ignore"):
        thrust_world = rot @ np.array([0.0, 0.0, cmd.thrust_n])
        gravity_force = np.array([0.0, 0.0, params.mass_kg * params.gravity])
        delta = state.pos - state.pos_prev
        force = thrust_world - gravity_force - (params.drag_coeff / params.dt_s) * delta + xi
        new_pos = 2.0 * state.pos - state.pos_prev + (params.dt_s ** 2 / params.mass_kg) * force
    if not np.all(np.isfinite(new_pos)):
        raise NonFiniteStateError(f"non-finite position at tick {state.tick + 1}: {new_pos}")
    return EavState(pos=new_pos, pos_prev=state.pos, tick=state.tick + 1)


def wrap_angle(x: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.fmod(x, 2.0 * math.pi)
    if w > math.pi:
        w -= 2.0 * math.pi
    elif w <= -math.pi:
        w += 2.0 * math.pi
    return w


def map_stick(stick, limits: StickLimits, prev_yaw: float, dt_s: float) -> AttitudeCommand:
    """Map a normalized [-1, 1]^4 stick (roll, pitch, thrust, yaw-rate) to a command.

    Stick forward (y = +1) pitches the nose down, driving motion along the
    body +x axis; thrust is hover-centered with configurable headroom; the
    yaw-rate axis integrates into an absolute yaw, wrapped to (-pi, pi].
    """
    stick = tuple(float(c) for c in stick)
    if len(stick) != 4:
        raise ValueError(f"stick must have 4 components, got {len(stick)}")
    for name, c in zip("xyzr", stick):
        if not -1.0 <= c <= 1.0:
            raise ValueError(f"stick component '{name}' out of range [-1, 1]: {c}")
    x, y, z, r = stick
    thrust = limits.hover_n * (1.0 + z * limits.thrust_headroom)
    thrust = min(max(thrust, limits.thrust_min_n), limits.thrust_max_n)
    return AttitudeCommand(
        roll_rad=x * limits.attitude_max_rad,
        pitch_rad=-y * limits.attitude_max_rad,
        yaw_rad=wrap_angle(prev_yaw + r * limits.yaw_rate_max * dt_s),
        thrust_n=thrust,
    )


@dataclass(frozen=True)
class DisturbanceModel:
    """Per-tick disturbance force. Identical (kind, params, seed) yield
    identical sample sequences.

    gauss-markov is the AR(1) process xi_k = a xi_{k-1} + s sqrt(1-a^2) eta_k
    with a = exp(-dt/tau), stationary std s, applied to the horizontal
    components only unless horizontal_only is cleared.
    """
    kind: str = "none"
    force: tuple[float, float, float] = (0.0, 0.0, 0.0)  # constant kind
    std_n: float = 0.0          # gauss-markov stationary std-dev, newtons
    corr_time_s: float = 1.0    # gauss-markov correlation time
    dt_s: float = 1.0 / 30.0
    seed: int = 0
    horizontal_only: bool = True

    def __post_init__(self):
        if self.kind not in DISTURBANCE_KINDS:
            raise ValueError(f"disturbance kind must be one of {DISTURBANCE_KINDS}, got {self.kind!r}")
        if self.kind == "gauss-markov" and not self.corr_time_s > 0:
            raise ValueError("corr_time_s must be > 0 for gauss-markov disturbances")

    def sampler(self) -> "DisturbanceSampler":
        return DisturbanceSampler(self)


_CHUNK = 4096


class DisturbanceSampler:
    """Sequential, seeded sampler; sample(k) must be called for k = 0, 1, 2, ..."""

    def __init__(self, model: DisturbanceModel):
        self.model = model
        self._next_tick = 0
        self._last = np.zeros(3)
        self._value = np.zeros(3)
        if model.kind == "constant":
            self._value = np.asarray(model.force, dtype=np.float64)
        elif model.kind == "gauss-markov":
            self._rng = np.random.default_rng(model.seed)
            self._alpha = math.exp(-model.dt_s / model.corr_time_s)
            self._drive = model.std_n * math.sqrt(1.0 - self._alpha ** 2)
            self._ncomp = 2 if model.horizontal_only else 3
            self._state = np.zeros(self._ncomp)
            self._buf = np.empty((0, self._ncomp))
            self._buf_pos = 0

    def sample(self, tick: int) -> np.ndarray:
        if tick == self._next_tick - 1:
            return self._last.copy()
        if tick != self._next_tick:
            raise ValueError(f"sampler expects tick {self._next_tick}, got {tick}")
        self._next_tick += 1
        if self.model.kind == "gauss-markov":
            if self._buf_pos >= len(self._buf):
                self._buf = self._rng.standard_normal((_CHUNK, self._ncomp))
                self._buf_pos = 0
            eta = self._buf[self._buf_pos]
            self._buf_pos += 1
            self._state = self._alpha * self._state + self._drive * eta
            out = np.zeros(3)
            out[: self._ncomp] = self._state
            self._last = out
        else:
            self._last = self._value.copy()
        return self._last.copy()


def sample_disturbance(model: DisturbanceModel, tick: int) -> np.ndarray:
    """Disturbance force at a single tick.

    Pure function of (model, tick); for the autoregressive kind this replays
    the sequence from tick 0, so it costs O(tick). Sessions use a
    DisturbanceSampler instead.
    """
    if tick < 0:
        raise ValueError(f"tick must be >= 0, got {tick}")
    sampler = model.sampler()
    out = sampler.sample(0)
    for k in range(1, tick + 1):
        out = sampler.sample(k)
    return out

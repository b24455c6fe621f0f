"""Quadcopter rigid-body simulation and the corrective PID controller.

State convention (12 components): ground-frame position ``p_g``, ground-frame
Euler angles ``theta_g`` (roll, pitch, yaw), body-frame linear velocity
``v_b`` and body-frame angular velocity ``omega_b``.  Kinematics are written
in the ground frame, the Newton-Euler force/moment balance in the body frame
with gyroscopic coupling and isotropic linear drag.

The corrective controller stabilizes height and the three rotations; the
horizontal position is deliberately uncontrolled.  A recovery simulation
integrates the closed loop from an arbitrary initial state and labels it safe
(1) when the hover settle test passes, unsafe (0) on ground contact,
divergence, or an exhausted horizon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

def _as3(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class SystemState:
    """12-component quadcopter state."""

    p_g: np.ndarray       # m
    theta_g: np.ndarray   # rad (roll, pitch, yaw)
    v_b: np.ndarray       # m/s, body frame
    omega_b: np.ndarray   # rad/s, body frame

    def __post_init__(self):
        object.__setattr__(self, "p_g", _as3(self.p_g, "p_g"))
        object.__setattr__(self, "theta_g", _as3(self.theta_g, "theta_g"))
        object.__setattr__(self, "v_b", _as3(self.v_b, "v_b"))
        object.__setattr__(self, "omega_b", _as3(self.omega_b, "omega_b"))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.p_g, self.theta_g, self.v_b, self.omega_b])

    @classmethod
    def from_array(cls, arr) -> "SystemState":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != (12,):
            raise ValueError(f"state array must have 12 components, got {arr.shape}")
        return cls(arr[0:3], arr[3:6], arr[6:9], arr[9:12])

    @classmethod
    def hover(cls, z: float = 2.0) -> "SystemState":
        return cls(np.array([0.0, 0.0, z]), np.zeros(3), np.zeros(3), np.zeros(3))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.as_array())))

    def __eq__(self, other):
        if not isinstance(other, SystemState):
            return NotImplemented
        return bool(np.array_equal(self.as_array(), other.as_array()))


@dataclass(frozen=True)
class PlantParams:
    """Physical constants of the plant; only mass and the lift ceiling differ
    between the nominal and the real vehicle."""

    mass: float = 1.0                   # kg
    max_lift_force: float = 200.0       # N
    inertia: tuple[float, float, float] = (4.856e-3, 4.856e-3, 8.801e-3)
    arm_length: float = 0.225
    thrust_coeff: float = 2.980e-6
    drag_coeff: float = 1.140e-7
    linear_drag: float = 0.25
    gravity: float = 9.81

    def __post_init__(self):
        if not (self.mass > 0 and self.max_lift_force > 0):
            raise ValueError("mass and max_lift_force must be positive")
        if any(i <= 0 for i in self.inertia):
            raise ValueError("inertia components must be positive")

    @classmethod
    def nominal(cls, cfg: dict) -> "PlantParams":
        return cls(
            mass=cfg["plant.mass"],
            max_lift_force=cfg["plant.max_lift_force"],
            inertia=(cfg["plant.inertia_xx"], cfg["plant.inertia_yy"], cfg["plant.inertia_zz"]),
            arm_length=cfg["plant.arm_length"],
            thrust_coeff=cfg["plant.thrust_coeff"],
            drag_coeff=cfg["plant.drag_coeff"],
            linear_drag=cfg["plant.linear_drag"],
            gravity=cfg["plant.gravity"],
        )

    @classmethod
    def real(cls, cfg: dict) -> "PlantParams":
        nominal = cls.nominal(cfg)
        return cls(
            mass=cfg["plant.real_mass"],
            max_lift_force=cfg["plant.real_max_lift_force"],
            inertia=nominal.inertia,
            arm_length=nominal.arm_length,
            thrust_coeff=nominal.thrust_coeff,
            drag_coeff=nominal.drag_coeff,
            linear_drag=nominal.linear_drag,
            gravity=nominal.gravity,
        )

    def pack(self) -> np.ndarray:
        return np.array([
            self.mass, self.max_lift_force,
            self.inertia[0], self.inertia[1], self.inertia[2],
            self.arm_length, self.thrust_coeff, self.drag_coeff,
            self.linear_drag, self.gravity,
        ])

    def fingerprint_dict(self) -> dict:
        return {
            "mass": self.mass, "max_lift_force": self.max_lift_force,
            "inertia": list(self.inertia), "arm_length": self.arm_length,
            "thrust_coeff": self.thrust_coeff, "drag_coeff": self.drag_coeff,
            "linear_drag": self.linear_drag, "gravity": self.gravity,
        }


@dataclass(frozen=True)
class PidGains:
    """(K_P, K_I, K_D) triples for height and the three rotations."""

    height: tuple[float, float, float] = (1.5, 0.0, 2.5)
    roll: tuple[float, float, float] = (6.0, 0.0, 1.75)
    pitch: tuple[float, float, float] = (6.0, 0.0, 1.75)
    yaw: tuple[float, float, float] = (6.0, 0.0, 1.75)

    def __post_init__(self):
        for name in ("height", "roll", "pitch", "yaw"):
            triple = getattr(self, name)
            if len(triple) != 3 or any((not math.isfinite(g)) or g < 0 for g in triple):
                raise ValueError(f"{name} gains must be three finite non-negative numbers")

    @classmethod
    def from_config(cls, cfg: dict) -> "PidGains":
        att = (cfg["pid.attitude_p"], cfg["pid.attitude_i"], cfg["pid.attitude_d"])
        return cls(height=(cfg["pid.height_p"], cfg["pid.height_i"], cfg["pid.height_d"]),
                   roll=att, pitch=att, yaw=att)

    def pack(self) -> np.ndarray:
        return np.array(list(self.height) + list(self.roll) + list(self.pitch) + list(self.yaw))


@dataclass(frozen=True)
class RecoveryConfig:
    """Integration step, horizon, and the quantitative hover settle test."""

    dt: float = 0.01
    horizon: float = 10.0
    hover_target_z: float = 2.0
    tol_pos_z: float = 0.1
    tol_vel: float = 0.1
    tol_rate: float = 0.1
    tol_tilt: float = 0.05
    divergence_norm: float = 1000.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.horizon <= self.dt:
            raise ValueError("horizon must exceed dt")
        if min(self.tol_pos_z, self.tol_vel, self.tol_rate, self.tol_tilt) <= 0:
            raise ValueError("settle tolerances must be positive")

    @classmethod
    def from_config(cls, cfg: dict) -> "RecoveryConfig":
        return cls(dt=cfg["recovery.dt"], horizon=cfg["recovery.horizon"],
                   hover_target_z=cfg["recovery.hover_target_z"],
                   tol_pos_z=cfg["recovery.tol_pos_z"], tol_vel=cfg["recovery.tol_vel"],
                   tol_rate=cfg["recovery.tol_rate"], tol_tilt=cfg["recovery.tol_tilt"],
                   divergence_norm=cfg["recovery.divergence_norm"])

    def pack(self) -> np.ndarray:
        return np.array([self.dt, self.horizon, self.hover_target_z, self.tol_pos_z,
                         self.tol_vel, self.tol_rate, self.tol_tilt, self.divergence_norm])


# ---------------------------------------------------------------------------
# compiled kernels
# ---------------------------------------------------------------------------
# packed layouts:
#   pvec: [m, f_max, Ixx, Iyy, Izz, l, k, b, A, g]
#   gvec: [hP,hI,hD, rP,rI,rD, pP,pI,pD, yP,yI,yD]
#   cvec: [dt, horizon, hover_z, tol_z, tol_v, tol_w, tol_tilt, div_norm]

_COS_PITCH_EPS = 1e-6     # Euler kinematics singularity guard
_TILT_DIVISOR_MIN = 0.1   # thrust divisor guard near inverted attitudes


@njit(cache=True)
def _deriv(x, thrust, tau_r, tau_p, tau_y, pvec):
    m = pvec[0]
    ixx, iyy, izz = pvec[2], pvec[3], pvec[4]
    a_lin = pvec[8]
    g = pvec[9]

    phi, theta, psi = x[3], x[4], x[5]
    vx, vy, vz = x[6], x[7], x[8]
    wx, wy, wz = x[9], x[10], x[11]

    sph, cph = math.sin(phi), math.cos(phi)
    sth, cth = math.sin(theta), math.cos(theta)
    sps, cps = math.sin(psi), math.cos(psi)

    out = np.empty(12)

    # ground-frame position kinematics: p_dot = R(theta) v_b
    out[0] = (cps * cth) * vx + (cps * sth * sph - sps * cph) * vy + (cps * sth * cph + sps * sph) * vz
    out[1] = (sps * cth) * vx + (sps * sth * sph + cps * cph) * vy + (sps * sth * cph - cps * sph) * vz
    out[2] = (-sth) * vx + (cth * sph) * vy + (cth * cph) * vz

    # Euler angle kinematics: theta_dot = W(theta) omega_b
    cth_k = cth
    if abs(cth_k) < _COS_PITCH_EPS:
        cth_k = _COS_PITCH_EPS if cth_k >= 0.0 else -_COS_PITCH_EPS
    tth = sth / cth_k
    out[3] = wx + sph * tth * wy + cph * tth * wz
    out[4] = cph * wy - sph * wz
    out[5] = (sph / cth_k) * wy + (cph / cth_k) * wz

    # body-frame translational dynamics: gravity, thrust, linear drag
    gx = g * sth
    gy = -g * cth * sph
    gz = -g * cth * cph
    out[6] = (wz * vy - wy * vz) + gx - (a_lin / m) * vx
    out[7] = (wx * vz - wz * vx) + gy - (a_lin / m) * vy
    out[8] = (wy * vx - wx * vy) + gz + thrust / m - (a_lin / m) * vz

    # body-frame rotational dynamics with gyroscopic coupling
    out[9] = (tau_r - (izz - iyy) * wy * wz) / ixx
    out[10] = (tau_p - (ixx - izz) * wx * wz) / iyy
    out[11] = (tau_y - (iyy - ixx) * wx * wy) / izz
    return out


@njit(cache=True)
def _rk4_step(x, thrust, tau_r, tau_p, tau_y, pvec, dt):
    k1 = _deriv(x, thrust, tau_r, tau_p, tau_y, pvec)
    k2 = _deriv(x + 0.5 * dt * k1, thrust, tau_r, tau_p, tau_y, pvec)
    k3 = _deriv(x + 0.5 * dt * k2, thrust, tau_r, tau_p, tau_y, pvec)
    k4 = _deriv(x + dt * k3, thrust, tau_r, tau_p, tau_y, pvec)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@njit(cache=True)
def _wrench_from_motors(u, pvec):
    f_max = pvec[1]
    l, k, b = pvec[5], pvec[6], pvec[7]
    u1s, u2s, u3s, u4s = u[0] * u[0], u[1] * u[1], u[2] * u[2], u[3] * u[3]
    thrust = k * (u1s + u2s + u3s + u4s)
    if thrust > f_max:
        thrust = f_max
    tau_r = l * k * (u4s - u2s)
    tau_p = l * k * (u3s - u1s)
    tau_y = b * (u1s - u2s + u3s - u4s)
    return thrust, tau_r, tau_p, tau_y


@njit(cache=True)
def _motors_from_wrench(thrust, tau_r, tau_p, tau_y, pvec):
    l, k, b = pvec[5], pvec[6], pvec[7]
    base = thrust / (4.0 * k)
    d_roll = tau_r / (2.0 * k * l)
    d_pitch = tau_p / (2.0 * k * l)
    d_yaw = tau_y / (4.0 * b)
    u = np.empty(4)
    sq = base - d_pitch + d_yaw
    u[0] = math.sqrt(sq) if sq > 0.0 else 0.0
    sq = base - d_roll - d_yaw
    u[1] = math.sqrt(sq) if sq > 0.0 else 0.0
    sq = base + d_pitch + d_yaw
    u[2] = math.sqrt(sq) if sq > 0.0 else 0.0
    sq = base + d_roll - d_yaw
    u[3] = math.sqrt(sq) if sq > 0.0 else 0.0
    return u


@njit(cache=True)
def _pid_wrench(x, gvec, pvec, integ, dt, hover_z):
    m = pvec[0]
    f_max = pvec[1]
    ixx, iyy, izz = pvec[2], pvec[3], pvec[4]
    g = pvec[9]

    phi, theta = x[3], x[4]
    sph, cph = math.sin(phi), math.cos(phi)
    sth, cth = math.sin(theta), math.cos(theta)
    vx, vy, vz = x[6], x[7], x[8]
    wx, wy, wz = x[9], x[10], x[11]

    # height loop: error in ground-frame altitude
    e_z = hover_z - x[2]
    zdot = (-sth) * vx + (cth * sph) * vy + (cth * cph) * vz
    int_z = integ[0] + e_z * dt
    pid_z = gvec[0] * e_z + gvec[1] * int_z + gvec[2] * (-zdot)
    divisor = cph * cth
    if divisor < _TILT_DIVISOR_MIN:
        divisor = _TILT_DIVISOR_MIN
    thrust = m * (g + pid_z) / divisor
    if thrust < 0.0:
        thrust = 0.0
    if thrust > f_max:
        thrust = f_max

    # attitude loops: drive all three rotations to zero
    cth_k = cth
    if abs(cth_k) < _COS_PITCH_EPS:
        cth_k = _COS_PITCH_EPS if cth_k >= 0.0 else -_COS_PITCH_EPS
    tth = sth / cth_k
    phi_dot = wx + sph * tth * wy + cph * tth * wz
    theta_dot = cph * wy - sph * wz
    psi_dot = (sph / cth_k) * wy + (cph / cth_k) * wz

    e_r, e_p, e_y = -x[3], -x[4], -x[5]
    int_r = integ[1] + e_r * dt
    int_p = integ[2] + e_p * dt
    int_y = integ[3] + e_y * dt
    tau_r = ixx * (gvec[3] * e_r + gvec[4] * int_r + gvec[5] * (-phi_dot))
    tau_p = iyy * (gvec[6] * e_p + gvec[7] * int_p + gvec[8] * (-theta_dot))
    tau_y = izz * (gvec[9] * e_y + gvec[10] * int_y + gvec[11] * (-psi_dot))

    integ_new = np.empty(4)
    integ_new[0], integ_new[1], integ_new[2], integ_new[3] = int_z, int_r, int_p, int_y
    return thrust, tau_r, tau_p, tau_y, integ_new


@njit(cache=True)
def _settled(x, cvec):
    hover_z, tol_z, tol_v, tol_w, tol_tilt = cvec[2], cvec[3], cvec[4], cvec[5], cvec[6]
    if abs(x[2] - hover_z) >= tol_z:
        return False
    if math.sqrt(x[6] ** 2 + x[7] ** 2 + x[8] ** 2) >= tol_v:
        return False
    if math.sqrt(x[9] ** 2 + x[10] ** 2 + x[11] ** 2) >= tol_w:
        return False
    if abs(x[3]) >= tol_tilt or abs(x[4]) >= tol_tilt:
        return False
    return True


@njit(cache=True)
def _rollout(x0, pvec, gvec, cvec):
    dt = cvec[0]
    n_max = int(round(cvec[1] / dt))
    div_norm = cvec[7]
    hover_z = cvec[2]

    traj = np.empty((n_max + 1, 12))
    integ = np.zeros(4)
    x = x0.copy()
    traj[0] = x
    count = 1
    label = 0
    for step in range(n_max + 1):
        if x[2] <= 0.0:
            return 0, traj, count
        if math.sqrt(np.sum(x * x)) > div_norm:
            return 0, traj, count
        if _settled(x, cvec):
            return 1, traj, count
        if step == n_max:
            break
        thrust, tau_r, tau_p, tau_y, integ = _pid_wrench(x, gvec, pvec, integ, dt, hover_z)
        u = _motors_from_wrench(thrust, tau_r, tau_p, tau_y, pvec)
        thrust, tau_r, tau_p, tau_y = _wrench_from_motors(u, pvec)
        x = _rk4_step(x, thrust, tau_r, tau_p, tau_y, pvec, dt)
        traj[count] = x
        count += 1
    return label, traj, count


@njit(cache=True)
def _rollout_label(x0, pvec, gvec, cvec):
    """Label-only variant that skips trajectory storage."""
    dt = cvec[0]
    n_max = int(round(cvec[1] / dt))
    div_norm = cvec[7]
    hover_z = cvec[2]

    integ = np.zeros(4)
    x = x0.copy()
    for step in range(n_max + 1):
        if x[2] <= 0.0:
            return 0
        if math.sqrt(np.sum(x * x)) > div_norm:
            return 0
        if _settled(x, cvec):
            return 1
        if step == n_max:
            break
        thrust, tau_r, tau_p, tau_y, integ = _pid_wrench(x, gvec, pvec, integ, dt, hover_z)
        u = _motors_from_wrench(thrust, tau_r, tau_p, tau_y, pvec)
        thrust, tau_r, tau_p, tau_y = _wrench_from_motors(u, pvec)
        x = _rk4_step(x, thrust, tau_r, tau_p, tau_y, pvec, dt)
    return 0


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def step_dynamics(state: SystemState, motor_cmd, params: PlantParams, dt: float) -> SystemState:
    """Advance the plant one RK4 step under fixed motor speeds.

    Total thrust is clamped to the lift ceiling.  Raises on non-positive
    ``dt``, negative motor commands, or a non-finite input state.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    cmd = np.asarray(motor_cmd, dtype=np.float64)
    if cmd.shape != (4,):
        raise ValueError("motor_cmd must have 4 components")
    if np.any(cmd < 0) or not np.all(np.isfinite(cmd)):
        raise ValueError("motor commands must be finite and non-negative")
    x = state.as_array()
    if not np.all(np.isfinite(x)):
        raise ValueError("numerical divergence")
    pvec = params.pack()
    thrust, tau_r, tau_p, tau_y = _wrench_from_motors(cmd, pvec)
    return SystemState.from_array(_rk4_step(x, thrust, tau_r, tau_p, tau_y, pvec, dt))


def corrective_control(state: SystemState, gains: PidGains, params: PlantParams,
                       integrator_state=None, dt: float = 0.01,
                       hover_target_z: float = 2.0):
    """Evaluate the corrective PID and invert the motor mixing.

    Returns ``(motor_cmd, integrator_state)``.  The height loop commands a
    total thrust of m*(g + PID_z)/ (cos roll * cos pitch) with the divisor
    clamped below at 0.1; attitude loops command torques scaled by the
    respective inertias.
    """
    x = state.as_array()
    if not np.all(np.isfinite(x)):
        raise ValueError("state must be finite")
    integ = np.zeros(4) if integrator_state is None else np.asarray(integrator_state, dtype=np.float64)
    if integ.shape != (4,):
        raise ValueError("integrator_state must have 4 components")
    pvec = params.pack()
    thrust, tau_r, tau_p, tau_y, integ_new = _pid_wrench(x, gains.pack(), pvec, integ, dt, hover_target_z)
    cmd = _motors_from_wrench(thrust, tau_r, tau_p, tau_y, pvec)
    return cmd, integ_new


def pid_wrench(state: SystemState, gains: PidGains, params: PlantParams,
               integrator_state=None, dt: float = 0.01, hover_target_z: float = 2.0):
    """Thrust and torques commanded by the PID, before motor mixing."""
    x = state.as_array()
    integ = np.zeros(4) if integrator_state is None else np.asarray(integrator_state, dtype=np.float64)
    thrust, tau_r, tau_p, tau_y, integ_new = _pid_wrench(
        x, gains.pack(), params.pack(), integ, dt, hover_target_z)
    return thrust, np.array([tau_r, tau_p, tau_y]), integ_new


def hover_trim(params: PlantParams) -> np.ndarray:
    """Motor speeds whose thrust exactly balances gravity, zero torques."""
    speed = math.sqrt(params.mass * params.gravity / (4.0 * params.thrust_coeff))
    return np.full(4, speed)


def simulate_recovery(x0: SystemState, params: PlantParams, gains: PidGains,
                      cfg: RecoveryConfig, source: str = "sim"):
    """Run the closed loop from ``x0`` until crash, divergence, settle, or
    horizon exhaustion; returns a labeled :class:`~saferegion.data.RecoveryRecord`.
    """
    from .data import RecoveryRecord

    x = x0.as_array()
    if not np.all(np.isfinite(x)):
        raise ValueError("numerical divergence")
    label, traj, count = _rollout(x, params.pack(), gains.pack(), cfg.pack())
    return RecoveryRecord(x0=x0, label=int(label), trajectory=traj[:count].copy(), source=source)


def recovery_label(x0: SystemState, params: PlantParams, gains: PidGains,
                   cfg: RecoveryConfig) -> int:
    """Safety label only; avoids storing the trajectory."""
    x = x0.as_array()
    if not np.all(np.isfinite(x)):
        raise ValueError("numerical divergence")
    return int(_rollout_label(x, params.pack(), gains.pack(), cfg.pack()))


def paper_ranges(cfg: dict) -> np.ndarray:
    """Sampling box for initial states as a (12, 2) array of (low, high)."""
    lo_hi = np.empty((12, 2))
    lo_hi[0] = lo_hi[1] = (cfg["sample.pos_xy"], cfg["sample.pos_xy"])
    lo_hi[2] = (cfg["sample.pos_z"], cfg["sample.pos_z"])
    lo_hi[3] = lo_hi[4] = lo_hi[5] = (cfg["sample.angle_min"], cfg["sample.angle_max"])
    lo_hi[6] = lo_hi[7] = lo_hi[8] = (cfg["sample.vel_min"], cfg["sample.vel_max"])
    lo_hi[9] = lo_hi[10] = lo_hi[11] = (cfg["sample.rate_min"], cfg["sample.rate_max"])
    return lo_hi


def sample_initial_states(n: int, ranges, rng_seed: int) -> list[SystemState]:
    """Draw ``n`` states uniformly and independently per component."""
    if n <= 0:
        raise ValueError("n must be positive")
    box = np.asarray(ranges, dtype=np.float64)
    if box.shape != (12, 2):
        raise ValueError("ranges must be a (12, 2) array of (low, high)")
    if np.any(box[:, 1] < box[:, 0]):
        raise ValueError("inverted sampling range")
    rng = np.random.default_rng(rng_seed)
    draws = rng.uniform(box[:, 0], box[:, 1], size=(n, 12))
    return [SystemState.from_array(row) for row in draws]


def mechanical_energy(state: SystemState, params: PlantParams) -> float:
    """Kinetic plus potential energy; conserved with zero control and drag."""
    v2 = float(np.dot(state.v_b, state.v_b))
    w = state.omega_b
    i = params.inertia
    rot = i[0] * w[0] ** 2 + i[1] * w[1] ** 2 + i[2] * w[2] ** 2
    return 0.5 * params.mass * v2 + 0.5 * rot + params.mass * params.gravity * state.p_g[2]

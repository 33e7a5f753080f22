"""Rigid-body kinematics and dynamics.

State is carried as (center, rotation matrix, translational velocity, spatial
angular velocity).  Time integration works in the body frame, where the
inertia tensor is constant: with Omega = Q^T omega the angular momentum
balance reads

    J0 Omega' = (J0 Omega) x Omega + Q^T torque,

and the rotation update uses the exponential map on a body-frame rotation
increment integrated jointly with the rest of the state (fourth order), so
orthogonality never drifts beyond rounding; a polar projection mops that up.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateMatrix, InvalidSpec, NonFiniteInput

_EYE = np.eye(3)


def skew(omega: np.ndarray) -> np.ndarray:
    """Skew matrix P with P @ x = omega x x."""
    wx, wy, wz = np.asarray(omega, dtype=float)
    return np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])


def rotation_exp(theta: np.ndarray) -> np.ndarray:
    """Rodrigues formula: the rotation exp(skew(theta))."""
    theta = np.asarray(theta, dtype=float)
    angle = float(np.linalg.norm(theta))
    s = skew(theta)
    if angle < 1e-12:
        # series keeps full accuracy through the small-angle regime
        return _EYE + s + 0.5 * (s @ s)
    a = np.sin(angle) / angle
    b = (1.0 - np.cos(angle)) / angle**2
    return _EYE + a * s + b * (s @ s)


def renormalize_rotation(q: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (polar factor); idempotent on rotations."""
    q = np.asarray(q, dtype=float)
    det = float(np.linalg.det(q))
    if det <= 1e-8:
        raise DegenerateMatrix(f"det {det:.3e} too small for polar projection")
    u, _, vt = np.linalg.svd(q)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] *= -1.0
        r = u @ vt
    return r


@dataclass(frozen=True)
class RigidState:
    """Body configuration and velocities at one instant."""

    t: float
    q: np.ndarray      # center of mass
    Q: np.ndarray      # rotation, columns = body axes in space
    a: np.ndarray      # translational velocity
    omega: np.ndarray  # spatial angular velocity

    def __post_init__(self):
        for name in ("q", "Q", "a", "omega"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    @classmethod
    def resting(cls, q0, Q0=None, a0=None, omega0=None, t: float = 0.0) -> "RigidState":
        return cls(
            t=t,
            q=np.asarray(q0, dtype=float),
            Q=_EYE.copy() if Q0 is None else np.asarray(Q0, dtype=float),
            a=np.zeros(3) if a0 is None else np.asarray(a0, dtype=float),
            omega=np.zeros(3) if omega0 is None else np.asarray(omega0, dtype=float),
        )

    def check(self, tol: float = 1e-12) -> None:
        if np.linalg.norm(self.Q.T @ self.Q - _EYE) > tol * 10:
            raise InvalidSpec("rotation matrix is not orthonormal")


def rigid_velocity(state: RigidState, x: np.ndarray) -> np.ndarray:
    """Eulerian rigid field a + omega x (x - q); valid for any x."""
    x = np.asarray(x, dtype=float)
    return state.a + np.cross(state.omega, x - state.q)


@dataclass(frozen=True)
class BodySpec:
    """Ball-shaped rigid body: center, radius, solid density."""

    q0: np.ndarray
    r: float
    rho_s: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "q0", np.asarray(self.q0, dtype=float))
        if self.r <= 0:
            raise InvalidSpec("ball radius must be positive")
        if self.rho_s <= 0:
            raise InvalidSpec("solid density must be positive")


@dataclass(frozen=True)
class InertiaData:
    m: float
    J0: np.ndarray       # body-frame inertia tensor
    I_body: np.ndarray   # Q^T J Q at t = 0 (equals J0 for Q(0) = I)

    def __post_init__(self):
        object.__setattr__(self, "J0", np.asarray(self.J0, dtype=float))
        object.__setattr__(self, "I_body", np.asarray(self.I_body, dtype=float))


def inertia_tensor(body: BodySpec) -> InertiaData:
    """Mass and inertia of the ball: m = rho * 4/3 pi r^3, J0 = (2/5) m r^2 I."""
    volume = 4.0 / 3.0 * np.pi * body.r**3
    m = body.rho_s * volume
    j = 0.4 * m * body.r**2 * _EYE
    return InertiaData(m=m, J0=j, I_body=j.copy())


def _dexpinv_rhs(theta: np.ndarray, omega_body: np.ndarray) -> np.ndarray:
    # truncated inverse right-trivialized tangent; O(|theta|^4) suffices for RK4
    c1 = np.cross(theta, omega_body)
    return omega_body + 0.5 * c1 + np.cross(theta, c1) / 12.0


def step_rigid_body(
    state: RigidState,
    inertia: InertiaData,
    force: np.ndarray,
    torque: np.ndarray,
    dt: float,
) -> RigidState:
    """Advance (q, a, Q, omega) one RK4 step under constant force and torque."""
    force = np.asarray(force, dtype=float)
    torque = np.asarray(torque, dtype=float)
    if not (
        np.isfinite(dt)
        and np.all(np.isfinite(force))
        and np.all(np.isfinite(torque))
        and np.all(np.isfinite(state.q))
        and np.all(np.isfinite(state.Q))
        and np.all(np.isfinite(state.a))
        and np.all(np.isfinite(state.omega))
    ):
        raise NonFiniteInput("rigid step received a non-finite input")
    if dt <= 0:
        raise InvalidSpec("dt must be positive")

    j0 = inertia.J0
    j0_inv = np.linalg.inv(j0)
    q0_rot = state.Q

    def rhs(y):
        q, a, om_body, theta = y
        rot = q0_rot @ rotation_exp(theta)
        dom = j0_inv @ (np.cross(j0 @ om_body, om_body) + rot.T @ torque)
        return (a, force / inertia.m, dom, _dexpinv_rhs(theta, om_body))

    y0 = (state.q, state.a, state.Q.T @ state.omega, np.zeros(3))
    k1 = rhs(y0)
    k2 = rhs(tuple(y + 0.5 * dt * k for y, k in zip(y0, k1)))
    k3 = rhs(tuple(y + 0.5 * dt * k for y, k in zip(y0, k2)))
    k4 = rhs(tuple(y + dt * k for y, k in zip(y0, k3)))
    q, a, om_body, theta = (
        y + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        for y, a1, a2, a3, a4 in zip(y0, k1, k2, k3, k4)
    )

    rot = renormalize_rotation(q0_rot @ rotation_exp(theta))
    return RigidState(t=state.t + dt, q=q, Q=rot, a=a, omega=rot @ om_body)


@dataclass(frozen=True)
class RigidTrajectory:
    """Rigid states on a uniform time grid, interpolable to substep times.

    Position and velocities interpolate linearly; the rotation interpolates
    geodesically (relative-rotation log/exp) so intermediate matrices remain
    orthogonal.
    """

    times: np.ndarray
    states: tuple[RigidState, ...]

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        if len(self.times) != len(self.states):
            raise InvalidSpec("times and states length mismatch")

    @classmethod
    def from_states(cls, states) -> "RigidTrajectory":
        states = tuple(states)
        return cls(np.array([s.t for s in states]), states)

    def state(self, t: float) -> RigidState:
        ts = self.times
        if t <= ts[0]:
            return replace(self.states[0], t=t)
        if t >= ts[-1]:
            return replace(self.states[-1], t=t)
        i = int(np.searchsorted(ts, t, side="right") - 1)
        s0, s1 = self.states[i], self.states[i + 1]
        w = (t - ts[i]) / (ts[i + 1] - ts[i])
        rel = s0.Q.T @ s1.Q
        angle = np.arccos(np.clip((np.trace(rel) - 1.0) / 2.0, -1.0, 1.0))
        if angle < 1e-14:
            rot = s0.Q
        else:
            axis = (
                np.array([rel[2, 1] - rel[1, 2], rel[0, 2] - rel[2, 0], rel[1, 0] - rel[0, 1]])
                / (2.0 * np.sin(angle))
            )
            rot = s0.Q @ rotation_exp(w * angle * axis)
        return RigidState(
            t=t,
            q=(1 - w) * s0.q + w * s1.q,
            Q=rot,
            a=(1 - w) * s0.a + w * s1.a,
            omega=(1 - w) * s0.omega + w * s1.omega,
        )


@dataclass(frozen=True)
class SpinTranslateMotion:
    """Closed-form trajectory: constant translational and angular velocity."""

    q0: np.ndarray
    a: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        for name in ("q0", "a", "omega"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    def state(self, t: float) -> RigidState:
        return RigidState(
            t=t,
            q=self.q0 + t * self.a,
            Q=rotation_exp(t * self.omega),
            a=self.a,
            omega=self.omega,
        )

"""3D bipedal actuated spring-loaded inverted pendulum plant.

The body is a point mass on two massless legs. Each leg is a length actuator
(setpoint ``d`` driven by acceleration ``u``) in series with a parallel
spring/damper pair, so the axial leg force is

    F = k * (d - l) + b * (d_dot - l_dot)

applied to the body along the unit vector from the foothold to the body.
Swing legs are massless and exert no force; their setpoint states still
integrate ``d_ddot = u`` when commanded.

The ``*_core`` functions are written component-wise against the autodiff
helpers, so the identical dynamics code is evaluated with plain floats (fast
simulation path), numpy arrays (batched transcription), and dual numbers
(derivatives).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import autodiff as ad

MIN_LEG_LENGTH = 1e-9


class Phase(Enum):
    SINGLE_STANCE_LEFT = "single_stance_left"
    SINGLE_STANCE_RIGHT = "single_stance_right"
    DOUBLE_STANCE = "double_stance"


class InvalidStateError(ValueError):
    """Raised for degenerate geometry or phase/contact mismatches."""


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the plant. All strictly positive.

    ``i_m`` is the actuator's linear inertia; it is carried for completeness
    but does not enter the rigid-body dynamics or the actuation cost.
    """

    m: float = 30.0     # body mass, kg
    k: float = 3000.0   # leg spring stiffness, N/m
    b: float = 2.0      # leg spring damping, N*s/m
    i_m: float = 10.0   # actuator linear inertia, kg
    g: float = 9.81     # gravitational acceleration, m/s^2

    def __post_init__(self):
        for name in ("m", "k", "b", "i_m", "g"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"ModelParams.{name} must be strictly positive")

    def to_dict(self):
        return {"m": self.m, "k": self.k, "b": self.b, "i_m": self.i_m, "g": self.g}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class LegState:
    foothold: np.ndarray        # 3D foot position, z == 0 while in stance
    d: float                    # actuator setpoint length, m
    d_dot: float                # setpoint rate, m/s
    in_contact: bool

    def __post_init__(self):
        object.__setattr__(self, "foothold", np.asarray(self.foothold, dtype=float))
        if self.foothold.shape != (3,):
            raise ValueError("foothold must be a 3-vector")
        if self.in_contact and abs(self.foothold[2]) > 1e-9:
            raise InvalidStateError("stance foothold must lie on the ground plane")


@dataclass(frozen=True)
class AslipState:
    r: np.ndarray               # body position, m
    v: np.ndarray               # body velocity, m/s
    left: LegState
    right: LegState
    phase: Phase

    def __post_init__(self):
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        expected = {
            Phase.SINGLE_STANCE_LEFT: (True, False),
            Phase.SINGLE_STANCE_RIGHT: (False, True),
            Phase.DOUBLE_STANCE: (True, True),
        }[self.phase]
        if (self.left.in_contact, self.right.in_contact) != expected:
            raise InvalidStateError(
                f"contact flags {self.left.in_contact, self.right.in_contact} "
                f"inconsistent with phase {self.phase.value}"
            )

    def stance_legs(self):
        out = []
        if self.left.in_contact:
            out.append("left")
        if self.right.in_contact:
            out.append("right")
        return out


@dataclass(frozen=True)
class LegInput:
    """Setpoint accelerations, one per leg (m/s^2)."""

    u_left: float = 0.0
    u_right: float = 0.0


# ---------------------------------------------------------------------------
# generic component-wise core (floats / arrays / duals)
# ---------------------------------------------------------------------------

def leg_geometry_core(rx, ry, rz, vx, vy, vz, px, py, pz):
    """Leg length and length rate from body and foothold components."""
    ex = rx - px
    ey = ry - py
    ez = rz - pz
    l = ad.sqrt(ex * ex + ey * ey + ez * ez)
    l_dot = (ex * vx + ey * vy + ez * vz) / l
    return l, l_dot, ex, ey, ez


def leg_force_core(params, rx, ry, rz, vx, vy, vz, px, py, pz, d, d_dot):
    """Axial force magnitude and its cartesian components on the body."""
    l, l_dot, ex, ey, ez = leg_geometry_core(rx, ry, rz, vx, vy, vz, px, py, pz)
    fmag = params.k * (d - l) + params.b * (d_dot - l_dot)
    s = fmag / l
    return fmag, l, l_dot, s * ex, s * ey, s * ez


def body_accel_core(params, rx, ry, rz, vx, vy, vz, stance):
    """Body acceleration components given the stance legs.

    ``stance`` is a sequence of (px, py, pz, d, d_dot) tuples, one per leg in
    contact. Swing legs never appear here (massless legs).
    """
    ax = 0.0
    ay = 0.0
    az = -params.g
    inv_m = 1.0 / params.m
    for px, py, pz, d, d_dot in stance:
        _, _, _, fx, fy, fz = leg_force_core(
            params, rx, ry, rz, vx, vy, vz, px, py, pz, d, d_dot
        )
        ax = ax + fx * inv_m
        ay = ay + fy * inv_m
        az = az + fz * inv_m
    return ax, ay, az


# ---------------------------------------------------------------------------
# public vector API
# ---------------------------------------------------------------------------

def leg_length(r, foothold, v=None):
    """Length of the virtual leg, plus its time derivative when ``v`` given.

    Raises ``InvalidStateError`` on a degenerate zero-length leg.
    """
    r = np.asarray(r, dtype=float)
    p = np.asarray(foothold, dtype=float)
    e = r - p
    l = float(np.sqrt(e @ e))
    if l < MIN_LEG_LENGTH:
        raise InvalidStateError("zero-length leg: body coincides with foothold")
    if v is None:
        return l
    v = np.asarray(v, dtype=float)
    return l, float(e @ v) / l


def leg_force(params, r, v, leg):
    """Spring/damper force vector the leg applies to the body (stance only)."""
    if not leg.in_contact:
        return np.zeros(3)
    l = leg_length(r, leg.foothold)  # raises on degenerate geometry
    del l
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    _, _, _, fx, fy, fz = leg_force_core(
        params, r[0], r[1], r[2], v[0], v[1], v[2],
        leg.foothold[0], leg.foothold[1], leg.foothold[2], leg.d, leg.d_dot,
    )
    return np.array([fx, fy, fz])


def grf(params, state):
    """Per-leg ground reaction force vectors (zero for swing legs)."""
    return (
        leg_force(params, state.r, state.v, state.left),
        leg_force(params, state.r, state.v, state.right),
    )


@dataclass(frozen=True)
class StateDerivative:
    r_dot: np.ndarray
    v_dot: np.ndarray
    d_dot: np.ndarray       # (left, right) setpoint rates
    d_ddot: np.ndarray      # (left, right) setpoint accelerations


def dynamics(params, state, inputs):
    """Continuous-time derivative of the plant state.

    A zero-contact state is rejected: the contact schedule of this model is
    stance-only walking with no flight phase.
    """
    legs = state.stance_legs()
    if not legs:
        raise InvalidStateError("dynamics requires at least one stance leg")

    stance = []
    for name in legs:
        leg = getattr(state, name)
        leg_length(state.r, leg.foothold)  # degenerate-geometry guard
        stance.append((*leg.foothold, leg.d, leg.d_dot))

    r = state.r
    v = state.v
    ax, ay, az = body_accel_core(params, r[0], r[1], r[2], v[0], v[1], v[2], stance)
    return StateDerivative(
        r_dot=v.copy(),
        v_dot=np.array([ax, ay, az]),
        d_dot=np.array([state.left.d_dot, state.right.d_dot]),
        d_ddot=np.array([inputs.u_left, inputs.u_right]),
    )


def total_energy(params, state):
    """Kinetic + gravitational + stance spring potential energy."""
    e = 0.5 * params.m * float(state.v @ state.v) + params.m * params.g * state.r[2]
    for name in state.stance_legs():
        leg = getattr(state, name)
        l = leg_length(state.r, leg.foothold)
        e += 0.5 * params.k * (leg.d - l) ** 2
    return e


def actuator_net_power(params, state):
    """Actuator power through the spring minus damper dissipation.

    Along any trajectory of ``dynamics`` this equals d/dt of
    ``total_energy`` (per-leg: F * d_dot - b * (d_dot - l_dot)^2).
    """
    p = 0.0
    for name in state.stance_legs():
        leg = getattr(state, name)
        l, l_dot = leg_length(state.r, leg.foothold, state.v)
        fmag = params.k * (leg.d - l) + params.b * (leg.d_dot - l_dot)
        p += fmag * leg.d_dot - params.b * (leg.d_dot - l_dot) ** 2
    return p


__all__ = [
    "Phase",
    "InvalidStateError",
    "ModelParams",
    "LegState",
    "AslipState",
    "LegInput",
    "StateDerivative",
    "leg_length",
    "leg_force",
    "grf",
    "dynamics",
    "total_energy",
    "actuator_net_power",
    "leg_geometry_core",
    "leg_force_core",
    "body_accel_core",
]

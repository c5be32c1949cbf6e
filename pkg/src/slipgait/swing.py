"""Minimum-jerk swing-foot trajectories.

Each scalar profile is the unique quintic with the prescribed end positions
and zero end velocity/acceleration; among all C^2 curves with those boundary
conditions it minimizes the integrated squared jerk. A 3D swing profile uses
one quintic per horizontal axis and two spliced quintics vertically so the
foot passes through the apex clearance height, with zero vertical velocity,
at the temporal midpoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Quintic:
    """Polynomial c0 + c1*t + ... + c5*t^5 on [0, T]."""

    coeffs: np.ndarray
    duration: float

    def position(self, t):
        return np.polyval(self.coeffs[::-1], t)

    def velocity(self, t):
        c = self.coeffs
        return np.polyval([5 * c[5], 4 * c[4], 3 * c[3], 2 * c[2], c[1]], t)

    def acceleration(self, t):
        c = self.coeffs
        return np.polyval([20 * c[5], 12 * c[4], 6 * c[3], 2 * c[2]], t)

    def jerk(self, t):
        c = self.coeffs
        return np.polyval([60 * c[5], 24 * c[4], 6 * c[3]], t)


def min_jerk_1d(x0, x1, T):
    """Quintic from x0 to x1 over T with zero boundary velocity/acceleration."""
    if not T > 0.0:
        raise ValueError(f"duration must be positive, got {T}")
    dx = x1 - x0
    # rest-to-rest minimum-jerk shape: x0 + dx * (10 s^3 - 15 s^4 + 6 s^5), s = t/T
    return Quintic(
        coeffs=np.array([
            x0,
            0.0,
            0.0,
            10.0 * dx / T**3,
            -15.0 * dx / T**4,
            6.0 * dx / T**5,
        ]),
        duration=T,
    )


def jerk_squared_integral(q: Quintic) -> float:
    """Exact value of the integral of jerk^2 over the segment."""
    c3, c4, c5 = q.coeffs[3], q.coeffs[4], q.coeffs[5]
    T = q.duration
    # jerk(t) = 6 c3 + 24 c4 t + 60 c5 t^2, integrate the square analytically
    return (
        36.0 * c3**2 * T
        + 288.0 * c3 * c4 * T**2
        + (576.0 * c4**2 + 720.0 * c3 * c5) * T**3
        + 2880.0 * c4 * c5 * T**4
        + 720.0 * c5**2 * T**5
    )


@dataclass(frozen=True)
class SwingProfile:
    """3D foot path between consecutive footholds with an apex at T/2."""

    start: np.ndarray
    end: np.ndarray
    duration: float
    clearance: float
    x: Quintic
    y: Quintic
    z_up: Quintic
    z_down: Quintic

    def _z_eval(self, t, attr):
        t = np.asarray(t, dtype=float)
        half = 0.5 * self.duration
        up = getattr(self.z_up, attr)(np.minimum(t, half))
        down = getattr(self.z_down, attr)(np.maximum(t, half) - half)
        out = np.where(t < half, up, down)
        return float(out) if out.ndim == 0 else out

    def position(self, t):
        return np.stack(
            [self.x.position(t), self.y.position(t), self._z_eval(t, "position")],
            axis=-1,
        )

    def velocity(self, t):
        return np.stack(
            [self.x.velocity(t), self.y.velocity(t), self._z_eval(t, "velocity")],
            axis=-1,
        )

    def acceleration(self, t):
        return np.stack(
            [self.x.acceleration(t), self.y.acceleration(t), self._z_eval(t, "acceleration")],
            axis=-1,
        )


def swing_profile(p_liftoff, p_touchdown, T, clearance=0.2):
    """Swing trajectory from liftoff to touchdown with apex ``clearance``.

    The apex height is absolute and must exceed both endpoint heights.
    """
    p0 = np.asarray(p_liftoff, dtype=float)
    p1 = np.asarray(p_touchdown, dtype=float)
    if not T > 0.0:
        raise ValueError(f"duration must be positive, got {T}")
    if not (clearance > p0[2] and clearance > p1[2]):
        raise ValueError(
            f"clearance {clearance} must exceed both endpoint heights "
            f"({p0[2]}, {p1[2]})"
        )
    half = 0.5 * T
    return SwingProfile(
        start=p0,
        end=p1,
        duration=float(T),
        clearance=float(clearance),
        x=min_jerk_1d(p0[0], p1[0], T),
        y=min_jerk_1d(p0[1], p1[1], T),
        z_up=min_jerk_1d(p0[2], clearance, half),
        z_down=min_jerk_1d(clearance, p1[2], half),
    )

"""Analytic kinematics for a generic 3-DOF leg (hip roll, hip pitch, knee).

The chain hangs from a hip offset fixed in the body frame: hip roll rotates
about the forward (x) axis, hip pitch and knee pitch rotate about the lateral
(y) axis. With all angles zero the leg points straight down. Inverse
kinematics is closed form: roll from the lateral geometry, knee from the law
of cosines, hip pitch from the triangle decomposition, always on the single
configured knee branch so baselines are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

# slack for acos domain / workspace boundary round-off
_BOUNDARY_EPS = 1e-10


class OutOfWorkspaceError(ValueError):
    """Target foot position is outside the reachable annulus of the chain."""


@dataclass(frozen=True)
class LegChain:
    hip_roll: float = 0.0
    hip_pitch: float = 0.0
    knee_pitch: float = 0.0
    thigh: float = 0.5
    shank: float = 0.5
    hip_offset: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (self.thigh > 0.0 and self.shank > 0.0):
            raise ValueError("segment lengths must be positive")
        if not (0.0 <= self.knee_pitch < math.pi):
            raise ValueError(f"knee angle {self.knee_pitch} outside [0, pi)")

    def angles(self):
        return np.array([self.hip_roll, self.hip_pitch, self.knee_pitch])

    def mirrored(self):
        """Geometry of the opposite-side leg (lateral hip offset negated)."""
        ox, oy, oz = self.hip_offset
        return replace(self, hip_roll=-self.hip_roll, hip_offset=(ox, -oy, oz))


def fk(chain: LegChain) -> np.ndarray:
    """Foot position relative to the body origin."""
    q1, q2, q3 = chain.hip_roll, chain.hip_pitch, chain.knee_pitch
    # shank tip in the thigh frame, then the whole leg pitched and rolled
    wx = -chain.shank * math.sin(q3)
    wz = -(chain.thigh + chain.shank * math.cos(q3))
    c2, s2 = math.cos(q2), math.sin(q2)
    px = c2 * wx + s2 * wz
    pz = -s2 * wx + c2 * wz
    c1, s1 = math.cos(q1), math.sin(q1)
    return np.array(chain.hip_offset) + np.array([px, -s1 * pz, c1 * pz])


def ik(target, chain: LegChain) -> LegChain:
    """Joint angles reaching ``target`` (a body-frame foot position).

    Raises ``OutOfWorkspaceError`` when the target lies outside the reachable
    annulus; there is no silent clamping.
    """
    v = np.asarray(target, dtype=float) - np.array(chain.hip_offset)
    l1, l2 = chain.thigh, chain.shank

    q1 = math.atan2(v[1], -v[2])
    # undo the roll: remaining problem is planar two-link in the x-z plane
    c1, s1 = math.cos(q1), math.sin(q1)
    wx = v[0]
    wz = -s1 * v[1] + c1 * v[2]

    dist_sq = wx * wx + wz * wz
    dist = math.sqrt(dist_sq)
    lo, hi = abs(l1 - l2), l1 + l2
    if dist > hi + _BOUNDARY_EPS or dist < lo - _BOUNDARY_EPS or dist <= lo + 1e-12:
        raise OutOfWorkspaceError(
            f"target at distance {dist:.6f} outside reachable ({lo:.6f}, {hi:.6f}]"
        )
    cos_knee = (dist_sq - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    q3 = math.acos(min(1.0, max(-1.0, cos_knee)))

    # angle of the hip-to-foot line from straight down, and the same angle
    # for the unpitched chain; hip pitch makes up the difference
    theta_target = math.atan2(wx, -wz)
    theta_chain = math.atan2(-l2 * math.sin(q3), l1 + l2 * math.cos(q3))
    q2 = theta_chain - theta_target

    return replace(chain, hip_roll=q1, hip_pitch=q2, knee_pitch=q3)


def baseline_angles(body_pos, foot_pos_left, foot_pos_right, left_chain, right_chain):
    """Per-sample joint angles tracking body-relative foot references.

    Inputs are (n, 3) arrays of body and absolute foot positions; output is an
    (n, 6) array of [left roll, pitch, knee, right roll, pitch, knee].
    Raises ``OutOfWorkspaceError`` naming the first offending sample.
    """
    body_pos = np.asarray(body_pos, dtype=float)
    n = body_pos.shape[0]
    out = np.zeros((n, 6))
    for i in range(n):
        for j, (foot, chain) in enumerate(
            ((foot_pos_left[i], left_chain), (foot_pos_right[i], right_chain))
        ):
            try:
                sol = ik(np.asarray(foot) - body_pos[i], chain)
            except OutOfWorkspaceError as err:
                side = "left" if j == 0 else "right"
                raise OutOfWorkspaceError(f"sample {i}, {side} leg: {err}") from None
            out[i, 3 * j : 3 * j + 3] = sol.angles()
    return out

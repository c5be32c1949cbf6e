"""Hybrid simulator for the actuated SLIP plant and its control environment.

Two layers:

* a fixed-step RK4 integrator over the continuous stance dynamics (contact
  membership never changes inside a substep), exposed both through the typed
  ``AslipState`` API and through a fast flat-tuple path used in the inner
  simulation loop;
* a 33 Hz control environment wrapping the integrator with clock-scheduled
  touchdown/liftoff events, a reference gait sampled from the library, an
  actuator-setpoint servo driven by policy deltas, the reward, and episode
  termination.

The inner loop runs 60 substeps of 1/1980 s per control period, so the
2 kHz-class inner rate and the 33 Hz policy rate stay mutually exact;
cumulative time after N control steps is exactly N/33 s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .model import (
    AslipState,
    InvalidStateError,
    LegInput,
    LegState,
    ModelParams,
    Phase,
    body_accel_core,
    leg_force_core,
)

INNER_RATE = 1980.0  # substeps per second; 60 substeps == one 33 Hz period


@dataclass(frozen=True)
class SimConfig:
    substeps_per_control: int = 60
    inner_rate: float = INNER_RATE
    delay_substeps: int = 6              # 6/1980 s ~ 3 ms actuation delay
    episode_cap: int = 400
    servo_kp: float = 1600.0
    servo_kd: float = 80.0
    max_rate_delta: float = 1.0          # m/s at full-scale (|a| = 1) action
    max_foothold_offset: float = 0.3     # m per axis at full-scale action
    obs_noise_std: float = 0.0           # optional additive observation noise
    termination_reward: float = 0.3

    def __post_init__(self):
        if self.delay_substeps < 0:
            raise ValueError("delay must be nonnegative")
        if self.delay_substeps > self.substeps_per_control:
            raise ValueError("delay longer than one control period is unsupported")
        if self.substeps_per_control < 1:
            raise ValueError("need at least one substep per control period")

    @property
    def substep_dt(self):
        return 1.0 / self.inner_rate

    @property
    def control_dt(self):
        return self.substeps_per_control / self.inner_rate


# ---------------------------------------------------------------------------
# integrator
# ---------------------------------------------------------------------------

def _flat_deriv(params, s, u_left, u_right, contact_left, contact_right, p_left, p_right):
    """Time derivative of the flat state tuple.

    s = (rx, ry, rz, vx, vy, vz, dL, dL_dot, dR, dR_dot); footholds are
    3-tuples. Contact flags select which legs push on the body.
    """
    stance = []
    if contact_left:
        stance.append((p_left[0], p_left[1], p_left[2], s[6], s[7]))
    if contact_right:
        stance.append((p_right[0], p_right[1], p_right[2], s[8], s[9]))
    ax, ay, az = body_accel_core(params, s[0], s[1], s[2], s[3], s[4], s[5], stance)
    return (s[3], s[4], s[5], ax, ay, az, s[7], u_left, s[9], u_right)


def _rk4_flat(params, s, u_left, u_right, cl, cr, pl, pr, dt):
    k1 = _flat_deriv(params, s, u_left, u_right, cl, cr, pl, pr)
    s2 = tuple(s[i] + 0.5 * dt * k1[i] for i in range(10))
    k2 = _flat_deriv(params, s2, u_left, u_right, cl, cr, pl, pr)
    s3 = tuple(s[i] + 0.5 * dt * k2[i] for i in range(10))
    k3 = _flat_deriv(params, s3, u_left, u_right, cl, cr, pl, pr)
    s4 = tuple(s[i] + dt * k3[i] for i in range(10))
    k4 = _flat_deriv(params, s4, u_left, u_right, cl, cr, pl, pr)
    return tuple(
        s[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(10)
    )


def _state_to_flat(state):
    return (
        state.r[0], state.r[1], state.r[2],
        state.v[0], state.v[1], state.v[2],
        state.left.d, state.left.d_dot, state.right.d, state.right.d_dot,
    )


def _flat_to_state(flat, template):
    return AslipState(
        r=np.array(flat[0:3]),
        v=np.array(flat[3:6]),
        left=replace(template.left, d=flat[6], d_dot=flat[7]),
        right=replace(template.right, d=flat[8], d_dot=flat[9]),
        phase=template.phase,
    )


def integrate(params, state, inputs, dt):
    """One RK4 step of the continuous dynamics; contact set held fixed.

    Raises on nonpositive step or non-finite results (simulation fault).
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    if not state.stance_legs():
        raise InvalidStateError("cannot integrate a zero-contact state")
    flat = _rk4_flat(
        params,
        _state_to_flat(state),
        inputs.u_left,
        inputs.u_right,
        state.left.in_contact,
        state.right.in_contact,
        tuple(state.left.foothold),
        tuple(state.right.foothold),
        dt,
    )
    if not all(math.isfinite(v) for v in flat):
        raise InvalidStateError("non-finite state after integration step")
    return _flat_to_state(flat, state)


def _stance_grf(params, s, p, d, d_dot):
    """Spring GRF components for one stance leg of a flat state.

    Negative axial force is cut to zero: the unilateral ground contact can
    push but never pull, so a shortened setpoint simply unloads the leg.
    """
    fmag, _, _, fx, fy, fz = leg_force_core(
        params, s[0], s[1], s[2], s[3], s[4], s[5], p[0], p[1], p[2], d, d_dot
    )
    if fmag < 0.0:
        return 0.0, 0.0, 0.0, fmag
    return fx, fy, fz, fmag


def _deriv_unilateral(params, s, u_left, u_right, cl, cr, pl, pr):
    """Flat-state derivative with unilateral (clamped) stance forces.

    Returns the derivative tuple and whether any stance spring tried to pull.
    The leg force law is inlined (same formula as ``leg_force_core``) because
    this runs tens of thousands of times per second of simulation.
    """
    ax = 0.0
    ay = 0.0
    az = -params.g
    inv_m = 1.0 / params.m
    k, b = params.k, params.b
    pulled = False
    for flag, p, off in ((cl, pl, 6), (cr, pr, 8)):
        if not flag:
            continue
        ex = s[0] - p[0]
        ey = s[1] - p[1]
        ez = s[2] - p[2]
        l = math.sqrt(ex * ex + ey * ey + ez * ez)
        l_dot = (ex * s[3] + ey * s[4] + ez * s[5]) / l
        fmag = k * (s[off] - l) + b * (s[off + 1] - l_dot)
        if fmag < 0.0:
            pulled = True
            continue
        scale = fmag / l * inv_m
        ax += scale * ex
        ay += scale * ey
        az += scale * ez
    return (s[3], s[4], s[5], ax, ay, az, s[7], u_left, s[9], u_right), pulled


def _rk4_unilateral(params, s, u_left, u_right, cl, cr, pl, pr, dt):
    h2 = 0.5 * dt
    h6 = dt / 6.0
    k1, p1 = _deriv_unilateral(params, s, u_left, u_right, cl, cr, pl, pr)
    s2 = (s[0] + h2 * k1[0], s[1] + h2 * k1[1], s[2] + h2 * k1[2],
          s[3] + h2 * k1[3], s[4] + h2 * k1[4], s[5] + h2 * k1[5],
          s[6] + h2 * k1[6], s[7] + h2 * k1[7], s[8] + h2 * k1[8],
          s[9] + h2 * k1[9])
    k2, p2 = _deriv_unilateral(params, s2, u_left, u_right, cl, cr, pl, pr)
    s3 = (s[0] + h2 * k2[0], s[1] + h2 * k2[1], s[2] + h2 * k2[2],
          s[3] + h2 * k2[3], s[4] + h2 * k2[4], s[5] + h2 * k2[5],
          s[6] + h2 * k2[6], s[7] + h2 * k2[7], s[8] + h2 * k2[8],
          s[9] + h2 * k2[9])
    k3, p3 = _deriv_unilateral(params, s3, u_left, u_right, cl, cr, pl, pr)
    s4 = (s[0] + dt * k3[0], s[1] + dt * k3[1], s[2] + dt * k3[2],
          s[3] + dt * k3[3], s[4] + dt * k3[4], s[5] + dt * k3[5],
          s[6] + dt * k3[6], s[7] + dt * k3[7], s[8] + dt * k3[8],
          s[9] + dt * k3[9])
    k4, p4 = _deriv_unilateral(params, s4, u_left, u_right, cl, cr, pl, pr)
    out = tuple(
        s[i] + h6 * (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]) for i in range(10)
    )
    return out, (p1 or p2 or p3 or p4)


# ---------------------------------------------------------------------------
# reference bookkeeping shared by the environment and open-loop replay
# ---------------------------------------------------------------------------

def _interp_rows(arr, pos):
    i = int(pos)
    if i >= arr.shape[0] - 1:
        return np.array(arr[-1], dtype=float)
    w = pos - i
    return (1.0 - w) * arr[i] + w * arr[i + 1]


def _minjerk_blend(tau):
    tau = min(max(tau, 0.0), 1.0)
    return tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau)


class _ReferenceCursor:
    """Walks a (possibly blended) gait through repeated mirrored steps.

    Tracks phase, step parity, and the accumulated forward shift; serves
    frame quantities in actual-leg order (on odd steps the stored left/right
    roles swap and lateral coordinates mirror).
    """

    def __init__(self, gait_like, phase=0.0, parity=0, x_origin=0.0):
        self.set_gait(gait_like)
        self.phase = float(phase)
        self.parity = int(parity)
        self.x_origin = float(x_origin)

    def set_gait(self, gait_like):
        if hasattr(gait_like, "arrays"):
            self.arrays = gait_like.arrays
        else:
            from .library import _SAMPLE_ARRAYS
            self.arrays = {name: getattr(gait_like, name) for name in _SAMPLE_ARRAYS}
        self.period = float(gait_like.period)
        self.stride = float(gait_like.stride)
        self.ds_fraction = float(gait_like.ds_fraction)
        self.footsteps = np.asarray(gait_like.footsteps, dtype=float)
        self.baseline_angles = np.asarray(gait_like.baseline_angles, dtype=float)
        self.n_samples = self.arrays["body_pos"].shape[0]

    # parity transforms -------------------------------------------------
    def _pos(self, p):
        if self.parity:
            return np.array([p[0] + self.x_origin, -p[1], p[2]])
        return np.array([p[0] + self.x_origin, p[1], p[2]])

    def _vel(self, v):
        if self.parity:
            return np.array([v[0], -v[1], v[2]])
        return np.array(v, dtype=float)

    def _mirror_angles(self, angles):
        # swap leg triplets and negate hip roll
        out = np.concatenate([angles[3:6], angles[0:3]])
        out[0] = -out[0]
        out[3] = -out[3]
        return out

    def grid_pos(self):
        return self.phase * (self.n_samples - 1)

    def frame(self):
        """Reference quantities at the current phase, actual-leg ordered."""
        pos = self.grid_pos()
        a = self.arrays
        body_pos = self._pos(_interp_rows(a["body_pos"], pos))
        body_vel = self._vel(_interp_rows(a["body_vel"], pos))
        foot_l = self._pos(_interp_rows(a["foot_pos_left"], pos))
        foot_r = self._pos(_interp_rows(a["foot_pos_right"], pos))
        footv_l = self._vel(_interp_rows(a["foot_vel_left"], pos))
        footv_r = self._vel(_interp_rows(a["foot_vel_right"], pos))
        angles = _interp_rows(self.baseline_angles, pos)
        if self.parity:
            foot_l, foot_r = foot_r, foot_l
            footv_l, footv_r = footv_r, footv_l
            angles = self._mirror_angles(angles)
        return {
            "body_pos": body_pos,
            "body_vel": body_vel,
            "foot_pos_left": foot_l,
            "foot_pos_right": foot_r,
            "foot_vel_left": footv_l,
            "foot_vel_right": footv_r,
            "baseline_angles": angles,
        }

    def leg_refs(self):
        """(d, d_dot, u) per actual leg at the current phase."""
        pos = self.grid_pos()
        d = _interp_rows(self.arrays["setpoint"], pos)
        dd = _interp_rows(self.arrays["setpoint_rate"], pos)
        u = _interp_rows(self.arrays["input"], pos)
        if self.parity:
            return (d[1], dd[1], u[1], d[0], dd[0], u[0])
        return (d[0], dd[0], u[0], d[1], dd[1], u[1])

    def swing_leg(self):
        """Which actual leg swings during this step's single stance."""
        return "left" if self.parity == 0 else "right"

    def landing_target(self):
        """Baseline touchdown location for the swinging foot."""
        return self._pos(self.footsteps[2])

    def landing_target_relative(self, body_x, body_y):
        """Baseline touchdown location anchored to the plant body.

        Places the landing foot at the reference's body-relative geometry
        (stored landing foothold minus the reference body position at the end
        of the step) regardless of accumulated drift; lateral stabilization
        beyond the nominal step width is the policy's responsibility.
        """
        end_body = self.arrays["body_pos"][-1]
        rel_x = self.footsteps[2][0] - end_body[0]
        rel_y = self.footsteps[2][1] - end_body[1]
        if self.parity:
            rel_y = -rel_y
        return np.array([body_x + rel_x, body_y + rel_y, 0.0])

    def reanchor(self, body_x):
        """Translate the reference frame so the new step starts at the body."""
        self.x_origin = float(body_x) - float(self.arrays["body_pos"][0][0])

    def initial_footholds(self):
        """Actual-leg footholds at the start of the current step."""
        p_trail = self._pos(self.footsteps[0])
        p_stance = self._pos(self.footsteps[1])
        if self.parity == 0:
            return p_trail, p_stance   # left, right
        return p_stance, p_trail

    def ref_swing_foot(self, with_velocity=False):
        pos = self.grid_pos()
        a = self.arrays
        p = self._pos(_interp_rows(a["foot_pos_left"], pos))
        if not with_velocity:
            return p
        return p, self._vel(_interp_rows(a["foot_vel_left"], pos))

    def on_wrap(self):
        """Advance bookkeeping across a step boundary (phase already wrapped)."""
        self.x_origin += self.stride
        self.parity ^= 1

    def swing_progress(self):
        span = 1.0 - self.ds_fraction
        if span <= 0.0:
            return 1.0
        return (self.phase - self.ds_fraction) / span


# ---------------------------------------------------------------------------
# open-loop replay
# ---------------------------------------------------------------------------

def rollout_open_loop(params, gait, sim_config=None, n_cycles=1):
    """Replay a gait's optimized inputs and scheduled footholds in open loop.

    Integrates the unilateral dynamics at the inner rate, switching contacts
    on the phase clock. Returns per-substep log arrays, including the
    reference body position for deviation checks and any contact faults
    (a stance spring attempting to pull).
    """
    cfg = sim_config or SimConfig()
    cursor = _ReferenceCursor(gait)
    dt = cfg.substep_dt

    s = _gait_start_state(cursor)
    foot_l, foot_r = cursor.initial_footholds()
    contact = [True, True]
    footholds = [tuple(foot_l), tuple(foot_r)]
    lifted = False

    n_sub = int(np.ceil(n_cycles * cursor.period / dt))
    log = {name: [] for name in (
        "t", "phase", "parity", "body_pos", "body_vel", "foot_pos_left",
        "foot_pos_right", "grf_left", "grf_right", "setpoint", "label",
        "contact_left", "contact_right", "ref_body_pos", "fault",
    )}
    events = []

    for i in range(n_sub):
        u = _interp_rows(cursor.arrays["input"], cursor.grid_pos())
        u_l, u_r = (u[1], u[0]) if cursor.parity else (u[0], u[1])
        s, pulled = _rk4_unilateral(
            params, s, u_l, u_r, contact[0], contact[1], footholds[0], footholds[1], dt
        )
        t = (i + 1) / cfg.inner_rate
        cursor.phase += dt / cursor.period
        if not lifted and cursor.phase >= cursor.ds_fraction:
            trailing = 0 if cursor.swing_leg() == "left" else 1
            contact[trailing] = False
            lifted = True
            events.append({"type": "liftoff", "t": t, "leg": cursor.swing_leg()})
        if cursor.phase >= 1.0:
            cursor.phase -= 1.0
            leg = cursor.swing_leg()
            target = cursor.landing_target()
            idx = 0 if leg == "left" else 1
            footholds[idx] = (target[0], target[1], 0.0)
            contact[idx] = True
            cursor.on_wrap()
            lifted = False
            events.append({"type": "touchdown", "t": t, "leg": leg,
                           "position": np.array(footholds[idx]),
                           "target": np.array(footholds[idx])})

        frame = cursor.frame()
        grf = _log_grf(params, s, contact, footholds)
        swing_idx = 0 if cursor.swing_leg() == "left" else 1
        feet = [np.array(footholds[0]), np.array(footholds[1])]
        if not contact[swing_idx]:
            feet[swing_idx] = cursor.ref_swing_foot()
        log["t"].append(t)
        log["phase"].append(cursor.phase)
        log["parity"].append(cursor.parity)
        log["body_pos"].append(np.array(s[0:3]))
        log["body_vel"].append(np.array(s[3:6]))
        log["foot_pos_left"].append(feet[0])
        log["foot_pos_right"].append(feet[1])
        log["grf_left"].append(grf[0])
        log["grf_right"].append(grf[1])
        log["setpoint"].append(np.array([s[6], s[8]]))
        log["label"].append(0 if all(contact) else 1)
        log["contact_left"].append(contact[0])
        log["contact_right"].append(contact[1])
        log["ref_body_pos"].append(frame["body_pos"])
        log["fault"].append(pulled)

    out = {k: np.array(v) for k, v in log.items()}
    out["events"] = events
    out["deviation"] = float(
        np.max(np.linalg.norm(out["body_pos"] - out["ref_body_pos"], axis=1))
    )
    out["fault_count"] = int(np.sum(out["fault"]))
    return out


def _gait_start_state(cursor):
    a = cursor.arrays
    return (
        *(float(v) for v in a["body_pos"][0]),
        *(float(v) for v in a["body_vel"][0]),
        float(a["setpoint"][0][0]), float(a["setpoint_rate"][0][0]),
        float(a["setpoint"][0][1]), float(a["setpoint_rate"][0][1]),
    )


def _log_grf(params, s, contact, footholds):
    out = [np.zeros(3), np.zeros(3)]
    for idx, off in ((0, 6), (1, 8)):
        if contact[idx]:
            fx, fy, fz, _ = _stance_grf(params, s, footholds[idx], s[off], s[off + 1])
            out[idx] = np.array([fx, fy, fz])
    return out


# ---------------------------------------------------------------------------
# learning environment
# ---------------------------------------------------------------------------

OBS_LAYOUT = (
    "body_z", "heading", "vx", "vy", "vz",
    "d_left", "d_dot_left", "d_right", "d_dot_right",
    "contact_left", "contact_right",
    "ref_dx", "ref_dy", "ref_dz", "ref_vx", "ref_vy", "ref_vz",
    "ref_foot_left_x", "ref_foot_left_y", "ref_foot_left_z",
    "ref_foot_right_x", "ref_foot_right_y", "ref_foot_right_z",
    "ref_footv_left_x", "ref_footv_left_y", "ref_footv_left_z",
    "ref_footv_right_x", "ref_footv_right_y", "ref_footv_right_z",
)

OBS_DIM = len(OBS_LAYOUT)
ACTION_DIM = 4   # setpoint-rate delta per leg + touchdown offset (x, y)


class EpisodeFinishedError(RuntimeError):
    pass


class AslipEnv:
    """33 Hz tracking environment over the reduced-order walking plant.

    Actions are deltas on the library baselines: per-leg setpoint-rate
    offsets fed to the inner-loop servo, plus a lateral/forward offset on the
    next touchdown location. Touchdown and liftoff are scheduled by the
    reference phase clock, so the environment stays Markov in (state, phase).
    """

    def __init__(self, library, sim_config=None, reward_weights=None,
                 reward_scales=None, seed=0, speed_command=(0.0, 2.0),
                 episode_cap=None):
        from .library import blend_gaits
        from .reward import RewardScales, RewardWeights

        self.library = library
        self.params = library.params
        self.cfg = sim_config or SimConfig()
        self.weights = reward_weights or RewardWeights()
        self.scales = reward_scales or RewardScales()
        self.episode_cap = episode_cap or self.cfg.episode_cap
        self.speed_command = speed_command
        self._blend_fn = blend_gaits
        self.rng = np.random.default_rng(seed)
        self.trace_substeps = False
        self.action_dim = ACTION_DIM
        self.obs_dim = OBS_DIM
        self._cursor = None
        self._done = True
        # physical scaling of the normalized [-1, 1] action dimensions
        self._action_scale = np.array([
            self.cfg.max_rate_delta, self.cfg.max_rate_delta,
            self.cfg.max_foothold_offset, self.cfg.max_foothold_offset,
        ])

    # -- lifecycle -------------------------------------------------------
    def set_command(self, speed):
        """Change the commanded speed; takes effect immediately."""
        blend = self._blend_fn(self.library, float(speed))
        phase = self._cursor.phase if self._cursor is not None else 0.0
        if self._cursor is None:
            self._cursor = _ReferenceCursor(blend, phase=phase)
        else:
            self._cursor.set_gait(blend)
        self.commanded_speed = float(speed)

    def reset(self, speed=None, phase=None):
        if speed is None:
            lo, hi = self.speed_command
            speed = float(lo) if hi <= lo else float(self.rng.uniform(lo, hi))
        self._cursor = None
        self.set_command(speed)
        cur = self._cursor
        cur.phase = float(self.rng.uniform(0.0, 1.0)) if phase is None else float(phase)
        cur.parity = 0
        cur.x_origin = 0.0

        pos = cur.grid_pos()
        a = cur.arrays
        body = _interp_rows(a["body_pos"], pos)
        vel = _interp_rows(a["body_vel"], pos)
        d = _interp_rows(a["setpoint"], pos)
        dd = _interp_rows(a["setpoint_rate"], pos)
        self._s = (*map(float, body), *map(float, vel),
                   float(d[0]), float(dd[0]), float(d[1]), float(dd[1]))
        foot_l, foot_r = cur.initial_footholds()
        self._footholds = [tuple(foot_l), tuple(foot_r)]
        self._lifted = cur.phase >= cur.ds_fraction
        self._contact = [not (self._lifted and cur.swing_leg() == "left"),
                         not (self._lifted and cur.swing_leg() == "right")]
        self._pending = np.zeros(ACTION_DIM)
        self._pending_phys = np.zeros(ACTION_DIM)
        self._prev_action = None
        self._step_count = 0
        self._substep_count = 0
        self._fault = False
        self._done = False
        return self._observation()

    @property
    def time(self):
        """Simulated time; exactly step_count/33 after whole control steps."""
        return self._substep_count / self.cfg.inner_rate

    @property
    def done(self):
        return self._done

    # -- stepping ----------------------------------------------------------
    def _precompute_leg_refs(self, action_phys):
        """Per-substep servo references for one control period, vectorized.

        The phase advances by a fixed increment within a control step (speed
        commands only change between steps), so all interpolations and the
        mid-step parity flip at wraparound are computed in one shot.
        """
        cfg = self.cfg
        cur = self._cursor
        n = cfg.substeps_per_control
        phis = cur.phase + (cfg.substep_dt / cur.period) * np.arange(n)
        wrapped = phis >= 1.0
        pos = (phis % 1.0) * (cur.n_samples - 1)
        idx = np.minimum(pos.astype(int), cur.n_samples - 2)
        w = (pos - idx)[:, None]
        rows = []
        for name in ("setpoint", "setpoint_rate", "input"):
            a = cur.arrays[name]
            rows.append(a[idx] * (1.0 - w) + a[idx + 1] * w)
        refs = np.concatenate(rows, axis=1)   # columns: dL dR ddL ddR uL uR
        swap = wrapped ^ bool(cur.parity)
        out = np.empty((n, 6))
        out[:, 0] = np.where(swap, refs[:, 1], refs[:, 0])
        out[:, 1] = np.where(swap, refs[:, 0], refs[:, 1])
        out[:, 2] = np.where(swap, refs[:, 3], refs[:, 2])
        out[:, 3] = np.where(swap, refs[:, 2], refs[:, 3])
        out[:, 4] = np.where(swap, refs[:, 5], refs[:, 4])
        out[:, 5] = np.where(swap, refs[:, 4], refs[:, 5])
        # fold the (delayed) setpoint-rate deltas into the rate targets
        delayed = np.arange(n) < cfg.delay_substeps
        out[:, 2] += np.where(delayed, self._pending_phys[0], action_phys[0])
        out[:, 3] += np.where(delayed, self._pending_phys[1], action_phys[1])
        return out.tolist()

    def step(self, action):
        """Advance one 33 Hz control period under a normalized action.

        Actions are unitless in [-1, 1] per dimension; the configured limits
        scale them to physical setpoint-rate deltas and foothold offsets.
        """
        if self._done:
            raise EpisodeFinishedError("episode finished; call reset()")
        action = np.clip(np.asarray(action, dtype=float).reshape(ACTION_DIM), -1.0, 1.0)
        action_phys = action * self._action_scale
        cfg = self.cfg
        cur = self._cursor
        dt = cfg.substep_dt
        events = []
        fault = False
        trace = [] if self.trace_substeps else None
        refs = self._precompute_leg_refs(action_phys)
        kp, kd = cfg.servo_kp, cfg.servo_kd

        for i in range(cfg.substeps_per_control):
            active = self._pending_phys if i < cfg.delay_substeps else action_phys
            d_l, d_r, dd_l, dd_r, u_l, u_r = refs[i]
            s = self._s
            cmd_l = u_l + kp * (d_l - s[6]) + kd * (dd_l - s[7])
            cmd_r = u_r + kp * (d_r - s[8]) + kd * (dd_r - s[9])
            self._s, pulled = _rk4_unilateral(
                self.params, s, cmd_l, cmd_r,
                self._contact[0], self._contact[1],
                self._footholds[0], self._footholds[1], dt,
            )
            fault = fault or pulled
            self._substep_count += 1
            cur.phase += dt / cur.period
            if not self._lifted and cur.phase >= cur.ds_fraction:
                trailing = 0 if cur.swing_leg() == "left" else 1
                self._contact[trailing] = False
                self._lifted = True
                events.append({"type": "liftoff", "t": self.time, "leg": cur.swing_leg()})
            if cur.phase >= 1.0:
                cur.phase -= 1.0
                leg = cur.swing_leg()
                idx = 0 if leg == "left" else 1
                target = cur.landing_target_relative(self._s[0])
                landed = (target[0] + active[2], target[1] + active[3], 0.0)
                self._footholds[idx] = landed
                self._contact[idx] = True
                cur.on_wrap()
                # re-anchor the reference to the body: baselines stay
                # body-relative instead of compounding forward drift
                cur.reanchor(self._s[0])
                self._lifted = False
                events.append({
                    "type": "touchdown", "t": self.time, "leg": leg,
                    "position": np.array(landed), "target": np.array(target),
                })
            if trace is not None:
                trace.append(self._s)

        self._step_count += 1
        if not all(np.isfinite(v) for v in self._s):
            self._done = True
            return (np.zeros(OBS_DIM), 0.0, True,
                    {"fault": True, "reason": "non-finite state", "events": events})

        # becomes the delayed command at the start of the next step
        self._pending = action
        self._pending_phys = action_phys
        breakdown = self._reward(action)
        self._prev_action = action
        self._done = breakdown.terminated
        obs = self._observation()
        info = {
            "reward_terms": breakdown.as_dict(),
            "grf_left": self._grf()[0],
            "grf_right": self._grf()[1],
            "events": events,
            "phase": cur.phase,
            "parity": cur.parity,
            "fault": fault,
            "time": self.time,
            "commanded_speed": self.commanded_speed,
        }
        if trace is not None:
            info["substates"] = np.array(trace)
        return obs, breakdown.total, self._done, info

    # -- internals ---------------------------------------------------------
    def _plant_feet(self):
        cur = self._cursor
        feet = [np.array(self._footholds[0]), np.array(self._footholds[1])]
        swing_idx = 0 if cur.swing_leg() == "left" else 1
        if not self._contact[swing_idx]:
            offset = self._pending_phys
            w = _minjerk_blend(cur.swing_progress())
            feet[swing_idx] = cur.ref_swing_foot() + w * np.array(
                [offset[2], offset[3], 0.0])
        return feet

    def _grf(self):
        return _log_grf(self.params, self._s, self._contact, self._footholds)

    def _reward(self, action):
        from . import reward as rw

        cur = self._cursor
        frame = cur.frame()
        s = self._s
        body = np.array(s[0:3])
        vel = np.array(s[3:6])
        feet = self._plant_feet()
        terms = (
            rw.com_vel_term(vel, frame["body_vel"], heading=0.0,
                            scale=self.scales.com_vel),
            rw.foot_pos_term(
                [feet[0] - body, feet[1] - body],
                [frame["foot_pos_left"] - frame["body_pos"],
                 frame["foot_pos_right"] - frame["body_pos"]],
                scale=self.scales.foot_pos,
            ),
            rw.straight_term(body[1], scale=self.scales.straight),
            rw.foot_orient_term(scale=self.scales.foot_orient),
            rw.action_diff_term(action, self._prev_action,
                                scale=self.scales.action_diff),
        )
        return rw.total_reward(
            terms, self.weights, step_count=self._step_count,
            episode_cap=self.episode_cap, threshold=self.cfg.termination_reward,
        )

    def _observation(self):
        cur = self._cursor
        frame = cur.frame()
        s = self._s
        body = np.array(s[0:3])
        obs = np.concatenate([
            [s[2], 0.0, s[3], s[4], s[5], s[6], s[7], s[8], s[9],
             float(self._contact[0]), float(self._contact[1])],
            frame["body_pos"] - body,
            frame["body_vel"],
            frame["foot_pos_left"] - frame["body_pos"],
            frame["foot_pos_right"] - frame["body_pos"],
            frame["foot_vel_left"],
            frame["foot_vel_right"],
        ])
        if self.cfg.obs_noise_std > 0.0:
            obs = obs + self.rng.normal(0.0, self.cfg.obs_noise_std, obs.shape)
        return obs

"""Speed-indexed gait library: build, densify, serialize, sample.

Each entry stores one optimized step, densely resampled onto a uniform phase
grid (inclusive of both endpoints, so the leg-swap periodicity between the
first and last samples is directly checkable). Consecutive steps mirror
left/right, so consumers advance a phase clock through [0, 1) and apply the
swap map on wraparound.

The on-disk format is a versioned JSON document fingerprinted against the
model parameters it was built for.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import legkin
from .model import ModelParams, body_accel_core, leg_force_core
from .solver import SolverOptions, solve
from .swing import swing_profile
from .transcription import ContactSchedule, build_gait_nlp, shift_guess_to_speed

FORMAT_VERSION = 1

LABEL_DOUBLE = 0
LABEL_SINGLE = 1   # right leg in stance, left leg swinging

_SAMPLE_ARRAYS = (
    "body_pos", "body_vel",
    "foot_pos_left", "foot_pos_right", "foot_vel_left", "foot_vel_right",
    "setpoint", "setpoint_rate", "input",
    "grf_left", "grf_right",
)


class LibraryError(ValueError):
    """Malformed, mismatched, or failed-to-build library data."""


def params_fingerprint(params: ModelParams) -> str:
    blob = json.dumps(params.to_dict(), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class GaitTrajectory:
    """One optimized periodic step on a uniform inclusive phase grid."""

    speed: float
    period: float
    stride: float
    ds_fraction: float
    swing_apex: float
    body_pos: np.ndarray
    body_vel: np.ndarray
    foot_pos_left: np.ndarray
    foot_pos_right: np.ndarray
    foot_vel_left: np.ndarray
    foot_vel_right: np.ndarray
    setpoint: np.ndarray        # (n, 2) actuator lengths, left/right
    setpoint_rate: np.ndarray
    input: np.ndarray           # (n, 2) actuator accelerations
    grf_left: np.ndarray
    grf_right: np.ndarray
    stance_label: np.ndarray    # (n,) LABEL_DOUBLE / LABEL_SINGLE
    baseline_angles: np.ndarray  # (n, 6) left then right joint triplets
    footsteps: np.ndarray       # (3, 3): trailing start, stance, landing

    @property
    def n_samples(self):
        return self.body_pos.shape[0]

    def validate(self, speed_tol=1e-3, wrap_tol=1e-6, grf_tol=1e-8):
        n = self.n_samples
        for name in _SAMPLE_ARRAYS:
            arr = getattr(self, name)
            if arr.shape[0] != n:
                raise LibraryError(f"sample array {name} length {arr.shape[0]} != {n}")
        if self.stance_label.shape[0] != n or self.baseline_angles.shape[0] != n:
            raise LibraryError("label/angle arrays inconsistent with sample grid")
        mean_v = (self.body_pos[-1, 0] - self.body_pos[0, 0]) / self.period
        if abs(mean_v - self.speed) > speed_tol:
            raise LibraryError(
                f"mean forward velocity {mean_v:.6f} deviates from target {self.speed}"
            )
        # wraparound: last sample equals the leg-swapped, stride-shifted first
        first_b = np.array([*self.body_pos[0], *self.body_vel[0]])
        last_b = np.array([*self.body_pos[-1], *self.body_vel[-1]])
        mapped = first_b * np.array([1, -1, 1, 1, -1, 1]) + np.array(
            [self.stride, 0, 0, 0, 0, 0]
        )
        err = np.max(np.abs(last_b - mapped))
        swap_d = np.max(np.abs(self.setpoint[-1] - self.setpoint[0, ::-1]))
        swap_dr = np.max(np.abs(self.setpoint_rate[-1] - self.setpoint_rate[0, ::-1]))
        err = max(err, swap_d, swap_dr)
        if err > wrap_tol:
            raise LibraryError(f"periodicity-with-swap residual {err:.2e} > {wrap_tol}")
        worst_grf = min(float(self.grf_left[:, 2].min()), float(self.grf_right[:, 2].min()))
        if worst_grf < -grf_tol:
            raise LibraryError(f"vertical ground force dips to {worst_grf:.3e} N")

    def to_dict(self):
        return {
            "speed": self.speed,
            "period": self.period,
            "stride": self.stride,
            "ds_fraction": self.ds_fraction,
            "swing_apex": self.swing_apex,
            "samples": {name: getattr(self, name).tolist() for name in _SAMPLE_ARRAYS},
            "stance_label": self.stance_label.tolist(),
            "baseline_angles": self.baseline_angles.tolist(),
            "footsteps": self.footsteps.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        try:
            arrays = {name: np.asarray(d["samples"][name], dtype=float)
                      for name in _SAMPLE_ARRAYS}
            return cls(
                speed=float(d["speed"]),
                period=float(d["period"]),
                stride=float(d["stride"]),
                ds_fraction=float(d["ds_fraction"]),
                swing_apex=float(d["swing_apex"]),
                stance_label=np.asarray(d["stance_label"], dtype=int),
                baseline_angles=np.asarray(d["baseline_angles"], dtype=float),
                footsteps=np.asarray(d["footsteps"], dtype=float),
                **arrays,
            )
        except KeyError as err:
            raise LibraryError(f"gait record missing key {err}") from None


@dataclass
class GaitLibrary:
    params: ModelParams
    gaits: list
    format_version: int = FORMAT_VERSION
    fingerprint: str = ""
    audit_warnings: list = field(default_factory=list)

    def __post_init__(self):
        if not self.fingerprint:
            self.fingerprint = params_fingerprint(self.params)

    @property
    def speeds(self):
        return np.array([g.speed for g in self.gaits])

    def validate(self):
        if not self.gaits:
            raise LibraryError("library has no gaits")
        speeds = self.speeds
        if np.any(np.diff(speeds) <= 0):
            raise LibraryError("library speeds must be strictly increasing")
        sizes = {g.n_samples for g in self.gaits}
        if len(sizes) != 1:
            raise LibraryError(f"gaits disagree on sample grid size: {sorted(sizes)}")
        for g in self.gaits:
            g.validate()

    def entry(self, speed, tol=1e-9):
        for g in self.gaits:
            if abs(g.speed - speed) <= tol:
                return g
        raise KeyError(f"no library entry at speed {speed}")


@dataclass(frozen=True)
class ReferenceFrame:
    """One sampled instant of the reference motion."""

    body_pos: np.ndarray
    body_vel: np.ndarray
    foot_pos_left: np.ndarray
    foot_pos_right: np.ndarray
    foot_vel_left: np.ndarray
    foot_vel_right: np.ndarray
    baseline_angles: np.ndarray
    phase: float
    stance_label: int
    speed_clamped: bool = False


@dataclass
class BlendedGait:
    """Reference arrays at a commanded speed (linear blend of two entries)."""

    speed: float
    period: float
    stride: float
    ds_fraction: float
    arrays: dict
    stance_label: np.ndarray
    baseline_angles: np.ndarray
    footsteps: np.ndarray
    clamped: bool

    @property
    def n_samples(self):
        return self.stance_label.shape[0]


def advance_clock(phase, dt, period):
    """Phase clock increment: (phase + dt/period) mod 1."""
    if dt < 0.0:
        raise ValueError("dt must be nonnegative")
    if not period > 0.0:
        raise ValueError("period must be positive")
    return (phase + dt / period) % 1.0


def blend_gaits(lib: GaitLibrary, commanded_speed: float) -> BlendedGait:
    """Phase-aligned linear interpolation between the bracketing entries."""
    speeds = lib.speeds
    clamped = bool(commanded_speed < speeds[0] - 1e-12 or commanded_speed > speeds[-1] + 1e-12)
    s = float(np.clip(commanded_speed, speeds[0], speeds[-1]))
    hi = int(np.searchsorted(speeds, s, side="left"))
    if hi == 0 or abs(speeds[hi if hi < len(speeds) else -1] - s) <= 1e-12:
        g = lib.gaits[min(hi, len(speeds) - 1)]
        return BlendedGait(
            speed=s, period=g.period, stride=g.stride, ds_fraction=g.ds_fraction,
            arrays={name: getattr(g, name).copy() for name in _SAMPLE_ARRAYS},
            stance_label=g.stance_label.copy(),
            baseline_angles=g.baseline_angles.copy(),
            footsteps=g.footsteps.copy(),
            clamped=clamped,
        )
    lo_g, hi_g = lib.gaits[hi - 1], lib.gaits[hi]
    w = (s - lo_g.speed) / (hi_g.speed - lo_g.speed)
    arrays = {
        name: (1.0 - w) * getattr(lo_g, name) + w * getattr(hi_g, name)
        for name in _SAMPLE_ARRAYS
    }
    nearer = hi_g if w > 0.5 else lo_g
    return BlendedGait(
        speed=s,
        period=(1.0 - w) * lo_g.period + w * hi_g.period,
        stride=(1.0 - w) * lo_g.stride + w * hi_g.stride,
        ds_fraction=(1.0 - w) * lo_g.ds_fraction + w * hi_g.ds_fraction,
        arrays=arrays,
        stance_label=nearer.stance_label.copy(),
        baseline_angles=(1.0 - w) * lo_g.baseline_angles + w * hi_g.baseline_angles,
        footsteps=(1.0 - w) * lo_g.footsteps + w * hi_g.footsteps,
        clamped=clamped,
    )


def _grid_interp(arr, pos):
    i = int(pos)
    if i >= arr.shape[0] - 1:
        return np.array(arr[-1], dtype=float)
    w = pos - i
    return (1.0 - w) * arr[i] + w * arr[i + 1]


def interp_frame(blend: BlendedGait, phase: float) -> ReferenceFrame:
    """Reference frame at a phase in [0, 1) by linear grid interpolation."""
    phase = float(phase) % 1.0
    pos = phase * (blend.n_samples - 1)
    a = blend.arrays
    label = int(blend.stance_label[min(int(round(pos)), blend.n_samples - 1)])
    return ReferenceFrame(
        body_pos=_grid_interp(a["body_pos"], pos),
        body_vel=_grid_interp(a["body_vel"], pos),
        foot_pos_left=_grid_interp(a["foot_pos_left"], pos),
        foot_pos_right=_grid_interp(a["foot_pos_right"], pos),
        foot_vel_left=_grid_interp(a["foot_vel_left"], pos),
        foot_vel_right=_grid_interp(a["foot_vel_right"], pos),
        baseline_angles=_grid_interp(blend.baseline_angles, pos),
        phase=phase,
        stance_label=label,
        speed_clamped=blend.clamped,
    )


def sample(lib: GaitLibrary, commanded_speed: float, phase: float) -> ReferenceFrame:
    """Library lookup: blend bracketing speeds, interpolate at equal phase.

    Out-of-range speeds are clamped to the grid and flagged on the returned
    frame.
    """
    return interp_frame(blend_gaits(lib, commanded_speed), phase)


# ---------------------------------------------------------------------------
# dense resampling of an NLP solution
# ---------------------------------------------------------------------------

def _hermite(x0, x1, f0, f1, h, s):
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    return h00 * x0 + h10 * h * f0 + h01 * x1 + h11 * h * f1


def _knot_derivatives(params, states, inputs, nd, feet):
    """State derivative at each knot under its interval's contact mode.

    Returns (f_ds (nd,10), f_ss (kss,10)) blocks covering the double-stance
    knots and the single-stance knots (boundary knot appears in both).
    """
    def deriv(x, u, stance):
        legs = []
        if "left" in stance:
            legs.append((feet[0][0], feet[0][1], feet[0][2], x[6], x[7]))
        if "right" in stance:
            legs.append((feet[1][0], feet[1][1], feet[1][2], x[8], x[9]))
        ax, ay, az = body_accel_core(params, x[0], x[1], x[2], x[3], x[4], x[5], legs)
        return np.array([x[3], x[4], x[5], ax, ay, az, x[7], u[0], x[9], u[1]])

    f_ds = np.stack([deriv(states[k], inputs[k], ("left", "right")) for k in range(nd)])
    f_ss = np.stack([deriv(states[k], inputs[k], ("right",))
                     for k in range(nd - 1, states.shape[0])])
    return f_ds, f_ss


def gait_from_solution(nlp, x, samples_per_cycle=200, clearance=0.2,
                       left_chain=None, right_chain=None):
    """Densify a converged decision vector into a GaitTrajectory.

    ``samples_per_cycle`` counts grid intervals; the stored arrays carry one
    extra endpoint sample so the swap relation between the cycle ends is
    explicit.
    """
    states, inputs, durations, stride, feet = nlp.layout.unpack(x)
    nd = nlp.schedule.knots_double
    t_ds, t_ss = float(durations[0]), float(durations[1])
    period = t_ds + t_ss
    kk = states.shape[0]
    knot_times = np.concatenate([
        np.linspace(0.0, t_ds, nd),
        t_ds + np.linspace(0.0, t_ss, nlp.schedule.knots_single)[1:],
    ])
    f_ds, f_ss = _knot_derivatives(nlp.params, states, inputs, nd, feet)

    n = samples_per_cycle + 1
    grid_t = np.linspace(0.0, period, n)
    dense = np.zeros((n, 10))
    dense_u = np.zeros((n, 2))
    labels = np.zeros(n, dtype=int)
    for i, t in enumerate(grid_t):
        labels[i] = LABEL_DOUBLE if t < t_ds else LABEL_SINGLE
        if t <= t_ds:
            block_t, block_f, k0 = knot_times[:nd], f_ds, 0
        else:
            block_t, block_f, k0 = knot_times[nd - 1 :], f_ss, nd - 1
        j = min(int(np.searchsorted(block_t, t, side="right")) - 1, len(block_t) - 2)
        j = max(j, 0)
        h = block_t[j + 1] - block_t[j]
        s = (t - block_t[j]) / h
        ka, kb = k0 + j, k0 + j + 1
        dense[i] = _hermite(states[ka], states[kb], block_f[j], block_f[j + 1], h, s)
        dense_u[i] = (1.0 - s) * inputs[ka] + s * inputs[kb]
    # the endpoint sample is the pre-touchdown limit: contact changes on wrap
    labels[0] = LABEL_DOUBLE
    labels[-1] = LABEL_SINGLE

    # feet: right planted all cycle, left planted through double stance then
    # swinging to the landing foothold
    p_left0, p_right, p_land = feet[0], feet[1], feet[2]
    foot_pos_left = np.tile(p_left0, (n, 1))
    foot_vel_left = np.zeros((n, 3))
    foot_pos_right = np.tile(p_right, (n, 1))
    foot_vel_right = np.zeros((n, 3))
    swing = swing_profile(p_left0, p_land, t_ss, clearance=clearance)
    in_swing = grid_t > t_ds
    ts = grid_t[in_swing] - t_ds
    foot_pos_left[in_swing] = swing.position(ts)
    foot_vel_left[in_swing] = swing.velocity(ts)
    foot_pos_left[-1] = p_land
    foot_vel_left[-1] = 0.0

    grf_left = np.zeros((n, 3))
    grf_right = np.zeros((n, 3))
    for i in range(n):
        s = dense[i]
        _, _, _, fx, fy, fz = leg_force_core(
            nlp.params, s[0], s[1], s[2], s[3], s[4], s[5],
            p_right[0], p_right[1], p_right[2], s[8], s[9])
        grf_right[i] = (fx, fy, fz)
        if labels[i] == LABEL_DOUBLE and grid_t[i] <= t_ds:
            _, _, _, fx, fy, fz = leg_force_core(
                nlp.params, s[0], s[1], s[2], s[3], s[4], s[5],
                p_left0[0], p_left0[1], p_left0[2], s[6], s[7])
            grf_left[i] = (fx, fy, fz)

    left_chain = left_chain or legkin.LegChain(hip_offset=(0.0, 0.1, 0.0))
    right_chain = right_chain or left_chain.mirrored()
    angles = legkin.baseline_angles(
        dense[:, :3], foot_pos_left, foot_pos_right, left_chain, right_chain
    )

    apex = float(swing.position(0.5 * t_ss)[2])
    return GaitTrajectory(
        speed=nlp.target_speed,
        period=period,
        stride=float(stride),
        ds_fraction=t_ds / period,
        swing_apex=apex,
        body_pos=dense[:, 0:3].copy(),
        body_vel=dense[:, 3:6].copy(),
        foot_pos_left=foot_pos_left,
        foot_pos_right=foot_pos_right,
        foot_vel_left=foot_vel_left,
        foot_vel_right=foot_vel_right,
        setpoint=dense[:, [6, 8]].copy(),
        setpoint_rate=dense[:, [7, 9]].copy(),
        input=dense_u,
        grf_left=grf_left,
        grf_right=grf_right,
        stance_label=labels,
        baseline_angles=angles,
        footsteps=np.stack([p_left0, p_right, p_land]),
    )


# ---------------------------------------------------------------------------
# build
# ---------------------------------------------------------------------------

def build_library(params, speeds=None, schedule=None, solver_options=None,
                  samples_per_cycle=200, clearance=0.2, extension_bounds=(0.55, 0.95),
                  u_max=50.0, grf_margin=1e-4, left_chain=None, right_chain=None,
                  progress=None):
    """Solve every speed (warm-started along the sweep) and assemble a library.

    The whole build fails on the first non-converged speed so the sampler is
    total over the advertised grid.
    """
    if speeds is None:
        speeds = np.round(np.arange(0.0, 2.0 + 1e-9, 0.1), 10)
    speeds = np.asarray(sorted(float(s) for s in speeds))
    if speeds.size == 0:
        raise LibraryError("empty speed grid")
    schedule = schedule or ContactSchedule()
    opts = solver_options or SolverOptions(max_outer=40)

    gaits = []
    prev = None
    for v in speeds:
        nlp = build_gait_nlp(params, float(v), schedule,
                             extension_bounds=extension_bounds,
                             u_max=u_max, grf_margin=grf_margin)
        if prev is None:
            report = solve(nlp.as_problem(), nlp.initial_guess(), opts)
        else:
            x0 = shift_guess_to_speed(nlp, prev[0], prev[1])
            report = solve(nlp.as_problem(), x0, opts,
                           warm_lam_eq=prev[2], warm_lam_ineq=prev[3])
        if not report.converged:
            raise LibraryError(
                f"gait optimization failed at speed {v:.2f} m/s: "
                f"{report.status}, violation {report.max_violation:.2e}"
            )
        gait = gait_from_solution(nlp, report.x, samples_per_cycle, clearance,
                                  left_chain, right_chain)
        gait.validate()
        gaits.append(gait)
        if progress is not None:
            progress(float(v), report)
        prev = (report.x, float(v), report.lam_eq, report.lam_ineq)

    lib = GaitLibrary(params=params, gaits=gaits)
    lib.validate()
    lib.audit_warnings = audit_library(lib)
    return lib


def audit_library(lib: GaitLibrary):
    """Non-fatal sanity findings (e.g. stride monotonicity across speeds)."""
    warnings = []
    strides = np.array([g.stride for g in lib.gaits])
    if np.any(np.diff(strides) < -1e-9):
        where = int(np.argmin(np.diff(strides)))
        warnings.append(
            f"stride not nondecreasing in speed near entry {where} "
            f"({strides[where]:.4f} -> {strides[where + 1]:.4f})"
        )
    return warnings


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def library_to_dict(lib: GaitLibrary):
    return {
        "format_version": lib.format_version,
        "model_params": lib.params.to_dict(),
        "fingerprint": lib.fingerprint,
        "speeds": [g.speed for g in lib.gaits],
        "gaits": [g.to_dict() for g in lib.gaits],
    }


def save(lib: GaitLibrary, path):
    with open(path, "w") as fh:
        json.dump(library_to_dict(lib), fh)


def load(path, expected_params: ModelParams | None = None) -> GaitLibrary:
    """Load and validate a library file.

    Rejects version mismatches, fingerprints that disagree with the stored
    parameters, and (when ``expected_params`` is given) libraries built for a
    different model.
    """
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as err:
            raise LibraryError(
                f"malformed library file at byte offset {err.pos}: {err.msg}"
            ) from err
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise LibraryError("not a gait library document")
    if doc["format_version"] != FORMAT_VERSION:
        raise LibraryError(
            f"format version {doc['format_version']!r} unsupported "
            f"(expected {FORMAT_VERSION})"
        )
    try:
        params = ModelParams.from_dict(doc["model_params"])
    except (KeyError, TypeError) as err:
        raise LibraryError(f"bad model parameter record: {err}") from None
    if doc.get("fingerprint") != params_fingerprint(params):
        raise LibraryError("fingerprint does not match stored model parameters")
    if expected_params is not None and params != expected_params:
        raise LibraryError("library was built for different model parameters")
    gaits = [GaitTrajectory.from_dict(g) for g in doc.get("gaits", [])]
    lib = GaitLibrary(params=params, gaits=gaits, fingerprint=doc["fingerprint"])
    lib.validate()
    return lib

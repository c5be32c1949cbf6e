"""Direct-collocation transcription of one periodic walking step.

One gait cycle covers a single step: a double-stance phase followed by a
single stance phase in which the trailing (left) leg swings forward. The
cycle closes on itself through a leg-swap periodicity map, so consecutive
steps are mirror images and a full two-step gait cycle never has to be
transcribed.

Decision vector layout (K knots, the phase-boundary knot shared):

    [ knot states (K x 10) | knot inputs (K x 2) | T_ds, T_ss | stride |
      p_left_0 (3) | p_right (3) | p_left_land (3) ]

with the 10 knot states ordered ``rx ry rz vx vy vz dL dLd dR dRd``.
Dynamics enter through trapezoidal defect equalities per interval; the
remaining equalities (periodicity, foothold chaining, average speed) are
linear. Leg extension bounds and spring-force unilaterality are enforced as
inequalities at every stance knot. Derivatives come from batched forward-mode
duals evaluated on the same dynamics core the simulator integrates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .model import ModelParams, body_accel_core, leg_geometry_core
from .solver import NlpProblem

STATE_DIM = 10
INPUT_DIM = 2


@dataclass(frozen=True)
class ContactSchedule:
    """Alternating double/single stance step with per-phase knot counts."""

    knots_double: int = 6
    knots_single: int = 10
    duration_min: float = 0.05
    duration_max: float = 0.6

    def __post_init__(self):
        if self.knots_double < 2 or self.knots_single < 2:
            raise ValueError("each phase needs at least 2 knots")
        if not (0.0 < self.duration_min < self.duration_max):
            raise ValueError("phase duration bounds must satisfy 0 < min < max")

    @property
    def n_knots(self):
        return self.knots_double + self.knots_single - 1


def swap_legs(state):
    """Leg-swap map on a 10-dim knot state: swap leg columns, mirror y.

    An involution: applying it twice is the identity.
    """
    s = np.asarray(state, dtype=float)
    out = s.copy()
    out[1] = -s[1]
    out[4] = -s[4]
    out[6:8] = s[8:10]
    out[8:10] = s[6:8]
    return out


def defect(params, x_k, x_k1, u_k, u_k1, h, stance, footholds):
    """Trapezoidal defect between consecutive knots.

    ``stance`` lists the legs in contact over the interval ("left"/"right");
    ``footholds`` maps those names to 3D foot positions. Returns the 10-dim
    residual that collocation drives to zero.
    """
    if not h > 0.0:
        raise ValueError("interval duration must be positive")
    for name in stance:
        if name not in ("left", "right"):
            raise ValueError(f"unknown stance leg {name!r}")
        if name not in footholds:
            raise ValueError(f"missing foothold for stance leg {name!r}")

    def deriv(x, u):
        feet = []
        for name in stance:
            p = footholds[name]
            off = 6 if name == "left" else 8
            feet.append((p[0], p[1], p[2], x[off], x[off + 1]))
        ax, ay, az = body_accel_core(params, x[0], x[1], x[2], x[3], x[4], x[5], feet)
        return np.array([x[3], x[4], x[5], ax, ay, az, x[7], u[0], x[9], u[1]])

    x_k = np.asarray(x_k, dtype=float)
    x_k1 = np.asarray(x_k1, dtype=float)
    u_k = np.asarray(u_k, dtype=float)
    u_k1 = np.asarray(u_k1, dtype=float)
    return x_k1 - x_k - 0.5 * h * (deriv(x_k, u_k) + deriv(x_k1, u_k1))


@dataclass
class NlpLayout:
    """Index bookkeeping for the flat decision vector."""

    n_knots: int

    @property
    def n(self):
        return 12 * self.n_knots + 12

    def state_idx(self, knot, comp=0):
        return STATE_DIM * knot + comp

    def input_idx(self, knot, comp=0):
        return STATE_DIM * self.n_knots + INPUT_DIM * knot + comp

    @property
    def duration_idx(self):
        return 12 * self.n_knots

    @property
    def stride_idx(self):
        return 12 * self.n_knots + 2

    @property
    def foothold_idx(self):
        # order: p_left_0, p_right, p_left_land
        return 12 * self.n_knots + 3

    def pack(self, states, inputs, durations, stride, footholds):
        x = np.empty(self.n)
        x[: STATE_DIM * self.n_knots] = np.asarray(states, float).reshape(-1)
        x[STATE_DIM * self.n_knots : 12 * self.n_knots] = np.asarray(inputs, float).reshape(-1)
        x[self.duration_idx : self.duration_idx + 2] = durations
        x[self.stride_idx] = stride
        x[self.foothold_idx :] = np.asarray(footholds, float).reshape(-1)
        return x

    def unpack(self, x):
        x = np.asarray(x, dtype=float)
        states = x[: STATE_DIM * self.n_knots].reshape(self.n_knots, STATE_DIM)
        inputs = x[STATE_DIM * self.n_knots : 12 * self.n_knots].reshape(self.n_knots, INPUT_DIM)
        durations = x[self.duration_idx : self.duration_idx + 2]
        stride = float(x[self.stride_idx])
        footholds = x[self.foothold_idx :].reshape(3, 3)
        return states, inputs, durations, stride, footholds


def _batched_duals(columns, seeds, ntan):
    """Dual scalars over a knot batch; ``seeds`` gives each column's tangent slot."""
    k = columns[0].shape[0]
    out = []
    for col, slot in zip(columns, seeds):
        tan = np.zeros((k, ntan))
        if slot is not None:
            tan[:, slot] = 1.0
        out.append(ad.Dual(col.copy(), tan))
    return out


class GaitNlp:
    """Nonlinear program for one periodic step at a target average speed."""

    # tangent slots for the per-knot acceleration derivative
    _NTAN_ACC = 16  # r(3) v(3) dL dLd dR dRd pL(3) pR(3)
    _NTAN_LEG = 11  # r(3) v(3) d d_dot p(3)

    def __init__(self, params, target_speed, schedule, extension_bounds=(0.55, 0.95),
                 u_max=50.0, grf_margin=1e-4):
        if target_speed < 0.0:
            raise ValueError("target speed must be nonnegative")
        lmin, lmax = extension_bounds
        if not (0.0 < lmin < lmax):
            raise ValueError("extension bounds must satisfy 0 < min < max")
        if u_max <= 0.0:
            raise ValueError("actuator bound must be positive")
        stride_ub = 3.0
        if target_speed * 2.0 * schedule.duration_min > stride_ub:
            raise ValueError(
                f"target speed {target_speed} needs a stride beyond the bound {stride_ub}"
            )

        self.params = params
        self.target_speed = float(target_speed)
        self.schedule = schedule
        self.lmin, self.lmax = float(lmin), float(lmax)
        self.u_max = float(u_max)
        self.grf_margin = float(grf_margin)
        self.grf_rate_gain = params.b / params.k   # scales the damper term of F/k

        self.layout = NlpLayout(schedule.n_knots)
        kk = self.layout.n_knots
        nd = schedule.knots_double
        # intervals as (knot, phase): phase 0 = double stance, 1 = single
        self.intervals = [(k, 0 if k <= nd - 2 else 1) for k in range(kk - 1)]
        self.phase_intervals = (nd - 1, schedule.knots_single - 1)
        self.left_stance_knots = np.arange(0, nd)
        self.right_stance_knots = np.arange(0, kk)

        self._linear_matrix = self._build_linear_block()
        self.lb, self.ub = self._build_bounds()
        self._cache_key = None
        self._cache = None

    # -- construction ---------------------------------------------------
    def _build_linear_block(self):
        lay = self.layout
        kk = lay.n_knots
        rows = np.zeros((15, lay.n))
        last = kk - 1
        # periodicity: state(T) - swap(state(0)) - stride * e_x = 0
        swap_cols = [0, 1, 2, 3, 4, 5, 8, 9, 6, 7]
        swap_sign = [1, -1, 1, 1, -1, 1, 1, 1, 1, 1]
        for j in range(STATE_DIM):
            rows[j, lay.state_idx(last, j)] = 1.0
            rows[j, lay.state_idx(0, swap_cols[j])] = -swap_sign[j]
            if j == 0:
                rows[j, lay.stride_idx] = -1.0
        # foothold chaining under the same shift-and-mirror map
        fh = lay.foothold_idx
        pl0, pr0, pl1 = fh, fh + 3, fh + 6
        rows[10, pr0 + 0] = 1.0
        rows[10, pl0 + 0] = -1.0
        rows[10, lay.stride_idx] = -1.0
        rows[11, pr0 + 1] = 1.0
        rows[11, pl0 + 1] = 1.0
        rows[12, pl1 + 0] = 1.0
        rows[12, pr0 + 0] = -1.0
        rows[12, lay.stride_idx] = -1.0
        rows[13, pl1 + 1] = 1.0
        rows[13, pr0 + 1] = 1.0
        # average forward speed: stride = v_target * (T_ds + T_ss)
        rows[14, lay.stride_idx] = 1.0
        rows[14, lay.duration_idx] = -self.target_speed
        rows[14, lay.duration_idx + 1] = -self.target_speed
        return rows

    def _build_bounds(self):
        lay = self.layout
        lb = np.full(lay.n, -np.inf)
        ub = np.full(lay.n, np.inf)
        for k in range(lay.n_knots):
            i = lay.state_idx(k)
            lb[i + 0], ub[i + 0] = -10.0, 10.0
            lb[i + 1], ub[i + 1] = -2.0, 2.0
            lb[i + 2], ub[i + 2] = 0.3, 1.6
            lb[i + 3 : i + 6] = -8.0
            ub[i + 3 : i + 6] = 8.0
            for leg_off in (6, 8):
                lb[i + leg_off], ub[i + leg_off] = self.lmin, self.lmax
                lb[i + leg_off + 1], ub[i + leg_off + 1] = -5.0, 5.0
            j = lay.input_idx(k)
            lb[j : j + 2], ub[j : j + 2] = -self.u_max, self.u_max
        # pin the horizontal origin: removes the x-translation null direction
        lb[lay.state_idx(0, 0)] = ub[lay.state_idx(0, 0)] = 0.0
        d = lay.duration_idx
        lb[d : d + 2] = self.schedule.duration_min
        ub[d : d + 2] = self.schedule.duration_max
        lb[lay.stride_idx], ub[lay.stride_idx] = 0.0, 3.0
        fh = lay.foothold_idx
        for f in range(3):
            lb[fh + 3 * f + 0], ub[fh + 3 * f + 0] = -10.0, 10.0
            lb[fh + 3 * f + 1], ub[fh + 3 * f + 1] = -1.0, 1.0
            lb[fh + 3 * f + 2] = ub[fh + 3 * f + 2] = 0.0   # ground plane
        return lb, ub

    def constraint_counts(self):
        nd = self.schedule.knots_double
        kk = self.layout.n_knots
        return {
            "defect": STATE_DIM * (kk - 1),
            "periodicity": STATE_DIM,
            "foothold_links": 4,
            "speed": 1,
            "leg_length": 2 * (nd + kk),
            "grf": nd + kk,
        }

    @property
    def n_eq(self):
        c = self.constraint_counts()
        return c["defect"] + c["periodicity"] + c["foothold_links"] + c["speed"]

    @property
    def n_ineq(self):
        c = self.constraint_counts()
        return c["leg_length"] + c["grf"]

    # -- evaluation -----------------------------------------------------
    def _accel_batch(self, states, p_left, p_right, with_left, with_right):
        """Accelerations and derivatives at a knot block for one contact mode.

        Returns (acc (K,3), jac (K,3,16)); tangent slots are state components
        0..9 then left foothold 10..12 then right foothold 13..15.
        """
        kb = states.shape[0]
        cols = [states[:, j] for j in range(STATE_DIM)]
        seeds = list(range(STATE_DIM))
        duals = _batched_duals(cols, seeds, self._NTAN_ACC)
        feet_duals = {}
        for name, p, base in (("left", p_left, 10), ("right", p_right, 13)):
            comps = _batched_duals(
                [np.full(kb, p[0]), np.full(kb, p[1]), np.full(kb, p[2])],
                [base, base + 1, base + 2],
                self._NTAN_ACC,
            )
            feet_duals[name] = comps
        stance = []
        if with_left:
            stance.append((*feet_duals["left"], duals[6], duals[7]))
        if with_right:
            stance.append((*feet_duals["right"], duals[8], duals[9]))
        ax, ay, az = body_accel_core(
            self.params, duals[0], duals[1], duals[2], duals[3], duals[4], duals[5], stance
        )
        acc = np.stack([ax.val, ay.val, az.val], axis=1)
        jac = np.stack([ax.tan, ay.tan, az.tan], axis=1)
        return acc, jac

    def _leg_constraint_batch(self, states, knots, leg, foothold):
        """Length and scaled-spring-force values/derivatives at stance knots.

        Tangent slots: r(0..2) v(3..5) d(6) d_dot(7) p(8..10).
        """
        sub = states[knots]
        off = 6 if leg == "left" else 8
        cols = [sub[:, j] for j in range(6)] + [sub[:, off], sub[:, off + 1]]
        duals = _batched_duals(cols, list(range(8)), self._NTAN_LEG)
        kb = sub.shape[0]
        p = _batched_duals(
            [np.full(kb, foothold[0]), np.full(kb, foothold[1]), np.full(kb, foothold[2])],
            [8, 9, 10],
            self._NTAN_LEG,
        )
        l, l_dot, *_ = leg_geometry_core(*duals[:6], p[0], p[1], p[2])
        f_scaled = (duals[6] - l) + self.grf_rate_gain * (duals[7] - l_dot)
        return l, f_scaled

    def _scatter_leg_jac(self, jac_rows, row0, knots, leg, tan_block, sign=1.0):
        """Scatter one batched leg-quantity tangent into the big Jacobian."""
        lay = self.layout
        off = 6 if leg == "left" else 8
        fh = lay.foothold_idx + (0 if leg == "left" else 3)
        for i, k in enumerate(knots):
            row = row0 + 3 * i
            base = lay.state_idx(k)
            cols = list(range(base, base + 6)) + [base + off, base + off + 1] + \
                list(range(fh, fh + 3))
            jac_rows[row, cols] += sign * tan_block[i]

    def _evaluate(self, x):
        key = x.tobytes()
        if key == self._cache_key:
            return self._cache
        states, inputs, durations, stride, feet = self.layout.unpack(x)
        lay = self.layout
        kk = lay.n_knots
        nd = self.schedule.knots_double
        p_left, p_right = feet[0], feet[1]
        n_def = STATE_DIM * (kk - 1)

        # objective: trapezoidal quadrature of uL^2 + uR^2 over both phases
        q = inputs[:, 0] ** 2 + inputs[:, 1] ** 2
        obj = 0.0
        grad = np.zeros(lay.n)
        for ph, (a, b) in enumerate(((0, nd - 1), (nd - 1, kk - 1))):
            nint = b - a
            t_ph = durations[ph]
            h = t_ph / nint
            w = np.ones(nint + 1)
            w[0] = w[-1] = 0.5
            phase_cost = h * float(w @ q[a : b + 1])
            obj += phase_cost
            for i, k in enumerate(range(a, b + 1)):
                j = lay.input_idx(k)
                grad[j] += h * w[i] * 2.0 * inputs[k, 0]
                grad[j + 1] += h * w[i] * 2.0 * inputs[k, 1]
            grad[lay.duration_idx + ph] += phase_cost / t_ph

        # per-knot accelerations for each contact mode
        acc_ds, jac_ds = self._accel_batch(states[:nd], p_left, p_right, True, True)
        acc_ss, jac_ss = self._accel_batch(states[nd - 1 :], p_left, p_right, False, True)

        def knot_acc(k, phase):
            if phase == 0:
                return acc_ds[k], jac_ds[k]
            return acc_ss[k - (nd - 1)], jac_ss[k - (nd - 1)]

        c_eq = np.zeros(self.n_eq)
        j_eq = np.zeros((self.n_eq, lay.n))
        for k, phase in self.intervals:
            nint = self.phase_intervals[phase]
            t_ph = durations[phase]
            h = t_ph / nint
            row = STATE_DIM * k
            xa, xb = states[k], states[k + 1]
            ua, ub_ = inputs[k], inputs[k + 1]
            a0, ja0 = knot_acc(k, phase)
            a1, ja1 = knot_acc(k + 1, phase)

            fa = np.array([xa[3], xa[4], xa[5], a0[0], a0[1], a0[2], xa[7], ua[0], xa[9], ua[1]])
            fb = np.array([xb[3], xb[4], xb[5], a1[0], a1[1], a1[2], xb[7], ub_[0], xb[9], ub_[1]])
            c_eq[row : row + STATE_DIM] = xb - xa - 0.5 * h * (fa + fb)

            ia, ib = lay.state_idx(k), lay.state_idx(k + 1)
            # identity and velocity coupling blocks
            for j in range(STATE_DIM):
                j_eq[row + j, ia + j] += -1.0
                j_eq[row + j, ib + j] += 1.0
            for j in range(3):
                j_eq[row + j, ia + 3 + j] += -0.5 * h
                j_eq[row + j, ib + 3 + j] += -0.5 * h
            # acceleration rows pick up the dynamics jacobians
            fh = lay.foothold_idx
            for j in range(3):
                r = row + 3 + j
                j_eq[r, ia : ia + STATE_DIM] += -0.5 * h * ja0[j, :STATE_DIM]
                j_eq[r, ib : ib + STATE_DIM] += -0.5 * h * ja1[j, :STATE_DIM]
                j_eq[r, fh : fh + 3] += -0.5 * h * (ja0[j, 10:13] + ja1[j, 10:13])
                j_eq[r, fh + 3 : fh + 6] += -0.5 * h * (ja0[j, 13:16] + ja1[j, 13:16])
            # setpoint chains
            j_eq[row + 6, ia + 7] += -0.5 * h
            j_eq[row + 6, ib + 7] += -0.5 * h
            j_eq[row + 8, ia + 9] += -0.5 * h
            j_eq[row + 8, ib + 9] += -0.5 * h
            ja_u, jb_u = lay.input_idx(k), lay.input_idx(k + 1)
            j_eq[row + 7, ja_u] += -0.5 * h
            j_eq[row + 7, jb_u] += -0.5 * h
            j_eq[row + 9, ja_u + 1] += -0.5 * h
            j_eq[row + 9, jb_u + 1] += -0.5 * h
            # step length depends on the phase duration
            j_eq[row : row + STATE_DIM, lay.duration_idx + phase] += -(fa + fb) / (2.0 * nint)

        c_eq[n_def:] = self._linear_matrix @ x
        j_eq[n_def:] = self._linear_matrix

        # inequalities: extension bounds and unilateral spring force
        g = np.zeros(self.n_ineq)
        j_g = np.zeros((self.n_ineq, lay.n))
        row0 = 0
        for leg, knots, foothold in (
            ("left", self.left_stance_knots, p_left),
            ("right", self.right_stance_knots, p_right),
        ):
            l, f_scaled = self._leg_constraint_batch(states, knots, leg, foothold)
            nb = len(knots)
            rows = row0 + 3 * np.arange(nb)
            g[rows] = l.val - self.lmin
            g[rows + 1] = self.lmax - l.val
            g[rows + 2] = f_scaled.val - self.grf_margin
            self._scatter_leg_jac(j_g, row0 + 0, knots, leg, l.tan)
            self._scatter_leg_jac(j_g, row0 + 1, knots, leg, l.tan, sign=-1.0)
            self._scatter_leg_jac(j_g, row0 + 2, knots, leg, f_scaled.tan)
            row0 += 3 * nb

        bundle = (obj, grad, c_eq, j_eq, g, j_g)
        self._cache_key, self._cache = key, bundle
        return bundle

    # -- NlpProblem surface ----------------------------------------------
    def objective(self, x):
        return self._evaluate(np.asarray(x, float))[0]

    def gradient(self, x):
        return self._evaluate(np.asarray(x, float))[1]

    def eq_constraints(self, x):
        return self._evaluate(np.asarray(x, float))[2]

    def eq_jacobian(self, x):
        return self._evaluate(np.asarray(x, float))[3]

    def ineq_constraints(self, x):
        return self._evaluate(np.asarray(x, float))[4]

    def ineq_jacobian(self, x):
        return self._evaluate(np.asarray(x, float))[5]

    def as_problem(self):
        return NlpProblem(
            n=self.layout.n,
            objective=self.objective,
            gradient=self.gradient,
            eq=self.eq_constraints,
            eq_jac=self.eq_jacobian,
            ineq=self.ineq_constraints,
            ineq_jac=self.ineq_jacobian,
            lb=self.lb,
            ub=self.ub,
        )

    def audit(self, x):
        """Grouped max constraint violations at x (independent of the solver)."""
        x = np.asarray(x, dtype=float)
        c = self.eq_constraints(x)
        g = self.ineq_constraints(x)
        counts = self.constraint_counts()
        n_def = counts["defect"]
        n_len = counts["leg_length"]
        eq_rest = np.abs(c[n_def:])
        g_viol = np.maximum(0.0, -g)
        # inequality rows interleave [length lo, length hi, grf] per knot
        len_rows = np.zeros(len(g), dtype=bool)
        len_rows[0::3] = True
        len_rows[1::3] = True
        assert len_rows.sum() == n_len
        return {
            "defect": float(np.max(np.abs(c[:n_def]))),
            "linear": float(np.max(eq_rest)),
            "leg_length": float(np.max(g_viol[len_rows])) if n_len else 0.0,
            "grf": float(np.max(g_viol[~len_rows])),
            "bounds": float(np.max(np.maximum(x - self.ub, self.lb - x).clip(min=0.0))),
            "max": max(float(np.max(np.abs(c))), float(np.max(g_viol))),
        }

    # -- starting point ---------------------------------------------------
    def initial_guess(self, body_height=0.85, step_width=0.1, vault_amplitude=0.025):
        """Vault-seeded start: height dips mid double stance, peaks mid swing.

        Seeding the vaulting branch matters: a flat-height start converges to
        a near-passive local optimum with a single-hump stance force profile,
        while the vaulting basin both reproduces the classic spring-mass
        walking force shape and reaches a lower actuation cost.
        """
        lay = self.layout
        kk = lay.n_knots
        nd = self.schedule.knots_double
        t_ds, t_ss = 0.15, 0.35
        t_ds = min(max(t_ds, self.schedule.duration_min), self.schedule.duration_max)
        t_ss = min(max(t_ss, self.schedule.duration_min), self.schedule.duration_max)
        total = t_ds + t_ss
        stride = self.target_speed * total

        times = np.concatenate([
            np.linspace(0.0, t_ds, nd),
            t_ds + np.linspace(0.0, t_ss, self.schedule.knots_single)[1:],
        ])
        p_left = np.array([-0.5 * stride, step_width, 0.0])
        p_right = np.array([0.5 * stride, -step_width, 0.0])
        p_land = np.array([1.5 * stride, step_width, 0.0])
        feet = np.stack([p_left, p_right, p_land])

        states = np.zeros((kk, STATE_DIM))
        states[:, 0] = self.target_speed * times
        states[:, 3] = self.target_speed
        cos_arg = np.where(
            times < t_ds,
            np.pi * (times - 0.5 * t_ds) / t_ds,
            np.pi * (times - t_ds - 0.5 * t_ss) / t_ss + np.pi,
        )
        states[:, 2] = body_height - vault_amplitude * np.cos(cos_arg)
        states[:, 5] = np.gradient(states[:, 2], times)
        defl = self.params.m * self.params.g / (2.0 * self.params.k)
        for k in range(kk):
            r = states[k, :3]
            states[k, 8] = np.clip(np.linalg.norm(r - p_right) + defl, self.lmin, self.lmax)
            if k < nd:
                states[k, 6] = np.clip(np.linalg.norm(r - p_left) + defl, self.lmin, self.lmax)
        # swinging left leg: ramp its setpoint toward the post-swap target
        states[nd:, 6] = np.linspace(states[nd - 1, 6], states[0, 8], kk - nd + 1)[1:]
        states[1:, 7] = np.diff(states[:, 6]) / np.diff(times)
        states[1:, 9] = np.diff(states[:, 8]) / np.diff(times)

        inputs = np.zeros((kk, INPUT_DIM))
        x0 = lay.pack(states, inputs, np.array([t_ds, t_ss]), stride, feet)
        return np.clip(x0, self.lb, self.ub)


def build_gait_nlp(params, target_speed, schedule=None, extension_bounds=(0.55, 0.95),
                   u_max=50.0, grf_margin=1e-4):
    """Construct the gait NLP; raises on infeasible bound combinations."""
    return GaitNlp(
        params=params,
        target_speed=target_speed,
        schedule=schedule or ContactSchedule(),
        extension_bounds=extension_bounds,
        u_max=u_max,
        grf_margin=grf_margin,
    )


def shift_guess_to_speed(nlp, x_prev, prev_speed):
    """Retarget a neighboring-speed solution as a warm start.

    Adds the speed delta to the body motion and rechains the footholds so the
    average-speed equality holds at the start point. Without this, a raw warm
    start satisfies the new speed constraint most cheaply by shrinking the
    phase durations, and the sweep drifts into a degenerate short-period gait.
    """
    states, inputs, durations, _, feet = nlp.layout.unpack(np.asarray(x_prev, float).copy())
    nd = nlp.schedule.knots_double
    t_ds, t_ss = durations
    times = np.concatenate([
        np.linspace(0.0, t_ds, nd),
        t_ds + np.linspace(0.0, t_ss, nlp.schedule.knots_single)[1:],
    ])
    dv = nlp.target_speed - prev_speed
    states[:, 0] += dv * times
    states[:, 3] += dv
    stride = nlp.target_speed * (t_ds + t_ss)
    feet = feet.copy()
    feet[1, 0] = feet[0, 0] + stride
    feet[2, 0] = feet[1, 0] + stride
    feet[2, 1] = feet[0, 1]
    x = nlp.layout.pack(states, inputs, durations, stride, feet)
    return np.clip(x, nlp.lb, nlp.ub)


def objective(nlp, x):
    """Energetic cost of a decision vector (trapezoidal integral of u^2)."""
    return nlp.objective(x)

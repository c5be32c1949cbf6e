import numpy as np
import pytest

from slipgait.model import ModelParams
from slipgait.transcription import (
    ContactSchedule,
    build_gait_nlp,
    defect,
    swap_legs,
)

PARAMS = ModelParams()


def vertical_arc_state(t, f0):
    """Closed-form vertical single-stance motion with constant spring force f0.

    Setpoint tracks the leg length offset by f0/k, so the axial force stays
    exactly f0 and the body acceleration is constant: states are polynomials
    of degree <= 2 and the trapezoid rule is exact.
    """
    z0, v0 = 1.0, 0.1
    a = f0 / PARAMS.m - PARAMS.g
    z = z0 + v0 * t + 0.5 * a * t * t
    vz = v0 + a * t
    d = z + f0 / PARAMS.k
    x = np.zeros(10)
    x[2], x[5] = z, vz
    x[8], x[9] = d, vz
    x[6], x[7] = 0.8, 0.0          # idle swing-leg setpoint
    u = np.array([0.0, a])          # d_ddot equals the body acceleration
    return x, u


class TestDefect:
    FOOTHOLDS = {"right": np.zeros(3)}

    def test_zero_for_constant_derivative_motion(self):
        # force balancing gravity: all states linear in time
        f0 = PARAMS.m * PARAMS.g
        h = 0.05
        x0, u0 = vertical_arc_state(0.0, f0)
        x1, u1 = vertical_arc_state(h, f0)
        res = defect(PARAMS, x0, x1, u0, u1, h, ["right"], self.FOOTHOLDS)
        assert np.max(np.abs(res)) < 1e-12

    def test_exact_for_quadratic_ballistic_like_segment(self):
        # constant nonzero acceleration: quadratic positions, linear velocities
        f0 = 120.0
        h = 0.04
        x0, u0 = vertical_arc_state(0.0, f0)
        x1, u1 = vertical_arc_state(h, f0)
        res = defect(PARAMS, x0, x1, u0, u1, h, ["right"], self.FOOTHOLDS)
        assert np.max(np.abs(res[:3])) < 1e-12    # position rows
        assert np.max(np.abs(res[3:6])) < 1e-12   # velocity rows
        assert np.max(np.abs(res)) < 1e-12

    def test_third_order_decay_on_smooth_stance_arc(self):
        from slipgait.model import AslipState, LegInput, LegState, Phase
        from slipgait.simenv import integrate

        def u_of_t(t):
            return LegInput(u_left=0.0, u_right=6.0 * np.sin(7.0 * t))

        leg = LegState(foothold=np.zeros(3), d=0.93, d_dot=0.0, in_contact=True)
        swing = LegState(foothold=np.array([0.1, 0, 0.05]), d=0.8, d_dot=0.0, in_contact=False)
        state = AslipState(r=np.array([0.02, 0.01, 0.9]), v=np.array([0.2, 0.0, 0.1]),
                           left=swing, right=leg, phase=Phase.SINGLE_STANCE_RIGHT)

        dt_fine = 2e-6
        horizon = 0.012
        n = int(round(horizon / dt_fine))
        traj = {}
        record_at = {round(h / dt_fine) for h in (0.0, 0.003, 0.005, 0.008, 0.012)}
        traj[0.0] = (state, 0.0)
        s = state
        for i in range(n):
            s = integrate(PARAMS, s, u_of_t(i * dt_fine), dt_fine)
            if (i + 1) in record_at:
                traj[round((i + 1) * dt_fine, 9)] = (s, (i + 1) * dt_fine)

        def flat(st):
            return np.array([*st.r, *st.v, st.left.d, st.left.d_dot,
                             st.right.d, st.right.d_dot])

        hs, norms = [], []
        for h in (0.003, 0.005, 0.008, 0.012):
            s1, t1 = traj[h]
            res = defect(
                PARAMS, flat(state), flat(s1),
                [0.0, u_of_t(0.0).u_right], [0.0, u_of_t(t1).u_right],
                h, ["right"], self.FOOTHOLDS,
            )
            hs.append(h)
            norms.append(np.linalg.norm(res))
        slope = np.polyfit(np.log(hs), np.log(norms), 1)[0]
        assert 2.7 < slope < 3.3

    def test_invalid_pairing_rejected(self):
        x = np.zeros(10)
        with pytest.raises(ValueError):
            defect(PARAMS, x, x, [0, 0], [0, 0], -0.1, ["right"], self.FOOTHOLDS)
        with pytest.raises(ValueError):
            defect(PARAMS, x, x, [0, 0], [0, 0], 0.1, ["middle"], self.FOOTHOLDS)
        with pytest.raises(ValueError):
            defect(PARAMS, x, x, [0, 0], [0, 0], 0.1, ["left"], self.FOOTHOLDS)


class TestSwapMap:
    def test_involution(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            x = rng.normal(size=10)
            assert np.array_equal(swap_legs(swap_legs(x)), x)

    def test_swaps_legs_and_mirrors_lateral(self):
        x = np.arange(10.0)
        s = swap_legs(x)
        assert s[1] == -x[1] and s[4] == -x[4]
        assert np.array_equal(s[6:8], x[8:10])
        assert np.array_equal(s[8:10], x[6:8])


class TestObjective:
    def test_zero_inputs_zero_cost(self):
        nlp = build_gait_nlp(PARAMS, 0.5)
        x = nlp.initial_guess()
        assert nlp.objective(x) == 0.0

    def test_constant_unit_inputs_over_one_second(self):
        nlp = build_gait_nlp(PARAMS, 0.5)
        states, inputs, _, stride, feet = nlp.layout.unpack(nlp.initial_guess())
        inputs[:] = 1.0
        x = nlp.layout.pack(states, inputs, np.array([0.5, 0.5]), stride, feet)
        assert nlp.objective(x) == pytest.approx(2.0, abs=1e-12)

    def test_quadratic_homogeneity(self):
        nlp = build_gait_nlp(PARAMS, 0.5)
        rng = np.random.default_rng(0)
        states, inputs, dur, stride, feet = nlp.layout.unpack(nlp.initial_guess())
        inputs[:] = rng.normal(size=inputs.shape)
        x1 = nlp.layout.pack(states, inputs, dur, stride, feet)
        x2 = nlp.layout.pack(states, 2.0 * inputs, dur, stride, feet)
        assert nlp.objective(x2) == pytest.approx(4.0 * nlp.objective(x1), rel=1e-12)


class TestLayout:
    def test_pack_unpack_round_trip(self):
        nlp = build_gait_nlp(PARAMS, 0.7)
        rng = np.random.default_rng(4)
        x = rng.normal(size=nlp.layout.n)
        parts = nlp.layout.unpack(x)
        assert np.array_equal(nlp.layout.pack(*parts), x)

    def test_constraint_count_audit(self):
        sched = ContactSchedule(knots_double=4, knots_single=6)
        nlp = build_gait_nlp(PARAMS, 0.5, sched)
        kk = 4 + 6 - 1
        counts = nlp.constraint_counts()
        assert counts["defect"] == 10 * (kk - 1)
        assert counts["periodicity"] == 10
        assert counts["speed"] == 1
        x = nlp.initial_guess()
        assert nlp.eq_constraints(x).size == counts["defect"] + 10 + 4 + 1
        assert nlp.ineq_constraints(x).size == counts["leg_length"] + counts["grf"]

    def test_infeasible_construction_rejected(self):
        with pytest.raises(ValueError):
            build_gait_nlp(PARAMS, -0.1)
        with pytest.raises(ValueError):
            build_gait_nlp(PARAMS, 0.5, extension_bounds=(0.9, 0.6))
        with pytest.raises(ValueError):
            ContactSchedule(knots_double=1)
        with pytest.raises(ValueError):
            ContactSchedule(duration_min=0.5, duration_max=0.2)
        with pytest.raises(ValueError):
            build_gait_nlp(PARAMS, 40.0)


class TestDerivatives:
    @staticmethod
    def random_interior_point(nlp, seed):
        rng = np.random.default_rng(seed)
        x = nlp.initial_guess()
        span = np.where(np.isfinite(nlp.ub - nlp.lb), nlp.ub - nlp.lb, 1.0)
        x = x + 0.02 * span * rng.uniform(-1, 1, size=x.size)
        pad = 1e-3 * np.minimum(span, 1.0)
        return np.clip(x, nlp.lb + pad, nlp.ub - pad)

    def test_gradient_and_jacobians_match_central_differences(self):
        sched = ContactSchedule(knots_double=3, knots_single=4)
        nlp = build_gait_nlp(PARAMS, 0.6, sched)
        x = self.random_interior_point(nlp, 9)
        eps = 1e-6

        grad = nlp.gradient(x)
        j_eq = nlp.eq_jacobian(x)
        j_g = nlp.ineq_jacobian(x)
        fd_grad = np.zeros_like(grad)
        fd_eq = np.zeros_like(j_eq)
        fd_g = np.zeros_like(j_g)
        for i in range(x.size):
            hi, lo = x.copy(), x.copy()
            hi[i] += eps
            lo[i] -= eps
            fd_grad[i] = (nlp.objective(hi) - nlp.objective(lo)) / (2 * eps)
            fd_eq[:, i] = (nlp.eq_constraints(hi) - nlp.eq_constraints(lo)) / (2 * eps)
            fd_g[:, i] = (nlp.ineq_constraints(hi) - nlp.ineq_constraints(lo)) / (2 * eps)

        scale = max(1.0, np.max(np.abs(fd_grad)))
        assert np.max(np.abs(grad - fd_grad)) / scale < 1e-6
        scale = max(1.0, np.max(np.abs(fd_eq)))
        assert np.max(np.abs(j_eq - fd_eq)) / scale < 1e-6
        scale = max(1.0, np.max(np.abs(fd_g)))
        assert np.max(np.abs(j_g - fd_g)) / scale < 1e-6

    def test_internal_defects_match_standalone_op(self):
        sched = ContactSchedule(knots_double=3, knots_single=4)
        nlp = build_gait_nlp(PARAMS, 0.6, sched)
        x = self.random_interior_point(nlp, 21)
        states, inputs, durations, _, feet = nlp.layout.unpack(x)
        c = nlp.eq_constraints(x)
        feet_map = {"left": feet[0], "right": feet[1]}
        for k, phase in nlp.intervals:
            h = durations[phase] / nlp.phase_intervals[phase]
            stance = ["left", "right"] if phase == 0 else ["right"]
            res = defect(PARAMS, states[k], states[k + 1], inputs[k], inputs[k + 1],
                         h, stance, feet_map)
            assert np.allclose(c[10 * k : 10 * k + 10], res, atol=1e-12)

import json

import numpy as np
import pytest
from scipy.linalg import null_space

from slipgait.library import (
    LABEL_DOUBLE,
    LABEL_SINGLE,
    GaitLibrary,
    LibraryError,
    advance_clock,
    audit_library,
    blend_gaits,
    build_library,
    gait_from_solution,
    interp_frame,
    library_to_dict,
    load,
    sample,
    save,
)
from slipgait.model import ModelParams
from slipgait.solver import SolverOptions


class TestAdvanceClock:
    def test_full_period_is_identity(self):
        assert advance_clock(0.37, 0.5, 0.5) == pytest.approx(0.37)

    def test_wraparound(self):
        assert advance_clock(0.9, 0.2 * 0.7, 0.7) == pytest.approx(0.1)

    def test_accumulation_over_one_second(self):
        phase = 0.25
        for _ in range(33):
            phase = advance_clock(phase, 1.0 / 33.0, 1.0)
        assert abs(phase - 0.25) < 1e-12

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            advance_clock(0.0, -0.1, 1.0)
        with pytest.raises(ValueError):
            advance_clock(0.0, 0.1, 0.0)


class TestGaitInvariants:
    def test_built_gaits_validate(self, mini_library):
        for gait in mini_library.gaits:
            gait.validate()
            assert gait.n_samples == 201
            assert gait.stance_label[0] == LABEL_DOUBLE
            assert gait.stance_label[-1] == LABEL_SINGLE

    def test_swing_apex_exact(self, mini_library):
        for gait in mini_library.gaits:
            assert gait.swing_apex == pytest.approx(0.2, abs=1e-12)
            assert gait.foot_pos_left[:, 2].max() <= 0.2 + 1e-9
            assert gait.foot_pos_left[:, 2].max() >= 0.2 - 1e-4

    def test_grf_unilateral(self, mini_library):
        for gait in mini_library.gaits:
            assert gait.grf_left[:, 2].min() >= -1e-8
            assert gait.grf_right[:, 2].min() >= -1e-8

    def test_mean_velocity_matches_target(self, mini_library):
        for gait in mini_library.gaits:
            mean_v = (gait.body_pos[-1, 0] - gait.body_pos[0, 0]) / gait.period
            assert abs(mean_v - gait.speed) < 1e-3

    def test_stride_monotonicity_audit(self, mini_library):
        assert audit_library(mini_library) == []

    def test_cost_never_drops_along_feasible_directions(self, gait_solution):
        nlp, report = gait_solution
        x = report.x
        f0 = nlp.objective(x)
        jac_eq = nlp.eq_jacobian(x)
        g = nlp.ineq_constraints(x)
        jac_g = nlp.ineq_jacobian(x)
        active_rows = [jac_eq]
        tight = g < 1e-6
        if np.any(tight):
            active_rows.append(jac_g[tight])
        at_bound = (x - nlp.lb < 1e-9) | (nlp.ub - x < 1e-9)
        bound_rows = np.eye(x.size)[at_bound]
        if bound_rows.size:
            active_rows.append(bound_rows)
        basis = null_space(np.vstack(active_rows))
        assert basis.shape[1] > 0
        rng = np.random.default_rng(31)
        eps = 1e-4
        for _ in range(40):
            d = basis @ rng.normal(size=basis.shape[1])
            d /= np.linalg.norm(d)
            for sgn in (1.0, -1.0):
                f1 = nlp.objective(x + sgn * eps * d)
                assert f1 >= f0 - (1e-9 + 10.0 * eps**2)


class TestSampling:
    def test_grid_speed_phase_zero_matches_stored(self, mini_library):
        gait = mini_library.entry(0.4)
        frame = sample(mini_library, 0.4, 0.0)
        assert np.array_equal(frame.body_pos, gait.body_pos[0])
        assert np.array_equal(frame.foot_pos_left, gait.foot_pos_left[0])
        assert np.array_equal(frame.baseline_angles, gait.baseline_angles[0])
        assert not frame.speed_clamped

    def test_midpoint_speed_blends_entries(self, mini_library):
        lo, hi = mini_library.gaits
        frame = sample(mini_library, 0.35, 0.0)
        assert np.allclose(frame.body_pos, 0.5 * (lo.body_pos[0] + hi.body_pos[0]))
        assert np.allclose(frame.body_vel, 0.5 * (lo.body_vel[0] + hi.body_vel[0]))
        assert np.allclose(frame.foot_pos_right,
                           0.5 * (lo.foot_pos_right[0] + hi.foot_pos_right[0]))
        blend = blend_gaits(mini_library, 0.35)
        assert blend.period == pytest.approx(0.5 * (lo.period + hi.period))

    def test_phase_interpolation_between_samples(self, mini_library):
        gait = mini_library.entry(0.3)
        n = gait.n_samples
        phase = 2.5 / (n - 1)
        frame = sample(mini_library, 0.3, phase)
        want = 0.5 * (gait.body_pos[2] + gait.body_pos[3])
        assert np.allclose(frame.body_pos, want, atol=1e-12)

    def test_wrap_continuous_under_leg_swap(self, mini_library):
        blend = blend_gaits(mini_library, 0.4)
        end = interp_frame(blend, 1.0 - 1e-12)
        start = interp_frame(blend, 0.0)
        mirror = np.array([1, -1, 1])
        assert np.allclose(end.body_pos, start.body_pos * mirror + [blend.stride, 0, 0],
                           atol=1e-5)
        assert np.allclose(end.body_vel, start.body_vel * mirror, atol=1e-5)
        # the landing left foot maps onto the fresh right foothold
        assert np.allclose(end.foot_pos_left,
                           start.foot_pos_right * mirror + [blend.stride, 0, 0], atol=1e-5)

    def test_out_of_range_speed_clamped_and_flagged(self, mini_library):
        frame = sample(mini_library, 0.9, 0.25)
        on_grid = sample(mini_library, 0.4, 0.25)
        assert frame.speed_clamped
        assert np.array_equal(frame.body_pos, on_grid.body_pos)

    def test_reference_continuous_in_commanded_speed(self, mini_library):
        eps = 1e-4
        f1 = sample(mini_library, 0.35, 0.4)
        f2 = sample(mini_library, 0.35 + eps, 0.4)
        delta = np.max(np.abs(f1.body_pos - f2.body_pos))
        assert delta < 50.0 * eps


class TestSerialization:
    def test_round_trip_bit_for_bit(self, mini_library, tmp_path):
        path = tmp_path / "lib.json"
        save(mini_library, path)
        loaded = load(path)
        assert loaded.fingerprint == mini_library.fingerprint
        for a, b in zip(mini_library.gaits, loaded.gaits):
            assert a.period == b.period and a.stride == b.stride
            assert np.array_equal(a.body_pos, b.body_pos)
            assert np.array_equal(a.setpoint_rate, b.setpoint_rate)
            assert np.array_equal(a.grf_right, b.grf_right)
            assert np.array_equal(a.baseline_angles, b.baseline_angles)

    def test_tampered_version_rejected(self, mini_library, tmp_path):
        path = tmp_path / "lib.json"
        save(mini_library, path)
        doc = json.loads(path.read_text())
        doc["format_version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(LibraryError, match="version"):
            load(path)

    def test_truncated_file_reports_offset(self, mini_library, tmp_path):
        path = tmp_path / "lib.json"
        save(mini_library, path)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) // 2])
        with pytest.raises(LibraryError, match="byte offset"):
            load(path)

    def test_fingerprint_mismatch_rejected(self, mini_library, tmp_path):
        path = tmp_path / "lib.json"
        save(mini_library, path)
        doc = json.loads(path.read_text())
        doc["model_params"]["m"] = 31.0
        path.write_text(json.dumps(doc))
        with pytest.raises(LibraryError, match="fingerprint"):
            load(path)

    def test_expected_params_checked(self, mini_library, tmp_path):
        path = tmp_path / "lib.json"
        save(mini_library, path)
        with pytest.raises(LibraryError, match="different model"):
            load(path, expected_params=ModelParams(m=29.0))


class TestBuild:
    def test_failure_reports_speed_identity(self, params):
        hopeless = SolverOptions(max_outer=1, max_inner=2)
        with pytest.raises(LibraryError, match="0.3"):
            build_library(params, speeds=[0.3], solver_options=hopeless)

    def test_library_level_validation(self, mini_library):
        with pytest.raises(LibraryError, match="increasing"):
            GaitLibrary(params=mini_library.params,
                        gaits=[mini_library.gaits[1], mini_library.gaits[0]]).validate()

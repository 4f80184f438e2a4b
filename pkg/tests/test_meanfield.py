import json
import math

import numpy as np
import pytest

from qwcavity import (
    Frame,
    GridError,
    MeanFieldState,
    PostPulseOracle,
    ValidationError,
    adiabatic_field,
    instantaneous_frequency,
    integrate,
    oracle_from_trajectory,
    post_pulse_analytic,
    purcell_rate,
    rhs_identical,
    rhs_two_well,
    set_config_value,
    stationary_phase,
    to_collective,
)
from qwcavity.meanfield import MeanFieldTrajectory, default_dt

from conftest import standard_config


def undriven(cfg):
    return set_config_value(cfg, "pulse.F0", 0.0)


class TestIdenticalRhs:
    def test_hand_evaluated_point(self):
        # resonant rotating frame, a=0, B0=1, no drive:
        # da/dt = -i*sqrt(N)g = -i, dB0/dt = -gamma/2 + i(2U/N)|B0|^2 B0
        cfg = undriven(standard_config(u_over_gamma=1.0))
        out = rhs_identical(MeanFieldState(a=0j, modes=(1.0 + 0j,)), 0.6, cfg)
        assert out.a == pytest.approx(-1j, rel=1e-12)
        assert out.modes[0] == pytest.approx(-0.3 + 0.6j, rel=1e-12)

    def test_vacuum_is_fixed_point(self):
        cfg = undriven(standard_config())
        out = rhs_identical(MeanFieldState(a=0j, modes=(0j,)), 1.0, cfg)
        assert out.a == 0 and out.modes[0] == 0

    def test_harmonic_rhs_is_linear(self):
        cfg = undriven(standard_config(u_over_gamma=0.0))
        s1 = MeanFieldState(a=0.2 - 0.1j, modes=(0.4 + 0.3j,))
        s2 = MeanFieldState(a=2 * (0.2 - 0.1j), modes=(2 * (0.4 + 0.3j),))
        d1 = rhs_identical(s1, 0.3, cfg)
        d2 = rhs_identical(s2, 0.3, cfg)
        assert d2.a == pytest.approx(2 * d1.a, rel=1e-12)
        assert d2.modes[0] == pytest.approx(2 * d1.modes[0], rel=1e-12)

    def test_rejects_inhomogeneous_config(self):
        cfg = standard_config(gamma2=1.2)
        with pytest.raises(ValidationError):
            rhs_identical(MeanFieldState(a=0j, modes=(0j,)), 0.0, cfg)


class TestTwoWellRhs:
    def test_symmetric_collective_reduces_to_identical(self):
        cfg = standard_config(u_over_gamma=1.0, f0_over_kappa=0.1)
        s_id = MeanFieldState(a=0.1 + 0.05j, modes=(0.3 - 0.2j,))
        s_tw = MeanFieldState(a=0.1 + 0.05j, modes=(0.3 - 0.2j, 0j), representation="collective")
        d_id = rhs_identical(s_id, 0.7, cfg)
        d_tw = rhs_two_well(s_tw, 0.7, cfg)
        assert d_tw.modes[1] == 0
        assert d_tw.a == pytest.approx(d_id.a, rel=1e-12)
        assert d_tw.modes[0] == pytest.approx(d_id.modes[0], rel=1e-12)

    def test_exchange_symmetry(self):
        cfg = standard_config(u_over_gamma=0.5, f0_over_kappa=0.1)
        s = MeanFieldState(a=0.1j, modes=(0.2 + 0.1j, 0.2 + 0.1j), representation="local")
        d = rhs_two_well(s, 0.5, cfg)
        assert d.modes[0] == d.modes[1]

    def test_local_collective_consistency(self):
        rng = np.random.default_rng(11)
        for _ in range(12):
            cfg = standard_config(
                u_over_gamma=rng.uniform(0.0, 2.0),
                f0_over_kappa=rng.uniform(0.0, 0.4),
                gamma2=rng.uniform(0.2, 1.5),
                omega2=40.0 + rng.uniform(-3.0, 3.0),
            )
            a = complex(*rng.normal(0, 0.3, 2))
            local = rng.normal(0, 0.3, 2) + 1j * rng.normal(0, 0.3, 2)
            t = rng.uniform(0.0, 2.0)
            d_loc = rhs_two_well(
                MeanFieldState(a=a, modes=tuple(local), representation="local"), t, cfg
            )
            coll = to_collective(local)
            d_coll = rhs_two_well(
                MeanFieldState(a=a, modes=tuple(coll), representation="collective"), t, cfg
            )
            expect = to_collective(np.array(d_loc.modes))
            assert d_loc.a == pytest.approx(d_coll.a, abs=1e-12)
            assert np.allclose(expect, np.array(d_coll.modes), atol=1e-10)

    def test_rejects_wrong_well_count(self):
        cfg = standard_config(n_wells=1)
        with pytest.raises(ValidationError):
            rhs_two_well(MeanFieldState(a=0j, modes=(0j, 0j), representation="local"), 0.0, cfg)


class TestIntegrate:
    def test_zero_drive_stays_in_vacuum(self):
        cfg = undriven(standard_config())
        traj = integrate(cfg, (0.0, 3.0))
        assert np.abs(traj.a).max() == 0.0
        assert np.abs(traj.modes).max() == 0.0

    def test_harmonic_linearity_in_drive(self):
        # the 1e-10 bound checks the dynamics, so the solver error must sit
        # below it: integrate tighter than the production tolerances
        cfg = standard_config(u_over_gamma=0.0, f0_over_kappa=0.05)
        t_span = (0.0, 6.0)
        t1 = integrate(cfg, t_span, rtol=1e-12, atol=1e-15)
        t4 = integrate(
            set_config_value(cfg, "pulse.F0", 4 * cfg.pulse.amplitude), t_span,
            rtol=1e-12, atol=1e-15,
        )
        scale = np.abs(t4.a).max()
        assert np.abs(t4.a - 4 * t1.a).max() / scale < 1e-10
        assert np.abs(t4.modes - 4 * t1.modes).max() / scale < 1e-10

    def test_post_pulse_decay_is_purcell_exponential(self):
        # harmonic wells, bad cavity: |B0| after the pulse follows
        # A*exp(-gamma_tilde/2 * (t - t_off)) with gamma_tilde from the
        # Purcell formula
        cfg = standard_config(u_over_gamma=0.0, f0_over_kappa=0.05)
        gamma_tilde = purcell_rate(cfg)
        t_off = 0.6 + 5 * 0.155
        traj = integrate(cfg, (0.0, t_off + 2.2 / gamma_tilde))
        sel = (traj.t >= t_off) & (traj.t <= t_off + 2.0 / gamma_tilde)
        amp = np.abs(traj.bright()[sel])
        tau = traj.t[sel] - t_off
        model = np.exp(-0.5 * gamma_tilde * tau)
        a_fit = float(amp @ model / (model @ model))
        residual = np.sqrt(np.mean((amp - a_fit * model) ** 2)) / amp.max()
        assert residual < 0.01

    def test_two_well_representations_agree(self):
        cfg = standard_config(u_over_gamma=0.5, f0_over_kappa=0.2, gamma2=0.9)
        t_span = (0.0, 6.0)
        loc = integrate(cfg, t_span, representation="local")
        col = integrate(cfg, t_span, representation="collective")
        scale = np.abs(col.modes).max()
        mapped = np.stack([to_collective(loc.modes[:, i]) for i in range(loc.modes.shape[1])]).T
        assert np.abs(mapped - col.modes).max() / scale < 1e-8
        assert np.abs(loc.a - col.a).max() / np.abs(col.a).max() < 1e-8

    def test_dark_mode_stays_empty_for_identical_pair(self):
        cfg = standard_config(u_over_gamma=1.0, f0_over_kappa=0.3)
        traj = integrate(cfg, (0.0, 6.0), model="two_well", representation="local")
        assert np.abs(traj.dark()).max() < 1e-10

    def test_undriven_state_relaxes_to_vacuum(self):
        cfg = undriven(standard_config())
        y0 = MeanFieldState(a=0.1 + 0.2j, modes=(0.3 - 0.1j,), representation="bright")
        traj = integrate(cfg, (0.0, 25.0), y0=y0)
        assert abs(traj.a[-1]) < 1e-4
        assert abs(traj.bright()[-1]) < 1e-4

    def test_lab_and_rotating_frames_give_same_lab_signal(self):
        cfg_rot = standard_config(u_over_gamma=1.0, f0_over_kappa=0.2)
        cfg_lab = set_config_value(cfg_rot, "frame", "lab")
        t_span = (0.0, 4.0)
        rot = integrate(cfg_rot, t_span, dt=0.002)
        lab = integrate(cfg_lab, t_span, dt=0.002)
        scale = np.abs(rot.lab_signal("bright")).max()
        diff = np.abs(rot.lab_signal("bright") - lab.lab_signal("bright")).max()
        assert diff / scale < 1e-6

    def test_span_must_cover_pulse(self):
        cfg = standard_config()
        with pytest.raises(ValidationError):
            integrate(cfg, (0.9, 3.0))

    def test_coarse_grid_rejected(self):
        cfg = standard_config()
        with pytest.raises(GridError):
            integrate(cfg, (0.0, 4.0), dt=0.05)

    def test_inhomogeneous_needs_two_wells(self):
        cfg = standard_config(n_wells=3)
        cfg = set_config_value(cfg, "dipoles[2].gamma", 0.9)
        with pytest.raises(ValidationError):
            integrate(cfg, (0.0, 4.0))


class TestDerivedQuantities:
    def _tiny_traj(self, cfg, modes):
        t = np.arange(4) * 1e-3
        m = np.tile(np.asarray(modes, dtype=complex)[:, None], (1, 4))
        return MeanFieldTrajectory(
            t=t,
            a=np.zeros(4, dtype=complex),
            modes=m,
            representation="bright",
            frame=Frame.ROTATING,
            config=cfg,
            model="identical",
        )

    def test_instantaneous_frequency_vacuum(self):
        cfg = standard_config(u_over_gamma=1.0)
        traj = self._tiny_traj(cfg, [0.0])
        assert np.all(instantaneous_frequency(traj) == 40.0)

    def test_instantaneous_frequency_harmonic(self):
        cfg = standard_config(u_over_gamma=0.0)
        traj = self._tiny_traj(cfg, [0.8 + 0.1j])
        assert np.all(instantaneous_frequency(traj) == 40.0)

    def test_instantaneous_frequency_red_shift(self):
        cfg = standard_config(u_over_gamma=1.0)  # U = 0.6, N = 2
        traj = self._tiny_traj(cfg, [1.0])
        freq = instantaneous_frequency(traj)
        assert freq[0] == pytest.approx(39.4, rel=1e-12)
        assert np.all(freq <= 40.0)

    def test_adiabatic_field_values(self):
        cfg = undriven(standard_config())
        assert adiabatic_field(0j, 10.0, cfg) == 0
        assert adiabatic_field(1.0 + 0j, 10.0, cfg) == pytest.approx(-1j / 6.0, rel=1e-12)
        cfg_driven = standard_config(f0_over_kappa=0.2)
        # empty cavity at the envelope peak: -2i F0 / kappa
        value = adiabatic_field(0j, 0.6, cfg_driven)
        assert value == pytest.approx(-2j * 2.4 / 12.0, rel=1e-12)

    def test_adiabatic_field_warns_outside_bad_cavity(self):
        cfg = standard_config(gamma=10.0, gamma2=10.0)
        with pytest.warns(UserWarning):
            adiabatic_field(0j, 0.0, cfg)


class TestPostPulseOracle:
    ORACLE = PostPulseOracle(B_off=1.0, phi_off=0.2, t_off=1.0, gamma_tilde=14.0 / 15.0, U=0.6, N=2)

    def test_initial_condition(self):
        value = post_pulse_analytic(self.ORACLE, 1.0)
        assert value == pytest.approx(1.0 * np.exp(0.2j), rel=1e-12)

    def test_harmonic_phase_is_constant(self):
        oracle = PostPulseOracle(B_off=0.5, phi_off=0.2, t_off=1.0, gamma_tilde=1.0, U=0.0, N=2)
        t = np.linspace(1.0, 8.0, 15)
        assert np.allclose(np.angle(post_pulse_analytic(oracle, t)), 0.2)

    def test_stationary_phase_value(self):
        # 2*0.6*1/(2*0.9333...) = 0.642857...
        assert stationary_phase(self.ORACLE) == pytest.approx(0.6428571428571429, rel=1e-12)

    def test_stationary_phase_scalings(self):
        assert stationary_phase(
            PostPulseOracle(B_off=1.0, phi_off=0.0, t_off=0.0, gamma_tilde=1.0, U=0.0, N=2)
        ) == 0.0
        quad = stationary_phase(
            PostPulseOracle(B_off=1.0, phi_off=0.0, t_off=0.0, gamma_tilde=1.0, U=0.6, N=4)
        )
        assert quad == pytest.approx(0.5 * stationary_phase(
            PostPulseOracle(B_off=1.0, phi_off=0.0, t_off=0.0, gamma_tilde=1.0, U=0.6, N=2)
        ))

    def test_long_time_limit_is_stationary_phase(self):
        value = post_pulse_analytic(self.ORACLE, 1.0 + 40.0 / self.ORACLE.gamma_tilde)
        assert np.angle(value) == pytest.approx(0.2 + stationary_phase(self.ORACLE), abs=1e-9)

    def test_requires_post_pulse_times(self):
        with pytest.raises(ValidationError):
            post_pulse_analytic(self.ORACLE, 0.5)

    def test_numerical_solution_matches_oracle(self):
        # strongest in-scope drive, window starting after the fast cavity
        # transient has died out
        cfg = standard_config(u_over_gamma=1.0, f0_over_kappa=0.2)
        gamma_tilde = purcell_rate(cfg)
        t_off = 0.6 + 5 * 0.155
        traj = integrate(cfg, (0.0, t_off + 3.3 / gamma_tilde), dt=0.002)
        oracle = oracle_from_trajectory(traj, t_off)
        sel = (traj.t >= t_off) & (traj.t <= t_off + 3.0 / gamma_tilde)
        predicted = post_pulse_analytic(oracle, traj.t[sel])
        numeric = traj.bright()[sel]
        amp_err = np.abs(np.abs(numeric) - np.abs(predicted)) / np.abs(predicted)
        i0 = np.flatnonzero(sel)[0]
        phase_num = np.unwrap(np.angle(traj.bright()))[i0 : i0 + sel.sum()]
        phase_err = np.abs(phase_num - np.unwrap(np.angle(predicted)))
        assert amp_err.max() < 0.05
        assert phase_err.max() < 0.05


class TestTrajectoryExport:
    def test_csv_and_sidecar(self, tmp_path, base_config):
        traj = integrate(base_config, (0.0, 2.0), dt=0.004)
        csv_path = tmp_path / "traj.csv"
        traj.write_csv(csv_path)
        lines = csv_path.read_text().splitlines()
        assert lines[0] == "# frame: rotating"
        assert lines[3] == "t,re_a,im_a,re_B0,im_B0"
        assert len(lines) == 4 + len(traj.t)
        traj.write_sidecar(tmp_path / "traj.json")
        sidecar = json.loads((tmp_path / "traj.json").read_text())
        assert sidecar["config"]["pulse"]["F0"] == base_config.pulse.amplitude
        assert sidecar["frame"] == "rotating"

    def test_local_representation_columns(self, tmp_path):
        cfg = standard_config(gamma2=0.9)
        traj = integrate(cfg, (0.0, 2.0), dt=0.004)
        path = tmp_path / "tw.csv"
        traj.write_csv(path)
        header = path.read_text().splitlines()[3]
        assert header == "t,re_a,im_a,re_b1,im_b1,re_b2,im_b2"

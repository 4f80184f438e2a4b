import math

import numpy as np
import pytest

from qwcavity import (
    ConfigError,
    DensityMatrix,
    HilbertConfig,
    TruncationError,
    ValidationError,
    build_hamiltonian,
    build_operators,
    evolve,
    lindblad_rhs,
    read_checkpoints,
    set_config_value,
    vacuum_state,
    write_checkpoints,
)
from qwcavity import Frame, baseline_config, fid_time_span, integrate, nonlinear_phase_shift
from qwcavity.spectral import SpectralPolicy

from conftest import standard_config

H_SMALL = HilbertConfig(n_photon_max=1, nu_max=1, n_wells=1)
H_PAIR = HilbertConfig(n_photon_max=8, nu_max=2, n_wells=2)


def single_well_config(**kwargs):
    return standard_config(n_wells=1, **kwargs)


class TestOperators:
    def test_minimal_truncation_dimension(self):
        assert H_SMALL.dim == 4

    def test_photon_annihilator_structure(self):
        ops = build_operators(H_SMALL)
        a = ops.a.dense()
        # two-level photon factor: a couples each |1>_ph block to |0>_ph
        # with unit amplitude and nothing else
        nz = np.argwhere(np.abs(a) > 0)
        assert len(nz) == 2
        assert np.allclose(a[np.abs(a) > 0], 1.0)
        adag_a = a.conj().T @ a
        assert np.allclose(np.diag(adag_a).real, [0, 0, 1, 1])

    def test_distinct_factors_commute(self):
        h = HilbertConfig(n_photon_max=2, nu_max=2, n_wells=2)
        ops = build_operators(h)
        a = ops.a.dense()
        b1 = ops.b[0].dense()
        assert np.abs(a @ b1 - b1 @ a).max() == 0.0

    def test_well_ladder_elements(self):
        h = HilbertConfig(n_photon_max=1, nu_max=2, n_wells=1)
        b = build_operators(h).b[0].dense()
        values = sorted(np.round(b[np.abs(b) > 0].real, 12))
        assert values == [1.0, 1.0, pytest.approx(math.sqrt(2)), pytest.approx(math.sqrt(2))]

    def test_dimension_cap(self):
        with pytest.raises(ConfigError):
            HilbertConfig(n_photon_max=100, nu_max=3, n_wells=3)


class TestHamiltonian:
    def test_uncoupled_diagonal_matches_kerr_ladder(self):
        h = HilbertConfig(n_photon_max=1, nu_max=2, n_wells=1)
        cfg = set_config_value(single_well_config(u_over_gamma=1.0), "dipoles[0].g", 0.0)
        ham = build_hamiltonian(cfg, h).dense()
        assert np.abs(ham - np.diag(np.diag(ham))).max() < 1e-14
        # basis: cavity slowest -> |n_ph=0, nu=2> is index 2
        assert ham[2, 2].real == pytest.approx(78.8)
        assert ham[0, 0] == 0.0
        # |n_ph=1, nu=0> carries the cavity quantum
        assert ham[3, 3].real == pytest.approx(40.0)

    def test_hermitian(self):
        cfg = standard_config()
        ham = build_hamiltonian(cfg, H_PAIR).dense()
        assert np.abs(ham - ham.conj().T).max() < 1e-12

    def test_single_excitation_splitting(self):
        # harmonic resonant well: the one-excitation doublet splits by 2g
        h = HilbertConfig(n_photon_max=2, nu_max=2, n_wells=1)
        cfg = single_well_config(u_over_gamma=0.0)
        g = cfg.dipoles[0].coupling
        evals = np.linalg.eigvalsh(build_hamiltonian(cfg, h).dense())
        doublet = evals[(evals > 35.0) & (evals < 45.0)]
        assert len(doublet) == 2
        assert doublet[1] - doublet[0] == pytest.approx(2 * g, rel=1e-10)

    def test_rotating_frame_shifts_diagonal(self):
        h = HilbertConfig(n_photon_max=1, nu_max=2, n_wells=1)
        cfg = set_config_value(single_well_config(), "dipoles[0].g", 0.0)
        lab = build_hamiltonian(cfg, h, Frame.LAB).dense()
        rot = build_hamiltonian(cfg, h, Frame.ROTATING).dense()
        # resonant carrier removes the whole first excitation energy
        assert rot[3, 3].real == pytest.approx(0.0, abs=1e-12)
        assert lab[3, 3].real == pytest.approx(40.0)

    def test_well_count_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            build_hamiltonian(standard_config(), H_SMALL)


class TestRhs:
    def test_vacuum_is_stationary_without_drive(self):
        cfg = set_config_value(standard_config(), "pulse.F0", 0.0)
        rho = vacuum_state(H_PAIR)
        out = lindblad_rhs(rho, 0.6, cfg, H_PAIR)
        assert np.abs(out).max() < 1e-14

    def test_trace_free_and_hermiticity_preserving(self):
        rng = np.random.default_rng(3)
        m = rng.normal(size=(H_PAIR.dim, H_PAIR.dim)) + 1j * rng.normal(size=(H_PAIR.dim, H_PAIR.dim))
        rho = m @ m.conj().T
        rho /= np.trace(rho).real
        out = lindblad_rhs(rho, 0.6, standard_config(), H_PAIR)
        assert abs(np.trace(out)) < 1e-12
        assert np.abs(out - out.conj().T).max() < 1e-12

    def test_bare_cavity_photon_decay_rate(self):
        h = HilbertConfig(n_photon_max=2, nu_max=1, n_wells=1)
        cfg = set_config_value(single_well_config(), "dipoles[0].g", 0.0)
        cfg = set_config_value(cfg, "pulse.F0", 0.0)
        ops = build_operators(h)
        number = (ops.a.matrix.conj().T @ ops.a.matrix).toarray()
        # rho = |1_ph, 0><1_ph, 0|
        rho = np.zeros((h.dim, h.dim), dtype=complex)
        idx = 1 * (h.nu_max + 1)
        rho[idx, idx] = 1.0
        out = lindblad_rhs(rho, 0.0, cfg, h)
        rate = np.sum(number.T * out).real
        assert rate == pytest.approx(-12.0, rel=1e-12)

    def test_shape_checked(self):
        with pytest.raises(ValidationError):
            lindblad_rhs(np.zeros((3, 3), dtype=complex), 0.0, standard_config(), H_PAIR)


class TestEvolve:
    def test_vacuum_stays_vacuum(self):
        cfg = set_config_value(standard_config(), "pulse.F0", 0.0)
        res = evolve(vacuum_state(H_PAIR), (0.0, 2.0), cfg, H_PAIR, dt=0.004)
        assert np.abs(res.exp_a).max() == 0.0
        assert np.abs(res.exp_b).max() == 0.0
        assert np.abs(res.second_level_population()).max() == 0.0

    def test_single_photon_decay_oracle(self):
        h = HilbertConfig(n_photon_max=2, nu_max=1, n_wells=1)
        cfg = set_config_value(single_well_config(), "dipoles[0].g", 0.0)
        cfg = set_config_value(cfg, "pulse.F0", 0.0)
        rho = np.zeros((h.dim, h.dim), dtype=complex)
        idx = 1 * (h.nu_max + 1)
        rho[idx, idx] = 1.0
        res = evolve(rho, (0.0, 1.2), cfg, h, dt=0.002)
        expected = np.exp(-12.0 * res.t)
        assert np.abs(res.exp_n - expected).max() < 1e-6

    def test_quasi_steady_drive_flux(self):
        # long plateau pulse on a bare cavity: kappa <n> -> 4 F0^2 / kappa
        h = HilbertConfig(n_photon_max=3, nu_max=1, n_wells=1)
        cfg = single_well_config(f0_over_kappa=0.05)
        cfg = set_config_value(cfg, "dipoles[0].g", 0.0)
        cfg = set_config_value(cfg, "pulse.t0", 40.0)
        cfg = set_config_value(cfg, "pulse.T", 25.0)
        res = evolve(vacuum_state(h), (0.0, 40.0), cfg, h, dt=0.01)
        flux = 12.0 * res.exp_n[-1]
        target = 4.0 * cfg.pulse.amplitude**2 / 12.0
        assert flux == pytest.approx(target, rel=0.02)

    def test_hygiene_diagnostics(self):
        cfg = standard_config(u_over_gamma=0.5, f0_over_kappa=0.3)
        res = evolve(vacuum_state(H_PAIR), (0.0, 3.0), cfg, H_PAIR, dt=0.004)
        assert res.diagnostics["max_trace_dev"] < 1e-8
        assert res.diagnostics["max_herm_dev"] < 1e-10
        assert res.diagnostics["min_eigenvalue"] > -1e-8
        for cp in res.checkpoints:
            cp.validate()

    def test_truncation_overflow_raises(self):
        h = HilbertConfig(n_photon_max=1, nu_max=2, n_wells=2)
        cfg = standard_config(f0_over_kappa=0.5)
        with pytest.raises(TruncationError):
            evolve(vacuum_state(h), (0.0, 2.0), cfg, h, dt=0.004)

    def test_grid_matches_meanfield_grid(self):
        cfg = standard_config(u_over_gamma=0.5, f0_over_kappa=0.05)
        res = evolve(vacuum_state(H_PAIR), (0.0, 2.0), cfg, H_PAIR, dt=0.004)
        traj = integrate(cfg, (0.0, 2.0), dt=0.004)
        assert np.array_equal(res.t, traj.t)

    def test_linear_response_phase_negligible(self):
        # at F0 = 0.01 kappa the extracted shift is below 1e-3 rad even for
        # strong anharmonicity
        policy = SpectralPolicy()
        cfg = standard_config(u_over_gamma=2.0, f0_over_kappa=0.01)
        span = fid_time_span(cfg, policy)
        run = evolve(vacuum_state(H_PAIR), span, cfg, H_PAIR, dt=0.004)
        base = evolve(vacuum_state(H_PAIR), span, baseline_config(cfg, policy), H_PAIR, dt=0.004)
        assert abs(nonlinear_phase_shift(run, base, policy)) < 1e-3

    def test_truncation_convergence_of_phase_shift(self):
        # raising the Fock cutoff by 2 moves dPhi(omega0) by < 1%
        policy = SpectralPolicy()
        cfg = standard_config(u_over_gamma=0.5, f0_over_kappa=0.5)
        span = fid_time_span(cfg, policy)
        base_cfg = baseline_config(cfg, policy)
        shifts = []
        for n_ph in (6, 8):
            h = HilbertConfig(n_photon_max=n_ph, nu_max=2, n_wells=2)
            run = evolve(vacuum_state(h), span, cfg, h, dt=0.004)
            base = evolve(vacuum_state(h), span, base_cfg, h, dt=0.004)
            shifts.append(nonlinear_phase_shift(run, base, policy))
        assert abs(shifts[1] - shifts[0]) / abs(shifts[1]) < 0.01


class TestDensityMatrixType:
    def test_validate_catches_bad_trace(self):
        rho = np.eye(4, dtype=complex)
        with pytest.raises(ValidationError):
            DensityMatrix(matrix=rho, time=0.0).validate()

    def test_validate_catches_non_hermitian(self):
        rho = np.diag([1.0, 0.0, 0.0, 0.0]).astype(complex)
        rho[0, 1] = 0.1
        with pytest.raises(ValidationError):
            DensityMatrix(matrix=rho, time=0.0).validate()

    def test_checkpoint_round_trip(self, tmp_path):
        cfg = standard_config(u_over_gamma=0.5, f0_over_kappa=0.05)
        h = HilbertConfig(n_photon_max=2, nu_max=2, n_wells=2)
        res = evolve(vacuum_state(h), (0.0, 2.0), cfg, h, dt=0.004, n_checkpoints=5)
        write_checkpoints(res, tmp_path / "cp")
        loaded = read_checkpoints(tmp_path / "cp")
        assert len(loaded) == len(res.checkpoints)
        for got, want in zip(loaded, res.checkpoints):
            assert got.time == want.time
            assert np.array_equal(got.matrix, want.matrix)


class TestExports:
    def test_csv_columns(self, tmp_path):
        cfg = standard_config(u_over_gamma=0.5, f0_over_kappa=0.05)
        h = HilbertConfig(n_photon_max=2, nu_max=2, n_wells=2)
        res = evolve(vacuum_state(h), (0.0, 2.0), cfg, h, dt=0.004)
        path = tmp_path / "lind.csv"
        res.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[2] == (
            "t,re_a,im_a,re_B0,im_B0,re_B1,im_B1,p0_1,p1_1,p2_1,p0_2,p1_2,p2_2"
        )
        assert len(lines) == 3 + len(res.t)

"""Mean-field dynamics of the driven cavity and collective dipole coherences.

Implements the nonlinear equations of motion for <a> and <B0> (identical
wells, any N) and the asymmetric two-well model in both the local (<b1>,
<b2>) and collective (<B0>, <B1>) representations, plus the adiabatic
post-pulse amplitude/phase solution used as an oracle.

Integration runs in the configured frame; the rotating frame removes the
THz carrier and is the default. Trajectories are immutable once produced,
so independent parameter-sweep integrations can run in parallel workers.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .errors import GridError, SolverError, ValidationError
from .model import (
    Frame,
    SystemConfig,
    config_to_dict,
    drive_amplitude,
    purcell_rate,
)

RTOL_DEFAULT = 1e-9
ATOL_DEFAULT = 1e-12
SAMPLES_PER_SCALE = 20


@dataclass(frozen=True)
class MeanFieldState:
    """Field amplitude plus dipole mode amplitudes in one representation.

    representation: 'bright' (single <B0>), 'local' (<b1>, <b2>) or
    'collective' (<B0>, <B1>).
    """

    a: complex
    modes: tuple
    representation: str = "bright"

    def __post_init__(self):
        if self.representation not in ("bright", "local", "collective"):
            raise ValidationError(f"unknown representation {self.representation!r}")
        values = (self.a, *self.modes)
        if not all(np.isfinite(v.real) and np.isfinite(v.imag) for v in map(complex, values)):
            raise ValidationError("mean-field state contains non-finite values")


def _frame_shift(cfg: SystemConfig) -> float:
    return cfg.pulse.carrier if cfg.frame is Frame.ROTATING else 0.0


def _drive(cfg: SystemConfig):
    p, frame = cfg.pulse, cfg.frame
    if frame is Frame.ROTATING:
        return lambda t: p.amplitude * math.exp(-((t - p.center) ** 2) / (2.0 * p.duration**2))
    return lambda t: (
        p.amplitude
        * math.exp(-((t - p.center) ** 2) / (2.0 * p.duration**2))
        * np.exp(-1j * p.carrier * t)
    )


def _identical_rhs(cfg: SystemConfig):
    shift = _frame_shift(cfg)
    d = cfg.dipoles[0]
    n = cfg.n_wells
    dc = cfg.cavity.omega_c - shift
    d0 = d.omega - shift
    kappa_half = 0.5 * cfg.cavity.kappa
    gamma_half = 0.5 * d.gamma
    g_n = cfg.collective_coupling
    kerr = 2.0 * d.anharmonicity / n
    fd = _drive(cfg)

    def rhs(t, y):
        a, b0 = y
        da = -(kappa_half + 1j * dc) * a - 1j * g_n * b0 - 1j * fd(t)
        db = -(gamma_half + 1j * d0) * b0 + 1j * kerr * abs(b0) ** 2 * b0 - 1j * g_n * a
        return [da, db]

    return rhs


def _two_well_local_rhs(cfg: SystemConfig):
    shift = _frame_shift(cfg)
    d1, d2 = cfg.dipoles
    dc = cfg.cavity.omega_c - shift
    kappa_half = 0.5 * cfg.cavity.kappa
    fd = _drive(cfg)
    p1 = (0.5 * d1.gamma + 1j * (d1.omega - shift), d1.coupling, 2.0 * d1.anharmonicity)
    p2 = (0.5 * d2.gamma + 1j * (d2.omega - shift), d2.coupling, 2.0 * d2.anharmonicity)

    def rhs(t, y):
        a, b1, b2 = y
        da = -(kappa_half + 1j * dc) * a - 1j * (p1[1] * b1 + p2[1] * b2) - 1j * fd(t)
        db1 = -p1[0] * b1 - 1j * p1[1] * a + 1j * p1[2] * abs(b1) ** 2 * b1
        db2 = -p2[0] * b2 - 1j * p2[1] * a + 1j * p2[2] * abs(b2) ** 2 * b2
        return [da, db1, db2]

    return rhs


def _two_well_collective_rhs(cfg: SystemConfig):
    # Collective basis B0 = (b1+b2)/sqrt(2), B1 = (b1-b2)/sqrt(2); with this
    # sign choice the mode-mixing constants are (g1-g2)/2-style differences.
    shift = _frame_shift(cfg)
    d1, d2 = cfg.dipoles
    if d1.coupling != d2.coupling or d1.anharmonicity != d2.anharmonicity:
        raise ValidationError("collective two-well form requires equal g and U")
    g = d1.coupling
    u = d1.anharmonicity
    dc = cfg.cavity.omega_c - shift
    kappa_half = 0.5 * cfg.cavity.kappa
    gbar_half = 0.25 * (d1.gamma + d2.gamma)
    dgamma_half = 0.25 * (d1.gamma - d2.gamma)
    wbar = 0.5 * (d1.omega + d2.omega) - shift
    dw = 0.5 * (d1.omega - d2.omega)
    g_n = math.sqrt(2.0) * g
    fd = _drive(cfg)

    def rhs(t, y):
        a, b0, b1 = y
        occ = abs(b0) ** 2 + abs(b1) ** 2
        cross = (b0.conjugate() * b1).real
        diag = gbar_half + 1j * (wbar - u * occ)
        mix = dgamma_half + 1j * (dw - 2.0 * u * cross)
        da = -(kappa_half + 1j * dc) * a - 1j * g_n * b0 - 1j * fd(t)
        db0 = -diag * b0 - mix * b1 - 1j * g_n * a
        db1 = -diag * b1 - mix * b0
        return [da, db0, db1]

    return rhs


def rhs_identical(state: MeanFieldState, t: float, cfg: SystemConfig) -> MeanFieldState:
    """Time derivative of (<a>, <B0>) for identical wells."""
    if not cfg.is_homogeneous:
        raise ValidationError("rhs_identical requires a homogeneous dipole set")
    da, db = _identical_rhs(cfg)(t, [complex(state.a), complex(state.modes[0])])
    return MeanFieldState(a=da, modes=(db,), representation="bright")


def rhs_two_well(state: MeanFieldState, t: float, cfg: SystemConfig) -> MeanFieldState:
    """Time derivative for the asymmetric pair, local or collective form."""
    if cfg.n_wells != 2:
        raise ValidationError("two-well model requires exactly N = 2")
    y = [complex(state.a), complex(state.modes[0]), complex(state.modes[1])]
    if state.representation == "local":
        dy = _two_well_local_rhs(cfg)(t, y)
    elif state.representation == "collective":
        dy = _two_well_collective_rhs(cfg)(t, y)
    else:
        raise ValidationError("two-well state must be 'local' or 'collective'")
    return MeanFieldState(a=dy[0], modes=(dy[1], dy[2]), representation=state.representation)


def _stored_frequencies(cfg: SystemConfig) -> list[float]:
    shift = _frame_shift(cfg)
    freqs = [abs(cfg.cavity.omega_c - shift)] + [abs(d.omega - shift) for d in cfg.dipoles]
    if cfg.frame is Frame.LAB:
        freqs.append(abs(cfg.pulse.carrier))
    return freqs


def resolution_limit(cfg: SystemConfig) -> float:
    """Largest grid spacing that still samples every stored-frame period and
    the fastest decay at >= 20 points each."""
    scales = [1.0 / cfg.cavity.kappa]
    scales += [1.0 / d.gamma for d in cfg.dipoles]
    scales += [2.0 * math.pi / w for w in _stored_frequencies(cfg) if w > 1e-12]
    return min(scales) / SAMPLES_PER_SCALE


def default_dt(cfg: SystemConfig) -> float:
    return 0.5 * min(resolution_limit(cfg), cfg.pulse.duration / SAMPLES_PER_SCALE)


def uniform_grid(t_span: tuple[float, float], dt: float) -> np.ndarray:
    t0, t1 = t_span
    if t1 <= t0:
        raise GridError(f"empty time span {t_span}")
    n = int(round((t1 - t0) / dt))
    return t0 + dt * np.arange(n + 1)


@dataclass(frozen=True)
class MeanFieldTrajectory:
    """Uniformly sampled mean-field solution with its config snapshot."""

    t: np.ndarray
    a: np.ndarray
    modes: np.ndarray  # shape (M, len(t))
    representation: str
    frame: Frame
    config: SystemConfig
    model: str

    def __post_init__(self):
        steps = np.diff(self.t)
        if len(self.t) < 2 or not np.all(steps > 0):
            raise GridError("trajectory grid must be strictly increasing")
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0.0):
            raise GridError("trajectory grid must be uniform")
        if steps[0] > resolution_limit(self.config) * (1 + 1e-9):
            raise GridError(
                f"grid spacing {steps[0]:.3e} does not resolve the stored-frame "
                f"carrier/decay scales (limit {resolution_limit(self.config):.3e})"
            )
        if not (np.all(np.isfinite(self.a)) and np.all(np.isfinite(self.modes))):
            raise ValidationError("trajectory contains non-finite samples")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def bright(self) -> np.ndarray:
        """Bright collective coherence <B0> in the stored frame."""
        if self.representation == "local":
            return self.modes.sum(axis=0) / math.sqrt(self.modes.shape[0])
        return self.modes[0]

    def dark(self) -> np.ndarray:
        """Dark-mode coherence <B1> for the two-well models."""
        if self.representation == "collective":
            return self.modes[1]
        if self.representation == "local" and self.modes.shape[0] == 2:
            return (self.modes[0] - self.modes[1]) / math.sqrt(2.0)
        raise ValidationError("dark mode is only defined for the two-well models")

    def signal(self, source: str) -> np.ndarray:
        if source == "cavity":
            return self.a
        if source == "bright":
            return self.bright()
        if source == "dark":
            return self.dark()
        raise ValidationError(f"unknown source {source!r}")

    def lab_signal(self, source: str = "cavity") -> np.ndarray:
        """Coherence in the lab frame, X_lab = X_rot * exp(-i w_d t)."""
        x = self.signal(source)
        if self.frame is Frame.ROTATING:
            return x * np.exp(-1j * self.config.pulse.carrier * self.t)
        return x

    def write_csv(self, path) -> None:
        if self.representation == "bright":
            names = ["B0"]
        elif self.representation == "collective":
            names = ["B0", "B1"]
        else:
            names = [f"b{i+1}" for i in range(self.modes.shape[0])]
        cols = [("a", self.a)] + list(zip(names, self.modes))
        header = ",".join(["t"] + [f"re_{n},im_{n}" for n, _ in cols])
        lines = [
            f"# frame: {self.frame.value}",
            f"# representation: {self.representation}",
            f"# model: {self.model}",
            header,
        ]
        for i, ti in enumerate(self.t):
            row = [repr(float(ti))]
            for _, series in cols:
                row += [repr(float(series[i].real)), repr(float(series[i].imag))]
            lines.append(",".join(row))
        Path(path).write_text("\n".join(lines) + "\n")

    def write_sidecar(self, path) -> None:
        payload = {
            "config": config_to_dict(self.config),
            "dt": self.dt,
            "model": self.model,
            "representation": self.representation,
            "frame": self.frame.value,
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _select_model(cfg: SystemConfig, model: str | None) -> str:
    if model is None:
        model = "identical" if cfg.is_homogeneous else "two_well"
    if model == "identical":
        if not cfg.is_homogeneous:
            raise ValidationError("identical model requires a homogeneous dipole set")
    elif model == "two_well":
        if cfg.n_wells != 2:
            raise ValidationError(
                f"two-well model requires N = 2, got N = {cfg.n_wells}; inhomogeneous "
                "sets with N > 2 are out of scope"
            )
    else:
        raise ValidationError(f"unknown model {model!r}")
    return model


def integrate(
    cfg: SystemConfig,
    t_span: tuple[float, float],
    *,
    rtol: float = RTOL_DEFAULT,
    atol: float = ATOL_DEFAULT,
    dt: float | None = None,
    model: str | None = None,
    representation: str = "local",
    y0: MeanFieldState | None = None,
) -> MeanFieldTrajectory:
    """Integrate the mean-field equations on a uniform output grid.

    The pulse must lie inside t_span. Initial coherences default to zero
    (vacuum before the pulse). Solver failures raise SolverError instead of
    returning a silently truncated trajectory.
    """
    model = _select_model(cfg, model)
    p = cfg.pulse
    if t_span[0] > p.center - 3 * p.duration or t_span[1] < p.center + 3 * p.duration:
        raise ValidationError(f"t_span {t_span} does not cover the pulse")

    if model == "identical":
        rhs = _identical_rhs(cfg)
        representation = "bright"
        n_modes = 1
    elif representation == "local":
        rhs = _two_well_local_rhs(cfg)
        n_modes = 2
    else:
        rhs = _two_well_collective_rhs(cfg)
        n_modes = 2

    if y0 is None:
        start = np.zeros(1 + n_modes, dtype=complex)
    else:
        if len(y0.modes) != n_modes or y0.representation != representation:
            raise ValidationError("initial state does not match the selected model")
        start = np.array([y0.a, *y0.modes], dtype=complex)

    grid = uniform_grid(t_span, dt if dt is not None else default_dt(cfg))
    sol = solve_ivp(
        lambda t, y: np.asarray(rhs(t, y), dtype=complex),
        t_span=(grid[0], grid[-1]),
        y0=start,
        t_eval=grid,
        method="RK45",
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise SolverError(f"mean-field integration failed: {sol.message}")
    return MeanFieldTrajectory(
        t=grid,
        a=sol.y[0],
        modes=sol.y[1:],
        representation=representation,
        frame=cfg.frame,
        config=cfg,
        model=model,
    )


def instantaneous_frequency(traj: MeanFieldTrajectory) -> np.ndarray:
    """Chirped dipole frequency w0 - (2U/N)|<B0>|^2 along the grid."""
    if traj.model != "identical":
        raise ValidationError("instantaneous frequency is defined for identical wells")
    d = traj.config.dipoles[0]
    n = traj.config.n_wells
    return d.omega - (2.0 * d.anharmonicity / n) * np.abs(traj.bright()) ** 2


def adiabatic_field(b0, t, cfg: SystemConfig):
    """Cavity amplitude with the field slaved to the dipoles (bad cavity).

    Warns when the bad-cavity conditions kappa >> gamma and
    (kappa - gamma)/4 > sqrt(N) g do not hold.
    """
    kappa = cfg.cavity.kappa
    gbar = sum(d.gamma for d in cfg.dipoles) / cfg.n_wells
    g_n = cfg.collective_coupling
    if kappa < 10.0 * gbar or (kappa - gbar) / 4.0 <= g_n:
        warnings.warn(
            "adiabatic elimination outside its regime: need kappa >> gamma and "
            f"(kappa-gamma)/4 > sqrt(N)g (kappa={kappa}, gamma={gbar}, sqrtN*g={g_n})",
            stacklevel=2,
        )
    return -1j * (2.0 * g_n / kappa) * np.asarray(b0, dtype=complex) - 1j * (
        2.0 / kappa
    ) * drive_amplitude(t, cfg.pulse, cfg.frame)


@dataclass(frozen=True)
class PostPulseOracle:
    """Inputs of the analytic free-decay solution after pulse turn-off."""

    B_off: float
    phi_off: float
    t_off: float
    gamma_tilde: float
    U: float
    N: int

    def __post_init__(self):
        if self.B_off < 0:
            raise ValidationError(f"B_off must be >= 0, got {self.B_off}")
        if self.gamma_tilde <= 0:
            raise ValidationError(f"gamma_tilde must be > 0, got {self.gamma_tilde}")


def stationary_phase(oracle: PostPulseOracle) -> float:
    """Long-time nonlinear phase offset 2*U*B_off^2/(N*gamma_tilde)."""
    return 2.0 * oracle.U * oracle.B_off**2 / (oracle.N * oracle.gamma_tilde)


def post_pulse_analytic(oracle: PostPulseOracle, t):
    """Rotating-frame <B0(t)> for t >= t_off: exponential amplitude decay
    with the saturating Kerr phase."""
    t = np.asarray(t, dtype=float)
    if np.any(t < oracle.t_off - 1e-12):
        raise ValidationError("post-pulse solution is only valid for t >= t_off")
    tau = t - oracle.t_off
    amp = oracle.B_off * np.exp(-0.5 * oracle.gamma_tilde * tau)
    phase = oracle.phi_off + stationary_phase(oracle) * (1.0 - np.exp(-oracle.gamma_tilde * tau))
    out = amp * np.exp(1j * phase)
    return out if out.ndim else complex(out)


def oracle_from_trajectory(traj: MeanFieldTrajectory, t_off: float) -> PostPulseOracle:
    """Read B_off and phi_off from a computed trajectory at t_off.

    The phase is taken in the frame rotating at the drive carrier and
    unwrapped from the pulse peak onward.
    """
    if not traj.config.is_homogeneous:
        raise ValidationError("the post-pulse oracle applies to identical wells")
    b = traj.bright()
    if traj.frame is Frame.LAB:
        b = b * np.exp(1j * traj.config.pulse.carrier * traj.t)
    if not traj.t[0] <= t_off <= traj.t[-1]:
        raise ValidationError(f"t_off {t_off} outside trajectory range")
    i_peak = int(np.argmax(np.abs(b)))
    phase = np.unwrap(np.angle(b[i_peak:]))
    tail = traj.t[i_peak:]
    d = traj.config.dipoles[0]
    return PostPulseOracle(
        B_off=float(np.interp(t_off, traj.t, np.abs(b))),
        phi_off=float(np.interp(t_off, tail, phase)),
        t_off=float(t_off),
        gamma_tilde=purcell_rate(traj.config),
        U=d.anharmonicity,
        N=traj.config.n_wells,
    )

"""FID windowing, Fourier phase spectra, nonlinear phase extraction.

The Fourier convention is fixed once here: S(w) = (1/sqrt(2*pi)) *
integral dt s(t) exp(+i w t), evaluated for the lab-frame post-pulse
signal. Phases are four-quadrant angles unwrapped inside the resonance
band only. All operations are pure; sweep points can be processed in
parallel safely.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.fft import next_fast_len

from .errors import GridError, ValidationError
from .model import SystemConfig, effective_decay, envelope, purcell_rate, set_config_value
from .meanfield import MeanFieldTrajectory

# Gaussian envelope at the default turn-off t0 + 3T is exp(-4.5) ~ 1.11e-2;
# the window check allows exactly that much residual drive.
ENVELOPE_OFF_THRESHOLD = 1.2e-2
FFT_CONVENTION = "S(w) = (2*pi)^(-1/2) * sum_j dt s(t_j) exp(+i w t_j), trapezoid ends"


@dataclass(frozen=True)
class SpectralPolicy:
    """Windowing and read-off choices shared by a run and its baseline."""

    t_off_factor: float = 3.0      # t_off = t0 + factor * T
    t_off: float | None = None     # explicit override
    min_tail: float = 5.0          # required trajectory length past t_off, in 1/gamma_tilde
    window_tail: float = 8.0       # suggested span past t_off, in 1/gamma_tilde
    resolution_factor: float = 50.0  # target grid: d_omega = gamma_tilde / factor
    band_factor: float = 10.0      # unwrap band half-width, in gamma_tilde
    noise_floor: float = 1e-12     # magnitude floor relative to the band peak
    baseline_mode: str = "harmonic"  # 'harmonic' (U = 0) or 'weak' (F0 = weak_ratio*kappa)
    weak_ratio: float = 0.01

    def resolve_t_off(self, cfg: SystemConfig) -> float:
        if self.t_off is not None:
            return self.t_off
        return cfg.pulse.center + self.t_off_factor * cfg.pulse.duration


def fid_time_span(cfg: SystemConfig, policy: SpectralPolicy | None = None) -> tuple[float, float]:
    """Integration span that leaves `window_tail` decay lengths of FID."""
    policy = policy or SpectralPolicy()
    t_off = policy.resolve_t_off(cfg)
    return (0.0, t_off + policy.window_tail / effective_decay(cfg))


def baseline_config(cfg: SystemConfig, policy: SpectralPolicy | None = None) -> SystemConfig:
    """Reference configuration whose phase defines Phi_harm."""
    policy = policy or SpectralPolicy()
    if policy.baseline_mode == "harmonic":
        out = cfg
        for n in range(cfg.n_wells):
            out = set_config_value(out, f"dipoles[{n}].U", 0.0)
        return out
    if policy.baseline_mode == "weak":
        return set_config_value(cfg, "pulse.F0", policy.weak_ratio * cfg.cavity.kappa)
    raise ValidationError(f"unknown baseline mode {policy.baseline_mode!r}")


@dataclass(frozen=True)
class FidWindow:
    """Lab-frame post-pulse segment of one coherence."""

    t: np.ndarray
    values: np.ndarray
    t_off: float
    source: str
    config: SystemConfig

    def __post_init__(self):
        if self.t[0] < self.t_off - 1e-9:
            raise ValidationError("window must start at t_off")
        residual = float(np.max(envelope(self.t, self.config.pulse)))
        if residual >= ENVELOPE_OFF_THRESHOLD:
            raise ValidationError(
                f"pulse envelope still at {residual:.2e} inside the FID window"
            )

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])


def fid_window(traj, pulse=None, policy: SpectralPolicy | None = None, source: str = "cavity") -> FidWindow:
    """Cut the post-pulse FID segment out of a trajectory.

    `traj` is any result with .t, .config and .lab_signal(source); `pulse`
    defaults to the trajectory's own pulse parameters.
    """
    policy = policy or SpectralPolicy()
    cfg = traj.config
    if pulse is None:
        pulse = cfg.pulse
    t_off = policy.t_off if policy.t_off is not None else pulse.center + policy.t_off_factor * pulse.duration
    gamma_tilde = effective_decay(cfg)
    if traj.t[-1] < t_off + policy.min_tail / gamma_tilde - 1e-9:
        raise ValidationError(
            f"trajectory too short: ends at {traj.t[-1]:.3f}, need "
            f">= {t_off + policy.min_tail / gamma_tilde:.3f} (t_off + {policy.min_tail}/gamma_tilde)"
        )
    keep = traj.t >= t_off - 1e-12
    return FidWindow(
        t=traj.t[keep],
        values=traj.lab_signal(source)[keep],
        t_off=t_off,
        source=source,
        config=cfg,
    )


@dataclass(frozen=True)
class Spectrum:
    """Complex FID spectrum on the band around the dipole resonance."""

    omega: np.ndarray
    values: np.ndarray
    omega0: float
    gamma_tilde: float
    t_off: float
    source: str


def fourier(
    window: FidWindow,
    *,
    resolution: float | None = None,
    band_halfwidth: float | None = None,
    omega0: float | None = None,
) -> Spectrum:
    """Discrete approximation of the continuous transform on a padded grid.

    Zero-pads until the frequency step is at most gamma_tilde/50 (or the
    requested resolution) and corrects the end points to trapezoid weights.
    """
    cfg = window.config
    gamma_tilde = effective_decay(cfg)
    if omega0 is None:
        omega0 = cfg.dipoles[0].omega
    if resolution is None:
        resolution = gamma_tilde / SpectralPolicy().resolution_factor
    if band_halfwidth is None:
        band_halfwidth = 12.0 * gamma_tilde

    dt = window.dt
    nyquist = math.pi / dt
    if nyquist <= omega0 + 10.0 * gamma_tilde:
        raise GridError(
            f"sampling too coarse: Nyquist {nyquist:.2f} rad/ps must exceed "
            f"omega0 + 10*gamma_tilde = {omega0 + 10 * gamma_tilde:.2f}"
        )

    x = window.values
    m = len(x)
    n_fft = next_fast_len(max(m, int(math.ceil(2.0 * math.pi / (resolution * dt)))))
    rect = np.fft.ifft(x, n_fft) * n_fft  # sum_j x_j exp(+2i pi jk/n)
    omega = 2.0 * math.pi * np.arange(n_fft) / (n_fft * dt)

    lo = max(omega0 - band_halfwidth, 0.0)
    hi = min(omega0 + band_halfwidth, nyquist)
    sel = (omega >= lo) & (omega <= hi)
    w = omega[sel]
    trap = rect[sel] - 0.5 * x[0] - 0.5 * x[-1] * np.exp(1j * w * (m - 1) * dt)
    values = (dt / math.sqrt(2.0 * math.pi)) * np.exp(1j * w * window.t[0]) * trap
    return Spectrum(
        omega=w,
        values=values,
        omega0=omega0,
        gamma_tilde=gamma_tilde,
        t_off=window.t_off,
        source=window.source,
    )


@dataclass(frozen=True)
class PhaseSpectrum:
    """Unwrapped phase and magnitude of a FID spectrum.

    `mask` marks the contiguous in-band bins where the phase is unwrapped
    and trustworthy; outside, `phase` holds the raw angle (NaN below the
    magnitude floor). No silent interpolation across dead bins.
    """

    omega: np.ndarray
    values: np.ndarray
    phase: np.ndarray
    magnitude: np.ndarray
    mask: np.ndarray
    omega0: float
    gamma_tilde: float
    t_off: float
    source: str


def phase_spectrum(
    spec: Spectrum,
    *,
    band_factor: float = SpectralPolicy().band_factor,
    noise_floor: float = SpectralPolicy().noise_floor,
) -> PhaseSpectrum:
    mag = np.abs(spec.values)
    peak = float(mag.max())
    if peak == 0.0:
        raise ValidationError("spectrum is identically zero; phase undefined")
    alive = mag > noise_floor * peak
    band = np.abs(spec.omega - spec.omega0) <= band_factor * spec.gamma_tilde
    if not band.any():
        raise ValidationError("resonance band not covered by the spectrum grid")

    phase = np.where(alive, np.angle(spec.values), np.nan)
    # unwrap the contiguous alive run inside the band that contains omega0
    i0 = int(np.argmin(np.abs(spec.omega - spec.omega0)))
    if not (alive[i0] and band[i0]):
        raise ValidationError("spectrum magnitude at the resonance is below the noise floor")
    ok = alive & band
    lo = i0
    while lo > 0 and ok[lo - 1]:
        lo -= 1
    hi = i0
    while hi < len(ok) - 1 and ok[hi + 1]:
        hi += 1
    mask = np.zeros_like(ok)
    mask[lo : hi + 1] = True
    unwrapped = np.unwrap(np.angle(spec.values[mask]))
    # anchor the branch at the resonance bin so the read-off there is the
    # principal four-quadrant angle, not an offset inherited from the band edge
    anchor = unwrapped[i0 - lo] - np.angle(spec.values[i0])
    phase[mask] = unwrapped - 2.0 * math.pi * round(anchor / (2.0 * math.pi))
    return PhaseSpectrum(
        omega=spec.omega,
        values=spec.values,
        phase=phase,
        magnitude=mag,
        mask=mask,
        omega0=spec.omega0,
        gamma_tilde=spec.gamma_tilde,
        t_off=spec.t_off,
        source=spec.source,
    )


def phase_at(ps: PhaseSpectrum, omega: float | None = None) -> float:
    """Linear interpolation of the unwrapped phase, by default at omega0."""
    if omega is None:
        omega = ps.omega0
    w = ps.omega[ps.mask]
    if not w[0] <= omega <= w[-1]:
        raise ValidationError(f"omega {omega} outside the unwrapped band [{w[0]}, {w[-1]}]")
    return float(np.interp(omega, w, ps.phase[ps.mask]))


@dataclass(frozen=True)
class RelativePhase:
    omega: np.ndarray
    dphi: np.ndarray
    mask: np.ndarray
    omega0: float
    dphi_at_resonance: float


def relative_phase(run: PhaseSpectrum, base: PhaseSpectrum) -> RelativePhase:
    """Pointwise Phi_run - Phi_baseline with the shared 2*pi branch removed.

    Both spectra must come from identically gridded windows; anything else
    is a setup error, not something to resample over.
    """
    if run.omega.shape != base.omega.shape or not np.allclose(
        run.omega, base.omega, rtol=0.0, atol=1e-12
    ):
        raise GridError("run and baseline spectra are on different frequency grids")
    if abs(run.t_off - base.t_off) > 1e-12:
        raise GridError("run and baseline use different t_off windows")
    mask = run.mask & base.mask
    dphi = run.phase - base.phase
    branch = 2.0 * math.pi * np.round(np.nanmedian(dphi[mask]) / (2.0 * math.pi))
    dphi = dphi - branch
    w = run.omega[mask]
    value = float(np.interp(run.omega0, w, dphi[mask]))
    return RelativePhase(
        omega=run.omega, dphi=dphi, mask=mask, omega0=run.omega0, dphi_at_resonance=value
    )


def phase_pipeline(traj, policy: SpectralPolicy | None = None, source: str = "cavity") -> PhaseSpectrum:
    """fid_window -> fourier -> phase_spectrum with one policy object."""
    policy = policy or SpectralPolicy()
    win = fid_window(traj, policy=policy, source=source)
    spec = fourier(win, resolution=effective_decay(traj.config) / policy.resolution_factor)
    return phase_spectrum(spec, band_factor=policy.band_factor, noise_floor=policy.noise_floor)


def nonlinear_phase_shift(
    traj, baseline_traj, policy: SpectralPolicy | None = None, source: str = "cavity"
) -> float:
    """Delta Phi(omega0) of a run against its baseline run."""
    run = phase_pipeline(traj, policy, source)
    base = phase_pipeline(baseline_traj, policy, source)
    return relative_phase(run, base).dphi_at_resonance


@dataclass(frozen=True)
class EquivalenceReport:
    """Delta Phi(omega0) extracted from the cavity and the dipole coherence."""

    dphi_cavity: float
    dphi_dipole: float
    filter_phase: float  # Phi_cavity(omega0) - Phi_dipole(omega0) of the run

    @property
    def difference(self) -> float:
        return self.dphi_cavity - self.dphi_dipole


def dipole_phase_equivalence(traj, baseline_traj, policy: SpectralPolicy | None = None) -> EquivalenceReport:
    policy = policy or SpectralPolicy()
    run_cav = phase_pipeline(traj, policy, "cavity")
    run_dip = phase_pipeline(traj, policy, "bright")
    base_cav = phase_pipeline(baseline_traj, policy, "cavity")
    base_dip = phase_pipeline(baseline_traj, policy, "bright")
    return EquivalenceReport(
        dphi_cavity=relative_phase(run_cav, base_cav).dphi_at_resonance,
        dphi_dipole=relative_phase(run_dip, base_dip).dphi_at_resonance,
        filter_phase=phase_at(run_cav) - phase_at(run_dip),
    )


@dataclass(frozen=True)
class NonlinearPhaseResult:
    """Quadratic fit of Delta Phi(omega0) against the drive ratio F0/kappa."""

    points: tuple              # (F0/kappa, dphi) pairs used
    alpha: float
    quad_coeff: float          # C in dphi = C * (F0/kappa)^2
    exponent: float            # free power-law exponent diagnostic
    residual: float            # rms residual relative to max |dphi|
    fit_range: tuple           # (min, max) of F0/kappa actually fitted
    in_regime: bool
    gamma_tilde: float
    U: float
    N: int


def fit_alpha(
    points,
    cfg: SystemConfig,
    *,
    fit_range: tuple[float, float] | None = None,
    residual_threshold: float = 0.05,
) -> NonlinearPhaseResult:
    """Least-squares dphi = C*(F0/kappa)^2 and alpha = C*N*gamma_tilde/(2U).

    Needs at least five points inside the fit range; a large residual or a
    power-law exponent far from 2 flags the breakdown of the quadratic
    regime rather than silently extrapolating through it.
    """
    pts = sorted((float(r), float(p)) for r, p in points)
    if fit_range is not None:
        pts = [(r, p) for r, p in pts if fit_range[0] <= r <= fit_range[1]]
    if len(pts) < 5:
        raise ValidationError(f"need >= 5 drive points in the fit range, got {len(pts)}")
    u = cfg.dipoles[0].anharmonicity
    if any(d.anharmonicity != u for d in cfg.dipoles):
        raise ValidationError("fit_alpha requires a common anharmonicity")
    if u <= 0:
        raise ValidationError("alpha is undefined for harmonic wells (U = 0)")
    gamma_tilde = purcell_rate(cfg)

    r = np.array([p[0] for p in pts])
    dphi = np.array([p[1] for p in pts])
    quad = float(np.sum(dphi * r**2) / np.sum(r**4))
    nonzero = np.abs(dphi) > 0
    if nonzero.sum() >= 2:
        exponent = float(np.polyfit(np.log(r[nonzero]), np.log(np.abs(dphi[nonzero])), 1)[0])
    else:
        exponent = float("nan")
    residual = float(np.sqrt(np.mean((dphi - quad * r**2) ** 2)) / np.max(np.abs(dphi)))
    return NonlinearPhaseResult(
        points=tuple(pts),
        alpha=quad * cfg.n_wells * gamma_tilde / (2.0 * u),
        quad_coeff=quad,
        exponent=exponent,
        residual=residual,
        fit_range=(float(r[0]), float(r[-1])),
        in_regime=residual <= residual_threshold,
        gamma_tilde=gamma_tilde,
        U=u,
        N=cfg.n_wells,
    )


@dataclass(frozen=True)
class DelaySeries:
    """Signed extremum time offsets strong-vs-weak along the weak trace."""

    times: np.ndarray
    delays: np.ndarray
    kinds: np.ndarray  # +1 for peaks, -1 for dips
    n_dropped: int


def _extrema(t: np.ndarray, x: np.ndarray):
    """Interior extrema with parabolic sub-sample refinement."""
    s = np.diff(x)
    idx = np.flatnonzero(s[:-1] * s[1:] < 0) + 1
    dt = t[1] - t[0]
    times, kinds, values = [], [], []
    for i in idx:
        y0, y1, y2 = x[i - 1], x[i], x[i + 1]
        curv = y0 - 2.0 * y1 + y2
        if curv == 0.0:
            continue
        times.append(t[i] + 0.5 * (y0 - y2) / curv * dt)
        kinds.append(1 if curv < 0 else -1)
        values.append(y1)
    return np.array(times), np.array(kinds), np.array(values)


def time_delay(
    strong: MeanFieldTrajectory,
    weak: MeanFieldTrajectory,
    *,
    source: str = "bright",
    amp_floor: float = 1e-6,
) -> DelaySeries:
    """Match same-kind extrema of Re of the lab-frame coherence and report
    the signed time offset of the strong trace at each weak extremum.

    Extrema are matched to the nearest candidate within half a carrier
    period; weak extrema below `amp_floor` of the trace peak (signal death)
    and unmatched ones are dropped.
    """
    cfg_s = set_config_value(strong.config, "pulse.F0", 0.0)
    cfg_w = set_config_value(weak.config, "pulse.F0", 0.0)
    if cfg_s != cfg_w:
        raise ValidationError("trajectories must share all parameters except F0")
    if strong.t.shape != weak.t.shape or not np.allclose(strong.t, weak.t, rtol=0, atol=1e-12):
        raise GridError("trajectories must share the time grid")

    xs = np.real(strong.lab_signal(source))
    xw = np.real(weak.lab_signal(source))
    ts, ks, _ = _extrema(strong.t, xs)
    tw, kw, vw = _extrema(weak.t, xw)
    floor = amp_floor * np.max(np.abs(xw))
    half_period = math.pi / strong.config.pulse.carrier

    times, delays, kinds = [], [], []
    dropped = 0
    for t_i, k_i, v_i in zip(tw, kw, vw):
        if abs(v_i) < floor:
            dropped += 1
            continue
        same = ts[ks == k_i]
        if len(same) == 0:
            dropped += 1
            continue
        j = int(np.argmin(np.abs(same - t_i)))
        if abs(same[j] - t_i) >= half_period:
            dropped += 1
            continue
        times.append(t_i)
        delays.append(same[j] - t_i)
        kinds.append(k_i)
    return DelaySeries(
        times=np.array(times), delays=np.array(delays), kinds=np.array(kinds), n_dropped=dropped
    )


def write_phase_csv(ps: PhaseSpectrum, path) -> None:
    lines = [
        f"# source: {ps.source}",
        f"# t_off: {ps.t_off!r}",
        f"# convention: {FFT_CONVENTION}",
        "omega,re,im,magnitude,phase_unwrapped",
    ]
    for i, w in enumerate(ps.omega):
        phase = ps.phase[i] if ps.mask[i] else float("nan")
        lines.append(
            ",".join(
                repr(float(v))
                for v in (w, ps.values[i].real, ps.values[i].imag, ps.magnitude[i], phase)
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_fit_json(result: NonlinearPhaseResult, path) -> None:
    payload = {
        "points": [[r, p] for r, p in result.points],
        "alpha": result.alpha,
        "quad_coeff": result.quad_coeff,
        "exponent": result.exponent,
        "residual": result.residual,
        "fit_range": list(result.fit_range),
        "in_regime": result.in_regime,
        "gamma_tilde": result.gamma_tilde,
        "U": result.U,
        "N": result.N,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

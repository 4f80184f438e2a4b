"""Density-matrix propagation of the driven cavity-well system.

The joint Hilbert space is a truncated Fock ladder for the cavity tensored
with (nu_max+1)-level Kerr ladders for each well, cavity index slowest.
The master-equation right-hand side acts directly on the D x D matrix (no
superoperator), integrated with the same adaptive RK pair and tolerances
as the mean-field solver so expectation series are directly comparable.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp

from .errors import ConfigError, SolverError, TruncationError, ValidationError
from .meanfield import default_dt, uniform_grid
from .model import Frame, SystemConfig, config_to_dict

DIM_CAP_DEFAULT = 4096


@dataclass(frozen=True)
class HilbertConfig:
    """Truncation of the joint cavity (x) wells space."""

    n_photon_max: int
    nu_max: int = 2
    n_wells: int = 2
    dim_cap: int = DIM_CAP_DEFAULT

    def __post_init__(self):
        if self.n_photon_max < 1 or self.nu_max < 1 or self.n_wells < 1:
            raise ConfigError("n_photon_max, nu_max and n_wells must all be >= 1")
        if self.dim > self.dim_cap:
            raise ConfigError(
                f"total dimension {self.dim} exceeds the cap {self.dim_cap}; "
                "lower the truncation or raise dim_cap explicitly"
            )

    @property
    def dim(self) -> int:
        return (self.n_photon_max + 1) * (self.nu_max + 1) ** self.n_wells


@dataclass(frozen=True)
class OperatorMatrix:
    """Sparse operator on the joint space, cavity index slowest."""

    matrix: sp.csr_matrix
    hilbert: HilbertConfig
    label: str

    def __post_init__(self):
        if self.matrix.shape != (self.hilbert.dim, self.hilbert.dim):
            raise ValidationError(
                f"operator {self.label!r} has shape {self.matrix.shape}, "
                f"expected {(self.hilbert.dim, self.hilbert.dim)}"
            )

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def _destroy(dim: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, dim)), 1, format="csr", dtype=complex)


def _embed(factors) -> sp.csr_matrix:
    out = factors[0]
    for f in factors[1:]:
        out = sp.kron(out, f, format="csr")
    return out


@dataclass(frozen=True)
class Operators:
    a: OperatorMatrix
    b: tuple


def build_operators(h: HilbertConfig) -> Operators:
    """Annihilation operators embedded with identities on the other factors."""
    d_ph = h.n_photon_max + 1
    d_w = h.nu_max + 1
    eye_ph = sp.identity(d_ph, format="csr", dtype=complex)
    eye_w = sp.identity(d_w, format="csr", dtype=complex)
    a = _embed([_destroy(d_ph)] + [eye_w] * h.n_wells)
    wells = []
    for n in range(h.n_wells):
        factors = [eye_ph] + [eye_w] * h.n_wells
        factors[1 + n] = _destroy(d_w)
        wells.append(OperatorMatrix(_embed(factors), h, f"b{n + 1}"))
    return Operators(a=OperatorMatrix(a, h, "a"), b=tuple(wells))


def build_hamiltonian(cfg: SystemConfig, h: HilbertConfig, frame: Frame = Frame.LAB) -> OperatorMatrix:
    """Static Hamiltonian: cavity + Kerr ladders + co-rotating coupling.

    In the rotating frame the drive carrier is subtracted from every mode
    frequency; the Kerr and coupling terms are invariant.
    """
    if h.n_wells != cfg.n_wells:
        raise ConfigError(
            f"HilbertConfig has {h.n_wells} wells but the system config has {cfg.n_wells}"
        )
    shift = cfg.pulse.carrier if frame is Frame.ROTATING else 0.0
    ops = build_operators(h)
    a = ops.a.matrix
    ham = (cfg.cavity.omega_c - shift) * (a.conj().T @ a)
    for d, b_op in zip(cfg.dipoles, ops.b):
        b = b_op.matrix
        bd = b.conj().T
        ham = ham + (d.omega - shift) * (bd @ b)
        ham = ham - d.anharmonicity * (bd @ bd @ b @ b)
        ham = ham + d.coupling * (a @ bd + a.conj().T @ b)
    return OperatorMatrix(ham.tocsr(), h, f"H_{frame.value}")


def drive_operator(h: HilbertConfig) -> OperatorMatrix:
    ops = build_operators(h)
    a = ops.a.matrix
    return OperatorMatrix((a + a.conj().T).tocsr(), h, "a+adag")


@functools.lru_cache(maxsize=8)
def _context(cfg: SystemConfig, h: HilbertConfig, frame: Frame):
    ops = build_operators(h)
    a = ops.a.dense()
    h0 = build_hamiltonian(cfg, h, frame).dense()
    jump = [(cfg.cavity.kappa, a)] + [
        (d.gamma, b.dense()) for d, b in zip(cfg.dipoles, ops.b)
    ]
    half_ll = sum(0.5 * rate * (op.conj().T @ op) for rate, op in jump)
    a0 = -1j * h0 - half_ll
    return {
        "a_op": a,
        "ad_op": a.conj().T,
        "a0": a0,
        "jump": [(rate, op, op.conj().T) for rate, op in jump],
        "dim": h.dim,
    }


def _drive_phase(cfg: SystemConfig, frame: Frame, t: float) -> complex:
    # coefficient of the bare annihilation operator in H_d(t)
    amp = cfg.pulse.amplitude * math.exp(
        -((t - cfg.pulse.center) ** 2) / (2.0 * cfg.pulse.duration**2)
    )
    if frame is Frame.ROTATING:
        return amp
    return amp * np.exp(1j * cfg.pulse.carrier * t)


def _rhs_matrix(rho: np.ndarray, t: float, cfg: SystemConfig, ctx, frame: Frame) -> np.ndarray:
    c = _drive_phase(cfg, frame, t)
    a_eff = ctx["a0"] - 1j * (c * ctx["a_op"] + np.conj(c) * ctx["ad_op"])
    out = a_eff @ rho + rho @ a_eff.conj().T
    for rate, op, op_dag in ctx["jump"]:
        out += rate * (op @ rho @ op_dag)
    return out


def lindblad_rhs(
    rho: np.ndarray, t: float, cfg: SystemConfig, h: HilbertConfig, frame: Frame = Frame.LAB
) -> np.ndarray:
    """Master-equation right-hand side for one density matrix.

    Traceless by construction and Hermiticity-preserving for Hermitian rho.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (h.dim, h.dim):
        raise ValidationError(f"rho has shape {rho.shape}, expected {(h.dim, h.dim)}")
    return _rhs_matrix(rho, t, cfg, _context(cfg, h, frame), frame)


def vacuum_state(h: HilbertConfig) -> np.ndarray:
    rho = np.zeros((h.dim, h.dim), dtype=complex)
    rho[0, 0] = 1.0
    return rho


@dataclass(frozen=True)
class DensityMatrix:
    """One checkpointed joint state with its sample time."""

    matrix: np.ndarray
    time: float

    def deviations(self) -> dict:
        rho = self.matrix
        return {
            "trace": abs(np.trace(rho).real - 1.0) + abs(np.trace(rho).imag),
            "hermiticity": float(np.abs(rho - rho.conj().T).max()),
            "min_eigenvalue": float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min()),
        }

    def validate(self, trace_tol=1e-8, herm_tol=1e-10, eig_tol=1e-8) -> dict:
        dev = self.deviations()
        if dev["trace"] > trace_tol:
            raise ValidationError(f"trace deviation {dev['trace']:.2e} exceeds {trace_tol}")
        if dev["hermiticity"] > herm_tol:
            raise ValidationError(f"hermiticity deviation {dev['hermiticity']:.2e} exceeds {herm_tol}")
        if dev["min_eigenvalue"] < -eig_tol:
            raise ValidationError(f"negative eigenvalue {dev['min_eigenvalue']:.2e} beyond {eig_tol}")
        return dev


def _well_levels(h: HilbertConfig) -> np.ndarray:
    """levels[n, i] = occupation of well n in basis state i."""
    idx = np.arange(h.dim)
    d_w = h.nu_max + 1
    within = idx % d_w ** h.n_wells
    levels = np.empty((h.n_wells, h.dim), dtype=int)
    for n in range(h.n_wells):
        levels[n] = (within // d_w ** (h.n_wells - 1 - n)) % d_w
    return levels


def _photon_levels(h: HilbertConfig) -> np.ndarray:
    return np.arange(h.dim) // (h.nu_max + 1) ** h.n_wells


@dataclass(frozen=True)
class LindbladResult:
    """Expectation series plus density-matrix checkpoints of one evolution."""

    t: np.ndarray
    exp_a: np.ndarray
    exp_n: np.ndarray          # photon number <a^dag a>
    exp_b: np.ndarray          # shape (N, len(t))
    populations: np.ndarray    # shape (N, nu_max+1, len(t))
    frame: Frame
    config: SystemConfig
    hilbert: HilbertConfig
    checkpoints: tuple
    diagnostics: dict

    def bright(self) -> np.ndarray:
        return self.exp_b.sum(axis=0) / math.sqrt(self.exp_b.shape[0])

    def dark(self) -> np.ndarray:
        if self.exp_b.shape[0] != 2:
            raise ValidationError("dark mode is only defined for N = 2")
        return (self.exp_b[0] - self.exp_b[1]) / math.sqrt(2.0)

    def signal(self, source: str) -> np.ndarray:
        if source == "cavity":
            return self.exp_a
        if source == "bright":
            return self.bright()
        if source == "dark":
            return self.dark()
        raise ValidationError(f"unknown source {source!r}")

    def lab_signal(self, source: str = "cavity") -> np.ndarray:
        x = self.signal(source)
        if self.frame is Frame.ROTATING:
            return x * np.exp(-1j * self.config.pulse.carrier * self.t)
        return x

    def second_level_population(self) -> np.ndarray:
        """Per-well average P2(t); wells are reported jointly for N = 2."""
        if self.hilbert.nu_max < 2:
            raise ValidationError("P2 requires nu_max >= 2")
        return self.populations[:, 2, :].mean(axis=0)

    def write_csv(self, path) -> None:
        n = self.exp_b.shape[0]
        names = ["a", "B0"] + (["B1"] if n == 2 else [])
        series = [self.exp_a, self.bright()] + ([self.dark()] if n == 2 else [])
        header = ["t"] + [f"re_{nm},im_{nm}" for nm in names]
        header += [f"p{nu}_{w + 1}" for w in range(n) for nu in range(self.hilbert.nu_max + 1)]
        lines = [
            f"# frame: {self.frame.value}",
            f"# n_photon_max: {self.hilbert.n_photon_max}, nu_max: {self.hilbert.nu_max}",
            ",".join(header),
        ]
        for i, ti in enumerate(self.t):
            row = [repr(float(ti))]
            for s in series:
                row += [repr(float(s[i].real)), repr(float(s[i].imag))]
            for w in range(n):
                row += [repr(float(self.populations[w, nu, i])) for nu in range(self.hilbert.nu_max + 1)]
            lines.append(",".join(row))
        Path(path).write_text("\n".join(lines) + "\n")

    def write_sidecar(self, path) -> None:
        payload = {
            "config": config_to_dict(self.config),
            "hilbert": {
                "n_photon_max": self.hilbert.n_photon_max,
                "nu_max": self.hilbert.nu_max,
                "n_wells": self.hilbert.n_wells,
            },
            "frame": self.frame.value,
            "diagnostics": self.diagnostics,
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def evolve(
    rho0: np.ndarray,
    t_span: tuple[float, float],
    cfg: SystemConfig,
    h: HilbertConfig,
    *,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    dt: float | None = None,
    frame: Frame = Frame.ROTATING,
    n_checkpoints: int = 17,
    top_level_tol: float = 1e-4,
    positivity_tol: float = 1e-6,
    chunk: int = 256,
) -> LindbladResult:
    """Propagate rho0 and record expectation series on a uniform grid.

    Raises TruncationError when the top photon level acquires > 1e-4
    population (the Fock cutoff is then too low for this drive) and
    SolverError when positivity degrades beyond `positivity_tol`.
    """
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (h.dim, h.dim):
        raise ValidationError(f"rho0 has shape {rho0.shape}, expected {(h.dim, h.dim)}")
    DensityMatrix(matrix=rho0, time=t_span[0]).validate()
    ctx = _context(cfg, h, frame)
    grid = uniform_grid(t_span, dt if dt is not None else default_dt(cfg))
    nt = len(grid)
    d = h.dim

    levels = _well_levels(h)
    photon = _photon_levels(h)
    top_photon = photon == h.n_photon_max
    a_t = ctx["a_op"].T.copy()
    b_t = [op.T.copy() for _, op, _ in ctx["jump"][1:]]

    exp_a = np.empty(nt, dtype=complex)
    exp_n = np.empty(nt)
    exp_b = np.empty((h.n_wells, nt), dtype=complex)
    pops = np.empty((h.n_wells, h.nu_max + 1, nt))
    max_trace_dev = 0.0
    max_herm_dev = 0.0
    max_top = 0.0

    check_idx = sorted(set(np.linspace(0, nt - 1, n_checkpoints).astype(int)))
    checkpoints = []
    min_eig = np.inf

    def record(i: int, rho: np.ndarray):
        nonlocal max_trace_dev, max_herm_dev, max_top, min_eig
        diag = rho.diagonal().real
        exp_a[i] = np.sum(a_t * rho)
        exp_n[i] = float(diag @ photon)
        for n in range(h.n_wells):
            exp_b[n, i] = np.sum(b_t[n] * rho)
            for nu in range(h.nu_max + 1):
                pops[n, nu, i] = diag[levels[n] == nu].sum()
        top = diag[top_photon].sum()
        max_top = max(max_top, top)
        if top > top_level_tol:
            raise TruncationError(
                f"population {top:.2e} in the top photon level at t={grid[i]:.3f} "
                f"(n_photon_max={h.n_photon_max} too low for this drive)"
            )
        max_trace_dev = max(max_trace_dev, abs(diag.sum() - 1.0))
        max_herm_dev = max(max_herm_dev, float(np.abs(rho - rho.conj().T).max()))
        if i in check_idx:
            dm = DensityMatrix(matrix=rho.copy(), time=float(grid[i]))
            eig = dm.deviations()["min_eigenvalue"]
            min_eig = min(min_eig, eig)
            if eig < -positivity_tol:
                raise SolverError(
                    f"positivity violated at t={grid[i]:.3f}: min eigenvalue {eig:.2e} "
                    f"(trace dev {max_trace_dev:.2e}, herm dev {max_herm_dev:.2e})"
                )
            checkpoints.append(dm)

    record(0, rho0)
    y = rho0.reshape(-1)
    for start in range(0, nt - 1, chunk):
        stop = min(start + chunk, nt - 1)
        sol = solve_ivp(
            lambda t, yy: _rhs_matrix(yy.reshape(d, d), t, cfg, ctx, frame).reshape(-1),
            t_span=(grid[start], grid[stop]),
            y0=y,
            t_eval=grid[start + 1 : stop + 1],
            method="RK45",
            rtol=rtol,
            atol=atol,
        )
        if not sol.success:
            raise SolverError(f"Lindblad integration failed: {sol.message}")
        for j in range(sol.y.shape[1]):
            record(start + 1 + j, sol.y[:, j].reshape(d, d))
        y = sol.y[:, -1]

    return LindbladResult(
        t=grid,
        exp_a=exp_a,
        exp_n=exp_n,
        exp_b=exp_b,
        populations=pops,
        frame=frame,
        config=cfg,
        hilbert=h,
        checkpoints=tuple(checkpoints),
        diagnostics={
            "max_trace_dev": max_trace_dev,
            "max_herm_dev": max_herm_dev,
            "min_eigenvalue": float(min_eig),
            "max_top_population": max_top,
        },
    )


def second_level_population(result: LindbladResult) -> np.ndarray:
    return result.second_level_population()


def write_checkpoints(result: LindbladResult, path_base) -> None:
    """Dump checkpoints as raw row-major little-endian complex128 pairs."""
    base = Path(path_base)
    bin_path = base.with_suffix(".bin")
    payload = b"".join(
        np.ascontiguousarray(cp.matrix).astype("<c16").tobytes() for cp in result.checkpoints
    )
    bin_path.write_bytes(payload)
    header = {
        "file": bin_path.name,
        "dim": result.hilbert.dim,
        "count": len(result.checkpoints),
        "times": [cp.time for cp in result.checkpoints],
        "dtype": "complex128",
        "byte_order": "little",
        "layout": "row-major",
    }
    base.with_suffix(".json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")


def read_checkpoints(path_base) -> list[DensityMatrix]:
    base = Path(path_base)
    header = json.loads(base.with_suffix(".json").read_text())
    d = header["dim"]
    raw = np.frombuffer(base.with_suffix(".bin").read_bytes(), dtype="<c16")
    out = []
    for k, t in enumerate(header["times"]):
        block = raw[k * d * d : (k + 1) * d * d].reshape(d, d).astype(complex)
        out.append(DensityMatrix(matrix=block, time=float(t)))
    return out

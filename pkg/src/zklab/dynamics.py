"""Time integration of  u_t + d_x Lap u = sign * d_x(u^(k+1)) (+ forcing).

In Fourier variables the linear part is  u_hat' = i phi u_hat, so the free
group is the multiplier exp(i t phi) and an integrating-factor RK4 scheme
handles the dispersion exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .invariants import energy, mass
from .spectral import (
    Field,
    GridSpec,
    RealField,
    SpectralField,
    as_spectral,
    inverse_samples,
    phase,
    power_coeffs,
    required_pad,
    sobolev_norm,
)

__all__ = [
    "EquationSpec",
    "StepperConfig",
    "Trajectory",
    "IntegrationError",
    "StabilityError",
    "nonlinear_term",
    "step",
    "simulate",
    "Stepper",
    "stability_limit",
    "rescale_initial",
    "manufactured_forcing",
    "separable_target",
]


class IntegrationError(RuntimeError):
    """Non-finite state; ``time`` is the time at which it was detected."""

    def __init__(self, message: str, time: float, partial: Optional["Trajectory"] = None):
        super().__init__(message)
        self.time = time
        self.partial = partial


class StabilityError(ValueError):
    pass


@dataclass(frozen=True)
class EquationSpec:
    k: int
    sign: int = 1
    nonlinear: bool = True

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer (got {self.k!r})")
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1 (got {self.sign!r})")

    @property
    def label(self) -> str:
        return f"k={self.k},sign={'+' if self.sign > 0 else '-'}"


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    scheme: str = "IFRK4"
    sample_every: int = 1
    c_safe: float = 0.5

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive (got {self.dt!r})")
        if self.scheme != "IFRK4":
            raise ValueError(f"unknown scheme {self.scheme!r}; only IFRK4 is available")
        if int(self.sample_every) != self.sample_every or self.sample_every < 1:
            raise ValueError("sample_every must be an integer >= 1")


def stability_limit(u: Field, spec: EquationSpec, c_safe: float = 0.5) -> float:
    """Largest dt allowed by  dt <= c_safe / ((k+1) max|u| max|xi|)."""
    if not spec.nonlinear:
        return math.inf
    f = as_spectral(u)
    umax = float(np.max(np.abs(inverse_samples(f.grid, f.coeffs))))
    denom = (spec.k + 1) * umax * f.grid.max_abs_xi
    return math.inf if denom == 0 else c_safe / denom


Forcing = Callable[[float], np.ndarray]


def nonlinear_term(u: Field, spec: EquationSpec) -> SpectralField:
    """sign * d_x(u^(k+1)), dealiased, as a spectral field."""
    f = as_spectral(u)
    g = f.grid
    if not spec.nonlinear:
        return SpectralField.zeros(g)
    return SpectralField(g, _nonlinear(g, f.coeffs, spec))


def _nonlinear(g: GridSpec, c: np.ndarray, spec: EquationSpec) -> np.ndarray:
    return (spec.sign * 1j) * g.XI * power_coeffs(g, c, spec.k + 1)


class Stepper:
    """IFRK4 stepper with precomputed integrating factors for a fixed dt."""

    def __init__(self, grid: GridSpec, spec: EquationSpec, dt: float, forcing: Optional[Forcing] = None):
        if spec.nonlinear and grid.pad_factor < required_pad(spec.k + 1):
            raise ValueError(
                f"pad_factor {grid.pad_factor} is too small for k={spec.k}; "
                f"need at least {required_pad(spec.k + 1)}"
            )
        self.grid, self.spec, self.dt, self.forcing = grid, spec, dt, forcing
        ph = phase(grid.XI, grid.Q)
        self.E1 = np.where(grid.band_mask, np.exp(0.5j * dt * ph), 0)
        self.E2 = self.E1 * self.E1

    def rhs(self, c: np.ndarray, t: float) -> np.ndarray:
        out = _nonlinear(self.grid, c, self.spec) if self.spec.nonlinear else np.zeros_like(c)
        if self.forcing is not None:
            out = out + np.where(self.grid.band_mask, self.forcing(t), 0)
        return out

    def __call__(self, c: np.ndarray, t: float) -> np.ndarray:
        dt, E1, E2 = self.dt, self.E1, self.E2
        if not self.spec.nonlinear and self.forcing is None:
            return E2 * c
        k1 = self.rhs(c, t)
        k2 = self.rhs(E1 * (c + 0.5 * dt * k1), t + 0.5 * dt)
        k3 = self.rhs(E1 * c + 0.5 * dt * k2, t + 0.5 * dt)
        k4 = self.rhs(E2 * c + dt * E1 * k3, t + dt)
        return E2 * c + (dt / 6.0) * (E2 * k1 + 2.0 * E1 * (k2 + k3) + k4)


def _check_finite(c: np.ndarray, t: float, partial=None):
    if not np.all(np.isfinite(c)):
        raise IntegrationError(f"non-finite state at t={t:.6g}", t, partial)


def step(
    u: Field,
    spec: EquationSpec,
    cfg: StepperConfig,
    t: float = 0.0,
    forcing: Optional[Forcing] = None,
) -> SpectralField:
    """One IFRK4 step of size ``cfg.dt`` starting at time ``t``."""
    f = as_spectral(u)
    limit = stability_limit(f, spec, cfg.c_safe)
    if cfg.dt > limit:
        raise StabilityError(f"dt={cfg.dt:.3g} exceeds the stability limit {limit:.3g}")
    out = Stepper(f.grid, spec, cfg.dt, forcing)(np.where(f.grid.band_mask, f.coeffs, 0), t)
    _check_finite(out, t + cfg.dt)
    return SpectralField(f.grid, out)


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    snapshots: list
    diagnostics: dict
    spec: EquationSpec
    cfg: StepperConfig
    blowup: bool = False

    @property
    def grid(self) -> GridSpec:
        return self.snapshots[0].grid

    def index_of(self, t: float, rtol: float = 1e-9) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > rtol * max(1.0, abs(t)):
            raise KeyError(f"t={t!r} is not a sampled time")
        return i

    def window(self, t0: float, t1: float) -> slice:
        return slice(self.index_of(t0), self.index_of(t1) + 1)

    def to_csv(self, path) -> None:
        """One row per sample, 17 significant digits."""
        keys = list(self.diagnostics)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + keys)
            for i, t in enumerate(self.times):
                w.writerow([f"{t:.17g}"] + [f"{self.diagnostics[k][i]:.17g}" for k in keys])


def _diagnostics_at(
    f: SpectralField,
    spec: EquationSpec,
    sobolev_orders: Sequence[float],
    ispecs: Sequence,
) -> dict:
    row = {"mass": mass(f), "energy": energy(f, spec)}
    for s in sobolev_orders:
        row[f"H^{s:g}"] = sobolev_norm(f, s)
    if ispecs:
        from .imethod import modified_energy

        for isp in ispecs:
            row[f"EI[N={isp.N:g},s={isp.s:g}]"] = modified_energy(f, isp, spec)
    return row


def simulate(
    u0: Field,
    spec: EquationSpec,
    cfg: StepperConfig,
    T: float,
    forcing: Optional[Forcing] = None,
    *,
    sobolev_orders: Sequence[float] = (),
    ispecs: Sequence = (),
    diagnostics: bool = True,
) -> Trajectory:
    """Integrate from t=0 to T; samples every ``sample_every`` steps plus t=T.

    dt is shrunk to T/ceil(T/dt) so that T is hit exactly.
    """
    if not T > 0:
        raise ValueError(f"T must be positive (got {T!r})")
    f0 = as_spectral(u0)
    g = f0.grid
    nsteps = max(1, math.ceil(T / cfg.dt - 1e-12))
    dt = T / nsteps
    limit = stability_limit(f0, spec, cfg.c_safe)
    if dt > limit:
        raise StabilityError(f"dt={dt:.3g} exceeds the stability limit {limit:.3g}")
    stepper = Stepper(g, spec, dt, forcing)
    c = np.where(g.band_mask, f0.coeffs, 0)
    times, snaps, rows = [0.0], [SpectralField(g, c)], []
    blowup = False

    def record(cc):
        nonlocal blowup
        if diagnostics:
            row = _diagnostics_at(SpectralField(g, cc), spec, sobolev_orders, ispecs)
            if not all(math.isfinite(v) and abs(v) < 1e300 for v in row.values()):
                blowup = True
            rows.append(row)

    record(c)
    for n in range(1, nsteps + 1):
        c = stepper(c, (n - 1) * dt)
        if n % cfg.sample_every == 0 or n == nsteps:
            t = n * dt
            if not np.all(np.isfinite(c)):
                partial = _assemble(times, snaps, rows, spec, cfg, True)
                raise IntegrationError(f"non-finite state at t={t:.6g}", t, partial)
            times.append(t)
            snaps.append(SpectralField(g, c))
            record(c)
    return _assemble(times, snaps, rows, spec, cfg, blowup)


def _assemble(times, snaps, rows, spec, cfg, blowup) -> Trajectory:
    diag = {}
    if rows:
        for key in rows[0]:
            diag[key] = np.array([r[key] for r in rows])
    return Trajectory(np.array(times), snaps, diag, spec, cfg, blowup)


def rescale_initial(u0: Field, lam, k: int):
    """u_lam(x, y) = lam^(-2/k) u0(x/lam, y/lam) on the lam-dilated box.

    Grid samples are reused, so in Fourier variables this is the relabeling
    g_hat(xi, q) = lam^(2 - 2/k) u0_hat(lam xi, lam q).
    """
    if isinstance(lam, bool) or int(lam) != lam or lam < 1:
        raise ValueError(f"lambda must be a positive integer (got {lam!r})")
    lam = int(lam)
    src = u0.grid
    g = GridSpec(src.Lx * lam, src.lam * lam, src.Nx, src.Ny, src.pad_factor)
    if isinstance(u0, RealField):
        return RealField(g, u0.samples * lam ** (-2.0 / k))
    return SpectralField(g, u0.coeffs * lam ** (2.0 - 2.0 / k))


def manufactured_forcing(
    target: Callable[[float], np.ndarray],
    target_dt: Callable[[float], np.ndarray],
    grid: GridSpec,
    spec: EquationSpec,
) -> Forcing:
    """F = d_t u* + d_x Lap u* - sign d_x(u*^(k+1)) for a prescribed u*(t).

    ``target`` and ``target_dt`` return coefficient arrays of u* and its time
    derivative.
    """
    ph = phase(grid.XI, grid.Q)

    def forcing(t: float) -> np.ndarray:
        c = target(t)
        out = target_dt(t) - 1j * ph * c
        if spec.nonlinear:
            out = out - _nonlinear(grid, c, spec)
        return out

    return forcing


def separable_target(grid: GridSpec, amplitude: float = 1.0, Lt: float = 1.0):
    """u*(t) = A e^(-t) cos(x/Lt) cos(y) and its time derivative, as coefficients."""
    X, Y = grid.mesh()
    base = as_spectral(RealField(grid, amplitude * np.cos(X / Lt) * np.cos(Y))).coeffs
    base = np.where(grid.band_mask, base, 0)
    return (lambda t: math.exp(-t) * base), (lambda t: -math.exp(-t) * base)

"""The I-operator, modified energy and its increment, scaling checks and calculators.

The multiplier ``m`` equals 1 for radius r <= N and (r/N)^(s-1) for r >= 2N.
Between the two branches it is interpolated in log-radius by a smoothstep,
which keeps both branches exact, the junctions C^n and the profile monotone.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.special import comb

from .dynamics import EquationSpec, StepperConfig, Trajectory, rescale_initial, simulate
from .invariants import energy
from .spectral import (
    Field,
    GridSpec,
    SpectralField,
    as_spectral,
    power_coeffs,
    sobolev_norm,
)

__all__ = [
    "IMultiplierSpec",
    "smoothstep",
    "i_multiplier_value",
    "i_symbol",
    "apply_IN",
    "modified_energy",
    "increment_direct",
    "increment_commutator",
    "quarter_nyquist",
    "commutator_integrand",
    "scaling_checks",
    "lambda_choice",
    "decay_sweep",
    "DecayReport",
    "ThresholdReport",
    "thresholds",
    "alpha_growth",
    "theta_interpolation",
    "GronwallReport",
    "gronwall_check",
]


@dataclass(frozen=True)
class IMultiplierSpec:
    N: float
    s: float
    blend: int = 5

    def __post_init__(self):
        if not self.N > 0:
            raise ValueError(f"N must be positive (got {self.N!r})")
        if self.blend < 3 or self.blend % 2 == 0:
            raise ValueError(f"blend order must be odd and >= 3 (got {self.blend!r})")


def smoothstep(t, order: int = 5):
    """Generalized smoothstep of odd degree ``order``, clamped to [0, 1]."""
    n = (order - 1) // 2
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    acc = np.zeros_like(t)
    for i in range(n + 1):
        acc = acc + comb(n + i, i, exact=True) * comb(2 * n + 1, n - i, exact=True) * (-t) ** i
    return t ** (n + 1) * acc


def i_multiplier_value(xi, q, spec: IMultiplierSpec):
    r = np.hypot(xi, q)
    with np.errstate(divide="ignore"):
        rho = np.log(np.maximum(r, 1e-300) / spec.N)
    rho = np.clip(rho, 0.0, None)
    ln2 = math.log(2.0)
    weight = np.where(rho >= ln2, 1.0, smoothstep(rho / ln2, spec.blend))
    return np.exp((spec.s - 1.0) * weight * rho)


def i_symbol(spec: IMultiplierSpec):
    return lambda xi, q: i_multiplier_value(xi, q, spec)


def apply_IN(u: Field, spec: IMultiplierSpec) -> SpectralField:
    f = as_spectral(u)
    g = f.grid
    return SpectralField(g, f.coeffs * i_multiplier_value(g.XI, g.Q, spec))


def quarter_nyquist(grid: GridSpec) -> float:
    """A quarter of the smaller of the two Nyquist frequencies."""
    return 0.25 * min(math.pi * grid.Nx / grid.Lx, grid.Ny / (2 * grid.lam))


def modified_energy(u: Field, ispec: IMultiplierSpec, eqspec: EquationSpec) -> float:
    return energy(apply_IN(u, ispec), eqspec)


def increment_direct(
    traj: Trajectory, ispec: IMultiplierSpec, eqspec: EquationSpec, t0: float, t1: float
) -> float:
    i0, i1 = traj.index_of(t0), traj.index_of(t1)
    if i0 == i1:
        return 0.0
    return modified_energy(traj.snapshots[i1], ispec, eqspec) - modified_energy(
        traj.snapshots[i0], ispec, eqspec
    )


def _pair(g: GridSpec, a: np.ndarray, b: np.ndarray) -> float:
    """Real L^2 pairing of two band-limited real fields from their coefficients."""
    return float(np.sum(np.conj(a) * b).real) / g.volume


def commutator_integrand(u: Field, ispec: IMultiplierSpec, eqspec: EquationSpec) -> float:
    """Time derivative of the modified energy, written through the commutator.

    With v = I u and w = I(u^(k+1)) - v^(k+1) this is
    -sign <Lap v, d_x w> + <I(u^(k+1)), d_x w>.
    """
    f = as_spectral(u)
    g = f.grid
    k = eqspec.k
    c = np.where(g.band_mask, f.coeffs, 0)
    m = i_multiplier_value(g.XI, g.Q, ispec)
    v = m * c
    Iu_pow = m * power_coeffs(g, c, k + 1)
    w = Iu_pow - power_coeffs(g, v, k + 1)
    dxw = 1j * g.XI * w
    lap_v = -(g.XI**2 + g.Q**2) * v
    return -eqspec.sign * _pair(g, lap_v, dxw) + _pair(g, Iu_pow, dxw)


def increment_commutator(
    traj: Trajectory, ispec: IMultiplierSpec, eqspec: EquationSpec, t0: float, t1: float
) -> float:
    """Composite Simpson quadrature of the commutator form over stored snapshots."""
    sl = traj.window(t0, t1)
    times = traj.times[sl]
    if len(times) == 1:
        return 0.0
    if len(times) < 3:
        raise ValueError("need at least 3 snapshots in the window")
    vals = np.array([commutator_integrand(f, ispec, eqspec) for f in traj.snapshots[sl]])
    return float(simpson(vals, x=times))


# ------------------------------------------------------------------ scaling


def scaling_checks(u0: Field, lam: int, k: int, ispec: IMultiplierSpec) -> dict:
    """Measured constants in the rescaling estimates for the I-operator.

    Returns the exact L^2 ratio (should be 1) and the two measured constants
    C_L2 and C_grad.
    """
    f0 = as_spectral(u0)
    fl = rescale_initial(f0, lam, k)
    factor = float(lam) ** (1.0 - 2.0 / k)
    l2_0 = sobolev_norm(f0, 0)
    l2_ratio = sobolev_norm(fl, 0) / (factor * l2_0) if l2_0 > 0 else 1.0
    IN = apply_IN(fl, ispec)
    s, N = ispec.s, ispec.N
    hs = sobolev_norm(f0, s)
    g = IN.grid
    grad = math.sqrt(float(np.sum((g.XI**2 + g.Q**2) * np.abs(IN.coeffs) ** 2)) / g.volume)
    c_l2 = sobolev_norm(IN, 0) / (factor * l2_0) if l2_0 > 0 else 0.0
    denom = N ** (1.0 - s) * float(lam) ** (1.0 - 2.0 / k - s) * hs
    c_grad = grad / denom if denom > 0 else 0.0
    return {"lambda": lam, "k": k, "N": N, "s": s, "l2_ratio": l2_ratio, "C_L2": c_l2, "C_grad": c_grad}


def lambda_choice(equation: str, N: float, s: float, C: float = 1.0) -> float:
    if not 0 <= s < 1:
        raise ValueError(f"s must lie in [0, 1) (got {s!r})")
    if N < 1 or C < 1:
        raise ValueError("N and C must be >= 1")
    eq = equation.upper()
    if eq == "ZK":
        return C * N ** ((1 - s) / (1 + s))
    if eq == "MZK":
        if s == 0:
            raise ValueError("s must be positive for mZK")
        return C * N ** ((1 - s) / s)
    raise ValueError(f"unknown equation {equation!r}")


# -------------------------------------------------------------- decay sweep


@dataclass
class DecayReport:
    N: list
    increments: list
    resolved: list
    slope: Optional[float]
    slope_band: Optional[float]
    floor: float
    monotone: bool
    inconclusive: bool

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["N", "increment", "resolved", "fitted_slope"])
            slope = "" if self.slope is None else f"{self.slope:.17g}"
            for n, inc, ok in zip(self.N, self.increments, self.resolved):
                w.writerow([f"{n:.17g}", f"{inc:.17g}", int(ok), slope])


def decay_sweep(
    u0: Field,
    eqspec: EquationSpec,
    s: float,
    N_list: Sequence[float],
    cfg: StepperConfig,
    horizon: float = 1.0,
    floor_factor: float = 10.0,
) -> DecayReport:
    """|E[I_N u](horizon) - E[I_N u](0)| across N, with a log-log slope fit.

    The trajectory does not depend on N, so one run serves every N.  The noise
    floor is ``floor_factor`` times the drift of the plain energy.
    """
    N_list = [float(n) for n in N_list]
    if len(N_list) < 4:
        raise ValueError("need at least 4 values of N")
    ratios = np.array(N_list[1:]) / np.array(N_list[:-1])
    if not np.allclose(ratios, ratios[0], rtol=1e-9) or ratios[0] <= 1:
        raise ValueError("N_list must be an increasing geometric sequence")
    traj = simulate(u0, eqspec, cfg, horizon, diagnostics=False)
    first, last = traj.snapshots[0], traj.snapshots[-1]
    drift = abs(energy(last, eqspec) - energy(first, eqspec))
    scale = abs(energy(first, eqspec))
    floor = max(floor_factor * drift, 1e-14 * scale)
    incs = []
    for N in N_list:
        isp = IMultiplierSpec(N, s)
        incs.append(abs(modified_energy(last, isp, eqspec) - modified_energy(first, isp, eqspec)))
    resolved = [inc > floor for inc in incs]
    idx = [i for i, ok in enumerate(resolved) if ok]
    slope = band = None
    inconclusive = len(idx) < 3
    if not inconclusive:
        x = np.log(np.array(N_list)[idx])
        y = np.log(np.array(incs)[idx])
        A = np.vstack([x, np.ones_like(x)]).T
        coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
        slope = float(coef[0])
        dof = max(len(x) - 2, 1)
        resid = y - A @ coef
        se = math.sqrt(float(resid @ resid) / dof / float(((x - x.mean()) ** 2).sum()))
        band = 2.0 * se
    res_incs = [incs[i] for i in idx]
    monotone = all(b <= a * (1 + 1e-9) for a, b in zip(res_incs, res_incs[1:]))
    return DecayReport(N_list, incs, resolved, slope, band, floor, monotone, inconclusive)


# ------------------------------------------------------------- calculators


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


def alpha_growth(k: int, s) -> Fraction:
    """Polynomial growth exponent of the H^s norm."""
    s = _frac(s)
    return 4 * (s - 1) if k == 1 else s - 1


def theta_interpolation(k: int, s) -> Fraction:
    s = _frac(s)
    if s == 1:
        raise ValueError("theta is undefined at s = 1")
    return 1 / (4 * (s - 1)) if k == 1 else 1 / (s - 1)


@dataclass
class ThresholdReport:
    equation: str
    domain: str
    k: int
    s: Fraction
    epsilon_tilde: Fraction
    gwp_threshold: Fraction
    gwp_threshold_eps: Fraction
    lambda_exponent: Optional[Fraction]
    N_of_T_exponent: Optional[Fraction]
    growth_exponent: Optional[Fraction]
    alpha_growth: Optional[Fraction]
    theta_interpolation: Optional[Fraction]

    def to_json_dict(self) -> dict:
        out = {}
        for key, val in asdict(self).items():
            if isinstance(val, Fraction):
                out[key] = {"fraction": f"{val.numerator}/{val.denominator}", "value": float(val)}
            else:
                out[key] = val
        return out


def thresholds(
    equation: str,
    domain: str = "cylinder",
    k: Optional[int] = None,
    s=Fraction(9, 10),
    epsilon_tilde=0,
) -> ThresholdReport:
    """Closed-form thresholds and exponents, in exact rational arithmetic.

    Exponents that need s above the well-posedness threshold are filled only
    when 0 < s < 1; for s > 1 the growth data alpha and theta are filled.
    """
    eq = equation.upper()
    dom = domain.lower()
    s, eps = _frac(s), _frac(epsilon_tilde)
    if eps < 0:
        raise ValueError("epsilon_tilde must be nonnegative")
    if eq == "ZK":
        k = 1 if k is None else k
        base = Fraction(11, 13)
        with_eps = (11 + 4 * eps) / (13 - 4 * eps)
    elif eq == "MZK":
        k = 2 if k is None else k
        if dom == "cylinder":
            base, with_eps = Fraction(36, 49), 3 / (Fraction(49, 12) - eps)
        elif dom == "plane":
            base, with_eps = Fraction(2, 3), 3 / (Fraction(9, 2) - eps)
        else:
            raise ValueError(f"unknown domain {domain!r}")
    else:
        raise ValueError(f"unknown equation {equation!r}")
    if dom not in ("cylinder", "plane"):
        raise ValueError(f"unknown domain {domain!r}")

    lam_exp = n_exp = growth = None
    if s < 1:
        if s <= with_eps:
            raise ValueError(f"s = {s} is at or below the threshold {with_eps} ({eq}, {dom})")
        if eq == "ZK":
            lam_exp = (1 - s) / (1 + s)
            n_exp = 4 * (1 + s) / (13 * s - 11)
        else:
            lam_exp = (1 - s) / s
            n_exp = 12 * s / (49 * s - 36) if dom == "cylinder" else 2 * s / (3 * (3 * s - 2))
        growth = n_exp * (1 - s)
    alpha = theta = None
    if s > 1:
        alpha = alpha_growth(k, s)
        theta = theta_interpolation(k, s)
    return ThresholdReport(eq if eq == "ZK" else "mZK", dom, k, s, eps, base, with_eps, lam_exp, n_exp, growth, alpha, theta)


# ---------------------------------------------------------------- Gronwall


@dataclass
class GronwallReport:
    K1: float
    eps: float
    a0: float
    M: int
    d: float
    K2: float
    K2_tenth: float
    stabilized: bool
    bound_holds: bool
    empirical_exponent: float
    overflow_at: Optional[int] = None


def gronwall_check(K1: float, eps: float, a0: float, M: int, d: float) -> GronwallReport:
    """Worst-case iteration a_{m+1} = a_m + K1 (1 + a_m^(1-eps)).

    K2 is the smallest constant with a_m <= K2 (1+m)^d (1+a0) for m <= M;
    it is stabilized when the maximizing index lies in the first tenth.
    """
    if not (K1 > 0 and 0 < eps < 1 and a0 >= 0 and M >= 10):
        raise ValueError("need K1 > 0, 0 < eps < 1, a0 >= 0 and M >= 10")
    a = np.empty(M + 1)
    a[0] = a0
    x = float(a0)
    overflow_at = None
    with np.errstate(over="raise"):
        for m in range(M):
            x = x + K1 * (1.0 + x ** (1.0 - eps))
            if not math.isfinite(x):
                overflow_at = m + 1
                a = a[: m + 1]
                break
            a[m + 1] = x
    idx = np.arange(a.size)
    ratio = a / ((1.0 + idx) ** d * (1.0 + a0))
    run = np.maximum.accumulate(ratio)
    K2 = float(run[-1])
    K2_tenth = float(run[a.size // 10])
    stabilized = overflow_at is None and K2 <= K2_tenth * (1 + 1e-12)
    lo = max(1, a.size // 10)
    mm = idx[lo:]
    slope = float(np.polyfit(np.log(mm), np.log(a[lo:]), 1)[0])
    bound = bool(np.all(a <= K2 * (1.0 + idx) ** d * (1.0 + a0) * (1 + 1e-12)))
    return GronwallReport(K1, eps, a0, M, d, K2, K2_tenth, stabilized, bound, slope, overflow_at)

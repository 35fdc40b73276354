"""Leibniz expansions, frequency-restricted products and H^s growth identities.

For even s the operator I^s = (-Lap)^(s/2) is a differential operator, so
I^s(u^(k+1)) expands into products of derivatives of u with exact rational
coefficients.  The growth identities express d/dt ||u||^2_{H^s-dot} through
such products, and in the quadratic case through three frequency-restricted
products Pr1, Pr2, Pr3.
"""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb, factorial
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.integrate import simpson

from .dynamics import EquationSpec, Trajectory
from .imethod import alpha_growth
from .spectral import (
    Field,
    GridSpec,
    SpectralField,
    as_spectral,
    dilated_norm_sq,
    from_fine,
    product_coeffs,
    sobolev_norm,
    to_fine,
)

__all__ = [
    "LeibnizExpansion",
    "leibniz_expansion",
    "growth_expansion",
    "derivative_coeffs",
    "evaluate_expansion",
    "PR_HI_FIRST",
    "PR_HI_OUT",
    "PR1",
    "PR2",
    "PR3",
    "pr_product",
    "pr_product_direct",
    "pair_weights",
    "indicator_identity_check",
    "growth_identity",
    "growth_identity_residual",
    "GrowthReport",
    "track_norm_growth",
]

MultiIndex = tuple  # (a, b): d_x^a d_y^b


@dataclass(frozen=True)
class LeibnizExpansion:
    """Sum of C(alpha) prod_i D^alpha_i u, with sorted multi-index tuples as keys."""

    k: int
    s: int
    terms: tuple  # ((alpha_1, ..., alpha_{k+1}), Fraction)

    @property
    def order(self) -> int:
        return sum(a + b for a, b in self.terms[0][0]) if self.terms else 0

    def coefficient_sum(self) -> Fraction:
        return sum((c for _, c in self.terms), Fraction(0))

    def as_dict(self) -> dict:
        return dict(self.terms)


def _compositions(n: int, parts: int):
    """All ordered tuples of ``parts`` nonnegative integers summing to n."""
    if parts == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, parts - 1):
            yield (first,) + rest


def _multinomial(n: int, ks: Sequence[int]) -> int:
    out = factorial(n)
    for k in ks:
        out //= factorial(k)
    return out


def _canonical(alphas) -> tuple:
    return tuple(sorted(alphas))


def _finish(k: int, s: int, acc: dict) -> LeibnizExpansion:
    terms = tuple(sorted((key, Fraction(v)) for key, v in acc.items() if v != 0))
    return LeibnizExpansion(k, s, terms)


@lru_cache(maxsize=64)
def leibniz_expansion(k: int, s: int) -> LeibnizExpansion:
    """Exact expansion of (-Lap)^(s/2)(u^(k+1)) into products of derivatives."""
    if s < 2 or s % 2:
        raise ValueError(f"s must be an even integer >= 2 (got {s!r})")
    if k < 1:
        raise ValueError("k must be >= 1")
    n, p = s // 2, k + 1
    acc: dict = defaultdict(Fraction)
    for j in range(n + 1):
        ax, by = 2 * j, 2 * (n - j)
        base = (-1) ** n * comb(n, j)
        for xs in _compositions(ax, p):
            cx = _multinomial(ax, xs)
            for ys in _compositions(by, p):
                key = _canonical(zip(xs, ys))
                acc[key] += base * cx * _multinomial(by, ys)
    return _finish(k, s, acc)


def _laplacian_power_terms(n: int):
    """(-Lap)^n as a list of ((a, b), coefficient)."""
    return [((2 * j, 2 * (n - j)), (-1) ** n * comb(n, j)) for j in range(n + 1)]


@lru_cache(maxsize=64)
def growth_expansion(k: int, s: int) -> LeibnizExpansion:
    """Coefficients C(beta) with  2<d_x I^s(u^(k+1)), I^s u> = sum C(beta) <prod D^beta_i u, I^s u>.

    Terms carrying all s derivatives on one factor are removed by integrating
    by parts, so every multi-index in the result has order at most s and the
    orders sum to s + 1.
    """
    lex = leibniz_expansion(k, s)
    n = s // 2
    lap_keys = {(2 * j, 2 * (n - j)) for j in range(n + 1)}
    acc: dict = defaultdict(Fraction)
    for alphas, c in lex.terms:
        if any(a in lap_keys for a in alphas):
            continue  # part of (k+1) u^k I^s u, handled below
        for i in range(len(alphas)):
            bumped = list(alphas)
            bumped[i] = (alphas[i][0] + 1, alphas[i][1])
            acc[_canonical(bumped)] += 2 * c
    # 2 (k+1) <d_x(w u^k), w> = (k+1) k <w u^(k-1) d_x u, w>, with w = I^s u expanded
    for (a, b), c in _laplacian_power_terms(n):
        key = _canonical([(a, b)] + [(0, 0)] * (k - 1) + [(1, 0)])
        acc[key] += Fraction((k + 1) * k) * c
    return _finish(k, s, acc)


def derivative_coeffs(f: SpectralField, alpha: MultiIndex) -> np.ndarray:
    g = f.grid
    a, b = alpha
    return np.where(g.band_mask, (1j * g.XI) ** a * (1j * g.Q) ** b * f.coeffs, 0)


def evaluate_expansion(expansion: LeibnizExpansion, u: Field) -> SpectralField:
    """Apply the expansion to u, returning the band-limited sum of products."""
    f = as_spectral(u)
    g = f.grid
    fine = _FineCache(f)
    acc = np.zeros(g.padded_shape)
    for alphas, c in expansion.terms:
        prod = np.ones(g.padded_shape)
        for a in alphas:
            prod = prod * fine[a]
        acc += float(c) * prod
    return SpectralField(g, from_fine(g, acc))


class _FineCache:
    """Padded-grid samples of D^alpha u, computed once per multi-index."""

    def __init__(self, f: SpectralField, extra: Optional[dict] = None):
        self.f = f
        self.store: dict = dict(extra or {})

    def __getitem__(self, alpha):
        if alpha not in self.store:
            g = self.f.grid
            self.store[alpha] = to_fine(g, derivative_coeffs(self.f, alpha), g.padded_shape)
        return self.store[alpha]


# ------------------------------------------------------------- projectors

PR_HI_FIRST = "PR_HI_FIRST"  # |k1| >= 100 |k2|
PR_HI_OUT = "PR_HI_OUT"  # |k| >= 100 |k2|
PR1 = "PR1"
PR2 = "PR2"
PR3 = "PR3"
_SELECTORS = (PR_HI_FIRST, PR_HI_OUT, PR1, PR2, PR3)
PR_DIRECT_MAX_MODES = 64 * 32


def pair_weights(selector: str, d1, d2, d0, ratio: float = 100.0):
    """Weight of a frequency pair from squared dilated norms of k1, k2 and k = k1 + k2."""
    r2 = ratio * ratio
    A = d1 >= r2 * d2
    B = d0 >= r2 * d2
    if selector == PR_HI_FIRST:
        return A.astype(float)
    if selector == PR_HI_OUT:
        return B.astype(float)
    either = (~A) != (~B)  # exactly one of the two "<" conditions
    if selector == PR1:
        return 2.0 * (A | B) - either
    if selector == PR2:
        return 2.0 * ((~A) & (~B))
    if selector == PR3:
        return either.astype(float)
    raise ValueError(f"unknown selector {selector!r}")


def _band_modes(g: GridSpec):
    jj, mm = np.meshgrid(g.jx, g.my, indexing="ij")
    sel = g.band_mask
    return jj[sel], mm[sel]


def _dnorm(g: GridSpec, j, m):
    return dilated_norm_sq(2 * math.pi * j / g.Lx, m / g.lam)


def pr_product_direct(v1: Field, v2: Field, selector: str) -> SpectralField:
    """Brute-force double sum over all band-limited frequency pairs."""
    f1, f2 = as_spectral(v1), as_spectral(v2)
    g = f1.grid
    if not g.same_modes(f2.grid):
        raise ValueError("fields live on different grids")
    if g.Nx * g.Ny > PR_DIRECT_MAX_MODES:
        raise ValueError(f"direct Pr product refuses grids above {PR_DIRECT_MAX_MODES} modes")
    j, m = _band_modes(g)
    c1 = f1.coeffs[j % g.Nx, m % g.Ny]
    c2 = f2.coeffs[j % g.Nx, m % g.Ny]
    out = np.zeros(g.shape, dtype=complex)
    d1 = _dnorm(g, j, m)
    hx, hy = g.Nx // 2, g.Ny // 2
    for jj, mm, cc in zip(j, m, c2):
        j0, m0 = j + jj, m + mm
        ok = (np.abs(j0) < hx) & (np.abs(m0) < hy)
        w = pair_weights(selector, d1[ok], _dnorm(g, jj, mm), _dnorm(g, j0[ok], m0[ok]))
        np.add.at(out, (j0[ok] % g.Nx, m0[ok] % g.Ny), w * c1[ok] * cc)
    return SpectralField(g, out / g.volume)


def pr_product(v1: Field, v2: Field, selector: str, ratio: float = 100.0) -> SpectralField:
    """Frequency-pair-restricted product.

    Both restricting conditions force |k2| <= R/ratio with R the largest
    dilated radius on the grid.  Pairs with larger k2 carry the default
    weight, so the product is a dealiased FFT product (only for PR2) plus
    explicit shifted sums over the few small k2.
    """
    if selector not in _SELECTORS:
        raise ValueError(f"unknown selector {selector!r}")
    f1, f2 = as_spectral(v1), as_spectral(v2)
    g = f1.grid
    if not g.same_modes(f2.grid):
        raise ValueError("fields live on different grids")
    c1 = np.where(g.band_mask, f1.coeffs, 0)
    c2 = np.where(g.band_mask, f2.coeffs, 0)
    j, m = _band_modes(g)
    dn = _dnorm(g, j, m)
    small = dn * ratio * ratio <= dn.max() * (1 + 1e-12)
    default = 2.0 if selector == PR2 else 0.0
    if default:
        if g.pad_factor < Fraction(3, 2):
            g2 = g.with_pad(Fraction(3, 2))
            out = product_coeffs(g2, c1, c2) * default
        else:
            out = product_coeffs(g, c1, c2) * default
    else:
        out = np.zeros(g.shape, dtype=complex)
    hx, hy = g.Nx // 2, g.Ny // 2
    vals1 = c1[j % g.Nx, m % g.Ny]
    d1 = dn
    for jj, mm in zip(j[small], m[small]):
        cc = c2[jj % g.Nx, mm % g.Ny]
        if cc == 0:
            continue
        j0, m0 = j + jj, m + mm
        ok = (np.abs(j0) < hx) & (np.abs(m0) < hy)
        w = pair_weights(selector, d1[ok], _dnorm(g, jj, mm), _dnorm(g, j0[ok], m0[ok]), ratio)
        w = w - default
        idx = (j0[ok] % g.Nx, m0[ok] % g.Ny)
        out[idx] += w * vals1[ok] * cc / g.volume  # (j0, m0) distinct for fixed k2
    return SpectralField(g, out)


def indicator_identity_check(freq_grid: GridSpec, ratio: float = 100.0) -> float:
    """Max deviation of  chi_A + chi_B = 2 chi_(A or B) - chi_(exactly one of A^c, B^c).

    Enumerates every pair (k1, k2) of grid frequencies with k = k1 + k2.
    """
    g = freq_grid
    jj, mm = np.meshgrid(g.jx, g.my, indexing="ij")
    j, m = jj.ravel(), mm.ravel()
    d1 = _dnorm(g, j, m)
    r2 = ratio * ratio
    worst = 0
    for j2, m2 in zip(j, m):
        d2 = _dnorm(g, j2, m2)
        d0 = _dnorm(g, j + j2, m + m2)
        A = d1 >= r2 * d2
        B = d0 >= r2 * d2
        lhs = A.astype(np.int64) + B.astype(np.int64)
        either = (d1 < r2 * d2) != (d0 < r2 * d2)
        rhs = 2 * (A | B).astype(np.int64) - either.astype(np.int64)
        worst = max(worst, int(np.max(np.abs(lhs - rhs))))
    return float(worst)


# -------------------------------------------------------- growth identity


def _hdot_sq(f: SpectralField, s: int) -> float:
    return sobolev_norm(f, s, homogeneous=True) ** 2


def _pairing(g: GridSpec, fine_a: np.ndarray, fine_b: np.ndarray) -> float:
    return float(np.mean(fine_a * fine_b)) * g.volume


def _integrand_general(f: SpectralField, s: int, k: int) -> float:
    g = f.grid
    exp = growth_expansion(k, s)
    cache = _FineCache(f)
    Is = to_fine(g, np.where(g.band_mask, (g.XI**2 + g.Q**2) ** (s // 2) * f.coeffs, 0), g.padded_shape)
    total = 0.0
    for alphas, c in exp.terms:
        prod = Is.copy()
        for a in alphas:
            prod = prod * cache[a]
        total += float(c) * float(np.mean(prod)) * g.volume
    return total


def _pair_coeffs(g: GridSpec, a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sum(np.conj(a) * b).real) / g.volume


def _integrand_quadratic(f: SpectralField, s: int) -> float:
    """Integrand of the Pr-decomposed identity for k = 1 (without the sign)."""
    g = f.grid
    c = np.where(g.band_mask, f.coeffs, 0)
    w = (g.XI**2 + g.Q**2) ** (s // 2) * c
    wf = SpectralField(g, w)
    uf = SpectralField(g, c)
    dxu = SpectralField(g, 1j * g.XI * c)
    total = _pair_coeffs(g, pr_product(wf, dxu, PR_HI_FIRST).coeffs, w)
    for sel in (PR2, PR3):
        total += _pair_coeffs(g, 1j * g.XI * pr_product(wf, uf, sel).coeffs, w)
    # remaining Leibniz terms with every order below s
    lex = leibniz_expansion(1, s)
    n = s // 2
    lap_keys = {(2 * j, 2 * (n - j)) for j in range(n + 1)}
    cache = _FineCache(f)
    rest = np.zeros(g.padded_shape)
    for alphas, cc in lex.terms:
        if any(a in lap_keys for a in alphas):
            continue
        rest += float(cc) * cache[alphas[0]] * cache[alphas[1]]
    rest_c = from_fine(g, rest)
    total += _pair_coeffs(g, 1j * g.XI * rest_c, w)
    return 2.0 * total


def growth_identity(traj: Trajectory, s: int, eqspec: EquationSpec, t: float) -> tuple[float, float]:
    """(LHS, RHS) of the H^s growth identity on [0, t].

    LHS is the change of ||u||^2 in the homogeneous H^s norm.  RHS is the time
    integral of the product expansion (k >= 2) or of the Pr-decomposed form
    (k = 1), by composite Simpson over the stored snapshots.
    """
    if s < 2 or s % 2:
        raise ValueError("s must be an even integer >= 2")
    i1 = traj.index_of(t)
    i0 = traj.index_of(traj.times[0])
    if i1 == i0:
        return 0.0, 0.0
    if i1 - i0 + 1 < 3:
        raise ValueError("need at least 3 snapshots on [0, t]")
    lhs = _hdot_sq(traj.snapshots[i1], s) - _hdot_sq(traj.snapshots[i0], s)
    if not eqspec.nonlinear:
        return lhs, 0.0
    snaps = traj.snapshots[i0 : i1 + 1]
    if eqspec.k == 1:
        vals = [_integrand_quadratic(f, s) for f in snaps]
    else:
        vals = [_integrand_general(f, s, eqspec.k) for f in snaps]
    rhs = eqspec.sign * float(simpson(np.array(vals), x=traj.times[i0 : i1 + 1]))
    return lhs, rhs


def growth_identity_residual(traj: Trajectory, s: int, eqspec: EquationSpec, t: float) -> float:
    lhs, rhs = growth_identity(traj, s, eqspec, t)
    return abs(lhs - rhs)


# ------------------------------------------------------------ norm growth


@dataclass
class GrowthReport:
    k: int
    s_list: list
    times: list
    norms: dict
    exponents: dict
    bands: dict
    alpha_reference: dict

    def within_bound(self, s, margin: float = 0.01) -> bool:
        return self.exponents[s] <= float(self.alpha_reference[s]) + margin + self.bands[s]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"H^{s:g}" for s in self.s_list])
            for i, t in enumerate(self.times):
                w.writerow([f"{t:.17g}"] + [f"{self.norms[s][i]:.17g}" for s in self.s_list])

    def to_json(self, path, residuals: Optional[dict] = None) -> None:
        data = {
            "k": self.k,
            "s": [float(s) for s in self.s_list],
            "fit_exponent": {f"{s:g}": self.exponents[s] for s in self.s_list},
            "fit_band": {f"{s:g}": self.bands[s] for s in self.s_list},
            "alpha_reference": {f"{s:g}": float(self.alpha_reference[s]) for s in self.s_list},
            "residuals": residuals or {},
        }
        with open(path, "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)


def _fit_exponent(times: np.ndarray, norms: np.ndarray) -> tuple[float, float]:
    """Slope of log ||u(t)|| against log(1 + t), with a two-sigma band."""
    if np.all(norms == 0) or len(times) < 3:
        return 0.0, 0.0
    x, y = np.log1p(times), np.log(norms)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    sxx = float(((x - x.mean()) ** 2).sum())
    se = math.sqrt(float(resid @ resid) / max(len(x) - 2, 1) / sxx) if sxx > 0 else 0.0
    return float(coef[0]), 2.0 * se


def track_norm_growth(traj: Trajectory, s_list: Iterable[float]) -> GrowthReport:
    s_list = list(s_list)
    norms, exps, bands, ref = {}, {}, {}, {}
    for s in s_list:
        series = np.array([sobolev_norm(f, s) for f in traj.snapshots])
        norms[s] = series
        exps[s], bands[s] = _fit_exponent(traj.times, series)
        ref[s] = alpha_growth(traj.spec.k, s) if s > 1 else Fraction(0)
    return GrowthReport(traj.spec.k, s_list, list(traj.times), norms, exps, bands, ref)

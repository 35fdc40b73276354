"""Space-time lattices, Bourgain-type norms and Monte-Carlo ratio sampling.

A space-time field lives on the (tau, xi, q) lattice with tau in (2 pi / Tt) Z,
xi in (2 pi / Lx) Z and q in Z / lam, stored in FFT order.  Coefficients follow
the Riemann-sum convention in all three variables, so

    f(t, x, y) = 1 / (Tt * Lx * 2 pi lam) * sum f_hat exp(i (t tau + x xi + y q)).

The sampled ratios are experimental probes of the estimates; nothing here
certifies a constant.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft

from .spectral import dilated_norm_sq, p_alpha_projector, phase

__all__ = [
    "SpaceTimeGrid",
    "SpaceTimeField",
    "XsbSpec",
    "EstimateCase",
    "random_xsb_field",
    "xsb_norm",
    "spacetime_lebesgue_norm",
    "spacetime_samples",
    "mp_spacetime",
    "mp_spacetime_direct",
    "product_spacetime",
    "estimate_ratio",
    "RatioReport",
    "shell_separation_check",
    "CASES",
]

CASES = ("MP_31", "L4_32", "BILIN_33", "AIRY_L6_37")
MP_DIRECT_MAX_MODES = 16**3


@dataclass(frozen=True)
class SpaceTimeGrid:
    Nt: int
    Nx: int
    Ny: int
    Tt: float = 2 * math.pi
    Lx: float = 2 * math.pi
    lam: float = 1.0

    def __post_init__(self):
        for name in ("Nt", "Nx", "Ny"):
            n = getattr(self, name)
            if n <= 0 or n % 2:
                raise ValueError(f"{name} must be an even positive integer (got {n!r})")
        if not (self.Tt > 0 and self.Lx > 0 and self.lam >= 1):
            raise ValueError("need Tt > 0, Lx > 0 and lambda >= 1")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.Nt, self.Nx, self.Ny)

    @property
    def volume(self) -> float:
        return self.Tt * self.Lx * 2 * math.pi * self.lam

    @property
    def measure(self) -> float:
        """d tau * d xi * d q."""
        return (2 * math.pi / self.Tt) * (2 * math.pi / self.Lx) / self.lam

    def with_lambda(self, lam: float) -> "SpaceTimeGrid":
        return SpaceTimeGrid(self.Nt, self.Nx, self.Ny, self.Tt, self.Lx, lam)

    def doubled(self) -> "SpaceTimeGrid":
        return SpaceTimeGrid(2 * self.Nt, 2 * self.Nx, 2 * self.Ny, self.Tt, self.Lx, self.lam)

    @cached_property
    def labels(self):
        return tuple(np.fft.fftfreq(n, 1.0 / n).astype(np.int64) for n in self.shape)

    @cached_property
    def tau(self) -> np.ndarray:
        return (2 * math.pi / self.Tt) * self.labels[0][:, None, None]

    @cached_property
    def xi(self) -> np.ndarray:
        return (2 * math.pi / self.Lx) * self.labels[1][None, :, None]

    @cached_property
    def q(self) -> np.ndarray:
        return (self.labels[2] / self.lam)[None, None, :]

    @cached_property
    def band_mask(self) -> np.ndarray:
        nt, nx, ny = self.labels
        return (
            (np.abs(nt) < self.Nt // 2)[:, None, None]
            & (np.abs(nx) < self.Nx // 2)[None, :, None]
            & (np.abs(ny) < self.Ny // 2)[None, None, :]
        )

    @cached_property
    def sign(self) -> np.ndarray:
        s = [1 - 2 * (np.arange(n) % 2) for n in self.shape]
        return (s[0][:, None, None] * s[1][None, :, None] * s[2][None, None, :]).astype(float)


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    grid: SpaceTimeGrid
    coeffs: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.coeffs, dtype=complex)
        if arr.shape != self.grid.shape:
            raise ValueError(f"coefficient shape {arr.shape} does not match lattice {self.grid.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("coefficients must be finite")
        object.__setattr__(self, "coeffs", arr)

    @property
    def Nt(self) -> int:
        return self.grid.Nt

    @property
    def Nx(self) -> int:
        return self.grid.Nx

    @property
    def Ny(self) -> int:
        return self.grid.Ny

    @property
    def Tt(self) -> float:
        return self.grid.Tt

    @property
    def lam(self) -> float:
        return self.grid.lam

    def hermitian_defect(self) -> float:
        c = np.where(self.grid.band_mask, self.coeffs, 0)
        flipped = np.roll(np.flip(c, (0, 1, 2)), 1, axis=(0, 1, 2))
        scale = float(np.max(np.abs(c)))
        return 0.0 if scale == 0 else float(np.max(np.abs(flipped - np.conj(c))) / scale)


@dataclass(frozen=True)
class XsbSpec:
    """Weights <(xi,q)>^s <tau - phi>^b, optionally times <q>^sy."""

    s: float
    b: float
    lam: float = 1.0
    sy: float = 0.0


@dataclass(frozen=True)
class EstimateCase:
    tag: str
    eps: float = 0.05
    b: float = 0.55
    b1: float = 0.51
    b2: float = 0.51
    alpha: float = 1.0
    c1: float = 1.0
    c2: float = 1.0

    def __post_init__(self):
        if self.tag not in CASES:
            raise ValueError(f"unknown estimate case {self.tag!r}; expected one of {CASES}")
        if self.tag == "MP_31" and not (self.b1 > 0.5 and self.b2 > 0.5):
            raise ValueError("b1 and b2 must exceed 1/2")
        if self.tag in ("L4_32", "BILIN_33") and not self.b > 0.5:
            raise ValueError("b must exceed 1/2")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")


# --------------------------------------------------------------- sampling


def _hermitize(c: np.ndarray) -> np.ndarray:
    flipped = np.roll(np.flip(c, (0, 1, 2)), 1, axis=(0, 1, 2))
    return 0.5 * (c + np.conj(flipped))


def random_xsb_field(
    grid: SpaceTimeGrid,
    spec: XsbSpec,
    profile: str = "gaussian",
    seed=0,
    *,
    eps_dec: float = 0.05,
    width: Optional[float] = None,
    shell: Optional[tuple[float, float]] = None,
) -> SpaceTimeField:
    """Random real space-time field concentrated near tau = phi(xi, q).

    ``profile`` is "flat" (every spatial mode weighted alike) or "gaussian"
    (spatial weight exp(-|(xi,q)|^2 / (2 width^2))).  ``shell`` restricts the
    dilated norm sqrt(3 xi^2 + q^2) to a closed interval.
    """
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    mod = (1.0 + (grid.tau - phase(grid.xi, grid.q)) ** 2) ** (-0.5 * (spec.b + eps_dec))
    r2 = grid.xi**2 + grid.q**2
    if profile == "flat":
        space = np.ones_like(r2)
    elif profile == "gaussian":
        w = width if width is not None else 0.25 * float(np.sqrt(r2.max()))
        space = np.exp(-r2 / (2 * w * w))
    else:
        raise ValueError(f"unknown profile {profile!r}")
    if shell is not None:
        d = np.sqrt(dilated_norm_sq(grid.xi, grid.q))
        space = space * ((d >= shell[0]) & (d <= shell[1]))
    c = np.where(grid.band_mask, z * mod * space, 0)
    return SpaceTimeField(grid, _hermitize(c))


def _weights(grid: SpaceTimeGrid, spec: XsbSpec) -> np.ndarray:
    w = (1.0 + grid.xi**2 + grid.q**2) ** (0.5 * spec.s) * (1.0 + (grid.tau - phase(grid.xi, grid.q)) ** 2) ** (
        0.5 * spec.b
    )
    if spec.sy:
        w = w * (1.0 + grid.q**2) ** (0.5 * spec.sy)
    return w


def xsb_norm(f: SpaceTimeField, spec: XsbSpec) -> float:
    g = f.grid
    return math.sqrt(float(np.sum((_weights(g, spec) * np.abs(f.coeffs)) ** 2)) / g.volume)


def spacetime_samples(f: SpaceTimeField, pad: int = 1) -> np.ndarray:
    """Real samples on a lattice refined by ``pad`` in every direction."""
    g = f.grid
    shape = tuple(pad * n for n in g.shape)
    big = np.zeros(shape, dtype=complex)
    c = np.where(g.band_mask, f.coeffs, 0)
    idx = np.ix_(*[np.mod(lab, m) for lab, m in zip(g.labels, shape)])
    # centred sample points give the factor (-1)^(n+j+m), whatever the padding
    big[idx] = c * g.sign
    return sfft.ifftn(big).real * (np.prod(shape) / g.volume)


def spacetime_lebesgue_norm(f: SpaceTimeField, p: int) -> float:
    """L^p norm over the space-time box; exact for p in {2, 4, 6}."""
    if p not in (2, 4, 6):
        raise ValueError(f"unsupported exponent p={p!r}; use 2, 4 or 6")
    g = f.grid
    if p == 2:
        return math.sqrt(float(np.sum(np.abs(np.where(g.band_mask, f.coeffs, 0)) ** 2)) / g.volume)
    vals = spacetime_samples(f, pad=p // 2)
    return float(np.mean(np.abs(vals) ** p) * g.volume) ** (1.0 / p)


# -------------------------------------------------------------- MP operator


def _band_block(f: SpaceTimeField) -> np.ndarray:
    """Band coefficients rearranged to centred order, shape (Nt-1, Nx-1, Ny-1)."""
    c = f.coeffs
    for ax, n in enumerate(f.grid.shape):
        c = np.fft.fftshift(c, axes=ax)
        c = np.take(c, np.arange(1, n), axis=ax)
    return c


def _from_centred(block: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    """Place a centred block with odd side lengths into an FFT-ordered array."""
    out = np.zeros(grid.shape, dtype=complex)
    idx = []
    for n_in, n_out in zip(block.shape, grid.shape):
        half = n_in // 2
        idx.append(np.mod(np.arange(-half, half + 1), n_out))
    out[np.ix_(*idx)] = block
    return out


def _centred_axes(grid: SpaceTimeGrid):
    hx, hy = grid.Nx // 2 - 1, grid.Ny // 2 - 1
    xi = (2 * math.pi / grid.Lx) * np.arange(-hx, hx + 1)
    q = np.arange(-hy, hy + 1) / grid.lam
    return xi, q


def _bilinear(u: SpaceTimeField, v: SpaceTimeField, weight_fn) -> SpaceTimeField:
    g = u.grid
    if v.grid != g:
        raise ValueError("lattices do not match")
    U, V = _band_block(u), _band_block(v)
    nt = U.shape[0]
    L = 2 * g.Nt
    # time goes last so that the slice-adds below touch contiguous memory
    Ut = np.ascontiguousarray(np.moveaxis(sfft.ifft(U, n=L, axis=0), 0, -1))
    Vt = np.ascontiguousarray(np.moveaxis(sfft.ifft(V, n=L, axis=0), 0, -1))
    xi, q = _centred_axes(g)
    A = dilated_norm_sq(xi[:, None], q[None, :])
    nx, ny = A.shape
    out = np.zeros((2 * nx - 1, 2 * ny - 1, L), dtype=complex)
    tmp = np.empty_like(Vt)
    for a in range(nx):
        for b in range(ny):
            w = weight_fn(A[a, b], A)
            if not np.any(w):
                continue
            np.multiply(Vt, w[:, :, None], out=tmp)
            tmp *= Ut[a, b]
            out[a : a + nx, b : b + ny] += tmp
    # the supports start at the lowest tau, so the linear convolution is the leading block
    Wc = np.moveaxis((sfft.fft(out, axis=-1) * L)[..., : 2 * nt - 1], -1, 0)
    g2 = g.doubled()
    return SpaceTimeField(g2, _from_centred(Wc, g2) * g.measure)


def mp_spacetime(u: SpaceTimeField, v: SpaceTimeField) -> SpaceTimeField:
    """Fourier multiplier |A(k1) - A(k2)|^(1/2), A = 3 xi^2 + q^2, on the convolution.

    The output lives on the doubled lattice, where the convolution does not wrap.
    """
    return _bilinear(u, v, lambda a1, a2: np.sqrt(np.abs(a1 - a2)))


def product_spacetime(u: SpaceTimeField, v: SpaceTimeField) -> SpaceTimeField:
    """Exact product u v on the doubled lattice."""
    out = _bilinear(u, v, lambda a1, a2: np.ones_like(a2))
    return SpaceTimeField(out.grid, out.coeffs / (2 * math.pi) ** 3)


def mp_spacetime_direct(u: SpaceTimeField, v: SpaceTimeField) -> SpaceTimeField:
    """O(M^2) double sum over all band pairs; a test oracle."""
    g = u.grid
    if v.grid != g:
        raise ValueError("lattices do not match")
    if g.Nt * g.Nx * g.Ny > MP_DIRECT_MAX_MODES:
        raise ValueError("lattice too large for the direct MP oracle")
    g2 = g.doubled()
    out = np.zeros(g2.shape, dtype=complex)
    nt, nx, ny = np.meshgrid(*g.labels, indexing="ij")
    sel = g.band_mask
    nt, nx, ny = nt[sel], nx[sel], ny[sel]
    cu, cv = u.coeffs[sel], v.coeffs[sel]
    A = dilated_norm_sq((2 * math.pi / g.Lx) * nx, ny / g.lam)
    for i in range(nt.size):
        w = np.sqrt(np.abs(A[i] - A)) * cu[i] * cv
        np.add.at(out, ((nt[i] + nt) % g2.Nt, (nx[i] + nx) % g2.Nx, (ny[i] + ny) % g2.Ny), w)
    return SpaceTimeField(g2, out * g.measure)


# --------------------------------------------------------------- ratios


@dataclass
class RatioReport:
    case: str
    seed: int
    trials: int
    lambdas: list
    max_ratio: dict
    discards: dict
    label: str = "sampled max"

    def to_json_dict(self) -> list:
        return [
            {
                "case": self.case,
                "lambda": lam,
                "trials": self.trials,
                "max": self.max_ratio[lam],
                "discards": self.discards[lam],
                "seed": self.seed,
                "label": self.label,
            }
            for lam in self.lambdas
        ]

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)

    def spread(self) -> float:
        vals = [self.max_ratio[l] for l in self.lambdas if self.max_ratio[l] > 0]
        return max(vals) / min(vals) if vals else math.inf


def _l2(f: SpaceTimeField) -> float:
    return spacetime_lebesgue_norm(f, 2)


def _airy_ratio(grid: SpaceTimeGrid, seed, shell=None) -> tuple[float, float]:
    """||I_x^(1/6) e^(i t phi) u0||_{L^6} over one window / ||J_y^(1/3) u0||_{L^2}."""
    rng = np.random.default_rng(seed)
    nx, ny = grid.Nx, grid.Ny
    jx = np.fft.fftfreq(nx, 1.0 / nx)
    my = np.fft.fftfreq(ny, 1.0 / ny)
    xi = (2 * math.pi / grid.Lx) * jx[:, None]
    q = (my / grid.lam)[None, :]
    band = (np.abs(jx) < nx // 2)[:, None] & (np.abs(my) < ny // 2)[None, :]
    z = rng.standard_normal((nx, ny)) + 1j * rng.standard_normal((nx, ny))
    r2 = xi**2 + q**2
    w = 0.25 * float(np.sqrt(r2.max()))
    if shell is not None:
        d = np.sqrt(dilated_norm_sq(xi, q))
        band = band & (d >= shell[0]) & (d <= shell[1])
    c = np.where(band, z * np.exp(-r2 / (2 * w * w)), 0)
    c = 0.5 * (c + np.conj(np.roll(np.flip(c, (0, 1)), 1, axis=(0, 1))))
    vol = grid.Lx * 2 * math.pi * grid.lam
    rhs = math.sqrt(float(np.sum((1 + q**2) ** (1 / 3) * np.abs(c) ** 2)) / vol)
    if rhs < 1e-14:
        return 0.0, rhs
    mult = np.abs(xi) ** (1 / 6) * c
    ph = phase(xi, q)
    times = (np.arange(grid.Nt) + 0.5) * (grid.Tt / grid.Nt)
    big = (3 * nx, 3 * ny)
    acc = 0.0
    sx = 1 - 2 * (np.arange(nx) % 2)
    sy = 1 - 2 * (np.arange(ny) % 2)
    sgn = sx[:, None] * sy[None, :]
    ix = np.mod(jx.astype(int), big[0])
    iy = np.mod(my.astype(int), big[1])
    for t in times:
        ct = np.zeros(big, dtype=complex)
        ct[np.ix_(ix, iy)] = mult * np.exp(1j * t * ph) * sgn
        vals = sfft.ifft2(ct).real * (big[0] * big[1] / vol)
        acc += float(np.mean(vals**6)) * vol
    lhs = (acc * grid.Tt / grid.Nt) ** (1 / 6)
    return lhs, rhs


def _trial(case: EstimateCase, grid: SpaceTimeGrid, seeds, shell=None) -> tuple[float, float]:
    s_a, s_b = seeds
    if case.tag == "AIRY_L6_37":
        return _airy_ratio(grid, s_a, shell)
    if case.tag == "MP_31":
        u = random_xsb_field(grid, XsbSpec(0, case.b1, grid.lam), seed=s_a, shell=shell)
        v = random_xsb_field(grid, XsbSpec(0, case.b2, grid.lam), seed=s_b, shell=shell)
        rhs = xsb_norm(u, XsbSpec(0, case.b1, grid.lam, sy=0.5 + case.eps)) * xsb_norm(
            v, XsbSpec(0, case.b2, grid.lam)
        )
        if rhs < 1e-14:
            return 0.0, rhs
        return _l2(mp_spacetime(u, v)), rhs
    spec = XsbSpec(case.eps, case.b, grid.lam)
    u = random_xsb_field(grid, spec, seed=s_a, shell=shell)
    if case.tag == "L4_32":
        rhs = xsb_norm(u, spec)
        return (spacetime_lebesgue_norm(u, 4) if rhs >= 1e-14 else 0.0), rhs
    v = random_xsb_field(grid, spec, seed=s_b, shell=shell)
    rhs = xsb_norm(u, spec) * xsb_norm(v, spec)
    if rhs < 1e-14:
        return 0.0, rhs
    w = product_spacetime(u, v)
    g2 = w.grid
    proj = p_alpha_projector(case.alpha, case.c1, case.c2)(g2.xi, g2.q)
    mult = np.abs(g2.xi) ** (case.alpha / 4) * proj
    return _l2(SpaceTimeField(g2, w.coeffs * mult)), rhs


def estimate_ratio(
    case: EstimateCase,
    grid: SpaceTimeGrid,
    lambda_list: Sequence[float],
    trials: int,
    seed: int = 0,
    *,
    shell: Optional[tuple[float, float]] = None,
) -> RatioReport:
    """Sampled maximum of LHS/RHS of the selected estimate for each lambda.

    Trials whose right-hand side falls below 1e-14 are discarded and counted.
    ``shell`` confines every random input to a band of the dilated norm.
    """
    if trials < 50:
        raise ValueError("need at least 50 trials per lambda")
    root = np.random.SeedSequence(seed)
    children = root.spawn(len(lambda_list))
    maxima, discards = {}, {}
    for lam, child in zip(lambda_list, children):
        g = grid.with_lambda(lam)
        best, dropped = 0.0, 0
        for tseed in child.spawn(trials):
            a, b = tseed.spawn(2)
            lhs, rhs = _trial(case, g, (a, b), shell)
            if rhs < 1e-14:
                dropped += 1
                continue
            ratio = lhs / rhs
            if not math.isfinite(ratio):
                raise FloatingPointError(f"non-finite ratio at lambda={lam}")
            best = max(best, ratio)
        maxima[lam], discards[lam] = best, dropped
    return RatioReport(case.tag, seed, trials, list(lambda_list), maxima, discards)


def shell_separation_check(
    grid: SpaceTimeGrid,
    low: tuple[float, float],
    high: tuple[float, float],
    trials: int = 20,
    seed: int = 0,
    case: Optional[EstimateCase] = None,
) -> dict:
    """Compare MP ratios for inputs on separated shells and on one shared shell.

    ``u`` (the factor carrying the J_y weight) sits on ``low`` in the separated
    configuration, ``v`` on ``high``; in the shared configuration both sit on
    ``high``.
    """
    case = case or EstimateCase("MP_31")
    su, sv = XsbSpec(0, case.b1, grid.lam), XsbSpec(0, case.b2, grid.lam)
    wu = XsbSpec(0, case.b1, grid.lam, sy=0.5 + case.eps)
    seqs = np.random.SeedSequence(seed).spawn(trials)

    def run(shell_u):
        best = 0.0
        for ss in seqs:
            a, b = ss.spawn(2)
            u = random_xsb_field(grid, su, "flat", a, shell=shell_u)
            v = random_xsb_field(grid, sv, "flat", b, shell=high)
            rhs = xsb_norm(u, wu) * xsb_norm(v, sv)
            if rhs >= 1e-14:
                best = max(best, _l2(mp_spacetime(u, v)) / rhs)
        return best

    separated, shared = run(low), run(high)
    gap = separated / shared if shared > 0 else math.inf
    return {"separated": separated, "shared": shared, "gap": gap}

"""Configuration, subcommand dispatch, run manifests and plot-script emission.

Configuration files are INI-style::

    [grid]
    Nx = 128
    [equation]
    k = 2

Flags of the form ``--set section.key=value`` override file values.  The
default output root is taken from the ``ZKLAB_OUT`` environment variable.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import datetime as _dt
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
import scipy.fft as sfft

from . import __version__

OUT_ENV = "ZKLAB_OUT"
SUBCOMMANDS = (
    "simulate",
    "verify-identities",
    "imethod-sweep",
    "sample-estimates",
    "ground-state",
    "thresholds",
    "gronwall",
)

__all__ = [
    "Config",
    "ConfigError",
    "RunManifest",
    "RunResult",
    "parse_config",
    "run_subcommand",
    "emit_plot_script",
    "main",
    "SUBCOMMANDS",
    "OUT_ENV",
]


class ConfigError(ValueError):
    """Every problem found while validating a configuration."""

    def __init__(self, offenses: Sequence[str]):
        self.offenses = list(offenses)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.offenses))


# ------------------------------------------------------------------ schema


def _float_list(text: str) -> list:
    return [float(Fraction(t.strip())) for t in text.split(",") if t.strip()]


def _int_list(text: str) -> list:
    return [int(t.strip()) for t in text.split(",") if t.strip()]


def _fraction(text: str) -> Fraction:
    return Fraction(text.strip())


def _num(text: str) -> float:
    # accepts plain floats and exact fractions such as 2/3
    return float(Fraction(text.strip())) if "/" in text else float(text)


def _positive(v):
    return None if v > 0 else "must be positive"


def _even_positive(v):
    return None if v > 0 and v % 2 == 0 else "must be an even positive integer"


def _in(*choices):
    return lambda v: None if v in choices else f"must be one of {', '.join(map(str, choices))}"


def _at_least(x):
    return lambda v: None if v >= x else f"must be >= {x}"


def _open_unit(v):
    return None if 0 < v < 1 else "must lie strictly between 0 and 1"


def _imethod_s(v):
    return None if 0 < v < 1 else "s<1 required (and s>0) for the I-method"


def _geometric(v):
    if len(v) < 4:
        return "needs at least 4 values"
    r = [b / a for a, b in zip(v, v[1:])]
    if r[0] <= 1 or any(abs(x - r[0]) > 1e-9 * r[0] for x in r):
        return "must be an increasing geometric sequence"
    return None


def _even_orders(v):
    return None if all(s >= 2 and s % 2 == 0 for s in v) else "orders must be even integers >= 2"


def _half_plus(v):
    return None if v > 0.5 else "must exceed 1/2"


_TWO_PI = 2 * math.pi
SCHEMA: dict = {
    "run": {
        "seed": (int, 0, _at_least(0)),
        "T": (_num, 1.0, _positive),
        "dt": (_num, 0.01, _positive),
        "sample_every": (int, 1, _at_least(1)),
        "sobolev": (_float_list, [], None),
        "growth_orders": (_float_list, [], None),
    },
    "grid": {
        "Lx": (_num, 8 * math.pi, _positive),
        "lam": (int, 1, _at_least(1)),
        "Nx": (int, 128, _even_positive),
        "Ny": (int, 32, _even_positive),
    },
    "equation": {
        "k": (int, 1, _at_least(1)),
        "sign": (int, 1, _in(1, -1)),
    },
    "initial": {
        "profile": (str, "bump", _in("bump", "zero")),
        "amplitude": (_num, 0.6, None),
        "width": (_num, 2.0, _positive),
    },
    "imethod": {
        "s": (_num, 0.9, _imethod_s),
        "N": (_num, 0.0, _at_least(0)),
        "blend": (int, 5, lambda v: None if v >= 3 and v % 2 else "must be odd and >= 3"),
        "N_list": (_float_list, [1.0, 1.4142135623730951, 2.0, 2.8284271247461903, 4.0], _geometric),
        "horizon": (_num, 1.0, _positive),
        "slope_max": (_num, -0.2, None),
    },
    "identities": {
        "delta": (_num, 0.1, _positive),
        "snapshots": (int, 101, _at_least(3)),
        "growth_orders": (_int_list, [2], _even_orders),
        "tol": (_num, 1e-6, _positive),
    },
    "estimates": {
        "case": (str, "MP_31", _in("MP_31", "L4_32", "BILIN_33", "AIRY_L6_37")),
        "lambdas": (_float_list, [1.0, 2.0, 4.0, 8.0], lambda v: None if v and min(v) >= 1 else "need values >= 1"),
        "trials": (int, 200, _at_least(50)),
        "Nt": (int, 32, _even_positive),
        "Nx": (int, 32, _even_positive),
        "Ny": (int, 32, _even_positive),
        "Tt": (_num, _TWO_PI / 30, _positive),
        "Lx": (_num, 16 * math.pi, _positive),
        "eps": (_num, 0.05, _positive),
        "b": (_num, 0.55, _half_plus),
        "b1": (_num, 0.51, _half_plus),
        "b2": (_num, 0.51, _half_plus),
        "alpha": (_num, 1.0, lambda v: None if 0 <= v <= 1 else "must lie in [0, 1]"),
        "max_spread": (_num, 3.0, _at_least(1)),
    },
    "thresholds": {
        "equation": (str, "ZK", _in("ZK", "mZK")),
        "domain": (str, "cylinder", _in("cylinder", "plane")),
        "s": (_fraction, Fraction(9, 10), lambda v: None if v > 0 and v != 1 else "must be positive and != 1"),
        "epsilon_tilde": (_fraction, Fraction(0), _at_least(0)),
    },
    "gronwall": {
        "K1": (_num, 1.0, _positive),
        "eps": (_num, 0.5, _open_unit),
        "d": (_num, 2.1, _positive),
        "a0": (_num, 0.0, _at_least(0)),
        "M": (int, 100000, _at_least(10)),
    },
    "ground_state": {
        "k": (int, 2, _at_least(1)),
        "tol": (_num, 1e-11, _positive),
        "max_iter": (int, 1000, _at_least(1)),
    },
    "assert": {
        "drift_tol": (_num, 1e-8, _positive),
        "residual_tol": (_num, 1e-5, _positive),
        "pohozaev_tol": (_num, 1e-6, _positive),
    },
}


@dataclass
class Config:
    values: dict
    echo: list = field(default_factory=list)
    source: Optional[str] = None

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    def to_json_dict(self) -> dict:
        out = {}
        for sec, kv in self.values.items():
            out[sec] = {key: _jsonable(val) for key, val in kv.items()}
        return out


def _jsonable(v):
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _normalize_flags(flags) -> dict:
    if flags is None:
        return {}
    if isinstance(flags, Mapping):
        return {str(k): str(v) for k, v in flags.items()}
    out = {}
    for item in flags:
        if "=" not in item:
            raise ConfigError([f"flag {item!r} is not of the form section.key=value"])
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_config(path=None, flags=None) -> Config:
    """Merge defaults, an optional INI file and ``section.key`` overrides.

    Every unknown key and range violation is collected before raising a single
    :class:`ConfigError`.
    """
    offenses = []
    file_values: dict = {}
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError([f"cannot read {path}: {exc}"]) from exc
        for sec in cp.sections():
            if sec not in SCHEMA:
                offenses.append(f"unknown section [{sec}]")
                continue
            for key, raw in cp.items(sec):
                file_values[f"{sec}.{key}"] = raw
    try:
        flag_values = _normalize_flags(flags)
    except ConfigError as exc:
        offenses.extend(exc.offenses)
        flag_values = {}

    for dotted in list(file_values) + list(flag_values):
        sec, _, key = dotted.partition(".")
        if sec in SCHEMA and key not in SCHEMA[sec]:
            offenses.append(f"unknown key {dotted}")
        elif sec not in SCHEMA and dotted in flag_values:
            offenses.append(f"unknown key {dotted}")

    values, echo = {}, []
    for sec, keys in SCHEMA.items():
        values[sec] = {}
        for key, (parse, default, check) in keys.items():
            dotted = f"{sec}.{key}"
            fv, gv = file_values.get(dotted), flag_values.get(dotted)
            raw, origin = (gv, "flag") if gv is not None else (fv, "file") if fv is not None else (None, "default")
            val = default
            if raw is not None:
                try:
                    val = parse(raw)
                except (ValueError, ZeroDivisionError) as exc:
                    offenses.append(f"{dotted}: cannot parse {raw!r} ({exc})")
                    continue
            if check is not None:
                msg = check(val)
                if msg:
                    offenses.append(f"{dotted}={_jsonable(val)!r}: {msg}")
            values[sec][key] = val
            echo.append(
                {
                    "key": dotted,
                    "value": _jsonable(val),
                    "source": origin,
                    "file_value": fv,
                    "flag_value": gv,
                }
            )
    if offenses:
        raise ConfigError(offenses)
    return Config(values, echo, None if path is None else str(path))


# ----------------------------------------------------------------- manifest


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    grid: Optional[dict]
    equation: Optional[dict]
    seed: int
    version: str
    started: str
    finished: str = ""
    files: list = field(default_factory=list)

    def add(self, out_dir: Path, name: str) -> None:
        p = out_dir / name
        self.files.append({"path": name, "sha256": _sha256(p), "bytes": p.stat().st_size})

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        with open(path, "w") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)
        return path


@dataclass
class RunResult:
    status: int
    failures: list
    warnings: list
    out_dir: Path
    files: list


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _dump(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


# --------------------------------------------------------------- pipelines


class _Ctx:
    def __init__(self, cfg: Config, out: Path):
        self.cfg, self.out = cfg, out
        self.files: list = []
        self.failures: list = []
        self.warnings: list = []

    def file(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def check(self, name: str, ok: bool, value, limit, soft: bool = False) -> None:
        if ok:
            return
        rec = {"check": name, "value": _jsonable(value), "limit": _jsonable(limit)}
        (self.warnings if soft else self.failures).append(rec)


def _grid(cfg: Config):
    from .spectral import make_grid

    g, e = cfg["grid"], cfg["equation"]
    return make_grid(g["Lx"], g["lam"], g["Nx"], g["Ny"], Fraction(e["k"] + 2, 2))


def _equation(cfg: Config):
    from .dynamics import EquationSpec

    return EquationSpec(cfg["equation"]["k"], cfg["equation"]["sign"])


def _initial(cfg: Config, grid):
    from .spectral import RealField

    ini = cfg["initial"]
    if ini["profile"] == "zero":
        return RealField.zeros(grid)
    a, w = ini["amplitude"], ini["width"]
    return RealField.from_function(
        grid,
        lambda X, Y: a
        * np.exp(-((X / w) ** 2))
        * (np.cos(Y / grid.lam) + 0.7 * np.sin(2 * Y / grid.lam + 0.3) + 0.4 * np.cos(3 * Y / grid.lam)),
    )


def _safe_dt(u0, eq, dt: float) -> float:
    from .dynamics import stability_limit

    return min(dt, 0.9 * stability_limit(u0, eq))


def _drift(series: np.ndarray) -> float:
    ref = abs(series[0])
    return float(np.max(np.abs(series - series[0])) / (ref if ref > 0 else 1.0))


def _run_simulate(ctx: _Ctx) -> None:
    from .dynamics import StepperConfig, simulate
    from .growth import track_norm_growth
    from .spectral import save_snapshot

    cfg = ctx.cfg
    g, eq = _grid(cfg), _equation(cfg)
    u0 = _initial(cfg, g)
    run = cfg["run"]
    scfg = StepperConfig(_safe_dt(u0, eq, run["dt"]), sample_every=run["sample_every"])
    traj = simulate(u0, eq, scfg, run["T"], sobolev_orders=run["sobolev"])
    traj.to_csv(ctx.file("trajectory.csv"))
    save_snapshot(ctx.file("final.gzkf"), traj.snapshots[-1])
    drifts = {"mass": _drift(traj.diagnostics["mass"]), "energy": _drift(traj.diagnostics["energy"])}
    _dump(ctx.file("summary.json"), {"drift": drifts, "blowup": traj.blowup, "dt": traj.cfg.dt, "T": run["T"]})
    tol = cfg["assert"]["drift_tol"]
    for key, val in drifts.items():
        ctx.check(f"{key}_drift", val <= tol, val, tol)
    ctx.check("no_blowup", not traj.blowup, traj.blowup, False)
    if run["growth_orders"]:
        rep = track_norm_growth(traj, run["growth_orders"])
        rep.to_csv(ctx.file("growth.csv"))
        rep.to_json(ctx.file("growth.json"))
        for s in rep.s_list:
            ctx.check(f"growth_exponent_H{s:g}", rep.within_bound(s), rep.exponents[s], float(rep.alpha_reference[s]), soft=True)


def _run_identities(ctx: _Ctx) -> None:
    from .dynamics import StepperConfig, simulate
    from .growth import growth_identity
    from .imethod import IMultiplierSpec, increment_commutator, increment_direct, quarter_nyquist

    cfg = ctx.cfg
    g, eq = _grid(cfg), _equation(cfg)
    u0 = _initial(cfg, g)
    idc = cfg["identities"]
    delta, n = idc["delta"], idc["snapshots"]
    traj = simulate(u0, eq, StepperConfig(delta / (n - 1)), delta, diagnostics=False)
    t1 = float(traj.times[-1])
    N = cfg["imethod"]["N"] or quarter_nyquist(g)
    isp = IMultiplierSpec(N, cfg["imethod"]["s"], cfg["imethod"]["blend"])
    rows = []
    direct = increment_direct(traj, isp, eq, 0.0, t1)
    comm = increment_commutator(traj, isp, eq, 0.0, t1)
    rows.append(("modified_energy_increment", eq.k, isp.s, direct, comm))
    for s in idc["growth_orders"]:
        lhs, rhs = growth_identity(traj, s, eq, t1)
        rows.append(("sobolev_growth", eq.k, s, lhs, rhs))
    tol = idc["tol"]
    with open(ctx.file("identities.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["identity", "k", "s", "lhs", "rhs", "residual", "tol", "pass"])
        for name, k, s, lhs, rhs in rows:
            res = abs(lhs - rhs) / (1 + abs(lhs))
            ok = res <= tol
            w.writerow([name, k, f"{s:.17g}", f"{lhs:.17g}", f"{rhs:.17g}", f"{res:.17g}", f"{tol:.17g}", int(ok)])
            ctx.check(f"{name}[s={s:g}]", ok, res, tol)


def _run_sweep(ctx: _Ctx) -> None:
    from .dynamics import StepperConfig
    from .imethod import decay_sweep

    cfg = ctx.cfg
    g, eq = _grid(cfg), _equation(cfg)
    u0 = _initial(cfg, g)
    im = cfg["imethod"]
    rep = decay_sweep(u0, eq, im["s"], im["N_list"], StepperConfig(_safe_dt(u0, eq, cfg["run"]["dt"])), im["horizon"])
    rep.to_csv(ctx.file("decay.csv"))
    _dump(
        ctx.file("decay.json"),
        {
            "slope": rep.slope,
            "slope_band": rep.slope_band,
            "floor": rep.floor,
            "monotone": rep.monotone,
            "inconclusive": rep.inconclusive,
            "label": "report",
        },
    )
    lim = im["slope_max"]
    ok = (not rep.inconclusive) and rep.slope is not None and rep.slope <= lim
    ctx.check("decay_slope", ok, rep.slope, lim, soft=True)


def _run_estimates(ctx: _Ctx) -> None:
    from .estimates import EstimateCase, SpaceTimeGrid, estimate_ratio

    es = ctx.cfg["estimates"]
    case = EstimateCase(es["case"], es["eps"], es["b"], es["b1"], es["b2"], es["alpha"])
    grid = SpaceTimeGrid(es["Nt"], es["Nx"], es["Ny"], es["Tt"], es["Lx"], es["lambdas"][0])
    rep = estimate_ratio(case, grid, es["lambdas"], es["trials"], ctx.cfg["run"]["seed"])
    _dump(ctx.file("estimates.json"), {"reports": rep.to_json_dict(), "spread": rep.spread()})
    ctx.check("cross_lambda_spread", rep.spread() <= es["max_spread"], rep.spread(), es["max_spread"])


def _run_ground_state(ctx: _Ctx) -> None:
    from .invariants import ground_state, pohozaev_residuals, save_ground_state

    gs_cfg = ctx.cfg["ground_state"]
    gs = ground_state(gs_cfg["k"], tol=gs_cfg["tol"], max_iter=gs_cfg["max_iter"])
    path = ctx.file("ground_state.gzkf")
    save_ground_state(path, gs)
    ctx.files.append("ground_state.gzkf.json")
    a = ctx.cfg["assert"]
    ctx.check("pde_residual", gs.residual_pde <= a["residual_tol"], gs.residual_pde, a["residual_tol"])
    for i, r in enumerate(pohozaev_residuals(gs, gs.k), start=1):
        ctx.check(f"pohozaev_{i}", abs(r) <= a["pohozaev_tol"], r, a["pohozaev_tol"])


def _run_thresholds(ctx: _Ctx) -> None:
    from .imethod import thresholds

    t = ctx.cfg["thresholds"]
    rep = thresholds(t["equation"], t["domain"], s=t["s"], epsilon_tilde=t["epsilon_tilde"])
    _dump(ctx.file("thresholds.json"), rep.to_json_dict())


def _run_gronwall(ctx: _Ctx) -> None:
    from dataclasses import asdict

    from .imethod import gronwall_check

    gw = ctx.cfg["gronwall"]
    rep = gronwall_check(gw["K1"], gw["eps"], gw["a0"], gw["M"], gw["d"])
    neg = gronwall_check(gw["K1"], gw["eps"], gw["a0"], gw["M"], 1 / gw["eps"] - 0.5)
    _dump(ctx.file("gronwall.json"), {"check": asdict(rep), "negative_control": asdict(neg)})
    target = 1 / gw["eps"]
    ctx.check("bound_holds", rep.bound_holds, rep.bound_holds, True)
    ctx.check("K2_stabilized", rep.stabilized, rep.K2, rep.K2_tenth)
    err = abs(rep.empirical_exponent - target) / target
    ctx.check("empirical_exponent", err <= 0.05, rep.empirical_exponent, target)
    ctx.check("negative_control_diverges", not neg.stabilized, neg.K2, neg.K2_tenth)


_PIPELINES: dict = {
    "simulate": _run_simulate,
    "verify-identities": _run_identities,
    "imethod-sweep": _run_sweep,
    "sample-estimates": _run_estimates,
    "ground-state": _run_ground_state,
    "thresholds": _run_thresholds,
    "gronwall": _run_gronwall,
}

_USES_GRID = {"simulate", "verify-identities", "imethod-sweep"}


def default_out_root() -> Path:
    return Path(os.environ.get(OUT_ENV, "zklab-out"))


def run_subcommand(
    name: str,
    cfg: Optional[Config] = None,
    out_dir=None,
    *,
    assertions: bool = True,
    threads: Optional[int] = None,
) -> RunResult:
    """Run one pipeline, write its artifacts plus ``manifest.json``.

    The returned status is 0 when every hard check passes (or ``assertions``
    is off) and 1 otherwise; failures are also written to ``failures.json``.
    """
    if name not in _PIPELINES:
        raise ValueError(f"unknown subcommand {name!r}; expected one of {SUBCOMMANDS}")
    cfg = cfg or parse_config()
    out = Path(out_dir) if out_dir is not None else default_out_root() / name
    out.mkdir(parents=True, exist_ok=True)
    ctx = _Ctx(cfg, out)
    manifest = RunManifest(
        command=name,
        config={"values": cfg.to_json_dict(), "echo": cfg.echo, "file": cfg.source},
        grid=dict(cfg["grid"]) if name in _USES_GRID else None,
        equation=dict(cfg["equation"]) if name in _USES_GRID else None,
        seed=cfg["run"]["seed"],
        version=__version__,
        started=_now(),
    )
    with sfft.set_workers(threads or 1):
        _PIPELINES[name](ctx)
    _dump(ctx.file("failures.json"), {"failures": ctx.failures, "warnings": ctx.warnings})
    for f in ctx.files:
        manifest.add(out, f)
    manifest.finished = _now()
    manifest.write(out)
    status = 1 if (assertions and ctx.failures) else 0
    return RunResult(status, ctx.failures, ctx.warnings, out, list(ctx.files))


# ------------------------------------------------------------- plot scripts


_PREAMBLE = '''import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]

'''


def _schema(header: list) -> str:
    if header[:4] == ["N", "increment", "resolved", "fitted_slope"]:
        return "decay"
    if header and header[0] == "t" and len(header) > 1:
        if all(h.startswith("H^") for h in header[1:]):
            return "growth"
        return "trajectory"
    raise ValueError(f"unrecognized report columns {header!r}")


def _plottable(path: Path) -> bool:
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), [])
    try:
        _schema(header)
    except ValueError:
        return False
    return True


def emit_plot_script(report_files: Iterable, alpha: Optional[Mapping] = None) -> str:
    """Standalone matplotlib script plotting the given CSV reports.

    ``alpha`` maps a growth column (such as "H^2") to a reference exponent;
    when omitted it is read from a ``growth.json`` next to the CSV.
    """
    body = [_PREAMBLE]
    for i, path in enumerate(report_files):
        path = Path(path)
        with open(path, newline="") as fh:
            header = next(csv.reader(fh), [])
        kind = _schema(header)
        png = path.with_suffix(".png").name
        body.append(f"# {path.name}: {kind} report")
        body.append(f"header, rows = read({str(path)!r})")
        body.append("fig, ax = plt.subplots()")
        body.append("if not rows:")
        body.append("    ax.text(0.5, 0.5, 'no data', ha='center', va='center', transform=ax.transAxes)")
        body.append("else:")
        if kind == "decay":
            body += [
                "    ok = [r for r in rows if r[2] == '1']",
                "    ax.loglog([float(r[0]) for r in rows], [float(r[1]) for r in rows], 'o', mfc='none', label='all')",
                "    if ok:",
                "        ax.loglog([float(r[0]) for r in ok], [float(r[1]) for r in ok], 'o', label='resolved')",
                "    slope = rows[0][3]",
                "    if slope:",
                "        ax.annotate(f'fitted slope {float(slope):.3f}', xy=(0.05, 0.05), xycoords='axes fraction')",
                "    ax.set_xlabel('N')",
                "    ax.set_ylabel('|increment|')",
            ]
        elif kind == "growth":
            ref = dict(alpha or {})
            side = path.with_name("growth.json")
            if not ref and side.exists():
                with open(side) as fh:
                    ref = {f"H^{k}": v for k, v in json.load(fh).get("alpha_reference", {}).items()}
            body += [
                "    t = [float(r[0]) for r in rows]",
                f"    alpha = {ref!r}",
                "    for j, name in enumerate(header[1:], start=1):",
                "        y = [float(r[j]) for r in rows]",
                "        ax.loglog([1 + x for x in t], y, label=name)",
                "        if name in alpha:",
                "            ax.loglog([1 + x for x in t], [y[0] * (1 + x) ** alpha[name] for x in t], '--', label=f'{name} alpha={alpha[name]:g}')",
                "    ax.set_xlabel('1 + t')",
                "    ax.set_ylabel('norm')",
            ]
        else:
            body += [
                "    t = [float(r[0]) for r in rows]",
                "    for j, name in enumerate(header[1:], start=1):",
                "        ax.plot(t, [float(r[j]) for r in rows], label=name)",
                "    ax.set_xlabel('t')",
            ]
        body += [
            "    ax.legend()",
            f"fig.savefig({png!r}, dpi=120)",
            "plt.close(fig)",
            "",
        ]
    return "\n".join(body)


# ----------------------------------------------------------------- entry


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zklab", description="Simulation and verification runs.")
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", help="INI configuration file")
    p.add_argument("--out-dir", help=f"output directory (default: ${OUT_ENV}/<command>)")
    p.add_argument("--seed", type=int, help="overrides run.seed")
    p.add_argument("--threads", type=int, default=1, help="FFT worker threads")
    p.add_argument("--assert", dest="assertions", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    p.add_argument("--plot", action="store_true", help="also write plot.py for the CSV outputs")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    flags = list(args.set)
    if args.seed is not None:
        flags.append(f"run.seed={args.seed}")
    try:
        cfg = parse_config(args.config, flags)
    except ConfigError as exc:
        json.dump({"config_errors": exc.offenses}, sys.stderr, indent=2)
        sys.stderr.write("\n")
        return 2
    res = run_subcommand(args.command, cfg, args.out_dir, assertions=args.assertions, threads=args.threads)
    if args.plot:
        csvs = [res.out_dir / f for f in res.files if f.endswith(".csv") and _plottable(res.out_dir / f)]
        if csvs:
            (res.out_dir / "plot.py").write_text(emit_plot_script(csvs))
    if res.failures:
        json.dump({"failures": res.failures}, sys.stderr, indent=2)
        sys.stderr.write("\n")
    for w in res.warnings:
        sys.stderr.write(f"warning: {w['check']} = {w['value']} (limit {w['limit']})\n")
    print(res.out_dir / "manifest.json")
    return res.status

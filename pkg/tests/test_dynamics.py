import math
from fractions import Fraction

import numpy as np
import pytest

from conftest import band_limited
from zklab.dynamics import (
    EquationSpec,
    IntegrationError,
    StabilityError,
    StepperConfig,
    manufactured_forcing,
    nonlinear_term,
    rescale_initial,
    separable_target,
    simulate,
    stability_limit,
    step,
)
from zklab.spectral import RealField, SpectralField, make_grid, phase, sobolev_norm, to_spectral


def grid(k=1, Nx=32, Ny=16, Lx=4 * math.pi, lam=1):
    return make_grid(Lx, lam, Nx, Ny, Fraction(k + 2, 2))


def test_equation_spec_validation():
    with pytest.raises(ValueError):
        EquationSpec(0)
    with pytest.raises(ValueError):
        EquationSpec(1, sign=2)
    assert EquationSpec(2, -1).label == "k=2,sign=-"


def test_stepper_config_validation():
    with pytest.raises(ValueError):
        StepperConfig(0.0)
    with pytest.raises(ValueError):
        StepperConfig(0.1, scheme="RK45")


def test_nonlinear_term_examples():
    g = grid()
    assert not np.any(nonlinear_term(SpectralField.zeros(g), EquationSpec(1)).coeffs)
    for k in (1, 2, 3):
        gk = grid(k)
        u = RealField.from_function(gk, lambda X, Y: np.cos(Y))
        assert np.max(np.abs(nonlinear_term(u, EquationSpec(k)).coeffs)) <= 1e-12
    # k=1, u = cos(x/L): d_x(u^2) = -(1/L) sin(2x/L)
    L = 2.0
    u = RealField.from_function(g, lambda X, Y: np.cos(X / L))
    out = nonlinear_term(u, EquationSpec(1)).coeffs
    nz = {(int(g.jx[a]), int(g.my[b])) for a, b in np.argwhere(np.abs(out) > 1e-9)}
    j = round(2 / L * g.Lx / (2 * math.pi))
    assert nz == {(j, 0), (-j, 0)}
    ref = to_spectral(RealField.from_function(g, lambda X, Y: -(1 / L) * np.sin(2 * X / L))).coeffs
    assert np.max(np.abs(out - ref)) <= 1e-12 * np.max(np.abs(ref))
    # zero mean in x: the xi = 0 column vanishes
    v = band_limited(g, 4)
    assert np.max(np.abs(nonlinear_term(v, EquationSpec(1)).coeffs[0, :])) == 0


def test_padding_is_checked():
    g = make_grid(4 * math.pi, 1, 16, 8, 1)
    with pytest.raises(ValueError, match="3/2"):
        step(RealField.from_function(g, lambda X, Y: 0.01 * np.cos(X / 2)), EquationSpec(1), StepperConfig(0.01))


def test_linear_step_is_exact():
    g = grid()
    c = np.zeros(g.shape, complex)
    c[3, 2] = 1.0
    c[-3, -2] = 1.0
    spec = EquationSpec(1, nonlinear=False)
    out = step(SpectralField(g, c), spec, StepperConfig(0.37)).coeffs
    ref = np.exp(1j * 0.37 * phase(g.XI, g.Q)) * c
    assert np.max(np.abs(out - ref)) <= 1e-14
    assert not np.any(step(SpectralField.zeros(g), EquationSpec(1), StepperConfig(0.1)).coeffs)


def test_linear_reversibility():
    g = grid()
    u = to_spectral(band_limited(g, 2))
    spec = EquationSpec(1, nonlinear=False)
    fwd = step(u, spec, StepperConfig(0.2))
    from zklab.dynamics import Stepper

    back = Stepper(g, spec, -0.2)(fwd.coeffs, 0.2)
    assert np.max(np.abs(back - np.where(g.band_mask, u.coeffs, 0))) <= 1e-12 * np.max(np.abs(u.coeffs))


def test_free_flow_simulation():
    g = grid()
    u = to_spectral(band_limited(g, 8))
    traj = simulate(u, EquationSpec(1, nonlinear=False), StepperConfig(0.1), 1.0)
    ref = np.exp(1j * phase(g.XI, g.Q)) * np.where(g.band_mask, u.coeffs, 0)
    assert np.max(np.abs(traj.snapshots[-1].coeffs - ref)) <= 1e-12 * np.max(np.abs(ref))
    assert np.ptp(traj.diagnostics["mass"]) <= 1e-12 * traj.diagnostics["mass"][0]


def test_stability_guard():
    g = grid()
    u = RealField.from_function(g, lambda X, Y: 5 * np.cos(X / 2))
    lim = stability_limit(u, EquationSpec(1))
    assert lim == pytest.approx(0.5 / (2 * 5 * g.max_abs_xi), rel=1e-12)
    with pytest.raises(StabilityError):
        step(u, EquationSpec(1), StepperConfig(2 * lim))
    with pytest.raises(StabilityError):
        simulate(u, EquationSpec(1), StepperConfig(2 * lim), 1.0)


def test_simulate_zero_and_sampling():
    g = grid()
    traj = simulate(RealField.zeros(g), EquationSpec(1), StepperConfig(0.1, sample_every=3), 1.0)
    assert traj.times[0] == 0 and traj.times[-1] == pytest.approx(1.0)
    assert np.all(np.diff(traj.times) > 0)
    assert len(traj.times) == 1 + 3 + 1  # every 3rd of 10 steps plus the end
    for series in traj.diagnostics.values():
        assert not np.any(series)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_simulate_reports_nonfinite_state():
    g = grid()
    u = RealField.from_function(g, lambda X, Y: 1e100 * np.cos(X / 2))
    with pytest.raises(IntegrationError) as exc:
        simulate(u, EquationSpec(1), StepperConfig(1.0, c_safe=1e300), 20.0)
    assert exc.value.time == pytest.approx(1.0)
    assert exc.value.partial is not None and exc.value.partial.blowup


def test_trajectory_csv(tmp_path):
    g = grid()
    traj = simulate(band_limited(g, 3, amp=0.1), EquationSpec(1), StepperConfig(0.05), 0.2, sobolev_orders=(1.0,))
    traj.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "t,mass,energy,H^1"
    assert len(lines) == len(traj.times) + 1
    value = float(lines[1].split(",")[1])
    assert value == traj.diagnostics["mass"][0]  # 17 digits round-trip exactly


def test_rescale_initial():
    g = grid(2)
    u = band_limited(g, 12)
    assert np.array_equal(rescale_initial(u, 1, 2).samples, u.samples)
    for lam in (2, 3, 4):
        assert sobolev_norm(rescale_initial(u, lam, 2), 0) == pytest.approx(sobolev_norm(u, 0), rel=1e-12)
    g1 = grid(1)
    u1 = band_limited(g1, 12)
    assert sobolev_norm(rescale_initial(u1, 4, 1), 0) == pytest.approx(sobolev_norm(u1, 0) / 4, rel=1e-12)
    f = to_spectral(u1)
    fl = rescale_initial(f, 4, 1)
    assert fl.grid.Lx == 4 * g1.Lx and fl.grid.lam == 4
    with pytest.raises(ValueError):
        rescale_initial(u, 1.5, 2)


def test_manufactured_forcing_examples():
    g = grid()
    spec = EquationSpec(1)
    zero = manufactured_forcing(lambda t: np.zeros(g.shape), lambda t: np.zeros(g.shape), g, spec)
    assert not np.any(zero(0.3))
    c = np.zeros(g.shape, complex)
    c[2, 1] = c[-2, -1] = 1.0
    ph = phase(g.XI, g.Q)
    free = manufactured_forcing(
        lambda t: np.exp(1j * t * ph) * c, lambda t: 1j * ph * np.exp(1j * t * ph) * c, g, EquationSpec(1, nonlinear=False)
    )
    assert np.max(np.abs(free(0.8))) <= 1e-12


def _manufactured_error(k, dt, amplitude=0.1):
    g = make_grid(4 * math.pi, 1, 128, 32, Fraction(k + 2, 2))
    spec = EquationSpec(k)
    target, target_dt = separable_target(g, amplitude, Lt=2.0)
    F = manufactured_forcing(target, target_dt, g, spec)
    traj = simulate(SpectralField(g, target(0.0)), spec, StepperConfig(dt), 1.0, F, diagnostics=False)
    return float(np.max(np.abs(traj.snapshots[-1].coeffs - target(1.0))))


def test_manufactured_fourth_order():
    errs = [_manufactured_error(1, dt) for dt in (0.04, 0.02, 0.01)]
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(3.7 <= p <= 4.3 for p in orders), orders

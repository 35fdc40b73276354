import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import band_limited
from zklab.dynamics import EquationSpec, StepperConfig, simulate
from zklab.imethod import (
    IMultiplierSpec,
    alpha_growth,
    apply_IN,
    commutator_integrand,
    decay_sweep,
    gronwall_check,
    i_multiplier_value,
    increment_commutator,
    increment_direct,
    lambda_choice,
    modified_energy,
    quarter_nyquist,
    scaling_checks,
    smoothstep,
    theta_interpolation,
    thresholds,
)
from zklab.invariants import energy
from zklab.spectral import RealField, SpectralField, make_grid, sobolev_norm, to_spectral


def test_multiplier_branches():
    spec = IMultiplierSpec(10.0, 0.5)
    assert i_multiplier_value(3.0, 4.0, spec) == 1.0  # radius 5 = N/2
    assert i_multiplier_value(40.0, 0.0, spec) == pytest.approx(0.5, rel=1e-15)
    assert i_multiplier_value(0.0, 0.0, spec) == 1.0
    with pytest.raises(ValueError):
        IMultiplierSpec(0.0, 0.5)
    with pytest.raises(ValueError):
        IMultiplierSpec(1.0, 0.5, blend=4)


@pytest.mark.parametrize("order", [3, 5, 7])
def test_smoothstep_ends(order):
    assert smoothstep(0.0, order) == 0 and smoothstep(1.0, order) == pytest.approx(1.0, abs=1e-15)
    t = np.linspace(0, 1, 1001)
    assert np.all(np.diff(smoothstep(t, order)) >= -1e-15)


def test_multiplier_monotone_and_continuous():
    spec = IMultiplierSpec(4.0, 0.9)
    r = np.linspace(0, 20, 200_001)
    m = i_multiplier_value(r, 0 * r, spec)
    assert np.all(np.diff(m) <= 1e-15)
    for edge in (4.0, 8.0):
        lo = i_multiplier_value(edge * (1 - 1e-13), 0.0, spec)
        hi = i_multiplier_value(edge * (1 + 1e-13), 0.0, spec)
        assert abs(lo - hi) <= 1e-12
    assert i_multiplier_value(8.0, 0.0, spec) == pytest.approx(2.0 ** (0.9 - 1), rel=1e-15)


def test_apply_IN_examples():
    g = make_grid(2 * math.pi, 1, 16, 16)
    u = to_spectral(band_limited(g, 2, frac=0.4))
    assert np.array_equal(apply_IN(u, IMultiplierSpec(100.0, 0.5)).coeffs, u.coeffs)
    spec = IMultiplierSpec(1.0, 0.5)
    once = apply_IN(u, spec)
    twice = apply_IN(once, spec)
    assert np.max(np.abs(twice.coeffs - once.coeffs)) > 1e-3  # not a projection


@given(st.integers(0, 2**31), st.sampled_from([1.0, 2.0, 4.0]), st.sampled_from([0.5, 0.7, 0.9]))
def test_IN_smoothing_bound(seed, N, s):
    g = make_grid(2 * math.pi, 1, 32, 32)
    u = band_limited(g, seed, frac=1.0)
    lhs = sobolev_norm(apply_IN(u, IMultiplierSpec(N, s)), 1)
    assert lhs <= 2 * N ** (1 - s) * sobolev_norm(u, s)


def test_modified_energy_examples():
    g = make_grid(2 * math.pi, 1, 16, 16, F(3, 2))
    eq = EquationSpec(1)
    u = band_limited(g, 3)
    assert modified_energy(u, IMultiplierSpec(100.0, 0.9), eq) == energy(u, eq)
    assert modified_energy(SpectralField.zeros(g), IMultiplierSpec(1.0, 0.9), eq) == 0
    isp = IMultiplierSpec(2.0, 0.9)
    assert modified_energy(u, isp, eq) == energy(apply_IN(u, isp), eq)


@pytest.fixture(scope="module")
def short_run():
    g = make_grid(8 * math.pi, 1, 64, 16, F(3, 2))
    u0 = RealField.from_function(g, lambda X, Y: 0.6 * np.exp(-(X**2) / 4) * (np.cos(Y) + 0.4 * np.cos(3 * Y)))
    eq = EquationSpec(1)
    return simulate(u0, eq, StepperConfig(0.002), 0.1, diagnostics=False), eq


def test_increment_examples(short_run):
    traj, eq = short_run
    isp = IMultiplierSpec(2.0, 0.9)
    assert increment_direct(traj, isp, eq, 0.05, 0.05) == 0
    assert increment_commutator(traj, isp, eq, 0.05, 0.05) == 0
    big = IMultiplierSpec(1e3, 0.9)
    assert commutator_integrand(traj.snapshots[3], big, eq) == 0
    assert abs(increment_direct(traj, big, eq, 0.0, 0.1)) <= 1e-9
    with pytest.raises(KeyError):
        increment_direct(traj, isp, eq, 0.0, 0.0123)
    with pytest.raises(ValueError):
        increment_commutator(traj, isp, eq, 0.0, 0.002)
    d = increment_direct(traj, isp, eq, 0.0, 0.1)
    c = increment_commutator(traj, isp, eq, 0.0, 0.1)
    assert abs(d - c) <= 1e-6 * (1 + abs(d))


def test_quarter_nyquist():
    g = make_grid(8 * math.pi, 1, 128, 32)
    assert quarter_nyquist(g) == pytest.approx(4.0)


def test_scaling_checks():
    g = make_grid(8 * math.pi, 1, 64, 32)
    u = band_limited(g, 4, frac=0.6)
    r = scaling_checks(u, 1, 1, IMultiplierSpec(1e3, 0.9))
    assert r["l2_ratio"] == pytest.approx(1.0, abs=1e-14)
    assert r["C_L2"] == pytest.approx(1.0, abs=1e-14)
    for k in (1, 2):
        for lam in (2, 4, 8):
            r = scaling_checks(u, lam, k, IMultiplierSpec(2.0, 0.9))
            assert abs(r["l2_ratio"] - 1) <= 1e-12
            assert r["C_L2"] <= 1 + 1e-12
    with pytest.raises(ValueError):
        scaling_checks(u, 1.5, 1, IMultiplierSpec(2.0, 0.9))


def test_lambda_choice():
    assert lambda_choice("ZK", 16, 1 / 3) == pytest.approx(4.0)
    assert lambda_choice("mZK", 16, 0.5) == pytest.approx(16.0)
    assert lambda_choice("ZK", 1e6, 1 - 1e-12, C=3) == pytest.approx(3.0, rel=1e-9)
    with pytest.raises(ValueError):
        lambda_choice("ZK", 16, 1.0)


def test_thresholds_exact():
    zk = thresholds("ZK")
    assert zk.gwp_threshold == F(11, 13)
    assert thresholds("mZK", "cylinder", s=F(9, 10)).gwp_threshold == F(36, 49)
    assert thresholds("mZK", "plane", s=F(9, 10)).gwp_threshold == F(2, 3)
    s = F(9, 10)
    assert zk.lambda_exponent == (1 - s) / (1 + s)
    assert zk.N_of_T_exponent == 4 * (1 + s) / (13 * s - 11)
    assert zk.growth_exponent == 4 * (1 - s * s) / (13 * s - 11)
    cyl = thresholds("mZK", "cylinder", s=s)
    assert cyl.growth_exponent == 12 * s * (1 - s) / (49 * s - 36)
    assert cyl.N_of_T_exponent == 12 * s / (49 * s - 36)
    pl = thresholds("mZK", "plane", s=s)
    assert pl.growth_exponent == 2 * s * (1 - s) / (3 * (3 * s - 2))
    e, s = F(1, 10), F(19, 20)
    assert thresholds("ZK", s=s, epsilon_tilde=e).gwp_threshold_eps == (11 + 4 * e) / (13 - 4 * e)
    assert thresholds("mZK", "cylinder", s=s, epsilon_tilde=e).gwp_threshold_eps == 3 / (F(49, 12) - e)
    assert thresholds("mZK", "plane", s=s, epsilon_tilde=e).gwp_threshold_eps == 3 / (F(9, 2) - e)
    with pytest.raises(ValueError, match="11/13"):
        thresholds("ZK", s=F(11, 13))


def test_growth_exponent_blows_up_near_threshold():
    vals = [thresholds("ZK", s=F(11, 13) + F(1, 10**n)).growth_exponent for n in (2, 4, 6)]
    assert vals[0] < vals[1] < vals[2] and vals[2] > 10**4


def test_alpha_and_theta():
    assert alpha_growth(3, 4) == 3
    assert alpha_growth(1, 2) == 4
    assert theta_interpolation(1, 3) == F(1, 8)
    assert theta_interpolation(2, 3) == F(1, 2)
    r = thresholds("ZK", k=1, s=2)
    assert r.alpha_growth == 4 and r.theta_interpolation == F(1, 4)
    d = thresholds("ZK").to_json_dict()
    assert d["gwp_threshold"]["fraction"] == "11/13"


def test_gronwall_examples():
    a = gronwall_check(1.0, 0.5, 0.0, 100_000, 2.1)
    assert a.bound_holds and a.stabilized and math.isfinite(a.K2)
    assert abs(a.empirical_exponent - 2) / 2 <= 0.05
    b = gronwall_check(1.0, 0.25, 0.0, 100_000, 4.1)
    assert b.bound_holds and b.stabilized
    for eps in (0.5, 0.25):
        neg = gronwall_check(1.0, eps, 0.0, 100_000, 1 / eps - 0.5)
        assert not neg.stabilized
    with pytest.raises(ValueError):
        gronwall_check(1.0, 1.5, 0.0, 100, 2.0)


def test_gronwall_exponent_approaches_from_below():
    exps = [gronwall_check(1.0, 0.5, 0.0, M, 2.1).empirical_exponent for M in (10**3, 10**4, 10**5)]
    assert exps[0] < exps[1] < exps[2] < 2.0


def test_decay_sweep_small():
    g = make_grid(8 * math.pi, 1, 64, 16, F(3, 2))
    u0 = RealField.from_function(g, lambda X, Y: 0.6 * np.exp(-(X**2) / 4) * (np.cos(Y) + 0.4 * np.cos(3 * Y)))
    rep = decay_sweep(u0, EquationSpec(1), 0.9, [1, 2, 4, 8], StepperConfig(0.01), horizon=0.5)
    assert rep.N == [1.0, 2.0, 4.0, 8.0]
    assert rep.resolved[0]
    with pytest.raises(ValueError):
        decay_sweep(u0, EquationSpec(1), 0.9, [1, 2, 3, 5], StepperConfig(0.01))
    huge = decay_sweep(u0, EquationSpec(1), 0.9, [1e3, 2e3, 4e3, 8e3], StepperConfig(0.01), horizon=0.5)
    assert huge.inconclusive and not any(huge.resolved)

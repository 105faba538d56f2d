import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from darkcool.model import (HBAR, K_B, ConfigError, CouplingMatrix, SystemConfig, ThermalBath, UnitSystem,
                            drive_strengths, thermal_occupancy, validate_config)
from darkcool.model import MechanicalModeSpec, OpticalModeSpec


def test_valid_fig1_config(fig1_config):
    assert validate_config(fig1_config) == []


def test_zero_linewidth_diagnostic(fig1_config):
    bad = (OpticalModeSpec.from_detuning(1, 20.0, 0.0),) + fig1_config.optical[1:]
    diags = validate_config(SystemConfig(bad, fig1_config.mechanical, fig1_config.coupling, fig1_config.bath))
    assert any("optical linewidth must be positive" in d and "optical[0]" in d for d in diags)


def test_shape_diagnostic(fig1_config):
    cfg = fig1_config.with_coupling(np.ones((3, 2)))
    assert any("shape" in d and "coupling" in d for d in validate_config(cfg))


def test_bath_needs_one_of_two(fig1_config):
    assert validate_config(fig1_config.with_bath(n_th=None))
    assert validate_config(fig1_config.with_bath(temperature=1.0))


def test_occupancy_ln2():
    omega = math.log(2) * K_B * 1.0 / HBAR
    assert thermal_occupancy(omega, 1.0) == pytest.approx(1.0, rel=1e-14)


def test_occupancy_room_temperature():
    w = 2 * math.pi * 1.178e6
    n = thermal_occupancy(w, 300.0)
    # frozen from direct evaluation
    assert n == pytest.approx(5306439.008343285, rel=1e-12)
    assert n == pytest.approx(K_B * 300 / (HBAR * w) - 0.5, rel=1e-3)


def test_optical_occupancy_negligible():
    assert thermal_occupancy(2 * math.pi * 2.8e14, 300.0) < 1e-19


@pytest.mark.parametrize("T", [0.0, -1.0])
def test_occupancy_domain(T):
    with pytest.raises(ValueError):
        thermal_occupancy(1e6, T)


def test_drive_strengths_examples():
    per, tot = drive_strengths(np.zeros((2, 3)), [1.0, 2.0])
    assert np.all(per == 0) and tot == 0
    per, tot = drive_strengths([[0.3, 0.0]], [2.0])
    assert per[0] == pytest.approx(0.045) and tot == pytest.approx(0.045)


def test_drive_strength_membrane_mixed_units():
    # |g^S| of the first drive (43.61, 0, 54.38) rad/s, n_opt photons, kappa taken as 0.967e6 (ordinary Hz)
    g = np.array([43.61, 0.0, 54.38]) * math.sqrt(1.95e5)
    per, _ = drive_strengths(g[None, :], [0.967e6])
    assert per[0] == pytest.approx(980.0, rel=5e-3)


def test_drive_strengths_from_config(fig1_config):
    per, tot = drive_strengths(fig1_config)
    assert per == pytest.approx([0.025, 0.025]) and tot == pytest.approx(0.05)
    with pytest.raises(ConfigError):
        drive_strengths(fig1_config.with_coupling(fig1_config.coupling.values, "single_photon"))


def test_coupling_matrix_frozen():
    c = CouplingMatrix([1.0, 2.0])
    assert c.shape == (1, 2)
    with pytest.raises(ValueError):
        c.values[0, 0] = 3.0
    with pytest.raises(ConfigError):
        CouplingMatrix(np.ones((2, 2, 2)))


def test_temperature_needs_kappa_si(fig1_config):
    cfg = fig1_config.with_bath(n_th=None, temperature=0.1)
    with pytest.raises(ConfigError):
        cfg.thermal_occupancy()
    cfg = SystemConfig(cfg.optical, cfg.mechanical, cfg.coupling, cfg.bath, UnitSystem("kappa", 1e6))
    assert cfg.thermal_occupancy() == pytest.approx(thermal_occupancy(20.0 * 1e6, 0.1))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 10_000))
def test_strength_invariant_under_mechanical_rotation(M, N, seed):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(M, N)) + 1j * rng.normal(size=(M, N))
    U, _ = np.linalg.qr(rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N)))
    kap = rng.uniform(0.5, 2.0, M)
    a, ta = drive_strengths(G, kap)
    b, tb = drive_strengths(G @ U, kap)
    assert np.allclose(a, b, rtol=1e-12) and tb == pytest.approx(ta, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e3, 1e15), st.floats(1e-3, 1e3), st.floats(1.001, 10.0))
def test_occupancy_monotonic(omega, T, f):
    n = thermal_occupancy(omega, T)
    if n > 1e-290:
        assert thermal_occupancy(omega * f, T) < n
        assert thermal_occupancy(omega, T * f) > n


@settings(max_examples=30, deadline=None)
@given(st.floats(1e2, 1e9))
def test_unit_round_trip(kappa_si):
    cfg = SystemConfig(
        (OpticalModeSpec(1, 20.3, 1.0, 0.2 - 0.1j, 0.1), OpticalModeSpec(2, 19.7, 0.8)),
        (MechanicalModeSpec(1, 20.0005, 1e-4), MechanicalModeSpec(2, 19.9995, 2e-4)),
        CouplingMatrix([[0.1, 0.2j], [0.3, -0.1]]), ThermalBath(n_th=7.0, reference_frequency=20.0),
        UnitSystem("kappa", kappa_si))
    back = cfg.to_si().to_kappa()
    for a, b in zip(cfg.optical + cfg.mechanical, back.optical + back.mechanical):
        for name in a.__dataclass_fields__:
            x, y = getattr(a, name), getattr(b, name)
            assert abs(x - y) <= 1e-12 * max(abs(x), 1e-300)
    assert np.allclose(back.coupling.values, cfg.coupling.values, rtol=1e-12, atol=0)
    assert back.bath.reference_frequency == pytest.approx(20.0, rel=1e-12)

import numpy as np
import pytest

from btcsensor.dark_state import (
    DarkState,
    build_dark_state,
    dark_state_observables,
    mean_field_magnetizations,
    verify_dark_state,
)
from btcsensor.errors import DarkStateError, ValidationError
from btcsensor.liouville import ModelParams, build_cascaded_generator, stationary_state


def test_two_spin_benchmark():
    # two spin-1/2 constituents: |psi> ∝ |1,-1> - i sqrt(2) (w/k) |0,0>
    ds = build_dark_state(1, 0.7)
    assert ds.reduced[1] == pytest.approx(1.0)
    assert ds.reduced[0] == pytest.approx(np.sqrt(2.0), abs=1e-12)
    ratio = ds.coeffs[0] / ds.coeffs[1]
    assert ratio == pytest.approx(-1j * np.sqrt(2.0) * 0.7, abs=1e-12)


def test_undriven_dark_state_is_all_down():
    ds = build_dark_state(4, 0.0)
    expected = np.zeros(5, dtype=complex)
    expected[4] = 1.0
    assert np.abs(ds.coeffs - expected).max() < 1e-14
    vec = ds.state_vector()
    down = np.zeros(25)
    down[-1] = 1.0
    assert np.linalg.norm(np.abs(vec) - down) < 1e-12


def test_strong_drive_limit_is_singlet():
    ds = build_dark_state(4, 1e3)
    # all weight collapses onto J = 0
    assert abs(ds.coeffs[0]) == pytest.approx(1.0, abs=1e-4)
    assert np.sum(np.abs(ds.coeffs[1:]) ** 2) < 1e-4


def test_normalization_and_phase_structure():
    for n, w in ((3, 0.4), (6, 1.3), (9, 5.0)):
        ds = build_dark_state(n, w)
        assert np.sum(np.abs(ds.coeffs) ** 2) == pytest.approx(1.0, abs=1e-12)
        # A_J* A_{J-1} is purely imaginary for every J
        for j in range(1, n + 1):
            prod = np.conj(ds.coeffs[j]) * ds.coeffs[j - 1]
            assert abs(prod.real) < 1e-12


@pytest.mark.parametrize("n", [1, 2, 4, 7])
@pytest.mark.parametrize("w", [0.2, 1.0, 5.0])
def test_defining_conditions(n, w):
    ds = build_dark_state(n, w)
    res_h, res_jm = verify_dark_state(ds)
    assert res_h < 1e-10
    assert res_jm < 1e-10
    assert ds.residual_h == pytest.approx(res_h, abs=1e-14)


def test_perturbed_coefficients_detected():
    ds = build_dark_state(4, 1.0)
    bad = ds.coeffs.copy()
    bad[1] += 1e-3
    bad /= np.linalg.norm(bad)
    from btcsensor.spin_algebra import SpinSector, coupled_basis_map, coupled_state
    cmap = coupled_basis_map(SpinSector(4))
    vec = sum(bad[j] * coupled_state(cmap, j) for j in range(5))
    vec /= np.linalg.norm(vec)
    broken = DarkState(n_spins=4, omega_over_kappa=1.0, coeffs=bad,
                       reduced=ds.reduced, residual_h=0.0, residual_jm=0.0,
                       _basis_map=cmap, _vector=vec)
    res_h, res_jm = verify_dark_state(broken)
    assert res_h > 1e-4  # the detector actually fires on broken input
    assert res_jm < 1e-10  # still in the annihilated subspace


def test_selection_rule_independence():
    for n, w in ((2, 0.5), (5, 1.0), (8, 2.0)):
        a = build_dark_state(n, w, selection="max_m1")
        b = build_dark_state(n, w, selection="min_m1")
        assert np.abs(a.coeffs - b.coeffs).max() < 1e-10
        assert np.abs(a.reduced - b.reduced).max() < 1e-10 * max(1, np.abs(a.reduced).max())


def test_observable_symmetries():
    ds = build_dark_state(6, 1.2)
    obs = dark_state_observables(ds)
    assert obs["sz1"] == pytest.approx(obs["sz2"], abs=1e-10)
    assert obs["sy1"] == pytest.approx(-obs["sy2"], abs=1e-10)
    assert abs(obs["sx1"]) < 1e-10
    assert abs(obs["sx2"]) < 1e-10
    assert obs["sy1"] > 0  # sensor tilts along +y
    # undriven: fully polarized down
    obs0 = dark_state_observables(build_dark_state(6, 0.0))
    assert obs0["sz1"] == pytest.approx(-3.0, abs=1e-12)
    assert obs0["sz2"] == pytest.approx(-3.0, abs=1e-12)


def test_two_spin_observables_against_brute_force():
    # explicit CG expansion for n = 2 (two spin-1 constituents)
    w = 0.8
    ds = build_dark_state(2, w)
    obs = dark_state_observables(ds)
    vec = ds.state_vector()
    # independent matrices
    sz1 = np.kron(np.diag([1.0, 0.0, -1.0]), np.eye(3))
    sy = np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]]) / np.sqrt(2)
    sy1 = np.kron(sy, np.eye(3))
    assert obs["sz1"] == pytest.approx(np.real(vec.conj() @ sz1 @ vec), abs=1e-12)
    assert obs["sy1"] == pytest.approx(np.real(vec.conj() @ sy1 @ vec), abs=1e-12)


def test_mean_field_tracking():
    n = 10
    for ratio in (0.2, 0.5, 0.8):
        w = ratio * n / 2.0
        obs = dark_state_observables(build_dark_state(n, w))
        mf = mean_field_magnetizations(n, w)
        scale = n / 2.0
        assert abs(obs["sy1"] - mf["sy1"]) <= 0.1 * scale
        assert abs(obs["sz1"] - mf["sz1"]) <= 0.1 * scale


def test_stationary_state_is_dark_state():
    n, w = 6, 1.0
    ds = build_dark_state(n, w)
    g = build_cascaded_generator(ModelParams(n, w, omega_d=w))
    res = stationary_state(g)
    vec = ds.state_vector()
    fidelity = float(np.real(vec.conj() @ res.rho_ss @ vec))
    assert fidelity > 1 - 1e-8
    assert res.intensity < 1e-8


def test_validation():
    with pytest.raises(ValidationError):
        build_dark_state(0, 1.0)
    with pytest.raises(ValidationError):
        build_dark_state(4, -0.1)
    with pytest.raises(ValidationError):
        build_dark_state(4, 1.0, selection="widest")
    with pytest.raises(ValidationError):
        mean_field_magnetizations(4, 10.0)

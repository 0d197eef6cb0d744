import numpy as np
import pytest

from btcsensor.errors import ValidationError
from btcsensor.holstein_primakoff import (
    CascadedHp,
    HpPrediction,
    fluctuation_vacuum_coefficients,
    hp_cascaded,
    hp_deformed_eigenvalue,
    hp_error_prefactor,
    hp_qfi_rate,
    hp_scgf,
    hp_single,
)


def test_hp_single_undriven():
    p = hp_single(0.0)
    assert p.valid
    assert p.beta == 0.0
    # jump operator reduces to sqrt(2) b for beta = 0
    assert p.jump_a == pytest.approx(np.sqrt(2.0), abs=1e-14)
    assert p.jump_b == pytest.approx(0.0, abs=1e-14)


def test_hp_single_saturation():
    p = hp_single(1.0)
    assert p.valid
    assert p.jump_a == pytest.approx(0.5, abs=1e-14)
    assert p.jump_b == pytest.approx(0.5, abs=1e-14)
    assert abs(p.jump_b / p.jump_a) <= 1.0


def test_hp_single_self_consistency():
    # beta sqrt(2 - |beta|^2) reproduces the lowering mean field -i omega~/kappa
    for r in (0.1, 0.5, 0.9):
        p = hp_single(r, kappa=1.0)
        resid = p.beta * np.sqrt(2.0 - abs(p.beta) ** 2) - (-1j * r)
        assert abs(resid) < 1e-12
        assert abs(p.jump_b / p.jump_a) <= 1.0


def test_hp_single_outside_phase_flagged():
    p = hp_single(1.5)
    assert not p.valid


def test_hp_scgf_values():
    assert hp_scgf(2.0, 1.0, 0.0) == 0.0
    expected = (np.exp(0.05) - 1.0) * 56.25
    assert hp_scgf(7.5, 1.0, -0.05) == pytest.approx(expected, rel=1e-14)
    assert hp_error_prefactor(1.0) == pytest.approx(0.5)
    assert hp_error_prefactor(4.0) == pytest.approx(1.0)


def test_hp_qfi_rate_values():
    q = hp_qfi_rate(1.0)
    assert q.qfi_rate == pytest.approx(4.0)
    assert q.sensitivity == pytest.approx(2.0)
    assert hp_deformed_eigenvalue(7.5, 7.5) == 0.0
    assert hp_deformed_eigenvalue(7.5, 7.0) == pytest.approx(-0.125)


def test_fluctuation_vacuum_normalizable_and_annihilated():
    p = hp_single(0.5)
    coeffs = fluctuation_vacuum_coefficients(p.jump_a, p.jump_b)
    assert np.linalg.norm(coeffs) == pytest.approx(1.0, abs=1e-12)
    # dropped tail: continue the un-normalized series past the truncation
    q = -p.jump_b / p.jump_a
    n_kept = len(coeffs) - 1
    log_w = 0.5 * sum(np.log(2 * k - 1) - np.log(2 * k) for k in range(1, n_kept + 1))
    dropped = 0.0
    for n in range(n_kept + 1, n_kept + 200):
        log_w += 0.5 * (np.log(2 * n - 1) - np.log(2 * n))
        dropped += (q ** n * np.exp(log_w)) ** 2
    assert dropped < 1e-12
    # oracle: apply A b + B b† in a truncated Fock space
    n_even = len(coeffs)
    dim = 2 * n_even + 2
    full = np.zeros(dim)
    full[0:2 * n_even:2] = coeffs
    b = np.diag(np.sqrt(np.arange(1, dim)), k=1)
    op = p.jump_a * b + p.jump_b * b.conj().T
    resid = np.linalg.norm(op @ full)
    assert resid < 1e-6


def test_fluctuation_vacuum_requires_stationary_phase():
    with pytest.raises(ValidationError):
        fluctuation_vacuum_coefficients(0.5, 0.5)


def test_hp_cascaded_dark_line_and_magnetizations():
    res = hp_cascaded(1.0, 1.0, n_spins=10)
    assert isinstance(res, CascadedHp)
    assert res.stationary
    for s in (-0.1, 0.0, 0.2):
        assert res.theta(s) == 0.0
    m = res.magnetizations
    assert m["sy1"] == pytest.approx(1.0)   # omega / kappa
    assert m["sy2"] == pytest.approx(-1.0)  # decoder inverts
    assert m["sz1"] == pytest.approx(m["sz2"])
    assert m["sx1"] == 0.0 and m["sx2"] == 0.0
    assert m["sz1"] == pytest.approx(-5.0 * np.sqrt(1 - (1.0 / 5.0) ** 2))


def test_hp_cascaded_scgf_closure():
    res = hp_cascaded(1.05, 0.75, n_spins=6)
    assert res.stationary
    expected = (np.exp(0.05) - 1.0) * 0.3**2
    assert res.theta(-0.05) == pytest.approx(expected, rel=1e-12)
    assert res.error_prefactor == pytest.approx(0.5)


def test_hp_cascaded_phase_boundary():
    # boundary: delta < (omega_c - omega_d) / 2 with omega_c = 5 kappa (N = 10)
    n = 10
    omega_c = 5.0
    omega_d = 0.5 * omega_c
    inside = hp_cascaded(omega_d + 0.24 * omega_c, omega_d, n_spins=n)
    outside = hp_cascaded(omega_d + 0.26 * omega_c, omega_d, n_spins=n)
    assert inside.stationary
    assert not outside.stationary
    # decoder predictions stay defined inside
    assert inside.decoder.valid
    assert abs(inside.decoder.jump_b / inside.decoder.jump_a) <= 1.0


def test_hp_pure_function_determinism():
    a = hp_cascaded(1.3, 0.9, n_spins=8)
    b = hp_cascaded(1.3, 0.9, n_spins=8)
    assert a == b or (a.sensor == b.sensor and a.decoder == b.decoder
                      and a.magnetizations == b.magnetizations)

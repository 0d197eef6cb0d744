import numpy as np
import pytest

from btcsensor.errors import DimensionCapError, ValidationError
from btcsensor.liouville import ModelParams
from btcsensor.sensing import (
    ProtocolResult,
    ScalingFit,
    fit_power_law,
    protocol1_error,
    protocol2_error,
    sensitivity_sweep,
)


def oracle_dense_superop(h_left, h_right, jump, recycle=1.0):
    d = h_left.shape[0]
    eye = np.eye(d)
    ldl = jump.conj().T @ jump
    return (-1j * (np.kron(h_left, eye) - np.kron(eye, h_right.T))
            + recycle * np.kron(jump, jump.conj())
            - 0.5 * (np.kron(ldl, eye) + np.kron(eye, ldl.T)))


def oracle_spin_ops(n):
    j = n / 2
    m = j - np.arange(n + 1)
    sp = np.zeros((n + 1, n + 1), dtype=complex)
    for i in range(1, n + 1):
        sp[i - 1, i] = np.sqrt(j * (j + 1) - m[i] * (m[i] + 1))
    sm = sp.conj().T
    return 0.5 * (sp + sm), sm


def test_fit_power_law_calibration():
    sizes = np.array([4, 6, 8, 10, 12, 14, 16, 18], dtype=float)
    values = 2.7 * sizes**-0.5
    fit = fit_power_law(sizes, values, fit_window=6)
    assert isinstance(fit, ScalingFit)
    assert fit.exponent == pytest.approx(-0.5, abs=1e-12)
    assert fit.prefactor == pytest.approx(2.7, rel=1e-12)
    assert fit.residual_rms < 1e-13


def test_fit_power_law_rescale_invariance():
    sizes = np.arange(5, 16, dtype=float)
    rng = np.random.default_rng(1)
    values = 1.3 * sizes**0.8 * np.exp(rng.normal(scale=0.01, size=len(sizes)))
    a = fit_power_law(sizes, values)
    b = fit_power_law(sizes, 37.0 * values)
    assert a.exponent == pytest.approx(b.exponent, abs=1e-12)
    assert b.prefactor == pytest.approx(37.0 * a.prefactor, rel=1e-10)


def test_fit_power_law_validation():
    with pytest.raises(ValidationError):
        fit_power_law([1, 2, 3], [1.0, 2.0, 3.0], fit_window=6)
    with pytest.raises(ValidationError):
        fit_power_law(np.arange(1, 9), np.array([1, 2, 3, 4, 5, 6, 7, -1.0]))


def test_protocol1_small_system_matches_dense_oracle():
    # independent pipeline: dense spectra for theta''(0), dense nullspace
    # intensities for the drive derivative
    n, ratio = 2, 0.5
    params = ModelParams.from_critical_ratio(n, ratio)
    res = protocol1_error(params, include_bound=False)
    assert isinstance(res, ProtocolResult)

    sx, sm = oracle_spin_ops(n)
    jump = sm  # kappa = 1

    def theta(s):
        mat = oracle_dense_superop(params.omega * sx, params.omega * sx, jump,
                                   recycle=np.exp(-s))
        vals = np.linalg.eigvals(mat)
        return vals[np.argmax(vals.real)].real

    h = 1e-4
    theta_pp0 = (theta(h) - 2 * theta(0.0) + theta(-h)) / h**2

    def intensity(omega):
        mat = oracle_dense_superop(omega * sx, omega * sx, jump)
        mat[0, :] = 0.0
        mat[0, [0, 4, 8]] = 1.0
        rho = np.linalg.solve(mat, np.array([1, 0, 0, 0, 0, 0, 0, 0, 0], dtype=complex))
        rho = rho.reshape(3, 3)
        return np.real(np.trace(jump.conj().T @ jump @ rho))

    d = 1e-4
    deriv = (intensity(params.omega + d) - intensity(params.omega - d)) / (2 * d)
    ref = np.sqrt(theta_pp0) / abs(deriv)
    assert res.delta_omega_bar == pytest.approx(ref, rel=1e-4)
    assert res.intensity_derivative == pytest.approx(deriv, rel=1e-4)


def test_protocol1_bound_ordering():
    params = ModelParams.from_critical_ratio(6, 0.5)
    res = protocol1_error(params)
    assert res.bound is not None
    # the estimator never beats the emission-field bound (2% numerical slack)
    assert res.delta_omega_bar / res.bound >= 0.98
    # in the deep stationary phase the bound is essentially saturated
    assert res.delta_omega_bar == pytest.approx(0.5, rel=0.15)


def test_protocol2_dark_point_excluded():
    params = ModelParams(4, 1.0, omega_d=1.0)
    with pytest.raises(ValidationError):
        protocol2_error(params)
    with pytest.raises(ValidationError):
        protocol1_error(params)


def test_protocol2_stationary_phase_matches_single():
    # small detuning from the matched-drive line inside the stationary phase
    n = 4
    omega_d = 0.25 * n / 2.0
    params = ModelParams(n, omega_d + 0.2, omega_d=omega_d)
    res = protocol2_error(params, include_bound=False)
    assert res.delta_omega_bar == pytest.approx(0.5, rel=0.25)


def test_protocol2_cap_redirects_to_trajectories():
    params = ModelParams(16, 16.5, omega_d=16.0)
    with pytest.raises(DimensionCapError):
        protocol2_error(params)


@pytest.mark.slow
def test_protocol2_nonmonotonic_in_detuning():
    # decoder driven at the critical point: the error has an interior optimum
    # as a function of the drive mismatch and beats the stationary-phase value
    n = 6
    omega_d = 1.0 * n / 2.0
    deltas = [0.01, 0.2, 1.6]
    errors = []
    for dw in deltas:
        params = ModelParams(n, omega_d + dw, omega_d=omega_d)
        errors.append(protocol2_error(params, include_bound=False).delta_omega_bar)
    best = int(np.argmin(errors))
    assert 0 < best < len(errors) - 1
    assert errors[best] < 0.5


def test_sweep_validation():
    with pytest.raises(ValidationError):
        sensitivity_sweep([4, 6, 8], mode="bound", omega_over_omega_c=0.5)
    with pytest.raises(ValidationError):
        sensitivity_sweep(range(6, 18), mode="bound")
    with pytest.raises(ValidationError):
        sensitivity_sweep(range(6, 18), mode="protocol2", omega_d_over_omega_c=2.0)
    with pytest.raises(ValidationError):
        sensitivity_sweep(range(6, 18), mode="nope", omega_over_omega_c=1.0)


@pytest.mark.slow
def test_bound_sweep_fits_linear_scaling():
    fit = sensitivity_sweep(range(6, 18, 2), mode="bound", omega_over_omega_c=2.0)
    assert fit.exponent == pytest.approx(1.0, abs=0.15)

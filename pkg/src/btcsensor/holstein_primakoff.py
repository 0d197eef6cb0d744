"""Closed-form predictions from the Holstein-Primakoff expansion around the
mean-field displaced state, valid in the stationary phase.

These expressions serve as analytic oracles for the spectral and sensing
pipelines: the leading-order cumulant generating function, the estimation
error prefactor ``0.5 sqrt(kappa)``, the deformed-generator eigenvalue
surface and the resulting Fisher-information rate ``4/kappa``, and the
cascaded analogs including the stationary-phase boundary.

Rescaling conventions are handled internally: bosonization of a spin ``S``
uses the intensive drive ``omega_tilde = omega / S`` and accelerated time
``tau = S t``; every public function states which convention its inputs
use, and results are always reported for bare (laboratory) parameters.
"""

from dataclasses import dataclass
from math import exp, sqrt

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class HpPrediction:
    """Mean-field displacement ``beta`` and Bogoliubov coefficients of the
    fluctuation jump operator ``A b + B b†`` for one collective spin.

    ``valid`` flags whether the point lies inside the stationary phase
    (``omega_tilde <= kappa``) where the expansion applies.
    """

    beta: complex
    jump_a: float
    jump_b: float
    valid: bool


def hp_single(omega_tilde: float, kappa: float = 1.0) -> HpPrediction:
    """Self-consistent displacement for one driven collective spin.

    ``omega_tilde`` is the intensive (per ``S``) Rabi frequency; with
    ``omega_c = kappa S`` the ratio ``omega_tilde / kappa`` equals
    ``omega / omega_c``.
    """
    if kappa <= 0:
        raise ValidationError("kappa must be positive")
    r = omega_tilde / kappa
    if abs(r) > 1.0:
        return HpPrediction(beta=complex(np.nan, np.nan), jump_a=np.nan,
                            jump_b=np.nan, valid=False)
    root = sqrt(1.0 - r * r)
    beta = -1j * np.sign(r) * sqrt(1.0 - root) if r != 0 else 0j
    denom = 2.0 * sqrt(1.0 + root)
    a = (1.0 + 3.0 * root) / denom
    b = (1.0 - root) / denom
    return HpPrediction(beta=beta, jump_a=a, jump_b=b, valid=True)


def hp_scgf(omega: float, kappa: float, s: float) -> float:
    """Leading-order cumulant generating function
    ``theta(s) = (exp(-s) - 1) omega^2 / kappa`` (bare parameters)."""
    return (exp(-s) - 1.0) * omega * omega / kappa


def hp_error_prefactor(kappa: float = 1.0) -> float:
    """Stationary-phase estimation error prefactor
    ``sqrt(theta''(0)) / |d theta'(0)/d omega| = 0.5 sqrt(kappa)``."""
    return 0.5 * sqrt(kappa)


def hp_deformed_eigenvalue(omega1: float, omega2: float, kappa: float = 1.0) -> float:
    """Leading-order dominant eigenvalue of the two-frequency deformed
    generator: ``omega1 omega2 / kappa - (omega1^2 + omega2^2) / (2 kappa)``."""
    return omega1 * omega2 / kappa - (omega1**2 + omega2**2) / (2.0 * kappa)


@dataclass(frozen=True)
class HpQfi:
    qfi_rate: float
    sensitivity: float


def hp_qfi_rate(kappa: float = 1.0) -> HpQfi:
    """Stationary-phase Fisher-information rate ``4/kappa`` and sensitivity
    bound ``2/sqrt(kappa)`` (independent of the drive)."""
    rate = 4.0 / kappa
    return HpQfi(qfi_rate=rate, sensitivity=2.0 / sqrt(kappa))


def fluctuation_vacuum_coefficients(jump_a: float, jump_b: float,
                                    tail=1e-12, n_max=None) -> np.ndarray:
    """Fock coefficients of the normalized fluctuation vacuum, the squeezed
    state annihilated by ``A b + B b†``.

    Only even Fock states contribute; entry ``k`` of the returned array is
    the amplitude of ``|2k>``.  Truncation grows until the dropped tail is
    below ``tail`` (the series is geometric with ratio ``|B/A| < 1``).
    """
    if jump_a <= 0 or abs(jump_b) >= jump_a:
        raise ValidationError("requires |B/A| < 1 (stationary phase, off saturation)")
    q = -jump_b / jump_a
    coeffs = [1.0]
    log_weight = 0.0  # log sqrt((2n-1)!!/(2n)!!)
    n = 0
    while True:
        n += 1
        log_weight += 0.5 * (np.log(2 * n - 1) - np.log(2 * n))
        amp = (q ** n) * np.exp(log_weight)
        coeffs.append(amp)
        # geometric tail bound on the dropped probability
        ratio = q * q
        tail_bound = amp * amp * ratio / (1.0 - ratio)
        if n_max is not None and n >= n_max:
            break
        if n_max is None and tail_bound < tail and n >= 4:
            break
        if n > 100000:
            raise ValidationError("fluctuation vacuum series failed to converge")
    vec = np.array(coeffs)
    return vec / np.linalg.norm(vec)


@dataclass(frozen=True)
class CascadedHp:
    """Mean-field and fluctuation data for the cascaded pair, plus the
    stationary-phase flag and leading-order count statistics."""

    sensor: HpPrediction
    decoder: HpPrediction
    stationary: bool
    omega: float
    omega_d: float
    kappa: float
    n_spins: int
    magnetizations: dict

    def theta(self, s: float) -> float:
        """Leading-order cascaded cumulant generating function
        ``(exp(-s) - 1) (omega - omega_d)^2 / kappa``."""
        d = self.omega - self.omega_d
        return (exp(-s) - 1.0) * d * d / self.kappa

    @property
    def error_prefactor(self) -> float:
        return hp_error_prefactor(self.kappa)


def hp_cascaded(omega: float, omega_d: float, n_spins: int,
                kappa: float = 1.0) -> CascadedHp:
    """Holstein-Primakoff data for the cascaded sensor/decoder pair.

    Inputs are bare frequencies.  The decoder mean field locks to
    ``2 omega - omega_d``; the stationary phase requires ``omega <= omega_c``,
    ``omega_d <= omega_c`` and ``|2 omega - omega_d| <= omega_c`` with
    ``omega_c = kappa n_spins / 2``.
    """
    if n_spins < 1:
        raise ValidationError("n_spins must be positive")
    s_spin = n_spins / 2.0
    omega_c = kappa * s_spin
    omega_tilde = omega / s_spin
    locked = 2.0 * omega - omega_d
    locked_tilde = locked / s_spin
    stationary = (omega <= omega_c and omega_d <= omega_c
                  and abs(locked) <= omega_c)
    sensor = hp_single(omega_tilde, kappa)
    if abs(locked_tilde) <= kappa:
        r2 = locked_tilde / kappa
        root2 = sqrt(1.0 - r2 * r2)
        beta2 = 1j * np.sign(r2) * sqrt(1.0 - root2) if r2 != 0 else 0j
        denom2 = 2.0 * sqrt(1.0 + root2)
        decoder = HpPrediction(beta=beta2,
                               jump_a=(1.0 + 3.0 * root2) / denom2,
                               jump_b=(1.0 - root2) / denom2,
                               valid=True)
    else:
        decoder = HpPrediction(beta=complex(np.nan, np.nan), jump_a=np.nan,
                               jump_b=np.nan, valid=False)
    mags = {}
    if stationary and sensor.valid and decoder.valid:
        half_n = n_spins / 2.0
        mags = {
            "sy1": omega / kappa,
            "sz1": -half_n * sqrt(max(0.0, 1.0 - (omega / omega_c) ** 2)),
            "sy2": -locked / kappa,
            "sz2": -half_n * sqrt(max(0.0, 1.0 - (locked / omega_c) ** 2)),
            "sx1": 0.0,
            "sx2": 0.0,
        }
    return CascadedHp(sensor=sensor, decoder=decoder, stationary=stationary,
                      omega=omega, omega_d=omega_d, kappa=kappa,
                      n_spins=n_spins, magnetizations=mags)

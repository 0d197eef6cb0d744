"""Analytic dark state of the cascaded sensor/decoder pair.

On the line where sensor and decoder share the same drive, the cascaded
system has a pure stationary state that is annihilated by the collective
jump operator and is a zero-energy eigenstate of the Hamiltonian.  It is
expanded over the lowest-weight total-angular-momentum states ``|J, -J>``
with coefficients obeying a one-step recursion in ``J``; the recursion is
seeded at the stretched state and admits several index choices per step,
all of which must agree.  Construction always re-verifies both defining
conditions on the assembled product-basis state.
"""

from dataclasses import dataclass, field
from math import log, sqrt

import numpy as np
from scipy.special import logsumexp

from .errors import DarkStateError, ValidationError
from .spin_algebra import (
    SpinSector,
    build_collective_ops,
    clebsch_gordan,
    coupled_basis_map,
    coupled_state,
)


@dataclass(frozen=True, eq=False)
class DarkState:
    """Coefficients ``A_J`` of the cascaded dark state over ``J = 0..2S``,
    their drive-independent reduced values ``a_J``, and the verification
    residuals of the two defining conditions."""

    n_spins: int
    omega_over_kappa: float
    coeffs: np.ndarray
    reduced: np.ndarray
    residual_h: float
    residual_jm: float
    _basis_map: object = field(repr=False, default=None)
    _vector: np.ndarray = field(repr=False, default=None)

    @property
    def two_s(self) -> int:
        return self.n_spins

    def state_vector(self) -> np.ndarray:
        """Normalized product-basis vector, dimension ``(N+1)^2``."""
        return self._vector.copy()


def _cg(ts, tm1, tm2, tj, tm):
    if abs(tm1) > ts or abs(tm2) > ts:
        return 0.0
    return clebsch_gordan(ts / 2, tm1 / 2, ts / 2, tm2 / 2, tj / 2, tm / 2)


def _p_plus(s, m1, m2):
    val = (s + m1 + 1) * (s - m1) * (s - m2 + 1) * (s + m2)
    return sqrt(val) if val > 0 else 0.0


def _p_minus(s, m1, m2):
    val = (s - m1 + 1) * (s + m1) * (s + m2 + 1) * (s - m2)
    return sqrt(val) if val > 0 else 0.0


def _reduced_coefficients(n_spins, selection):
    """Solve the recursion for the drive-independent ratios ``a_J``.

    ``selection`` picks the admissible ``(m1, m2)`` pair with maximal or
    minimal ``m1``; the two choices must produce the same coefficients.
    """
    ts = n_spins  # doubled S
    s = ts / 2.0
    a = np.zeros(ts + 1)
    a[ts] = 1.0
    eps = 1e-13
    for j in range(ts, 0, -1):  # integer J from 2S down to 1
        tj = 2 * j
        tm_total = -tj + 2  # doubled m1 + m2 = -J + 1
        tm1_candidates = [tm1 for tm1 in range(-ts, ts + 1, 2)
                          if abs(tm_total - tm1) <= ts]
        if selection == "max_m1":
            tm1_candidates.sort(reverse=True)
        elif selection == "min_m1":
            tm1_candidates.sort()
        else:
            raise ValidationError(f"unknown selection rule {selection!r}")
        ratio = None
        for tm1 in tm1_candidates:
            tm2 = tm_total - tm1
            c_lhs = _cg(ts, tm1, tm2, tj, tm_total)
            if abs(c_lhs) <= eps:
                continue
            m1, m2 = tm1 / 2.0, tm2 / 2.0
            term_plus = _p_plus(s, m1, m2) * _cg(ts, tm1 + 2, tm2 - 2, tj - 2, tm_total)
            term_minus = _p_minus(s, m1, m2) * _cg(ts, tm1 - 2, tm2 + 2, tj - 2, tm_total)
            bracket = term_plus - term_minus
            if abs(bracket) <= eps:
                continue
            ratio = sqrt(2.0 * j) * c_lhs / bracket
            break
        if ratio is None:
            raise DarkStateError(f"no admissible recursion step found at J = {j}")
        a[j - 1] = ratio * a[j]
    return a


def _assemble(n_spins, omega_over_kappa, a):
    """Normalized complex coefficients ``A_J = (omega / i kappa)^(2S-J) a_J / sqrt(norm)``,
    with the normalization carried out in log space to survive large drives."""
    ts = n_spins
    coeffs = np.zeros(ts + 1, dtype=complex)
    if omega_over_kappa == 0.0:
        coeffs[ts] = 1.0
        return coeffs
    log_w = log(omega_over_kappa)
    log_terms = np.full(ts + 1, -np.inf)
    for j in range(ts + 1):
        if a[j] == 0.0:
            continue
        log_terms[j] = 2.0 * (ts - j) * log_w + 2.0 * log(abs(a[j]))
    log_norm = logsumexp(log_terms)
    for j in range(ts + 1):
        if a[j] == 0.0:
            continue
        mag = np.exp(0.5 * (log_terms[j] - log_norm))
        phase = (-1j) ** (ts - j)
        coeffs[j] = phase * np.sign(a[j]) * mag
    return coeffs


def _cascaded_hamiltonian(ops, omega_over_kappa):
    dim = ops.sector.dim
    eye = np.eye(dim)
    sm1, sm2 = np.kron(ops.sm, eye), np.kron(eye, ops.sm)
    sp1, sp2 = sm1.conj().T, sm2.conj().T
    sx1, sx2 = np.kron(ops.sx, eye), np.kron(eye, ops.sx)
    h = omega_over_kappa * (sx1 + sx2) - 0.5j * (sp2 @ sm1 - sp1 @ sm2)
    return h, sm1 + sm2


def build_dark_state(n_spins, omega_over_kappa, selection="max_m1",
                     verify=True, tol=1e-10) -> DarkState:
    """Construct and verify the cascaded dark state for subsystem size
    ``n_spins`` at drive ``omega_over_kappa`` (on the matched-drive line)."""
    if not isinstance(n_spins, (int, np.integer)) or n_spins < 1:
        raise ValidationError("n_spins must be a positive integer")
    if omega_over_kappa < 0:
        raise ValidationError("omega_over_kappa must be non-negative")
    a = _reduced_coefficients(n_spins, selection)
    coeffs = _assemble(n_spins, omega_over_kappa, a)

    basis_map = coupled_basis_map(SpinSector(n_spins))
    dim = n_spins + 1
    vec = np.zeros(dim * dim, dtype=complex)
    for j in range(n_spins + 1):
        if coeffs[j] != 0:
            vec += coeffs[j] * coupled_state(basis_map, j)
    vec /= np.linalg.norm(vec)

    ops = build_collective_ops(SpinSector(n_spins))
    h, j_minus = _cascaded_hamiltonian(ops, omega_over_kappa)
    residual_h = float(np.linalg.norm(h @ vec))
    residual_jm = float(np.linalg.norm(j_minus @ vec))
    ds = DarkState(n_spins=n_spins, omega_over_kappa=float(omega_over_kappa),
                   coeffs=coeffs, reduced=a, residual_h=residual_h,
                   residual_jm=residual_jm, _basis_map=basis_map, _vector=vec)
    if verify and (residual_h > tol or residual_jm > tol):
        raise DarkStateError(
            f"dark state verification failed: |H psi| = {residual_h:.3e}, "
            f"|J- psi| = {residual_jm:.3e}, worst sector J = {_offending_j(ds, h)}")
    return ds


def _offending_j(ds: DarkState, h) -> int:
    """Total-z sector of the largest Hamiltonian residual, mapped back to the
    recursion step J (residual components live at m1 + m2 = -J + 1)."""
    vec = h @ ds._vector
    dim = ds.n_spins + 1
    s2 = ds.n_spins
    worst, worst_j = 0.0, -1
    comp = vec.reshape(dim, dim)
    for i1 in range(dim):
        for i2 in range(dim):
            tm = (s2 - 2 * i1) + (s2 - 2 * i2)
            amp = abs(comp[i1, i2])
            if amp > worst:
                worst = amp
                worst_j = (2 - tm) // 2  # doubled M = -2J + 2
    return worst_j


def verify_dark_state(ds: DarkState):
    """Recompute both defining residuals of an assembled dark state:
    the Hamiltonian residual at zero eigenvalue and the jump annihilation."""
    ops = build_collective_ops(SpinSector(ds.n_spins))
    h, j_minus = _cascaded_hamiltonian(ops, ds.omega_over_kappa)
    vec = ds._vector
    return float(np.linalg.norm(h @ vec)), float(np.linalg.norm(j_minus @ vec))


def dark_state_observables(ds: DarkState, tol=1e-10) -> dict:
    """Single-subsystem expectation values in the dark state.

    The construction enforces ``<Sz(1)> = <Sz(2)>``, ``<Sy(1)> = -<Sy(2)>``
    and vanishing x components; violations beyond ``tol`` raise.
    """
    ops = build_collective_ops(SpinSector(ds.n_spins))
    dim = ops.sector.dim
    eye = np.eye(dim)
    vec = ds._vector

    def expect(op):
        return float(np.real(np.vdot(vec, op @ vec)))

    out = {
        "sx1": expect(np.kron(ops.sx, eye)),
        "sx2": expect(np.kron(eye, ops.sx)),
        "sy1": expect(np.kron(ops.sy, eye)),
        "sy2": expect(np.kron(eye, ops.sy)),
        "sz1": expect(np.kron(ops.sz, eye)),
        "sz2": expect(np.kron(eye, ops.sz)),
    }
    scale = max(1.0, ds.n_spins / 2.0)
    checks = (
        abs(out["sz1"] - out["sz2"]),
        abs(out["sy1"] + out["sy2"]),
        abs(out["sx1"]),
        abs(out["sx2"]),
    )
    if max(checks) > tol * scale:
        raise DarkStateError(f"dark-state symmetry violated: {out}")
    return out


def mean_field_magnetizations(n_spins, omega_over_kappa) -> dict:
    """Stationary-phase mean-field sensor/decoder magnetizations on the
    matched-drive line (valid for drives below the critical one)."""
    omega_c = n_spins / 2.0
    ratio = omega_over_kappa / omega_c
    if ratio > 1:
        raise ValidationError("mean-field expressions hold below the critical drive")
    half_n = n_spins / 2.0
    sz = -half_n * sqrt(1.0 - ratio * ratio)
    return {"sy1": omega_over_kappa, "sy2": -omega_over_kappa,
            "sz1": sz, "sz2": sz, "sx1": 0.0, "sx2": 0.0}

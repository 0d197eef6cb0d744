"""Lindblad generators for driven collective spin decay, their tilted and
deformed variants, and stationary-state solvers.

Generators are kept as actions ``rho -> G(rho)`` built from ``d x d``
matrices; the ``d^2 x d^2`` superoperator matrix is only materialized for
small dimensions (dense stationary solves).  All rates are expressed in
units of the collective decay rate ``kappa``.
"""

from dataclasses import dataclass, replace
from math import exp, sqrt

import numpy as np
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp

from .errors import (
    ConvergenceError,
    DegenerateStationaryError,
    DimensionCapError,
    ValidationError,
)
from .spin_algebra import SpinSector, build_collective_ops

#: largest n_spins for which exact (stationary / spectral) solves are offered
SINGLE_EXACT_CAP = 40
CASCADED_EXACT_CAP = 14

#: superoperator dimension below which the stationary solve goes dense
DENSE_SUPEROP_CAP = 4096


@dataclass(frozen=True)
class ModelParams:
    """Parameters of a single or cascaded collective-spin sensor.

    ``omega`` is the sensor Rabi frequency and ``omega_d``, when present,
    the decoder Rabi frequency of the cascaded configuration.  Frequencies
    are in units of ``kappa``.
    """

    n_spins: int
    omega: float
    omega_d: float | None = None
    kappa: float = 1.0

    def __post_init__(self):
        if not isinstance(self.n_spins, (int, np.integer)) or self.n_spins < 1:
            raise ValidationError(f"n_spins must be a positive integer, got {self.n_spins!r}")
        if self.kappa <= 0:
            raise ValidationError("kappa must be positive")
        if self.omega < 0:
            raise ValidationError("omega must be non-negative")
        if self.omega_d is not None and self.omega_d < 0:
            raise ValidationError("omega_d must be non-negative")

    @property
    def omega_c(self) -> float:
        """Critical Rabi frequency separating stationary and oscillatory phases."""
        return self.kappa * self.n_spins / 2.0

    @property
    def is_cascaded(self) -> bool:
        return self.omega_d is not None

    @classmethod
    def from_critical_ratio(cls, n_spins, omega_over_omega_c,
                            omega_d_over_omega_c=None, kappa=1.0):
        omega_c = kappa * n_spins / 2.0
        omega_d = None if omega_d_over_omega_c is None else omega_d_over_omega_c * omega_c
        return cls(n_spins=n_spins, omega=omega_over_omega_c * omega_c,
                   omega_d=omega_d, kappa=kappa)

    def with_omega(self, omega):
        return replace(self, omega=omega)


@dataclass(frozen=True, eq=False)
class Generator:
    """Superoperator action ``G(rho) = k_left rho + rho k_right + c L rho L†``.

    ``kind`` is ``"lindblad"`` (trace preserving), ``"tilted"`` (recycling
    term scaled by ``exp(-s)``) or ``"deformed"`` (independent left/right
    drive frequencies).  ``jump`` includes the ``sqrt(kappa)`` prefactor.
    """

    kind: str
    params: ModelParams
    h_left: np.ndarray
    h_right: np.ndarray
    jump: np.ndarray
    recycle_scale: float = 1.0
    s: float | None = None
    omega_pair: tuple | None = None
    drive_op: np.ndarray | None = None
    # derived, filled by the factories
    k_left: np.ndarray | None = None
    k_right: np.ndarray | None = None
    jump_dag: np.ndarray | None = None
    ldl: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.jump.shape[0]

    @property
    def is_cascaded(self) -> bool:
        return self.params.is_cascaded

    def apply(self, rho: np.ndarray) -> np.ndarray:
        """One application of the generator; cost is three dense products."""
        if rho.shape != (self.dim, self.dim):
            raise ValidationError(f"density matrix shape {rho.shape} does not match dim {self.dim}")
        return (self.k_left @ rho + rho @ self.k_right
                + self.recycle_scale * (self.jump @ rho @ self.jump_dag))

    def as_linear_operator(self) -> spla.LinearOperator:
        d = self.dim
        return spla.LinearOperator(
            (d * d, d * d),
            matvec=lambda v: self.apply(np.asarray(v).reshape(d, d)).ravel(),
            dtype=complex,
        )

    def intensity(self, rho: np.ndarray) -> float:
        """Emission intensity Tr[L† L rho] in units of kappa (kappa = 1)."""
        return float(np.real(np.einsum("ij,ji->", self.ldl, rho))) / self.params.kappa

    def effective_hamiltonian(self) -> np.ndarray:
        """Non-Hermitian no-jump Hamiltonian H - (i/2) L†L (left drive)."""
        return self.h_left - 0.5j * self.ldl


def _finish(kind, params, h_left, h_right, jump, recycle_scale=1.0, s=None,
            omega_pair=None, drive_op=None):
    ldl = jump.conj().T @ jump
    return Generator(
        kind=kind, params=params, h_left=h_left, h_right=h_right, jump=jump,
        recycle_scale=recycle_scale, s=s, omega_pair=omega_pair, drive_op=drive_op,
        k_left=-1j * h_left - 0.5 * ldl,
        k_right=1j * h_right - 0.5 * ldl,
        jump_dag=jump.conj().T, ldl=ldl,
    )


def build_btc_generator(params: ModelParams) -> Generator:
    """Lindblad generator of the driven collective spin with collective decay:
    ``G(rho) = -i omega [Sx, rho] + kappa (S- rho S+ - {S+S-, rho}/2)``."""
    if params.is_cascaded:
        raise ValidationError("single-system parameters required (omega_d must be unset)")
    ops = build_collective_ops(SpinSector(params.n_spins))
    h = params.omega * ops.sx
    jump = sqrt(params.kappa) * ops.sm
    return _finish("lindblad", params, h, h, jump, drive_op=ops.sx)


def build_cascaded_generator(params: ModelParams) -> Generator:
    """Lindblad generator of two identical collective spins in cascaded
    (unidirectional) configuration with the single collective jump
    ``J- = S-^(1) + S-^(2)``."""
    if not params.is_cascaded:
        raise ValidationError("cascaded parameters require omega_d")
    sector = SpinSector(params.n_spins)
    dim = sector.dim * sector.dim
    if dim > DENSE_SUPEROP_CAP:
        raise DimensionCapError(
            f"cascaded Hilbert dimension {dim} exceeds matrix cap {DENSE_SUPEROP_CAP}")
    ops = build_collective_ops(sector)
    eye = np.eye(sector.dim)
    sm1, sm2 = np.kron(ops.sm, eye), np.kron(eye, ops.sm)
    sp1, sp2 = sm1.conj().T, sm2.conj().T
    sx1, sx2 = np.kron(ops.sx, eye), np.kron(eye, ops.sx)
    h_c = -0.5j * params.kappa * (sp2 @ sm1 - sp1 @ sm2)
    h = params.omega * sx1 + params.omega_d * sx2 + h_c
    jump = sqrt(params.kappa) * (sm1 + sm2)
    return _finish("lindblad", params, h, h, jump)


def tilt(g: Generator, s: float) -> Generator:
    """Counting-field deformation: the recycling term is scaled by
    ``exp(-s)``; ``s = 0`` reproduces ``g`` exactly."""
    if g.kind != "lindblad":
        raise ValidationError("tilt() expects a lindblad-kind generator")
    return _finish("tilted", g.params, g.h_left, g.h_right, g.jump,
                   recycle_scale=exp(-s), s=s, drive_op=g.drive_op)


def deform(g: Generator, omega1: float, omega2: float) -> Generator:
    """Two-frequency deformation ``-i omega1 Sx rho + i rho omega2 Sx`` of
    the single-system generator; ``omega1 = omega2 = omega`` reproduces it."""
    if g.kind != "lindblad" or g.is_cascaded or g.drive_op is None:
        raise ValidationError("deform() expects a single-system lindblad generator")
    return _finish("deformed", g.params, omega1 * g.drive_op, omega2 * g.drive_op,
                   g.jump, omega_pair=(omega1, omega2), drive_op=g.drive_op)


@dataclass(frozen=True)
class StationaryResult:
    """Stationary state with its defect ``residual = max|G(rho_ss)|``,
    emission intensity, and spectral diagnostics."""

    rho_ss: np.ndarray
    residual: float
    intensity: float
    min_eigenvalue: float
    method: str

    @property
    def purity(self) -> float:
        return float(np.real(np.trace(self.rho_ss @ self.rho_ss)))


def _check_exact_cap(g: Generator, enforce_cap: bool):
    n = g.params.n_spins
    if not enforce_cap:
        return
    if g.is_cascaded and n > CASCADED_EXACT_CAP:
        raise DimensionCapError(
            f"exact cascaded solves are capped at N = {CASCADED_EXACT_CAP} "
            f"(got N = {n}); use trajectory methods instead")
    if not g.is_cascaded and n > SINGLE_EXACT_CAP:
        raise DimensionCapError(
            f"exact single-system solves are capped at N = {SINGLE_EXACT_CAP} "
            f"(got N = {n}); use trajectory methods instead")


def dense_superoperator(g: Generator) -> np.ndarray:
    """Materialized ``d^2 x d^2`` matrix of the action (row-major vec).

    Intended only for small dimensions (oracles and the dense stationary
    path); guarded by :data:`DENSE_SUPEROP_CAP`.
    """
    d = g.dim
    if d * d > DENSE_SUPEROP_CAP:
        raise DimensionCapError(f"refusing to materialize a {d * d} x {d * d} superoperator")
    eye = np.eye(d)
    return (-1j * (np.kron(g.h_left, eye) - np.kron(eye, g.h_right.T))
            + g.recycle_scale * np.kron(g.jump, g.jump.conj())
            - 0.5 * (np.kron(g.ldl, eye) + np.kron(eye, g.ldl.T)))


def _propagate(g: Generator, rho: np.ndarray, t_span: float,
               rtol=1e-9, atol=1e-11) -> np.ndarray:
    d = g.dim
    sol = solve_ivp(lambda t, y: g.apply(y.reshape(d, d)).ravel(),
                    (0.0, t_span), rho.ravel(), method="RK45",
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise ConvergenceError(f"time propagation failed: {sol.message}")
    return sol.y[:, -1].reshape(d, d)


def _bordered_solve_dense(g: Generator) -> np.ndarray:
    d = g.dim
    mat = dense_superoperator(g)
    # replace the (0,0)-element equation (a diagonal row, part of the exact
    # trace redundancy) with the trace constraint
    mat[0, :] = 0.0
    mat[0, np.arange(d) * d + np.arange(d)] = 1.0
    rhs = np.zeros(d * d, dtype=complex)
    rhs[0] = 1.0
    return np.linalg.solve(mat, rhs).reshape(d, d)


def _bordered_solve_gmres(g: Generator, x0, rtol=1e-12, restart=250, maxiter=400):
    d = g.dim

    def matvec(v):
        rho = np.asarray(v).reshape(d, d)
        out = g.apply(rho).ravel()
        out[0] = np.trace(rho)
        return out

    op = spla.LinearOperator((d * d, d * d), matvec=matvec, dtype=complex)
    rhs = np.zeros(d * d, dtype=complex)
    rhs[0] = 1.0
    x, info = spla.gmres(op, rhs, x0=x0.ravel(), rtol=rtol, atol=0.0,
                         restart=restart, maxiter=maxiter)
    return x.reshape(d, d), info


def _normalize(rho: np.ndarray) -> np.ndarray:
    rho = 0.5 * (rho + rho.conj().T)
    return rho / np.real(np.trace(rho))


def check_unique_stationary(g: Generator, gap_tol=1e-10, k=4) -> None:
    """Raise if the kernel of the generator appears degenerate.

    Looks at the ``k`` eigenvalues of largest real part; a second eigenvalue
    within ``gap_tol`` of zero signals a non-unique stationary state.
    """
    d = g.dim
    v0 = np.eye(d).ravel().astype(complex) / d
    vals = spla.eigs(g.as_linear_operator(), k=k, which="LR", v0=v0,
                     ncv=min(d * d, max(40, 6 * k)), maxiter=5000,
                     return_eigenvectors=False)
    near_zero = np.sum(np.abs(vals.real) < gap_tol)
    if near_zero > 1:
        raise DegenerateStationaryError(
            f"{near_zero} eigenvalues within {gap_tol} of zero: stationary state not unique")


def stationary_state(g: Generator, tol=1e-9, enforce_cap=True,
                     check_unique=False) -> StationaryResult:
    """Solve ``G(rho_ss) = 0`` with ``Tr[rho_ss] = 1``.

    Dense bordered LU for superoperator dimension up to
    :data:`DENSE_SUPEROP_CAP`; otherwise a matrix-free restarted GMRES on the
    bordered system, warm-started from a short propagation, with an Arnoldi
    null-vector fallback.  The returned state is Hermitized and
    trace-normalized; positivity is diagnosed through ``min_eigenvalue`` but
    never silently enforced.
    """
    if g.kind != "lindblad":
        raise ValidationError("stationary_state() expects a lindblad-kind generator")
    _check_exact_cap(g, enforce_cap)
    d = g.dim
    method = None
    rho = None
    if d * d <= DENSE_SUPEROP_CAP:
        rho = _normalize(_bordered_solve_dense(g))
        method = "dense-lu"
        if np.abs(g.apply(rho)).max() > tol:
            rho = None  # fall through to the iterative path
    if rho is None:
        x0 = np.eye(d, dtype=complex) / d
        try:
            x0 = _normalize(_propagate(g, x0, 10.0 / g.params.kappa, rtol=1e-6, atol=1e-9))
        except ConvergenceError:
            pass
        best = None
        for attempt in range(3):
            cand, _ = _bordered_solve_gmres(g, x0, maxiter=400)
            cand = _normalize(cand)
            res = np.abs(g.apply(cand)).max()
            if best is None or res < best[1]:
                best = (cand, res)
            if res <= tol:
                break
            # push the iterate toward the attracting fixed point and retry
            x0 = _normalize(_propagate(g, cand, 40.0 / g.params.kappa, rtol=1e-8, atol=1e-10))
        rho, res = best
        method = "gmres"
        if res > tol:
            # last resort: dominant null vector from restarted Arnoldi
            try:
                v0 = np.eye(d).ravel().astype(complex) / d
                vals, vecs = spla.eigs(g.as_linear_operator(), k=2, which="LR",
                                       v0=v0, ncv=min(d * d, 60), maxiter=10000)
                cand = _normalize(vecs[:, np.argmax(vals.real)].reshape(d, d))
                res2 = np.abs(g.apply(cand)).max()
                if res2 < res:
                    rho, method = cand, "arnoldi"
            except Exception:
                pass
    residual = float(np.abs(g.apply(rho)).max())
    if residual > tol:
        raise ConvergenceError(
            f"stationary solve stalled at residual {residual:.3e} (tol {tol:.1e})",
            residual=residual)
    if check_unique:
        check_unique_stationary(g)
    min_eig = float(np.linalg.eigvalsh(rho).min())
    return StationaryResult(
        rho_ss=rho, residual=residual,
        intensity=g.intensity(rho),
        min_eigenvalue=min_eig, method=method)


def reduced_state(rho: np.ndarray, dims: tuple, keep: int) -> np.ndarray:
    """Partial trace of a bipartite density matrix; ``keep`` is 0 or 1."""
    d1, d2 = dims
    t = rho.reshape(d1, d2, d1, d2)
    if keep == 0:
        return np.einsum("abcb->ac", t)
    if keep == 1:
        return np.einsum("abad->bd", t)
    raise ValidationError("keep must be 0 or 1")

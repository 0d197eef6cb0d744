"""Collective spin operators in the symmetric (Dicke) sector and
angular-momentum coupling tools for two collective spins.

All half-integer angular momenta are stored as doubled integers (``2j``)
so that arithmetic on quantum numbers stays exact.  Basis states of a
spin-``j`` sector are ordered by descending magnetic quantum number,
``m = j, j-1, ..., -j``.
"""

from dataclasses import dataclass, field
from math import lgamma, log, sqrt

import numpy as np

from .errors import ValidationError

#: largest sector dimension accepted by :func:`build_collective_ops`
MAX_SECTOR_DIM = 16384


@dataclass(frozen=True)
class SpinSector:
    """Fully symmetric sector of ``n_spins`` spin-1/2 particles.

    The sector carries total spin ``j = n_spins / 2`` and has dimension
    ``n_spins + 1``.
    """

    n_spins: int

    def __post_init__(self):
        if not isinstance(self.n_spins, (int, np.integer)) or self.n_spins < 1:
            raise ValidationError(f"n_spins must be a positive integer, got {self.n_spins!r}")
        if self.n_spins + 1 > MAX_SECTOR_DIM:
            raise ValidationError(f"sector dimension {self.n_spins + 1} exceeds cap {MAX_SECTOR_DIM}")

    @property
    def two_j(self) -> int:
        return self.n_spins

    @property
    def j(self) -> float:
        return self.n_spins / 2.0

    @property
    def dim(self) -> int:
        return self.n_spins + 1


@dataclass(frozen=True, eq=False)
class CollectiveOperators:
    """Matrices of the collective spin components on a :class:`SpinSector`.

    ``sz`` is diagonal with entries ``j, j-1, ..., -j``; ``sp = sx + i sy``
    and ``sm = sp†`` are the raising/lowering operators.
    """

    sector: SpinSector
    sx: np.ndarray
    sy: np.ndarray
    sz: np.ndarray
    sp: np.ndarray
    sm: np.ndarray


def build_collective_ops(sector: SpinSector) -> CollectiveOperators:
    """Build the spin matrices with standard angular-momentum matrix elements.

    ``sm`` annihilates the lowest-weight state ``|j,-j>`` and ``sp`` the
    highest-weight state ``|j,j>``.
    """
    j = sector.j
    dim = sector.dim
    m = j - np.arange(dim)
    sz = np.diag(m.astype(complex))
    sp = np.zeros((dim, dim), dtype=complex)
    # <m+1| S+ |m> = sqrt(j(j+1) - m(m+1)); index i holds m = j - i
    for i in range(1, dim):
        mi = m[i]
        sp[i - 1, i] = sqrt(j * (j + 1) - mi * (mi + 1))
    sm = sp.conj().T
    sx = 0.5 * (sp + sm)
    sy = -0.5j * (sp - sm)
    return CollectiveOperators(sector=sector, sx=sx, sy=sy, sz=sz, sp=sp, sm=sm)


def _twice(x, name="value"):
    """Exact doubled integer for a (half-)integer quantum number."""
    t = 2.0 * float(x)
    r = round(t)
    if abs(t - r) > 1e-9:
        raise ValidationError(f"{name} = {x!r} is not a half-integer")
    return int(r)


def _lf(n: int) -> float:
    """log(n!) for integer n >= 0."""
    return lgamma(n + 1)


def _kahan_sum(terms):
    total = 0.0
    comp = 0.0
    for t in terms:
        y = t - comp
        s = total + y
        comp = (s - total) - y
        total = s
    return total


def clebsch_gordan(j1, m1, j2, m2, J, M) -> float:
    """Clebsch-Gordan coefficient ``<j1 m1; j2 m2 | J M>``.

    Condon-Shortley convention, evaluated through the Racah sum with
    log-factorials and compensated summation.  Couplings that violate the
    triangle rule or have ``M != m1 + m2`` return 0; magnetic numbers out of
    range (``|m| > j``) also return 0 so callers can use the function as a
    matrix-element lookup.  Quantum numbers that are not half-integers, or
    ``m`` with the wrong parity relative to its ``j``, raise.
    """
    tj1, tm1 = _twice(j1, "j1"), _twice(m1, "m1")
    tj2, tm2 = _twice(j2, "j2"), _twice(m2, "m2")
    tJ, tM = _twice(J, "J"), _twice(M, "M")
    for tj, tm, nm in ((tj1, tm1, "m1"), (tj2, tm2, "m2"), (tJ, tM, "M")):
        if tj < 0:
            raise ValidationError("angular momenta must be non-negative")
        if (tj - tm) % 2 != 0:
            raise ValidationError(f"{nm} has wrong parity for its angular momentum")
    if tM != tm1 + tm2:
        return 0.0
    if abs(tm1) > tj1 or abs(tm2) > tj2 or abs(tM) > tJ:
        return 0.0
    # triangle rule, including the integer-perimeter requirement
    if tJ < abs(tj1 - tj2) or tJ > tj1 + tj2 or (tj1 + tj2 + tJ) % 2 != 0:
        return 0.0

    # All factorial arguments below are integers (doubled values are even).
    def f(t):  # t is a doubled value known to be even
        return t // 2

    log_pre = 0.5 * (
        log(tJ + 1.0)
        + _lf(f(tj1 + tj2 - tJ)) + _lf(f(tj1 - tj2 + tJ)) + _lf(f(-tj1 + tj2 + tJ))
        - _lf(f(tj1 + tj2 + tJ) + 1)
        + _lf(f(tJ + tM)) + _lf(f(tJ - tM))
        + _lf(f(tj1 - tm1)) + _lf(f(tj1 + tm1))
        + _lf(f(tj2 - tm2)) + _lf(f(tj2 + tm2))
    )
    kmin = max(0, f(tj1 + tm2 - tJ), f(tj2 - tm1 - tJ))
    kmax = min(f(tj1 + tj2 - tJ), f(tj1 - tm1), f(tj2 + tm2))
    if kmax < kmin:
        return 0.0
    logs = []
    signs = []
    for k in range(kmin, kmax + 1):
        log_den = (
            _lf(k)
            + _lf(f(tj1 + tj2 - tJ) - k)
            + _lf(f(tj1 - tm1) - k)
            + _lf(f(tj2 + tm2) - k)
            + _lf(f(tJ - tj1 - tm2) + k)
            + _lf(f(tJ - tj2 + tm1) + k)
        )
        logs.append(log_pre - log_den)
        signs.append(-1.0 if k % 2 else 1.0)
    peak = max(logs)
    total = _kahan_sum(s * np.exp(lg - peak) for s, lg in zip(signs, logs))
    return float(np.exp(peak) * total)


@dataclass(frozen=True, eq=False)
class CoupledBasisMap:
    """Change of basis between the product basis of two equal spins and the
    total-angular-momentum basis.

    ``table`` maps doubled quantum numbers ``(2J, 2M, 2m1, 2m2)`` to the real
    coefficient ``<S m1; S m2 | J M>``.
    """

    sector: SpinSector
    table: dict = field(repr=False)

    @property
    def two_s(self) -> int:
        return self.sector.n_spins

    def coefficient(self, J, M, m1, m2) -> float:
        key = (_twice(J, "J"), _twice(M, "M"), _twice(m1, "m1"), _twice(m2, "m2"))
        return self.table.get(key, 0.0)


def coupled_basis_map(sector: SpinSector) -> CoupledBasisMap:
    """Tabulate all Clebsch-Gordan coefficients for ``S x S -> J``,
    with ``S = sector.n_spins / 2`` and ``J = 0 .. 2S``."""
    ts = sector.n_spins  # doubled S
    table = {}
    for tJ in range(0, 2 * ts + 1, 2):
        for tM in range(-tJ, tJ + 1, 2):
            for tm1 in range(-ts, ts + 1, 2):
                tm2 = tM - tm1
                if abs(tm2) > ts:
                    continue
                c = clebsch_gordan(ts / 2, tm1 / 2, ts / 2, tm2 / 2, tJ / 2, tM / 2)
                if c != 0.0:
                    table[(tJ, tM, tm1, tm2)] = c
    return CoupledBasisMap(sector=sector, table=table)


def coupled_state(basis_map: CoupledBasisMap, J) -> np.ndarray:
    """Product-basis vector of the lowest-weight coupled state ``|J, -J>``.

    The returned vector lives in the ``(N+1)^2``-dimensional product space
    with index ``i1 * (N+1) + i2`` and each factor ordered by descending
    ``m``.  It has unit norm and is annihilated by the total lowering
    operator.
    """
    ts = basis_map.two_s
    tJ = _twice(J, "J")
    if tJ < 0 or tJ > 2 * ts or tJ % 2 != 0:
        raise ValidationError(f"J = {J!r} outside the coupled range 0..{ts} for two spin-{ts / 2} systems")
    dim = basis_map.sector.dim
    vec = np.zeros(dim * dim, dtype=complex)
    for tm1 in range(-ts, ts + 1, 2):
        tm2 = -tJ - tm1
        if abs(tm2) > ts:
            continue
        c = basis_map.table.get((tJ, -tJ, tm1, tm2), 0.0)
        if c == 0.0:
            continue
        i1 = (ts - tm1) // 2
        i2 = (ts - tm2) // 2
        vec[i1 * dim + i2] = c
    nrm = np.linalg.norm(vec)
    if nrm == 0.0:
        raise ValidationError(f"no product-basis support for |J,-J> with J = {J!r}")
    return vec / nrm

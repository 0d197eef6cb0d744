import numpy as np
import pytest

from btcsensor.errors import ValidationError
from btcsensor.spin_algebra import (
    CoupledBasisMap,
    SpinSector,
    build_collective_ops,
    clebsch_gordan,
    coupled_basis_map,
    coupled_state,
)


def max_abs(a):
    return np.abs(a).max()


def test_single_spin_is_half_pauli():
    ops = build_collective_ops(SpinSector(1))
    sigma_x = np.array([[0, 1], [1, 0]], dtype=complex)
    sigma_y = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sigma_z = np.array([[1, 0], [0, -1]], dtype=complex)
    assert max_abs(ops.sx - 0.5 * sigma_x) < 1e-15
    assert max_abs(ops.sy - 0.5 * sigma_y) < 1e-15
    assert max_abs(ops.sz - 0.5 * sigma_z) < 1e-15


def test_two_spin_sector_is_spin_one():
    ops = build_collective_ops(SpinSector(2))
    assert max_abs(ops.sz - np.diag([1.0, 0.0, -1.0])) < 1e-15


def test_ladder_annihilation():
    for n in (1, 2, 5, 12):
        ops = build_collective_ops(SpinSector(n))
        down = np.zeros(n + 1)
        down[-1] = 1.0
        up = np.zeros(n + 1)
        up[0] = 1.0
        assert np.linalg.norm(ops.sm @ down) == 0.0
        assert np.linalg.norm(ops.sp @ up) == 0.0


@pytest.mark.parametrize("n", [1, 2, 3, 7, 16, 31, 40])
def test_su2_algebra_and_structure(n):
    ops = build_collective_ops(SpinSector(n))
    i_unit = 1j
    assert max_abs(ops.sx @ ops.sy - ops.sy @ ops.sx - i_unit * ops.sz) < 1e-12
    assert max_abs(ops.sy @ ops.sz - ops.sz @ ops.sy - i_unit * ops.sx) < 1e-12
    assert max_abs(ops.sz @ ops.sx - ops.sx @ ops.sz - i_unit * ops.sy) < 1e-12
    assert max_abs(ops.sp - (ops.sx + 1j * ops.sy)) < 1e-12
    assert max_abs(ops.sm - ops.sp.conj().T) < 1e-12


@pytest.mark.parametrize("n", [1, 2, 9, 24, 40])
def test_casimir(n):
    ops = build_collective_ops(SpinSector(n))
    j = n / 2
    casimir = ops.sx @ ops.sx + ops.sy @ ops.sy + ops.sz @ ops.sz
    assert max_abs(casimir - j * (j + 1) * np.eye(n + 1)) < 1e-10


def test_sector_validation():
    with pytest.raises(ValidationError):
        SpinSector(0)
    with pytest.raises(ValidationError):
        SpinSector(-3)


def test_cg_two_spin_half_values():
    # singlet amplitude magnitude 1/sqrt(2), Condon-Shortley sign
    assert clebsch_gordan(0.5, 0.5, 0.5, -0.5, 0, 0) == pytest.approx(1 / np.sqrt(2), abs=1e-14)
    assert clebsch_gordan(0.5, -0.5, 0.5, 0.5, 0, 0) == pytest.approx(-1 / np.sqrt(2), abs=1e-14)
    # stretched state
    assert clebsch_gordan(0.5, -0.5, 0.5, -0.5, 1, -1) == pytest.approx(1.0, abs=1e-14)
    # M mismatch and triangle violations are zero, not errors
    assert clebsch_gordan(0.5, 0.5, 0.5, 0.5, 0, 0) == 0.0
    assert clebsch_gordan(0.5, 0.5, 0.5, -0.5, 2, 0) == 0.0


def test_cg_invalid_half_integers():
    with pytest.raises(ValidationError):
        clebsch_gordan(0.3, 0.3, 0.5, -0.5, 0, 0)
    with pytest.raises(ValidationError):
        clebsch_gordan(0.5, 0.0, 0.5, 0.0, 1, 0)  # m parity incompatible with j


@pytest.mark.parametrize("tj1,tj2", [(1, 1), (2, 2), (3, 1), (4, 4), (7, 5), (12, 12)])
def test_cg_orthonormality(tj1, tj2):
    # summation oracle: rows of the coupling matrix are orthonormal
    j1, j2 = tj1 / 2, tj2 / 2
    t_js = list(range(abs(tj1 - tj2), tj1 + tj2 + 1, 2))
    for tJ in t_js:
        for tJp in t_js:
            for tM in range(-min(tJ, tJp), min(tJ, tJp) + 1, 2):
                acc = 0.0
                for tm1 in range(-tj1, tj1 + 1, 2):
                    tm2 = tM - tm1
                    if abs(tm2) > tj2:
                        continue
                    acc += clebsch_gordan(j1, tm1 / 2, j2, tm2 / 2, tJ / 2, tM / 2) * \
                        clebsch_gordan(j1, tm1 / 2, j2, tm2 / 2, tJp / 2, tM / 2)
                expected = 1.0 if tJ == tJp else 0.0
                assert acc == pytest.approx(expected, abs=1e-12)


def test_cg_against_sympy_exact():
    # independent exact-arithmetic oracle
    sympy = pytest.importorskip("sympy")
    from sympy import Rational, S
    from sympy.physics.quantum.cg import CG

    rng = np.random.default_rng(7)
    cases = []
    for _ in range(40):
        tj1 = int(rng.integers(1, 9))
        tj2 = int(rng.integers(1, 9))
        tJ = int(rng.integers(abs(tj1 - tj2), tj1 + tj2 + 1))
        if (tj1 + tj2 + tJ) % 2:
            continue
        tm1 = int(rng.integers(-tj1, tj1 + 1))
        if (tj1 - tm1) % 2:
            tm1 += 1 if tm1 < tj1 else -1
        tm2 = int(rng.integers(-tj2, tj2 + 1))
        if (tj2 - tm2) % 2:
            tm2 += 1 if tm2 < tj2 else -1
        cases.append((tj1, tm1, tj2, tm2, tJ, tm1 + tm2))
    assert cases
    for tj1, tm1, tj2, tm2, tJ, tM in cases:
        ours = clebsch_gordan(tj1 / 2, tm1 / 2, tj2 / 2, tm2 / 2, tJ / 2, tM / 2)
        if abs(tM) > tJ:
            assert ours == 0.0
            continue
        exact = CG(Rational(tj1, 2), Rational(tm1, 2), Rational(tj2, 2),
                   Rational(tm2, 2), Rational(tJ, 2), Rational(tM, 2)).doit()
        assert ours == pytest.approx(float(exact), abs=1e-12)


def test_cg_exchange_symmetry():
    # C^{J,M}_{S,m1;S,m2} = (-1)^{J-2S} C^{J,M}_{S,m2;S,m1}
    for n in (2, 4, 5):
        s = n / 2
        m_grid = [(-n + 2 * k) / 2 for k in range(n + 1)]
        for tJ in range(0, 2 * n + 1, 2):
            J = tJ / 2
            sign = (-1.0) ** round(J - n)
            for m1 in m_grid:
                for m2 in m_grid:
                    M = m1 + m2
                    if abs(M) > J:
                        continue
                    lhs = clebsch_gordan(s, m1, s, m2, J, M)
                    rhs = clebsch_gordan(s, m2, s, m1, J, M)
                    assert lhs == pytest.approx(sign * rhs, abs=1e-12)


def test_coupled_basis_map_orthonormality():
    sector = SpinSector(4)
    cmap = coupled_basis_map(sector)
    assert isinstance(cmap, CoupledBasisMap)
    ts = sector.n_spins
    for tJ in range(0, 2 * ts + 1, 2):
        for tJp in range(0, 2 * ts + 1, 2):
            for tM in range(-min(tJ, tJp), min(tJ, tJp) + 1, 2):
                acc = 0.0
                for tm1 in range(-ts, ts + 1, 2):
                    tm2 = tM - tm1
                    acc += cmap.table.get((tJ, tM, tm1, tm2), 0.0) * \
                        cmap.table.get((tJp, tM, tm1, tm2), 0.0)
                assert acc == pytest.approx(1.0 if tJ == tJp else 0.0, abs=1e-12)


def test_coupled_state_two_spins():
    cmap = coupled_basis_map(SpinSector(1))
    singlet = coupled_state(cmap, 0)
    # (|up,down> - |down,up>)/sqrt(2) up to a global phase
    expected = np.array([0.0, 1.0, -1.0, 0.0]) / np.sqrt(2)
    phase = np.vdot(expected, singlet)
    assert abs(abs(phase) - 1.0) < 1e-12
    assert np.linalg.norm(singlet - phase * expected) < 1e-12

    stretched = coupled_state(cmap, 1)
    expected_down = np.zeros(4)
    expected_down[3] = 1.0  # |down,down>
    assert np.linalg.norm(np.abs(stretched) - expected_down) < 1e-12


@pytest.mark.parametrize("n", [1, 2, 4])
def test_coupled_state_annihilated_and_orthogonal(n):
    sector = SpinSector(n)
    cmap = coupled_basis_map(sector)
    ops = build_collective_ops(sector)
    eye = np.eye(sector.dim)
    j_minus = np.kron(ops.sm, eye) + np.kron(eye, ops.sm)
    states = []
    for tJ in range(0, 2 * n + 1, 2):
        vec = coupled_state(cmap, tJ / 2)
        assert np.linalg.norm(vec) == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.norm(j_minus @ vec) < 1e-12
        states.append(vec)
    for a in range(len(states)):
        for b in range(a + 1, len(states)):
            assert abs(np.vdot(states[a], states[b])) < 1e-12


def test_coupled_state_range_check():
    cmap = coupled_basis_map(SpinSector(2))
    with pytest.raises(ValidationError):
        coupled_state(cmap, 3)
    with pytest.raises(ValidationError):
        coupled_state(cmap, -1)

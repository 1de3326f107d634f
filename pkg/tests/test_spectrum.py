import cmath
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fracbeam.model import SystemParams
from fracbeam.spectrum import (
    BasinEscape,
    NonConvergence,
    OverflowGuard,
    SpectrumError,
    asymptotic_eigenvalue,
    boundary_trace_coeff,
    branch_labels,
    char_determinant,
    conservative_coefficients,
    conservative_mu_squared,
    conservative_spectrum,
    determinant_terms,
    find_eigenvalues,
    newton_root,
    quartic_roots,
    quartic_value,
    relative_residual,
)

from oracles import conservative_mu2_by_polyroots, mp_root, newton_oracle, shooting_determinant

PI = math.pi


# ----- quartic


def test_quartic_unit_params_at_one():
    p = SystemParams(1, 1, 1, 1)
    q = quartic_roots(1.0, p)
    oracle = np.roots([1, 0, -2, 0, 2])
    got = np.array(q.roots)
    for z in oracle:
        assert np.min(np.abs(got - z)) < 1e-14
    assert sorted([complex(q.roots[0]) ** 2, complex(q.roots[2]) ** 2], key=lambda z: z.imag) == pytest.approx([1 - 1j, 1 + 1j])
    assert q.roots[1] == -q.roots[0] and q.roots[3] == -q.roots[2]
    assert q.roots[0].real >= 0 and q.roots[2].real >= 0


def test_quartic_at_zero_is_quadruple_root():
    q = quartic_roots(0.0, SystemParams(1, 2, 3, 4))
    assert all(r == 0 for r in q.roots)


def test_equal_speeds_root_sum():
    p = SystemParams(1, 1, 1, 1)
    lam = 50j
    q = quartic_roots(lam, p)
    r1, r2 = q.roots[0], q.roots[2]
    # the sum tracks 2 lam sqrt(rho1/k1) and the error shrinks like 1/lam
    assert abs(r1 + r2 - 2 * lam) < 2.0 / abs(lam) * 10
    q2 = quartic_roots(500j, p)
    err2 = abs(q2.roots[0] + q2.roots[2] - 1000j)
    assert err2 < abs(r1 + r2 - 2 * lam) / 5


@given(st.floats(-3, -0.01), st.floats(0.1, 80), st.floats(0.2, 5), st.floats(0.2, 5))
def test_quartic_roots_solve_quartic(re, im, k1, k2):
    p = SystemParams(1.0, 1.3, k1, k2)
    lam = complex(re, im)
    q = quartic_roots(lam, p)
    scale = max(abs(r) for r in q.roots) ** 4 + 1.0
    for r in q.roots:
        assert abs(quartic_value(r, lam, p)) <= 1e-10 * scale


def test_degenerate_flag():
    rho1, rho2, k1, k2 = 1.0, 3.0, 1.0, 1.0
    # (rho2 k1 - rho1 k2)^2 lam^2 = 4 rho1 k1^2 k2
    lam = math.sqrt(4 * rho1 * k1**2 * k2) / abs(rho2 * k1 - rho1 * k2)
    assert quartic_roots(lam, SystemParams(rho1, rho2, k1, k2)).degenerate
    assert not quartic_roots(2 * lam, SystemParams(rho1, rho2, k1, k2)).degenerate


# ----- determinant


@given(st.floats(-2, -0.01), st.floats(0.5, 60))
def test_determinant_conjugate_symmetry(re, im):
    p = SystemParams(1.0, 2.0, 1.5, 0.7, gamma=0.8, eta=0.5, alpha=0.3)
    lam = complex(re, im)
    a = char_determinant(lam, p)
    b = char_determinant(lam.conjugate(), p)
    assert abs(a.conjugate() - b) <= 1e-12 * max(abs(a), 1e-300)


def test_seed_residual_decreases_along_seeds(case1):
    res = [relative_residual(asymptotic_eigenvalue(1, n, case1).value, case1) for n in range(10, 61, 5)]
    assert all(b < a for a, b in zip(res, res[1:]))
    assert res[-1] < 1e-3


@pytest.mark.parametrize(
    "p",
    [SystemParams(4 * PI**2, 1, 4 * PI**2, 1), SystemParams(1, 1, 1, 1), SystemParams(1, 1, 1, 4)],
    ids=["resonant", "unit", "different"],
)
def test_damper_term_vanishes_on_clamped_spectrum(p):
    # the gamma-proportional term carries sinh(r1) sinh(r2), whose zeros are
    # the eigenvalues of the beam with the tip held (u(1) = 0)
    for m in conservative_spectrum(p, range(1, 41)):
        terms = determinant_terms(m.lam, p)
        assert abs(terms[0]) <= 1e-8 * sum(abs(t) for t in terms)


def test_zeros_match_shooting_oracle():
    for p in (SystemParams(1, 1, 1, 1), SystemParams(1.0, 2.0, 1.5, 0.7, gamma=0.8, eta=0.5, alpha=0.3)):
        for m in find_eigenvalues(p, [3, 6, 10]):
            z = newton_oracle(lambda l: shooting_determinant(l, p), m.lam + 1e-3)
            assert abs(z - m.lam) <= 1e-8 * abs(m.lam)


def test_free_tip_zeros_match_shooting_oracle():
    p = SystemParams(1, 1, 1, 1, gamma=0.0)
    for n in (2, 5, 9):
        seed = asymptotic_eigenvalue(1, n, p).value
        lam, res, _, status = newton_root(p, seed, radius=1.0, tol=1e-12)
        assert status == "converged"
        z = newton_oracle(lambda l: shooting_determinant(l, p), lam + 1e-4j)
        assert abs(lam.real) < 1e-10
        assert abs(z - lam) <= 1e-8 * abs(z)


def test_overflow_guard():
    with pytest.raises(OverflowGuard):
        char_determinant(-1e3 + 5j, SystemParams(1, 1, 1, 1))


# ----- asymptotics


def test_different_speed_seed():
    s = asymptotic_eigenvalue(0, 7, SystemParams(1, 1, 1, 4))
    assert s.value == pytest.approx(7 * PI * 1j + 0.5j * PI, abs=1e-13)
    assert branch_labels(SystemParams(1, 1, 1, 4)) == (0, 1)
    assert branch_labels(SystemParams(1, 1, 1, 1)) == (1, 2)


def test_case1_real_part_at_ten(case1):
    s = asymptotic_eigenvalue(1, 10, case1)
    expected = -(1 - math.cos(1)) * math.sin(PI / 4) / (2 * math.sqrt(10 * PI))
    assert s.value.real == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(-0.0290, abs=5e-5)


def test_case2_real_part_formula(resonant):
    p = resonant
    n, a = 17, p.alpha
    term = p.gamma * p.k1 ** ((5 + a) / 2) * math.sin(PI * a / 2) / (256 * p.k2**3 * math.sqrt(p.rho1 ** (1 + a)) * PI ** (5 - a) * n ** (5 - a))
    assert asymptotic_eigenvalue(1, n, p).value.real == pytest.approx(-term, rel=1e-12)


def test_negative_index_seed_is_conjugate(resonant):
    for b in (1, 2):
        assert asymptotic_eigenvalue(b, -9, resonant).value == asymptotic_eigenvalue(b, 9, resonant).value.conjugate()


# ----- root finding


def test_case1_roots_near_seeds(case1):
    modes = find_eigenvalues(case1, range(20, 41))
    assert all(m.lam.real < 0 for m in modes)
    assert all(m.residual <= 1e-10 for m in modes)
    scaled = [m.seed_distance * m.index ** (1 - case1.alpha) for m in modes]
    assert max(scaled) < 1.0
    assert all(abs(m.lam.imag - m.seed.imag) <= 1e-3 * abs(m.seed.imag) for m in modes)


def test_conjugate_pairing(case1):
    pos = find_eigenvalues(case1, [5, 12, 25])
    neg = find_eigenvalues(case1, [-5, -12, -25])
    table = {(m.branch, m.index): m.lam for m in neg}
    for m in pos:
        assert abs(table[(m.branch, -m.index)] - m.lam.conjugate()) <= 1e-10 * abs(m.lam)


@pytest.mark.parametrize(
    "p,tag",
    [(SystemParams(1, 1, 1, 1), "unit"), (SystemParams(4 * PI**2, 1, 4 * PI**2, 1), "resonant"), (SystemParams(1, 1, 1, 4), "different")],
)
def test_seed_distance_follows_remainder_order(p, tag):
    modes = find_eigenvalues(p, range(20, 61))
    for b in branch_labels(p):
        sel = [m for m in modes if m.branch == b]
        slope = np.polyfit(np.log([m.index for m in sel]), np.log([m.seed_distance for m in sel]), 1)[0]
        rem = asymptotic_eigenvalue(b, 30, p).remainder
        order = {"o(1)": 0.0, "o(n^-(1-alpha))": -(1 - p.alpha), "O(n^-5)": -5.0}[rem]
        if rem.startswith("O"):
            assert abs(slope - order) <= 0.5
        else:
            assert slope <= order + 0.5


def test_case2_matches_multiprecision_oracle(resonant):
    modes = find_eigenvalues(resonant, [10, 20, 40], branches=[1])
    for m in modes:
        z = mp_root(resonant, m.lam)
        assert abs(z - m.lam) <= 1e-11 * abs(z)
        assert abs(z.real - m.lam.real) <= 1e-3 * abs(z.real)


def test_failures_are_reported_not_dropped(resonant):
    with pytest.raises(SpectrumError):
        find_eigenvalues(resonant, [1, 2, 3])
    got = find_eigenvalues(resonant, [1, 2, 3], strict=False)
    assert len(got) == 6
    assert {m.status for m in got} - {"converged"}
    with pytest.raises((NonConvergence, BasinEscape)):
        find_eigenvalues(resonant, [2], branches=[2])


def test_threaded_output_is_identical(case1):
    a = find_eigenvalues(case1, range(10, 30))
    b = find_eigenvalues(case1, range(10, 30), threads=4)
    assert [(m.branch, m.index, m.lam) for m in a] == [(m.branch, m.index, m.lam) for m in b]


# ----- conservative spectrum


def test_conservative_unit_n1():
    p = SystemParams(1, 1, 1, 1)
    mu1, mu2 = conservative_mu_squared(p, 1)
    disc = math.sqrt(4 * PI**2 + 1)
    assert mu1 == pytest.approx((2 * PI**2 + 1 + disc) / 2, rel=1e-15)
    assert mu2 == pytest.approx((2 * PI**2 + 1 - disc) / 2, rel=1e-15)
    # frozen from a 30-digit evaluation of the same formula
    assert mu1 == pytest.approx(13.550736966873, abs=1e-11)
    assert mu2 == pytest.approx(7.188471835306, abs=1e-11)
    assert mu1 * mu2 == pytest.approx(PI**4, rel=1e-14)


@pytest.mark.parametrize("p", [SystemParams(1, 1, 1, 1), SystemParams(2.0, 0.5, 3.0, 0.1), SystemParams(4 * PI**2, 1, 4 * PI**2, 1)])
def test_conservative_matches_polynomial_roots(p):
    for n in (1, 7, 50, 200):
        got = np.sort(conservative_mu_squared(p, n))
        oracle = conservative_mu2_by_polyroots(p, n)
        assert np.all(np.abs(got - oracle) <= 1e-12 * oracle)
        B, P = conservative_coefficients(p, n)
        assert abs(got.sum() - B) <= 1e-12 * B and abs(got.prod() - P) <= 1e-12 * P


@given(st.floats(0.05, 20), st.floats(0.05, 20), st.floats(0.05, 20), st.floats(0.05, 20), st.integers(1, 300))
def test_mu_squared_positive_and_vieta(r1, r2, k1, k2, n):
    p = SystemParams(r1, r2, k1, k2)
    a, b = conservative_mu_squared(p, n)
    B, P = conservative_coefficients(p, n)
    assert a > 0 and b > 0
    assert abs(a + b - B) <= 1e-12 * B
    assert abs(a * b - P) <= 1e-12 * P


def test_equal_speed_large_n_expansion():
    p = SystemParams(2.0, 3.0, 4.0, 6.0)
    for n in (100, 400, 1600):
        mu1 = conservative_mu_squared(p, n)[0]
        npi = n * PI
        approx = npi**2 * p.k1 / p.rho1 + npi * p.k1 / math.sqrt(p.rho1 * p.rho2) + p.k1 / (2 * p.rho2)
        assert abs(mu1 - approx) < 20.0 / n


def test_branch_one_tracks_first_speed():
    p = SystemParams(1, 1, 4, 1)  # k1/rho1 = 4 > k2/rho2 = 1
    m1, m2 = conservative_mu_squared(p, 50)
    assert m1 / (50 * PI) ** 2 == pytest.approx(4, rel=1e-2)
    q = SystemParams(1, 1, 1, 4)
    m1, m2 = conservative_mu_squared(q, 50)
    assert m1 / (50 * PI) ** 2 == pytest.approx(1, rel=1e-2)


def test_mode_shapes_solve_the_eigenproblem():
    p = SystemParams(1.3, 0.7, 2.0, 0.5)
    for m in conservative_spectrum(p, [-3, 1, 4]):
        npi = m.index * PI
        mu2 = m.mu_squared
        # phi = C sin, psi = D cos inserted into both equations
        eq1 = -p.rho1 * mu2 * m.C + p.k1 * (npi**2 * m.C + npi * m.D)
        eq2 = -p.rho2 * mu2 * m.D + p.k2 * npi**2 * m.D + p.k1 * (npi * m.C + m.D)
        assert abs(eq1) <= 1e-10 * p.k1 * npi**2 * abs(m.C)
        assert abs(eq2) <= 1e-10 * p.k2 * npi**2 * abs(m.D)


def test_trace_coefficients():
    p = SystemParams(1, 1, 1, 1)
    for n in (10, 20, 40):
        m = conservative_spectrum(p, [n])[0]
        assert m.trace_coeff == pytest.approx(1 + 1 / (n * PI), abs=5.0 / n**2)
    d = SystemParams(1, 1, 1, 4)
    mags = [abs(m.trace_coeff) for m in conservative_spectrum(d, [20, 40, 80]) if m.branch == 2]
    assert mags[0] / mags[1] == pytest.approx(2, rel=0.05) and mags[1] / mags[2] == pytest.approx(2, rel=0.05)
    mirror = {(m.branch, -m.index): m for m in conservative_spectrum(d, [-5, -6])}
    for m in conservative_spectrum(d, [5, 6]):
        assert boundary_trace_coeff(m) == pytest.approx(boundary_trace_coeff(mirror[(m.branch, m.index)]), rel=1e-15)
    assert all(m.lam.real == 0.0 for m in conservative_spectrum(d, range(-5, 6)))

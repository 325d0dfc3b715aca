import cmath
import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from lagrangian_euler.specfun import (
    BiPolynomial, Interval, SpecFamilyError, build_f, build_family, build_h, certificates,
    family_table, family_values, independence_certificate, leading_coefficient, leading_defect,
    pole_cancellation_test, pole_divergence, raw_family_certificate, recursion_check,
    structure_coefficients, triangular_structure, unit_product_defect)

A_MID = "0.5,1.5"
XS = np.linspace(0.2, 1.5, 40)


def pochhammer_leading(alpha: float, m: int) -> complex:
    """[t^m] exp(sum_l t^l c_l) with c_l = i / (2 l sin(pi alpha l)).

    Writing z = exp(-2 pi i alpha), c_l = -w^l / (l (1 - z^l)) per unit t with
    w = exp(-i pi alpha), so the series is (w t; z)_inf and Euler's identity
    gives (-1)^m z^(m(m-1)/2) w^m / (z; z)_m.
    """
    z = cmath.exp(-2j * math.pi * alpha)
    w = cmath.exp(-1j * math.pi * alpha)
    with mpmath.workdps(30):
        qq = complex(mpmath.qp(z, z, m))
    return (-1) ** m * z ** (m * (m - 1) / 2) * w ** m / qq


class TestInterval:
    def test_parse_exact(self):
        A = Interval.parse("0.3, 0.7")
        assert A.lo == Fraction(3, 10) and A.hi == Fraction(7, 10)
        assert Interval.parse((1, 2)) == Interval(Fraction(1), Fraction(2))

    @pytest.mark.parametrize("scale,expected", [(1, [1]), (2, [1, 2, 3]), (4, [2, 3, 4, 5, 6])])
    def test_integers_closed(self, scale, expected):
        assert Interval.parse(A_MID).integers(scale) == expected

    def test_invalid(self):
        with pytest.raises(ValueError):
            Interval.parse("0,1")
        with pytest.raises(ValueError):
            Interval.parse("2,1")


class TestBuildF:
    def test_empty_subtraction(self):
        f = build_f(1, 0.37, "1.2,1.8")
        assert set(f.coeffs) == {(1, 0)}

    @pytest.mark.parametrize("alpha", [0.21, 0.37, 0.6])
    def test_leading_term(self, alpha):
        assert build_f(1, alpha, "1.2,1.8").coefficient(1, 0) == pytest.approx(
            1j / (2 * math.sin(math.pi * alpha)), rel=1e-14)

    def test_subtraction_term(self):
        a = 0.37
        f = build_f(1, a, A_MID)
        want = -(1j * a / math.pi) * (-1) / (a * a - 1)
        assert f.coefficient(0, 1) == pytest.approx(want, rel=1e-14)

    def test_integer_product_raises(self):
        with pytest.raises(ValueError, match="pole"):
            build_f(2, 0.5, A_MID)

    def test_partial_fraction_sum(self):
        # the closed-form coefficient equals the slowly converging series it replaces
        a, ell = 0.37, 1
        z = a * ell
        series = mpmath.nsum(lambda k: (0.5 if k == 0 else (-1) ** int(k)) / (z * z - k * k), [0, mpmath.inf])
        closed = build_f(ell, a, "1.2,1.8").coefficient(1, 0)
        assert complex(1j * a / math.pi * series) == pytest.approx(closed, rel=1e-12)

    def test_bad_index(self):
        with pytest.raises(ValueError):
            build_f(0, 0.37, A_MID)


class TestFamily:
    def test_low_orders(self):
        fam = build_family(0.37, A_MID, 3)
        assert fam.g[0].coeffs == {(0, 0): 1.0}
        assert fam.g[1].defect(fam.f[1]) < 1e-15

    @pytest.mark.parametrize("m", range(7))
    def test_leading_coefficient_oracle(self, m):
        a = 0.37
        want = pochhammer_leading(a, m)
        assert leading_coefficient(a, m) == pytest.approx(want, rel=1e-10)
        fam = build_family(a, A_MID, 6)
        assert complex(fam.g[m].coefficient(m, 0)) == pytest.approx(want, rel=1e-10)

    def test_defects_small(self):
        fam = build_family(0.37, A_MID, 6)
        assert leading_defect(fam) <= 1e-10
        assert recursion_check(fam) <= 1e-10
        assert fam.h_agreement() <= 1e-12
        assert unit_product_defect(fam) <= 1e-10

    def test_recursion_trivial_case(self):
        fam = build_family(0.37, "1.2,1.8", 1)
        assert fam.h[1].coeffs == {}
        assert recursion_check(fam) == 0.0

    def test_wrong_h_sign_detected(self):
        fam = build_family(0.37, A_MID, 3)
        a = fam.alpha
        flipped = BiPolynomial(a, {(0, k): 1j * a / math.pi * (-1) ** k / (a * 2 - k) for k in fam.A.integers(2)})
        assert flipped.defect(fam.h_diff[2]) > 1e-3
        assert fam.h[2].defect(build_h(2, a, A_MID)) == 0.0

    def test_h_disagreement_raises(self):
        with pytest.raises(SpecFamilyError):
            build_family(0.37, A_MID, 3, h_tol=-1.0)

    def test_triangular(self):
        assert triangular_structure(build_family(0.43, "0.3,0.7", 5))

    def test_escalates_near_rational(self):
        fam = build_family(0.5 + 1e-9, "0.3,0.7", 4)
        assert fam.precise
        assert leading_defect(fam) <= 1e-10

    def test_evaluation_matches_coefficients(self):
        fam = build_family(0.37, A_MID, 3)
        x = np.array([0.4, 0.9])
        direct = sum(complex(c) * x ** (0.37 * j + k) for (j, k), c in fam.g[3].coeffs.items())
        np.testing.assert_allclose(fam.g[3](x), direct, rtol=1e-13)
        assert complex(fam.g[3].evaluate_mp(0.4)) == pytest.approx(direct[0], rel=1e-12)


class TestStructure:
    def test_identity_products(self):
        fam = build_family(0.37, A_MID, 4)
        sc = structure_coefficients(fam)
        for m in range(5):
            assert sc.p[(m, 0, m)] == {0: pytest.approx(1.0)}
        assert sc.remainder < 1e-10 and sc.windows_ok

    @pytest.mark.parametrize("m", range(1, 5))
    def test_diagonal_of_euler_operator(self, m):
        fam = build_family(0.37, A_MID, 4)
        q = structure_coefficients(fam).q
        assert set(q[(m, m)]) == {0}
        assert q[(m, m)][0] == pytest.approx(0.37 * m, rel=1e-12)

    def test_extended_products(self):
        fam = build_family(0.43, "0.3,0.7", 2)
        sc = structure_coefficients(fam, pairs=[(2, 2), (1, 2)])
        assert sc.remainder < 1e-10 and sc.windows_ok


class TestPoles:
    def test_defect_small(self):
        fam_norm = np.max(np.abs(build_family(0.5001, "0.3,0.7", 2).g[2](np.linspace(0.3, 1, 15))))
        assert pole_cancellation_test(2, Fraction(1, 2), "0.3,0.7", 1e-4) <= 1e-2 * max(fam_norm, 1.0)

    def test_zeroth_member(self):
        assert pole_cancellation_test(0, Fraction(1, 2), "0.3,0.7", 1e-3) == 0.0

    @pytest.mark.parametrize("m", [2, 4])
    def test_linear_rate(self, m):
        d1 = pole_cancellation_test(m, Fraction(1, 2), "0.3,0.7", 1e-4)
        d2 = pole_cancellation_test(m, Fraction(1, 2), "0.3,0.7", 5e-5)
        assert d1 / d2 == pytest.approx(2.0, rel=0.05)

    def test_individual_terms_diverge(self):
        d1 = pole_divergence(2, Fraction(1, 2), "0.3,0.7", 1e-4)
        d2 = pole_divergence(2, Fraction(1, 2), "0.3,0.7", 5e-5)
        assert d2 / d1 == pytest.approx(2.0, rel=0.05)

    def test_outside_interval(self):
        with pytest.raises(ValueError):
            pole_cancellation_test(2, Fraction(1, 2), "0.6,1.5", 1e-4)

    def test_limit_values_continuous(self):
        at = family_values(Fraction(1, 2), "0.3,0.7", 3, [0.4, 0.8])
        near = family_values(0.5 + 1e-6, "0.3,0.7", 3, [0.4, 0.8])
        np.testing.assert_allclose(at, near, rtol=1e-4, atol=1e-6)


class TestIndependence:
    def test_raw_family_degenerate(self):
        assert raw_family_certificate(0.5, 3, 3, XS) < 1e-12

    def test_g_family_independent_at_half(self):
        assert independence_certificate(Fraction(1, 2), "0.3,0.7", 3, 3, XS) > 1e-9

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            independence_certificate(0.37, "0.3,0.7", 3, 3, XS[:5])
        with pytest.raises(ValueError):
            raw_family_certificate(0.37, 3, 3, XS[:5])


class TestTables:
    def test_table_rows(self):
        fam = build_family(0.37, A_MID, 2)
        rows = family_table(fam)
        assert rows[0] == {"m": 0, "alpha_power": 0, "x_power": 0, "re": 1.0, "im": 0.0}
        assert {r["m"] for r in rows} == {0, 1, 2}

    def test_certificates(self):
        cert = certificates(build_family(0.37, A_MID, 4))
        assert cert["triangular"] and cert["interval"] == "[1/2,3/2]"
        assert cert["recursion_defect"] <= 1e-10

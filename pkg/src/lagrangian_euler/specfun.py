"""A linearly independent replacement for the family x**(alpha m + n).

For rational alpha the monomials x**(alpha m + n) collide.  The functions
g_m built here from the generating function

    sum_m t**m g_m = exp(sum_l t**l f_l)

are polynomials jointly in x**alpha and x, smooth in alpha across rationals,
and {g_m x**n} stays independent.  Coefficients are stored exactly as formal
bi-polynomials; floating-point evaluation only happens at the end.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import mpmath
import numpy as np

Key = tuple[int, int]          # (power of x**alpha, power of x)

SIN_ESCALATION = 1e-8
MP_DPS = 40


# -- intervals --------------------------------------------------------------------------


@dataclass(frozen=True)
class Interval:
    """Closed interval [lo, hi] in (0, inf) with exact rational endpoints."""

    lo: Fraction
    hi: Fraction

    def __post_init__(self) -> None:
        if not 0 < self.lo <= self.hi:
            raise ValueError(f"need 0 < lo <= hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def parse(cls, text) -> "Interval":
        """From "a,b", a pair of numbers or an Interval; decimals are read exactly."""
        if isinstance(text, Interval):
            return text
        if isinstance(text, str):
            text = text.split(",")
        lo, hi = (Fraction(str(s).strip()) for s in text)
        return cls(lo, hi)

    def integers(self, scale: int) -> list[int]:
        """Integers in scale * [lo, hi], endpoints included."""
        lo, hi = scale * self.lo, scale * self.hi
        return list(range(math.ceil(lo), math.floor(hi) + 1))

    def contains(self, alpha) -> bool:
        return self.lo <= Fraction(alpha) <= self.hi

    def __str__(self) -> str:
        return f"[{self.lo},{self.hi}]"


# -- scalar helpers ---------------------------------------------------------------------


def _csum(values: Sequence) -> complex:
    """Compensated complex sum (mpmath values are summed by mpmath)."""
    if not values:
        return 0j
    if any(isinstance(v, (mpmath.mpc, mpmath.mpf)) for v in values):
        return mpmath.fsum(values)
    return complex(math.fsum(v.real for v in values), math.fsum(v.imag for v in values))


def _is_zero(c) -> bool:
    return c == 0


# -- bi-polynomials ---------------------------------------------------------------------


@dataclass
class BiPolynomial:
    """Finite sum of c[(j, k)] * x**(alpha j) * x**k with complex c."""

    alpha: float
    coeffs: dict[Key, complex] = field(default_factory=dict)

    @classmethod
    def constant(cls, alpha, c=1.0) -> "BiPolynomial":
        return cls(alpha, {(0, 0): c})

    @classmethod
    def _from_terms(cls, alpha, terms: dict[Key, list]) -> "BiPolynomial":
        out = {}
        for key, vals in terms.items():
            s = _csum(vals)
            if not _is_zero(s):
                out[key] = s
        return cls(alpha, out)

    def __add__(self, other: "BiPolynomial") -> "BiPolynomial":
        terms = defaultdict(list)
        for p in (self, other):
            for key, c in p.coeffs.items():
                terms[key].append(c)
        return BiPolynomial._from_terms(self.alpha, terms)

    def __neg__(self) -> "BiPolynomial":
        return BiPolynomial(self.alpha, {k: -c for k, c in self.coeffs.items()})

    def __sub__(self, other: "BiPolynomial") -> "BiPolynomial":
        return self + (-other)

    def scale(self, c) -> "BiPolynomial":
        return BiPolynomial(self.alpha, {k: c * v for k, v in self.coeffs.items()})

    def __mul__(self, other: "BiPolynomial") -> "BiPolynomial":
        terms = defaultdict(list)
        for (j1, k1), c1 in self.coeffs.items():
            for (j2, k2), c2 in other.coeffs.items():
                terms[(j1 + j2, k1 + k2)].append(c1 * c2)
        return BiPolynomial._from_terms(self.alpha, terms)

    def euler_derivative(self, shift=0.0) -> "BiPolynomial":
        """(x d/dx - shift) applied termwise: factor (alpha j + k - shift)."""
        a = self.alpha
        return BiPolynomial._from_terms(a, {(j, k): [c * (a * j + k - shift)] for (j, k), c in self.coeffs.items()})

    def conjugate(self) -> "BiPolynomial":
        """Complex conjugate as a function of x > 0 (real alpha)."""
        conj = [mpmath.conj(c) if isinstance(c, mpmath.mpc) else complex(c).conjugate() for c in self.coeffs.values()]
        return BiPolynomial(self.alpha, dict(zip(self.coeffs, conj)))

    def coefficient(self, j: int, k: int = 0):
        return self.coeffs.get((j, k), 0j)

    def x_polynomial(self, j: int) -> dict[int, complex]:
        """Coefficient of x**(alpha j) as a polynomial {k: c} in x."""
        return {k: c for (jj, k), c in self.coeffs.items() if jj == j}

    @property
    def alpha_degree(self) -> int:
        return max((j for j, _ in self.coeffs), default=-1)

    def max_abs(self) -> float:
        return max((abs(complex(c)) for c in self.coeffs.values()), default=0.0)

    def to_complex(self) -> "BiPolynomial":
        return BiPolynomial(float(self.alpha), {k: complex(c) for k, c in self.coeffs.items()})

    def defect(self, other: "BiPolynomial") -> float:
        """Largest coefficient difference."""
        keys = set(self.coeffs) | set(other.coeffs)
        return max((abs(complex(self.coefficient(*k)) - complex(other.coefficient(*k))) for k in keys), default=0.0)

    def __call__(self, x) -> np.ndarray:
        """Evaluate at x > 0 (array)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=complex)
        a = float(self.alpha)
        for (j, k), c in sorted(self.coeffs.items()):
            out += complex(c) * x ** (a * j + k)
        return out

    def evaluate_mp(self, x) -> mpmath.mpc:
        """High-precision evaluation at one point, using the stored alpha."""
        x = mpmath.mpf(x)
        return mpmath.fsum(mpmath.mpc(c) * x ** (self.alpha * j + k) for (j, k), c in self.coeffs.items())

    def rows(self) -> list[tuple[int, int, float, float]]:
        return [(j, k, complex(c).real, complex(c).imag) for (j, k), c in sorted(self.coeffs.items())]


# -- construction -----------------------------------------------------------------------


def _signs(k: int) -> Fraction:
    return Fraction(1, 2) if k == 0 else Fraction((-1) ** k)


def _ctx(alpha, precise: bool):
    if precise:
        a = mpmath.mpf(alpha) if not isinstance(alpha, mpmath.mpf) else alpha
        return a, mpmath.mpc(0, 1), mpmath.pi, mpmath.sin
    return float(alpha), 1j, math.pi, math.sin


def build_f(ell: int, alpha, A, precise: bool = False) -> BiPolynomial:
    """f_ell: the x**(alpha ell) part summed in closed form, i / (2 ell sin(pi alpha ell)),
    minus the finite sum over integers k in ell * A."""
    A = Interval.parse(A)
    if ell < 1:
        raise ValueError("ell starts at 1")
    a, I, pi, sin = _ctx(alpha, precise)
    al = a * ell
    if al == round(float(al)):
        raise ValueError(f"alpha * ell = {float(al)} is an integer: f_ell has a pole there")
    coeffs = {(ell, 0): I / (2 * ell * sin(pi * al))}
    pref = I * a / pi
    for k in A.integers(ell):
        c = -pref * float(_signs(k)) / (al * al - k * k)
        coeffs[(0, k)] = coeffs.get((0, k), 0) + c
    return BiPolynomial(a, coeffs)


def build_h(ell: int, alpha, A, precise: bool = False) -> BiPolynomial:
    """h_ell = (i alpha / pi) sum_{k in Z cap ell A} (-1)**k x**k / (alpha ell + k)."""
    A = Interval.parse(A)
    a, I, pi, _ = _ctx(alpha, precise)
    pref = I * a / pi
    return BiPolynomial(a, {(0, k): pref * (-1) ** k / (a * ell + k) for k in A.integers(ell)})


def sine_product(alpha, m: int) -> float:
    return float(np.prod([math.sin(math.pi * float(alpha) * j) for j in range(1, m + 1)]))


def leading_coefficient(alpha, m: int) -> complex:
    """Coefficient of x**(m alpha) in g_m: 2**-m c_m / prod_j sin(pi alpha j),
    c_m = i**m exp(-pi i alpha m (m - 1) / 2).

    Evaluated in extended precision: near rational alpha the sine product is
    tiny and loses digits in double precision."""
    with mpmath.workdps(MP_DPS):
        a = mpmath.mpf(float(alpha))
        sines = mpmath.fprod(mpmath.sin(mpmath.pi * a * j) for j in range(1, m + 1))
        c = mpmath.mpc(0, 1) ** m * mpmath.exp(-mpmath.mpc(0, 1) * mpmath.pi * a * m * (m - 1) / 2)
        return complex(c / (2 ** m * sines))


def unit_factor(alpha, m: int) -> complex:
    return complex(1j ** m * np.exp(-1j * math.pi * float(alpha) * m * (m - 1) / 2))


class SpecFamilyError(ArithmeticError):
    pass


@dataclass
class SpecFamily:
    alpha: float
    A: Interval
    m_max: int
    f: list[BiPolynomial]          # f[0] unused (None), f[l] for 1 <= l <= m_max
    g: list[BiPolynomial]
    h: list[BiPolynomial]          # explicit formula, h[0] unused
    h_diff: list[BiPolynomial]     # (x d/dx - alpha l) f_l
    precise: bool = False

    def h_agreement(self) -> float:
        return max((_rel_defect(self.h[l], self.h_diff[l], self.f[l]) for l in range(1, self.m_max + 1)),
                   default=0.0)


def _rel_defect(a: BiPolynomial, b: BiPolynomial, ref: BiPolynomial | None = None) -> float:
    scale = max(a.max_abs(), b.max_abs(), ref.max_abs() if ref is not None else 0.0, 1.0)
    return a.defect(b) / scale


def series_exp(terms: Sequence[BiPolynomial], m_max: int, alpha) -> list[BiPolynomial]:
    """Coefficients of exp(sum_l t**l terms[l]) up to t**m_max.

    Uses m g_m = sum_l l f_l g_(m-l), from differentiating in t.
    """
    g = [BiPolynomial.constant(alpha, 1.0 if not isinstance(alpha, mpmath.mpf) else mpmath.mpc(1))]
    for m in range(1, m_max + 1):
        acc = BiPolynomial(alpha)
        for l in range(1, m + 1):
            acc = acc + (terms[l] * g[m - l]).scale(l)
        g.append(acc.scale(1.0 / m if not isinstance(alpha, mpmath.mpf) else mpmath.mpf(1) / m))
    return g


def build_family(alpha, A, m_max: int, precise: bool | None = None, h_tol: float = 1e-12) -> SpecFamily:
    """The g_m for m <= m_max, with both constructions of h_l.

    Switches to extended precision when prod_j |sin(pi alpha j)| drops below
    SIN_ESCALATION.  Raises SpecFamilyError when the two h constructions
    disagree.
    """
    A = Interval.parse(A)
    if precise is None:
        precise = abs(sine_product(alpha, m_max)) < SIN_ESCALATION
    with mpmath.workdps(MP_DPS):
        a = mpmath.mpf(alpha) if precise else float(alpha)
        f = [None] + [build_f(l, a, A, precise) for l in range(1, m_max + 1)]
        h = [None] + [build_h(l, a, A, precise) for l in range(1, m_max + 1)]
        hd = [None] + [f[l].euler_derivative(a * l) for l in range(1, m_max + 1)]
        g = series_exp(f, m_max, a)
    fam = SpecFamily(float(alpha), A, m_max, f, g, h, hd, precise)
    if precise:
        fam.f = [None] + [p.to_complex() for p in f[1:]]
        fam.g = [p.to_complex() for p in g]
        fam.h = [None] + [p.to_complex() for p in h[1:]]
        fam.h_diff = [None] + [p.to_complex() for p in hd[1:]]
    agree = fam.h_agreement()
    if agree > h_tol:
        raise SpecFamilyError(f"h constructions disagree by {agree:.2e}")
    return fam


# -- identities -------------------------------------------------------------------------


def leading_defect(fam: SpecFamily) -> float:
    """Max relative error of the x**(m alpha) coefficient against the closed form."""
    worst = 0.0
    for m in range(fam.m_max + 1):
        want = leading_coefficient(fam.alpha, m)
        got = complex(fam.g[m].coefficient(m, 0))
        worst = max(worst, abs(got - want) / abs(want))
    return worst


def recursion_check(fam: SpecFamily) -> float:
    """Max relative defect of (x d/dx - alpha m) g_m = sum_l h_l g_(m-l)."""
    worst = 0.0
    for m in range(fam.m_max + 1):
        lhs = fam.g[m].euler_derivative(fam.alpha * m)
        rhs = BiPolynomial(fam.alpha)
        for l in range(1, m + 1):
            rhs = rhs + fam.h[l] * fam.g[m - l]
        worst = max(worst, _rel_defect(lhs, rhs, fam.g[m]))
    return worst


def unit_product_defect(fam: SpecFamily) -> float:
    """For real alpha, (sum t**m g_m)(sum t**m conj g_m) = 1; max coefficient defect."""
    worst = 0.0
    conj = [p.conjugate() for p in fam.g]
    for m in range(fam.m_max + 1):
        acc = BiPolynomial(fam.alpha)
        for j in range(m + 1):
            acc = acc + fam.g[j] * conj[m - j]
        target = BiPolynomial.constant(fam.alpha, 1.0 if m == 0 else 0.0)
        scale = max(max(p.max_abs() for p in fam.g[: m + 1]) ** 2, 1.0)
        worst = max(worst, acc.defect(target) / scale)
    return worst


def degree_window_ok(poly_x: dict[int, complex], width: int, A: Interval) -> bool:
    """All x-degrees of a polynomial lie in width * A (width 0 means constants only)."""
    lo, hi = width * A.lo, width * A.hi
    return all(lo <= k <= hi for k, c in poly_x.items() if c != 0)


def triangular_structure(fam: SpecFamily) -> bool:
    """g_m = sum_{j <= m} *_(m-j) x**(alpha j) with *_0 a nonzero constant and
    x-degrees of *_i inside i * A."""
    for m, g in enumerate(fam.g):
        if g.alpha_degree != m:
            return False
        top = g.x_polynomial(m)
        if set(top) != {0} or top[0] == 0:
            return False
        for j in range(m + 1):
            if not degree_window_ok(g.x_polynomial(j), m - j, fam.A):
                return False
    return True


def _reduce(target: BiPolynomial, fam: SpecFamily, top: int) -> tuple[dict[int, dict[int, complex]], float]:
    """Write target = sum_k p_k g_k with p_k polynomials in x by triangular elimination."""
    rem = target
    out = {}
    for k in range(top, -1, -1):
        lead = complex(fam.g[k].coefficient(k, 0))
        pk = {d: c / lead for d, c in rem.x_polynomial(k).items() if c != 0}
        out[k] = pk
        if pk:
            pk_poly = BiPolynomial(fam.alpha, {(0, d): c for d, c in pk.items()})
            rem = rem - pk_poly * fam.g[k]
    scale = max(target.max_abs(), 1.0)
    return out, rem.max_abs() / scale


@dataclass
class StructureCoefficients:
    p: dict[tuple[int, int, int], dict[int, complex]]
    q: dict[tuple[int, int], dict[int, complex]]
    remainder: float
    windows_ok: bool


def structure_coefficients(fam: SpecFamily, pairs: Iterable[tuple[int, int]] | None = None) -> StructureCoefficients:
    """p_mnk with g_m g_n = sum_k p_mnk g_k, and q_mk with x d/dx g_m = sum_k q_mk g_k.

    Pairs with m + n > m_max use a family extended to m + n.
    """
    if pairs is None:
        pairs = [(m, n) for m in range(fam.m_max + 1) for n in range(fam.m_max + 1 - m)]
    pairs = list(pairs)
    top = max([m + n for m, n in pairs] + [fam.m_max])
    big = fam if top <= fam.m_max else build_family(fam.alpha, fam.A, top, fam.precise or None)
    p, q = {}, {}
    rem = 0.0
    ok = True
    for m, n in pairs:
        coeffs, r = _reduce(big.g[m] * big.g[n], big, m + n)
        rem = max(rem, r)
        for k, pk in coeffs.items():
            p[(m, n, k)] = pk
            ok &= degree_window_ok(pk, m + n - k, fam.A)
    for m in range(fam.m_max + 1):
        coeffs, r = _reduce(fam.g[m].euler_derivative(0.0), fam, m)
        rem = max(rem, r)
        for k, qk in coeffs.items():
            q[(m, k)] = qk
            ok &= degree_window_ok(qk, m - k, fam.A)
    return StructureCoefficients(p, q, rem, ok)


# -- rational alpha ---------------------------------------------------------------------


def family_values(alpha, A, m_max: int, xs, *, limit_eps: float = 1e-18, dps: int = 60) -> np.ndarray:
    """g_m(x) for m <= m_max at points xs, shape (m_max + 1, len(xs)).

    Where alpha * l is an integer for some l <= m_max the value is the
    symmetric limit (g(alpha + eps) + g(alpha - eps)) / 2 in extended
    precision; the poles cancel in the function values there.
    """
    A = Interval.parse(A)
    xs = np.asarray(xs, dtype=float)
    alpha_q = Fraction(alpha).limit_denominator(10 ** 6) if not isinstance(alpha, Fraction) else alpha
    singular = any((alpha_q * l).denominator == 1 for l in range(1, m_max + 1)) and abs(float(alpha_q) - float(alpha)) < 1e-15
    if not singular:
        fam = build_family(alpha, A, m_max)
        return np.array([g(xs) for g in fam.g])
    out = np.zeros((m_max + 1, len(xs)), dtype=complex)
    with mpmath.workdps(dps):
        a0 = mpmath.mpf(alpha_q.numerator) / alpha_q.denominator
        eps = mpmath.mpf(limit_eps)
        fams = []
        for a in (a0 + eps, a0 - eps):
            f = [None] + [build_f(l, a, A, precise=True) for l in range(1, m_max + 1)]
            fams.append(series_exp(f, m_max, a))
        for m in range(m_max + 1):
            for i, x in enumerate(xs):
                val = (fams[0][m].evaluate_mp(x) + fams[1][m].evaluate_mp(x)) / 2
                out[m, i] = complex(val)
    return out


def pole_cancellation_test(m: int, alpha0, A, eps: float, xs=None) -> float:
    """max_x |g_m(alpha0 + eps, x) - g_m(alpha0 - eps, x)| / max_x |g_m(alpha0 + eps, x)|."""
    A = Interval.parse(A)
    a0 = Fraction(alpha0) if not isinstance(alpha0, float) else Fraction(alpha0).limit_denominator(1000)
    if not A.contains(a0):
        raise ValueError(f"alpha0 = {a0} is not in {A}")
    if m == 0:
        return 0.0
    xs = np.linspace(0.3, 1.0, 15) if xs is None else np.asarray(xs, dtype=float)
    vals = [build_family(float(a0) + s * eps, A, m).g[m](xs) for s in (1, -1)]
    return float(np.max(np.abs(vals[0] - vals[1])) / max(np.max(np.abs(vals[0])), 1e-300))


def pole_divergence(ell: int, alpha0, A, eps: float) -> float:
    """Largest coefficient magnitude of f_ell at alpha0 + eps (grows like 1/eps at a pole)."""
    return build_f(ell, float(Fraction(alpha0)) + eps, A).max_abs()


# -- independence -----------------------------------------------------------------------


def _min_singular(matrix: np.ndarray) -> float:
    norms = np.linalg.norm(matrix, axis=0)
    norms[norms == 0] = 1.0
    return float(np.linalg.svd(matrix / norms, compute_uv=False)[-1])


def raw_family_certificate(alpha: float, m_max: int, n_max: int, xs) -> float:
    """Min singular value for the column-normalised evaluations of x**(alpha m + n)."""
    xs = np.asarray(xs, dtype=float)
    cols = [xs ** (alpha * m + n) for m in range(m_max + 1) for n in range(n_max + 1)]
    if len(xs) < len(cols):
        raise ValueError("need at least as many samples as functions")
    return _min_singular(np.stack(cols, axis=1))


def independence_certificate(alpha, A, m_max: int, n_max: int, xs) -> float:
    """Min singular value for the column-normalised evaluations of g_m(x) x**n.

    Complex columns are split into real and imaginary rows.
    """
    xs = np.asarray(xs, dtype=float)
    n_fun = (m_max + 1) * (n_max + 1)
    if len(xs) < n_fun:
        raise ValueError("need at least as many samples as functions")
    gv = family_values(alpha, A, m_max, xs)
    cols = [gv[m] * xs ** n for m in range(m_max + 1) for n in range(n_max + 1)]
    M = np.stack(cols, axis=1)
    if np.iscomplexobj(M):
        M = np.concatenate([M.real, M.imag], axis=0)
    return _min_singular(M)


# -- tables -----------------------------------------------------------------------------


def family_table(fam: SpecFamily) -> list[dict]:
    rows = []
    for m, g in enumerate(fam.g):
        for j, k, re, im in g.rows():
            rows.append({"m": m, "alpha_power": j, "x_power": k, "re": re, "im": im})
    return rows


def certificates(fam: SpecFamily) -> dict:
    return {
        "alpha": fam.alpha,
        "interval": str(fam.A),
        "m_max": fam.m_max,
        "precise": fam.precise,
        "leading_defect": leading_defect(fam),
        "recursion_defect": recursion_check(fam),
        "h_agreement": fam.h_agreement(),
        "unit_product_defect": unit_product_defect(fam),
        "triangular": triangular_structure(fam),
    }

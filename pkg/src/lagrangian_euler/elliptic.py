"""The first-order operators L0 = (curl, div), their y-dependent perturbation and the fixed-point velocity solver.

Conventions: a FormPair ``(a, s)`` returned by :func:`apply_L0` is
``(curl v, div v)``.  The oracle in :mod:`fields` returns the raw 3-form
coefficient, which is twice the L0-normalized scalar, so for any (v, y, Omega)

    apply_L0(v) - apply_Ly(y, v) - (Omega, 0) == (oracle.two_form, oracle.three_form / 2).

The solver works in the Galerkin space of modes with max_i |k_i| <= (n - 1) // 3.
Products are evaluated on a 3/2-padded grid, which is exact for the cubic
terms on that band, so the iteration preserves integrability exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.fft as sfft

from ._kernels import cofactor3
from .fields import (
    FormPair,
    get_grid,
    grid_of,
    inverse_transform,
    jacobian,
    jacobian_from_spectrum,
    pad_spectrum,
    spectral_transform,
    unpad_spectrum,
)
from .norms import BnConstant, SobolevParams, dn_norm, gradient_stack, n_norm

ADMISSIBILITY_TOL = 1e-8


class ContractionError(RuntimeError):
    """The fixed-point iteration stopped contracting; y is probably outside BN."""

    def __init__(self, message: str, report: "NeumannReport | None" = None) -> None:
        super().__init__(message)
        self.report = report


class BallExitError(ContractionError):
    """The displacement gradient is not inside the BN ball."""


class AdmissibilityError(ValueError):
    """A right-hand side is not in the range of L0 (nonzero mean or not integrable)."""


# -- L0 and its inverse -----------------------------------------------------------------


def apply_L0(v: np.ndarray) -> FormPair:
    """(curl v, div v)."""
    j = jacobian(v)
    return FormPair(
        np.stack([j[2, 1] - j[1, 2], j[0, 2] - j[2, 0], j[1, 0] - j[0, 1]]),
        j[0, 0] + j[1, 1] + j[2, 2],
    )


def _L0_spectral(v_hat: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    s = get_grid(n).derivative_symbols
    two = np.stack([
        s[1] * v_hat[2] - s[2] * v_hat[1],
        s[2] * v_hat[0] - s[0] * v_hat[2],
        s[0] * v_hat[1] - s[1] * v_hat[0],
    ])
    return two, s[0] * v_hat[0] + s[1] * v_hat[1] + s[2] * v_hat[2]


def _L0_inverse_spectral(w1_hat: np.ndarray, w2_hat: np.ndarray, n: int) -> np.ndarray:
    """u = i |k|^-2 (k x w1 - k w2) mode by mode, with k = 0 and Nyquist modes set to zero."""
    g = get_grid(n)
    k = [s.imag for s in g.derivative_symbols]
    k2 = k[0] ** 2 + k[1] ** 2 + k[2] ** 2
    inv = np.zeros_like(k2)
    np.divide(1.0, k2, out=inv, where=k2 > 0)
    cross = np.stack([
        k[1] * w1_hat[2] - k[2] * w1_hat[1],
        k[2] * w1_hat[0] - k[0] * w1_hat[2],
        k[0] * w1_hat[1] - k[1] * w1_hat[0],
    ])
    u = 1j * inv * (cross - np.stack(np.broadcast_arrays(*k)) * w2_hat)
    return u


def check_admissible(w: FormPair, tol: float = ADMISSIBILITY_TOL, scale: float = 0.0) -> tuple[float, float]:
    """Relative mean and relative integrability defect of a right-hand side.

    Defects are measured against the largest spectral coefficient of ``w`` or
    against ``scale`` when that is larger.  Raises :class:`AdmissibilityError`
    when either exceeds ``tol``.
    """
    g = grid_of(w.three_form)
    w1 = spectral_transform(w.two_form)
    w2 = spectral_transform(w.three_form)
    scale = max(float(np.abs(w1).max()), float(np.abs(w2).max()), scale, 1e-300)
    mean = max(float(np.abs(w1[:, 0, 0, 0]).max()), float(abs(w2[0, 0, 0]))) / scale
    s = g.derivative_symbols
    div = s[0] * w1[0] + s[1] * w1[1] + s[2] * w1[2]
    kmax = g.n // 2
    integrability = float(np.abs(div).max()) / (scale * kmax)
    if mean > tol:
        raise AdmissibilityError(f"right-hand side has nonzero mean (relative {mean:.3e})")
    if integrability > tol:
        raise AdmissibilityError(f"two-form part is not closed (relative divergence {integrability:.3e})")
    return mean, integrability


def apply_L0_inverse(w: FormPair, *, check: bool = True, tol: float = ADMISSIBILITY_TOL) -> np.ndarray:
    """The zero-mean v with (curl v, div v) = w for admissible w."""
    if check:
        check_admissible(w, tol)
    n = grid_of(w.three_form).n
    u_hat = _L0_inverse_spectral(spectral_transform(w.two_form), spectral_transform(w.three_form), n)
    return inverse_transform(u_hat, n)


# -- the y-dependent perturbation -------------------------------------------------------


def _wedge_pair_axial(jv: np.ndarray, jy: np.ndarray) -> np.ndarray:
    """axial(sum_D dv^D ^ dy^D), component c = eps_cab sum_D d_a v^D d_b y^D."""
    out = []
    for c in range(3):
        a, b = (c + 1) % 3, (c + 2) % 3
        out.append(np.sum(jv[:, a] * jy[:, b] - jv[:, b] * jy[:, a], axis=0))
    return np.stack(out)


def _linear_scalar(jv: np.ndarray, jy: np.ndarray) -> np.ndarray:
    """(div v)(div y) - tr(Jv Jy)."""
    tr_v = jv[0, 0] + jv[1, 1] + jv[2, 2]
    tr_y = jy[0, 0] + jy[1, 1] + jy[2, 2]
    return tr_v * tr_y - np.einsum("ab...,ba...->...", jv, jy)


def _cubic_scalar(jv: np.ndarray, cof_y: np.ndarray) -> np.ndarray:
    """sum_{A,a} Jv[A,a] cof(Jy)[A,a], half the coefficient of eps dv ^ dy ^ dy."""
    return np.einsum("ab...,ab...->...", jv, cof_y)


def apply_Ly1(y: np.ndarray, v: np.ndarray) -> FormPair:
    """Part of L_y linear in y, evaluated pointwise."""
    jv, jy = jacobian(v), jacobian(y)
    return FormPair(-_wedge_pair_axial(jv, jy), -_linear_scalar(jv, jy))


def apply_Ly2(y: np.ndarray, v: np.ndarray) -> FormPair:
    """Part of L_y quadratic in y, evaluated pointwise."""
    jv, jy = jacobian(v), jacobian(y)
    return FormPair(np.zeros_like(v), -_cubic_scalar(jv, cofactor3(jy)))


def apply_Ly(y: np.ndarray, v: np.ndarray) -> FormPair:
    """Hand-expanded wedge terms, evaluated pointwise: Ly1(y)(v) + Ly2(y, y)(v)."""
    jv, jy = jacobian(v), jacobian(y)
    return FormPair(
        -_wedge_pair_axial(jv, jy),
        -_linear_scalar(jv, jy) - _cubic_scalar(jv, cofactor3(jy)),
    )


class GalerkinOperator:
    """P L_y(y, .) on the dealiased band, with products on a padded grid.

    ``quadratic=False`` drops the term quadratic in y, which is used to split
    the Neumann series into its multilinear pieces.
    """

    def __init__(self, y: np.ndarray, *, linear: bool = True, quadratic: bool = True) -> None:
        g = grid_of(y)
        self.n = g.n
        self.m = 3 * g.n // 2
        self.mask = g.dealias_mask
        self.linear = linear
        self.quadratic = quadratic
        y_hat = spectral_transform(y) * self.mask
        jy = jacobian_from_spectrum(pad_spectrum(y_hat, self.n, self.m), self.m)
        self.jy = jy
        self.cof = cofactor3(jy) if quadratic else None

    def apply_spectral(self, v_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Spectra (two_form, three_form) of P L_y v for a band-limited v spectrum."""
        jv = jacobian_from_spectrum(pad_spectrum(v_hat * self.mask, self.n, self.m), self.m)
        two = np.zeros((3,) + jv.shape[2:])
        three = np.zeros(jv.shape[2:])
        if self.linear:
            two = -_wedge_pair_axial(jv, self.jy)
            three = -_linear_scalar(jv, self.jy)
        if self.quadratic:
            three = three - _cubic_scalar(jv, self.cof)
        m3 = float(self.m) ** 3
        two_hat = unpad_spectrum(sfft.rfftn(two, axes=(-3, -2, -1)) / m3, self.m, self.n) * self.mask
        three_hat = unpad_spectrum(sfft.rfftn(three, axes=(-3, -2, -1)) / m3, self.m, self.n) * self.mask
        return two_hat, three_hat

    def __call__(self, v: np.ndarray) -> FormPair:
        two_hat, three_hat = self.apply_spectral(spectral_transform(v))
        return FormPair(inverse_transform(two_hat, self.n), inverse_transform(three_hat, self.n))


# -- the fixed-point solver -------------------------------------------------------------


@dataclass
class NeumannReport:
    iterations: int = 0
    contraction_ratio: float = 0.0
    residual: float = math.inf
    converged: bool = False
    ratios: list[float] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    displacement_size: float = 0.0
    velocity_bound_ratio: float = float("nan")

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def _form_pair_dn(two_hat: np.ndarray, three_hat: np.ndarray, n: int, p: SobolevParams) -> float:
    two = inverse_transform(two_hat, n)
    three = inverse_transform(three_hat, n)
    return dn_norm(np.concatenate([two, three[None]]), p)


def _fixed_point(
    op: GalerkinOperator,
    source_hat: tuple[np.ndarray, np.ndarray],
    v0: np.ndarray | None,
    tol: float,
    max_iter: int,
    params: SobolevParams,
    fail_ratio: float,
    patience: int,
) -> tuple[np.ndarray, NeumannReport]:
    n = op.n
    report = NeumannReport()
    s_two, s_three = source_hat
    if v0 is None:
        v_hat = _L0_inverse_spectral(s_two, s_three, n)
    else:
        v_hat = spectral_transform(v0) * op.mask
    noise = 1e3 * np.finfo(float).eps * max(1.0, _form_pair_dn(s_two, s_three, n, params))
    prev = None
    for it in range(1, max_iter + 1):
        l_two, l_three = op.apply_spectral(v_hat)
        new_hat = _L0_inverse_spectral(l_two + s_two, l_three + s_three, n)
        d_two, d_three = _L0_spectral(new_hat - v_hat, n)
        res = _form_pair_dn(d_two, d_three, n, params)
        v_hat = new_hat
        report.iterations = it
        report.residuals.append(res)
        if prev is not None and prev > noise:
            ratio = res / prev
            report.ratios.append(ratio)
            report.contraction_ratio = max(report.contraction_ratio, ratio)
            if it > patience and ratio > fail_ratio:
                report.residual = res
                raise ContractionError(
                    f"iteration ratio {ratio:.3f} exceeds {fail_ratio} at step {it}", report
                )
        prev = res
        if res <= tol:
            report.residual = res
            report.converged = True
            break
    else:
        report.residual = prev if prev is not None else math.inf
        raise ContractionError(f"no convergence to {tol:g} in {max_iter} iterations", report)
    return inverse_transform(v_hat, n), report


def neumann_solve(
    y: np.ndarray,
    omega: np.ndarray,
    tol: float = 1e-10,
    *,
    max_iter: int = 100,
    params: SobolevParams = SobolevParams(),
    bn: BnConstant | None = None,
    v0: np.ndarray | None = None,
    fail_ratio: float = 0.9,
    patience: int = 3,
    check_ball: bool = True,
) -> tuple[np.ndarray, NeumannReport]:
    """Fixed point of v -> L0^-1 (P L_y v + P(Omega, 0)).

    ``omega`` is the axial vorticity.  The residual is the DN norm of
    L0(v_k - v_(k+1)), which equals the Galerkin residual of the equations.
    """
    bn = bn or BnConstant()
    g = grid_of(omega)
    size = dn_norm(gradient_stack(y), params)
    if check_ball and size >= bn.radius:
        raise BallExitError(f"DN(dy) = {size:.4g} is not below the BN radius {bn.radius:.4g}")
    om_hat = spectral_transform(omega) * g.dealias_mask
    check_admissible(FormPair(inverse_transform(om_hat, g.n), np.zeros(g.shape)))
    op = GalerkinOperator(y)
    v, report = _fixed_point(op, (om_hat, np.zeros(om_hat.shape[1:], dtype=complex)), v0, tol, max_iter,
                             params, fail_ratio, patience)
    report.displacement_size = size
    om_norm = dn_norm(inverse_transform(om_hat, g.n), params)
    if om_norm > 0:
        report.velocity_bound_ratio = n_norm(v, params, check_mean=False) / om_norm
    if check_ball:
        bn.revise(report.contraction_ratio, size)
    return v, report


def neumann_solve_reference(
    y: np.ndarray,
    V: np.ndarray,
    errors: FormPair,
    tol: float = 1e-10,
    *,
    max_iter: int = 100,
    params: SobolevParams = SobolevParams(),
    bn: BnConstant | None = None,
    w0: np.ndarray | None = None,
    fail_ratio: float = 0.9,
    patience: int = 3,
    check_ball: bool = True,
) -> tuple[np.ndarray, NeumannReport]:
    """Solve L0 w = P L_y w + P K_y - (E2, E3 / 2) with K_y = L_y(y, V).

    ``errors`` holds the reference residual (E2, E3) in oracle normalization,
    i.e. E3 is the raw 3-form coefficient.
    """
    bn = bn or BnConstant()
    g = grid_of(V)
    size = dn_norm(gradient_stack(y), params)
    if check_ball and size >= bn.radius:
        raise BallExitError(f"DN(dy) = {size:.4g} is not below the BN radius {bn.radius:.4g}")
    e2 = spectral_transform(errors.two_form) * g.dealias_mask
    e3 = spectral_transform(errors.three_form) * g.dealias_mask * 0.5
    v_scale = float(np.abs(spectral_transform(V)).max()) * (g.n // 2)
    check_admissible(FormPair(inverse_transform(e2, g.n), inverse_transform(e3, g.n)), scale=v_scale)
    op = GalerkinOperator(y)
    k_two, k_three = op.apply_spectral(spectral_transform(V))
    w, report = _fixed_point(op, (k_two - e2, k_three - e3), w0, tol, max_iter, params, fail_ratio, patience)
    report.displacement_size = size
    if check_ball:
        bn.revise(report.contraction_ratio, size)
    return w, report


def reference_bound_terms(y: np.ndarray, V: np.ndarray, errors: FormPair,
                          params: SobolevParams = SobolevParams()) -> dict[str, float]:
    """The measurable pieces of the a priori bound for the reference solve."""
    from .norms import dk_norm

    dv = np.concatenate([np.stack([c for c in jacobian(V)[A]]) for A in range(3)])
    return {
        "dk_dV": dk_norm(dv),
        "n_y": n_norm(y, params, check_mean=False),
        "dn_errors": dn_norm(np.concatenate([errors.two_form, errors.three_form[None]]), params),
    }


def neumann_series_terms(y: np.ndarray, omega: np.ndarray, order: int) -> list[np.ndarray]:
    """Multilinear pieces O_0..O_order of v(eps y) = sum eps^j O_j.

    O_j = L0^-1 [P Ly1 O_(j-1) + P Ly2 O_(j-2)].
    """
    g = grid_of(omega)
    n = g.n
    lin = GalerkinOperator(y, linear=True, quadratic=False)
    quad = GalerkinOperator(y, linear=False, quadratic=True)
    om_hat = spectral_transform(omega) * g.dealias_mask
    terms = [_L0_inverse_spectral(om_hat, np.zeros(om_hat.shape[1:], dtype=complex), n)]
    for j in range(1, order + 1):
        two, three = lin.apply_spectral(terms[j - 1])
        if j >= 2:
            q2, q3 = quad.apply_spectral(terms[j - 2])
            two, three = two + q2, three + q3
        terms.append(_L0_inverse_spectral(two, three, n))
    return [inverse_transform(t, n) for t in terms]

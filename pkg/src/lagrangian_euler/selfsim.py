"""Certificate checkers for candidate self-similar Euler flows.

Nothing here searches for a self-similar solution.  The module evaluates
candidate data against the algebraic and differential constraints such a
solution must satisfy:

* profile equations for continuously self-similar data on a label box,
  hand-expanded and cross-checked by generic form algebra;
* the Eulerian vorticity system at scattered samples;
* eigenvalue relations at fixed points of the return map and the implied
  lower bound on the scaling exponent;
* multipole (elliptic) and transport modes at self-similar infinity;
* growth, energy and mode-table bookkeeping;
* a catalog of stabilizer subgroups of scalings x reflections x rotations.

Throughout, ``ka`` denotes the spatial scaling exponent: under the
self-similarity t -> q t the space variable scales as x -> q**ka x.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
import sympy as sp

from ._kernels import cofactor3, det3
from .fields import Form, wedge_residual_full

VectorCallable = Callable[[np.ndarray], np.ndarray]
FlowCallable = Callable[[float, np.ndarray], np.ndarray]


# -- parameters -------------------------------------------------------------------------


@dataclass(frozen=True)
class SelfSimParams:
    """Scaling exponent, self-similarity group and decay exponent.

    ``q1`` is the generator (> 1) of a discrete scaling group; ``None`` means
    the continuous group of all q > 0.
    """

    ka: float
    q1: float | None = None
    delta: float | None = None

    def __post_init__(self) -> None:
        if not self.ka > 0:
            raise ValueError(f"scaling exponent must be positive, got {self.ka}")
        if self.q1 is not None and not self.q1 > 1:
            raise ValueError(f"discrete generator must exceed 1, got {self.q1}")
        if self.delta is not None and not self.delta > 0:
            raise ValueError(f"decay exponent must be positive, got {self.delta}")

    @property
    def kind(self) -> str:
        return "continuous" if self.q1 is None else "discrete"

    @property
    def log_period(self) -> float | None:
        """Period of log|x| at fixed time, ka * log q1 (discrete groups only)."""
        return None if self.q1 is None else self.ka * math.log(self.q1)

    def ka_consistent(self) -> bool:
        return ka_lower_bound_holds(self.ka)


# -- profile equations on a label box ---------------------------------------------------


def _box_jacobian(f: np.ndarray, h: float) -> np.ndarray:
    """J[A, a] = d f^A / d m^a by second-order differences, shape (C, 3, N, N, N)."""
    return np.stack([np.stack(np.gradient(fa, h, edge_order=2), axis=0) for fa in f], axis=0)


def _divergence_box(f: np.ndarray, h: float) -> np.ndarray:
    return sum(np.gradient(f[a], h, axis=a, edge_order=2) for a in range(3))


@dataclass
class CssProfile:
    """Sampled data (xi, zeta, Z, Gamma) on a uniform cubic label grid.

    All four arrays have shape (3, N, N, N); ``gamma`` is the axial vector of
    the 2-form.  Node i along each axis sits at ``origin + i * spacing``.
    """

    xi: np.ndarray
    zeta: np.ndarray
    Z: np.ndarray
    gamma: np.ndarray
    spacing: float
    origin: float = 0.0

    def __post_init__(self) -> None:
        shapes = {a.shape for a in (self.xi, self.zeta, self.Z, self.gamma)}
        if len(shapes) != 1 or self.xi.ndim != 4 or self.xi.shape[0] != 3:
            raise ValueError("profile arrays must share a (3, N, N, N) shape")
        if self.xi.shape[1] < 5:
            raise ValueError("difference stencils need at least 5 nodes per axis")

    @property
    def n(self) -> int:
        return self.xi.shape[1]

    @property
    def coords(self) -> np.ndarray:
        c = self.origin + self.spacing * np.arange(self.n)
        return np.stack(np.meshgrid(c, c, c, indexing="ij"))

    @classmethod
    def from_functions(cls, xi: VectorCallable, zeta: VectorCallable, Z: VectorCallable,
                       gamma: VectorCallable, n: int = 17, extent: float = 1.0,
                       origin: float | None = None) -> "CssProfile":
        """Sample callables (P, 3) -> (P, 3) on an n^3 grid of side ``extent``."""
        h = extent / (n - 1)
        origin = -0.5 * extent if origin is None else origin
        c = origin + h * np.arange(n)
        pts = np.stack(np.meshgrid(c, c, c, indexing="ij")).reshape(3, -1).T

        def sample(f):
            return np.asarray(f(pts), dtype=float).T.reshape(3, n, n, n)

        return cls(sample(xi), sample(zeta), sample(Z), sample(gamma), h, origin)

    @classmethod
    def rest(cls, ka: float, n: int = 9, extent: float = 1.0) -> "CssProfile":
        """Zero velocity, identity labels, purely radial scaling field."""
        return cls.from_functions(lambda p: p, lambda p: 0 * p, lambda p: ka * p,
                                  lambda p: 0 * p, n, extent)

    @classmethod
    def linear(cls, M: np.ndarray, ka: float, n: int = 9, extent: float = 1.0) -> "CssProfile":
        """zeta = M xi, Z = (M + ka) xi, Gamma = axial part of M (twice)."""
        M = np.asarray(M, dtype=float)
        w = vorticity_of_linear(M)
        Zm = M + ka * np.eye(3)
        return cls.from_functions(lambda p: p, lambda p: p @ M.T, lambda p: p @ Zm.T,
                                  lambda p: np.broadcast_to(w, p.shape), n, extent)


def vorticity_of_linear(M: np.ndarray) -> np.ndarray:
    """curl of x -> M x."""
    M = np.asarray(M, dtype=float)
    return np.array([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])


def linear_css_matrix(rng: np.random.Generator | None = None, swirl: float | None = None) -> np.ndarray:
    """A trace-free matrix M with M w = w for w = curl(M x).

    Such M give exact profiles (and the exact Eulerian flows v = M x / |t|).
    Built as diag(1, s, -1 - s) plus the rotation with axial vector w = (w1, 0, 0).
    """
    rng = np.random.default_rng() if rng is None else rng
    s = rng.uniform(-1.5, 0.5)
    w1 = rng.uniform(0.2, 2.0) if swirl is None else swirl
    W = 0.5 * np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -w1], [0.0, w1, 0.0]])
    M = np.diag([1.0, s, -1.0 - s]) + W
    Q = _random_rotation(rng)
    return Q @ M @ Q.T


@dataclass
class CssResidual:
    """Pointwise residual fields of the five profile equations."""

    labels: np.ndarray        # (3, N, N, N): L_Z xi - zeta - ka xi
    transport: np.ndarray     # (3, N, N, N): L_Z Gamma - (2 ka - 1) Gamma, axial
    closed: np.ndarray        # (N, N, N): d Gamma
    vorticity: np.ndarray     # (3, N, N, N): sum_A d zeta^A ^ d xi^A - Gamma, axial
    volume: np.ndarray        # (N, N, N): eps_ABC d zeta^A ^ d xi^B ^ d xi^C

    NAMES = ("labels", "transport", "closed", "vorticity", "volume")

    def components(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in self.NAMES}

    def norms(self, trim: int = 0) -> dict[str, float]:
        """Max-norms, optionally ignoring ``trim`` boundary layers."""
        sl = (Ellipsis,) + (slice(trim, -trim if trim else None),) * 3
        return {k: float(np.max(np.abs(v[sl]), initial=0.0)) for k, v in self.components().items()}

    def max(self, trim: int = 0) -> float:
        return max(self.norms(trim).values())


def _check_labels(jxi: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    d = det3(jxi)
    if np.min(np.abs(d)) < tol:
        raise ValueError("label map xi has a degenerate Jacobian on the patch")
    return d


def css_residual(p: CssProfile, ka: float) -> CssResidual:
    """Residuals of the profile equations.

    Functions: L_Z f = Z . grad f.  For the 2-form with axial vector g the Lie
    derivative is (Z . grad) g - (g . grad) Z + g div Z.
    """
    h = p.spacing
    jxi = _box_jacobian(p.xi, h)
    jzeta = _box_jacobian(p.zeta, h)
    jZ = _box_jacobian(p.Z, h)
    jg = _box_jacobian(p.gamma, h)
    _check_labels(jxi)

    labels = np.einsum("Aa...,a...->A...", jxi, p.Z) - p.zeta - ka * p.xi
    div_Z = np.einsum("aa...->...", jZ)
    lie = (np.einsum("Aa...,a...->A...", jg, p.Z) - np.einsum("Aa...,a...->A...", jZ, p.gamma)
           + p.gamma * div_Z)
    transport = lie - (2 * ka - 1) * p.gamma
    closed = np.einsum("aa...->...", jg)

    cross = np.zeros_like(p.gamma)
    for c in range(3):
        a, b = (c + 1) % 3, (c + 2) % 3
        cross[c] = np.sum(jzeta[:, a] * jxi[:, b] - jzeta[:, b] * jxi[:, a], axis=0)
    vorticity = cross - p.gamma
    volume = 2.0 * np.einsum("Aa...,Aa...->...", cofactor3(jxi), jzeta)
    return CssResidual(labels, transport, closed, vorticity, volume)


def _two_form_tensor(g: np.ndarray) -> np.ndarray:
    """F_ab = eps_abc g^c."""
    F = np.zeros((3, 3) + g.shape[1:])
    F[0, 1], F[1, 2], F[2, 0] = g[2], g[0], g[1]
    return F - F.swapaxes(0, 1)


def css_residual_oracle(p: CssProfile, ka: float) -> CssResidual:
    """Same residuals from the coordinate tensor formula for Lie derivatives
    and the generic exterior algebra; shares only the difference stencils."""
    h = p.spacing
    jxi = _box_jacobian(p.xi, h)
    jzeta = _box_jacobian(p.zeta, h)
    jZ = _box_jacobian(p.Z, h)
    _check_labels(jxi)

    labels = np.zeros_like(p.xi)
    for A in range(3):
        df = Form.one_form(jxi[A])
        labels[A] = sum(p.Z[a] * df.coefficient((a,), p.Z[0]) for a in range(3))
    labels = labels - p.zeta - ka * p.xi

    F = _two_form_tensor(p.gamma)
    dF = np.stack([np.stack(np.gradient(F[a, b], h, edge_order=2)) for a in range(3) for b in range(3)])
    dF = dF.reshape((3, 3, 3) + F.shape[2:])          # dF[a, b, c] = d_c F_ab
    lie = (np.einsum("abc...,c...->ab...", dF, p.Z)
           + np.einsum("cb...,ca...->ab...", F, jZ)
           + np.einsum("ac...,cb...->ab...", F, jZ))
    lie = lie - (2 * ka - 1) * F
    transport = np.stack([lie[1, 2], lie[2, 0], lie[0, 1]])
    closed = dF[1, 2, 0] + dF[2, 0, 1] + dF[0, 1, 2]

    wedge = wedge_residual_full(p.zeta, np.zeros_like(p.xi), p.gamma, linear=np.zeros((3, 3)),
                                jacobians=(jzeta, jxi))
    return CssResidual(labels, transport, closed, wedge.two_form, wedge.three_form)


def css_rescale(p: CssProfile, alpha: float, ka: float) -> CssProfile:
    """Profile of the time-rescaled flow t -> alpha t, v -> v / alpha.

    In the induced flow this maps xi -> alpha**-ka xi, zeta -> alpha**-ka zeta,
    Gamma -> alpha**(-2 ka) Gamma and leaves Z unchanged, so the five residuals
    scale by alpha**-ka, alpha**(-2 ka) (three of them) and alpha**(-3 ka).
    """
    c = alpha ** (-ka)
    return CssProfile(c * p.xi, c * p.zeta, p.Z.copy(), c * c * p.gamma, p.spacing, p.origin)


RESCALE_POWERS = {"labels": 1, "transport": 2, "closed": 2, "vorticity": 2, "volume": 3}


# -- Eulerian residual ------------------------------------------------------------------


@dataclass
class EulerianJet:
    """First-order jet of (v, omega) at P sample points.

    v, omega: (3, P); dv, domega: (3, 3, P) with [A, a] = d_a f^A;
    omega_t: (3, P) partial time derivative at fixed x.
    """

    v: np.ndarray
    dv: np.ndarray
    omega: np.ndarray
    domega: np.ndarray
    omega_t: np.ndarray


def eulerian_residual(jet: EulerianJet) -> dict[str, np.ndarray]:
    """Residuals of the vorticity form of incompressible Euler.

    (d_t + v.grad) omega - (omega.grad) v + omega div v, div omega,
    curl v - omega and div v.
    """
    div_v = np.einsum("aa...->...", jet.dv)
    vort = (jet.omega_t + np.einsum("Aa...,a...->A...", jet.domega, jet.v)
            - np.einsum("Aa...,a...->A...", jet.dv, jet.omega) + jet.omega * div_v)
    curl_v = np.stack([jet.dv[2, 1] - jet.dv[1, 2], jet.dv[0, 2] - jet.dv[2, 0], jet.dv[1, 0] - jet.dv[0, 1]])
    return {
        "vorticity": vort,
        "div_omega": np.einsum("aa...->...", jet.domega),
        "curl": curl_v - jet.omega,
        "div_v": div_v,
    }


def residual_norms(res: dict[str, np.ndarray]) -> dict[str, float]:
    return {k: float(np.max(np.abs(v), initial=0.0)) for k, v in res.items()}


_D4 = (np.array([1.0, -8.0, 8.0, -1.0]) / 12.0, np.array([-2, -1, 1, 2]))
_D6 = (np.array([-1.0, 9.0, -45.0, 45.0, -9.0, 1.0]) / 60.0, np.array([-3, -2, -1, 1, 2, 3]))


def _central4(f: Callable[[float], np.ndarray], h: float) -> np.ndarray:
    w, s = _D4
    return sum(wi * f(si * h) for wi, si in zip(w, s)) / h


def jet_from_callables(v: FlowCallable, t: float, points: np.ndarray,
                       omega: FlowCallable | None = None, h: float = 1e-3, ht: float = 1e-3) -> EulerianJet:
    """Jet by fourth-order central differences of callables (t, (P, 3)) -> (P, 3).

    Without ``omega`` the vorticity is taken as curl v, and its derivatives
    are differenced from that.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    eye = np.eye(3)

    def spatial(f):
        return np.stack([_central4(lambda d, a=a: f(t, points + d * eye[a]).T, h) for a in range(3)], axis=1)

    if omega is None:
        def omega(tt, pts):
            dv_ = np.stack([_central4(lambda d, a=a: v(tt, pts + d * eye[a]).T, h) for a in range(3)], axis=1)
            return np.stack([dv_[2, 1] - dv_[1, 2], dv_[0, 2] - dv_[2, 0], dv_[1, 0] - dv_[0, 1]]).T

    vv = np.asarray(v(t, points), dtype=float).T
    ww = np.asarray(omega(t, points), dtype=float).T
    return EulerianJet(
        v=vv, dv=spatial(v), omega=ww, domega=spatial(omega),
        omega_t=_central4(lambda d: np.asarray(omega(t + d, points), dtype=float).T, ht),
    )


def jet_from_lagrangian(positions_jacobian: np.ndarray, v: np.ndarray, v_jacobian: np.ndarray,
                        omega: np.ndarray, omega_jacobian: np.ndarray, omega_rate: np.ndarray) -> EulerianJet:
    """Eulerian jet from label-space data.

    ``positions_jacobian`` is d x / d lambda, the other jacobians are label
    derivatives, ``omega_rate`` is the derivative of omega along particle
    paths.  Trailing axes are flattened into samples.
    """
    P = v[0].size
    jx = positions_jacobian.reshape(3, 3, P)
    inv = np.linalg.inv(np.moveaxis(jx, -1, 0))                       # (P, 3, 3)
    dv = np.einsum("PAb,Pba->AaP", np.moveaxis(v_jacobian.reshape(3, 3, P), -1, 0), inv)
    dw = np.einsum("PAb,Pba->AaP", np.moveaxis(omega_jacobian.reshape(3, 3, P), -1, 0), inv)
    vv, ww = v.reshape(3, P), omega.reshape(3, P)
    omega_t = omega_rate.reshape(3, P) - np.einsum("AaP,aP->AP", dw, vv)
    return EulerianJet(vv, dv, ww, dw, omega_t)


@dataclass
class InducedSamples:
    """Eulerian samples of the flow induced by a profile at one time."""

    t: float
    x: np.ndarray            # (3, P)
    jet: EulerianJet
    residual: dict[str, float]
    scaled_residual: dict[str, float]


def induced_flow(p: CssProfile, ka: float, t: float, trim: int = 1) -> tuple[np.ndarray, EulerianJet]:
    """Positions and exact Eulerian jet of x = |t|^ka xi, v = |t|^(ka-1) zeta,
    Omega = |t|^(2 ka - 1) Gamma, with d_t + Z/|t| as material derivative."""
    if t >= 0:
        raise ValueError("the induced flow lives on t < 0")
    h = p.spacing
    sl = (Ellipsis,) + (slice(trim, -trim if trim else None),) * 3
    jxi = _box_jacobian(p.xi, h)
    jzeta = _box_jacobian(p.zeta, h)
    d = _check_labels(jxi)
    W = np.einsum("Aa...,a...->A...", jxi, p.gamma) / d               # Eulerian vorticity at |t| = 1
    jW = _box_jacobian(W, h)
    rate = W + np.einsum("Aa...,a...->A...", jW, p.Z)                 # |t|^2 * material derivative

    tau = abs(t)
    flat = lambda a, lead: a[sl].reshape(lead + (-1,))
    P = flat(p.xi, (3,)).shape[-1]
    inv = np.linalg.inv(np.moveaxis(flat(jxi, (3, 3)), -1, 0))
    dv = np.einsum("PAb,Pba->AaP", np.moveaxis(flat(jzeta, (3, 3)), -1, 0), inv) / tau
    dw = np.einsum("PAb,Pba->AaP", np.moveaxis(flat(jW, (3, 3)), -1, 0), inv) * tau ** (-1 - ka)
    v = flat(p.zeta, (3,)) * tau ** (ka - 1)
    w = flat(W, (3,)) / tau
    omega_t = flat(rate, (3,)) / tau ** 2 - np.einsum("AaP,aP->AP", dw, v)
    x = flat(p.xi, (3,)) * tau ** ka
    assert x.shape[-1] == P
    return x, EulerianJet(v, dv, w, dw, omega_t)


# each residual component carries a definite power of |t|; multiplying it out
# makes samples at different times comparable
_EULER_TIME_POWERS = {"vorticity": 2.0, "div_omega": None, "curl": 1.0, "div_v": 1.0}


def induce_and_check(p: CssProfile, ka: float, times: Sequence[float], trim: int = 1) -> list[InducedSamples]:
    """Evaluate the Eulerian residual of the induced flow at each time."""
    out = []
    for t in times:
        x, jet = induced_flow(p, ka, t, trim)
        res = residual_norms(eulerian_residual(jet))
        tau = abs(t)
        scaled = {}
        for k, val in res.items():
            power = _EULER_TIME_POWERS[k]
            scaled[k] = val * (tau ** power if power is not None else tau ** (1 + ka))
        out.append(InducedSamples(float(t), x, jet, res, scaled))
    return out


def induced_velocity(p: CssProfile, ka: float, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Sample positions and velocities (both (3, P)) of the induced flow at time t."""
    tau = abs(t)
    return p.xi.reshape(3, -1) * tau ** ka, p.zeta.reshape(3, -1) * tau ** (ka - 1)


# -- fixed point eigenvalues ------------------------------------------------------------


def fixed_point_eigen(q: float, ka: float) -> tuple[float, float]:
    """(lambda_1, lambda_2 lambda_3) of the return map linearised at a fixed
    point with nonzero vorticity: q**(-1-ka) and q**(1-2ka)."""
    if not (q > 0 and ka > 0):
        raise ValueError("need q > 0 and ka > 0")
    return q ** (-1.0 - ka), q ** (1.0 - 2.0 * ka)


def second_compound(A: np.ndarray) -> np.ndarray:
    """Matrix of A acting on 2-vectors, basis (e1^e2, e1^e3, e2^e3)."""
    pairs = ((0, 1), (0, 2), (1, 2))
    C = np.empty((3, 3), dtype=np.result_type(A, float))
    for r, (i, j) in enumerate(pairs):
        for c, (k, l) in enumerate(pairs):
            C[r, c] = A[i, k] * A[j, l] - A[i, l] * A[j, k]
    return C


def charpoly(A: np.ndarray) -> np.ndarray:
    """Coefficients of det(z I - A), highest power first."""
    return np.poly(np.asarray(A))


def _poly_defect(coef: np.ndarray, z: complex) -> float:
    """|p(z)| relative to the sum of the absolute term sizes."""
    terms = coef * z ** np.arange(len(coef) - 1, -1, -1)
    return float(abs(terms.sum()) / max(np.sum(np.abs(terms)), 1e-300))


def charpoly_identity_defect(A: np.ndarray, mu: complex) -> float:
    """Relative defect of p_{A^A}(mu) det A = -mu^3 p_A(det A / mu)."""
    D = np.linalg.det(A)
    lhs = np.polyval(charpoly(second_compound(A)), mu) * D
    rhs = -mu ** 3 * np.polyval(charpoly(A), D / mu)
    scale = abs(D) * np.sum(np.abs(charpoly(second_compound(A))) * abs(mu) ** np.arange(3, -1, -1))
    return float(abs(lhs - rhs) / max(scale, 1e-300))


def _random_rotation(rng: np.random.Generator) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((3, 3)))
    Q = Q * np.sign(np.diag(R))
    return Q if np.linalg.det(Q) > 0 else -Q


def constructed_fixed_point_matrix(q: float, ka: float, rng: np.random.Generator,
                                   complex_pair: bool | None = None, cond: float = 10.0) -> np.ndarray:
    """Random real A with det A = q**(-3 ka) and q**(1 - 2 ka) an eigenvalue of A^A.

    The pair (lambda_2, lambda_3) with the prescribed product is either real or
    complex conjugate; the remaining eigenvalue follows from the determinant.
    """
    mu = q ** (1 - 2 * ka)
    lam1 = q ** (-3 * ka) / mu
    if complex_pair is None:
        complex_pair = bool(rng.integers(2))
    r = math.sqrt(mu)
    if complex_pair:
        th = rng.uniform(0.1, math.pi - 0.1)
        block = r * np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
    else:
        s = rng.uniform(-1.0, 1.0)
        block = np.diag([r * math.exp(s), r * math.exp(-s)]) * rng.choice([-1.0, 1.0])
    core = np.zeros((3, 3))
    core[0, 0] = lam1
    core[1:, 1:] = block
    U, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    V, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    P = U @ np.diag(np.geomspace(1.0, cond, 3)) @ V
    return P @ core @ np.linalg.inv(P)


def predicted_root_defect(A: np.ndarray, q: float, ka: float) -> float:
    """Relative |p_A(q**(-1-ka))|, zero when the predicted eigenvalue is a root."""
    return _poly_defect(charpoly(A), fixed_point_eigen(q, ka)[0])


def implied_ka(eigs: Sequence[complex], q: float) -> float:
    """ka solving |lambda_2 lambda_3| = q**(1 - 2 ka)."""
    if not 0 < q < 1:
        raise ValueError("need 0 < q < 1")
    prod = abs(complex(eigs[1]) * complex(eigs[2]))
    return 0.5 * (1.0 - math.log(prod) / math.log(q))


def ka_lower_bound_holds(ka: float | Fraction) -> bool:
    """Strict ka > 1/2."""
    return Fraction(ka) > Fraction(1, 2) if isinstance(ka, (int, Fraction)) else ka > 0.5


def ka_bound_predicate(eigs: Sequence[complex], q: float) -> bool:
    """True iff all eigenvalues are repelling and the implied ka exceeds 1/2."""
    if not 0 < q < 1:
        raise ValueError("need 0 < q < 1")
    repelling = all(abs(complex(e)) > 1 for e in eigs)
    return repelling and ka_lower_bound_holds(implied_ka(eigs, q))


# -- elliptic and transport modes -------------------------------------------------------

_X, _Y, _Zs = sp.symbols("x y z", real=True)


@lru_cache(maxsize=None)
def solid_harmonic(l: int, k: int) -> sp.Expr:
    """Real solid harmonic r^l Y_lk as a polynomial in x, y, z.

    Unnormalised and without the Condon-Shortley phase: the associated
    Legendre part is d^|k| P_l / du^|k|, the azimuthal part Re (x + iy)^k for
    k >= 0 and Im (x + iy)^|k| for k < 0.
    """
    if l < 0 or abs(k) > l:
        raise ValueError(f"need |k| <= l, got l={l}, k={k}")
    m = abs(k)
    u = sp.Symbol("u")
    r2 = _X ** 2 + _Y ** 2 + _Zs ** 2
    dP = sp.Poly(sp.diff(sp.legendre(l, u), u, m), u)
    radial = sum(c * _Zs ** j * r2 ** ((l - m - j) // 2) for (j,), c in dP.terms())
    az = sp.expand((_X + sp.I * _Y) ** m)
    az = sp.re(az) if k >= 0 else sp.im(az)
    return sp.expand(radial * az)


class HarmonicMode:
    """Gradient field of the decaying harmonic |x|^(-l-1) Y_lk.

    Divergence- and curl-free away from the origin; homogeneous of degree -l-2.
    """

    def __init__(self, l: int, k: int) -> None:
        if l == 0:
            raise ValueError("no l = 0 mode: a monopole carries net flux")
        self.l, self.k = l, k
        r2 = _X ** 2 + _Y ** 2 + _Zs ** 2
        self.potential_expr = solid_harmonic(l, k) / r2 ** sp.Rational(2 * l + 1, 2)
        grad = [sp.diff(self.potential_expr, s) for s in (_X, _Y, _Zs)]
        hess = [[sp.diff(g, s) for s in (_X, _Y, _Zs)] for g in grad]
        args = (_X, _Y, _Zs)
        self._phi = sp.lambdify(args, self.potential_expr, "numpy")
        self._grad = sp.lambdify(args, grad, "numpy")
        self._hess = sp.lambdify(args, hess, "numpy")

    @staticmethod
    def _split(points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return p[:, 0], p[:, 1], p[:, 2]

    def potential(self, points: np.ndarray) -> np.ndarray:
        x = self._split(points)
        return np.broadcast_to(self._phi(*x), x[0].shape).astype(float)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        x = self._split(points)
        return np.stack([np.broadcast_to(c, x[0].shape) for c in self._grad(*x)], axis=-1).astype(float)

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        """(P, 3, 3) with [P, A, a] = d_a v^A."""
        x = self._split(points)
        rows = [np.stack([np.broadcast_to(c, x[0].shape) for c in row], axis=-1) for row in self._hess(*x)]
        return np.stack(rows, axis=1).astype(float)


@lru_cache(maxsize=None)
def elliptic_mode_field(l: int, k: int) -> HarmonicMode:
    return HarmonicMode(l, k)


def elliptic_velocity_exponents(l: int, ka: float) -> tuple[float, int]:
    """(power of |t|, power of |x|) of the l-th elliptic mode in the velocity expansion."""
    return ka * (l + 3) - 1.0, -l - 2


@dataclass
class TransportReport:
    divergence: float          # max |div(|x|^p T)| * |x|^(1-p), p = 1 - 1/ka
    periodicity: float         # max |T(q^ka x) - T(x)|
    magnitude: float           # max |T| on the samples
    vanishes: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _transport_samples(n_radial: int, n_angular: int, log_period: float) -> np.ndarray:
    s = np.linspace(0.0, log_period, n_radial, endpoint=False)
    th = np.linspace(0.35, math.pi - 0.35, n_angular)
    ph = np.linspace(0.0, 2 * math.pi, 2 * n_angular, endpoint=False)
    S, TH, PH = np.meshgrid(s, th, ph, indexing="ij")
    r = np.exp(S)
    return np.stack([r * np.sin(TH) * np.cos(PH), r * np.sin(TH) * np.sin(PH), r * np.cos(TH)], axis=-1).reshape(-1, 3)


def transport_mode_check(T: VectorCallable, ka: float, q1: float | None = None, *, n_radial: int = 4,
                         n_angular: int = 8, rel_step: float = 2e-3, period_tol: float = 1e-8,
                         zero_tol: float = 1e-14) -> TransportReport:
    """Check div(|x|^(1 - 1/ka) T) = 0 and log-radial periodicity of T.

    For a discrete group generated by q1 the samples cover one log-radial
    period ka * log q1; for the continuous group T must be homogeneous of
    degree zero, which is tested at several dilations.  Raises ValueError when
    T is not periodic.
    """
    p = 1.0 - 1.0 / ka
    if q1 is None:
        period, dilations = 1.0, [math.exp(0.37), math.exp(1.3), 2.0]
    else:
        if not q1 > 1:
            raise ValueError("discrete generator must exceed 1")
        period = ka * math.log(q1)
        dilations = [q1 ** ka]
    pts = _transport_samples(n_radial, n_angular, period)
    Tv = np.asarray(T(pts), dtype=float)
    periodicity = max(float(np.max(np.abs(np.asarray(T(c * pts)) - Tv))) for c in dilations)
    if periodicity > period_tol * max(1.0, float(np.max(np.abs(Tv)))):
        raise ValueError(f"transport field is not log-radially periodic (defect {periodicity:.2e})")

    r = np.linalg.norm(pts, axis=1)
    hs = rel_step * r

    def flux(x):
        return np.linalg.norm(x, axis=1)[:, None] ** p * np.asarray(T(x), dtype=float)

    div = np.zeros(len(pts))
    w, sh = _D6
    for a in range(3):
        e = np.zeros(3)
        e[a] = 1.0
        div += sum(wi * flux(pts + (si * hs)[:, None] * e)[:, a] for wi, si in zip(w, sh)) / hs
    mag = float(np.max(np.linalg.norm(Tv, axis=1)))
    return TransportReport(float(np.max(np.abs(div) * r ** (1 - p))), periodicity, mag, mag <= zero_tol)


def final_velocity(T: VectorCallable, ka: float) -> VectorCallable:
    """x -> |x|^(1 - 1/ka) T(x), the pointwise limit of the velocity at the blowup time."""
    def f(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.linalg.norm(pts, axis=1)[:, None] ** (1 - 1 / ka) * np.asarray(T(pts), dtype=float)
    return f


# -- growth bounds and energy -----------------------------------------------------------


def _inner_scale(t: float, x: np.ndarray, ka: float) -> np.ndarray:
    return np.maximum(abs(t) ** ka, np.linalg.norm(x, axis=-1))


def global_bound_diagnostics(v: FlowCallable, times: Iterable[float], points: np.ndarray, ka: float,
                             delta: float | None = None, omega: FlowCallable | None = None,
                             dv: FlowCallable | None = None, h: float = 1e-4,
                             flow_pairs: Sequence[tuple[float, float]] = (),
                             flow_points_fn: Callable | None = None, flow_threshold: float = 2.0) -> dict:
    """Sup over samples of |quantity| / (its conjectured bound).

    With rho = max(|t|^ka, |x|):
      vorticity       |omega|     / rho^(-1/ka)
      velocity_k0     |v|         / rho^(1 - 1/ka)
      velocity_k1     |grad v|    / rho^(-1/ka)
    and, when ``delta`` is given, the sublinear bounds
      sublinear_k0/k1 |grad^k v|  / (|t|^(ka delta - 1) rho^(1 - k - delta)).
    ``flow_pairs`` (s, t) with t < s < 0 add the flow-map displacement and
    Jacobian ratios at points with |t|^-ka |x| above ``flow_threshold``.
    Ratios are reported, not asserted.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    eye = np.eye(3)
    report = {"velocity_k0": 0.0, "velocity_k1": 0.0, "vorticity": 0.0}
    if delta is not None:
        report.update(sublinear_k0=0.0, sublinear_k1=0.0)
    for t in times:
        rho = _inner_scale(t, points, ka)
        vv = np.asarray(v(t, points), dtype=float)
        if dv is None:
            J = np.stack([_central4(lambda d, a=a: v(t, points + d * eye[a]), h) for a in range(3)], axis=-1)
        else:
            J = np.asarray(dv(t, points), dtype=float)
        w = (np.asarray(omega(t, points), dtype=float) if omega is not None else
             np.stack([J[:, 2, 1] - J[:, 1, 2], J[:, 0, 2] - J[:, 2, 0], J[:, 1, 0] - J[:, 0, 1]], axis=-1))
        nv = np.linalg.norm(vv, axis=-1)
        nJ = np.linalg.norm(J, axis=(-2, -1))
        report["velocity_k0"] = max(report["velocity_k0"], float(np.max(nv / rho ** (1 - 1 / ka))))
        report["velocity_k1"] = max(report["velocity_k1"], float(np.max(nJ / rho ** (-1 / ka))))
        report["vorticity"] = max(report["vorticity"], float(np.max(np.linalg.norm(w, axis=-1) / rho ** (-1 / ka))))
        if delta is not None:
            pre = abs(t) ** (ka * delta - 1)
            report["sublinear_k0"] = max(report["sublinear_k0"], float(np.max(nv / (pre * rho ** (1 - delta)))))
            report["sublinear_k1"] = max(report["sublinear_k1"], float(np.max(nJ / (pre * rho ** (-delta)))))
    if flow_pairs:
        if delta is None:
            raise ValueError("flow-estimate ratios need the decay exponent")
        if flow_points_fn is None:
            from .dynamics import flow_points as flow_points_fn
        disp = jac = 0.0
        for s, t in flow_pairs:
            if not t < s < 0:
                raise ValueError("flow pairs need t < s < 0")
            far = points[np.linalg.norm(points, axis=1) * abs(t) ** (-ka) > flow_threshold]
            if not len(far):
                continue
            zeta = (abs(t) ** (-ka) * np.linalg.norm(far, axis=1)) ** (-delta)
            moved = flow_points_fn(v, s, t, far)
            disp = max(disp, float(np.max(np.linalg.norm(moved - far, axis=1) / (zeta * np.linalg.norm(far, axis=1)))))
            hh = 1e-4 * np.maximum(1.0, np.linalg.norm(far, axis=1))
            cols = [(flow_points_fn(v, s, t, far + hh[:, None] * eye[a]) - flow_points_fn(v, s, t, far - hh[:, None] * eye[a]))
                    / (2 * hh[:, None]) for a in range(3)]
            Jf = np.stack(cols, axis=-1) - eye
            jac = max(jac, float(np.max(np.linalg.norm(Jf, axis=(-2, -1)) / zeta)))
        report.update(flow_displacement=disp, flow_jacobian=jac)
    return report


def energy_predicate(ka) -> tuple[float | Fraction, bool]:
    """Exponent B = 5 - 2/ka of the ball-energy bound and whether B > 0.

    Exact for int, Fraction or decimal-string input.
    """
    if isinstance(ka, str):
        ka = Fraction(ka)
    if isinstance(ka, (int, Fraction)):
        if ka <= 0:
            raise ValueError("need ka > 0")
        B = 5 - Fraction(2) / Fraction(ka)
        return B, B > 0
    if not ka > 0:
        raise ValueError("need ka > 0")
    B = 5.0 - 2.0 / ka
    return B, B > 0


def energy_bound_terms(ka: float, t: float, r: float) -> tuple[float, float]:
    """(|t|^(B ka), r^B / B): inner-core and outer-shell energy bounds."""
    B, ok = energy_predicate(ka)
    if not ok:
        raise ValueError("energy bound needs 5 - 2/ka > 0")
    B = float(B)
    return abs(t) ** (B * ka), r ** B / B


def ball_energy(v: VectorCallable, r: float, t: float | None = None, order: int = 24) -> float:
    """Gauss product quadrature of |v|^2 over the ball |x| < r.

    ``v`` maps (P, 3) -> (P, 3); with ``t`` given it is called as v(t, points).
    """
    xr, wr = np.polynomial.legendre.leggauss(order)
    xc, wc = np.polynomial.legendre.leggauss(order)
    nph = 2 * order
    rad = 0.5 * r * (xr + 1)
    wrad = 0.5 * r * wr * rad ** 2
    ph = 2 * math.pi * np.arange(nph) / nph
    R, C, PH = np.meshgrid(rad, xc, ph, indexing="ij")
    S = np.sqrt(1 - C ** 2)
    pts = np.stack([R * S * np.cos(PH), R * S * np.sin(PH), R * C], axis=-1).reshape(-1, 3)
    vals = np.asarray(v(pts) if t is None else v(t, pts), dtype=float)
    dens = np.sum(vals ** 2, axis=-1).reshape(R.shape)
    weights = wrad[:, None, None] * wc[None, :, None] * (2 * math.pi / nph)
    return float(np.sum(dens * weights))


# -- expansion bookkeeping --------------------------------------------------------------

FORCED_ZERO, ELLIPTIC, TRANSPORT, GENERIC = "forced-zero", "elliptic", "transport", "generic"


def expansion_exponent(m: int, n: int, ka: float) -> float:
    """Exponent of z = |x|^(-1/ka) |t| in the (m, n) term of the expansion at infinity."""
    return ka * m + n


@dataclass
class ModeTable:
    """Status of the expansion coefficients c[v]_mn and c[omega]_mn, 0 <= m, n <= K.

    Zero at (0, 0) in both families, c[v]_m0 = 0 for m <= 3, c[omega]_m0 = 0
    for all m; c[v]_m0 with m >= 4 are elliptic (l = m - 3); the (0, 1) slots
    carry the transport mode; everything else is generic.
    """

    K: int
    ka: float | None = None
    coefficients: dict = field(default_factory=dict)

    FAMILIES = ("v", "omega")

    def flag(self, family: str, m: int, n: int) -> str:
        if family not in self.FAMILIES:
            raise ValueError(f"unknown family {family!r}")
        if not (0 <= m <= self.K and 0 <= n <= self.K):
            raise IndexError((m, n))
        if n == 0:
            if family == "omega" or m <= 3:
                return FORCED_ZERO
            return ELLIPTIC
        if (m, n) == (0, 1):
            return TRANSPORT
        return GENERIC

    def grid(self, family: str) -> list[list[str]]:
        return [[self.flag(family, m, n) for n in range(self.K + 1)] for m in range(self.K + 1)]

    @staticmethod
    def elliptic_degree(m: int) -> int:
        return m - 3

    def accept(self, family: str, m: int, n: int, coefficient: FlowCallable, q: float, ka: float,
               times: Sequence[float], points: np.ndarray, tol: float = 1e-8) -> float:
        """Store a coefficient field after checking c(qt, x) = c(t, q^ka x) = c(t, x).

        Forced-zero slots only accept the zero field.  Returns the periodicity defect.
        """
        flag = self.flag(family, m, n)
        points = np.atleast_2d(points)
        defect = 0.0
        scale = 0.0
        for t in times:
            c0 = np.asarray(coefficient(t, points), dtype=float)
            scale = max(scale, float(np.max(np.abs(c0))))
            defect = max(defect,
                         float(np.max(np.abs(np.asarray(coefficient(q * t, points)) - c0))),
                         float(np.max(np.abs(np.asarray(coefficient(t, q ** ka * points)) - c0))))
        if flag == FORCED_ZERO and scale > tol:
            raise ValueError(f"c[{family}]_{m}{n} is forced to vanish")
        if defect > tol * max(1.0, scale):
            raise ValueError(f"c[{family}]_{m}{n} is not doubly periodic (defect {defect:.2e})")
        self.coefficients[(family, m, n)] = coefficient
        return defect

    def to_dict(self) -> dict:
        out = {"K": self.K, "ka": self.ka}
        for fam in self.FAMILIES:
            out[fam] = self.grid(fam)
        if self.ka is not None:
            out["exponents"] = [[expansion_exponent(m, n, self.ka) for n in range(self.K + 1)]
                                for m in range(self.K + 1)]
        return out

    def render(self) -> str:
        sym = {FORCED_ZERO: ".", ELLIPTIC: "E", TRANSPORT: "T", GENERIC: "*"}
        lines = []
        for fam in self.FAMILIES:
            lines.append(f"c[{fam}]  (rows m, columns n)")
            for m, row in enumerate(self.grid(fam)):
                lines.append(f"  {m:2d}  " + " ".join(sym[f] for f in row))
        return "\n".join(lines)


# -- stabilizer catalog -----------------------------------------------------------------


@dataclass(frozen=True)
class GroupElement:
    """((a, b), sigma, R): time scale, space scale, reflection sign, rotation."""

    a: float
    b: float
    sigma: int
    R: np.ndarray

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        return GroupElement(self.a * other.a, self.b * other.b, self.sigma * other.sigma, self.R @ other.R)

    def inverse(self) -> "GroupElement":
        return GroupElement(1.0 / self.a, 1.0 / self.b, self.sigma, self.R.T)

    @classmethod
    def identity(cls) -> "GroupElement":
        return cls(1.0, 1.0, 1, np.eye(3))

    def distance(self, other: "GroupElement") -> float:
        return max(abs(math.log(self.a / other.a)), abs(math.log(self.b / other.b)),
                   abs(self.sigma - other.sigma), float(np.max(np.abs(self.R - other.R))))


def act(g: GroupElement, v: FlowCallable) -> FlowCallable:
    """(g v)(t, x) = (a/b) sigma R v(a t, b sigma R^-1 x) for v: (t, (P, 3)) -> (P, 3)."""
    a, b, s, R = g.a, g.b, g.sigma, np.asarray(g.R)

    def gv(t, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inner = b * s * pts @ R          # rows are (R^-1 x)^T since R^-1 = R^T
        return (a / b) * s * np.asarray(v(a * t, inner), dtype=float) @ R.T
    return gv


def _rot2(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


_FLIP = np.diag([1.0, -1.0])

_ROWS = {
    1: dict(h1=None, h2=None, h3=None, rule="none"),
    2: dict(h1=None, h2="full", h3="O2", rule="sigma = det r"),
    3: dict(h1="continuous", h2=None, h3="SO2", rule="mu log a = angle(r)"),
    4: dict(h1="discrete", h2="full", h3=None, rule="(-1)^n = sigma"),
    5: dict(h1="discrete", h2=None, h3="O2", rule="(-1)^n = det r"),
    6: dict(h1="discrete", h2="full", h3="O2", rule="(-1)^n = sigma det r"),
    7: dict(h1="discrete", h2="full", h3="O2", rule="(-1)^n = sigma = det r"),
}


@dataclass(frozen=True)
class SubgroupDescriptor:
    """Subgroup H of G = (R+ x R+) x {+-1} x SO(3) given by its projections and a fiber rule.

    h1: 'continuous' (a -> (a, a^alpha)) or 'discrete' (n -> (a1^n, a1^(n alpha)));
    h2: 'trivial' or 'full'; h3: 'trivial', 'SO2' (1 + r) or 'O2' (det r + r);
    row: which defining equation ties the projections together (1 = none).
    """

    row: int
    h1: str = "continuous"
    h2: str = "trivial"
    h3: str = "trivial"
    alpha: float = 0.6
    a1: float = 2.0
    mu: float | None = None

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.row not in _ROWS:
            raise ValueError(f"no catalog row {self.row}")
        if self.h1 not in ("continuous", "discrete") or self.h2 not in ("trivial", "full") \
                or self.h3 not in ("trivial", "SO2", "O2"):
            raise ValueError("unknown projection type")
        need = _ROWS[self.row]
        for key in ("h1", "h2", "h3"):
            if need[key] is not None and getattr(self, key) != need[key]:
                raise ValueError(f"row {self.row} requires {key} = {need[key]}")
        if self.alpha <= 0 or self.a1 <= 1:
            raise ValueError("need alpha > 0 and a1 > 1")
        if self.row == 3 and not self.mu:
            raise ValueError("row 3 needs a nonzero mu")

    @property
    def rule(self) -> str:
        return _ROWS[self.row]["rule"]

    @property
    def dimension(self) -> int:
        return (self.h1 == "continuous") + (self.h3 != "trivial") - (self.row == 3)

    @property
    def expected_no_swirl(self) -> bool:
        if self.row == 1:
            return self.h2 == "full" and self.h3 == "O2"
        return self.row in (2, 6)

    def label(self) -> str:
        extra = f", mu={self.mu}" if self.mu else ""
        return f"row {self.row}: H1={self.h1}, H2={self.h2}, H3={self.h3} [{self.rule}{extra}]"

    # -- elements

    def _embed(self, r: np.ndarray) -> np.ndarray:
        R = np.eye(3)
        if self.h3 != "trivial":
            R[1:, 1:] = r
            R[0, 0] = np.linalg.det(r) if self.h3 == "O2" else 1.0
        return R

    def _scales(self, p: float) -> tuple[float, float]:
        a = self.a1 ** p if self.h1 == "discrete" else p
        return a, a ** self.alpha

    def element(self, p: float, sigma: int, r: np.ndarray) -> GroupElement:
        """Element from parameters (a or n, sigma, r); no membership check."""
        a, b = self._scales(p)
        return GroupElement(a, b, int(sigma), self._embed(np.asarray(r, dtype=float)))

    def _random_r(self, rng, det: int | None = None) -> np.ndarray:
        if self.h3 == "trivial":
            return np.eye(2)
        r = _rot2(rng.uniform(0, 2 * math.pi))
        if self.h3 == "O2":
            flip = rng.integers(2) if det is None else det < 0
            if flip:
                r = r @ _FLIP
        elif det == -1:
            raise ValueError("SO(2) has no reflections")
        return r

    def sample(self, rng: np.random.Generator) -> GroupElement:
        if self.h1 == "discrete":
            p = int(rng.integers(-3, 4))
            par = 1 if p % 2 == 0 else -1
        else:
            p = float(np.exp(rng.normal(0, 0.7)))
            par = None
        sig = 1 if self.h2 == "trivial" else int(rng.choice([-1, 1]))
        row = self.row
        if row == 1:
            r = self._random_r(rng)
        elif row == 2:
            r = self._random_r(rng)
            sig = int(round(np.linalg.det(r)))
        elif row == 3:
            r = _rot2(self.mu * math.log(p))
        elif row == 4:
            r, sig = self._random_r(rng), par
        elif row == 5:
            r = self._random_r(rng, det=par)
        elif row == 6:
            r = self._random_r(rng)
            sig = par * int(round(np.linalg.det(r)))
        else:
            sig, r = par, self._random_r(rng, det=par)
        return self.element(p, sig, r)

    def contains(self, g: GroupElement, tol: float = 1e-9) -> bool:
        if g.a <= 0 or g.b <= 0 or g.sigma not in (-1, 1):
            return False
        if abs(math.log(g.b) - self.alpha * math.log(g.a)) > tol:
            return False
        n = None
        if self.h1 == "discrete":
            x = math.log(g.a) / math.log(self.a1)
            n = round(x)
            if abs(x - n) > tol:
                return False
        if self.h2 == "trivial" and g.sigma != 1:
            return False
        R = np.asarray(g.R)
        if np.max(np.abs(R @ R.T - np.eye(3))) > tol or abs(np.linalg.det(R) - 1) > tol:
            return False
        if np.max(np.abs(R[0, 1:])) > tol or np.max(np.abs(R[1:, 0])) > tol:
            return False
        r = R[1:, 1:]
        det_r = int(round(np.linalg.det(r)))
        if self.h3 == "trivial" and np.max(np.abs(R - np.eye(3))) > tol:
            return False
        if self.h3 == "SO2" and (abs(R[0, 0] - 1) > tol or det_r != 1):
            return False
        if self.h3 == "O2" and abs(R[0, 0] - det_r) > tol:
            return False
        par = None if n is None else (1 if n % 2 == 0 else -1)
        row = self.row
        if row == 2:
            return g.sigma == det_r
        if row == 3:
            angle = math.atan2(r[1, 0], r[0, 0])
            d = (self.mu * math.log(g.a) - angle + math.pi) % (2 * math.pi) - math.pi
            return abs(d) <= tol
        if row == 4:
            return par == g.sigma
        if row == 5:
            return par == det_r
        if row == 6:
            return par == g.sigma * det_r
        if row == 7:
            return par == g.sigma == det_r
        return True


def swirl_free_probe(n_angles: int = 5) -> list[GroupElement]:
    """Elements (1, det r, det r + r) over rotations and reflections r."""
    out = []
    for ang in np.linspace(0.3, 2 * math.pi - 0.3, n_angles):
        for r in (_rot2(ang), _rot2(ang) @ _FLIP):
            R = np.eye(3)
            R[1:, 1:] = r
            d = int(round(np.linalg.det(r)))
            R[0, 0] = d
            out.append(GroupElement(1.0, 1.0, d, R))
    return out


def no_swirl(H: SubgroupDescriptor) -> bool:
    """Whether H contains the O(2) of elements (identity scaling, sigma = det r, det r + r)."""
    return all(H.contains(g) for g in swirl_free_probe())


def subgroup_catalog(alpha: float = 0.6, a1: float = 2.0, mu: float = 1.5) -> list[SubgroupDescriptor]:
    """All catalog families: the 12 direct products, then the fibered rows 2-7."""
    out = []
    for h1 in ("continuous", "discrete"):
        for h2 in ("trivial", "full"):
            for h3 in ("trivial", "SO2", "O2"):
                out.append(SubgroupDescriptor(1, h1, h2, h3, alpha, a1))
    for h1 in ("continuous", "discrete"):
        out.append(SubgroupDescriptor(2, h1, "full", "O2", alpha, a1))
    for h2 in ("trivial", "full"):
        out.append(SubgroupDescriptor(3, "continuous", h2, "SO2", alpha, a1, mu))
    for h3 in ("trivial", "SO2", "O2"):
        out.append(SubgroupDescriptor(4, "discrete", "full", h3, alpha, a1))
    for h2 in ("trivial", "full"):
        out.append(SubgroupDescriptor(5, "discrete", h2, "O2", alpha, a1))
    out.append(SubgroupDescriptor(6, "discrete", "full", "O2", alpha, a1))
    out.append(SubgroupDescriptor(7, "discrete", "full", "O2", alpha, a1))
    return out


def catalog_report(catalog: Sequence[SubgroupDescriptor] | None = None) -> list[dict]:
    catalog = subgroup_catalog() if catalog is None else catalog
    return [dict(row=H.row, h1=H.h1, h2=H.h2, h3=H.h3, rule=H.rule, dim=H.dimension,
                 no_swirl=no_swirl(H)) for H in catalog]


def report_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=float)

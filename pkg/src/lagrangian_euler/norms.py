"""Weighted Sobolev norms, the C^2 sup-norm, the velocity-domain ball and composition estimates.

Two settings are supported.  Torus fields (plain arrays) use the L^2 mean over
the torus and only unweighted terms, evaluated exactly by Parseval.  Decaying
fields sampled on a box (:class:`BoxField`) use true R^3 integrals with the
polynomial weights x^beta.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable

import numpy as np
import scipy.fft as sfft

from .fields import get_grid, grid_of, gradient, spectral_transform

MultiIndex = tuple[int, int, int]


@dataclass(frozen=True)
class SobolevParams:
    """Derivative order M >= 2 and weight order L >= 0."""

    M: int = 2
    L: int = 0

    def __post_init__(self) -> None:
        if int(self.M) != self.M or self.M < 2:
            raise ValueError(f"M must be an integer >= 2, got {self.M}")
        if int(self.L) != self.L or self.L < 0:
            raise ValueError(f"L must be an integer >= 0, got {self.L}")

    @classmethod
    def parse(cls, text: str) -> "SobolevParams":
        m, l = (int(s) for s in text.split(","))
        return cls(m, l)

    def index_pairs(self, weighted: bool = True) -> list[tuple[MultiIndex, MultiIndex]]:
        """All (alpha, beta) with |alpha| <= M, |beta| <= L and |beta| <= |alpha| + 1."""
        pairs = []
        for a in multi_indices(self.M):
            for b in multi_indices(self.L if weighted else 0):
                if sum(b) <= sum(a) + 1:
                    pairs.append((a, b))
        return pairs


@lru_cache(maxsize=None)
def multi_indices(order: int) -> tuple[MultiIndex, ...]:
    """Multi-indices in three variables with total order <= ``order``."""
    out = [a for a in itertools.product(range(order + 1), repeat=3) if sum(a) <= order]
    return tuple(sorted(out, key=lambda a: (sum(a), tuple(-x for x in a))))


@dataclass(frozen=True)
class BoxField:
    """Samples of a decaying function on the cell-centred grid of [-R, R]^3.

    ``values`` has shape (N, N, N) or (C, N, N, N).  Derivatives are spectral
    with period 2R, which is accurate while the samples decay at the faces.
    """

    values: np.ndarray
    extent: float

    @property
    def n(self) -> int:
        return self.values.shape[-1]

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / self.n

    @property
    def coords(self) -> np.ndarray:
        return -self.extent + (np.arange(self.n) + 0.5) * self.spacing

    @property
    def mesh(self) -> np.ndarray:
        c = self.coords
        return np.stack(np.meshgrid(c, c, c, indexing="ij"))

    @property
    def cell_volume(self) -> float:
        return self.spacing ** 3

    @classmethod
    def from_function(cls, f: Callable[..., np.ndarray], n: int, extent: float) -> "BoxField":
        h = 2.0 * extent / n
        c = -extent + (np.arange(n) + 0.5) * h
        x = np.stack(np.meshgrid(c, c, c, indexing="ij"))
        return cls(np.asarray(f(x[0], x[1], x[2]), dtype=float), float(extent))

    def boundary_ratio(self) -> float:
        """Largest face sample relative to the largest sample overall."""
        v = np.abs(self.values)
        top = v.max()
        if top == 0:
            return 0.0
        faces = max(
            np.abs(np.take(self.values, idx, axis=ax)).max()
            for ax in (-3, -2, -1)
            for idx in (0, -1)
        )
        return float(faces / top)

    def _wavenumbers(self):
        k = 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)
        k[self.n // 2] = 0.0
        return k[:, None, None], k[None, :, None], k[None, None, :]

    def derivative(self, alpha: MultiIndex, values: np.ndarray | None = None) -> np.ndarray:
        u = self.values if values is None else values
        if sum(alpha) == 0:
            return u
        k = self._wavenumbers()
        sym = np.ones((self.n, self.n, self.n), dtype=complex)
        for j, a in enumerate(alpha):
            if a:
                sym = sym * (1j * k[j]) ** a
        return np.real(sfft.ifftn(sfft.fftn(u, axes=(-3, -2, -1)) * sym, axes=(-3, -2, -1)))

    def gradient(self) -> "BoxField":
        comps = [self.derivative(e) for e in ((1, 0, 0), (0, 1, 0), (0, 0, 1))]
        if self.values.ndim == 4:
            return BoxField(np.concatenate(comps), self.extent)
        return BoxField(np.stack(comps), self.extent)

    def value_at_origin(self, values: np.ndarray | None = None) -> np.ndarray:
        """Trigonometric interpolation of the samples at x = 0."""
        u = self.values if values is None else values
        k = self._wavenumbers()
        shift = -self.coords[0]
        phase = np.exp(1j * (k[0] + k[1] + k[2]) * shift)
        c = sfft.fftn(u, axes=(-3, -2, -1)) * phase
        return np.real(c.sum(axis=(-3, -2, -1))) / self.n ** 3

    def integrate(self, density: np.ndarray) -> float:
        return float(np.sum(density) * self.cell_volume)

    def weight(self, beta: MultiIndex) -> np.ndarray:
        x = self.mesh
        return x[0] ** beta[0] * x[1] ** beta[1] * x[2] ** beta[2]


def _components(u: np.ndarray) -> np.ndarray:
    return u.reshape((-1,) + u.shape[-3:])


@lru_cache(maxsize=64)
def _torus_weight(n: int, M: int) -> np.ndarray:
    """sum_{|alpha| <= M} |(ik)^alpha|^2 on the rfft layout (Nyquist derivatives zeroed)."""
    g = get_grid(n)
    ks = [np.abs(s.imag) for s in g.derivative_symbols]
    w = np.zeros((n, n, n // 2 + 1))
    for a in multi_indices(M):
        term = np.ones_like(w)
        for j in range(3):
            if a[j]:
                term = term * ks[j] ** (2 * a[j])
        w += term
    return w


def _torus_dn_squared(u: np.ndarray, M: int, scale: float = 1.0, gradient_weight: bool = False) -> float:
    g = grid_of(u)
    u_hat = spectral_transform(_components(u))
    if scale == 1.0:
        w = _torus_weight(g.n, M)
    else:
        ks = [np.abs(s.imag) * scale for s in g.derivative_symbols]
        w = np.zeros((g.n, g.n, g.n // 2 + 1))
        for a in multi_indices(M):
            term = np.ones_like(w)
            for j in range(3):
                if a[j]:
                    term = term * ks[j] ** (2 * a[j])
            w += term
    if gradient_weight:
        ks = [np.abs(s.imag) * scale for s in g.derivative_symbols]
        w = w * (ks[0] ** 2 + ks[1] ** 2 + ks[2] ** 2)
    power = np.sum(np.abs(u_hat) ** 2, axis=0)
    return float(np.sum(g.multiplicity * w * power))


def dn_norm(u, p: SobolevParams = SobolevParams(), *, scale: float = 1.0) -> float:
    """DN norm: sqrt of sum ||x^beta d^alpha u||^2 over the admissible (alpha, beta).

    On the torus only beta = 0 enters and L^2 is the mean over the torus.
    ``scale`` evaluates the norm of u composed with X -> scale * X (torus only),
    which multiplies each derivative by ``scale``.  Stacked components add.
    """
    if isinstance(u, BoxField):
        if scale != 1.0:
            raise ValueError("dilated norms on box fields: sample the dilated function instead")
        total = 0.0
        comps = _components(u.values)
        for alpha, beta in p.index_pairs(weighted=True):
            w = u.weight(beta)
            for c in comps:
                total += u.integrate((w * u.derivative(alpha, c)) ** 2)
        return math.sqrt(total)
    if isinstance(u, tuple | list):
        return math.sqrt(sum(dn_norm(np.asarray(c), p, scale=scale) ** 2 for c in u))
    return math.sqrt(_torus_dn_squared(np.asarray(u, dtype=float), p.M, scale))


def has_zero_mean(u: np.ndarray, rtol: float = 1e-10) -> bool:
    comps = _components(np.asarray(u, dtype=float))
    mean = np.abs(comps.mean(axis=(-3, -2, -1)))
    rms = np.sqrt(np.mean(comps ** 2, axis=(-3, -2, -1)))
    return bool(np.all(mean <= rtol * np.maximum(rms, 1e-300)))


def n_norm(u, p: SobolevParams = SobolevParams(), *, scale: float = 1.0, check_mean: bool = True) -> float:
    """N norm: the DN norm of the gradient.  Torus inputs must have zero mean."""
    if isinstance(u, BoxField):
        return dn_norm(u.gradient(), p)
    u = np.asarray(u, dtype=float)
    if check_mean and not has_zero_mean(u):
        raise ValueError("nonzero mean: constants are not in N")
    return math.sqrt(_torus_dn_squared(u, p.M, scale, gradient_weight=True))


def dk_norm(u, *, scale: float = 1.0) -> float:
    """sum_{|alpha| <= 2} sup |d^alpha u|; the sup runs over samples and components.

    ``scale`` gives the norm of u composed with X -> scale * X.
    """
    if isinstance(u, BoxField):
        comps = _components(u.values)
        return float(sum(
            max(np.abs(u.derivative(a, c)).max() for c in comps) for a in multi_indices(2)
        ))
    u = np.asarray(u, dtype=float)
    g = grid_of(u)
    u_hat = spectral_transform(_components(u))
    total = 0.0
    for a in multi_indices(2):
        sym = np.ones(1)
        for j in range(3):
            if a[j]:
                sym = sym * g.derivative_symbols[j] ** a[j]
        d = sfft.irfftn(u_hat * sym * g.n ** 3, s=g.shape, axes=(-3, -2, -1))
        total += scale ** sum(a) * np.abs(d).max()
    return float(total)


def sup_norm(u) -> float:
    vals = u.values if isinstance(u, BoxField) else np.asarray(u)
    return float(np.abs(vals).max())


@dataclass
class BnConstant:
    """Radius of the ball BN = {y : DN(dy) < radius} on which the velocity map is used."""

    radius: float = 0.1
    target_ratio: float = 0.5
    adaptive: bool = True
    history: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError("BN radius must be positive")

    def size(self, y: np.ndarray, p: SobolevParams = SobolevParams()) -> float:
        return dn_norm(gradient_stack(y), p)

    def contains(self, y: np.ndarray, p: SobolevParams = SobolevParams()) -> bool:
        return self.size(y, p) < self.radius

    def revise(self, contraction_ratio: float, size: float) -> bool:
        """Shrink the radius when a solve at ``size`` contracted worse than the target."""
        if not self.adaptive or contraction_ratio <= self.target_ratio or size <= 0:
            return False
        new = min(self.radius, size * self.target_ratio / contraction_ratio)
        if new < self.radius:
            self.history.append(self.radius)
            self.radius = new
            return True
        return False


def gradient_stack(y: np.ndarray) -> np.ndarray:
    """All first derivatives of a (C, n, n, n) field stacked as (3C, n, n, n)."""
    comps = _components(np.asarray(y, dtype=float))
    return np.concatenate([gradient(c) for c in comps])


def pitt_check(f: BoxField) -> float:
    """Ratio || |x|^-1 f ||_{L^2} / || df ||_{L^2} on a box field."""
    df = f.gradient()
    denom = math.sqrt(sum(f.integrate(c ** 2) for c in _components(df.values)))
    if denom == 0.0:
        raise ZeroDivisionError("pitt_check: field has zero gradient")
    # The |x|^-2 singularity is subtracted with a Gaussian whose integral is closed form.
    r2 = np.sum(f.mesh ** 2, axis=0)
    width = f.extent / 4.0
    core = np.exp(-r2 / width ** 2)
    total = 0.0
    for c in _components(f.values):
        c0 = float(f.value_at_origin(c))
        total += f.integrate((c ** 2 - c0 ** 2 * core) / r2) + c0 ** 2 * 2.0 * np.pi ** 1.5 * width
    return math.sqrt(max(total, 0.0)) / denom


def product_constant(f, g, p: SobolevParams = SobolevParams()) -> float:
    """Empirical constant DN(fg) / (DN(f) DN(g))."""
    if isinstance(f, BoxField):
        fg = BoxField(f.values * g.values, f.extent)
    else:
        fg = f * g
    return dn_norm(fg, p) / (dn_norm(f, p) * dn_norm(g, p))


def dk_product_constant(f, g, p: SobolevParams = SobolevParams()) -> float:
    """Empirical constant DN(fg) / (DK(f) DN(g))."""
    if isinstance(f, BoxField):
        fg = BoxField(f.values * g.values, f.extent)
    else:
        fg = f * g
    return dn_norm(fg, p) / (dk_norm(f) * dn_norm(g, p))


def embedding_constant(u: BoxField) -> float:
    """sup|u| / (||du|| + ||d^2 u||) for a compactly supported box field."""
    first = math.sqrt(sum(u.integrate(u.derivative(a) ** 2) for a in multi_indices(1) if sum(a) == 1))
    second = math.sqrt(sum(u.integrate(u.derivative(a) ** 2) for a in multi_indices(2) if sum(a) == 2))
    return sup_norm(u) / (first + second)


def norm_report(name: str, params: SobolevParams | dict | None, value: float) -> dict:
    """JSON-ready record {norm_name, params, value}."""
    if isinstance(params, SobolevParams):
        params = {"M": params.M, "L": params.L}
    return {"norm_name": name, "params": params or {}, "value": float(value)}


# -- infinitesimal composition estimate -------------------------------------------------


def _fd_derivative(u: np.ndarray, alpha: MultiIndex, h: float) -> np.ndarray:
    """Repeated second-order finite differences; exact on quadratics."""
    out = u
    for axis, a in enumerate(alpha):
        for _ in range(a):
            out = np.gradient(out, h, axis=axis, edge_order=2)
    return out


def _invert_near_identity(y_map, s: float, x: np.ndarray, iterations: int = 60) -> np.ndarray:
    """Solve y(s)(p) = x for p by the iteration p <- x - (y(s)(p) - p)."""
    p = x.copy()
    for _ in range(iterations):
        p_new = x - (y_map(s, p) - p)
        if np.max(np.abs(p_new - p)) < 1e-15 * max(1.0, np.max(np.abs(x))):
            p = p_new
            break
        p = p_new
    if not np.all(np.isfinite(p)):
        raise ValueError("y(s) is not invertible on the sampled box")
    return p


def composition_integrals(
    f: Callable[..., np.ndarray],
    y_map: Callable[[float, np.ndarray], np.ndarray],
    s: float,
    index_set: Iterable[tuple[MultiIndex, MultiIndex]],
    n: int,
    extent: float,
) -> float:
    """sum over S of int |x^beta d^alpha (f o y(s)^-1)|^2 d^3x on the box."""
    proto = BoxField(np.zeros((n, n, n)), extent)
    x = proto.mesh
    p = _invert_near_identity(y_map, s, x)
    g = BoxField(np.asarray(f(p[0], p[1], p[2]), dtype=float), extent)
    return sum(g.integrate((g.weight(b) * g.derivative(a)) ** 2) for a, b in index_set)


def composition_b_terms(
    f: Callable[..., np.ndarray],
    velocity: Callable[[np.ndarray], np.ndarray],
    index_set: Iterable[tuple[MultiIndex, MultiIndex]],
    n: int,
    extent: float,
) -> dict[tuple[MultiIndex, MultiIndex], np.ndarray]:
    """The densities b_{alpha beta} at s = 0 for y(0) = identity and Dy = velocity.

    b = (D y^beta) d^alpha f + x^beta (D d_y^alpha) f + 1/2 x^beta d^alpha f tr(dv), with
    D y^beta = sum_A beta_A x^(beta - e_A) v^A and
    D d_y^alpha = - sum_{gamma < alpha} C(alpha, gamma) sum_A (d^(alpha - gamma) v^A) d^(gamma + e_A).
    """
    proto = BoxField(np.zeros((n, n, n)), extent)
    x = proto.mesh
    fb = BoxField(np.asarray(f(x[0], x[1], x[2]), dtype=float), extent)
    v = np.asarray(velocity(x), dtype=float)
    h = proto.spacing
    trace = sum(_fd_derivative(v[a], tuple(int(a == j) for j in range(3)), h) for a in range(3))
    out = {}
    for alpha, beta in index_set:
        da_f = fb.derivative(alpha)
        wb = fb.weight(beta)
        dy_beta = np.zeros_like(da_f)
        for A in range(3):
            if beta[A]:
                lower = tuple(beta[j] - (j == A) for j in range(3))
                dy_beta += beta[A] * fb.weight(lower) * v[A]
        d_alpha = np.zeros_like(da_f)
        for gamma in itertools.product(*(range(a + 1) for a in alpha)):
            if gamma == tuple(alpha):
                continue
            binom = math.prod(math.comb(alpha[j], gamma[j]) for j in range(3))
            rest = tuple(alpha[j] - gamma[j] for j in range(3))
            for A in range(3):
                up = tuple(gamma[j] + (j == A) for j in range(3))
                d_alpha -= binom * _fd_derivative(v[A], rest, h) * fb.derivative(up)
        out[(tuple(alpha), tuple(beta))] = dy_beta * da_f + wb * d_alpha + 0.5 * wb * da_f * trace
    return out


def composition_derivative_bound(
    f: Callable[..., np.ndarray],
    y_map: Callable[[float, np.ndarray], np.ndarray],
    velocity: Callable[[np.ndarray], np.ndarray],
    index_set: Iterable[tuple[MultiIndex, MultiIndex]],
    *,
    n: int = 48,
    extent: float = 8.0,
    ds: float = 1e-4,
) -> tuple[float, float]:
    """(lhs, rhs) of |D (sum int omega)^(1/2)| <= (sum ||b||^2)^(1/2).

    ``y_map(s, p)`` is the family of maps with y(0) = identity and
    ``velocity(x)`` its s-derivative at s = 0.  The left side is a central
    difference in s of the norm of f o y(s)^-1.
    """
    index_set = [(tuple(a), tuple(b)) for a, b in index_set]
    plus = composition_integrals(f, y_map, ds, index_set, n, extent)
    minus = composition_integrals(f, y_map, -ds, index_set, n, extent)
    lhs = abs(math.sqrt(plus) - math.sqrt(minus)) / (2 * ds)
    b = composition_b_terms(f, velocity, index_set, n, extent)
    vol = (2.0 * extent / n) ** 3
    rhs = math.sqrt(sum(float(np.sum(bb ** 2)) * vol for bb in b.values()))
    return lhs, rhs


def composition_integral_derivative(
    f: Callable[..., np.ndarray],
    velocity: Callable[[np.ndarray], np.ndarray],
    index_set: Iterable[tuple[MultiIndex, MultiIndex]],
    *,
    n: int = 48,
    extent: float = 8.0,
) -> float:
    """Predicted D sum int omega = sum 2 int (x^beta d^alpha f) b_{alpha beta}."""
    index_set = [(tuple(a), tuple(b)) for a, b in index_set]
    b = composition_b_terms(f, velocity, index_set, n, extent)
    proto = BoxField(np.zeros((n, n, n)), extent)
    x = proto.mesh
    fb = BoxField(np.asarray(f(x[0], x[1], x[2]), dtype=float), extent)
    return sum(2.0 * fb.integrate(fb.weight(be) * fb.derivative(a) * b[(a, be)]) for a, be in index_set)

"""Periodic label grid, spectral calculus, interpolation and the wedge-product oracle.

Fields are plain numpy arrays on the 2*pi torus: scalars have shape (n, n, n),
vectors (3, n, n, n).  Axis ``a`` of the array corresponds to label coordinate
lambda^(a+1).  Spectra use the real-FFT layout normalized by n**3, so the
coefficient of cos(lambda^1) at k = (+-1, 0, 0) is 1/2.
"""

from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from . import _kernels

TWO_PI = 2.0 * np.pi
_AXES = (-3, -2, -1)


@dataclass(frozen=True)
class Grid:
    """Uniform grid with ``n`` points per axis on the torus of side 2*pi."""

    n: int

    def __post_init__(self) -> None:
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 8 or n & (n - 1):
            raise ValueError(f"grid size must be a power of two >= 8, got {n!r}")

    @property
    def spacing(self) -> float:
        return TWO_PI / self.n

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @cached_property
    def points(self) -> np.ndarray:
        x = np.arange(self.n) * self.spacing
        return np.stack(np.meshgrid(x, x, x, indexing="ij"))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Integer wavenumbers per axis, broadcastable against an rfft spectrum."""
        k = np.fft.fftfreq(self.n, 1.0 / self.n)
        kr = np.arange(self.n // 2 + 1, dtype=float)
        return k[:, None, None], k[None, :, None], kr[None, None, :]

    @cached_property
    def derivative_symbols(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """i*k per axis with the Nyquist mode zeroed (odd derivatives of it are ill-defined)."""
        out = []
        for k in self.wavenumbers:
            kk = k.copy()
            kk[np.abs(kk) == self.n // 2] = 0.0
            out.append(1j * kk)
        return tuple(out)

    @cached_property
    def k_squared(self) -> np.ndarray:
        k1, k2, k3 = self.wavenumbers
        return k1 ** 2 + k2 ** 2 + k3 ** 2

    @property
    def cutoff(self) -> int:
        """Largest retained |k_i| under the two-thirds rule."""
        return (self.n - 1) // 3

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        k1, k2, k3 = self.wavenumbers
        c = self.cutoff
        return (np.abs(k1) <= c) & (np.abs(k2) <= c) & (np.abs(k3) <= c)

    @cached_property
    def multiplicity(self) -> np.ndarray:
        """Weights that turn an rfft half-spectrum sum into a full-spectrum sum."""
        w = np.full(self.n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return np.broadcast_to(w[None, None, :], (self.n, self.n, self.n // 2 + 1))


@lru_cache(maxsize=None)
def get_grid(n: int) -> Grid:
    return Grid(int(n))


def grid_of(u: np.ndarray) -> Grid:
    """Grid implied by the trailing three axes of a sample array."""
    n = u.shape[-1]
    if u.ndim < 3 or u.shape[-3:] != (n, n, n):
        raise ValueError(f"expected trailing shape (n, n, n), got {u.shape}")
    return get_grid(n)


class FormPair:
    """A 2-form in axial representation together with a 3-form scalar coefficient.

    The axial vector ``a`` encodes F = 1/2 eps_ABC a^A dlambda^B ^ dlambda^C.
    """

    __slots__ = ("two_form", "three_form")

    def __init__(self, two_form: np.ndarray, three_form: np.ndarray) -> None:
        self.two_form = np.asarray(two_form, dtype=float)
        self.three_form = np.asarray(three_form, dtype=float)
        if self.two_form.shape[0] != 3 or self.two_form.shape[1:] != self.three_form.shape:
            raise ValueError("two_form must be (3, *shape) and three_form must be shape")

    def __iter__(self):
        yield self.two_form
        yield self.three_form

    def __add__(self, other: "FormPair") -> "FormPair":
        return FormPair(self.two_form + other.two_form, self.three_form + other.three_form)

    def __sub__(self, other: "FormPair") -> "FormPair":
        return FormPair(self.two_form - other.two_form, self.three_form - other.three_form)

    def __neg__(self) -> "FormPair":
        return FormPair(-self.two_form, -self.three_form)

    def __mul__(self, c: float) -> "FormPair":
        return FormPair(c * self.two_form, c * self.three_form)

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.two_form)), np.max(np.abs(self.three_form))))

    def stacked(self) -> np.ndarray:
        """All four components as one (4, ...) array."""
        return np.concatenate([self.two_form, self.three_form[None]])

    @classmethod
    def zeros(cls, n: int) -> "FormPair":
        return cls(np.zeros((3, n, n, n)), np.zeros((n, n, n)))

    def __repr__(self) -> str:
        return f"FormPair(shape={self.three_form.shape}, max_abs={self.max_abs():.3e})"


# -- transforms -------------------------------------------------------------------------


def spectral_transform(u: np.ndarray) -> np.ndarray:
    """Normalized real-FFT spectrum over the trailing three axes."""
    g = grid_of(u)
    return sfft.rfftn(u, axes=_AXES) / g.n ** 3


def inverse_transform(u_hat: np.ndarray, n: int | None = None) -> np.ndarray:
    """Inverse of :func:`spectral_transform`."""
    m = u_hat.shape[-3]
    if n is None:
        n = m
    if u_hat.shape[-3:] != (n, n, n // 2 + 1):
        raise ValueError(f"spectrum shape {u_hat.shape[-3:]} does not match grid n={n}")
    return sfft.irfftn(u_hat * n ** 3, s=(n, n, n), axes=_AXES)


def partial_derivative(u: np.ndarray, axis: int) -> np.ndarray:
    """Spectral derivative along label axis 0, 1 or 2."""
    g = grid_of(u)
    return inverse_transform(spectral_transform(u) * g.derivative_symbols[axis], g.n)


def gradient(u: np.ndarray) -> np.ndarray:
    g = grid_of(u)
    u_hat = spectral_transform(u)
    return np.stack([inverse_transform(u_hat * s, g.n) for s in g.derivative_symbols])


def jacobian(v: np.ndarray) -> np.ndarray:
    """J[A, a] = d v^A / d lambda^a for a vector field of shape (3, n, n, n)."""
    g = grid_of(v)
    v_hat = spectral_transform(v)
    return np.stack([inverse_transform(v_hat * s, g.n) for s in g.derivative_symbols], axis=1)


@lru_cache(maxsize=None)
def _symbols_any(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Derivative symbols for any even size, including padded product grids."""
    k = np.fft.fftfreq(n, 1.0 / n)
    k[n // 2] = 0.0
    kr = np.arange(n // 2 + 1, dtype=float)
    kr[-1] = 0.0
    return 1j * k[:, None, None], 1j * k[None, :, None], 1j * kr[None, None, :]


def jacobian_from_spectrum(v_hat: np.ndarray, n: int) -> np.ndarray:
    """Jacobian from a normalized spectrum on an n-grid (n even, not necessarily a power of two)."""
    return np.stack([inverse_transform(v_hat * s, n) for s in _symbols_any(n)], axis=1)


def curl(v: np.ndarray) -> np.ndarray:
    j = jacobian(v)
    return np.stack([j[2, 1] - j[1, 2], j[0, 2] - j[2, 0], j[1, 0] - j[0, 1]])


def divergence(v: np.ndarray) -> np.ndarray:
    g = grid_of(v)
    v_hat = spectral_transform(v)
    s = g.derivative_symbols
    return inverse_transform(s[0] * v_hat[0] + s[1] * v_hat[1] + s[2] * v_hat[2], g.n)


def dealias(u: np.ndarray) -> np.ndarray:
    """Apply the two-thirds truncation."""
    g = grid_of(u)
    return inverse_transform(spectral_transform(u) * g.dealias_mask, g.n)


def band_limit(u: np.ndarray, kmax: int) -> np.ndarray:
    """Keep modes with max_i |k_i| <= kmax."""
    g = grid_of(u)
    k1, k2, k3 = g.wavenumbers
    mask = (np.abs(k1) <= kmax) & (np.abs(k2) <= kmax) & (np.abs(k3) <= kmax)
    return inverse_transform(spectral_transform(u) * mask, g.n)


def leray_project(v: np.ndarray) -> np.ndarray:
    """Divergence-free, zero-mean part of a vector field."""
    g = grid_of(v)
    v_hat = spectral_transform(v)
    k = g.wavenumbers
    k2 = g.k_squared.copy()
    k2[0, 0, 0] = 1.0
    kdotv = sum(k[i] * v_hat[i] for i in range(3))
    out = np.stack([v_hat[i] - k[i] * kdotv / k2 for i in range(3)])
    out[:, 0, 0, 0] = 0.0
    return inverse_transform(out, g.n)


def pad_spectrum(u_hat: np.ndarray, n: int, m: int) -> np.ndarray:
    """Embed an n-grid spectrum into an m-grid spectrum (m > n); Nyquist modes dropped."""
    h = n // 2
    lead = u_hat.shape[:-3]
    out = np.zeros(lead + (m, m, m // 2 + 1), dtype=complex)
    pos = slice(0, h)
    neg_src = slice(n - h + 1, n)
    neg_dst = slice(m - h + 1, m)
    for s1, d1 in ((pos, pos), (neg_src, neg_dst)):
        for s2, d2 in ((pos, pos), (neg_src, neg_dst)):
            out[..., d1, d2, :h] = u_hat[..., s1, s2, :h]
    return out


def unpad_spectrum(u_hat: np.ndarray, m: int, n: int) -> np.ndarray:
    """Restrict an m-grid spectrum to the n-grid layout (Nyquist set to zero)."""
    h = n // 2
    lead = u_hat.shape[:-3]
    out = np.zeros(lead + (n, n, n // 2 + 1), dtype=complex)
    pos = slice(0, h)
    neg_dst = slice(n - h + 1, n)
    neg_src = slice(m - h + 1, m)
    for d1, s1 in ((pos, pos), (neg_dst, neg_src)):
        for d2, s2 in ((pos, pos), (neg_dst, neg_src)):
            out[..., d1, d2, :h] = u_hat[..., s1, s2, :h]
    return out


def random_field(
    n: int,
    rng: np.random.Generator,
    *,
    components: int = 3,
    band: int | None = None,
    amplitude: float = 1.0,
    zero_mean: bool = True,
) -> np.ndarray:
    """Smooth band-limited random real field with rms ``amplitude`` per component."""
    g = get_grid(n)
    band = g.cutoff if band is None else band
    shape = (components,) + g.shape if components > 1 else g.shape
    u = band_limit(rng.standard_normal(shape), band)
    u_hat = spectral_transform(u) * np.exp(-g.k_squared / (band + 1) ** 2)
    if zero_mean:
        u_hat[..., 0, 0, 0] = 0.0
    u = inverse_transform(u_hat, n)
    rms = np.sqrt(np.mean(u ** 2, axis=_AXES, keepdims=True))
    return amplitude * u / np.where(rms > 0, rms, 1.0)


# -- interpolation ----------------------------------------------------------------------


def _full_coefficients(u: np.ndarray, band: int | None) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric coefficient block over k = -K..K per axis, Nyquist split evenly."""
    g = grid_of(u)
    n = g.n
    vec = u.reshape((-1,) + g.shape)
    c = sfft.fftn(vec, axes=_AXES) / n ** 3
    h = n // 2
    c = np.roll(c, h, axis=(1, 2, 3))  # index j <-> k = j - h, so k = -h..h-1
    c = np.concatenate([c, c[:, :1]], axis=1)
    c = np.concatenate([c, c[:, :, :1]], axis=2)
    c = np.concatenate([c, c[:, :, :, :1]], axis=3)
    for ax in (1, 2, 3):
        idx = [slice(None)] * 4
        for j in (0, n):
            idx[ax] = j
            c[tuple(idx)] *= 0.5
    kvals = np.arange(-h, h + 1, dtype=float)
    if band is None:
        mag = np.abs(c)
        thresh = 1e-15 * mag.max() if mag.max() > 0 else 0.0
        nz = np.nonzero(mag > thresh)
        band = int(max((np.max(np.abs(kvals[nz[ax]])) for ax in (1, 2, 3)), default=0)) if nz[0].size else 0
    band = min(band, h)
    sel = slice(h - band, h + band + 1)
    return c[:, sel, sel, sel], kvals[sel]


def interpolate(u: np.ndarray, points: np.ndarray, band: int | None = None) -> np.ndarray:
    """Trigonometric interpolation of grid samples at arbitrary points.

    ``points`` has shape (P, 3).  Returns shape (P,) for scalars and (C, P) for
    stacked fields.  The summation band is detected from the spectrum unless
    given; the result is exact for every mode the grid resolves.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[-1] != 3:
        raise ValueError("points must have shape (P, 3)")
    coef, kvals = _full_coefficients(u, band)
    out = _kernels.trig_sum(coef, kvals, points)
    if u.ndim == 3:
        return out[0]
    return out.reshape(u.shape[:-3] + (points.shape[0],))


def direct_mode_sum(u_hat_full: dict[tuple[int, int, int], complex], points: np.ndarray) -> np.ndarray:
    """Reference evaluation of a mode dictionary at points; slow, for checking only."""
    points = np.atleast_2d(points)
    val = np.zeros(points.shape[0], dtype=complex)
    for k, c in u_hat_full.items():
        val += c * np.exp(1j * points @ np.asarray(k, dtype=float))
    return val.real


# -- exterior algebra oracle ------------------------------------------------------------


def permutation_sign(seq) -> int:
    """Sign of the permutation that sorts ``seq``; 0 if an entry repeats."""
    seq = list(seq)
    if len(set(seq)) < len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


class Form:
    """Differential form on a 3-manifold chart with array coefficients.

    Stored as {strictly increasing index tuple: coefficient}; the form is
    sum_I c_I dlambda^I.  Wedge products expand and antisymmetrize generically.
    """

    def __init__(self, degree: int, components: dict[tuple[int, ...], np.ndarray] | None = None) -> None:
        self.degree = degree
        self.components: dict[tuple[int, ...], np.ndarray] = {}
        for idx, c in (components or {}).items():
            self._accumulate(idx, c)

    def _accumulate(self, idx: tuple[int, ...], coef) -> None:
        s = permutation_sign(idx)
        if s == 0:
            return
        key = tuple(sorted(idx))
        term = s * coef
        if key in self.components:
            self.components[key] = self.components[key] + term
        else:
            self.components[key] = term

    @classmethod
    def one_form(cls, coefficients) -> "Form":
        """sum_a coefficients[a] dlambda^a."""
        return cls(1, {(a,): coefficients[a] for a in range(len(coefficients))})

    def wedge(self, other: "Form") -> "Form":
        out = Form(self.degree + other.degree)
        for i, a in self.components.items():
            for j, b in other.components.items():
                out._accumulate(i + j, a * b)
        return out

    __xor__ = wedge

    def __add__(self, other: "Form") -> "Form":
        if other.degree != self.degree:
            raise ValueError("degree mismatch")
        out = Form(self.degree, dict(self.components))
        for idx, c in other.components.items():
            out._accumulate(idx, c)
        return out

    def __rmul__(self, c) -> "Form":
        return Form(self.degree, {k: c * v for k, v in self.components.items()})

    def __neg__(self) -> "Form":
        return (-1.0) * self

    def __sub__(self, other: "Form") -> "Form":
        return self + (-other)

    def coefficient(self, idx: tuple[int, ...], like: np.ndarray | float = 0.0):
        return self.components.get(idx, np.zeros_like(like) if isinstance(like, np.ndarray) else 0.0)

    def to_axial(self, like) -> np.ndarray:
        """Axial vector of a 2-form under F = 1/2 eps a dlambda ^ dlambda."""
        if self.degree != 2:
            raise ValueError("axial representation needs a 2-form")
        return np.stack([self.coefficient((1, 2), like), -self.coefficient((0, 2), like), self.coefficient((0, 1), like)])

    @classmethod
    def from_axial(cls, a) -> "Form":
        return cls(2, {(1, 2): a[0], (0, 2): -a[1], (0, 1): a[2]})

    def to_scalar(self, like):
        if self.degree != 3:
            raise ValueError("scalar representation needs a 3-form")
        return self.coefficient((0, 1, 2), like)


def _levi_civita():
    for perm in itertools.permutations(range(3)):
        yield perm, permutation_sign(perm)


def wedge_residual_full(
    v: np.ndarray,
    y: np.ndarray,
    omega: np.ndarray,
    linear: np.ndarray | None = None,
    jacobians: tuple[np.ndarray, np.ndarray] | None = None,
) -> FormPair:
    """Residual of delta_AB dv^A ^ dx^B = Omega and eps_ABC dv^A ^ dx^B ^ dx^C = 0.

    The position map is x = G lambda + y with ``linear`` = G (identity by
    default) and periodic displacement ``y``.  Both wedge products are expanded
    from coordinate 1-forms by the generic :class:`Form` algebra.  Returns the
    axial 2-form residual and the raw coefficient of the 3-form on
    dlambda^1 ^ dlambda^2 ^ dlambda^3.  Precomputed ``jacobians`` (dv, dy) may
    replace the spectral derivatives, e.g. for non-periodic samples.
    """
    if jacobians is None:
        jv, jy = jacobian(v), jacobian(y)
    else:
        jv, jy = jacobians
    g = np.eye(3) if linear is None else np.asarray(linear, dtype=float)
    jx = jy + g.reshape(3, 3, *([1] * (jy.ndim - 2)))
    dv = [Form.one_form(jv[A]) for A in range(3)]
    dx = [Form.one_form(jx[B]) for B in range(3)]
    like = jv[0, 0]
    two = Form(2)
    for A in range(3):
        two = two + dv[A].wedge(dx[A])
    two = two - Form.from_axial(omega)
    three = Form(3)
    for (A, B, C), s in _levi_civita():
        three = three + s * dv[A].wedge(dx[B]).wedge(dx[C])
    return FormPair(two.to_axial(like), three.to_scalar(like))


# -- snapshot files ---------------------------------------------------------------------

SNAPSHOT_MAGIC = b"LEFS"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIIId")


def write_snapshot(path: str | Path, field: np.ndarray, time: float = 0.0) -> None:
    """Binary snapshot: little-endian header (magic, version, n, components, time)
    followed by float64 little-endian samples in C order, shape (components, n, n, n)."""
    g = grid_of(field)
    data = np.asarray(field, dtype="<f8").reshape((-1,) + g.shape)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, g.n, data.shape[0], float(time)))
        fh.write(np.ascontiguousarray(data).tobytes())


def read_snapshot(path: str | Path) -> tuple[np.ndarray, float]:
    """Inverse of :func:`write_snapshot`; scalars come back with shape (n, n, n)."""
    raw = Path(path).read_bytes()
    magic, version, n, ncomp, time = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC or version != SNAPSHOT_VERSION:
        raise ValueError(f"{path}: not a field snapshot")
    data = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if data.size != ncomp * n ** 3:
        raise ValueError(f"{path}: truncated snapshot")
    data = data.reshape((ncomp, n, n, n)).astype(float)
    return (data[0] if ncomp == 1 else data), time

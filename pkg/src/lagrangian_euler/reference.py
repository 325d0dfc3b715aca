"""Perturbations about a reference flow, the rescaled growth functionals and the backward family.

Independent variables are (t, X) with the reference's fluid paths identified.
The true solution is x = X + y, v = V + w, where w solves

    L0 w = P L_y w + P L_y(y, V) - (E2, E3 / 2)

and y is transported by the reference: dy/dt + (V . grad) y = w.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft
from scipy.interpolate import CubicSpline

from .dynamics import flow_points
from .elliptic import ContractionError, NeumannReport, neumann_solve_reference
from .fields import (
    FormPair,
    curl,
    divergence,
    get_grid,
    grid_of,
    interpolate,
    inverse_transform,
    jacobian,
    jacobian_from_spectrum,
    pad_spectrum,
    random_field,
    spectral_transform,
    unpad_spectrum,
)
from .norms import BnConstant, SobolevParams, dk_norm, dn_norm, n_norm


# -- scaling ----------------------------------------------------------------------------


@dataclass(frozen=True)
class ScalingOp:
    """X -> b X for dyadic b, realized on the torus by moving mode k to b k."""

    b: float

    def __post_init__(self) -> None:
        if not self.b > 0:
            raise ValueError("scale must be positive")
        j = math.log2(self.b)
        if abs(j - round(j)) > 1e-12:
            raise ValueError(f"scale {self.b} is not dyadic")

    @property
    def exponent(self) -> int:
        return int(round(math.log2(self.b)))

    @staticmethod
    def snap(b: float) -> tuple["ScalingOp", float]:
        """Nearest dyadic scale and the relative snap error |b_snap / b - 1|."""
        j = round(math.log2(b))
        op = ScalingOp(2.0 ** j)
        return op, abs(op.b / b - 1.0)

    def apply(self, u: np.ndarray, rtol: float = 1e-13) -> np.ndarray:
        """u o sigma(b) for a periodic field; raises if the result is not periodic on the grid.

        Modes below ``rtol`` times the largest coefficient are dropped.
        """
        g = grid_of(u)
        n = g.n
        j = self.exponent
        c = sfft.fftn(u, axes=(-3, -2, -1))
        k = np.fft.fftfreq(n, 1.0 / n).astype(int)
        out = np.zeros_like(c)
        big = max(1, 2 ** j)
        small = max(1, 2 ** -j)
        idx = np.nonzero(np.abs(c).reshape((-1,) + g.shape).max(axis=0) > rtol * max(np.abs(c).max(), 1e-300))
        for i1, i2, i3 in zip(*idx):
            kk = np.array([k[i1], k[i2], k[i3]])
            if np.any(kk % small):
                raise ValueError(f"scale {self.b} not representable: mode {tuple(kk)} is not divisible by {small}")
            new = kk * big // small
            if np.any(np.abs(new) >= n // 2):
                raise ValueError(f"scale {self.b} not representable: mode {tuple(kk)} leaves the grid")
            out[(Ellipsis,) + tuple(new % n)] = c[(Ellipsis, i1, i2, i3)]
        return np.real(sfft.ifftn(out, axes=(-3, -2, -1)))


# -- reference flows --------------------------------------------------------------------


@dataclass
class ReferenceFlow:
    """Velocity V(t) and error forms (E2, E3)(t) on the X grid.

    E3 is the raw coefficient of eps dV ^ dX ^ dX on dX^1 ^ dX^2 ^ dX^3.
    """

    velocity: Callable[[float], np.ndarray]
    errors: Callable[[float], FormPair]
    n: int
    A: float = 1.0
    B: float = 1.0
    E: float = 0.0
    R1: float = float("nan")
    R2: float = float("nan")
    exact_displacement: Callable[[float, float], np.ndarray] | None = None
    description: str = ""

    def velocity_at(self, t: float, points: np.ndarray) -> np.ndarray:
        return interpolate(self.velocity(t), points).T

    def flow(self, s: float, t: float, points: np.ndarray) -> np.ndarray:
        """phi(s, t, .) at (P, 3) points."""
        return flow_points(self.velocity_at, s, t, points)

    def rescaled(self, b: float) -> "ReferenceFlow":
        """Reference with V_b = b^-1 V o sigma(b) and error coefficients composed with sigma(b)."""
        op = ScalingOp(b)

        def vel(t):
            return op.apply(self.velocity(t)) / b

        def err(t):
            e = self.errors(t)
            return FormPair(op.apply(e.two_form), op.apply(e.three_form))

        return ReferenceFlow(vel, err, self.n, self.A, self.B, self.E, self.R1, self.R2,
                             description=f"{self.description} rescaled by {b}")


def reference_errors(V: np.ndarray, omega: np.ndarray | None = None) -> FormPair:
    """(E2, E3) of a velocity field with y = 0: (curl V - Omega, 2 div V)."""
    two = curl(V) if omega is None else curl(V) - omega
    return FormPair(two, 2.0 * divergence(V))


def steady_reference(V: np.ndarray, omega: np.ndarray | None = None, **kw) -> ReferenceFlow:
    """Time-independent reference; exact when omega = curl V and div V = 0."""
    errs = reference_errors(V, omega)
    n = grid_of(V).n
    return ReferenceFlow(lambda t: V, lambda t: errs, n, **kw)


def _reparametrized_time(u: float, E: float) -> float:
    """tau(u) with d tau / du = |u|^E for u < 0."""
    if abs(E + 1.0) < 1e-14:
        return -math.log(abs(u))
    return -abs(u) ** (E + 1.0) / (E + 1.0)


def power_law_reference(
    profile: np.ndarray, E: float, *, A: float = 1.0, B: float = 1.0, omega_zero: bool = True
) -> ReferenceFlow:
    """Manufactured singular reference V(t) = |t|^E V0 with Omega = 0.

    The errors are (E2, E3) = (curl V, 2 div V), so the exact perturbation from
    y_s(s) = 0 is the rest state w = -V, y_s(t) = phi(s, t) - identity.
    """
    n = grid_of(profile).n
    base_errors = reference_errors(profile)
    at_points = lambda p: interpolate(profile, p).T  # noqa: E731

    def vel(t):
        return abs(t) ** E * profile

    def err(t):
        return base_errors * (abs(t) ** E)

    def exact(s, t):
        g = get_grid(n)
        pts = g.points.reshape(3, -1).T
        dtau = _reparametrized_time(s, E) - _reparametrized_time(t, E)
        out = flow_points(lambda u, p: at_points(p), dtau, 0.0, pts)
        return (out - pts).T.reshape(3, n, n, n)

    return ReferenceFlow(vel, err, n, A=A, B=B, E=E, exact_displacement=exact,
                         description=f"power law |t|^{E} profile")


def manufactured_profile(n: int, seed: int = 0, band: int = 1, size: float = 0.01,
                         params: SobolevParams = SobolevParams()) -> np.ndarray:
    """Random band-limited velocity profile with DN(dV) = size."""
    rng = np.random.default_rng(seed)
    v = random_field(n, rng, band=band)
    dv = np.concatenate([jacobian(v)[A] for A in range(3)])
    return v * (size / dn_norm(dv, params))


def reference_from_snapshots(times: Sequence[float], velocities: Sequence[np.ndarray],
                             two_forms: Sequence[np.ndarray], three_forms: Sequence[np.ndarray],
                             **kw) -> ReferenceFlow:
    """Reference interpolated cubically in time from stored fields."""
    times = np.asarray(times, dtype=float)
    n = velocities[0].shape[-1]
    cs = lambda data: CubicSpline(times, np.stack(data).reshape(len(times), -1), axis=0)  # noqa: E731
    sv, s2, s3 = cs(velocities), cs(two_forms), cs(three_forms)
    return ReferenceFlow(
        lambda t: sv(t).reshape(3, n, n, n),
        lambda t: FormPair(s2(t).reshape(3, n, n, n), s3(t).reshape(n, n, n)),
        n, **kw,
    )


# -- evolution --------------------------------------------------------------------------


@dataclass
class PerturbationTrajectory:
    times: list[float] = field(default_factory=list)
    ys: list[np.ndarray] = field(default_factory=list)
    ws: list[np.ndarray] = field(default_factory=list)
    reports: list[NeumannReport] = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.ys[-1]


def advect(V: np.ndarray, y: np.ndarray) -> np.ndarray:
    """(V . grad) y, product on a 3/2-padded grid, truncated back to the grid band."""
    g = grid_of(y)
    n, m = g.n, 3 * g.n // 2
    jy = jacobian_from_spectrum(pad_spectrum(spectral_transform(y), n, m), m)
    vp = inverse_transform(pad_spectrum(spectral_transform(V), n, m), m)
    prod = np.einsum("Aa...,a...->A...", jy, vp)
    return inverse_transform(unpad_spectrum(sfft.rfftn(prod, axes=(-3, -2, -1)) / m ** 3, m, n), n)


class _Solver:
    def __init__(self, ref, tol, params, bn, check_ball):
        self.ref, self.tol, self.params, self.bn, self.check_ball = ref, tol, params, bn, check_ball
        self.last_w = None
        self.reports: list[NeumannReport] = []

    def w(self, t: float, y: np.ndarray) -> np.ndarray:
        w, rep = neumann_solve_reference(y, self.ref.velocity(t), self.ref.errors(t), self.tol,
                                         params=self.params, bn=self.bn, w0=self.last_w,
                                         check_ball=self.check_ball)
        self.last_w = w
        self.reports.append(rep)
        return w


def _invert_particles(disp: np.ndarray, points: np.ndarray, tol: float = 1e-14, max_iter: int = 100) -> np.ndarray:
    """Solve Y + D(Y) = X for Y by fixed-point iteration; D periodic."""
    Y = points.copy()
    for _ in range(max_iter):
        Y_new = points - interpolate(disp, Y).T
        if np.abs(Y_new - Y).max() < tol:
            return Y_new
        Y = Y_new
    raise ContractionError("particle map inversion did not converge")


def evolve_perturbation(
    ref: ReferenceFlow,
    y0: np.ndarray,
    t0: float,
    t1: float,
    dt: float,
    *,
    method: str = "transport",
    tol: float = 1e-11,
    params: SobolevParams = SobolevParams(),
    bn: BnConstant | None = None,
    check_ball: bool = True,
) -> PerturbationTrajectory:
    """Integrate y from t0 to t1 (either direction) with classical RK4.

    ``method="transport"`` evolves dy/dt = w - (V . grad) y on the X grid.
    ``method="pullback"`` evolves z(t) = y(t) o phi(t, t0) on fixed labels
    together with the particle displacement D(t) = phi(t, t0) - identity, with
    dz/dt = w(t) o phi(t, t0) and y(t) recovered by inverting the particle map.
    """
    bn = bn or BnConstant(adaptive=False)
    solver = _Solver(ref, tol, params, bn, check_ball)
    steps = max(1, int(math.ceil(abs(t1 - t0) / abs(dt) - 1e-9)))
    h = (t1 - t0) / steps
    traj = PerturbationTrajectory()
    n = grid_of(y0).n
    grid_pts = get_grid(n).points
    flat = grid_pts.reshape(3, -1).T

    if method == "transport":
        def rhs(t, y):
            w = solver.w(t, y)
            return w - advect(ref.velocity(t), y), w

        y = np.array(y0, dtype=float)
        t = t0
        w = solver.w(t, y)
        traj.times.append(t); traj.ys.append(y.copy()); traj.ws.append(w)
        for _ in range(steps):
            k1, _ = rhs(t, y)
            k2, _ = rhs(t + h / 2, y + h / 2 * k1)
            k3, _ = rhs(t + h / 2, y + h / 2 * k2)
            k4, _ = rhs(t + h, y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t = t + h
            w = solver.w(t, y)
            traj.times.append(t); traj.ys.append(y.copy()); traj.ws.append(w)
        traj.reports = solver.reports
        return traj

    if method != "pullback":
        raise ValueError(f"unknown method {method!r}")

    def y_of(z, D):
        labels = _invert_particles(D, flat)
        return interpolate(z, labels).reshape(3, n, n, n)

    def rhs_pb(t, z, D):
        y = y_of(z, D)
        w = solver.w(t, y)
        pts = flat + D.reshape(3, -1).T
        dz = interpolate(w, pts).reshape(3, n, n, n)
        dD = ref.velocity_at(t, pts).T.reshape(3, n, n, n)
        return dz, dD

    z = np.array(y0, dtype=float)
    D = np.zeros_like(z)
    t = t0
    traj.times.append(t); traj.ys.append(z.copy()); traj.ws.append(solver.w(t, z))
    for _ in range(steps):
        a1, b1 = rhs_pb(t, z, D)
        a2, b2 = rhs_pb(t + h / 2, z + h / 2 * a1, D + h / 2 * b1)
        a3, b3 = rhs_pb(t + h / 2, z + h / 2 * a2, D + h / 2 * b2)
        a4, b4 = rhs_pb(t + h, z + h * a3, D + h * b3)
        z = z + h / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
        D = D + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
        t = t + h
        y = y_of(z, D)
        traj.times.append(t); traj.ys.append(y); traj.ws.append(solver.w(t, y))
    traj.reports = solver.reports
    return traj


def lagrangian_correspondence(ref: ReferenceFlow, s: float, t: float, y_lagrangian: np.ndarray) -> np.ndarray:
    """(phi(s, t) - identity) + y_lag(t) o phi(s, t), the perturbation matching a plain Lagrangian run from time s."""
    n = grid_of(y_lagrangian).n
    flat = get_grid(n).points.reshape(3, -1).T
    mapped = ref.flow(s, t, flat)
    return ((mapped - flat) + interpolate(y_lagrangian, mapped).T).T.reshape(3, n, n, n)


# -- growth bounds and rescaled functionals ---------------------------------------------


def growth_bound_terms(ref: ReferenceFlow, y: np.ndarray, t: float,
                       params: SobolevParams = SobolevParams()) -> tuple[float, float]:
    """(|V(t, 0)| + DK(dV(t)), DN((E2, E3)(t)))."""
    V = ref.velocity(t)
    dv = np.concatenate([jacobian(V)[A] for A in range(3)])
    factor = float(np.linalg.norm(V[:, 0, 0, 0])) + dk_norm(dv)
    e = ref.errors(t)
    source = dn_norm(np.concatenate([e.two_form, e.three_form[None]]), params)
    return factor, source


def measure_growth_constant(ref: ReferenceFlow, traj: PerturbationTrajectory,
                            params: SobolevParams = SobolevParams()) -> tuple[float, list[float]]:
    """Largest |d N(y)/dt| / (factor N(y) + source) along a trajectory, by central differences."""
    norms = [n_norm(y, params, check_mean=False) for y in traj.ys]
    ratios = []
    for i in range(1, len(traj.ys) - 1):
        dN = (norms[i + 1] - norms[i - 1]) / (traj.times[i + 1] - traj.times[i - 1])
        factor, source = growth_bound_terms(ref, traj.ys[i], traj.times[i], params)
        denom = factor * norms[i] + source
        if denom > 0:
            ratios.append(abs(dN) / denom)
    return (max(ratios) if ratios else 0.0), ratios


def measure_R1(ref: ReferenceFlow, times: Sequence[float]) -> float:
    """sup |t| (|t|^-B |V(t, 0)| + DK(dV(t) o sigma(|t|^B))) over the sampled times."""
    best = 0.0
    for t in times:
        V = ref.velocity(t)
        b = abs(t) ** ref.B
        dv = np.concatenate([jacobian(V)[A] for A in range(3)])
        val = abs(t) * (np.linalg.norm(V[:, 0, 0, 0]) / b + dk_norm(dv, scale=b))
        best = max(best, float(val))
    return best


def J_functional(y: np.ndarray, t: float, A: float, B: float,
                 params: SobolevParams = SobolevParams()) -> tuple[float, float]:
    """|t|^-AB N(y o sigma(|t|^B)) with |t|^B snapped to a dyadic scale; returns (J, snap error)."""
    if t == 0:
        raise ValueError("J is defined for t != 0")
    op, err = ScalingOp.snap(abs(t) ** B) if B != 0 else (ScalingOp(1.0), 0.0)
    val = abs(t) ** (-A * B) * n_norm(y, params, scale=op.b, check_mean=False)
    return float(val), err


def K_functional(J: float, t: float, C1R1: float) -> float:
    return float(abs(t) ** (-C1R1) * J)


def exponent_condition(A: float, B: float, E: float, C1: float, R1: float) -> bool:
    """E > B (A - 1) + C1 R1 - 1, the integrability condition for the backward family."""
    for name, val in (("A", A), ("B", B), ("C1", C1), ("R1", R1)):
        if val < 0:
            raise ValueError(f"{name} must be non-negative")
    return bool(E > B * (A - 1.0) + C1 * R1 - 1.0)


def assumption_q_exponent(params: SobolevParams) -> float:
    """Exponent A with N(f) <= b^-A N(f o sigma(b)) for b <= 1 on R^3."""
    return params.M - 0.5


# -- backward family --------------------------------------------------------------------


@dataclass
class FamilyResult:
    s_values: list[float]
    t_floor: float
    members: dict[float, np.ndarray | None]
    failures: dict[float, str]
    distances: np.ndarray

    def consecutive(self) -> list[float]:
        return [float(self.distances[i, i + 1]) for i in range(len(self.s_values) - 1)]

    def is_cauchy_trend(self) -> bool:
        d = self.consecutive()
        return all(np.isfinite(d)) and all(d[i + 1] < d[i] for i in range(len(d) - 1))


def backward_family(
    ref: ReferenceFlow,
    s_values: Sequence[float],
    t_floor: float,
    dt: float,
    *,
    params: SobolevParams = SobolevParams(),
    tol: float = 1e-11,
    bn: BnConstant | None = None,
) -> FamilyResult:
    """Members y_s with y_s(s) = 0 evolved backward to t_floor; N-distance matrix at t_floor."""
    s_values = [float(s) for s in s_values]
    if any(s >= 0 for s in s_values) or any(t_floor >= s for s in s_values):
        raise ValueError("need t_floor < s < 0 for every member")
    if any(b <= a for a, b in zip(s_values, s_values[1:])):
        raise ValueError("s_values must increase toward 0")
    members: dict[float, np.ndarray | None] = {}
    failures: dict[float, str] = {}
    zero = np.zeros((3, ref.n, ref.n, ref.n))
    for s in s_values:
        try:
            traj = evolve_perturbation(ref, zero, s, t_floor, dt, params=params, tol=tol,
                                       bn=bn or BnConstant(adaptive=False))
            members[s] = traj.final
        except ContractionError as err:
            members[s] = None
            failures[s] = str(err)
    k = len(s_values)
    dist = np.full((k, k), np.nan)
    for i, si in enumerate(s_values):
        for j, sj in enumerate(s_values):
            if members[si] is not None and members[sj] is not None:
                dist[i, j] = n_norm(members[si] - members[sj], params, check_mean=False)
    return FamilyResult(s_values, t_floor, members, failures, dist)

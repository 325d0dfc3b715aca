"""Time integration of the displacement, re-labelling, flow maps, symmetries and conservation checks."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson, solve_ivp
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from ._kernels import cofactor3, det3
from .elliptic import ContractionError, NeumannReport, neumann_solve
from .fields import (
    FormPair,
    get_grid,
    grid_of,
    interpolate,
    inverse_transform,
    jacobian,
    read_snapshot,
    spectral_transform,
    wedge_residual_full,
)
from .norms import BnConstant, SobolevParams, dn_norm, gradient_stack, n_norm

MAX_REJECTIONS = 10


# -- vorticity presets ------------------------------------------------------------------


def abc_vorticity(n: int, amplitude: float = 0.25) -> np.ndarray:
    """Arnold-Beltrami-Childress field with unit coefficients; its own curl."""
    x = get_grid(n).points
    return amplitude * np.stack([
        np.sin(x[2]) + np.cos(x[1]),
        np.sin(x[0]) + np.cos(x[2]),
        np.sin(x[1]) + np.cos(x[0]),
    ])


def single_mode_vorticity(n: int, amplitude: float = 0.25) -> np.ndarray:
    """Axial vorticity (0, 0, cos lambda^1), the curl of (0, sin lambda^1, 0)."""
    x = get_grid(n).points
    z = np.zeros_like(x[0])
    return amplitude * np.stack([z, z, np.cos(x[0])])


def vorticity_preset(name: str, n: int, amplitude: float = 0.25, path: str | None = None) -> np.ndarray:
    if name == "abc":
        return abc_vorticity(n, amplitude)
    if name == "single-mode":
        return single_mode_vorticity(n, amplitude)
    if name == "zero":
        return np.zeros((3, n, n, n))
    if name == "file":
        if path is None:
            raise ValueError("the file preset needs a snapshot path")
        omega, _ = read_snapshot(path)
        if omega.shape != (3, n, n, n):
            raise ValueError(f"snapshot shape {omega.shape} does not match n={n}")
        return omega
    raise ValueError(f"unknown vorticity preset {name!r}")


# -- trajectory state -------------------------------------------------------------------


@dataclass
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 100
    params: SobolevParams = field(default_factory=SobolevParams)
    bn: BnConstant = field(default_factory=BnConstant)

    def solve(self, y: np.ndarray, omega: np.ndarray, v0: np.ndarray | None = None):
        return neumann_solve(y, omega, self.tol, max_iter=self.max_iter, params=self.params,
                             bn=self.bn, v0=v0)


@dataclass
class TrajectoryState:
    t: float
    y: np.ndarray
    omega: np.ndarray
    v: np.ndarray | None = None
    diagnostics: list[dict] = field(default_factory=list)

    @property
    def n(self) -> int:
        return grid_of(self.y).n

    def positions(self) -> np.ndarray:
        return get_grid(self.n).points + self.y

    def with_velocity(self, opts: SolverOptions | None = None) -> "TrajectoryState":
        if self.v is not None:
            return self
        opts = opts or SolverOptions()
        v, _ = opts.solve(self.y, self.omega)
        return dataclasses.replace(self, v=v)


def initial_state(omega: np.ndarray, y0: np.ndarray | None = None, t0: float = 0.0) -> TrajectoryState:
    y = np.zeros_like(omega) if y0 is None else np.asarray(y0, dtype=float)
    return TrajectoryState(t0, y, omega)


def volume_determinant(state_or_y) -> np.ndarray:
    """det(I + dy) at every grid point."""
    y = state_or_y.y if isinstance(state_or_y, TrajectoryState) else state_or_y
    return det3(jacobian(y) + np.eye(3).reshape(3, 3, 1, 1, 1))


def eulerian_vorticity_labels(y: np.ndarray, v: np.ndarray) -> np.ndarray:
    """curl_x v sampled at the label grid, via dv/dx = Jv Jx^-1."""
    jx = jacobian(y) + np.eye(3).reshape(3, 3, 1, 1, 1)
    jv = jacobian(v)
    cof = cofactor3(jx)
    det = det3(jx)
    # Jx^-1 = cof^T / det
    dvdx = np.einsum("Aa...,Ba...->AB...", jv, cof) / det
    return np.stack([dvdx[2, 1] - dvdx[1, 2], dvdx[0, 2] - dvdx[2, 0], dvdx[1, 0] - dvdx[0, 1]])


def pullback_axial(jac: np.ndarray, axial: np.ndarray) -> np.ndarray:
    """Axial vector of the pull-back of a 2-form with axial ``axial`` under a map with Jacobian ``jac``."""
    cof = cofactor3(jac)
    return np.einsum("Aa...,A...->a...", cof, axial)


def cauchy_invariant_residual(state: TrajectoryState, omega0: np.ndarray | None = None,
                              opts: SolverOptions | None = None) -> float:
    """sup |x^*(curl_x v) - Omega_0| over the label grid."""
    state = state.with_velocity(opts)
    jx = jacobian(state.y) + np.eye(3).reshape(3, 3, 1, 1, 1)
    det = det3(jx)
    if det.min() <= 0:
        raise ValueError("x-map is not orientation preserving")
    pulled = pullback_axial(jx, eulerian_vorticity_labels(state.y, state.v))
    ref = state.omega if omega0 is None else omega0
    return float(np.abs(pulled - ref).max())


def kinetic_energy(y: np.ndarray, v: np.ndarray) -> float:
    """Mean over physical space of |v|^2 / 2, computed in labels with the volume factor."""
    return float(np.mean(0.5 * np.sum(v ** 2, axis=0) * volume_determinant(y)))


# -- time stepping ----------------------------------------------------------------------


def _stage_velocity(y, omega, opts, v0, reports):
    v, rep = opts.solve(y, omega, v0)
    reports.append(rep)
    return v


def step(state: TrajectoryState, dt: float, opts: SolverOptions | None = None) -> TrajectoryState:
    """One classical RK4 step of dy/dt = v(y); each stage velocity is a Neumann solve.

    Raises :class:`BallExitError` if a stage leaves BN and :class:`ContractionError`
    if a solve stops contracting.
    """
    opts = opts or SolverOptions()
    reports: list[NeumannReport] = []
    y, om = state.y, state.omega
    k1 = state.v if state.v is not None else _stage_velocity(y, om, opts, None, reports)
    k2 = _stage_velocity(y + 0.5 * dt * k1, om, opts, k1, reports)
    k3 = _stage_velocity(y + 0.5 * dt * k2, om, opts, k2, reports)
    k4 = _stage_velocity(y + dt * k3, om, opts, k3, reports)
    y_new = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    v_new = _stage_velocity(y_new, om, opts, k4, reports)
    ratio = max((r.contraction_ratio for r in reports), default=0.0)
    iters = sum(r.iterations for r in reports)
    new = TrajectoryState(state.t + dt, y_new, om, v_new, list(state.diagnostics))
    new.diagnostics.append(diagnostics_row(new, opts, ratio, iters))
    return new


def diagnostics_row(state: TrajectoryState, opts: SolverOptions, ratio: float = 0.0, iterations: int = 0) -> dict:
    p = opts.params
    det = volume_determinant(state.y)
    return {
        "t": state.t,
        "n_y": n_norm(state.y, p, check_mean=False),
        "dn_dy": dn_norm(gradient_stack(state.y), p),
        "n_v": n_norm(state.v, p, check_mean=False) if state.v is not None else float("nan"),
        "max_det_dev": float(np.abs(det - 1.0).max()),
        "cauchy_residual": cauchy_invariant_residual(state) if state.v is not None else float("nan"),
        "contraction_ratio": ratio,
        "iterations": iterations,
    }


def run(
    state: TrajectoryState,
    dt: float,
    t_end: float,
    opts: SolverOptions | None = None,
    *,
    callback: Callable[[TrajectoryState], None] | None = None,
) -> TrajectoryState:
    """Advance to ``t_end``; a rejected step is retried with half the step size."""
    opts = opts or SolverOptions()
    if state.v is None:
        state = state.with_velocity(opts)
    direction = 1.0 if t_end >= state.t else -1.0
    dt = direction * abs(dt)
    eps = 1e-12 * max(1.0, abs(t_end))
    while direction * (t_end - state.t) > eps:
        h = dt if direction * (t_end - (state.t + dt)) > -eps else t_end - state.t
        for attempt in range(MAX_REJECTIONS + 1):
            try:
                state = step(state, h, opts)
                break
            except ContractionError as err:
                if attempt == MAX_REJECTIONS:
                    raise ContractionError(f"step at t={state.t:.6g} rejected {MAX_REJECTIONS} times: {err}",
                                           err.report) from err
                h *= 0.5
        if callback is not None:
            callback(state)
    return state


# -- re-labelling -----------------------------------------------------------------------


def mollify(y: np.ndarray, width: float) -> np.ndarray:
    """Spectral convolution with a unit-mass Gaussian, multiplier exp(-|k|^2 h^2 / 2)."""
    g = grid_of(y)
    return inverse_transform(spectral_transform(y) * np.exp(-0.5 * g.k_squared * width ** 2), g.n)


@dataclass
class RelabelResult:
    state: TrajectoryState
    shift: np.ndarray          # c, with old label = new label + c(new label)
    iterations: int
    identity_defect: float      # sup |x'(lambda') - x(r(lambda'))|


def relabel(state: TrajectoryState, width: float, *, tol: float = 1e-13, max_iter: int = 200) -> RelabelResult:
    """New labels lambda' = lambda + (y * m)(lambda).

    The inverse r(lambda') = lambda' + c(lambda') solves c = -(y * m)(lambda' + c)
    by contraction.  Returns y' = (y - y * m) o r and the pulled-back vorticity.
    """
    g = get_grid(state.n)
    ym = mollify(state.y, width)
    rest = state.y - ym
    base = g.points.reshape(3, -1).T
    c = -ym.reshape(3, -1)
    prev = np.inf
    for it in range(1, max_iter + 1):
        c_new = -interpolate(ym, base + c.T)
        delta = float(np.abs(c_new - c).max())
        c = c_new
        if delta <= tol:
            break
        if it > 3 and delta > 0.9 * prev:
            raise ContractionError(f"re-labelling shift iteration stalled (change {delta:.3e})")
        prev = delta
    else:
        raise ContractionError(f"re-labelling shift did not converge in {max_iter} iterations")
    points = base + c.T
    y_new = interpolate(rest, points).reshape(state.y.shape)
    shift = c.reshape(state.y.shape)
    omega_at = interpolate(state.omega, points).reshape(state.y.shape)
    jr = jacobian(shift) + np.eye(3).reshape(3, 3, 1, 1, 1)
    omega_new = pullback_axial(jr, omega_at)
    # physical positions must agree: lambda' + y'(lambda') = r + y(r)
    x_new = g.points + y_new
    x_old = points.T.reshape(state.y.shape) + interpolate(state.y, points).reshape(state.y.shape)
    defect = float(np.abs(x_new - x_old).max())
    new_state = TrajectoryState(state.t, y_new, omega_new, None, list(state.diagnostics))
    return RelabelResult(new_state, shift, it, defect)


# -- flow maps --------------------------------------------------------------------------


class VelocityHistory:
    """Velocity fields stored at times; cubic (Hermite if rates are given) in t, spectral in space."""

    def __init__(self, times: Sequence[float], fields: Sequence[np.ndarray],
                 rates: Sequence[np.ndarray] | None = None) -> None:
        self.times = np.asarray(times, dtype=float)
        data = np.stack([np.asarray(f, dtype=float) for f in fields])
        self.n = data.shape[-1]
        flat = data.reshape(len(self.times), -1)
        if rates is not None:
            d = np.stack([np.asarray(r, dtype=float) for r in rates]).reshape(len(self.times), -1)
            self._spline = CubicHermiteSpline(self.times, flat, d, axis=0)
        else:
            self._spline = CubicSpline(self.times, flat, axis=0)

    def field_at(self, t: float) -> np.ndarray:
        return self._spline(t).reshape(3, self.n, self.n, self.n)

    def __call__(self, t: float, points: np.ndarray) -> np.ndarray:
        """Velocity at (P, 3) points; returns (P, 3)."""
        return interpolate(self.field_at(t), points).T


@dataclass
class FlowMap:
    """phi(s, t, X) sampled at the label grid points X."""

    s: float
    t: float
    values: np.ndarray

    @property
    def displacement(self) -> np.ndarray:
        return self.values - get_grid(self.values.shape[-1]).points

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """phi(s, t, .) at (P, 3) points, by interpolating the periodic displacement."""
        points = np.atleast_2d(points)
        return points + interpolate(self.displacement, points).T


def flow_points(V: Callable[[float, np.ndarray], np.ndarray], s: float, t: float, points: np.ndarray,
                *, rtol: float = 1e-12, atol: float = 1e-12) -> np.ndarray:
    """Integrate dX/du = V(u, X) from u = t to u = s for (P, 3) starting points."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if s == t:
        return points.copy()
    shape = points.shape

    def rhs(u, z):
        return np.asarray(V(u, z.reshape(shape)), dtype=float).reshape(-1)

    sol = solve_ivp(rhs, (t, s), points.reshape(-1), method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"flow map integration failed: {sol.message}")
    return sol.y[:, -1].reshape(shape)


def flow_map(V: Callable[[float, np.ndarray], np.ndarray], s: float, t: float, n: int,
             *, rtol: float = 1e-12, atol: float = 1e-12) -> FlowMap:
    """phi(s, t, .) on the n-point label grid."""
    g = get_grid(n)
    base = g.points.reshape(3, -1).T
    out = flow_points(V, s, t, base, rtol=rtol, atol=atol)
    return FlowMap(s, t, out.T.reshape(3, n, n, n))


# -- symmetries -------------------------------------------------------------------------


@dataclass
class Snapshot:
    """A solution tuple at one time: x = G lambda + b + y, velocity v, vorticity Omega, rate x_dot."""

    t: float
    y: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    x_dot: np.ndarray
    linear: np.ndarray = field(default_factory=lambda: np.eye(3))
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def positions(self) -> np.ndarray:
        lam = get_grid(grid_of(self.y).n).points
        return np.einsum("ab,b...->a...", self.linear, lam) + self.offset.reshape(3, 1, 1, 1) + self.y


def snapshot_from_state(state: TrajectoryState, opts: SolverOptions | None = None) -> Snapshot:
    state = state.with_velocity(opts)
    return Snapshot(state.t, state.y.copy(), state.v.copy(), state.omega.copy(), state.v.copy())


def snapshot_residuals(snap: Snapshot) -> tuple[FormPair, np.ndarray]:
    """Oracle residual of the wedge equations and the kinematic residual x_dot - v."""
    return wedge_residual_full(snap.v, snap.y, snap.omega, linear=snap.linear), snap.x_dot - snap.v


def _rotate(R: np.ndarray, u: np.ndarray) -> np.ndarray:
    return np.einsum("ab,b...->a...", R, u)


SYMMETRY_NAMES = ("ttrans", "xtrans", "rot", "boost", "tscale", "xscale", "timeinv", "shake")


def _validate(name: str, params: dict) -> None:
    if name not in SYMMETRY_NAMES:
        raise ValueError(f"unknown symmetry {name!r}")
    if name == "rot":
        R = np.asarray(params["R"], dtype=float)
        if R.shape != (3, 3) or not np.allclose(R @ R.T, np.eye(3), atol=1e-12):
            raise ValueError("rot needs an orthogonal 3x3 matrix")
    if name in ("tscale", "xscale") and not params["alpha"] > 0:
        raise ValueError(f"{name} needs a positive scale")
    if name == "shake" and not (callable(params.get("beta")) and callable(params.get("beta_dot"))):
        raise ValueError("shake needs callables beta(t) and beta_dot(t)")


def symmetry_apply(name: str, params: dict, snap: Snapshot) -> Snapshot:
    """Map a solution tuple (t, x, v, Omega) to another one."""
    _validate(name, params)
    r = dataclasses.replace
    if name == "ttrans":
        return r(snap, t=snap.t + params["alpha"])
    if name == "xtrans":
        return r(snap, offset=snap.offset + np.asarray(params["alpha"], dtype=float))
    if name == "rot":
        R = np.asarray(params["R"], dtype=float)
        return r(snap, y=_rotate(R, snap.y), v=_rotate(R, snap.v), x_dot=_rotate(R, snap.x_dot),
                 linear=R @ snap.linear, offset=R @ snap.offset)
    if name == "boost":
        a = np.asarray(params["alpha"], dtype=float)
        ac = a.reshape(3, 1, 1, 1)
        return r(snap, offset=snap.offset + a * snap.t, v=snap.v + ac, x_dot=snap.x_dot + ac)
    if name == "tscale":
        a = float(params["alpha"])
        return r(snap, t=a * snap.t, v=snap.v / a, omega=snap.omega / a, x_dot=snap.x_dot / a)
    if name == "xscale":
        a = float(params["alpha"])
        return r(snap, y=a * snap.y, linear=a * snap.linear, offset=a * snap.offset,
                 v=a * snap.v, omega=a * a * snap.omega, x_dot=a * snap.x_dot)
    if name == "timeinv":
        return r(snap, t=-snap.t, v=-snap.v, omega=-snap.omega, x_dot=-snap.x_dot)
    # shake
    b = np.asarray(params["beta"](snap.t), dtype=float)
    bd = np.asarray(params["beta_dot"](snap.t), dtype=float).reshape(3, 1, 1, 1)
    return r(snap, offset=snap.offset + b, v=snap.v + bd, x_dot=snap.x_dot + bd)


def expected_residuals(name: str, params: dict, residuals: tuple[FormPair, np.ndarray]) -> tuple[FormPair, np.ndarray]:
    """How the residuals of a snapshot transform under a symmetry."""
    form, kin = residuals
    if name in ("ttrans", "xtrans", "boost", "shake"):
        return form, kin
    if name == "rot":
        R = np.asarray(params["R"], dtype=float)
        return FormPair(form.two_form, np.linalg.det(R) * form.three_form), _rotate(R, kin)
    if name == "tscale":
        a = float(params["alpha"])
        return form * (1.0 / a), kin / a
    if name == "xscale":
        a = float(params["alpha"])
        return FormPair(a ** 2 * form.two_form, a ** 3 * form.three_form), a * kin
    if name == "timeinv":
        return -form, -kin
    raise ValueError(f"unknown symmetry {name!r}")


def snapshot_distance(a: Snapshot, b: Snapshot) -> float:
    return float(max(
        abs(a.t - b.t), np.abs(a.y - b.y).max(), np.abs(a.v - b.v).max(), np.abs(a.omega - b.omega).max(),
        np.abs(a.x_dot - b.x_dot).max(), np.abs(a.linear - b.linear).max(), np.abs(a.offset - b.offset).max(),
    ))


# -- volume-preserving coordinates ------------------------------------------------------


def _diff4(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Fourth-order finite difference, one-sided at the two outermost rows."""
    f = np.moveaxis(f, axis, 0)
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * h)
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h)
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h)
    d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * h)
    d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * h)
    return np.moveaxis(d, 0, axis)


@dataclass
class VolumePreservingPatch:
    lam1: np.ndarray
    lam2: np.ndarray
    x3: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    lam3: np.ndarray
    minor: np.ndarray
    determinant: np.ndarray


def volume_preserving_pair(
    x1: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
    x2: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
    seed: Callable[[np.ndarray, np.ndarray], np.ndarray],
    lam_range: tuple[float, float] = (-0.5, 0.5),
    x3_range: tuple[float, float] = (-0.5, 0.5),
    n: int = 17,
    n3: int = 401,
    min_minor: float = 1e-6,
) -> VolumePreservingPatch:
    """Given x^1, x^2 as functions of (lambda^1, lambda^2, x^3), build lambda^3 with det d x / d lambda = 1.

    lambda^3 = seed(lambda^1, lambda^2) + int_{x3_min}^{x^3} (x^1_1 x^2_2 - x^1_2 x^2_1) dx^3.
    The returned determinant of d x / d lambda is computed independently from
    finite differences of the sampled fields.
    """
    a = np.linspace(*lam_range, n)
    c = np.linspace(*x3_range, n3)
    L1, L2, X3 = np.meshgrid(a, a, c, indexing="ij")
    f1, f2 = x1(L1, L2, X3), x2(L1, L2, X3)
    ha, hc = a[1] - a[0], c[1] - c[0]
    d = {(k, ax): _diff4(f, h, ax) for k, f in ((1, f1), (2, f2)) for ax, h in ((0, ha), (1, ha), (2, hc))}
    minor = d[(1, 0)] * d[(2, 1)] - d[(1, 1)] * d[(2, 0)]
    if np.abs(minor).min() < min_minor:
        raise ValueError("degenerate minor: (lambda^1, lambda^2, x^3) are not coordinates on this patch")
    lam3 = seed(L1[..., :1], L2[..., :1]) + cumulative_simpson(minor, dx=hc, axis=2, initial=0.0)
    # d x / d (l1, l2, x3) and d lambda / d (l1, l2, x3); det(dx/dlambda) = det(first) / det(second)
    one = np.ones_like(minor)
    zero = np.zeros_like(minor)
    jx = np.array([[d[(1, 0)], d[(1, 1)], d[(1, 2)]], [d[(2, 0)], d[(2, 1)], d[(2, 2)]], [zero, zero, one]])
    jl = np.array([[one, zero, zero], [zero, one, zero],
                   [_diff4(lam3, ha, 0), _diff4(lam3, ha, 1), _diff4(lam3, hc, 2)]])
    det = det3(jx) / det3(jl)
    return VolumePreservingPatch(L1, L2, X3, f1, f2, lam3, minor, det)

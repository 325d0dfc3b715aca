"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
Run just this file with ``pytest tests/test_acceptance.py -v``.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from _families import gaussian, gaussian_packet, shear_family, tilted_gaussian, trig_product_pair
from lagrangian_euler import dynamics as dyn
from lagrangian_euler import reference as ref
from lagrangian_euler import selfsim as ss
from lagrangian_euler import specfun as sf
from lagrangian_euler.cli import run_oracle_suite
from lagrangian_euler.elliptic import apply_L0, apply_L0_inverse, neumann_solve
from lagrangian_euler.fields import FormPair, curl, get_grid, interpolate, leray_project, random_field
from lagrangian_euler.norms import (BnConstant, BoxField, SobolevParams, composition_derivative_bound,
                                    dn_norm, gradient_stack, multi_indices, n_norm, pitt_check,
                                    product_constant)

pytestmark = pytest.mark.slow


def test_elliptic_exactness(verdict):
    n, rng = 32, np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        w = FormPair(curl(random_field(n, rng)), random_field(n, rng, components=1))
        worst = max(worst, (apply_L0(apply_L0_inverse(w)) - w).max_abs())
    elapsed = time.perf_counter() - start
    verdict(1, "L0 o L0^-1 = id", worst <= 1e-12 and elapsed < 10,
            f"max error {worst:.2e} (<= 1e-12), {elapsed:.1f} s (< 10 s)")


def test_oracle_equivalence(verdict):
    start = time.perf_counter()
    report = run_oracle_suite(seed=2, count=100, n=16)
    elapsed = time.perf_counter() - start
    worst = max(max(c["system"], c["reference"]) for c in report["cases"])
    control = run_oracle_suite(seed=2, count=3, n=16, corrupt=True)["pass"]
    verdict(2, "hand-expanded operators vs oracle", report["pass"] and not control and elapsed < 60,
            f"100 cases, max rel. error {worst:.2e} (<= 1e-10), corrupted control "
            f"{'caught' if not control else 'missed'}, {elapsed:.1f} s (< 60 s)")


def test_neumann_contraction(verdict):
    n, rng = 16, np.random.default_rng(3)
    ratios, residuals, consts = [], [], []
    for _ in range(50):
        y = random_field(n, rng, band=3)
        y *= rng.uniform(0.01, 0.1) / dn_norm(gradient_stack(y))
        om = curl(leray_project(random_field(n, rng, band=4)))
        _, rep = neumann_solve(y, om, 1e-12, bn=BnConstant(adaptive=False))
        ratios.append(rep.contraction_ratio)
        residuals.append(rep.residual)
        consts.append(rep.velocity_bound_ratio)
    spread = max(consts) / min(consts)
    ok = max(ratios) <= 0.5 and max(residuals) <= 1e-10 and spread < 2
    verdict(3, "Neumann contraction in BN", ok,
            f"max ratio {max(ratios):.3f} (<= 0.5), max residual {max(residuals):.1e} (<= 1e-10), "
            f"C spread {spread:.2f}x (< 2x)")


def test_conservation_over_run(verdict):
    n = 32
    opts = dyn.SolverOptions()
    start = time.perf_counter()
    state = dyn.run(dyn.initial_state(dyn.abc_vorticity(n)), 1e-3, 0.1, opts)
    elapsed = time.perf_counter() - start
    drift = float(np.abs(dyn.volume_determinant(state) - 1).max())
    cauchy = dyn.cauchy_invariant_residual(state, opts=opts)

    order_opts = dyn.SolverOptions(tol=1e-13, bn=BnConstant(5.0, adaptive=False))
    om = dyn.abc_vorticity(n, 1.0)
    finals = [dyn.run(dyn.initial_state(om), dt, 0.2, order_opts).y for dt in (0.2, 0.1, 0.05, 0.025)]
    errs = [np.abs(a - b).max() for a, b in zip(finals, finals[1:])]
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    ok = drift <= 1e-5 and cauchy <= 1e-4 and all(12 <= r <= 20 for r in ratios) and elapsed < 300
    verdict(4, "conservation over an ABC run", ok,
            f"det drift {drift:.1e} (<= 1e-5), Cauchy residual {cauchy:.1e} (<= 1e-4), "
            f"dt-halving ratios {ratios[0]:.1f}, {ratios[1]:.1f} (in [12, 20]), run {elapsed:.0f} s (< 300 s)")


def test_relabeling(verdict):
    n, rng = 32, np.random.default_rng(5)
    y = random_field(n, rng, band=3)
    y *= 0.05 / dn_norm(gradient_stack(y))
    opts = dyn.SolverOptions(tol=1e-13, bn=BnConstant(adaptive=False))
    state = dyn.initial_state(dyn.abc_vorticity(n), y).with_velocity(opts)
    res = dyn.relabel(state, 0.1)
    new = res.state.with_velocity(opts)
    pts = (get_grid(n).points + res.shift).reshape(3, -1).T

    def at_old_labels(f):
        return interpolate(f, pts).reshape(f.shape)

    shrink = n_norm(new.y, check_mean=False) / n_norm(state.y, check_mean=False)
    dv = new.v - at_old_labels(state.v)
    dv -= dv.mean(axis=(1, 2, 3), keepdims=True)       # velocity is fixed up to a Galilean boost
    dw = dyn.eulerian_vorticity_labels(new.y, new.v) - at_old_labels(dyn.eulerian_vorticity_labels(state.y, state.v))
    de = abs(dyn.kinetic_energy(new.y, new.v) - dyn.kinetic_energy(state.y, state.v))
    worst = max(float(np.abs(dv).max()), float(np.abs(dw).max()), de, res.identity_defect)
    verdict(5, "re-labelling", shrink <= 0.2 and worst <= 1e-6,
            f"N(y')/N(y) = {shrink:.3f} (<= 0.2), observables change {worst:.1e} (<= 1e-6)")


def test_reference_machinery(verdict):
    profile = ref.manufactured_profile(16, seed=0, band=1, size=0.01)
    s_values = [-0.4, -0.2, -0.1, -0.05]
    good = ref.power_law_reference(profile, 2.0, A=1.0, B=1.0)
    traj = ref.evolve_perturbation(good, np.zeros_like(profile), -0.05, -0.5, 0.05)
    C1, _ = ref.measure_growth_constant(good, traj)
    R1 = ref.measure_R1(good, traj.times)
    cond = ref.exponent_condition(1.0, 1.0, 2.0, C1, R1)
    fam = ref.backward_family(good, s_values, -0.5, 0.05)
    bad = ref.power_law_reference(profile, -1.25, A=1.0, B=1.0)
    control_cond = ref.exponent_condition(1.0, 1.0, -1.25, C1, R1)
    control = ref.backward_family(bad, s_values, -0.5, 0.05)
    ok = C1 * R1 < 1 and cond and fam.is_cauchy_trend() and not control_cond and not control.is_cauchy_trend()
    d = ", ".join(f"{x:.1e}" for x in fam.consecutive())
    dc = ", ".join(f"{x:.1e}" for x in control.consecutive())
    verdict(6, "backward perturbation family", ok,
            f"C1*R1 = {C1 * R1:.3f} (< 1), condition {cond}; distances {d} decreasing; "
            f"control distances {dc}")


def test_selfsimilar_algebra(verdict):
    rng = np.random.default_rng(7)
    worst_identity = worst_root = 0.0
    for _ in range(1000):
        q, ka = rng.uniform(0.2, 0.9), rng.uniform(0.55, 1.5)
        A = ss.constructed_fixed_point_matrix(q, ka, rng)
        mu = ss.fixed_point_eigen(q, ka)[1]
        worst_identity = max(worst_identity, ss.charpoly_identity_defect(A, mu))
        worst_root = max(worst_root, ss.predicted_root_defect(A, q, ka))
    boundary = (ss.energy_predicate("2/5") == (Fraction(0), False)
                and not ss.ka_lower_bound_holds(Fraction(1, 2))
                and ss.ka_bound_predicate((4.0, math.sqrt(2), math.sqrt(2)), 0.5))
    ok = worst_identity <= 1e-9 and worst_root <= 1e-9 and boundary
    verdict(7, "fixed-point eigenvalue algebra", ok,
            f"identity defect {worst_identity:.1e}, predicted-root defect {worst_root:.1e} (<= 1e-9) on 1000 "
            f"matrices; boundary cases {'exact' if boundary else 'wrong'}")


def _symmetry_params(name, rng):
    if name == "ttrans":
        return {"alpha": float(rng.uniform(-1, 1))}
    if name in ("xtrans", "boost"):
        return {"alpha": rng.standard_normal(3)}
    if name == "rot":
        return {"R": Rotation.random(random_state=rng).as_matrix()}
    if name in ("tscale", "xscale"):
        return {"alpha": float(rng.uniform(0.5, 2.0))}
    if name == "shake":
        a, b = rng.standard_normal((2, 3))
        return {"beta": lambda t: a * np.sin(t) + b * t ** 2, "beta_dot": lambda t: a * np.cos(t) + 2 * b * t}
    return {}


def _compose(name, p1, p2):
    if name == "rot":
        return {"R": p2["R"] @ p1["R"]}
    if name in ("tscale", "xscale"):
        return {"alpha": p1["alpha"] * p2["alpha"]}
    return {"alpha": p1["alpha"] + p2["alpha"]}


def test_symmetry_suites(verdict):
    rng = np.random.default_rng(8)
    n = 16
    y = random_field(n, rng, band=3)
    y *= 0.05 / dn_norm(gradient_stack(y))
    snap = dyn.snapshot_from_state(dyn.initial_state(dyn.abc_vorticity(n), y), dyn.SolverOptions(tol=1e-13))
    base = dyn.snapshot_residuals(snap)

    residual = composition = 0.0
    for name in dyn.SYMMETRY_NAMES:
        params = _symmetry_params(name, rng)
        form, kin = dyn.snapshot_residuals(dyn.symmetry_apply(name, params, snap))
        exp_form, exp_kin = dyn.expected_residuals(name, params, base)
        residual = max(residual, (form - exp_form).max_abs(), float(np.abs(kin - exp_kin).max()))
        if name in ("ttrans", "xtrans", "rot", "tscale", "xscale", "boost"):
            p2 = _symmetry_params(name, rng)
            two = dyn.symmetry_apply(name, p2, dyn.symmetry_apply(name, params, snap))
            composition = max(composition, dyn.snapshot_distance(two, dyn.symmetry_apply(name, _compose(name, params, p2), snap)))
    twice = dyn.symmetry_apply("timeinv", {}, dyn.symmetry_apply("timeinv", {}, snap))
    involution = dyn.snapshot_distance(twice, snap)

    M = ss.linear_css_matrix(np.random.default_rng(9))
    w = ss.vorticity_of_linear(M)
    v = lambda t, x: x @ M.T / abs(t)
    om = lambda t, x: np.broadcast_to(w / abs(t), x.shape)
    pts = rng.standard_normal((6, 3))
    group = catalog_residual = 0.0
    for H in ss.subgroup_catalog():
        for _ in range(5):
            g, h = H.sample(rng), H.sample(rng)
            if not (H.contains(g * h) and H.contains(g.inverse()) and H.contains(ss.GroupElement.identity())):
                group = math.inf
            lhs = ss.act(g * h, v)(-0.6, pts)
            rhs = ss.act(g, ss.act(h, v))(-0.6, pts)
            group = max(group, float(np.abs(lhs - rhs).max()))
            # the group acts on solutions, so the transformed linear flow must stay exact
            gv, gw = ss.act(g, v), _act_vorticity(g, om)
            jet = ss.jet_from_callables(gv, -0.6, pts, omega=gw)
            catalog_residual = max(catalog_residual, max(ss.residual_norms(ss.eulerian_residual(jet)).values()))
    worst = max(residual, composition, involution, group, catalog_residual)
    verdict(8, "symmetry suites", worst <= 1e-9,
            f"residual covariance {residual:.1e}, compositions {composition:.1e}, involution {involution:.1e}, "
            f"catalog group laws {group:.1e}, catalog residuals {catalog_residual:.1e} (all <= 1e-9)")


def _act_vorticity(g, omega):
    """Vorticity of act(g, v), which is a R omega(a t, b sigma R^T x)."""
    a, b, s, R = g.a, g.b, g.sigma, np.asarray(g.R)

    def gw(t, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return a * np.asarray(omega(a * t, b * s * pts @ R), dtype=float) @ R.T
    return gw


def test_specfun_identities(verdict):
    rng = np.random.default_rng(10)
    worst = 0.0
    for alpha in rng.uniform(0.3, 0.7, 20):
        fam = sf.build_family(alpha, "0.3,0.7", 6)
        worst = max(worst, sf.leading_defect(fam), sf.recursion_check(fam), fam.h_agreement())
    xs = np.linspace(0.2, 1.5, 40)
    raw = sf.raw_family_certificate(0.5, 3, 3, xs)
    cert = sf.independence_certificate(Fraction(1, 2), "0.3,0.7", 3, 3, xs)
    rates = [sf.pole_cancellation_test(m, Fraction(1, 2), "0.3,0.7", 1e-4)
             / sf.pole_cancellation_test(m, Fraction(1, 2), "0.3,0.7", 5e-5) for m in (2, 3, 4)]
    ok = worst <= 1e-10 and cert > 1e-8 and raw < 1e-12 and all(1.9 <= r <= 2.1 for r in rates)
    verdict(9, "special-function family", ok,
            f"max identity defect {worst:.1e} (<= 1e-10) over 20 alpha; min singular value at 1/2: "
            f"g-family {cert:.1e} (> 0), raw {raw:.1e}; defect ratio per halved eps "
            + ", ".join(f"{r:.3f}" for r in rates) + " (~2)")


def test_norm_suites(verdict):
    rng = np.random.default_rng(11)
    pitt = [pitt_check(BoxField.from_function(gaussian(w), 48, 8.0 * w)) for w in np.geomspace(0.5, 2.0, 10)]
    pitt_spread = max(pitt) / min(pitt)

    box = [product_constant(BoxField.from_function(gaussian_packet(rng), 16, 6.0),
                            BoxField.from_function(gaussian_packet(rng), 16, 6.0)) for _ in range(20)]
    torus = [product_constant(*trig_product_pair(16, rng)) for _ in range(20)]
    prod_spread = max(max(box) / min(box), max(torus) / min(torus))

    first = [(a, (0, 0, 0)) for a in multi_indices(1)]
    worst = 0.0
    for rate in (0.1, 0.3, 1.0):
        y_map, vel = shear_family(rate)
        for S in (first, SobolevParams(2, 1).index_pairs()):
            lhs, rhs = composition_derivative_bound(tilted_gaussian, y_map, vel, S, n=32)
            worst = max(worst, lhs / rhs)
    ok = pitt_spread < 1 + 1e-6 and prod_spread < 2 and worst <= 1 + 1e-3
    verdict(10, "norm inequalities", ok,
            f"Pitt ratio {min(pitt):.4f}..{max(pitt):.4f} over 10 dilations, product-constant spread "
            f"{prod_spread:.2f}x (< 2x), composition lhs/rhs <= {worst:.3f} (<= 1 + 1e-3)")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))

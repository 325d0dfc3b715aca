"""Command-line entry point.

Exit codes: 0 ok, 1 configuration error, 2 solver failure, 3 suite failure.
Every run that writes an output directory first echoes its validated
configuration to ``config.json`` there; ``lagrangian-euler rerun DIR``
replays it.
"""

from __future__ import annotations

import csv
import io
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import dynamics as dyn
from . import reference as ref
from . import selfsim as ss
from . import specfun as sf
from .elliptic import ContractionError, apply_L0, apply_Ly, apply_Ly1
from .fields import FormPair, random_field, wedge_residual_full, write_snapshot
from .norms import BnConstant, SobolevParams

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_SUITE = 0, 1, 2, 3

DIAGNOSTIC_COLUMNS = ("t", "n_y", "dn_dy", "n_v", "max_det_dev", "cauchy_residual", "contraction_ratio", "iterations")


class SuiteFailure(click.ClickException):
    exit_code = EXIT_SUITE


class SolverFailure(click.ClickException):
    exit_code = EXIT_SOLVER


class ConfigError(click.ClickException):
    exit_code = EXIT_CONFIG


# -- helpers ----------------------------------------------------------------------------


def _params(text: str) -> SobolevParams:
    try:
        return SobolevParams.parse(text)
    except (ValueError, TypeError) as err:
        raise ConfigError(f"bad Sobolev parameters {text!r}: {err}") from err


def _prepare_out(out: str | None, command: str, config: dict) -> Path | None:
    if out is None:
        return None
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    (path / "config.json").write_text(json.dumps({"command": command, **config}, indent=2, sort_keys=True) + "\n")
    return path


def _write_json(path: Path | None, name: str, payload) -> str:
    text = json.dumps(payload, indent=2, sort_keys=True, default=float) + "\n"
    if path is not None:
        (path / name).write_text(text)
    return text


def _write_rows(path: Path | None, name: str, rows: list[dict], columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(float(r[k])) if isinstance(r[k], (float, np.floating)) else r[k]) for k in columns})
    if path is not None:
        (path / name).write_text(buf.getvalue())
    return buf.getvalue()


def _check_grid(n: int) -> None:
    if n < 8 or n & (n - 1):
        raise ConfigError(f"grid size must be a power of two >= 8, got {n}")


# -- root -------------------------------------------------------------------------------


@click.group()
def cli() -> None:
    """Lagrangian-gauge Euler solver, perturbation machinery and self-similarity checkers."""


# -- solve ------------------------------------------------------------------------------


def _solve(n, dt, t_end, preset, amplitude, vorticity_file, tol, bn_radius, sobolev, out):
    _check_grid(n)
    if dt <= 0 or t_end < 0:
        raise ConfigError("need dt > 0 and t_end >= 0")
    config = dict(n=n, dt=dt, t_end=t_end, preset=preset, amplitude=amplitude,
                  vorticity_file=vorticity_file, tol=tol, bn_radius=bn_radius, sobolev=sobolev)
    params = _params(sobolev)
    try:
        omega = dyn.vorticity_preset(preset, n, amplitude, vorticity_file)
    except (ValueError, OSError) as err:
        raise ConfigError(str(err)) from err
    path = _prepare_out(out, "solve", config)
    opts = dyn.SolverOptions(tol=tol, params=params, bn=BnConstant(bn_radius))
    try:
        state = dyn.initial_state(omega).with_velocity(opts)
        state.diagnostics.append(dyn.diagnostics_row(state, opts))
        state = dyn.run(state, dt, t_end, opts)
    except ContractionError as err:
        raise SolverFailure(f"solver failure: {err}") from err
    text = _write_rows(path, "diagnostics.csv", state.diagnostics, DIAGNOSTIC_COLUMNS)
    if path is not None:
        write_snapshot(path / "y.lefs", state.y, state.t)
        write_snapshot(path / "omega.lefs", state.omega, state.t)
    else:
        click.echo(text, nl=False)
    return state


@cli.command()
@click.option("--n", default=16, show_default=True, help="Grid points per axis (power of two).")
@click.option("--dt", default=1e-3, show_default=True)
@click.option("--t-end", default=0.01, show_default=True)
@click.option("--preset", default="abc", show_default=True, type=click.Choice(["abc", "single-mode", "zero", "file"]))
@click.option("--amplitude", default=0.25, show_default=True)
@click.option("--vorticity-file", default=None, help="Snapshot file for --preset file.")
@click.option("--tol", default=1e-10, show_default=True)
@click.option("--bn-radius", default=0.1, show_default=True)
@click.option("--sobolev", default="2,0", show_default=True, help="M,L")
@click.option("--out", default=None, help="Output directory (diagnostics.csv, snapshots, config.json).")
def solve(**kw):
    """Integrate the Lagrangian system with RK4 and write per-step diagnostics."""
    _solve(**kw)


# -- relabel ----------------------------------------------------------------------------


def _relabel(n, dt, t_end, amplitude, width, out):
    _check_grid(n)
    config = dict(n=n, dt=dt, t_end=t_end, amplitude=amplitude, width=width)
    path = _prepare_out(out, "relabel", config)
    opts = dyn.SolverOptions(bn=BnConstant(adaptive=False))
    try:
        state = dyn.run(dyn.initial_state(dyn.abc_vorticity(n, amplitude)), dt, t_end, opts)
        res = dyn.relabel(state, width)
        new = res.state.with_velocity(opts)
    except ContractionError as err:
        raise SolverFailure(f"solver failure: {err}") from err
    from .norms import n_norm
    report = {
        "t": state.t,
        "n_y_before": n_norm(state.y, check_mean=False),
        "n_y_after": n_norm(new.y, check_mean=False),
        "iterations": res.iterations,
        "identity_defect": res.identity_defect,
        "energy_before": dyn.kinetic_energy(state.y, state.v),
        "energy_after": dyn.kinetic_energy(new.y, new.v),
    }
    click.echo(_write_json(path, "relabel.json", report), nl=False)


@cli.command()
@click.option("--n", default=16, show_default=True)
@click.option("--dt", default=1e-2, show_default=True)
@click.option("--t-end", default=0.2, show_default=True)
@click.option("--amplitude", default=0.25, show_default=True)
@click.option("--width", default=0.3, show_default=True, help="Mollifier width.")
@click.option("--out", default=None)
def relabel(**kw):
    """Run the ABC preset, then re-label and report norms before and after."""
    _relabel(**kw)


# -- perturb ----------------------------------------------------------------------------


def _perturb(n, exponent, a, b, size, seed, s_values, t_floor, dt, out):
    _check_grid(n)
    try:
        s_list = [float(s) for s in s_values.split(",")]
    except ValueError as err:
        raise ConfigError(f"bad --s-values: {err}") from err
    config = dict(n=n, exponent=exponent, a=a, b=b, size=size, seed=seed, s_values=s_values,
                  t_floor=t_floor, dt=dt)
    path = _prepare_out(out, "perturb", config)
    try:
        flow = ref.power_law_reference(ref.manufactured_profile(n, seed=seed, size=size), exponent, A=a, B=b)
        times = np.linspace(t_floor, max(s_list), 6)
        R1 = ref.measure_R1(flow, times)
        fam = ref.backward_family(flow, s_list, t_floor, dt)
    except (ValueError,) as err:
        raise ConfigError(str(err)) from err
    except ContractionError as err:
        raise SolverFailure(f"solver failure: {err}") from err
    report = {
        "s_values": s_list,
        "t_floor": t_floor,
        "consecutive_distances": fam.consecutive(),
        "decreasing": fam.is_cauchy_trend(),
        "R1": R1,
        "failures": fam.failures,
    }
    click.echo(_write_json(path, "family.json", report), nl=False)


@cli.command()
@click.option("--n", default=16, show_default=True)
@click.option("--exponent", default=2.0, show_default=True, help="Time exponent of the reference velocity.")
@click.option("--a", default=1.0, show_default=True)
@click.option("--b", default=1.0, show_default=True)
@click.option("--size", default=0.01, show_default=True, help="DN size of the profile gradient.")
@click.option("--seed", default=0, show_default=True)
@click.option("--s-values", default="-0.4,-0.2,-0.1,-0.05", show_default=True)
@click.option("--t-floor", default=-0.5, show_default=True)
@click.option("--dt", default=0.05, show_default=True)
@click.option("--out", default=None)
def perturb(**kw):
    """Backward perturbation family around a manufactured power-law reference."""
    _perturb(**kw)


# -- selfsim ----------------------------------------------------------------------------


@cli.group()
def selfsim() -> None:
    """Self-similarity certificate checkers."""


@selfsim.command()
@click.option("--q", type=float, required=True)
@click.option("--ka", type=float, required=True)
def eigen(q, ka):
    """Eigenvalue constraints at a fixed point of the return map."""
    if not (q > 0 and ka > 0):
        raise ConfigError("need q > 0 and ka > 0")
    lam1, prod = ss.fixed_point_eigen(q, ka)
    click.echo(f"lambda1 = {lam1:.12g}")
    click.echo(f"lambda2*lambda3 = {prod:.12g}")


@selfsim.command("css-check")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option("--ka", type=float, default=None, help="Overrides the exponent stored in the file.")
def css_check(path, ka):
    """Residuals of a profile stored as .npz with xi, zeta, Z, gamma, spacing (and ka)."""
    try:
        data = np.load(path)
        ka = float(data["ka"]) if ka is None else ka
        prof = ss.CssProfile(data["xi"], data["zeta"], data["Z"], data["gamma"], float(data["spacing"]))
        res = ss.css_residual(prof, ka)
    except (KeyError, ValueError) as err:
        raise ConfigError(f"{path}: {err}") from err
    report = {"ka": ka, "residuals": res.norms(), "induced": ss.induce_and_check(prof, ka, [-1.0])[0].residual}
    click.echo(_write_json(None, "", report), nl=False)


@selfsim.command()
@click.option("--ka", type=float, required=True)
@click.option("--lmax", type=int, default=3, show_default=True)
def modes(ka, lmax):
    """Mode table of the expansion at infinity and elliptic-mode exponents."""
    if ka <= 0 or lmax < 1:
        raise ConfigError("need ka > 0 and lmax >= 1")
    table = ss.ModeTable(K=lmax + 3, ka=ka)
    click.echo(table.render())
    for l in range(1, lmax + 1):
        tp, xp = ss.elliptic_velocity_exponents(l, ka)
        click.echo(f"elliptic l={l}: {2 * l + 1} modes, velocity ~ |t|^{tp:.6g} |x|^{xp}")
    B, ok = ss.energy_predicate(ka)
    click.echo(f"energy exponent B = {float(B):.6g} ({'bounded' if ok else 'unbounded'} ball energy)")


@selfsim.command()
@click.option("--list", "list_", is_flag=True, help="List the catalog (default).")
@click.option("--json", "as_json", is_flag=True)
def subgroups(list_, as_json):
    """Stabilizer subgroup catalog with the swirl-free flag."""
    rows = ss.catalog_report()
    if as_json:
        click.echo(_write_json(None, "", rows), nl=False)
        return
    for r in rows:
        click.echo(f"row {r['row']}  H1={r['h1']:<10} H2={r['h2']:<7} H3={r['h3']:<7} dim={r['dim']} "
                   f"no_swirl={'y' if r['no_swirl'] else 'n'}  [{r['rule']}]")


# -- specfun ----------------------------------------------------------------------------


@cli.group()
def specfun() -> None:
    """Independent replacement for x^(alpha m + n)."""


def _specfun_table(alpha, interval, mmax, out):
    try:
        fam = sf.build_family(alpha, interval, mmax)
    except (ValueError, ZeroDivisionError) as err:
        raise ConfigError(str(err)) from err
    text = _write_rows(None, "", sf.family_table(fam), ("m", "alpha_power", "x_power", "re", "im"))
    cert = sf.certificates(fam)
    if out is None:
        click.echo(text, nl=False)
        click.echo(json.dumps(cert, sort_keys=True, default=float))
    else:
        Path(out).write_text(text)
        Path(out).with_suffix(".json").write_text(json.dumps(cert, indent=2, sort_keys=True, default=float) + "\n")


@specfun.command()
@click.option("--alpha", type=float, required=True)
@click.option("--interval", default="0.5,1.5", show_default=True, help="Closed interval a,b.")
@click.option("--mmax", type=int, default=4, show_default=True)
@click.option("--out", default=None, help="CSV path; certificates go next to it as .json.")
def table(**kw):
    """Coefficient table of g_0..g_mmax and identity certificates."""
    _specfun_table(**kw)


# -- oracle suite -----------------------------------------------------------------------


def run_oracle_suite(seed: int = 0, count: int = 10, n: int = 16, corrupt: bool = False,
                     tol: float = 1e-10) -> dict:
    """Hand-expanded operators against the exterior-algebra residual.

    Each case draws (v, y, Omega, V); checks the solver residual and the
    reference-flow residual with v = V + w.  ``corrupt`` drops the quadratic
    part of L_y, which the suite must detect.
    """
    rng = np.random.default_rng(seed)
    ly = apply_Ly1 if corrupt else apply_Ly
    cases = []
    for i in range(count):
        v = random_field(n, rng, band=n // 4)
        y = 0.1 * random_field(n, rng, band=n // 4)
        om = random_field(n, rng, band=n // 4)
        V = random_field(n, rng, band=n // 4)
        errs = []
        for label, vel in (("system", v), ("reference", V + v)):
            o = wedge_residual_full(vel, y, om)
            h = apply_L0(vel) - ly(y, vel) - FormPair(om, np.zeros(om.shape[1:]))
            scale = max(np.abs(o.two_form).max(), np.abs(o.three_form).max(), 1e-300)
            err = max(np.abs(h.two_form - o.two_form).max(), np.abs(h.three_form - 0.5 * o.three_form).max()) / scale
            errs.append((label, float(err)))
        cases.append({"case": i, **{k: e for k, e in errs}, "pass": all(e <= tol for _, e in errs)})
    return {"seed": seed, "count": count, "n": n, "corrupt": corrupt, "tolerance": tol,
            "cases": cases, "pass": all(c["pass"] for c in cases)}


@cli.command()
@click.option("--seed", default=0, show_default=True)
@click.option("--count", default=10, show_default=True)
@click.option("--n", default=16, show_default=True)
@click.option("--corrupt", is_flag=True, help="Test hook: corrupt the operator under test.")
@click.option("--out", default=None)
def oracle(seed, count, n, corrupt, out):
    """Oracle-equivalence suite; exit code 3 on failure."""
    _check_grid(n)
    if count < 0:
        raise ConfigError("count must be non-negative")
    path = _prepare_out(out, "oracle", dict(seed=seed, count=count, n=n, corrupt=corrupt))
    report = run_oracle_suite(seed, count, n, corrupt)
    click.echo(_write_json(path, "oracle.json", report), nl=False)
    if not report["pass"]:
        raise SuiteFailure("oracle suite failed")


# -- rerun ------------------------------------------------------------------------------

_RERUN = {
    "solve": _solve,
    "relabel": _relabel,
    "perturb": _perturb,
}


@cli.command()
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
@click.option("--out", default=None, help="Where to write the replay (defaults to DIRECTORY/rerun).")
def rerun(directory, out):
    """Replay a run from the config.json echoed into its output directory."""
    try:
        cfg = json.loads((Path(directory) / "config.json").read_text())
        command = cfg.pop("command")
    except (OSError, ValueError, KeyError) as err:
        raise ConfigError(f"cannot read config from {directory}: {err}") from err
    target = out or str(Path(directory) / "rerun")
    if command == "oracle":
        ctx = click.get_current_context()
        ctx.invoke(oracle, out=target, **cfg)
        return
    if command not in _RERUN:
        raise ConfigError(f"unknown command {command!r} in config")
    _RERUN[command](out=target, **cfg)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="lagrangian-euler", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return EXIT_CONFIG
    except click.ClickException as err:
        err.show()
        return err.exit_code if isinstance(err, (SuiteFailure, SolverFailure)) else EXIT_CONFIG
    except ContractionError as err:
        click.echo(f"solver failure: {err}", err=True)
        return EXIT_SOLVER
    except ValueError as err:
        click.echo(f"Error: {err}", err=True)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

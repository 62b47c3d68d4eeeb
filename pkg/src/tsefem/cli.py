"""Command-line drivers: taylor-green, stokes-convergence, cylinder, resum-demo."""
from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import QUAD5, QuadratureData, assemble_forms
from .mesh import MeshError, read_gmsh
from .problems import cylinder_channel, taylor_green
from .resummation import factorial_sum, partial_sum
from .series import StabilizationPlan, compute_modes, mode_error
from .spaces import MixedSpace, build_taylor_hood
from .steady import steady_navier_stokes
from .timeloop import ContinuationFlow, FlowConfig, kinetic_energy
from .validation import stokes_time_sweep

OUTPUT_ENV = "TSEFEM_OUTPUT"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- output helpers

def atomic_write(path, text: str) -> None:
    """Write through a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return "" if v is None else str(v)


def write_csv(path, header, rows) -> None:
    """CSV with a header row; reals carry 17 significant digits."""
    header = list(header)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        if isinstance(row, dict):
            row = [row.get(h) for h in header]
        row = list(row)
        if len(row) != len(header):
            raise ValueError("ragged table row")
        w.writerow([_fmt(v) for v in row])
    atomic_write(path, buf.getvalue())


def _vtk_points_cells(space: MixedSpace, subdivide: bool):
    mesh = space.mesh
    if not subdivide:
        return mesh.vertices, mesh.cells, mesh.num_vertices
    n = space.cell_nodes
    v0, v1, v2, m01, m12, m20 = (n[:, i] for i in range(6))
    cells = np.vstack([np.column_stack(c) for c in
                       ((v0, m01, m20), (m01, v1, m12), (m20, m12, v2), (m01, m12, m20))])
    return space.node_coords, cells, space.num_nodes


def write_vtk(path, space: MixedSpace, u, p, subdivide: bool = False) -> None:
    """Legacy ASCII VTK unstructured grid with point velocity and pressure."""
    pts, cells, npts = _vtk_points_cells(space, subdivide)
    u = np.asarray(u, float)
    p = np.asarray(p, float)
    vel = np.column_stack([u[0:2 * npts:2], u[1:2 * npts:2], np.zeros(npts)])
    pres = np.empty(npts)
    nv = space.mesh.num_vertices
    pres[:nv] = p
    if npts > nv:
        e = space.edges
        pres[nv:] = 0.5 * (p[e[:, 0]] + p[e[:, 1]])
    out = ["# vtk DataFile Version 2.0", "tsefem field", "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {npts} double"]
    out += [f"{x:.17g} {y:.17g} 0" for x, y in pts]
    out.append(f"CELLS {len(cells)} {4 * len(cells)}")
    out += [f"3 {a} {b} {c}" for a, b, c in cells]
    out.append(f"CELL_TYPES {len(cells)}")
    out += ["5"] * len(cells)
    out.append(f"POINT_DATA {npts}")
    out.append("VECTORS velocity double")
    out += [f"{a:.17g} {b:.17g} {c:.17g}" for a, b, c in vel]
    out.append("SCALARS pressure double 1")
    out.append("LOOKUP_TABLE default")
    out += [f"{v:.17g}" for v in pres]
    atomic_write(path, "\n".join(out) + "\n")


def write_manifest(path, config: dict) -> None:
    lines = [f"{k}={_fmt(v)}" for k, v in sorted(config.items())]
    atomic_write(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------- parsing

def parse_stab(text: str | None) -> StabilizationPlan:
    """``m=2,c=2`` (C_h = c^m), ``m=2`` (C_h = 1), ``m=2,growth=inverse_rank``, ``alpha0=1e-4``."""
    if text is None or text.strip().lower() in ("", "off", "none"):
        return StabilizationPlan.off()
    kw = {}
    for item in text.split(","):
        if "=" not in item:
            raise ConfigError(f"bad stabilization item {item!r} (expected key=value)")
        key, val = (s.strip() for s in item.split("=", 1))
        if key in ("m", "c", "alpha0"):
            try:
                kw[key] = float(val)
            except ValueError:
                raise ConfigError(f"stabilization {key} must be a number") from None
        elif key in ("growth", "size_mode"):
            kw[key] = val
        else:
            raise ConfigError(f"unknown stabilization key {key!r}")
    if "c" in kw and "growth" not in kw:
        kw["growth"] = "power"
    try:
        return StabilizationPlan(enabled=True, **kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive(kind):
    def conv(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"expected a positive value, got {text}")
        return v
    return conv


def read_config_file(path) -> dict:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    for i, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{i}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tsefem", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, rank=4):
        p.add_argument("--config", help="key=value file providing defaults")
        p.add_argument("--re", type=_positive(float), dest="Re")
        p.add_argument("--rank", type=int, default=rank, help="truncation rank N")
        p.add_argument("--stab", help="stabilization, e.g. m=2,c=2 (C_h = c^m) or m=2")
        p.add_argument("--no-stab", action="store_true")
        p.add_argument("--summator", choices=("factorial", "partial"), default="factorial")
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV}/<command>)")

    p = sub.add_parser("taylor-green", help="Taylor-Green vortex on the unit square")
    common(p)
    p.add_argument("--n", type=_positive(int), default=32)
    p.add_argument("--tau", type=_positive(float), default=1e-3)
    p.add_argument("--t-final", type=_positive(float), default=0.1)
    p.add_argument("--snapshot-every", type=int, default=0)
    p.add_argument("--subdivide", action="store_true")
    p.set_defaults(Re=100.0)

    p = sub.add_parser("stokes-convergence", help="time self-convergence of the Stokes flow")
    common(p)
    p.add_argument("--n", type=_positive(int), default=32)
    p.add_argument("--taus", type=_float_list, default=[1e-2, 2e-3, 4e-4])
    p.add_argument("--ranks", type=_int_list, default=[2, 3, 4])
    p.add_argument("--t-final", type=_positive(float), default=None)
    p.set_defaults(Re=100.0)

    p = sub.add_parser("cylinder", help="channel flow past a cylinder")
    common(p, rank=5)
    p.add_argument("--resolution", type=_positive(int), default=35)
    p.add_argument("--segments", type=int, default=None)
    p.add_argument("--gmsh", help="MSH 2.2 ASCII mesh with physical tags 1..4")
    p.add_argument("--tau", type=_positive(float), default=0.04)
    p.add_argument("--t-final", type=_positive(float), default=1.0)
    p.add_argument("--snapshot-every", type=int, default=0)
    p.add_argument("--speed", type=_positive(float), default=1.0,
                   help="reference speed in the drag/lift normalization")
    p.add_argument("--subdivide", action="store_true")
    p.set_defaults(Re=400.0)

    p = sub.add_parser("resum-demo", help="factorial-series resummation of model series")
    p.add_argument("--series", choices=("euler", "geometric", "exp"), default="euler")
    p.add_argument("--t", type=_positive(float), default=0.2)
    p.add_argument("--rank", type=int, default=25)
    p.add_argument("--out")
    return ap


def _config_defaults(sub: argparse.ArgumentParser, path) -> dict:
    """Convert a key=value file into parser defaults (command-line flags still win)."""
    actions = {a.dest: a for a in sub._actions}
    out = {}
    for key, raw in read_config_file(path).items():
        dest = "Re" if key == "re" else key
        act = actions.get(dest)
        if act is None or dest in ("help", "config"):
            raise ConfigError(f"unknown config key {key!r}")
        if act.nargs == 0:                      # store_true flags
            out[dest] = raw.lower() in ("1", "true", "yes", "on")
            continue
        try:
            out[dest] = act.type(raw) if act.type else raw
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise ConfigError(f"config key {key}: {exc}") from None
        if act.choices is not None and out[dest] not in act.choices:
            raise ConfigError(f"config key {key}: {raw!r} not in {sorted(act.choices)}")
    return out


def _out_dir(args) -> Path:
    if args.out:
        out = Path(args.out)
    else:
        out = Path(os.environ.get(OUTPUT_ENV, "runs")) / args.command
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return out


def _plan(args) -> StabilizationPlan:
    return StabilizationPlan.off() if args.no_stab else parse_stab(args.stab)


def _manifest(args, plan=None, **extra) -> dict:
    cfg = dict(vars(args))
    for k, v in list(cfg.items()):
        if isinstance(v, list):
            cfg[k] = ",".join(_fmt(x) for x in v)
    if plan is not None:
        cfg["stabilization"] = plan.describe()
    cfg["version"] = __version__
    cfg.update(extra)
    return cfg


# ---------------------------------------------------------------- drivers

def run_taylor_green(args) -> int:
    out = _out_dir(args)
    plan = _plan(args)
    pr = taylor_green(args.Re, args.n)
    space = build_taylor_hood(pr.mesh)
    forms = assemble_forms(space)
    qd = QuadratureData(space, QUAD5)
    u0 = space.interpolate_velocity(pr.initial)
    modes = compute_modes(space, forms, u0, pr.bc, plan, args.Re, args.rank, qd=qd)
    write_csv(out / "modes_error.csv", ["k", "e_k_h", "mode_norm"],
              [[k, mode_error(space, modes, pr.exact_mode, k, qd), float(np.linalg.norm(U))]
               for k, U in enumerate(modes.velocity)])

    cfg = FlowConfig(args.Re, args.tau, args.rank, args.summator, plan)
    flow = ContinuationFlow(space, pr.bc, cfg, forms)

    def snap(state):
        if args.snapshot_every and state.step % args.snapshot_every == 0:
            write_vtk(out / f"field_{state.step:06d}.vtk", space, state.velocity, state.pressure,
                      args.subdivide)

    res = flow.run(u0, None, args.t_final, snap)
    rows = [[0, 0.0, kinetic_energy(qd, u0), kinetic_energy(qd, u0), math.nan]]
    for d in res.history:
        rows.append([d.step, d.t, d.energy, 0.25 * math.exp(-4 * math.pi ** 2 * d.t / args.Re),
                     d.residual])
    write_csv(out / "energy.csv", ["step", "t", "energy", "exact_energy", "residual"], rows)
    write_vtk(out / "final.vtk", space, res.state.velocity, res.state.pressure, args.subdivide)
    exact = space.interpolate_velocity(pr.exact_velocity, res.final_time)
    v, _ = qd.velocity(res.state.velocity - exact)
    ve, _ = qd.velocity(exact)
    err = math.sqrt(qd.integrate((v ** 2).sum(-1)) / qd.integrate((ve ** 2).sum(-1)))
    write_manifest(out / "manifest.txt", _manifest(
        args, plan, blown_up=res.blown_up, failed_step=res.failed_step,
        final_time=res.final_time, final_relative_l2_error=err))
    print(f"taylor-green: t={res.final_time:.6g} blown_up={res.blown_up} "
          f"relative L2 error={err:.3e} -> {out}")
    return 0


def run_stokes(args) -> int:
    out = _out_dir(args)
    plan = _plan(args)
    rep = stokes_time_sweep(args.n, args.taus, args.ranks, plan, args.Re, args.t_final)
    rows = [[1.0 / args.n, tau, N, rep.errors[i, j]]
            for i, tau in enumerate(rep.row_values) for j, N in enumerate(rep.col_values)]
    write_csv(out / "convergence.csv", ["h", "dt", "rank", "error"], rows)
    write_manifest(out / "manifest.txt", _manifest(args, plan, T=rep.meta["T"],
                                                   tau_ref=rep.meta["tau_ref"]))
    print(rep.summary())
    return 0


def run_cylinder(args) -> int:
    out = _out_dir(args)
    plan = _plan(args)
    if args.gmsh:
        try:
            mesh = read_gmsh(args.gmsh)
        except (OSError, MeshError) as exc:
            raise ConfigError(f"cannot read mesh: {exc}") from None
        pr = cylinder_channel(args.Re, mesh=mesh)
    else:
        try:
            pr = cylinder_channel(args.Re, args.resolution, args.segments)
        except MeshError as exc:
            raise ConfigError(str(exc)) from None
    space = build_taylor_hood(pr.mesh)
    forms = assemble_forms(space)
    t0 = time.perf_counter()
    st = steady_navier_stokes(space, forms, pr.bc, args.Re, pr.pressure_mode)
    cfg = FlowConfig(args.Re, args.tau, args.rank, args.summator, plan,
                     pressure_mode=pr.pressure_mode, force_tag=pr.force_tag,
                     reference_speed=args.speed)
    flow = ContinuationFlow(space, pr.bc, cfg, forms)

    def snap(state):
        if args.snapshot_every and state.step % args.snapshot_every == 0:
            write_vtk(out / f"field_{state.step:06d}.vtk", space, state.velocity, state.pressure,
                      args.subdivide)

    write_vtk(out / "initial.vtk", space, st.velocity, st.pressure, args.subdivide)
    res = flow.run(st.velocity, st.pressure, args.t_final, snap)
    write_csv(out / "diagnostics.csv", ["t", "residual", "energy", "C_D", "C_L"],
              [[d.t, d.residual, d.energy, d.drag, d.lift] for d in res.history])
    write_vtk(out / "final.vtk", space, res.state.velocity, res.state.pressure, args.subdivide)
    record = _manifest(args, plan, mesh=pr.mesh.summary(), newton_iterations=st.iterations,
                       newton_residual=st.residual, blown_up=res.blown_up,
                       failed_step=res.failed_step, blowup_reason=res.reason,
                       final_time=res.final_time, reached=not res.blown_up,
                       residual_mean=res.residual_mean(), residual_sum=res.residual_sum(),
                       wall_seconds=time.perf_counter() - t0)
    write_manifest(out / "manifest.txt", record)
    status = (f"blown-up at step {res.failed_step} (t={res.final_time:.6g})" if res.blown_up
              else f"reached t={res.final_time:.6g}")
    print(f"cylinder {pr.mesh.summary()}: {status}; mean residual {res.residual_mean():.6g} -> {out}")
    return 0


def _demo_series(name: str, t: float, N: int):
    if name == "geometric":
        return np.ones(N + 1), 1.0 / (1.0 - t) if t < 1 else math.nan
    if name == "exp":
        return np.array([1.0 / math.factorial(k) for k in range(N + 1)]), math.exp(t)
    from scipy.integrate import quad
    coeffs = np.array([(-1.0) ** k * math.factorial(k) for k in range(N + 1)])
    val, _ = quad(lambda x: math.exp(-x) / (1.0 + x * t), 0.0, math.inf)
    return coeffs, val


def run_resum(args) -> int:
    if args.rank < 0:
        raise ConfigError("rank must be >= 0")
    coeffs, oracle = _demo_series(args.series, args.t, args.rank)
    fs = factorial_sum(coeffs, args.t).value[0]
    ps = partial_sum(coeffs, args.t)[0]
    print(f"series={args.series} t={args.t:g} N={args.rank}")
    print(f"factorial sum = {fs:.17g}")
    print(f"partial sum   = {ps:.17g}")
    print(f"oracle        = {oracle:.17g}")
    print(f"gap           = {abs(fs - oracle):.3e}")
    if args.out:
        out = _out_dir(args)
        write_csv(out / "resum.csv", ["series", "t", "N", "factorial_sum", "partial_sum", "oracle"],
                  [[args.series, args.t, args.rank, fs, ps, oracle]])
    return 0


DRIVERS = {"taylor-green": run_taylor_green, "stokes-convergence": run_stokes,
           "cylinder": run_cylinder, "resum-demo": run_resum}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            sub = parser._subparsers._group_actions[0].choices[args.command]
            sub.set_defaults(**_config_defaults(sub, args.config))
            args = parser.parse_args(argv)
        return DRIVERS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"tsefem: configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

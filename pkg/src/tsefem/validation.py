"""Parameter sweeps reproducing the mode-convergence, time-convergence and stability studies."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import QUAD5, QuadratureData, assemble_forms
from .problems import cylinder_channel, stokes_problem, taylor_green
from .series import StabilizationPlan, compute_modes, mode_error
from .solver import SolverError
from .spaces import build_taylor_hood
from .steady import steady_navier_stokes
from .timeloop import ContinuationFlow, FlowConfig


def strictly_decreasing(values) -> bool:
    v = np.asarray(values, float)
    return bool(np.all(np.isfinite(v)) and np.all(np.diff(v) < 0))


def non_decreasing(values) -> bool:
    v = np.asarray(values, float)
    return bool(np.all(np.diff(v) >= 0))


def loglog_slope(x, y) -> float:
    """Least-squares slope of log(y) against log(x)."""
    x, y = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(x, y, 1)[0])


@dataclass
class SweepReport:
    """Error matrix over (row axis) x (column axis); failed cells hold inf."""

    name: str
    row_axis: str
    row_values: list
    col_axis: str
    col_values: list
    errors: np.ndarray
    failures: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.errors = np.asarray(self.errors, float)
        if self.errors.shape != (len(self.row_values), len(self.col_values)):
            raise ValueError("error matrix does not match the axes")

    def column(self, value) -> np.ndarray:
        return self.errors[:, self.col_values.index(value)]

    def row(self, value) -> np.ndarray:
        return self.errors[self.row_values.index(value)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([self.row_axis] + [f"{self.col_axis}={c}" for c in self.col_values])
        for r, vals in zip(self.row_values, self.errors):
            w.writerow([repr(r)] + [f"{v:.17g}" for v in vals])
        return buf.getvalue()

    def summary(self, verdicts: dict | None = None) -> str:
        lines = [f"{self.name}: {self.row_axis} x {self.col_axis}"]
        for r, vals in zip(self.row_values, self.errors):
            lines.append(f"  {self.row_axis}={r:<10g} " + " ".join(f"{v:10.3e}" for v in vals))
        for key, ok in (verdicts or {}).items():
            lines.append(f"  {'PASS' if ok else 'FAIL'} {key}")
        return "\n".join(lines)


def tg_mode_sweep(Re: float, n_list, rank_max: int, plan: StabilizationPlan) -> SweepReport:
    """e_{k,h} for k = 0..rank_max on unit-square meshes with n cells per side (h = 1/n)."""
    n_list = list(n_list)
    if sorted(n_list) != n_list:
        raise ValueError("mesh sizes must be descending (n ascending)")
    errors = np.full((len(n_list), rank_max + 1), np.inf)
    failures = {}
    for i, n in enumerate(n_list):
        pr = taylor_green(Re, n)
        space = build_taylor_hood(pr.mesh)
        forms = assemble_forms(space)
        qd = QuadratureData(space, QUAD5)
        u0 = space.interpolate_velocity(pr.initial)
        try:
            modes = compute_modes(space, forms, u0, pr.bc, plan, Re, rank_max, qd=qd)
        except SolverError as exc:
            failures[(i, -1)] = str(exc)
            continue
        for k in range(rank_max + 1):
            errors[i, k] = mode_error(space, modes, pr.exact_mode, k, qd)
    return SweepReport("tg-modes", "h", [1.0 / n for n in n_list], "k", list(range(rank_max + 1)),
                       errors, failures, {"Re": Re, "plan": plan.describe()})


def tg_mode_verdicts(report: SweepReport) -> dict:
    h = np.array(report.row_values)
    e1, e2 = report.column(1), report.column(2)
    out = {
        "e1 strictly decreasing in h": strictly_decreasing(e1),
        "e1 log-log slope >= 1.5": loglog_slope(h, e1) >= 1.5,
        "e2 non-decreasing at the two finest meshes": bool(e2[-1] >= e2[-2]),
    }
    if 4 in report.col_values:
        out["e4 >= 10 e1 on the finest mesh"] = bool(report.column(4)[-1] >= 10 * e1[-1])
    return out


def _l2(qd, u):
    v, _ = qd.velocity(u)
    return math.sqrt(qd.integrate((v ** 2).sum(-1)))


def stokes_time_sweep(n: int, tau_list, rank_list, plan: StabilizationPlan, Re: float = 100.0,
                      t_final: float | None = None) -> SweepReport:
    """Relative L2 error at ``t_final`` against a reference run with step tau_min/10.

    The reference uses the same mesh, plan and the largest rank.
    """
    tau_list = list(tau_list)
    if sorted(tau_list, reverse=True) != tau_list:
        raise ValueError("tau_list must be descending")
    T = t_final if t_final is not None else 2 * tau_list[0]
    pr = stokes_problem(Re, n)
    space = build_taylor_hood(pr.mesh)
    forms = assemble_forms(space)
    qd = QuadratureData(space, QUAD5)
    u0 = space.interpolate_velocity(pr.initial)

    def flow(tau, N):
        return ContinuationFlow(space, pr.bc, FlowConfig(Re, tau, N, plan=plan, convection=False),
                                forms).run(u0, None, T)

    tau_ref = tau_list[-1] / 10
    ref = flow(tau_ref, max(rank_list))
    errors = np.full((len(tau_list), len(rank_list)), np.inf)
    failures = {}
    if ref.blown_up:
        failures[(-1, -1)] = f"reference blew up at step {ref.failed_step}"
    else:
        uref = ref.state.velocity
        scale = _l2(qd, uref)
        for i, tau in enumerate(tau_list):
            for j, N in enumerate(rank_list):
                r = flow(tau, N)
                if r.blown_up:
                    failures[(i, j)] = f"blow-up at step {r.failed_step}"
                    continue
                errors[i, j] = _l2(qd, r.state.velocity - uref) / scale
    return SweepReport("stokes-time", "tau", tau_list, "N", list(rank_list), errors, failures,
                       {"Re": Re, "h": 1.0 / n, "T": T, "tau_ref": tau_ref, "plan": plan.describe()})


def stokes_verdicts(report: SweepReport, stabilized: bool) -> dict:
    E = report.errors
    if stabilized:
        spread = [np.max(r) / np.min(r) for r in E]
        return {"rank spread < 10x at every tau": bool(np.all(np.isfinite(E)) and max(spread) < 10),
                "error at tau_min < error at tau_max": bool(np.all(E[-1] < E[0]))}
    return {"error increases with rank at coarse tau": strictly_decreasing(E[0][::-1]),
            "error decreases as tau -> 0 for every rank":
                all(strictly_decreasing(E[:, j]) for j in range(E.shape[1]))}


@dataclass
class StabilityRow:
    resolution: int
    tau: float
    plan: str
    t_final: float
    reached: bool
    failed_step: int | None
    final_time: float
    residual_mean: float
    residual_sum: float
    drag_mean: float
    lift_mean: float


def cylinder_stability_table(resolutions, tau_list, plans, Re: float = 400.0, N: int = 5,
                             t_final=None, speed: float = 1.0) -> list[StabilityRow]:
    """Reach / blow-up verdicts; by default t=1 without and t=10 with stabilization."""
    rows = []
    for res in resolutions:
        pr = cylinder_channel(Re, res)
        space = build_taylor_hood(pr.mesh)
        forms = assemble_forms(space)
        st = steady_navier_stokes(space, forms, pr.bc, Re, pr.pressure_mode)
        for plan in plans:
            T = t_final if t_final is not None else (10.0 if plan.enabled else 1.0)
            for tau in tau_list:
                cfg = FlowConfig(Re, tau, N, plan=plan, pressure_mode=pr.pressure_mode,
                                 force_tag=pr.force_tag, reference_speed=speed)
                r = ContinuationFlow(space, pr.bc, cfg, forms).run(st.velocity, st.pressure, T)
                drag = r.column("drag")
                lift = r.column("lift")
                rows.append(StabilityRow(res, tau, plan.describe(), T, not r.blown_up, r.failed_step,
                                         r.final_time, r.residual_mean(), r.residual_sum(),
                                         float(drag.mean()) if len(drag) else math.nan,
                                         float(lift.mean()) if len(lift) else math.nan))
    return rows

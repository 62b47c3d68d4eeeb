"""Continuation flow: modes at the current state, resummation at a fixed step, diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import QUAD5, AssembledForms, QuadratureData, assemble_forms
from .mesh import CYLINDER_RADIUS, MeshError
from .resummation import factorial_sum, partial_sum
from .series import BCSeries, ModeBlowUp, RankSolver, StabilizationPlan, compute_modes
from .solver import SolverError
from .spaces import MixedSpace, build_taylor_hood, p1_reference, p2_reference

BLOWUP = 1e8
SUMMATORS = ("factorial", "partial")


class BlowUp(SolverError):
    def __init__(self, step, reason):
        self.step = step
        self.reason = reason
        super().__init__(f"blow-up at step {step}: {reason}")


@dataclass
class Diagnostics:
    step: int
    t: float
    residual: float
    energy: float
    max_velocity: float
    mode_norms: np.ndarray
    drag: float = math.nan
    lift: float = math.nan

    def as_row(self) -> dict:
        row = {"step": self.step, "t": self.t, "residual": self.residual, "energy": self.energy,
               "max_velocity": self.max_velocity, "drag": self.drag, "lift": self.lift}
        for k, v in enumerate(self.mode_norms):
            row[f"mode_norm_{k}"] = float(v)
        return row


@dataclass
class RunState:
    step: int
    tau: float
    velocity: np.ndarray
    pressure: np.ndarray
    history: list = field(default_factory=list)

    @property
    def t(self) -> float:
        return self.step * self.tau


@dataclass
class RunResult:
    state: RunState
    history: list
    blown_up: bool
    failed_step: int | None = None
    reason: str = ""

    @property
    def final_time(self) -> float:
        return self.state.t

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(d, name) for d in self.history])

    def residual_mean(self) -> float:
        r = self.column("residual")
        return float(r.mean()) if len(r) else math.nan

    def residual_sum(self) -> float:
        return float(self.column("residual").sum())


@dataclass(frozen=True)
class FlowConfig:
    Re: float
    tau: float
    N: int = 4
    summator: str = "factorial"
    plan: StabilizationPlan = StabilizationPlan()
    convection: bool = True
    pressure_mode: str = "mean"
    force_tag: int | None = None
    reference_length: float = CYLINDER_RADIUS
    reference_speed: float = 1.0

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.N < 0:
            raise ValueError("N must be >= 0")
        if self.Re <= 0:
            raise ValueError("Re must be positive")
        if self.summator not in SUMMATORS:
            raise ValueError(f"summator must be one of {SUMMATORS}")


def _resum(coeffs, tau, summator):
    if len(coeffs) == 1:
        return np.asarray(coeffs[0], float).copy()
    if summator == "partial":
        return partial_sum(np.array(coeffs), tau)
    return factorial_sum(np.array(coeffs), tau).value


class ContinuationFlow:
    """Numerical flow ``u_n -> u_{n+1}`` at a fixed step; factorizations are reused."""

    def __init__(self, space: MixedSpace, bc: BCSeries, config: FlowConfig,
                 forms: AssembledForms | None = None):
        self.space = space
        self.bc = bc
        self.config = config
        self.forms = forms or assemble_forms(space)
        self.qd = QuadratureData(space, QUAD5)
        self.solver = RankSolver(space, self.forms, config.plan, list(bc.dirichlet),
                                 config.pressure_mode)

    def modes(self, u, t):
        c = self.config
        return compute_modes(self.space, self.forms, u, self.bc, c.plan, c.Re, c.N,
                             convection=c.convection, t0=t, pressure=c.pressure_mode,
                             solver=self.solver, qd=self.qd)

    def advance(self, state: RunState) -> RunState:
        c = self.config
        step = state.step + 1
        try:
            ms = self.modes(state.velocity, state.t)
        except ModeBlowUp as exc:
            raise BlowUp(step, str(exc)) from exc
        u = _resum(ms.velocity, c.tau, c.summator)
        p = _resum(ms.pressure, c.tau, c.summator) if ms.pressure else state.pressure.copy()
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(p))):
            raise BlowUp(step, "non-finite resummed state")
        vmax = float(np.abs(u).max())
        if vmax > BLOWUP:
            raise BlowUp(step, f"max |u| = {vmax:.3e}")
        diag = Diagnostics(step, step * c.tau,
                           residual(self.space, u, p, state.velocity, c.tau, c.Re, self.qd),
                           kinetic_energy(self.qd, u), vmax, ms.norms())
        if c.force_tag is not None:
            diag.drag, diag.lift = drag_lift(self.space, u, p, c.Re, c.force_tag,
                                             c.reference_speed, c.reference_length)
        return RunState(step, c.tau, u, p, state.history + [diag])

    def run(self, u0, p0=None, t_final: float = 1.0, callback=None) -> RunResult:
        c = self.config
        p0 = np.zeros(self.space.num_pressure_dofs) if p0 is None else p0
        state = RunState(0, c.tau, np.asarray(u0, float), np.asarray(p0, float))
        steps = int(math.ceil(t_final / c.tau - 1e-9))
        for _ in range(steps):
            try:
                new = self.advance(state)
            except BlowUp as exc:
                return RunResult(state, state.history, True, exc.step, exc.reason)
            # history lives on the result; keep states light
            state = RunState(new.step, new.tau, new.velocity, new.pressure, new.history)
            if callback is not None:
                callback(state)
        return RunResult(state, state.history, False)


def advance(state: RunState, space: MixedSpace, forms: AssembledForms, bc: BCSeries,
            plan: StabilizationPlan, Re: float, tau: float, N: int, summator: str = "factorial",
            **options) -> RunState:
    """One continuation step (builds a throwaway flow; use ContinuationFlow in loops)."""
    config = FlowConfig(Re, tau, N, summator, plan, **options)
    return ContinuationFlow(space, bc, config, forms).advance(
        RunState(state.step, tau, state.velocity, state.pressure, state.history))


def run(problem, config: FlowConfig, t_final: float, forms=None, initial=None) -> RunResult:
    """Run a :class:`~tsefem.problems.Problem` until ``t_final`` or blow-up."""
    from .steady import steady_navier_stokes

    space = build_taylor_hood(problem.mesh)
    flow = ContinuationFlow(space, problem.bc, config, forms)
    p0 = None
    if initial is not None:
        u0 = initial
    elif problem.initial is None:
        st = steady_navier_stokes(space, flow.forms, problem.bc, problem.Re, problem.pressure_mode)
        u0, p0 = st.velocity, st.pressure
    else:
        u0 = space.interpolate_velocity(problem.initial, 0.0)
    return flow.run(u0, p0, t_final)


def kinetic_energy(qd: QuadratureData, u: np.ndarray) -> float:
    vals, _ = qd.velocity(u)
    return 0.5 * qd.integrate((vals ** 2).sum(-1))


def residual(space: MixedSpace, u, p, u_prev, tau: float, Re: float,
             qd: QuadratureData | None = None) -> float:
    """``int [((u - u_prev)/tau + (u.grad)u).u + (1/Re) grad u : grad u - p div u] dx``."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    qd = qd or QuadratureData(space, QUAD5)
    v, g = qd.velocity(u)
    v_prev, _ = qd.velocity(u_prev)
    ph = qd.pressure(p)
    adv = np.einsum("cqj,cqij->cqi", v, g)
    dt = (v - v_prev) / tau
    integrand = ((dt + adv) * v).sum(-1) + (g * g).sum((-1, -2)) / Re \
        - ph * (g[..., 0, 0] + g[..., 1, 1])
    return qd.integrate(integrand)


def _edge_cells(space: MixedSpace, edges: np.ndarray):
    """Cell and local edge slot of boundary edges."""
    nv = space.mesh.num_vertices
    keys = np.minimum(edges[:, 0], edges[:, 1]) * nv + np.maximum(edges[:, 0], edges[:, 1])
    ekeys = space.edges[:, 0] * nv + space.edges[:, 1]
    eidx = nv + np.searchsorted(ekeys, keys)
    cell_mid = space.cell_nodes[:, 3:]
    cells = np.empty(len(edges), int)
    for i, e in enumerate(eidx):
        hit = np.argwhere(cell_mid == e)
        cells[i] = hit[0, 0]
    return cells


def traction_force(space: MixedSpace, u, p, Re: float, tag: int, npts: int = 4,
                   stress=None) -> np.ndarray:
    """Force ``int sigma . n ds`` on the body bounded by ``tag`` edges.

    ``n`` points out of the body (into the fluid), so a flow in +x gives a
    positive drag. ``sigma = (2/Re) eps(u) - p I`` unless ``stress(x, y)``
    returns a (..., 2, 2) tensor directly.
    """
    mesh = space.mesh
    if tag not in mesh.tags:
        raise MeshError(f"boundary tag {tag} not present")
    edges = mesh.edges_with_tag(tag)
    cells = _edge_cells(space, edges)
    gx, gw = np.polynomial.legendre.leggauss(npts)
    s = 0.5 * (gx + 1.0)
    w = 0.5 * gw
    a = mesh.vertices[edges[:, 0]]
    b = mesh.vertices[edges[:, 1]]
    d = b - a
    length = np.linalg.norm(d, axis=1)
    normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]
    # orient away from the fluid cell, then flip to point out of the body
    centroid = mesh.vertices[mesh.cells[cells]].mean(1)
    flip = ((centroid - a) * normal).sum(1) > 0
    normal[flip] *= -1
    n_body = -normal
    pts = a[:, None, :] + s[None, :, None] * d[:, None, :]        # (ne, nq, 2)
    if stress is not None:
        sig = stress(pts[..., 0], pts[..., 1])
    else:
        x0 = mesh.vertices[mesh.cells[cells, 0]]
        invJ = space.inv_jacobians[cells]
        ref = np.einsum("eij,eqj->eqi", invJ, pts - x0[:, None, :])
        _, g2 = p2_reference(ref[..., 0], ref[..., 1])            # (ne, nq, 6, 2)
        lam, _ = p1_reference(ref[..., 0], ref[..., 1])           # (ne, nq, 3)
        dphi = np.einsum("eqbj,eji->eqbi", g2, invJ)
        nodes = space.cell_nodes[cells]
        loc = np.stack([u[2 * nodes], u[2 * nodes + 1]], -1)     # (ne, 6, 2)
        grad = np.einsum("eqbj,ebi->eqij", dphi, loc)
        ph = np.einsum("eqa,ea->eq", lam, p[mesh.cells[cells]])
        sig = (grad + np.swapaxes(grad, -1, -2)) / Re - ph[..., None, None] * np.eye(2)
    trac = np.einsum("eqij,ej->eqi", sig, n_body)
    return np.einsum("e,q,eqi->i", length, w, trac)


def drag_lift(space: MixedSpace, u, p, Re: float, tag: int, speed: float = 1.0,
              length: float = CYLINDER_RADIUS) -> tuple[float, float]:
    """``(C_D, C_L) = F / (speed**2 * length)``."""
    F = traction_force(space, u, p, Re, tag)
    scale = speed ** 2 * length
    return float(F[0] / scale), float(F[1] / scale)

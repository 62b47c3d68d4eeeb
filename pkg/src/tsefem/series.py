"""Time-series modes of the Navier-Stokes / Stokes solution.

Rank k of the recurrence solves

    (k+1) (M + g_k K_alpha) U_{k+1} + B^T P_k = l_k,    B U_{k+1} = 0,

with ``g_k`` the growth factor of the stabilization plan (``g_k = 0`` when it
is disabled) and ``K_alpha`` the stiffness weighted by alpha_0 per cell. The
factor (k+1) is moved to the right-hand side, so one factorization serves
every rank sharing the same ``g_k``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import (QUAD5, AssembledForms, QuadratureData, SaddleSystem, apply_constraints,
                       assemble_series_rhs, weighted_stiffness)
from .mesh import size_field
from .solver import Factorization, SolverError, solve_saddle
from .spaces import MixedSpace

GROWTH_RULES = ("constant", "power", "inverse_rank")


@dataclass(frozen=True)
class StabilizationPlan:
    """Artificial diffusion alpha_k = C_h alpha_{k-1}, with beta_k = (k+1) alpha_k.

    ``alpha0`` defaults to ``h(x)**m`` per cell (``size_mode`` selects the cell
    field or its min/max). ``growth``: ``"constant"`` (C_h = 1), ``"power"``
    (C_h = c**m) or ``"inverse_rank"`` (C_h = 1/k).
    """

    enabled: bool = False
    m: float = 2.0
    growth: str = "constant"
    c: float = 1.0
    alpha0: float | None = None
    size_mode: str = "cell"

    def __post_init__(self):
        if self.growth not in GROWTH_RULES:
            raise ValueError(f"growth must be one of {GROWTH_RULES}")
        if self.m <= 0 or self.c <= 0:
            raise ValueError("m and c must be positive")
        if self.alpha0 is not None and self.alpha0 <= 0:
            raise ValueError("alpha0 must be positive")

    @classmethod
    def off(cls) -> "StabilizationPlan":
        return cls(enabled=False)

    @property
    def growth_factor(self) -> float:
        if self.growth == "power":
            return self.c ** self.m
        return 1.0

    def factor(self, k: int) -> float:
        """alpha_k / alpha_0."""
        if not self.enabled:
            return 0.0
        if self.growth == "inverse_rank":
            return 1.0 / math.factorial(k)
        return self.growth_factor ** k

    def beta_factor(self, k: int) -> float:
        """beta_k / alpha_0 = (k+1) alpha_k / alpha_0."""
        return (k + 1) * self.factor(k)

    def alpha0_field(self, space: MixedSpace) -> np.ndarray:
        if self.alpha0 is not None:
            return np.full(space.mesh.num_cells, float(self.alpha0))
        return size_field(space.mesh, self.size_mode) ** self.m

    def describe(self) -> str:
        if not self.enabled:
            return "off"
        ch = {"constant": "1", "power": f"{self.c:g}^{self.m:g}", "inverse_rank": "1/k"}[self.growth]
        a0 = f"{self.alpha0:g}" if self.alpha0 is not None else f"h^{self.m:g}"
        return f"alpha0={a0} C_h={ch}"


def _zero(x, y):
    z = np.zeros_like(np.asarray(x, float))
    return z, z


@dataclass(frozen=True)
class BCSeries:
    """Boundary data as time series about a shift time t0.

    ``dirichlet[tag](x, y, k, t0)`` returns the rank-k coefficient g_k,
    ``neumann[tag](x, y, k, t0)`` the traction coefficient f_k (or ``None``).
    """

    dirichlet: dict
    neumann: dict = field(default_factory=dict)

    @staticmethod
    def steady(dirichlet: dict, neumann: dict | None = None) -> "BCSeries":
        """Time-independent data: ``dirichlet[tag](x, y)``; higher ranks vanish."""
        def lift(f):
            def g(x, y, k, t0=0.0):
                return f(x, y) if k == 0 else _zero(x, y)
            return g
        return BCSeries({t: lift(f) for t, f in dirichlet.items()},
                        {t: lift(f) for t, f in (neumann or {}).items()})

    def dirichlet_values(self, space: MixedSpace, k: int, t0: float = 0.0) -> dict:
        out = {}
        for tag, g in self.dirichlet.items():
            nodes = space.boundary_nodes[tag]
            x, y = space.node_coords[nodes].T
            gx, gy = g(x, y, k, t0)
            out[tag] = np.column_stack([np.broadcast_to(gx, x.shape),
                                        np.broadcast_to(gy, x.shape)]).ravel()
        return out

    def neumann_data(self, k: int, t0: float = 0.0) -> dict:
        return {tag: (lambda x, y, f=f: f(x, y, k, t0)) for tag, f in self.neumann.items()
                if f is not None}


class ModeBlowUp(SolverError):
    def __init__(self, rank, message="non-finite mode"):
        self.rank = rank
        super().__init__(f"{message} at rank {rank}")


@dataclass
class ModeSet:
    velocity: list          # U_0..U_N
    pressure: list          # P_0..P_{N-1}
    divergence: list = field(default_factory=list)     # |B U_k| per solved rank
    pressure_mean: list = field(default_factory=list)  # int P_k per rank

    @property
    def rank(self) -> int:
        return len(self.velocity) - 1

    def norms(self) -> np.ndarray:
        return np.array([np.linalg.norm(u) for u in self.velocity])


class RankSolver:
    """Factorizations of the stabilized saddle block, cached by growth factor."""

    def __init__(self, space: MixedSpace, forms: AssembledForms, plan: StabilizationPlan,
                 dirichlet_tags, pressure: str = "mean"):
        self.space = space
        self.forms = forms
        self.plan = plan
        self.tags = list(dirichlet_tags)
        self.pressure = pressure
        self.k_alpha = (weighted_stiffness(space, plan.alpha0_field(space))
                        if plan.enabled else None)
        self._cache: dict[float, tuple[SaddleSystem, Factorization]] = {}

    def system(self, k: int) -> tuple[SaddleSystem, Factorization]:
        g = self.plan.factor(k)
        if g not in self._cache:
            block = self.forms.mass if g == 0.0 else self.forms.mass + g * self.k_alpha
            system = apply_constraints(block, self.forms, self.space, self.tags, self.pressure)
            self._cache[g] = (system, Factorization(system.matrix))
        return self._cache[g]

    @property
    def factorizations(self) -> int:
        return len(self._cache)

    def solve(self, k: int, rhs_velocity, dirichlet_values):
        """Solve rank k for (U_{k+1}, P_k)."""
        system, fact = self.system(k)
        scale = k + 1.0
        b = system.rhs(rhs_velocity / scale, dirichlet_values)
        sol = solve_saddle(system, b, fact)
        return sol.velocity, scale * sol.pressure


def project_initial(space: MixedSpace, forms: AssembledForms, u0: np.ndarray, bc: BCSeries,
                    t0: float = 0.0, pressure: str = "mean") -> np.ndarray:
    """L2 projection of u0 onto discretely divergence-free fields with rank-0 Dirichlet data."""
    system = apply_constraints(forms.mass, forms, space, list(bc.dirichlet), pressure)
    b = system.rhs(forms.mass @ u0, bc.dirichlet_values(space, 0, t0))
    return solve_saddle(system, b).velocity


def is_divergence_free(forms: AssembledForms, u: np.ndarray, tol: float = 1e-10) -> bool:
    return np.linalg.norm(forms.divergence @ u) <= tol * (1.0 + np.linalg.norm(u))


def compute_modes(space: MixedSpace, forms: AssembledForms, u0: np.ndarray, bc: BCSeries,
                  plan: StabilizationPlan, Re: float, N: int, *, convection: bool = True,
                  t0: float = 0.0, pressure: str = "mean", solver: RankSolver | None = None,
                  qd: QuadratureData | None = None, project: bool = True) -> ModeSet:
    """Modes U_0..U_N and P_0..P_{N-1} of the (stabilized) recurrence."""
    if N < 0:
        raise ValueError("truncation rank must be >= 0")
    if Re <= 0:
        raise ValueError("Re must be positive")
    u0 = np.asarray(u0, float)
    if not np.all(np.isfinite(u0)):
        raise ModeBlowUp(0)
    if project and not is_divergence_free(forms, u0):
        u0 = project_initial(space, forms, u0, bc, t0, pressure)
    solver = solver or RankSolver(space, forms, plan, list(bc.dirichlet), pressure)
    if convection and qd is None:
        qd = QuadratureData(space, QUAD5)
    modes = ModeSet([u0], [])
    evaluated = [qd.velocity(u0)] if convection else None
    for k in range(N):
        rhs = assemble_series_rhs(space, forms, modes.velocity, k, Re, bc.neumann_data(k, t0),
                                  convection=convection, qd=qd, evaluated=evaluated)
        try:
            u, p = solver.solve(k, rhs, bc.dirichlet_values(space, k + 1, t0))
        except SolverError as exc:
            raise ModeBlowUp(k, f"solver failure ({exc})") from exc
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(p))):
            raise ModeBlowUp(k + 1)
        modes.velocity.append(u)
        modes.pressure.append(p)
        modes.divergence.append(float(np.linalg.norm(forms.divergence @ u)))
        modes.pressure_mean.append(float(forms.mean_row @ p))
        if convection:
            evaluated.append(qd.velocity(u))
    return modes


def l2_norm_sq(qd: QuadratureData, vals: np.ndarray) -> float:
    return qd.integrate((vals ** 2).sum(-1))


def mode_error_detail(space: MixedSpace, computed, exact_mode, k: int,
                      qd: QuadratureData | None = None) -> tuple[float, bool]:
    """Squared relative L2 error of mode k and whether it is relative.

    ``computed`` is a ModeSet or a velocity DOF vector; ``exact_mode(k, x, y)``
    returns the exact coefficient field. When the exact mode vanishes the
    absolute squared error is returned with the flag set to False.
    """
    qd = qd or QuadratureData(space, QUAD5)
    U = computed.velocity[k] if isinstance(computed, ModeSet) else computed
    uh, _ = qd.velocity(U)
    ex, ey = exact_mode(k, qd.x[..., 0], qd.x[..., 1])
    exact = np.stack([np.broadcast_to(ex, uh.shape[:2]), np.broadcast_to(ey, uh.shape[:2])], -1)
    num = l2_norm_sq(qd, exact - uh)
    den = l2_norm_sq(qd, exact)
    if den == 0.0:
        return num, False
    return num / den, True


def mode_error(space: MixedSpace, computed, exact_mode, k: int,
               qd: QuadratureData | None = None) -> float:
    return mode_error_detail(space, computed, exact_mode, k, qd)[0]

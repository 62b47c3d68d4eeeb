"""Steady Stokes and Navier-Stokes solves (initial states for continuation runs)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .assembly import QUAD5, AssembledForms, QuadratureData, apply_constraints, convection_term, \
    convection_jacobian, neumann_vector
from .solver import SolverError, solve_saddle
from .spaces import MixedSpace


class NewtonError(SolverError):
    pass


@dataclass
class SteadyState:
    velocity: np.ndarray
    pressure: np.ndarray
    iterations: int
    residual: float
    history: list


def _neumann_rhs(space, bc):
    out = np.zeros(space.num_velocity_dofs)
    for tag, f in bc.neumann_data(0).items():
        out += neumann_vector(space, tag, f)
    return out


def steady_stokes(space: MixedSpace, forms: AssembledForms, bc, Re: float,
                  pressure: str = "mean") -> SteadyState:
    system = apply_constraints(forms.stiffness / Re, forms, space, list(bc.dirichlet), pressure)
    b = system.rhs(_neumann_rhs(space, bc), bc.dirichlet_values(space, 0))
    sol = solve_saddle(system, b)
    return SteadyState(sol.velocity, sol.pressure, 0, 0.0, [])


def steady_residual(space, forms, qd, bc, Re, u, p, free) -> float:
    """Max-norm of the momentum residual on free DOFs and of ``B u``."""
    r = forms.stiffness @ u / Re + convection_term(qd, [u], 0) \
        - forms.divergence.T @ p - _neumann_rhs(space, bc)
    return float(max(np.abs(r[free]).max(), np.abs(forms.divergence @ u).max()))


def _newton(space, forms, qd, bc, Re, u, pressure, tol, max_iter, free):
    history = []
    system = None
    p = np.zeros(space.num_pressure_dofs)
    g = _neumann_rhs(space, bc)
    dvals = bc.dirichlet_values(space, 0)
    for it in range(1, max_iter + 1):
        J = forms.stiffness / Re + convection_jacobian(qd, u)
        # J u_new + B^T p = J u - C(u) + g  (C is quadratic, so J u - C(u) = C(u))
        rhs = convection_term(qd, [u], 0) + g
        system = apply_constraints(sp.csr_matrix(J), forms, space, list(bc.dirichlet), pressure)
        sol = solve_saddle(system, system.rhs(rhs, dvals), tol=1e-8)
        u, p = sol.velocity, sol.pressure
        res = steady_residual(space, forms, qd, bc, Re, u, p, free)
        history.append(res)
        if not np.isfinite(res):
            break
        if res <= tol:
            return SteadyState(u, p, it, res, history), True
    return SteadyState(u, p, len(history), history[-1] if history else np.inf, history), False


def steady_navier_stokes(space: MixedSpace, forms: AssembledForms, bc, Re: float,
                         pressure: str = "mean", tol: float = 1e-10, max_iter: int = 25,
                         initial: np.ndarray | None = None, ramp=(1.0, 10.0, 50.0, 100.0, 200.0)
                         ) -> SteadyState:
    """Newton's method from the Stokes solution, with Reynolds continuation on failure."""
    qd = QuadratureData(space, QUAD5)
    free = np.setdiff1d(np.arange(space.num_velocity_dofs),
                        np.concatenate([space.boundary_vdofs[t] for t in bc.dirichlet])
                        if bc.dirichlet else np.zeros(0, int))
    u = steady_stokes(space, forms, bc, Re, pressure).velocity if initial is None else initial
    state, ok = _newton(space, forms, qd, bc, Re, u, pressure, tol, max_iter, free)
    if ok:
        return state
    u = steady_stokes(space, forms, bc, Re, pressure).velocity
    for r in [r for r in ramp if r < Re] + [Re]:
        state, ok = _newton(space, forms, qd, bc, r, u, pressure, tol, max_iter, free)
        if not ok:
            raise NewtonError(f"Newton failed at Re={r:g} (residual {state.residual:.3e})")
        u = state.velocity
    return state

"""Benchmark problems: Taylor-Green vortex, a Stokes variant, and the channel with cylinder."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mesh import (CHANNEL_HEIGHT as H, CYLINDER, DIRICHLET, INLET, OUTLET, WALLS, Mesh, build_channel_cylinder_mesh,
                   build_unit_square_mesh)
from .series import BCSeries

PI = math.pi
INLET_MEAN_SPEED = 2.0 / 3.0


@dataclass
class Problem:
    name: str
    mesh: Mesh
    Re: float
    bc: BCSeries
    initial: Callable | None          # (x, y, t) -> (ux, uy); None means steady Navier-Stokes
    convection: bool = True
    pressure_mode: str = "mean"
    exact_velocity: Callable | None = None   # (x, y, t)
    exact_pressure: Callable | None = None   # (x, y, t)
    exact_mode: Callable | None = None       # (k, x, y) at t0 = 0
    force_tag: int | None = None
    metadata: dict = field(default_factory=dict)


def tg_velocity(Re):
    def u(x, y, t=0.0):
        d = np.exp(-2 * PI ** 2 * t / Re)
        return (np.sin(PI * x) * np.cos(PI * y) * d, -np.cos(PI * x) * np.sin(PI * y) * d)
    return u


def tg_pressure(Re):
    def p(x, y, t=0.0):
        return 0.25 * (np.cos(2 * PI * x) + np.cos(2 * PI * y)) * np.exp(-4 * PI ** 2 * t / Re)
    return p


def tg_velocity_mode(Re):
    """Rank-k Taylor coefficient of the velocity about t = 0."""
    u = tg_velocity(Re)

    def mode(k, x, y):
        c = (-2 * PI ** 2 / Re) ** k / math.factorial(k)
        ux, uy = u(x, y, 0.0)
        return c * ux, c * uy
    return mode


def tg_pressure_mode(Re):
    p = tg_pressure(Re)

    def mode(k, x, y):
        return (-4 * PI ** 2 / Re) ** k / math.factorial(k) * p(x, y, 0.0)
    return mode


def tg_boundary_series(Re) -> BCSeries:
    """Exact Dirichlet series about any shift time t0."""
    u = tg_velocity(Re)

    def g(x, y, k, t0=0.0):
        c = (-2 * PI ** 2 / Re) ** k / math.factorial(k)
        ux, uy = u(x, y, t0)
        return c * ux, c * uy
    return BCSeries({DIRICHLET: g})


def taylor_green(Re: float = 100.0, n: int = 32) -> Problem:
    return Problem("taylor-green", build_unit_square_mesh(n), Re, tg_boundary_series(Re),
                   tg_velocity(Re), True, "mean", tg_velocity(Re), tg_pressure(Re),
                   tg_velocity_mode(Re), metadata={"n": n})


def stokes_problem(Re: float = 100.0, n: int = 32) -> Problem:
    """Unsteady Stokes on the unit square; the Taylor-Green field solves it with p = 0."""
    zero = lambda x, y, t=0.0: 0.0 * np.asarray(x, float)
    return Problem("stokes", build_unit_square_mesh(n), Re, tg_boundary_series(Re),
                   tg_velocity(Re), False, "mean", tg_velocity(Re), zero,
                   tg_velocity_mode(Re), metadata={"n": n})


def inlet_profile(x, y):
    y = np.asarray(y, float)
    return 4.0 * y * (H - y) / H ** 2, np.zeros_like(y)


def _noslip(x, y):
    z = np.zeros_like(np.asarray(x, float))
    return z, z


def cylinder_bc() -> BCSeries:
    return BCSeries.steady({INLET: inlet_profile, WALLS: _noslip, CYLINDER: _noslip})


def cylinder_channel(Re: float = 400.0, resolution: int = 35, segments: int | None = None,
                     mesh: Mesh | None = None) -> Problem:
    """Channel flow past a cylinder, started from the steady Navier-Stokes state.

    The outlet carries the natural (do-nothing) condition, which fixes the
    pressure level, so no mean constraint is imposed.
    """
    mesh = mesh or build_channel_cylinder_mesh(resolution, segments=segments)
    segments = int((mesh.boundary_tags == CYLINDER).sum())
    return Problem("cylinder", mesh, Re, cylinder_bc(), None, True, "none", force_tag=CYLINDER,
                   metadata={"resolution": resolution, "segments": segments, "outlet": OUTLET})

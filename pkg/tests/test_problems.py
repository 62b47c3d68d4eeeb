import math

import numpy as np
import pytest

from tsefem.mesh import CHANNEL_HEIGHT, CYLINDER, INLET, WALLS
from tsefem.problems import (cylinder_bc, cylinder_channel, inlet_profile, stokes_problem, taylor_green,
                             tg_pressure, tg_pressure_mode, tg_velocity, tg_velocity_mode)


def test_taylor_green_values():
    u = tg_velocity(100.0)
    ux, uy = u(0.5, 0.0, 0.0)
    assert (ux, uy) == pytest.approx((1.0, 0.0), abs=1e-15)
    ux, uy = u(0.25, 0.25, 0.0)
    assert (ux, uy) == pytest.approx((0.5, -0.5))
    assert tg_pressure(100.0)(0.0, 0.0) == pytest.approx(0.5)
    assert u(0.5, 0.0, 1.0)[0] == pytest.approx(math.exp(-2 * math.pi ** 2 / 100))


def test_modes_are_taylor_coefficients():
    Re = 50.0
    vm = tg_velocity_mode(Re)
    assert vm(1, 0.5, 0.0)[0] / vm(0, 0.5, 0.0)[0] == pytest.approx(-2 * math.pi ** 2 / Re)
    pm = tg_pressure_mode(Re)
    assert pm(2, 0.0, 0.0) / pm(0, 0.0, 0.0) == pytest.approx((4 * math.pi ** 2 / Re) ** 2 / 2)
    # summing the modes reproduces the field at a later time
    t = 0.3
    s = sum(vm(k, 0.5, 0.0)[0] * t ** k for k in range(20))
    assert s == pytest.approx(tg_velocity(Re)(0.5, 0.0, t)[0], rel=1e-14)


def test_taylor_green_is_divergence_free_and_solves_stokes():
    x, y, h = 0.31, 0.62, 1e-5
    u = tg_velocity(100.0)
    div = (u(x + h, y)[0] - u(x - h, y)[0] + u(x, y + h)[1] - u(x, y - h)[1]) / (2 * h)
    assert abs(div) < 1e-8


def test_problem_records():
    tg = taylor_green(80.0, 4)
    assert tg.convection and tg.pressure_mode == "mean" and tg.metadata["n"] == 4
    st = stokes_problem(80.0, 4)
    assert not st.convection
    assert np.all(st.exact_pressure(np.array([0.1, 0.2]), np.array([0.3, 0.4])) == 0)


def test_inlet_profile():
    ux, uy = inlet_profile(0.0, np.array([0.0, CHANNEL_HEIGHT / 2, CHANNEL_HEIGHT]))
    assert ux == pytest.approx([0.0, 1.0, 0.0])
    assert not uy.any()
    bc = cylinder_bc()
    assert set(bc.dirichlet) == {INLET, WALLS, CYLINDER}
    gx, _ = bc.dirichlet[INLET](np.array([0.0]), np.array([0.1]), 1, 0.0)
    assert gx[0] == 0.0


def test_cylinder_problem():
    pr = cylinder_channel(400.0, 8)
    assert pr.initial is None and pr.pressure_mode == "none" and pr.force_tag == CYLINDER
    assert pr.metadata["segments"] == 8

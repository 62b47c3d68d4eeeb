"""Acceptance criteria 1-10, one PASS/FAIL line each (shown in the terminal summary)."""
import itertools
import math
import time

import numpy as np
import pytest
from scipy.integrate import quad

from tsefem.assembly import QUAD5, QuadratureData, assemble_forms, p1_element_matrices
from tsefem.mesh import DIRICHLET
from tsefem.problems import cylinder_channel, stokes_problem, taylor_green
from tsefem.resummation import factorial_sum, factorial_sum_direct, stirling_unsigned_first_kind
from tsefem.series import StabilizationPlan, compute_modes
from tsefem.spaces import build_taylor_hood
from tsefem.steady import steady_navier_stokes
from tsefem.timeloop import ContinuationFlow, FlowConfig
from tsefem.validation import (cylinder_stability_table, loglog_slope, stokes_time_sweep, stokes_verdicts,
                               strictly_decreasing, tg_mode_sweep)

pytestmark = pytest.mark.slow

OFF = StabilizationPlan.off()
STAB_H3 = StabilizationPlan(True, m=3, growth="power", c=3)      # alpha0 = h^3, C_h = 3^3
TG_MESHES = [16, 32, 64]
TABLE2_BAND = (0.049, 0.050)


def fmt(values):
    return "[" + ", ".join(f"{v:.3g}" for v in values) + "]"


@pytest.fixture(scope="module")
def tg_unstab():
    t0 = time.perf_counter()
    rep = tg_mode_sweep(100.0, TG_MESHES, 4, OFF)
    rep.meta["seconds"] = time.perf_counter() - t0
    return rep


@pytest.fixture(scope="module")
def cylinder35():
    pr = cylinder_channel(400.0, 35)
    space = build_taylor_hood(pr.mesh)
    forms = assemble_forms(space)
    st = steady_navier_stokes(space, forms, pr.bc, 400.0, pr.pressure_mode)
    return pr, space, forms, st


def test_criterion_1_element_matrices(verdict):
    M, K = p1_element_matrices([[0, 0], [1, 0], [0, 1]])
    Mx = np.full((3, 3), 1 / 24) + np.eye(3) / 24
    Kx = 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]])
    dm, dk = np.abs(M - Mx).max(), np.abs(K - Kx).max()
    ok = verdict("1", dm <= 1e-12 and dk <= 1e-12, f"max |M - M_exact| = {dm:.1e}, max |K - K_exact| = {dk:.1e}")
    assert ok


def _cycles(perm):
    seen, c = set(), 0
    for i in range(len(perm)):
        if i not in seen:
            c += 1
            while i not in seen:
                seen.add(i)
                i = perm[i]
    return c


def test_criterion_2_stirling(verdict):
    bad = []
    for n in range(9):
        counts = [0] * (n + 1)
        for perm in itertools.permutations(range(n)):
            counts[_cycles(perm)] += 1
        bad += [(n, p) for p in range(n + 1) if stirling_unsigned_first_kind(n, p) != counts[p]]
    assert verdict("2", not bad, f"n <= 8 exact against cycle enumeration; mismatches {bad}")


def test_criterion_3a_geometric(verdict):
    gaps = {t: abs(factorial_sum(np.ones(26), t).value[0] - 1 / (1 - t)) for t in (0.1, 0.3, 0.5)}
    ok = all(g <= 1e-6 for g in gaps.values())
    detail = ", ".join(f"t={t}: gap {g:.2e}" for t, g in gaps.items())
    verdict("3a", ok, f"u_k = 1, N = 25 against 1/(1-t), tol 1e-6; {detail}")
    assert ok


def test_criterion_3b_euler(verdict):
    t = 0.2
    oracle = quad(lambda x: math.exp(-x) / (1 + x * t), 0, math.inf, epsabs=1e-13)[0]
    val = factorial_sum([(-1) ** k * math.factorial(k) for k in range(26)], t).value[0]
    gap = abs(val - oracle)
    assert verdict("3b", gap <= 1e-4, f"Euler series at t = 0.2: gap {gap:.2e} (tol 1e-4)")


def test_criterion_3c_two_paths(verdict):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        N = int(rng.integers(1, 13))
        u = rng.uniform(-1, 1, N + 1)
        t = float(rng.uniform(0.05, 1.0))
        worst = max(worst, abs(factorial_sum(u, t).value[0] - factorial_sum_direct(u, t, N)[0]))
    assert verdict("3c", worst <= 1e-10, f"recursion vs direct Stirling, 100 sets, N <= 12: max gap {worst:.1e}")


def test_criterion_4_first_mode(tg_unstab, verdict):
    h = np.array(tg_unstab.row_values)
    e1 = tg_unstab.column(1)
    slope = loglog_slope(h, e1)
    ok = strictly_decreasing(e1) and slope >= 1.5
    assert verdict("4", ok, f"e1 = {fmt(e1)} for h = 1/16, 1/32, 1/64; slope {slope:.2f} (>= 1.5); "
                            f"{tg_unstab.meta['seconds']:.0f} s")


def test_criterion_5_unstabilized_growth(tg_unstab, verdict):
    e1, e2, e4 = (tg_unstab.column(k) for k in (1, 2, 4))
    ok = e2[-1] >= e2[-2] and e4[-1] >= 10 * e1[-1]
    assert verdict("5", ok, f"e2 = {fmt(e2)}; finest e4 / e1 = {e4[-1] / e1[-1]:.2e}")


def test_criterion_6_stabilization(tg_unstab, verdict):
    t0 = time.perf_counter()
    rep = tg_mode_sweep(100.0, TG_MESHES, 4, STAB_H3)
    secs = time.perf_counter() - t0
    dec = {k: strictly_decreasing(rep.column(k)) for k in range(1, 5)}
    gain = tg_unstab.errors[-1].max() / rep.errors[-1].max()
    ok = all(dec.values()) and gain >= 10
    rows = "; ".join(f"e{k} = {fmt(rep.column(k))}" for k in range(1, 5))
    verdict("6", ok, f"alpha0 = h^3, C_h = 27: decreasing {dec}; {rows}; "
                     f"finest max_k gain over unstabilized {gain:.1e} (>= 10); {secs:.0f} s")
    assert ok


def test_criterion_7_stokes_time(verdict):
    t0 = time.perf_counter()
    taus, ranks = [1e-2, 2e-3, 4e-4], [2, 3, 4]
    unstab = stokes_time_sweep(32, taus, ranks, OFF)
    stab = stokes_time_sweep(32, taus, ranks, STAB_H3)
    vu, vs = stokes_verdicts(unstab, False), stokes_verdicts(stab, True)
    ok = vu["error increases with rank at coarse tau"] and vu["error decreases as tau -> 0 for every rank"] \
        and vs["rank spread < 10x at every tau"]
    spread = max(np.max(r) / np.min(r) for r in stab.errors)
    verdict("7", ok, f"unstabilized coarse-tau errors {fmt(unstab.errors[0])}, "
                     f"tau -> 0 decreasing for every rank: {vu['error decreases as tau -> 0 for every rank']}; "
                     f"stabilized max rank spread {spread:.2f}x; {time.perf_counter() - t0:.0f} s")
    assert ok


@pytest.fixture(scope="module")
def stability_rows():
    t0 = time.perf_counter()
    rows = cylinder_stability_table([35], [0.02, 0.002], [OFF])
    rows += cylinder_stability_table([35], [0.04], [StabilizationPlan(True, m=2)])
    return rows, time.perf_counter() - t0


def test_criterion_8_stability(stability_rows, verdict):
    rows, secs = stability_rows
    blow, reach, stab = rows
    ok = (not blow.reached and blow.final_time < 1.0 and reach.reached and reach.final_time >= 1.0 - 1e-12
          and stab.reached and stab.final_time >= 10.0 - 1e-9
          and all(np.isfinite([stab.residual_mean, stab.drag_mean, stab.lift_mean])))
    assert verdict("8 (reach/blow-up)", ok,
                   f"tau=0.02 blow-up at step {blow.failed_step} (t={blow.final_time:.3g}); "
                   f"tau=0.002 reached t={reach.final_time:.3g}; stabilized tau=0.04 reached "
                   f"t={stab.final_time:.3g}; {secs:.0f} s")


def test_criterion_8_residual_band(stability_rows, verdict):
    rows, _ = stability_rows
    lo, hi = 0.5 * TABLE2_BAND[0], 1.5 * TABLE2_BAND[1]
    means = [r.residual_mean for r in rows if r.reached]
    ok = all(lo <= m <= hi for m in means)
    verdict("8 (residual band)", ok, f"residual means {fmt(means)} vs [{lo:.4g}, {hi:.4g}]")
    assert ok


def _invariant_gaps(space, forms, modes, bc, mean_mode):
    div = max(np.linalg.norm(forms.divergence @ U) / (1 + np.linalg.norm(U)) for U in modes.velocity[1:])
    mean = max(abs(forms.mean_row @ P) for P in modes.pressure) / forms.area if mean_mode else 0.0
    bd = np.concatenate([space.boundary_vdofs[t] for t in bc.dirichlet])
    exact = True
    for k, U in enumerate(modes.velocity):
        g = np.zeros(space.num_velocity_dofs)
        for tag, vals in bc.dirichlet_values(space, k).items():
            g[space.boundary_vdofs[tag]] = vals
        exact &= bool(np.array_equal(U[bd], g[bd]))
    return div, mean, exact


def test_criterion_9_invariants(cylinder35, verdict):
    cases = []
    for plan in (OFF, STAB_H3):
        for maker, conv in ((taylor_green, True), (stokes_problem, False)):
            pr = maker(100.0, 16)
            space = build_taylor_hood(pr.mesh)
            forms = assemble_forms(space)
            u0 = space.interpolate_velocity(pr.initial)
            m = compute_modes(space, forms, u0, pr.bc, plan, 100.0, 6, convection=conv)
            cases.append((f"{pr.name}/{plan.describe()}",) + _invariant_gaps(space, forms, m, pr.bc, True))
    pr, space, forms, st = cylinder35
    for plan in (OFF, StabilizationPlan(True, m=2)):
        m = compute_modes(space, forms, st.velocity, pr.bc, plan, 400.0, 5, pressure="none")
        cases.append((f"cylinder/{plan.describe()}",) + _invariant_gaps(space, forms, m, pr.bc, False))
    ok = all(d <= 1e-8 and p <= 1e-10 and e for _, d, p, e in cases)
    worst_d = max(c[1] for c in cases)
    worst_p = max(c[2] for c in cases)
    assert verdict("9", ok, f"{len(cases)} solves: max |B U_k|/(1+|U_k|) {worst_d:.1e}, "
                            f"max |int p_k|/area {worst_p:.1e}, Dirichlet rows exact: "
                            f"{all(c[3] for c in cases)}")


def test_criterion_10_fixed_point(cylinder35, verdict):
    pr, space, forms, st = cylinder35
    drifts = {}
    for plan, tau in ((OFF, 0.002), (StabilizationPlan(True, m=2), 0.04)):
        cfg = FlowConfig(400.0, tau, 5, plan=plan, pressure_mode="none", force_tag=pr.force_tag)
        res = ContinuationFlow(space, pr.bc, cfg, forms).run(st.velocity, st.pressure, 100 * tau)
        drifts[plan.describe()] = (np.inf if res.blown_up or len(res.history) != 100 else
                                   np.linalg.norm(res.state.velocity - st.velocity) / np.linalg.norm(st.velocity))
    ok = all(d <= 1e-6 for d in drifts.values())
    assert verdict("10", ok, f"Newton residual {st.residual:.1e}; relative drift after 100 steps "
                             + ", ".join(f"{k}: {v:.1e}" for k, v in drifts.items()))

"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Every criterion builds a JSON-able report; criterion 8 rebuilds all of them
and compares the serialized bytes.
"""

import json
import math
import time

import numpy as np
import pytest

from activated_fluids import graphcheck as G
from activated_fluids import shear as SH
from activated_fluids.channel import (
    ChannelProblem,
    GivenC,
    GivenQ,
    Grid,
    SolveOptions,
    convergence_study,
    energy_ledger_check,
    steady_solve,
    unsteady_solve,
)
from activated_fluids.models import BoundaryModel, BulkModel, Family

SQRT2 = math.sqrt(2.0)
DELTA = 1.0 / SQRT2


def _bulk(family, **kw):
    return BulkModel(family, **kw)


# ---------------------------------------------------------------------------
# criterion 1


def monotonicity_models():
    out = [("NavierStokes", _bulk(Family.NAVIER_STOKES, nu_star=1.0))]
    for r in (1.2, 1.5, 2.0, 3.0):
        out.append((f"PowerLaw r={r}", _bulk(Family.POWER_LAW, nu_star=1.0, d_star=1.0, r=r)))
    for r in (1.0, 1.5, 2.5):
        out.append((f"GenPowerLaw r={r}", _bulk(Family.GEN_POWER_LAW, nu_star=1.0, d_star=1.0, r=r)))
    for rp in (1.5, 3.0):
        out.append((f"StressPowerLaw r'={rp}",
                    _bulk(Family.STRESS_POWER_LAW, nu_star=1.0, d_star=1.0, r_prime=rp)))
    for a in (1.0, 4.0):
        out.append((f"BoundedStress a={a}", _bulk(Family.BOUNDED_STRESS, nu_star=1.0, d_star=1.0, a_exp=a)))
    for b in (1.0, 4.0):
        out.append((f"BoundedRate b={b}", _bulk(Family.BOUNDED_RATE, nu_star=1.0, d_star=1.0, b_exp=b)))
    out.append(("Bingham", _bulk(Family.BINGHAM, nu_star=1.0, sigma_star=1.0)))
    out.append(("ActivatedEuler One", _bulk(Family.ACTIVATED_EULER, nu_star=1.0, delta_star=1.0)))
    for kind, r in (("PowerLaw", 1.5), ("ShiftedPowerLaw", 1.5), ("Ladyzhenskaya", 2.5)):
        out.append((f"ActivatedEuler {kind} r={r}",
                    _bulk(Family.ACTIVATED_EULER, nu_star=1.0, delta_star=1.0,
                          activation_kind=kind, d_star=1.0, r=r, A=1.0)))
    for e in (0.1, 1.0):
        out.append((f"RegularizedActivatedEuler eps={e}",
                    _bulk(Family.REGULARIZED_ACTIVATED_EULER, nu_star=1.0, delta_star=1.0,
                          epsilon_star=e)))
    out.append(("RigidFreeFlowLimit", _bulk(Family.RIGID_FREE_FLOW_LIMIT, nu_star=1.0, d_star=1.0)))
    out.append(("EulerRigidLimit", _bulk(Family.EULER_RIGID_LIMIT, nu_star=1.0, d_star=1.0)))
    return out


def criterion_1():
    domain = G.SampleDomain((1e-3, 1e3), 1, 2024)
    rows = {}
    for name, model in monotonicity_models():
        rows[name] = G.check_monotonicity(model, domain, 100_000).to_json()
    return {"passed": all(r["passed"] and r["n_samples"] == 100_000 for r in rows.values()),
            "models": rows}


# ---------------------------------------------------------------------------
# criterion 2

COERCIVITY_CASES = [("ShiftedPowerLaw", 1.5), ("ShiftedPowerLaw", 2.5),
                    ("Ladyzhenskaya", 1.5), ("Ladyzhenskaya", 3.0)]


def criterion_2():
    domain = G.SampleDomain((1e-3, 1e3), 1, 11)
    rows = {}
    ok = True
    for delta in (0.1, 1.0, 10.0):
        for kind, r in COERCIVITY_CASES:
            # unit effective viscosity 2 nu* = 1
            m = _bulk(Family.ACTIVATED_EULER, nu_star=0.5, delta_star=delta,
                      activation_kind=kind, d_star=1.0, r=r, A=1.0)
            rep = G.check_coercivity(m, r, domain, 10_000)
            ok &= rep.passed and rep.extra["route"] == "closed_form" and rep.fitted_alpha > 0
            if kind == "Ladyzhenskaya" and r == 1.5:
                ok &= rep.extra["q"] == 2.0
            rows[f"delta={delta} {kind} r={r}"] = rep.to_json()
    return {"passed": bool(ok), "cases": rows}


# ---------------------------------------------------------------------------
# criterion 3


def criterion_3():
    domain = G.SampleDomain((1e-6, 1e6), 1, 5)
    rows = {}
    ok = True
    for r in (1.5, 2.0, 2.5, 3.0):
        m = _bulk(Family.POWER_LAW, nu_star=1.0, d_star=1.0, r=r)
        rep = G.check_duality(m, m, domain, "Duality", 10_000)
        ok &= rep.passed and rep.extra["max_relative_error"] <= 1e-10
        rows[f"PowerLaw r={r}"] = rep.to_json()
    fwd = _bulk(Family.GEN_POWER_LAW, nu_star=1.0, d_star=1.0, r=1.5)
    inv = _bulk(Family.STRESS_POWER_LAW, nu_star=1.0, d_star=1.0, r_prime=3.0)
    rep = G.check_duality(fwd, inv, domain, "NonInverse", 10_000)
    ok &= rep.passed and rep.extra["max_relative_error"] > 1e-2
    rows["NonInverse GenPowerLaw r=1.5 vs StressPowerLaw r'=3"] = rep.to_json()
    return {"passed": bool(ok), "cases": rows}


# ---------------------------------------------------------------------------
# criterion 4


def hand_C(block, Q, delta, L=1.0, nu=1.0, gamma=1.0, s=1.0, v=1.0):
    """Row formulas of the regime table, written out case by case."""
    aQ, sgn = abs(Q), (1.0 if Q > 0 else -1.0)
    base = SQRT2 * delta * L ** 2
    if block == "FreeSlip":
        return 0.0
    if block == "FreeSlipNavierSlip":
        if aQ <= base + 2 * v * L:
            return 0.0
        return gamma * L / (3 * nu + gamma * L) * 3 * (aQ - base - 2 * v * L) / (4 * L ** 3) * sgn
    if block == "NoSlipNavierSlip":
        if aQ <= base:
            return 0.0
        if aQ <= base + 2 * s * L ** 2 / (3 * nu):
            return 3 * (aQ - base) / (4 * L ** 3) * sgn
        return (gamma * L / (3 * nu + gamma * L) * 3 * (aQ - base) / (4 * L ** 3)
                + 3 * nu / (3 * nu + gamma * L) * s / (2 * nu * L)) * sgn
    if block == "NoSlip":
        return 0.0 if aQ <= base else 3 * (aQ - base) / (4 * L ** 3) * sgn
    if block == "NavierSlip":
        if aQ <= base:
            return 0.0
        return gamma * L / (3 * nu + gamma * L) * 3 * (aQ - base) / (4 * L ** 3) * sgn
    raise ValueError(block)


BLOCK_BCS = {
    "FreeSlipNavierSlip": BoundaryModel("Combined", gamma_star=1.0, s_star=0.0, v_star=1.0),
    "NoSlipNavierSlip": BoundaryModel("Combined", gamma_star=1.0, s_star=1.0, v_star=0.0),
    "FreeSlip": BoundaryModel("FreeSlip"),
    "NoSlip": BoundaryModel("NoSlip"),
    "NavierSlip": BoundaryModel("NavierSlip", gamma_star=1.0),
}


def regime_points(block, delta):
    """Flux values strictly inside every non-degenerate regime of a block (both signs)."""
    base = SQRT2 * delta
    if block == "FreeSlip":
        edges = []
    elif block == "FreeSlipNavierSlip":
        edges = [base + 2.0]
    elif block == "NoSlipNavierSlip":
        edges = [base, base + 2.0 / 3.0]
    else:
        edges = [base]
    edges = [0.0] + edges
    pts = [0.5 * (a + b) for a, b in zip(edges, edges[1:]) if b > a]
    pts.append(edges[-1] + 1.5)
    return [q for p in pts for q in (p, -p)]


def criterion_4():
    t0 = time.perf_counter()
    rows = []
    ok = True
    for delta in (0.0, DELTA):
        fluid = _bulk(Family.ACTIVATED_EULER, nu_star=1.0, delta_star=delta)
        for block, bc in BLOCK_BCS.items():
            for Q in regime_points(block, delta):
                prob = SH.PoiseuilleProblem(1.0, Q, fluid, bc)
                C = SH.poiseuille_constant(prob)
                ref = hand_C(block, Q, delta)
                rel = abs(C - ref) / abs(ref) if ref != 0 else abs(C)
                row = {"delta": delta, "block": block, "Q": Q, "C": C, "C_hand": ref,
                       "C_rel_error": rel, "regime": SH.classify(prob).to_json()}
                ok &= rel <= 1e-14
                if C != 0:
                    exact = SH.poiseuille_solve(prob)
                    rep = steady_solve(ChannelProblem(1.0, GivenQ(Q), fluid, bc), Grid(512, 1.0),
                                       SolveOptions(eps_final=1e-8))
                    err = float(np.max(np.abs(rep.u - exact.u(rep.y))))
                    row["profile_error"] = err
                    ok &= err <= 1e-4
                rows.append(row)
    runtime = time.perf_counter() - t0
    return {"passed": bool(ok), "rows": rows}, runtime


# ---------------------------------------------------------------------------
# criterion 5


def criterion_5():
    eps, a = 1e-2, 47.0 / 96.0
    C = eps / (2.0 * a)              # activation points at +-a, off the grid nodes
    u0 = -float(SH.whole_space_regularized(C, 0.0, 0.0, eps, DELTA, 1.0).u(1.0))
    ref = SH.whole_space_regularized(C, 0.0, u0, eps, DELTA, 1.0)
    fluid = _bulk(Family.ACTIVATED_EULER, nu_star=1.0, delta_star=DELTA)
    prob = ChannelProblem(1.0, GivenC(C), fluid, BoundaryModel("NoSlip"))
    grids = [Grid(n, 1.0) for n in (64, 128, 256, 512)]
    st = convergence_study(prob, grids, ref, SolveOptions(eps_final=eps))
    expected = SQRT2 * DELTA * eps / (2.0 * abs(C))
    act_ok = all(len(p) == 2 and abs(p[0] + expected) <= g.h and abs(p[1] - expected) <= g.h
                 for p, g in zip(st.activation_points, grids))
    ok = min(st.interior_orders) >= 1.9 and act_ok
    return {"passed": bool(ok), "expected_activation": expected, "study": st.to_json()}


# ---------------------------------------------------------------------------
# criterion 6


def unsteady_configs():
    return [
        ("ActivatedEuler NoSlip forced",
         _bulk(Family.ACTIVATED_EULER, nu_star=1.0, delta_star=DELTA), BoundaryModel("NoSlip"),
         GivenC(0.0), lambda t, y: np.full_like(y, 2.0), None),
        ("PowerLaw 1.5 NavierSlip harmonic",
         _bulk(Family.POWER_LAW, nu_star=1.0, d_star=1.0, r=1.5),
         BoundaryModel("NavierSlip", gamma_star=1.0), GivenC(0.0),
         lambda t, y: np.full_like(y, math.sin(20.0 * t)), lambda y: np.cos(np.pi * y / 2)),
        ("RegularizedActivatedEuler stick-slip pressure driven",
         _bulk(Family.REGULARIZED_ACTIVATED_EULER, nu_star=1.0, delta_star=DELTA, epsilon_star=0.1),
         BoundaryModel("Combined", gamma_star=1.0, s_star=0.5, v_star=0.0), GivenC(1.0), None, None),
        ("GenPowerLaw 2.5 slip-threshold unforced",
         _bulk(Family.GEN_POWER_LAW, nu_star=1.0, d_star=1.0, r=2.5),
         BoundaryModel("Combined", gamma_star=2.0, s_star=0.0, v_star=0.2), GivenC(0.0), None,
         lambda y: np.sin(np.pi * (y + 1) / 2)),
        ("BoundedStress FreeSlip unforced",
         _bulk(Family.BOUNDED_STRESS, nu_star=1.0, d_star=1.0, a_exp=2.0), BoundaryModel("FreeSlip"),
         GivenC(0.0), None, lambda y: np.sin(np.pi * y)),
        ("ActivatedEuler shifted 1.5 stick-slip given flux",
         _bulk(Family.ACTIVATED_EULER, nu_star=1.0, delta_star=0.5, activation_kind="ShiftedPowerLaw",
               d_star=1.0, r=1.5), BoundaryModel("NoSlipNavierSlip", gamma_star=1.0, s_star=0.3),
         GivenQ(1.5), None, None),
        ("Euler FreeSlip forced",
         _bulk(Family.EULER), BoundaryModel("FreeSlip"), GivenC(0.0),
         lambda t, y: np.full_like(y, 1.0), lambda y: y),
    ]


def eigenmode():
    L, n, dt = 1.0, 256, 1e-3
    nu = 1.0
    lam = 2.0 * nu * (math.pi / (2.0 * L)) ** 2
    steps = int(round(1.0 / lam / dt))
    prob = ChannelProblem(L, GivenC(0.0), _bulk(Family.NAVIER_STOKES, nu_star=nu),
                          BoundaryModel("NoSlip"), v0=lambda y: np.sin(np.pi * (y + L) / (2 * L)),
                          T=steps * dt)
    rep = unsteady_solve(prob, Grid(n, L), dt, SolveOptions(eps_final=0.0))
    K0, K1 = rep.energy_ledger[0]["kinetic"], rep.energy_ledger[-1]["kinetic"]
    t1 = rep.energy_ledger[-1]["t"]
    rate = -math.log(K1 / K0) / t1
    return {"rate": rate, "expected_rate": lam, "relative_error": abs(rate - lam) / lam,
            "t": t1, "ledger_passed": energy_ledger_check(rep).passed}


def criterion_6():
    rows = {}
    ok = True
    for name, fluid, bc, forcing, body, v0 in unsteady_configs():
        prob = ChannelProblem(1.0, forcing, fluid, bc, body_force=body, v0=v0, T=0.2)
        rep = unsteady_solve(prob, Grid(64, 1.0), 1e-3)
        check = energy_ledger_check(rep, 1e-10)
        ok &= check.passed and len(rep.energy_ledger) == 201
        rows[name] = {"passed": check.passed, "worst_step": check.worst_step,
                      "worst_relative_slack": check.worst_slack,
                      "final_kinetic": rep.energy_ledger[-1]["kinetic"]}
    eig = eigenmode()
    ok &= eig["relative_error"] <= 1e-2 and eig["ledger_passed"]
    return {"passed": bool(ok), "configs": rows, "eigenmode": eig}


# ---------------------------------------------------------------------------
# criterion 7


def criterion_7():
    slope = 0.5  # below sqrt2 * delta = 1
    fluid = _bulk(Family.ACTIVATED_EULER, nu_star=1.0, delta_star=DELTA)
    v0 = lambda y: slope * (1.0 - np.abs(y))
    prob = ChannelProblem(1.0, GivenC(0.0), fluid, BoundaryModel("NoSlip"), v0=v0, T=1.0)
    grid = Grid(64, 1.0)
    prev = [v0(grid.nodes)]
    worst = [0.0]

    def watch(k, t, u):
        worst[0] = max(worst[0], float(np.max(np.abs(u - prev[0]))))
        prev[0] = u

    rep = unsteady_solve(prob, grid, 1e-3, SolveOptions(eps_final=0.0), on_step=watch)
    n_steps = len(rep.energy_ledger) - 1
    return {"passed": bool(worst[0] <= 1e-12 and n_steps == 1000), "steps": n_steps,
            "max_step_change": worst[0]}


# ---------------------------------------------------------------------------

_FIRST: dict[int, str] = {}


def _run(k):
    if k == 1:
        t0 = time.perf_counter()
        rep = criterion_1()
        return rep, time.perf_counter() - t0
    if k == 4:
        return criterion_4()
    return {2: criterion_2, 3: criterion_3, 5: criterion_5,
            6: criterion_6, 7: criterion_7}[k](), None


def _report(k):
    rep, runtime = _run(k)
    text = json.dumps(rep, sort_keys=True)
    _FIRST.setdefault(k, text)
    return rep, runtime


def test_criterion_1_graph_axioms(acceptance_line):
    rep, runtime = _report(1)
    failed = [n for n, r in rep["models"].items() if not r["passed"]]
    ok = rep["passed"] and runtime <= 60.0
    acceptance_line(1, ok, f"monotonicity on {len(rep['models'])} models, 1e5 pairs each, "
                           f"{runtime:.1f}s, failures={failed}")
    assert ok


def test_criterion_2_coercivity(acceptance_line):
    rep, _ = _report(2)
    worst = max(r["worst_violation"] for r in rep["cases"].values())
    acceptance_line(2, rep["passed"], f"{len(rep['cases'])} cases, worst -slack={worst:.3e}")
    assert rep["passed"]


def test_criterion_3_duality(acceptance_line):
    rep, _ = _report(3)
    errs = {k: r["extra"]["max_relative_error"] for k, r in rep["cases"].items()}
    acceptance_line(3, rep["passed"], "max round-trip errors " + json.dumps(errs))
    assert rep["passed"]


def test_criterion_4_regime_table(acceptance_line):
    rep, runtime = _report(4)
    ok = rep["passed"] and runtime <= 120.0
    worst_C = max(r["C_rel_error"] for r in rep["rows"])
    worst_u = max(r.get("profile_error", 0.0) for r in rep["rows"])
    acceptance_line(4, ok, f"{len(rep['rows'])} rows, C rel err {worst_C:.1e}, "
                           f"profile err {worst_u:.1e}, {runtime:.1f}s")
    assert ok


def test_criterion_5_manufactured_solution(acceptance_line):
    rep, _ = _report(5)
    st = rep["study"]
    acceptance_line(5, rep["passed"], f"interior orders {st['interior_orders']}, "
                                      f"activation points {st['activation_points'][-1]}")
    assert rep["passed"]


def test_criterion_6_energy_inequality(acceptance_line):
    rep, _ = _report(6)
    eig = rep["eigenmode"]
    acceptance_line(6, rep["passed"], f"{len(rep['configs'])} ledger runs, eigenmode rate error "
                                      f"{eig['relative_error']:.2e}")
    assert rep["passed"]


def test_criterion_7_subthreshold_statics(acceptance_line):
    rep, _ = _report(7)
    acceptance_line(7, rep["passed"], f"{rep['steps']} steps, max change {rep['max_step_change']:.1e}")
    assert rep["passed"]


def test_criterion_8_determinism(acceptance_line):
    mismatched = []
    for k in range(1, 8):
        if k not in _FIRST:
            _report(k)
        rep, _ = _run(k)
        if json.dumps(rep, sort_keys=True) != _FIRST[k]:
            mismatched.append(k)
    ok = not mismatched
    acceptance_line(8, ok, f"reruns of criteria 1-7 byte-identical; mismatches={mismatched}")
    assert ok

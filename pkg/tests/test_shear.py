import json
import math

import numpy as np
import pytest

from activated_fluids import models as M
from activated_fluids import shear as SH
from activated_fluids.errors import DegenerateC, DomainMismatch, UnsupportedFluid
from activated_fluids.models import BoundaryModel, BulkModel, Family
from activated_fluids.shear import Branch, PoiseuilleProblem

SQRT2 = math.sqrt(2.0)


def ae(nu=1.0, delta=1.0):
    return BulkModel(Family.ACTIVATED_EULER, nu_star=nu, delta_star=delta)


def momentum_residual(sol, nu, delta, y, eps=0.0):
    """tau(u') must be linear with slope -2 nu C about y0."""
    tau = SH.limit_shear_stress(sol.du(y), nu, delta, eps)
    return np.max(np.abs(tau + 2.0 * nu * sol.C * (y - sol.y0)))


def test_limit_profile_example():
    sol = SH.whole_space_limit(1.0, 0.0, 0.0, 1.0, 1.0)
    assert float(sol.u(1.0)) == pytest.approx(-(1 + SQRT2), abs=1e-14)
    assert float(sol.u(-1.0)) == pytest.approx(-(1 + SQRT2), abs=1e-14)
    assert float(sol.u(0.0)) == 0.0
    y = np.linspace(-3, 3, 601)
    assert np.allclose(sol.u(y), -(y ** 2 + SQRT2 * np.abs(y)), atol=1e-14)


def test_regularized_profile_example():
    sol = SH.whole_space_regularized(1.0, 0.0, 0.0, 0.5, 1.0, 1.0)
    a = SQRT2 * 0.5 / 2.0
    assert sol.activation_points == pytest.approx([-a, a])
    y = np.concatenate([np.linspace(-4, 4, 801), [-a, a]])
    assert momentum_residual(sol, 1.0, 1.0, y, eps=0.5) < 1e-13


@pytest.mark.parametrize("C", [-2.0, -0.3, 0.7, 5.0])
@pytest.mark.parametrize("eps", [1e-3, 0.1, 2.0])
def test_regularized_profile_is_c1_and_solves_momentum(C, eps):
    nu, delta, y0, u0 = 1.7, 0.6, 0.3, -0.4
    sol = SH.whole_space_regularized(C, y0, u0, eps, delta, nu)
    y = np.linspace(y0 - 5, y0 + 5, 2001)
    assert momentum_residual(sol, nu, delta, y, eps) < 1e-12 * max(1, abs(C))
    for a in sol.activation_points:
        left = [p for p in sol.pieces if p.hi == a][0]
        right = [p for p in sol.pieces if p.lo == a][0]
        for k, f in ((0, lambda p: p.c0 + p.c1 * a + p.c2 * a * a),
                     (1, lambda p: p.c1 + 2 * p.c2 * a)):
            assert f(left) == pytest.approx(f(right), rel=1e-12, abs=1e-12)
    assert float(sol.u(y0)) == pytest.approx(u0, abs=1e-14 * max(1.0, abs(C) / eps))


def test_regularized_converges_to_limit():
    y = np.linspace(-3, 3, 301)
    lim = SH.whole_space_limit(1.3, 0.0, 0.0, 0.8, 1.0).u(y)
    errs = [np.max(np.abs(SH.whole_space_regularized(1.3, 0.0, 0.0, e, 0.8, 1.0).u(y) - lim))
            for e in (1e-1, 1e-2, 1e-3)]
    # first-order convergence in eps
    assert errs[0] / errs[1] > 5 and errs[1] / errs[2] > 5


def test_degenerate_pressure_gradient():
    with pytest.raises(DegenerateC):
        SH.whole_space_regularized(0.0, 0, 0, 0.1, 1.0, 1.0)
    with pytest.raises(DegenerateC):
        SH.whole_space_limit(0.0, 0, 0, 1.0, 1.0)


def wall_residuals(sol, prob):
    """Residual of the wall law on both walls with traction -tau(L) and tau(-L)."""
    nu, dl, L = prob.nu_star, prob.delta_star, prob.L
    sR = -SH.limit_shear_stress(sol.du(L), nu, dl)
    sL = SH.limit_shear_stress(sol.du(-L), nu, dl)
    e = np.array([1.0, 0.0, 0.0])
    return (M.bc_residual(prob.bc, float(sR) * e, float(sol.u(L)) * e),
            M.bc_residual(prob.bc, float(sL) * e, float(sol.u(-L)) * e))


BCS = [
    BoundaryModel("NoSlip"),
    BoundaryModel("NavierSlip", gamma_star=2.0),
    BoundaryModel("Combined", gamma_star=1.5, s_star=0.4, v_star=0.0),
    BoundaryModel("Combined", gamma_star=0.5, s_star=0.0, v_star=0.3),
    BoundaryModel("NoSlipNavierSlip", gamma_star=1.0, s_star=1.0),
    BoundaryModel("FreeSlipNavierSlip", gamma_star=1.0, v_star=0.2),
]


@pytest.mark.parametrize("bc", BCS, ids=lambda b: b.family.value)
@pytest.mark.parametrize("Q", [-9.0, -0.5, 0.1, 1.7, 4.0, 12.0])
@pytest.mark.parametrize("fluid", [ae(1.0, 0.5), ae(0.7, 0.0),
                                   BulkModel(Family.NAVIER_STOKES, nu_star=1.2)],
                         ids=["AE", "AE-delta0", "NS"])
def test_poiseuille_satisfies_ode_flux_and_walls(bc, Q, fluid):
    prob = PoiseuilleProblem(0.8, Q, fluid, bc)
    sol = SH.poiseuille_solve(prob)
    L = prob.L
    assert SH.flow_rate(sol, L) == pytest.approx(Q, rel=1e-13, abs=1e-14)
    y = np.linspace(-L, L, 401)
    assert momentum_residual(sol, prob.nu_star, prob.delta_star, y) < 1e-12 * max(1, abs(Q))
    rR, rL = wall_residuals(sol, prob)
    assert max(rR, rL) < 1e-12 * max(1, abs(Q))
    assert np.allclose(sol.u(y), sol.u(-y), atol=1e-13 * max(1, abs(Q)))


def test_threshold_continuity_of_C():
    bc = BoundaryModel("Combined", gamma_star=1.0, s_star=0.5, v_star=0.0)
    fl = ae(1.0, 0.5)
    q_low, q_high = SH.regime_thresholds(PoiseuilleProblem(1.0, 1.0, fl, bc))
    for q in (q_low, q_high):
        below = SH.poiseuille_constant(PoiseuilleProblem(1.0, q * (1 - 1e-12), fl, bc))
        at = SH.poiseuille_constant(PoiseuilleProblem(1.0, q, fl, bc))
        assert abs(below - at) < 1e-10
    assert SH.classify(PoiseuilleProblem(1.0, q_low, fl, bc)).branch is Branch.BULK_ACTIVE_BOUNDARY_STUCK
    assert SH.classify(PoiseuilleProblem(1.0, q_high, fl, bc)).branch is Branch.FULLY_ACTIVE
    assert SH.classify(PoiseuilleProblem(1.0, 0.5 * q_low, fl, bc)).branch is Branch.SUBTHRESHOLD


def test_subthreshold_family_member_is_admissible():
    bc = BoundaryModel("FreeSlipNavierSlip", gamma_star=1.0, v_star=0.3)
    prob = PoiseuilleProblem(1.0, 0.9, ae(1.0, 1.0), bc)
    sol = SH.poiseuille_solve(prob)
    assert sol.kind is SH.SolutionKind.SUBTHRESHOLD_FAMILY and sol.C == 0.0
    c = sol.constraints
    assert c["canonical_slope"] <= c["slope_bound"]
    assert abs(c["canonical_wall_velocity"]) <= c["wall_slip_bound"]
    assert SH.flow_rate(sol, 1.0) == pytest.approx(0.9, rel=1e-14)
    json.dumps(sol.to_json())


def test_free_slip_plug_flow():
    prob = PoiseuilleProblem(2.0, 3.0, ae(), BoundaryModel("FreeSlip"))
    sol = SH.poiseuille_solve(prob)
    assert np.allclose(sol.u(np.linspace(-2, 2, 11)), 0.75)
    assert SH.regime_thresholds(prob) == (math.inf, math.inf)
    assert sol.to_json()["thresholds"] == {"Q_low": None, "Q_high": None}


def test_navier_stokes_no_slip_is_classical():
    prob = PoiseuilleProblem(1.0, 4.0 / 3.0, BulkModel(Family.NAVIER_STOKES, nu_star=1.0),
                             BoundaryModel("NoSlip"))
    sol = SH.poiseuille_solve(prob)
    y = np.linspace(-1, 1, 21)
    assert np.allclose(sol.u(y), 1 - y ** 2, atol=1e-15)


def test_problem_round_trip_and_errors():
    prob = PoiseuilleProblem(1.0, 2.0, ae(), BoundaryModel("NavierSlip", gamma_star=1.0))
    assert PoiseuilleProblem.from_dict(json.loads(json.dumps(prob.to_dict()))) == prob
    with pytest.raises(UnsupportedFluid):
        PoiseuilleProblem(1.0, 1.0, BulkModel(Family.POWER_LAW, nu_star=1, d_star=1, r=1.5),
                          BoundaryModel("NoSlip"))
    sol = SH.poiseuille_solve(prob)
    with pytest.raises(DomainMismatch):
        sol.u(1.5)
    with pytest.raises(DomainMismatch):
        SH.flow_rate(sol, 2.0)

"""1D channel flow between walls at y = -L and y = +L.

The reduced momentum balance ``u_t - d/dy tau_eps(u') = b + G`` (G = 2 nu C)
is discretized conservatively: velocities live at the nodes, shear stresses at
the faces between them. Walls close the flux balance with the wall traction
``s = (-S n)_tau``, so the left-wall flux is ``s_L`` and the right-wall flux is
``-s_R``. Each nonlinear system is solved by a damped semismooth Newton method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import models as M
from .errors import (
    FamilyNotStressExplicit,
    InvalidParameters,
    NoConvergence,
    SingularJacobian,
)
from .models import BoundaryFamily, BoundaryModel, BulkModel

BodyForce = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class GivenC:
    C: float


@dataclass(frozen=True)
class GivenQ:
    Q: float


@dataclass
class ChannelProblem:
    L: float
    forcing: GivenC | GivenQ
    fluid: BulkModel
    bc: BoundaryModel
    body_force: BodyForce | None = None
    v0: Callable[[np.ndarray], np.ndarray] | np.ndarray | None = None
    T: float = 0.0

    def __post_init__(self):
        if not self.L > 0:
            raise InvalidParameters("L must be positive")
        if not isinstance(self.forcing, (GivenC, GivenQ)):
            raise InvalidParameters("forcing must be GivenC or GivenQ")


@dataclass(frozen=True)
class Grid:
    n: int
    L: float

    def __post_init__(self):
        if self.n < 4:
            raise InvalidParameters("grid needs n >= 4 cells")
        if not self.L > 0:
            raise InvalidParameters("L must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def nodes(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n + 1)

    @property
    def faces(self) -> np.ndarray:
        return -self.L + self.h * (np.arange(self.n) + 0.5)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid weights (control-volume lengths)."""
        w = np.full(self.n + 1, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w


@dataclass
class SolveOptions:
    eps_final: float = 1e-8
    tol: float | None = None
    max_iter: int = 200
    max_switches: int = 100
    max_backtracks: int = 40
    watchdog: int = 30
    eps_schedule: Sequence[float] | None = None


@dataclass
class SolveReport:
    y: np.ndarray
    u: np.ndarray
    C: float
    newton_iters: list[int]
    eps_schedule: list[float]
    residual_norm: float
    wall_tractions: tuple[float, float]
    activation_points: list[float]
    converged: bool = True
    eps_sensitivity: float | None = None
    energy_ledger: list[dict[str, float]] | None = None
    failure: str | None = None

    def to_json(self, include_profile: bool = True) -> dict[str, Any]:
        out: dict[str, Any] = {
            "converged": self.converged,
            "C": float(self.C),
            "newton_iters": [int(k) for k in self.newton_iters],
            "eps_schedule": [float(e) for e in self.eps_schedule],
            "residual_norm": float(self.residual_norm),
            "wall_tractions": [float(s) for s in self.wall_tractions],
            "activation_points": [float(a) for a in self.activation_points],
            "eps_sensitivity": None if self.eps_sensitivity is None else float(self.eps_sensitivity),
        }
        if self.failure is not None:
            out["failure"] = self.failure
        if include_profile:
            out["y"] = [float(v) for v in self.y]
            out["u"] = [float(v) for v in self.u]
        if self.energy_ledger is not None:
            out["n_steps"] = len(self.energy_ledger)
            check = energy_ledger_check(self)
            out["ledger_check"] = {"passed": check.passed, "worst_step": check.worst_step,
                                   "worst_slack": check.worst_slack}
        return out


# ---------------------------------------------------------------------------
# scalar flux


@dataclass(frozen=True)
class ShearFlux:
    """tau(w) = g(|w|/sqrt2) sign(w)/sqrt2 for w = du/dy, with its generalized derivative."""

    fluid: BulkModel

    def tau(self, omega):
        return M.shear_stress(self.fluid, omega)

    def dtau(self, omega):
        return M.shear_stress_derivative(self.fluid, omega)


def shear_reduce(fluid: BulkModel) -> ShearFlux:
    if not M.has_continuous_flow_curve(fluid):
        raise FamilyNotStressExplicit(
            f"{fluid.family.value} has no single-valued continuous shear stress")
    return ShearFlux(fluid)


# ---------------------------------------------------------------------------
# discrete system


class _System:
    """Residual and Jacobian of one implicit stage (steady when dt is None)."""

    def __init__(self, problem: ChannelProblem, grid: Grid):
        if abs(grid.L - problem.L) > 1e-14 * problem.L:
            raise InvalidParameters("grid and problem disagree on L")
        self.p = problem
        self.g = grid
        self.flux = shear_reduce(problem.fluid)
        self.nu_ref = M.reference_viscosity(problem.fluid)
        self.n = grid.n
        self.h = grid.h
        self.w = grid.weights
        fam = problem.bc.family
        if fam is BoundaryFamily.NO_SLIP:
            self.wall = "strong"
        elif fam is BoundaryFamily.FREE_SLIP:
            self.wall = "free"
        else:
            self.wall = "law"
            self.phi_v, self.dphi_v, self.phi_s, self.dphi_s = M.wall_scalar_laws(problem.bc)
        self.given_q = isinstance(problem.forcing, GivenQ)
        n1 = self.n + 1
        self.i_sl = self.i_sr = self.i_c = None
        k = n1
        if self.wall == "law":
            self.i_sl, self.i_sr = k, k + 1
            k += 2
        if self.given_q:
            self.i_c = k
            k += 1
        self.size = k

    # unknown accessors
    def C_of(self, x) -> float:
        return float(x[self.i_c]) if self.given_q else float(self.p.forcing.C)

    def walls_of(self, x) -> tuple[float, float]:
        if self.wall == "law":
            return float(x[self.i_sl]), float(x[self.i_sr])
        return 0.0, 0.0

    def face_flux(self, u, eps):
        omega = np.diff(u) / self.h
        F = eps * self.nu_ref * omega + self.flux.tau(omega)
        dF = eps * self.nu_ref + self.flux.dtau(omega)
        return omega, F, dF

    def strong_wall_tractions(self, u, F, G, b, uold, dt):
        """Wall tractions implied by the first and last momentum rows (no-slip)."""
        w = self.w
        mass = 0.0 if dt is None else 1.0 / dt
        r0 = w[0] * mass * (u[0] - (uold[0] if uold is not None else 0.0)) - F[0] - w[0] * (G + b[0])
        rn = w[-1] * mass * (u[-1] - (uold[-1] if uold is not None else 0.0)) + F[-1] - w[-1] * (G + b[-1])
        return -r0, -rn

    def residual(self, x, eps, b, uold=None, dt=None, with_jac=True):
        n, h, w = self.n, self.h, self.w
        u = x[: n + 1]
        C = self.C_of(x)
        G = 2.0 * self.nu_ref * C
        sl, sr = self.walls_of(x)
        omega, F, dF = self.face_flux(u, eps)
        Fr = np.empty(n + 1)
        Fl = np.empty(n + 1)
        Fr[:-1] = F
        Fr[-1] = -sr
        Fl[1:] = F
        Fl[0] = sl
        R = np.zeros(self.size)
        mom = -(Fr - Fl) - w * (G + b)
        diag = np.zeros(n + 1)
        if dt is not None:
            mom += w * (u - uold) / dt
            diag += w / dt
        R[: n + 1] = mom
        rows, cols, vals = [], [], []
        if with_jac:
            a = dF / h
            d = diag.copy()
            d[:-1] += a
            d[1:] += a
            idx = np.arange(n + 1)
            rows += [idx, idx[:-1], idx[1:]]
            cols += [idx, idx[1:], idx[:-1]]
            vals += [d, -a, -a]
        if self.wall == "strong":
            scale = self.nu_ref / h
            R[0] = scale * u[0]
            R[n] = scale * u[n]
            if with_jac:
                keep = [(r, c, v) for r, c, v in zip(rows, cols, vals)]
                rows, cols, vals = [], [], []
                for r, c, v in keep:
                    m = (r != 0) & (r != n)
                    rows.append(r[m])
                    cols.append(c[m])
                    vals.append(v[m])
                rows.append(np.array([0, n]))
                cols.append(np.array([0, n]))
                vals.append(np.array([scale, scale]))
        elif self.wall == "law":
            R[self.i_sl] = self.phi_v(u[0]) - self.phi_s(sl)
            R[self.i_sr] = self.phi_v(u[n]) - self.phi_s(sr)
            if with_jac:
                rows.append(np.array([0, n, self.i_sl, self.i_sl, self.i_sr, self.i_sr]))
                cols.append(np.array([self.i_sl, self.i_sr, 0, self.i_sl, n, self.i_sr]))
                vals.append(np.array([1.0, 1.0, self.dphi_v(u[0]), -self.dphi_s(sl),
                                      self.dphi_v(u[n]), -self.dphi_s(sr)]))
        if self.given_q:
            scale = self.nu_ref / (2.0 * self.p.L * h)
            R[self.i_c] = scale * (w @ u - self.p.forcing.Q)
            if with_jac:
                idx = np.arange(n + 1)
                colc = -2.0 * self.nu_ref * w
                if self.wall == "strong":
                    colc = colc.copy()
                    colc[0] = colc[n] = 0.0
                rows += [idx, np.full(n + 1, self.i_c)]
                cols += [np.full(n + 1, self.i_c), idx]
                vals += [colc, scale * w]
        if not with_jac:
            return R, None, dF
        J = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(self.size, self.size))
        return R, J, dF

    def branch_state(self, x) -> tuple:
        if self.wall != "law":
            return ()
        n = self.n
        sl, sr = self.walls_of(x)
        return (self.dphi_v(x[0]), self.dphi_s(sl), self.dphi_v(x[n]), self.dphi_s(sr))


def _default_tol(system: _System, x0) -> float:
    C = system.C_of(x0) if not system.given_q else 0.0
    G = 2.0 * system.nu_ref * C
    return 1e-10 * max(1.0, abs(G))


def _newton(system: _System, x, eps, b, tol, opts: SolveOptions, uold=None, dt=None,
            stage=None, step=None):
    """Semismooth Newton; returns (x, iterations, residual norm).

    Full steps are taken for the first ``opts.watchdog`` iterations (piecewise
    smooth fluxes usually settle their active sets this way in a few steps).
    If that fails, the best iterate seen is restored and the iteration goes on
    with a nonmonotone Armijo line search on the residual merit.
    """
    switches = 0
    merits: list[float] = []
    state = system.branch_state(x)
    R, J, dF = system.residual(x, eps, b, uold, dt)
    res = float(np.max(np.abs(R)))
    best = (0.5 * float(R @ R), x.copy())
    damped = False
    for it in range(opts.max_iter + 1):
        if res <= tol:
            return x, it, res
        if it == opts.max_iter:
            break
        if not damped and it == opts.watchdog:
            damped = True
            x = best[1]
            R, J, dF = system.residual(x, eps, b, uold, dt)
        try:
            with np.errstate(all="ignore"):
                lu = spla.splu(J)
                dx = lu.solve(-R)
            if not np.all(np.isfinite(dx)):
                raise RuntimeError("non-finite step")
        except RuntimeError as exc:
            mask = (dF == 0)
            raise SingularJacobian(f"singular Jacobian ({exc})", degenerate_mask=mask,
                                   stage=stage, step=step,
                                   partial={"u": x[: system.n + 1].copy()}) from None
        merit = 0.5 * float(R @ R)
        if damped:
            # the merit is nonsmooth at branch changes, so a monotone test stalls there
            merits.append(merit)
            ref = max(merits[-8:])
            alpha = 1.0
            for _ in range(opts.max_backtracks):
                xt = x + alpha * dx
                Rt, _, _ = system.residual(xt, eps, b, uold, dt, with_jac=False)
                if 0.5 * float(Rt @ Rt) <= ref - 2e-4 * alpha * merit:
                    break
                alpha *= 0.5
            x = xt
        else:
            x = x + dx
        new_state = system.branch_state(x)
        if new_state != state:
            switches += 1
            state = new_state
            if switches > opts.max_switches:
                raise NoConvergence("wall branch switching did not settle", stage=stage,
                                    iters=it + 1, step=step,
                                    partial={"u": x[: system.n + 1].copy()})
        R, J, dF = system.residual(x, eps, b, uold, dt)
        res = float(np.max(np.abs(R)))
        if not damped and 0.5 * float(R @ R) < best[0]:
            best = (0.5 * float(R @ R), x.copy())
    raise NoConvergence(f"Newton did not converge (residual {res:.3e})", stage=stage,
                        iters=opts.max_iter, step=step, partial={"u": x[: system.n + 1].copy()})


def eps_schedule(eps_final: float) -> list[float]:
    """1, 1e-1, ... down to eps_final (eps_final = 0 is appended after 1e-12)."""
    if eps_final < 0:
        raise InvalidParameters("eps_final must be non-negative")
    sched = [1.0]
    floor = eps_final if eps_final > 0 else 1e-12
    while sched[-1] * 0.1 > floor * (1 + 1e-12):
        sched.append(sched[-1] * 0.1)
    if eps_final >= 1.0:
        return [float(eps_final)]
    sched.append(float(floor))
    if eps_final == 0:
        sched.append(0.0)
    return sched


def _activation_points(system: _System, u) -> list[float]:
    """Faces-interpolated locations where |u'| crosses the activation threshold."""
    fluid = system.p.fluid
    if fluid.family not in (M.Family.ACTIVATED_EULER, M.Family.REGULARIZED_ACTIVATED_EULER) \
            or fluid.delta_star <= 0:
        return []
    thr = M.SQRT2 * fluid.delta_star
    f = np.abs(np.diff(u)) / system.h - thr
    yf = system.g.faces
    pts = []
    for j in range(f.size - 1):
        if (f[j] < 0) != (f[j + 1] < 0):
            t = f[j] / (f[j] - f[j + 1])
            pts.append(float(yf[j] + t * (yf[j + 1] - yf[j])))
    return pts


def _body(problem: ChannelProblem, t: float, y: np.ndarray) -> np.ndarray:
    if problem.body_force is None:
        return np.zeros_like(y)
    return np.broadcast_to(np.asarray(problem.body_force(t, y), dtype=float), y.shape).copy()


def _initial_vector(system: _System, u0: np.ndarray | None, C0: float = 0.0) -> np.ndarray:
    x = np.zeros(system.size)
    if u0 is not None:
        x[: system.n + 1] = u0
    if system.given_q:
        x[system.i_c] = C0
    return x


def _tractions(system: _System, x, eps, b, uold=None, dt=None) -> tuple[float, float]:
    if system.wall == "law":
        return system.walls_of(x)
    if system.wall == "free":
        return 0.0, 0.0
    u = x[: system.n + 1]
    _, F, _ = system.face_flux(u, eps)
    G = 2.0 * system.nu_ref * system.C_of(x)
    return system.strong_wall_tractions(u, F, G, b, uold, dt)


def steady_solve(problem: ChannelProblem, grid: Grid, opts: SolveOptions | None = None,
                 initial: np.ndarray | None = None) -> SolveReport:
    opts = opts or SolveOptions()
    system = _System(problem, grid)
    y = grid.nodes
    b = _body(problem, 0.0, y)
    sched = list(opts.eps_schedule) if opts.eps_schedule is not None else eps_schedule(opts.eps_final)
    x = _initial_vector(system, initial)
    tol = opts.tol if opts.tol is not None else _default_tol(system, x)
    iters: list[int] = []
    prev_u = None
    sensitivity = None
    res = math.inf
    for k, eps in enumerate(sched):
        try:
            x, it, res = _newton(system, x, eps, b, tol, opts, stage=k)
        except (NoConvergence, SingularJacobian) as exc:
            exc.partial = _partial(system, x, sched[: k + 1], iters, res, str(exc), b, eps)
            raise
        iters.append(it)
        u = x[: grid.n + 1]
        if prev_u is not None:
            sensitivity = float(np.max(np.abs(u - prev_u)))
        prev_u = u.copy()
    u = x[: grid.n + 1].copy()
    return SolveReport(y, u, system.C_of(x), iters, [float(e) for e in sched], res,
                       _tractions(system, x, sched[-1], b), _activation_points(system, u),
                       True, sensitivity)


def _partial(system, x, sched, iters, res, msg, b, eps) -> SolveReport:
    u = x[: system.n + 1].copy()
    return SolveReport(system.g.nodes, u, system.C_of(x), list(iters), [float(e) for e in sched],
                       float(res), _tractions(system, x, eps, b), [], False, None, None, msg)


def _initial_profile(problem: ChannelProblem, y: np.ndarray) -> np.ndarray:
    v0 = problem.v0
    if v0 is None:
        return np.zeros_like(y)
    if callable(v0):
        return np.asarray(v0(y), dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if v0.shape != y.shape:
        raise InvalidParameters("v0 must be given at every grid node")
    return v0.copy()


def _ledger_row(system: _System, t, x, xold, eps, b, dt) -> dict[str, float]:
    w, h = system.w, system.h
    u = x[: system.n + 1]
    uo = xold[: system.n + 1]
    omega, F, _ = system.face_flux(u, eps)
    G = 2.0 * system.nu_ref * system.C_of(x)
    sl, sr = _tractions(system, x, eps, b, uo, dt)
    kinetic = 0.5 * float(w @ (u * u))
    dissipation = float(h * (F @ omega)) + sl * u[0] + sr * u[-1]
    work = float(w @ ((b + G) * u))
    return {"t": float(t), "kinetic": kinetic, "dissipation": dissipation, "work": work}


def unsteady_solve(problem: ChannelProblem, grid: Grid, dt: float,
                   opts: SolveOptions | None = None, T: float | None = None,
                   on_step: Callable[[int, float, np.ndarray], None] | None = None) -> SolveReport:
    """Implicit Euler in time; the convective term is identically zero for v = (u(y), 0, 0).

    ``on_step(k, t, u)`` is called after every accepted step.
    """
    opts = opts or SolveOptions()
    if not dt > 0:
        raise InvalidParameters("dt must be positive")
    T = problem.T if T is None else T
    n_steps = int(round(T / dt))
    if n_steps < 0 or abs(n_steps * dt - T) > 1e-9 * max(T, dt):
        raise InvalidParameters("T must be a non-negative multiple of dt")
    system = _System(problem, grid)
    y = grid.nodes
    eps = float(opts.eps_final)
    u = _initial_profile(problem, y)
    if system.wall == "strong":
        u[0] = u[-1] = 0.0
    x = _initial_vector(system, u)
    ledger = [{"t": 0.0, "kinetic": 0.5 * float(system.w @ (u * u)), "dissipation": 0.0,
               "work": 0.0, "slack": 0.0}]
    iters: list[int] = []
    res = 0.0
    for k in range(1, n_steps + 1):
        t = k * dt
        b = _body(problem, t, y)
        xold = x.copy()
        uold = xold[: grid.n + 1]
        tol = opts.tol if opts.tol is not None else 1e-12 * max(1.0, abs(2.0 * system.nu_ref * system.C_of(x)))
        try:
            x, it, res = _newton(system, x, eps, b, tol, opts, uold=uold, dt=dt, stage=0, step=k)
        except (NoConvergence, SingularJacobian) as exc:
            part = _partial(system, x, [eps], iters, res, str(exc), b, eps)
            part.energy_ledger = ledger
            exc.partial = part
            raise
        iters.append(it)
        row = _ledger_row(system, t, x, xold, eps, b, dt)
        row["slack"] = row["work"] - (row["kinetic"] - ledger[-1]["kinetic"]) / dt - row["dissipation"]
        ledger.append(row)
        if on_step is not None:
            on_step(k, t, x[: grid.n + 1].copy())
    u = x[: grid.n + 1].copy()
    b = _body(problem, n_steps * dt, y)
    return SolveReport(y, u, system.C_of(x), iters, [eps], res,
                       _tractions(system, x, eps, b), _activation_points(system, u),
                       True, None, ledger)


@dataclass(frozen=True)
class LedgerCheck:
    passed: bool
    worst_step: int | None
    worst_slack: float
    tolerance_scale: float


def energy_ledger_check(report: SolveReport, rel_tol: float = 1e-10) -> LedgerCheck:
    """Per step: K_new - K_old + dt D <= dt W, up to rel_tol times the step's scale."""
    rows = report.energy_ledger
    if not rows or len(rows) < 2:
        return LedgerCheck(True, None, 0.0, rel_tol)
    worst, worst_k = math.inf, None
    for k in range(1, len(rows)):
        r, prev = rows[k], rows[k - 1]
        dt = r["t"] - prev["t"]
        dK = (r["kinetic"] - prev["kinetic"]) / dt
        scale = max(abs(r["work"]), abs(dK), abs(r["dissipation"]), abs(prev["kinetic"]) / dt,
                    1e-300)
        rel = r["slack"] / scale
        if rel < worst:
            worst, worst_k = rel, k
    return LedgerCheck(bool(worst >= -rel_tol), worst_k, float(worst), rel_tol)


# ---------------------------------------------------------------------------
# convergence


@dataclass
class ConvergenceStudy:
    ns: list[int]
    errors: list[float]
    orders: list[float]
    interior_errors: list[float]
    interior_orders: list[float]
    activation_points: list[list[float]] = field(default_factory=list)

    def to_json(self) -> dict[str, Any]:
        return {"n": self.ns, "errors": self.errors, "orders": self.orders,
                "interior_errors": self.interior_errors, "interior_orders": self.interior_orders,
                "activation_points": self.activation_points}


def _orders(errors: list[float]) -> list[float]:
    out = []
    for e1, e2 in zip(errors, errors[1:]):
        out.append(math.log2(e1 / e2) if e1 > 0 and e2 > 0 else math.inf)
    return out


def convergence_study(problem: ChannelProblem, grids: Sequence[Grid], reference,
                      opts: SolveOptions | None = None, interior_margin: float | None = None
                      ) -> ConvergenceStudy:
    """Errors against an exact profile (anything with ``u(y)``) or a finer SolveReport
    whose grid nests every study grid. ``interior`` excludes nodes closer than
    ``interior_margin`` (default two coarsest cells) to a reference activation point."""
    if len(grids) < 3:
        raise InvalidParameters("a convergence study needs at least three grids")
    ns = [g.n for g in grids]
    if any(b % a for a, b in zip(ns, ns[1:])):
        raise InvalidParameters("grids must be nested")
    margin = interior_margin if interior_margin is not None else 2.0 * grids[0].h
    acts = list(getattr(reference, "activation_points", []) or [])
    errors, inner, found = [], [], []
    for g in grids:
        rep = steady_solve(problem, g, opts)
        if isinstance(reference, SolveReport):
            n_ref = reference.u.size - 1
            if n_ref % g.n:
                raise InvalidParameters("reference grid must nest the study grids")
            exact = reference.u[:: n_ref // g.n]
        else:
            exact = np.asarray(reference.u(g.nodes), dtype=float)
        err = np.abs(rep.u - exact)
        errors.append(float(np.max(err)))
        mask = np.ones_like(err, dtype=bool)
        for a in acts:
            mask &= np.abs(g.nodes - a) >= margin
        inner.append(float(np.max(err[mask])) if mask.any() else float("nan"))
        found.append(rep.activation_points)
    return ConvergenceStudy(ns, errors, _orders(errors), inner, _orders(inner), found)

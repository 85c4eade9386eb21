"""Closed-form simple-shear and channel (Poiseuille) solutions for the activated
Euler / Navier-Stokes fluid.

Velocity profiles are v = (u(y), 0, 0) with u piecewise quadratic. In this
geometry the constitutive law reduces to the scalar shear stress
``tau(w) = nu (|w| - sqrt2 delta)^+ sign(w)`` (plus ``eps nu w`` for the
regularized fluid), and momentum balance reads ``d/dy tau(u') = -2 nu C`` with
the pressure ``p = -2 nu C x + p0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from .errors import DegenerateC, DomainMismatch, InvalidParameters, UnsupportedFluid
from .models import ActivationKind, BoundaryFamily, BoundaryModel, BulkModel, Family

SQRT2 = math.sqrt(2.0)


class SolutionKind(str, Enum):
    REGULARIZED_WHOLE_SPACE = "RegularizedWholeSpace"
    LIMIT_WHOLE_SPACE = "LimitWholeSpace"
    SUBTHRESHOLD_FAMILY = "SubthresholdFamily"
    POISEUILLE_UNIQUE = "PoiseuilleUnique"
    POISEUILLE_FAMILY = "PoiseuilleFamily"


class BcBlock(str, Enum):
    FREE_SLIP_NAVIER_SLIP = "FreeSlipNavierSlip"
    NO_SLIP_NAVIER_SLIP = "NoSlipNavierSlip"
    FREE_SLIP = "FreeSlip"
    NO_SLIP = "NoSlip"
    NAVIER_SLIP = "NavierSlip"


class Branch(str, Enum):
    SUBTHRESHOLD = "Subthreshold"
    BULK_ACTIVE_BOUNDARY_STUCK = "BulkActiveBoundaryStuck"
    FULLY_ACTIVE = "FullyActive"


@dataclass(frozen=True)
class RegimeLabel:
    bc_block: BcBlock
    branch: Branch

    def to_json(self) -> dict[str, str]:
        return {"bc_block": self.bc_block.value, "branch": self.branch.value}


@dataclass(frozen=True)
class Piece:
    """u(y) = c0 + c1 y + c2 y^2 on [lo, hi] (absolute coordinates)."""

    lo: float
    hi: float
    c0: float
    c1: float
    c2: float


@dataclass
class ShearSolution:
    kind: SolutionKind
    pieces: list[Piece]
    C: float
    p0: float = 0.0
    y0: float = 0.0
    u0: float = 0.0
    activation_points: list[float] = field(default_factory=list)
    regime: RegimeLabel | None = None
    constraints: dict[str, Any] | None = None
    thresholds: tuple[float, float] | None = None

    def _locate(self, y: np.ndarray) -> np.ndarray:
        idx = np.full(y.shape, -1, dtype=int)
        for k, p in enumerate(self.pieces):
            idx = np.where((idx < 0) & (y >= p.lo) & (y <= p.hi), k, idx)
        if np.any(idx < 0):
            raise DomainMismatch("evaluation point outside the profile support")
        return idx

    def _coeffs(self, y):
        y = np.asarray(y, dtype=float)
        idx = self._locate(y)
        c = np.array([[p.c0, p.c1, p.c2] for p in self.pieces])[idx]
        return y, c

    def u(self, y):
        y, c = self._coeffs(y)
        return c[..., 0] + y * (c[..., 1] + y * c[..., 2])

    def du(self, y):
        """u'(y); at piece junctions the left-most piece containing y is used."""
        y, c = self._coeffs(y)
        return c[..., 1] + 2.0 * y * c[..., 2]

    def to_json(self) -> dict[str, Any]:
        def num(x):
            return None if not math.isfinite(x) else float(x)

        out: dict[str, Any] = {
            "kind": self.kind.value,
            "C": float(self.C),
            "p0": float(self.p0),
            "y0": float(self.y0),
            "u0": float(self.u0),
            "pieces": [[num(p.lo), num(p.hi), p.c0, p.c1, p.c2] for p in self.pieces],
            "activation_points": [float(a) for a in self.activation_points],
        }
        if self.regime is not None:
            out["regime"] = self.regime.to_json()
        if self.constraints is not None:
            out["constraints"] = {k: (num(v) if isinstance(v, float) else v)
                                  for k, v in self.constraints.items()}
        if self.thresholds is not None:
            out["thresholds"] = {"Q_low": num(self.thresholds[0]), "Q_high": num(self.thresholds[1])}
        return out


def _shifted(a2: float, a1: float, a0: float, y0: float) -> tuple[float, float, float]:
    """Coefficients in y of a2 t^2 + a1 t + a0 with t = y - y0."""
    return a0 - a1 * y0 + a2 * y0 * y0, a1 - 2.0 * a2 * y0, a2


def _piece(lo, hi, a2, a1, a0, y0) -> Piece:
    c0, c1, c2 = _shifted(a2, a1, a0, y0)
    return Piece(lo, hi, c0, c1, c2)


def whole_space_regularized(C: float, y0: float, u0: float, eps_star: float,
                            delta_star: float, nu_star: float) -> ShearSolution:
    """Simple-shear profile of the regularized fluid: a parabola with viscosity
    eps*nu* around y0 (below activation) joined to the activated outer branches."""
    if not eps_star > 0 or not nu_star > 0 or delta_star < 0:
        raise InvalidParameters("need eps_star > 0, nu_star > 0, delta_star >= 0")
    if C == 0:
        raise DegenerateC("C = 0 has no unique regularized profile")
    k = SQRT2 * delta_star / abs(C)
    a = SQRT2 * delta_star * eps_star / (2.0 * abs(C))
    outer2 = -C / (1.0 + eps_star)
    outer0 = outer2 * (-eps_star * (SQRT2 * delta_star / (2.0 * C)) ** 2) + u0
    pieces = [_piece(-math.inf, y0 - a, outer2, -outer2 * k, outer0, y0)]
    if a > 0:
        pieces.append(_piece(y0 - a, y0 + a, -C / eps_star, 0.0, u0, y0))
    pieces.append(_piece(y0 + a, math.inf, outer2, outer2 * k, outer0, y0))
    acts = [y0 - a, y0 + a] if a > 0 else []
    return ShearSolution(SolutionKind.REGULARIZED_WHOLE_SPACE, pieces, C, 0.0, y0, u0, acts)


def whole_space_limit(C: float, y0: float, u0: float, delta_star: float,
                      nu_star: float) -> ShearSolution:
    """u = -C((y-y0)^2 + sqrt2 delta |y-y0| / |C|) + u0."""
    if C == 0:
        raise DegenerateC("C = 0: the subthreshold family applies instead")
    k = SQRT2 * delta_star / abs(C)
    pieces = [_piece(-math.inf, y0, -C, C * k, u0, y0),
              _piece(y0, math.inf, -C, -C * k, u0, y0)]
    acts = [y0] if delta_star > 0 else []
    return ShearSolution(SolutionKind.LIMIT_WHOLE_SPACE, pieces, C, 0.0, y0, u0, acts)


# ---------------------------------------------------------------------------
# channel flow with prescribed flux


@dataclass(frozen=True)
class PoiseuilleProblem:
    L: float
    Q: float
    fluid: BulkModel
    bc: BoundaryModel

    def __post_init__(self):
        if not self.L > 0 or not math.isfinite(self.L):
            raise InvalidParameters("L must be positive")
        if not math.isfinite(self.Q):
            raise InvalidParameters("Q must be finite")
        _check_fluid(self.fluid)

    @property
    def nu_star(self) -> float:
        return float(self.fluid.nu_star)

    @property
    def delta_star(self) -> float:
        return float(self.fluid.delta_star)

    def to_dict(self) -> dict[str, Any]:
        return {"L": self.L, "Q": self.Q, "fluid": self.fluid.to_dict(), "bc": self.bc.to_dict()}

    @classmethod
    def from_dict(cls, data) -> "PoiseuilleProblem":
        try:
            return cls(float(data["L"]), float(data["Q"]), BulkModel.from_dict(data["fluid"]),
                       BoundaryModel.from_dict(data["bc"]))
        except KeyError as exc:
            raise InvalidParameters(f"missing field {exc.args[0]!r}") from None


def _check_fluid(fluid: BulkModel) -> None:
    f = fluid.family
    if f is Family.NAVIER_STOKES:
        return
    if f in (Family.ACTIVATED_EULER, Family.REGULARIZED_ACTIVATED_EULER) \
            and fluid.activation_kind is ActivationKind.ONE:
        if f is Family.REGULARIZED_ACTIVATED_EULER and fluid.epsilon_star != 0:
            raise UnsupportedFluid("closed forms exist only for epsilon_star = 0")
        return
    raise UnsupportedFluid(f"no closed-form channel solution for {f.value}")


def _block(bc: BoundaryModel) -> BcBlock:
    f = bc.family
    if f is BoundaryFamily.COMBINED:
        if bc.s_star > 0:
            return BcBlock.NO_SLIP_NAVIER_SLIP
        if bc.v_star > 0:
            return BcBlock.FREE_SLIP_NAVIER_SLIP
        return BcBlock.NAVIER_SLIP
    return BcBlock(f.value)


def regime_thresholds(problem: PoiseuilleProblem) -> tuple[float, float]:
    """(Q_low, Q_high): onset of bulk activation and of wall sliding (inf if never)."""
    bc = problem.bc
    L, nu, dl = problem.L, problem.nu_star, problem.delta_star
    base = SQRT2 * dl * L * L
    if bc.family is BoundaryFamily.FREE_SLIP:
        return math.inf, math.inf
    if bc.family is BoundaryFamily.NO_SLIP:
        return base, math.inf
    q_low = base + 2.0 * bc.v_star * L
    return q_low, q_low + 2.0 * bc.s_star * L * L / (3.0 * nu)


def classify(problem: PoiseuilleProblem) -> RegimeLabel:
    """Regime label for the flux; ties go to the active branch."""
    block = _block(problem.bc)
    q_low, q_high = regime_thresholds(problem)
    Q = abs(problem.Q)
    if Q < q_low:
        return RegimeLabel(block, Branch.SUBTHRESHOLD)
    if block is BcBlock.NO_SLIP_NAVIER_SLIP and Q < q_high:
        return RegimeLabel(block, Branch.BULK_ACTIVE_BOUNDARY_STUCK)
    return RegimeLabel(block, Branch.FULLY_ACTIVE)


def poiseuille_constant(problem: PoiseuilleProblem) -> float:
    """Pressure-gradient constant C selected by the flux Q."""
    L, Q, nu, dl = problem.L, problem.Q, problem.nu_star, problem.delta_star
    bc = problem.bc
    if Q == 0 or bc.family is BoundaryFamily.FREE_SLIP:
        return 0.0
    sgn = math.copysign(1.0, Q)
    aQ = abs(Q)
    base = SQRT2 * dl * L * L
    if bc.family is BoundaryFamily.NO_SLIP:
        return 3.0 * max(aQ - base, 0.0) / (4.0 * L ** 3) * sgn
    gamma, s_star, v_star = bc.gamma_star, bc.s_star, bc.v_star
    A = base + 2.0 * v_star * L
    first = max(1.0 - A / aQ, 0.0)
    second = max(1.0 - (A + 2.0 * s_star * L * L / (3.0 * nu)) / aQ, 0.0)
    return 3.0 * Q / (4.0 * L ** 3) * (first - 3.0 * nu / (3.0 * nu + gamma * L) * second)


def _active_profile(problem: PoiseuilleProblem, C: float) -> list[Piece]:
    L, Q, dl = problem.L, problem.Q, problem.delta_star
    sgn = math.copysign(1.0, C) if C != 0 else (math.copysign(1.0, Q) if Q != 0 else 0.0)
    k = sgn * SQRT2 * dl
    K = Q / (2.0 * L) + C * L * L / 3.0 + k * L / 2.0
    return [Piece(-L, 0.0, K, k, -C), Piece(0.0, L, K, -k, -C)]


def _subthreshold_profile(problem: PoiseuilleProblem) -> tuple[list[Piece], dict[str, Any]]:
    L, Q, dl = problem.L, problem.Q, problem.delta_star
    bc = problem.bc
    if bc.family is BoundaryFamily.FREE_SLIP:
        w_cap = math.inf
    elif bc.family is BoundaryFamily.NO_SLIP:
        w_cap = 0.0
    else:
        w_cap = bc.v_star
    w = math.copysign(min(abs(Q) / (2.0 * L), w_cap), Q)
    m = (Q - 2.0 * L * w) / (L * L)
    pieces = [Piece(-L, 0.0, w + m * L, m, 0.0), Piece(0.0, L, w + m * L, -m, 0.0)]
    constraints = {
        "C": 0.0,
        "flux": float(Q),
        "slope_bound": SQRT2 * dl,
        "wall_slip_bound": float(w_cap),
        "wall_traction_bound": float(bc.s_star) if bc.family is not BoundaryFamily.FREE_SLIP else 0.0,
        "canonical_slope": float(abs(m)),
        "canonical_wall_velocity": float(w),
    }
    return pieces, constraints


def poiseuille_solve(problem: PoiseuilleProblem) -> ShearSolution:
    """Unique symmetric profile when C != 0 (or at the activation threshold),
    otherwise the subthreshold family with a canonical piecewise-linear member."""
    label = classify(problem)
    thresholds = regime_thresholds(problem)
    if label.branch is Branch.SUBTHRESHOLD:
        pieces, constraints = _subthreshold_profile(problem)
        return ShearSolution(SolutionKind.SUBTHRESHOLD_FAMILY, pieces, 0.0, regime=label,
                             constraints=constraints, thresholds=thresholds)
    C = poiseuille_constant(problem)
    acts = [0.0] if problem.delta_star > 0 else []
    return ShearSolution(SolutionKind.POISEUILLE_UNIQUE, _active_profile(problem, C), C,
                         activation_points=acts, regime=label, thresholds=thresholds)


def flow_rate(sol: ShearSolution, L: float) -> float:
    """Exact integral of u over [-L, L]."""
    total = 0.0
    covered = -L
    for p in sorted(sol.pieces, key=lambda p: p.lo):
        a, b = max(p.lo, -L), min(p.hi, L)
        if b <= a:
            continue
        if a > covered + 1e-15 * max(1.0, L):
            raise DomainMismatch("profile does not cover [-L, L]")
        total += p.c0 * (b - a) + p.c1 * (b * b - a * a) / 2.0 + p.c2 * (b ** 3 - a ** 3) / 3.0
        covered = max(covered, b)
    if covered < L - 1e-15 * max(1.0, L):
        raise DomainMismatch("profile does not cover [-L, L]")
    return total


def limit_shear_stress(omega, nu_star: float, delta_star: float, eps_star: float = 0.0):
    """Scalar shear stress of the (regularized) activated Euler fluid."""
    omega = np.asarray(omega, dtype=float)
    return nu_star * (eps_star * omega
                      + np.maximum(np.abs(omega) - SQRT2 * delta_star, 0.0) * np.sign(omega))

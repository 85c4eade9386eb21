"""Sampling-based certification of the graph axioms.

Points are drawn on the graph itself: a magnitude pair (|D|, |S|) from the
scalar graph combined with a random unit direction shared by both tensors.
Multivalued pieces (dead zones, plastic plateaus, rigid branches) are sampled
parametrically so that every branch is covered.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

import numpy as np

from . import models as M
from .errors import FamilyNotSampleable, InvalidParameters
from .models import ActivationKind, BoundaryFamily, BoundaryModel, BulkModel, Family

CHUNK = 10_000
MONOTONICITY_TOL = 1e-12
DUALITY_TOL = 1e-10
NON_INVERSE_THRESHOLD = 1e-2


class Axiom(str, Enum):
    G1 = "G1"
    G2 = "G2"
    G4 = "G4"
    B1 = "B1"
    B2 = "B2"
    B4 = "B4"
    DUALITY = "Duality"
    NON_INVERSE = "NonInverse"


@dataclass(frozen=True)
class SampleDomain:
    magnitude_range: tuple[float, float] = (1e-3, 1e3)
    n_directions: int = 1
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.magnitude_range
        if not (0 < lo < hi) or not math.isfinite(hi):
            raise InvalidParameters("magnitude_range must satisfy 0 < d_min < d_max < inf")
        if self.n_directions < 1:
            raise InvalidParameters("n_directions must be >= 1")


@dataclass
class CertReport:
    axiom: Axiom
    n_samples: int
    worst_violation: float
    tolerance: float
    witness: dict[str, Any] | None = None
    fitted_alpha: float | None = None
    fitted_beta: float | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.worst_violation <= self.tolerance)

    def to_json(self) -> dict[str, Any]:
        return {
            "axiom": Axiom(self.axiom).value,
            "n_samples": int(self.n_samples),
            "worst_violation": float(self.worst_violation),
            "tolerance": float(self.tolerance),
            "passed": self.passed,
            "witness": self.witness,
            "fitted_alpha": self.fitted_alpha,
            "fitted_beta": self.fitted_beta,
            "extra": self.extra,
        }


def merge_reports(a: CertReport, b: CertReport) -> CertReport:
    """Max-reduction of two partial reports of the same check (associative, commutative)."""
    if a.axiom != b.axiom:
        raise InvalidParameters("cannot merge reports of different axioms")
    worst = a if (a.worst_violation, _wkey(a)) >= (b.worst_violation, _wkey(b)) else b
    return CertReport(a.axiom, a.n_samples + b.n_samples, worst.worst_violation,
                      max(a.tolerance, b.tolerance), worst.witness,
                      worst.fitted_alpha, worst.fitted_beta, dict(worst.extra))


def _wkey(r: CertReport) -> str:
    # tie-break so that merge order never changes the chosen witness
    return repr(r.witness)


# ---------------------------------------------------------------------------
# sampling


def random_directions(rng: np.random.Generator, n: int) -> np.ndarray:
    """Unit-norm symmetric traceless 3x3 tensors, rotation-invariant distribution."""
    G = rng.standard_normal((n, 3, 3))
    S = 0.5 * (G + np.swapaxes(G, 1, 2))
    tr = np.trace(S, axis1=1, axis2=2) / 3.0
    S = S - tr[:, None, None] * np.eye(3)
    return S / M.frobenius(S)[:, None, None]


def random_tangent_directions(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    v[:, 2] = 0.0
    return v / np.linalg.norm(v, axis=1)[:, None]


def _log_uniform(rng, lo, hi, n):
    return np.exp(rng.uniform(math.log(lo), math.log(hi), n))


def _pick(lo, hi, u, fallback):
    """Point in [lo, hi]; unbounded intervals use ``fallback`` instead of hi."""
    top = np.where(np.isfinite(hi), hi, np.maximum(lo, 0.0) + fallback)
    with np.errstate(invalid="ignore"):
        return lo + u * (top - lo)


class _ScalarGraph:
    """Monotone scalar graph through the origin given by bound functions."""

    def __init__(self, fwd: Callable, inv: Callable, stress_scale: float):
        self.fwd = fwd          # x -> (lo, hi) of y
        self.inv = inv          # y -> (lo, hi) of x
        self.stress_scale = stress_scale

    def sample(self, rng, n, x_range):
        """Return magnitude pairs (x, y) covering every branch of the graph."""
        lo_x, hi_x = x_range
        x = _log_uniform(rng, lo_x, hi_x, n)
        y = _log_uniform(rng, self.stress_scale * lo_x, self.stress_scale * hi_x, n)
        u = rng.uniform(0.0, 1.0, n)
        cls = np.arange(n) % 4
        xs = np.empty(n)
        ys = np.empty(n)
        # class 0: parametrize by x, class 1: by y
        ylo, yhi = self.fwd(x)
        xlo, xhi = self.inv(y)
        ok0 = np.isfinite(ylo)
        ok1 = np.isfinite(xlo)
        by_x = ((cls == 0) & ok0) | ((cls == 1) & ~ok1 & ok0)
        by_y = ((cls == 1) & ok1) | ((cls == 0) & ~ok0 & ok1)
        xs[by_x] = x[by_x]
        ys[by_x] = _pick(ylo, yhi, u, y)[by_x]
        xs[by_y] = _pick(xlo, xhi, u, x)[by_y]
        ys[by_y] = y[by_y]
        # class 2: x = 0 segment, class 3: y = 0 segment
        y0lo, y0hi = self.fwd(np.zeros(1))
        x0lo, x0hi = self.inv(np.zeros(1))
        c2 = cls == 2
        xs[c2] = 0.0
        ys[c2] = _pick(np.full(n, y0lo[0]), np.full(n, y0hi[0]), u, y)[c2]
        c3 = cls == 3
        xs[c3] = _pick(np.full(n, x0lo[0]), np.full(n, x0hi[0]), u, x)[c3]
        ys[c3] = 0.0
        good = np.isfinite(xs) & np.isfinite(ys)
        good &= (cls >= 2) | by_x | by_y
        return xs, ys, good


def _bulk_graph(model: BulkModel) -> _ScalarGraph:
    scale = 2.0 * M.reference_viscosity(model)
    return _ScalarGraph(lambda d: M._stress_bounds(model, d),
                        lambda s: M._rate_bounds(model, s), scale)


def _bc_bounds(bc: BoundaryModel):
    f = bc.family

    def fwd(v):
        v = np.asarray(v, dtype=float)
        if f is BoundaryFamily.NO_SLIP:
            return np.where(v == 0, 0.0, np.inf), np.full_like(v, np.inf)
        if f is BoundaryFamily.FREE_SLIP:
            z = np.zeros_like(v)
            return z, z
        g, ss, vs = bc.wall_law()
        active = v > vs
        val = ss + g * (v - vs)
        lo = np.where(active, val, 0.0)
        hi = np.where(active, val, ss)
        return lo, hi

    def inv(s):
        s = np.asarray(s, dtype=float)
        if f is BoundaryFamily.NO_SLIP:
            z = np.zeros_like(s)
            return z, z
        if f is BoundaryFamily.FREE_SLIP:
            empty = s > 0
            return np.where(empty, np.inf, 0.0), np.full_like(s, np.inf)
        g, ss, vs = bc.wall_law()
        active = s > ss
        val = vs + (s - ss) / g
        return np.where(active, val, 0.0), np.where(active, val, vs)

    return fwd, inv


def _bc_graph(bc: BoundaryModel) -> _ScalarGraph:
    fwd, inv = _bc_bounds(bc)
    gamma = bc.gamma_star if bc.gamma_star > 0 else 1.0
    return _ScalarGraph(fwd, inv, gamma)


def _chunks(n: int):
    sizes = [CHUNK] * (n // CHUNK)
    if n % CHUNK:
        sizes.append(n % CHUNK)
    return sizes


def sample_graph_points(model: BulkModel | BoundaryModel, domain: SampleDomain, n: int,
                        rng: np.random.Generator):
    """``n`` on-graph points (first, second) as tensors (bulk) or tangent vectors (wall).

    Returns (X, Y) where X plays the role of D (or v) and Y of S (or s)."""
    if isinstance(model, BoundaryModel):
        graph = _bc_graph(model)
        dirs_fn = random_tangent_directions
    elif isinstance(model, BulkModel):
        graph = _bulk_graph(model)
        dirs_fn = random_directions
    else:
        raise FamilyNotSampleable(f"cannot sample {type(model).__name__}")
    xs, ys, good = graph.sample(rng, n, domain.magnitude_range)
    xs, ys = xs[good], ys[good]
    if xs.size == 0:
        raise FamilyNotSampleable("no on-graph samples could be generated")
    dirs = dirs_fn(rng, xs.size)
    expand = (slice(None),) + (None,) * (dirs.ndim - 1)
    return xs[expand] * dirs, ys[expand] * dirs


def _inner(A, B):
    axes = tuple(range(1, A.ndim))
    return np.sum(A * B, axis=axes)


def _norm(A):
    axes = tuple(range(1, A.ndim))
    return np.sqrt(np.sum(A * A, axis=axes))


def _witness(X1, Y1, X2=None, Y2=None, labels=("D", "S")) -> dict[str, Any]:
    w = {f"{labels[0]}1": np.asarray(X1).tolist(), f"{labels[1]}1": np.asarray(Y1).tolist()}
    if X2 is not None:
        w[f"{labels[0]}2"] = np.asarray(X2).tolist()
        w[f"{labels[1]}2"] = np.asarray(Y2).tolist()
    return w


def _labels(model):
    return ("v", "s") if isinstance(model, BoundaryModel) else ("D", "S")


def check_monotonicity(model: BulkModel | BoundaryModel, domain: SampleDomain,
                       n_pairs: int) -> CertReport:
    """Minimum normalized pairwise product over ``n_pairs`` on-graph pairs.

    The violation of a pair is -(Y1-Y2):(X1-X2) / (|Y1-Y2||X1-X2|), so the
    report passes iff every product is >= -1e-12 times its natural scale.
    """
    axiom = Axiom.B2 if isinstance(model, BoundaryModel) else Axiom.G2
    labels = _labels(model)
    seeds = np.random.SeedSequence(domain.seed).spawn(max(1, len(_chunks(n_pairs))))
    report = CertReport(axiom, 0, -math.inf, MONOTONICITY_TOL)
    for size, ss in zip(_chunks(n_pairs), seeds):
        rng = np.random.default_rng(ss)
        X, Y = sample_graph_points(model, domain, 2 * size, rng)
        k = X.shape[0] // 2
        X1, X2, Y1, Y2 = X[:k], X[k:2 * k], Y[:k], Y[k:2 * k]
        dX, dY = X1 - X2, Y1 - Y2
        prod = _inner(dX, dY)
        scale = _norm(dX) * _norm(dY)
        viol = np.where(scale > 0, -prod / np.where(scale > 0, scale, 1.0), 0.0)
        viol = np.where(prod == 0, 0.0, viol)
        i = int(np.argmax(viol))
        part = CertReport(axiom, k, float(viol[i]), MONOTONICITY_TOL,
                          _witness(X1[i], Y1[i], X2[i], Y2[i], labels))
        report = part if report.n_samples == 0 else merge_reports(report, part)
    return report


def check_origin(model: BulkModel | BoundaryModel) -> CertReport:
    """(O, O) lies on the graph."""
    if isinstance(model, BoundaryModel):
        z = np.zeros(3)
        res = M.bc_residual(model, z, z)
        return CertReport(Axiom.B1, 1, float(res), 0.0, _witness(z, z, labels=("v", "s")))
    z = np.zeros((3, 3))
    res = M.graph_residual(model, M.TensorPair(z, z))
    return CertReport(Axiom.G1, 1, float(res), 0.0, _witness(z, z))


# ---------------------------------------------------------------------------
# coercivity


@dataclass(frozen=True)
class CoercivityConstants:
    q: float
    C1: float
    C2: float
    C3: float
    alpha: float
    beta: float


def coercivity_exponent(model: BulkModel, r: float) -> float:
    if model.family not in (Family.ACTIVATED_EULER, Family.REGULARIZED_ACTIVATED_EULER):
        return float(r)
    kind = model.activation_kind
    if kind is ActivationKind.LADYZHENSKAYA:
        return max(r, 2.0)
    if kind is ActivationKind.ONE:
        return 2.0
    return float(r)


def closed_form_constants(model: BulkModel, r: float) -> CoercivityConstants | None:
    """Closed-form constants for ActivatedEuler with the shifted power-law or
    Ladyzhenskaya activation (A = 1, d* = 1, delta* > 0).

    The constants are derived for 2 nu* = 1 and transferred to general nu* by
    scaling S. Returns None outside the covered parameter set.
    """
    if model.family is not Family.ACTIVATED_EULER:
        return None
    kind = model.activation_kind
    delta = model.delta_star
    if delta <= 0 or model.d_star != 1.0 or model.A != 1.0:
        return None
    if kind not in (ActivationKind.SHIFTED_POWER_LAW, ActivationKind.LADYZHENSKAYA):
        return None
    q = coercivity_exponent(model, r)
    qp = q / (q - 1.0)
    td = 2.0 * delta
    if kind is ActivationKind.SHIFTED_POWER_LAW:
        C1 = min(1.0, (1.0 + td * td) ** ((r - 2) / 2) / td ** (r - 2))
        C2 = (1.0 + 1.0 / td) ** (r - 1)
    else:
        C1 = 1.0
        C2 = td ** (2 - q) + td ** (r - q)
    C3 = 1.0 + C2 ** qp
    alpha = C1 / (2.0 * C3)
    beta = C1 * td ** q / 2.0
    # S = 2 nu* S~ with S~ the unit-viscosity stress
    k = 2.0 * model.nu_star
    alpha = k * alpha * min(1.0, k ** (-qp))
    beta = k * beta
    return CoercivityConstants(q, C1, C2, C3, alpha, beta)


def check_coercivity(model: BulkModel, r: float, domain: SampleDomain,
                     n_samples: int = 10_000) -> CertReport:
    """Minimum slack of S:D >= alpha(|S|^q' + |D|^q) - beta over on-graph samples.

    ``worst_violation`` is the negated minimum slack, so a pass means every
    sample satisfies the bound.
    """
    if not M.is_stress_explicit(model):
        raise FamilyNotSampleable("coercivity is sampled along the rate parametrization")
    rng = np.random.default_rng(np.random.SeedSequence(domain.seed))
    d = np.sort(_log_uniform(rng, *domain.magnitude_range, n_samples))
    d = np.concatenate([[0.0], d])
    s = M.flow_curve(model, d)
    q = coercivity_exponent(model, r)
    qp = q / (q - 1.0)
    work = s * d
    growth = s ** qp + d ** q
    consts = closed_form_constants(model, r)
    extra: dict[str, Any] = {"q": q}
    if consts is not None:
        alpha, beta = consts.alpha, consts.beta
        extra.update(route="closed_form", C1=consts.C1, C2=consts.C2, C3=consts.C3)
    else:
        # fitted: half the asymptotic ratio on the upper decade, beta closes the gap
        top = d >= d[-1] / 10.0
        alpha = 0.5 * float(np.min(work[top] / growth[top]))
        beta = float(max(0.0, np.max(alpha * growth - work)))
        extra.update(route="fitted")
    slack = work - alpha * growth + beta
    i = int(np.argmin(slack))
    N = random_directions(rng, 1)[0]
    return CertReport(Axiom.G4, int(d.size), float(-slack[i]), 0.0,
                      _witness(d[i] * N, s[i] * N), alpha, beta, extra)


def check_boundary_coercivity(bc: BoundaryModel, domain: SampleDomain,
                              n_samples: int = 10_000) -> CertReport:
    """Fit s.v >= alpha(|s|^2 + |v|^2) - beta on the sliding branch."""
    if bc.family in (BoundaryFamily.NO_SLIP, BoundaryFamily.FREE_SLIP):
        # degenerate walls: one of the two quantities vanishes identically
        return CertReport(Axiom.B4, 0, 0.0, 0.0, None, None, None, {"route": "degenerate"})
    rng = np.random.default_rng(np.random.SeedSequence(domain.seed))
    v = np.sort(_log_uniform(rng, *domain.magnitude_range, n_samples))
    fwd, _ = _bc_bounds(bc)
    lo, hi = fwd(v)
    s = hi
    work = s * v
    growth = s * s + v * v
    top = v >= v[-1] / 10.0
    alpha = 0.5 * float(np.min(work[top] / growth[top]))
    beta = float(max(0.0, np.max(alpha * growth - work)))
    slack = work - alpha * growth + beta
    i = int(np.argmin(slack))
    e = np.array([1.0, 0.0, 0.0])
    return CertReport(Axiom.B4, n_samples, float(-slack[i]), 0.0,
                      _witness(v[i] * e, s[i] * e, labels=("v", "s")), alpha, beta,
                      {"route": "fitted"})


# ---------------------------------------------------------------------------
# duality


def round_trip_error(forward: BulkModel, inverse: BulkModel, D: np.ndarray) -> np.ndarray:
    """|D' - D| / |D| where S = forward(D) and D' = inverse^{-1}(S)."""
    S = M.stress_of_rate(forward, D)
    D2 = M.rate_of_stress(inverse, S)
    return M.frobenius(D2 - D) / M.frobenius(D)


def check_duality(forward: BulkModel, inverse: BulkModel, domain: SampleDomain,
                  mode: Axiom | str = Axiom.DUALITY, n_samples: int = 10_000) -> CertReport:
    """Round-trip D -> S -> D through two models.

    Duality mode expects max relative error <= 1e-10. NonInverse mode scans a
    deterministic log grid and passes when some sample exceeds 1e-2; its
    ``worst_violation`` is 1e-2 minus the largest error found.
    """
    mode = Axiom(mode)
    rng = np.random.default_rng(np.random.SeedSequence(domain.seed))
    lo, hi = domain.magnitude_range
    if mode is Axiom.DUALITY:
        d = np.sort(_log_uniform(rng, lo, hi, n_samples))
        d[0], d[-1] = lo, hi
    else:
        d = np.logspace(math.log10(lo), math.log10(hi), n_samples)
    N = random_directions(rng, d.size)
    D = d[:, None, None] * N
    err = round_trip_error(forward, inverse, D)
    i = int(np.argmax(err))
    S = M.stress_of_rate(forward, D[i])
    wit = _witness(D[i], S)
    if mode is Axiom.DUALITY:
        return CertReport(mode, d.size, float(err[i]), DUALITY_TOL, wit,
                          extra={"max_relative_error": float(err[i])})
    return CertReport(mode, d.size, float(NON_INVERSE_THRESHOLD - err[i]), 0.0, wit,
                      extra={"max_relative_error": float(err[i]), "at_rate": float(d[i])})

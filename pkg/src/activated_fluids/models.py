"""Bulk and boundary constitutive graphs.

Every bulk family shipped here is isotropic: a pair (S, D) lies on the graph
iff S and D are collinear (S = lambda D with lambda >= 0, or one of them is
zero) and the Frobenius norms (|D|, |S|) lie on a monotone scalar graph. The
scalar graph is stored as a pair of non-decreasing bound functions
``lo(d) <= |S| <= hi(d)``; single-valued branches have ``lo == hi`` and
unattainable rates have ``lo == hi == inf``. Boundary graphs relate the
tangential traction ``s`` to the slip velocity ``v`` in the same way.

All evaluation routines accept a single 3x3 tensor (or 3-vector) as well as
stacks with arbitrary leading dimensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Mapping

import numpy as np

from .errors import (
    FamilyNotExplicit,
    FamilyNotStressExplicit,
    InvalidParameters,
    NoConvergence,
    NotInvertible,
)

TINY = 1e-300
SQRT2 = math.sqrt(2.0)


class Family(str, Enum):
    EULER = "Euler"
    RIGID_ONLY = "RigidOnly"
    NAVIER_STOKES = "NavierStokes"
    POWER_LAW = "PowerLaw"
    GEN_POWER_LAW = "GenPowerLaw"
    STRESS_POWER_LAW = "StressPowerLaw"
    ADDITIVE_MIX = "AdditiveMix"
    BOUNDED_STRESS = "BoundedStress"
    BOUNDED_RATE = "BoundedRate"
    BINGHAM = "Bingham"
    HERSCHEL_BULKLEY = "HerschelBulkley"
    ACTIVATED_EULER = "ActivatedEuler"
    REGULARIZED_ACTIVATED_EULER = "RegularizedActivatedEuler"
    RIGID_FREE_FLOW_LIMIT = "RigidFreeFlowLimit"
    EULER_RIGID_LIMIT = "EulerRigidLimit"


class ActivationKind(str, Enum):
    ONE = "One"
    POWER_LAW = "PowerLaw"
    SHIFTED_POWER_LAW = "ShiftedPowerLaw"
    LADYZHENSKAYA = "Ladyzhenskaya"


class BoundaryFamily(str, Enum):
    FREE_SLIP = "FreeSlip"
    NO_SLIP = "NoSlip"
    NAVIER_SLIP = "NavierSlip"
    NO_SLIP_NAVIER_SLIP = "NoSlipNavierSlip"
    FREE_SLIP_NAVIER_SLIP = "FreeSlipNavierSlip"
    COMBINED = "Combined"


_ACTIVATED = (Family.ACTIVATED_EULER, Family.REGULARIZED_ACTIVATED_EULER)

# Parameters each family accepts (serialization rejects anything else).
_PARAMS: dict[Family, tuple[str, ...]] = {
    Family.EULER: (),
    Family.RIGID_ONLY: (),
    Family.NAVIER_STOKES: ("nu_star",),
    Family.POWER_LAW: ("nu_star", "d_star", "r"),
    Family.GEN_POWER_LAW: ("nu_star", "d_star", "r"),
    Family.STRESS_POWER_LAW: ("nu_star", "d_star", "r_prime"),
    Family.ADDITIVE_MIX: ("components",),
    Family.BOUNDED_STRESS: ("nu_star", "d_star", "a_exp"),
    Family.BOUNDED_RATE: ("nu_star", "d_star", "b_exp"),
    Family.BINGHAM: ("nu_star", "sigma_star"),
    Family.HERSCHEL_BULKLEY: ("nu_star", "d_star", "r", "sigma_star"),
    Family.ACTIVATED_EULER: ("nu_star", "delta_star", "activation_kind", "d_star", "r", "A"),
    Family.REGULARIZED_ACTIVATED_EULER: (
        "nu_star", "delta_star", "epsilon_star", "activation_kind", "d_star", "r", "A"),
    Family.RIGID_FREE_FLOW_LIMIT: ("nu_star", "d_star"),
    Family.EULER_RIGID_LIMIT: ("nu_star", "d_star"),
}

_BC_PARAMS: dict[BoundaryFamily, tuple[str, ...]] = {
    BoundaryFamily.FREE_SLIP: (),
    BoundaryFamily.NO_SLIP: (),
    BoundaryFamily.NAVIER_SLIP: ("gamma_star",),
    BoundaryFamily.NO_SLIP_NAVIER_SLIP: ("gamma_star", "s_star"),
    BoundaryFamily.FREE_SLIP_NAVIER_SLIP: ("gamma_star", "v_star"),
    BoundaryFamily.COMBINED: ("gamma_star", "s_star", "v_star"),
}


def _positive(name: str, value: float | None) -> None:
    if value is None or not (value > 0) or not math.isfinite(value):
        raise InvalidParameters(f"{name} must be a positive finite number, got {value!r}")


def _nonneg(name: str, value: float | None) -> None:
    if value is None or not (value >= 0) or not math.isfinite(value):
        raise InvalidParameters(f"{name} must be a non-negative finite number, got {value!r}")


@dataclass(frozen=True)
class BulkModel:
    """One member of a bulk constitutive family together with its parameters."""

    family: Family
    nu_star: float | None = None
    d_star: float | None = None
    r: float | None = None
    r_prime: float | None = None
    delta_star: float = 0.0
    sigma_star: float = 0.0
    epsilon_star: float = 0.0
    A: float = 1.0
    a_exp: float | None = None
    b_exp: float | None = None
    activation_kind: ActivationKind = ActivationKind.ONE
    components: tuple["BulkModel", ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "activation_kind", ActivationKind(self.activation_kind))
        object.__setattr__(self, "components", tuple(self.components))
        self._validate()

    def _validate(self) -> None:
        f = self.family
        if f is Family.ADDITIVE_MIX:
            if len(self.components) < 2:
                raise InvalidParameters("AdditiveMix needs at least two components")
            for c in self.components:
                if not isinstance(c, BulkModel):
                    raise InvalidParameters("AdditiveMix components must be BulkModel instances")
                if c.family is Family.ADDITIVE_MIX:
                    raise InvalidParameters("AdditiveMix components may not be mixtures")
            return
        if self.components:
            raise InvalidParameters(f"{f.value} does not take components")
        needs = _PARAMS[f]
        if "nu_star" in needs:
            _positive("nu_star", self.nu_star)
        if f is Family.POWER_LAW:
            _positive("d_star", self.d_star)
            if self.r is None or not self.r > 1:
                raise InvalidParameters("PowerLaw requires r > 1")
        elif f is Family.GEN_POWER_LAW:
            _positive("d_star", self.d_star)
            # r < 1 gives a non-monotone response, which is excluded.
            if self.r is None or not self.r >= 1:
                raise InvalidParameters("GenPowerLaw requires r >= 1 for a monotone response")
        elif f is Family.STRESS_POWER_LAW:
            _positive("d_star", self.d_star)
            if self.r_prime is None or not self.r_prime >= 1:
                raise InvalidParameters("StressPowerLaw requires r_prime >= 1")
        elif f is Family.BOUNDED_STRESS:
            _positive("d_star", self.d_star)
            _positive("a_exp", self.a_exp)
        elif f is Family.BOUNDED_RATE:
            _positive("d_star", self.d_star)
            _positive("b_exp", self.b_exp)
        elif f is Family.BINGHAM:
            _nonneg("sigma_star", self.sigma_star)
        elif f is Family.HERSCHEL_BULKLEY:
            _nonneg("sigma_star", self.sigma_star)
            _positive("d_star", self.d_star)
            if self.r is None or not self.r > 1:
                raise InvalidParameters("HerschelBulkley requires r > 1")
        elif f in _ACTIVATED:
            _nonneg("delta_star", self.delta_star)
            if f is Family.REGULARIZED_ACTIVATED_EULER:
                _nonneg("epsilon_star", self.epsilon_star)
            kind = self.activation_kind
            if kind is not ActivationKind.ONE:
                _positive("d_star", self.d_star)
                if self.r is None or not self.r > 1:
                    raise InvalidParameters(f"activation kind {kind.value} requires r > 1")
            if kind in (ActivationKind.SHIFTED_POWER_LAW, ActivationKind.LADYZHENSKAYA):
                _positive("A", self.A)
        elif f in (Family.RIGID_FREE_FLOW_LIMIT, Family.EULER_RIGID_LIMIT):
            _positive("d_star", self.d_star)

    @property
    def alpha_star(self) -> float:
        """Fluidity 1/(2 nu_star)."""
        return 1.0 / (2.0 * self.nu_star)

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        params: dict[str, Any] = {}
        for name in _PARAMS[self.family]:
            if name == "components":
                params[name] = [c.to_dict() for c in self.components]
                continue
            value = getattr(self, name)
            if name == "activation_kind":
                params[name] = value.value
                continue
            if value is None:
                continue
            if name in ("d_star", "r", "A") and self.family in _ACTIVATED \
                    and self.activation_kind is ActivationKind.ONE:
                continue
            if name == "A" and self.activation_kind not in (
                    ActivationKind.SHIFTED_POWER_LAW, ActivationKind.LADYZHENSKAYA):
                continue
            params[name] = value
        return {"family": self.family.value, "params": params}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BulkModel":
        if not isinstance(data, Mapping):
            raise InvalidParameters("model description must be a JSON object")
        extra = set(data) - {"family", "params"}
        if extra:
            raise InvalidParameters(f"unknown model fields: {sorted(extra)}")
        try:
            family = Family(data["family"])
        except (KeyError, ValueError):
            raise InvalidParameters(f"unknown bulk family {data.get('family')!r}") from None
        params = dict(data.get("params", {}))
        unknown = set(params) - set(_PARAMS[family])
        if unknown:
            raise InvalidParameters(f"unknown parameters for {family.value}: {sorted(unknown)}")
        if "components" in params:
            params["components"] = tuple(cls.from_dict(c) for c in params["components"])
        if "activation_kind" in params:
            try:
                params["activation_kind"] = ActivationKind(params["activation_kind"])
            except ValueError:
                raise InvalidParameters(
                    f"unknown activation kind {params['activation_kind']!r}") from None
        for key, value in params.items():
            if key not in ("components", "activation_kind"):
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise InvalidParameters(f"parameter {key} must be a number")
                params[key] = float(value)
        return cls(family=family, **params)


@dataclass(frozen=True)
class BoundaryModel:
    """A wall law between tangential traction s and slip velocity v."""

    family: BoundaryFamily
    gamma_star: float = 0.0
    s_star: float = 0.0
    v_star: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", BoundaryFamily(self.family))
        f = self.family
        if f in (BoundaryFamily.FREE_SLIP, BoundaryFamily.NO_SLIP):
            return
        _positive("gamma_star", self.gamma_star)
        _nonneg("s_star", self.s_star)
        _nonneg("v_star", self.v_star)
        if f is BoundaryFamily.NAVIER_SLIP and (self.s_star or self.v_star):
            raise InvalidParameters("NavierSlip has no activation thresholds")
        if f is BoundaryFamily.NO_SLIP_NAVIER_SLIP and self.v_star != 0:
            raise InvalidParameters("NoSlipNavierSlip requires v_star = 0")
        if f is BoundaryFamily.FREE_SLIP_NAVIER_SLIP and self.s_star != 0:
            raise InvalidParameters("FreeSlipNavierSlip requires s_star = 0")
        if f is BoundaryFamily.COMBINED and min(self.s_star, self.v_star) != 0:
            raise InvalidParameters("Combined requires at least one of s_star, v_star to be zero")

    def to_dict(self) -> dict[str, Any]:
        return {"family": self.family.value,
                "params": {k: getattr(self, k) for k in _BC_PARAMS[self.family]}}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "BoundaryModel":
        if not isinstance(data, Mapping):
            raise InvalidParameters("boundary description must be a JSON object")
        extra = set(data) - {"family", "params"}
        if extra:
            raise InvalidParameters(f"unknown boundary fields: {sorted(extra)}")
        try:
            family = BoundaryFamily(data["family"])
        except (KeyError, ValueError):
            raise InvalidParameters(f"unknown boundary family {data.get('family')!r}") from None
        params = dict(data.get("params", {}))
        unknown = set(params) - set(_BC_PARAMS[family])
        if unknown:
            raise InvalidParameters(f"unknown parameters for {family.value}: {sorted(unknown)}")
        for key, value in params.items():
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise InvalidParameters(f"parameter {key} must be a number")
        return cls(family=family, **{k: float(v) for k, v in params.items()})

    def wall_law(self) -> tuple[float, float, float]:
        """(gamma, s_star, v_star) of the combined relation
        ``gamma (|v|-v*)^+ v/|v| = (|s|-s*)^+ s/|s|``; NoSlip has no such form."""
        if self.family is BoundaryFamily.NO_SLIP:
            raise FamilyNotExplicit("NoSlip is a constraint, not a combined wall law")
        if self.family is BoundaryFamily.FREE_SLIP:
            return 0.0, 0.0, 0.0
        return self.gamma_star, self.s_star, self.v_star


def model_from_dict(data: Mapping[str, Any]) -> BulkModel | BoundaryModel:
    """Parse either a bulk or a boundary description, dispatching on the family name."""
    fam = data.get("family") if isinstance(data, Mapping) else None
    if fam in {b.value for b in BoundaryFamily}:
        return BoundaryModel.from_dict(data)
    return BulkModel.from_dict(data)


@dataclass(frozen=True)
class TensorPair:
    S: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        S = np.asarray(self.S, dtype=float)
        D = np.asarray(self.D, dtype=float)
        if S.shape[-2:] != (3, 3) or D.shape[-2:] != (3, 3):
            raise InvalidParameters("S and D must be 3x3 tensors")
        if not (np.array_equal(S, np.swapaxes(S, -1, -2)) and np.array_equal(D, np.swapaxes(D, -1, -2))):
            raise InvalidParameters("S and D must be symmetric")
        tr = np.abs(np.trace(D, axis1=-2, axis2=-1))
        if np.any(tr > 1e-12 * np.maximum(frobenius(D), TINY)):
            raise InvalidParameters("D must be traceless")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "D", D)


# ---------------------------------------------------------------------------
# tensor helpers


def frobenius(T) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    return np.sqrt(np.sum(T * T, axis=(-2, -1)))


def _vnorm(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return np.sqrt(np.sum(v * v, axis=-1))


def _relu(t):
    return np.maximum(t, 0.0)


def _scale(coef, T):
    return np.asarray(coef)[..., None, None] * T


# ---------------------------------------------------------------------------
# scalar maps

def _activation_factor(m: BulkModel, d: np.ndarray) -> np.ndarray:
    kind = m.activation_kind
    if kind is ActivationKind.ONE:
        return np.ones_like(d)
    x = d / m.d_star
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if kind is ActivationKind.POWER_LAW:
            return x ** (m.r - 2)
        if kind is ActivationKind.SHIFTED_POWER_LAW:
            return (m.A + x * x) ** ((m.r - 2) / 2)
        return 1.0 + m.A * x ** (m.r - 2)


def _activation_factor_derivative(m: BulkModel, d: np.ndarray) -> np.ndarray:
    kind = m.activation_kind
    if kind is ActivationKind.ONE:
        return np.zeros_like(d)
    ds = m.d_star
    x = d / ds
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if kind is ActivationKind.POWER_LAW:
            return (m.r - 2) / ds * x ** (m.r - 3)
        if kind is ActivationKind.SHIFTED_POWER_LAW:
            return (m.r - 2) * x / ds * (m.A + x * x) ** ((m.r - 4) / 2)
        return m.A * (m.r - 2) / ds * x ** (m.r - 3)


def _activated_g(m: BulkModel, d: np.ndarray) -> np.ndarray:
    act = _relu(d - m.delta_star)
    with np.errstate(invalid="ignore"):
        g = 2.0 * m.nu_star * act * _activation_factor(m, d)
    g = np.where(act > 0, g, 0.0)
    if m.family is Family.REGULARIZED_ACTIVATED_EULER:
        g = g + 2.0 * m.nu_star * m.epsilon_star * d
    return g


def _power(d, ds, expo):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = (d / ds) ** expo
    return out


def _pl_g(nu, ds, r, d):
    with np.errstate(invalid="ignore"):
        g = 2.0 * nu * _power(d, ds, r - 2) * d
    return np.where(d > TINY, g, 0.0)


def _pl_h(nu, ds, r, s):
    rp = r / (r - 1.0)
    with np.errstate(invalid="ignore"):
        h = _power(s, 2.0 * nu * ds, rp - 2) * s / (2.0 * nu)
    return np.where(s > TINY, h, 0.0)


def _spl_h(m: BulkModel, s):
    y = s / (2.0 * m.nu_star * m.d_star)
    return m.alpha_star * (0.5 + 0.5 * y * y) ** ((m.r_prime - 2) / 2) * s


def _spl_dh(m: BulkModel, s):
    y = s / (2.0 * m.nu_star * m.d_star)
    base = 0.5 + 0.5 * y * y
    return m.alpha_star * base ** ((m.r_prime - 4) / 2) * (base + (m.r_prime - 2) * 0.5 * y * y)


def _br_h(m: BulkModel, s):
    y = s / (2.0 * m.nu_star * m.d_star)
    with np.errstate(over="ignore"):
        den = (1.0 + y ** m.b_exp) ** (1.0 / m.b_exp)
    # for very large y the ratio saturates at 2 nu d* (avoid inf/inf)
    h = np.where(np.isfinite(den), m.alpha_star * s / den, m.d_star)
    return h


def _br_dh(m: BulkModel, s):
    y = s / (2.0 * m.nu_star * m.d_star)
    with np.errstate(over="ignore"):
        return m.alpha_star * (1.0 + y ** m.b_exp) ** (-1.0 / m.b_exp - 1.0)


def _gpl_g(m: BulkModel, d):
    x = d / m.d_star
    with np.errstate(over="ignore"):
        return 2.0 * m.nu_star * (0.5 + 0.5 * x * x) ** ((m.r - 2) / 2) * d


def _saturating_inverse(z, expo):
    """Inverse of x -> x / (1 + x^expo)^(1/expo) on [0, 1); +inf at and above 1."""
    z = np.asarray(z, dtype=float)
    inside = z < 1.0
    zc = np.where(inside, z, 0.0)
    with np.errstate(divide="ignore", over="ignore"):
        x = zc / (1.0 - zc ** expo) ** (1.0 / expo)
    return np.where(inside, x, np.inf)


def _bs_g(m: BulkModel, d):
    x = d / m.d_star
    with np.errstate(over="ignore"):
        den = (1.0 + x ** m.a_exp) ** (1.0 / m.a_exp)
    return np.where(np.isfinite(den), 2.0 * m.nu_star * d / den, 2.0 * m.nu_star * m.d_star)


def _solve_increasing(fn: Callable[[np.ndarray], np.ndarray], y: np.ndarray,
                      guess: np.ndarray, want: str) -> np.ndarray:
    """Generic monotone inversion on [0, inf).

    want == "lo": inf{x >= 0 : fn(x) >= y};  want == "hi": sup{x >= 0 : fn(x) <= y}.
    ``fn`` is non-decreasing (may take the value +inf). Returns +inf if the set
    is unbounded (``hi``) or empty (``lo``).
    """
    y = np.asarray(y, dtype=float)
    shape = y.shape
    if np.ndim(guess):
        guess = np.broadcast_to(np.asarray(guess, dtype=float), shape).ravel()
    y = y.ravel()
    out = np.empty_like(y)

    def ok(x, yy):
        fx = fn(x)
        return fx >= yy if want == "lo" else fx > yy

    # predicate P(x) is monotone false -> true; answer is the switch point.
    f0 = ok(np.zeros_like(y), y)
    out[f0] = 0.0
    todo = np.flatnonzero(~f0)
    if todo.size == 0:
        return out.reshape(shape)
    yy = y[todo]
    hi = np.maximum(np.asarray(guess, dtype=float)[todo] if np.ndim(guess) else
                    np.full(todo.size, float(guess)), 1e-300)
    lo = np.zeros_like(hi)
    p = ok(hi, yy)
    # expand upward until the predicate holds
    up = ~p
    for _ in range(200):
        if not up.any():
            break
        idx = np.flatnonzero(up)
        lo[idx] = hi[idx]
        hi[idx] = hi[idx] * 1e4
        p_new = ok(hi[idx], yy[idx])
        up[idx] = ~p_new & np.isfinite(hi[idx]) & (hi[idx] < 1e300)
    unbounded = ~ok(hi, yy)
    # shrink downward for those that held at the initial guess
    down = p & ~unbounded
    low_guess = down.copy()
    lo_d = hi.copy()
    for _ in range(200):
        if not down.any():
            break
        idx = np.flatnonzero(down)
        trial = lo_d[idx] * 1e-4
        p_new = ok(trial, yy[idx])
        hi[idx] = np.where(p_new, trial, hi[idx])
        lo_d[idx] = trial
        lo[idx] = np.where(p_new, lo[idx], trial)
        down[idx] = p_new & (trial > 1e-300)
    lo = np.where(low_guess & (hi <= 2e-300), 0.0, lo)
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        pm = ok(mid, yy)
        hi = np.where(pm, mid, hi)
        lo = np.where(pm, lo, mid)
    res = hi if want == "lo" else lo
    res = np.where(unbounded, np.inf, res)
    out[todo] = res
    return out.reshape(shape)


def _stress_bounds(m: BulkModel, d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(lo, hi) of the admissible |S| at rate magnitude d."""
    d = np.asarray(d, dtype=float)
    f = m.family
    zero = d <= TINY
    inf = np.full_like(d, np.inf)
    if f is Family.EULER:
        g = np.zeros_like(d)
        return g, g
    if f is Family.NAVIER_STOKES:
        g = 2.0 * m.nu_star * d
        return g, g
    if f is Family.POWER_LAW:
        g = _pl_g(m.nu_star, m.d_star, m.r, d)
        return g, g
    if f is Family.GEN_POWER_LAW:
        g = _gpl_g(m, d)
        return g, g
    if f is Family.BOUNDED_STRESS:
        g = _bs_g(m, d)
        return g, g
    if f in _ACTIVATED:
        g = _activated_g(m, d)
        return g, g
    if f is Family.STRESS_POWER_LAW:
        g = _solve_increasing(lambda s: _spl_h(m, s), d, 2.0 * m.nu_star * np.maximum(d, TINY), "lo")
        return g, g
    if f is Family.BOUNDED_RATE:
        g = 2.0 * m.nu_star * m.d_star * _saturating_inverse(d / m.d_star, m.b_exp)
        return g, g
    if f is Family.RIGID_ONLY:
        return np.where(zero, 0.0, inf), inf
    if f is Family.BINGHAM:
        g = m.sigma_star + 2.0 * m.nu_star * d
        return np.where(zero, 0.0, g), np.where(zero, m.sigma_star, g)
    if f is Family.HERSCHEL_BULKLEY:
        g = m.sigma_star + _pl_g(m.nu_star, m.d_star, m.r, d)
        return np.where(zero, 0.0, g), np.where(zero, m.sigma_star, g)
    if f is Family.RIGID_FREE_FLOW_LIMIT:
        cap = 2.0 * m.nu_star * m.d_star
        return np.where(zero, 0.0, cap), np.full_like(d, cap)
    if f is Family.EULER_RIGID_LIMIT:
        b = m.d_star / (2.0 * m.nu_star)
        lo = np.where(d <= b, 0.0, np.inf)
        hi = np.where(d < b, 0.0, np.inf)
        return lo, hi
    if f is Family.ADDITIVE_MIX:
        lo = np.zeros_like(d)
        hi = np.zeros_like(d)
        for c in m.components:
            cl, ch = _stress_bounds(c, d)
            lo = lo + cl
            hi = hi + ch
        return lo, hi
    raise AssertionError(f)  # pragma: no cover


def _rate_guess(m: BulkModel, s: np.ndarray) -> np.ndarray:
    nu = m.nu_star
    if nu is None:
        nus = [c.nu_star for c in m.components if c.nu_star is not None]
        nu = max(nus) if nus else 1.0
    return np.maximum(s / (2.0 * nu), 1e-300) + (m.delta_star or 0.0)


def _rate_bounds(m: BulkModel, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(lo, hi) of the admissible |D| at stress magnitude s."""
    s = np.asarray(s, dtype=float)
    f = m.family
    if f is Family.NAVIER_STOKES:
        h = s / (2.0 * m.nu_star)
        return h, h
    if f is Family.POWER_LAW:
        h = _pl_h(m.nu_star, m.d_star, m.r, s)
        return h, h
    if f is Family.STRESS_POWER_LAW:
        h = _spl_h(m, s)
        return h, h
    if f is Family.BOUNDED_RATE:
        h = _br_h(m, s)
        return h, h
    if f is Family.RIGID_ONLY:
        h = np.zeros_like(s)
        return h, h
    if f is Family.BINGHAM:
        h = _relu(s - m.sigma_star) / (2.0 * m.nu_star)
        return h, h
    if f is Family.HERSCHEL_BULKLEY:
        h = _pl_h(m.nu_star, m.d_star, m.r, _relu(s - m.sigma_star))
        return h, h
    if f is Family.BOUNDED_STRESS:
        h = m.d_star * _saturating_inverse(s / (2.0 * m.nu_star * m.d_star), m.a_exp)
        return h, h
    if f is Family.EULER:
        zero = s <= 0
        return np.where(zero, 0.0, np.inf), np.full_like(s, np.inf)
    if f is Family.RIGID_FREE_FLOW_LIMIT:
        cap = 2.0 * m.nu_star * m.d_star
        lo = np.where(s <= cap, 0.0, np.inf)
        hi = np.where(s < cap, 0.0, np.inf)
        return lo, hi
    if f is Family.EULER_RIGID_LIMIT:
        b = m.d_star / (2.0 * m.nu_star)
        return np.where(s <= 0, 0.0, b), np.full_like(s, b)
    if f in _ACTIVATED and m.activation_kind is ActivationKind.ONE:
        eps = m.epsilon_star if f is Family.REGULARIZED_ACTIVATED_EULER else 0.0
        k = 2.0 * m.nu_star
        knee = k * eps * m.delta_star
        if eps > 0:
            h = np.where(s <= knee, s / (k * eps), (s / k + m.delta_star) / (1.0 + eps))
            return h, h
        return np.where(s <= 0, 0.0, m.delta_star + s / k), m.delta_star + s / k
    guess = _rate_guess(m, s)
    lo = _solve_increasing(lambda x: _stress_bounds(m, x)[1], s, guess, "lo")
    hi = _solve_increasing(lambda x: _stress_bounds(m, x)[0], s, guess, "hi")
    # empty branch: no rate attains the stress level
    empty = ~np.isfinite(lo)
    lo = np.where(empty, np.inf, lo)
    hi = np.where(empty, np.inf, hi)
    return lo, hi


def _rate_derivative(m: BulkModel, s: np.ndarray) -> np.ndarray:
    if m.family is Family.STRESS_POWER_LAW:
        return _spl_dh(m, s)
    if m.family is Family.BOUNDED_RATE:
        return _br_dh(m, s)
    raise FamilyNotStressExplicit(m.family.value)


# families whose scalar map is a single-valued continuous function on [0, inf)
_CONTINUOUS = {
    Family.EULER, Family.NAVIER_STOKES, Family.POWER_LAW, Family.GEN_POWER_LAW,
    Family.STRESS_POWER_LAW, Family.BOUNDED_STRESS, Family.ACTIVATED_EULER,
    Family.REGULARIZED_ACTIVATED_EULER,
}
_STRESS_EXPLICIT = {
    Family.EULER, Family.NAVIER_STOKES, Family.POWER_LAW, Family.GEN_POWER_LAW,
    Family.BOUNDED_STRESS, Family.ACTIVATED_EULER, Family.REGULARIZED_ACTIVATED_EULER,
    Family.BINGHAM, Family.HERSCHEL_BULKLEY,
}
_RATE_EXPLICIT = {Family.RIGID_ONLY, Family.STRESS_POWER_LAW, Family.BOUNDED_RATE}


def is_stress_explicit(m: BulkModel) -> bool:
    if m.family is Family.ADDITIVE_MIX:
        return all(is_stress_explicit(c) or c.family in _CONTINUOUS for c in m.components)
    return m.family in _STRESS_EXPLICIT


def has_continuous_flow_curve(m: BulkModel) -> bool:
    """True when d -> |S| is a single-valued continuous map on all of [0, inf)."""
    if m.family is Family.ADDITIVE_MIX:
        return all(c.family in _CONTINUOUS for c in m.components)
    return m.family in _CONTINUOUS


def _single_valued(m: BulkModel, d: np.ndarray) -> np.ndarray:
    lo, hi = _stress_bounds(m, d)
    bad = (d > TINY) & ((lo != hi) | ~np.isfinite(lo))
    if np.any(bad):
        raise NotInvertible(
            f"{m.family.value} has no single stress value at |D| = {float(np.asarray(d)[bad].flat[0])!r}")
    return np.where(d > TINY, lo, 0.0)


# ---------------------------------------------------------------------------
# public bulk operations


def flow_curve(model: BulkModel, d):
    """Scalar stress magnitude g(d) = |S| at |D| = d.

    g(0) is reported as 0 for every family (the origin always lies on the graph).
    Raises NotInvertible where the graph is multivalued or empty at d > 0.
    """
    darr = np.asarray(d, dtype=float)
    if np.any(darr < 0):
        raise InvalidParameters("shear-rate magnitude must be non-negative")
    g = _single_valued(model, darr)
    return float(g) if np.ndim(d) == 0 else g


def flow_curve_derivative(model: BulkModel, d) -> np.ndarray:
    """g'(d) for families with a continuous flow curve (generalized derivative at kinks).

    At a ReLU kink the active branch is taken. Power-law singularities at d = 0
    are evaluated at a floor of 1e-8 d_star.
    """
    d = np.asarray(d, dtype=float)
    m = model
    f = m.family
    if f is Family.EULER:
        return np.zeros_like(d)
    if f is Family.NAVIER_STOKES:
        return np.full_like(d, 2.0 * m.nu_star)
    if f is Family.POWER_LAW:
        de = np.maximum(d, 1e-8 * m.d_star)
        return 2.0 * m.nu_star * (m.r - 1.0) * _power(de, m.d_star, m.r - 2)
    if f is Family.GEN_POWER_LAW:
        x = d / m.d_star
        base = 0.5 + 0.5 * x * x
        return 2.0 * m.nu_star * base ** ((m.r - 4) / 2) * (base + (m.r - 2) * 0.5 * x * x)
    if f is Family.BOUNDED_STRESS:
        x = d / m.d_star
        with np.errstate(over="ignore"):
            return 2.0 * m.nu_star * (1.0 + x ** m.a_exp) ** (-1.0 / m.a_exp - 1.0)
    if f in _ACTIVATED:
        de = d
        if m.activation_kind is not ActivationKind.ONE:
            de = np.maximum(d, 1e-8 * m.d_star)
        active = d >= m.delta_star
        with np.errstate(invalid="ignore", over="ignore"):
            val = 2.0 * m.nu_star * (_activation_factor(m, de)
                                     + _relu(d - m.delta_star) * _activation_factor_derivative(m, de))
        val = np.where(active, val, 0.0)
        if f is Family.REGULARIZED_ACTIVATED_EULER:
            val = val + 2.0 * m.nu_star * m.epsilon_star
        return val
    if f is Family.STRESS_POWER_LAW:
        g = _single_valued(m, d)
        return 1.0 / _spl_dh(m, g)
    if f is Family.ADDITIVE_MIX and has_continuous_flow_curve(m):
        return sum(flow_curve_derivative(c, d) for c in m.components)
    raise FamilyNotStressExplicit(f"{f.value} has no continuous flow curve")


def stress_of_rate(model: BulkModel, D):
    """S = g(|D|) D/|D|; exactly O at D = O."""
    if not is_stress_explicit(model):
        raise FamilyNotStressExplicit(
            f"{model.family.value} is not stress-explicit; use rate_of_stress or graph_residual")
    D = np.asarray(D, dtype=float)
    d = frobenius(D)
    g = _single_valued(model, d)
    coef = np.where(d > TINY, g / np.where(d > TINY, d, 1.0), 0.0)
    return _scale(coef, D)


def rate_of_stress(model: BulkModel, S):
    """D collinear with S such that (S, D) is on the graph."""
    S = np.asarray(S, dtype=float)
    s = frobenius(S)
    lo, hi = _rate_bounds(model, s)
    empty = ~np.isfinite(lo)
    multi = (lo != hi) & ~empty
    if np.any(empty):
        raise NotInvertible(f"{model.family.value}: no rate attains |S| = {float(s[empty].flat[0])!r}")
    if np.any(multi):
        raise NotInvertible(
            f"{model.family.value} is multivalued in D at |S| = {float(s[multi].flat[0])!r}; "
            "use graph_residual")
    if not np.all(np.isfinite(hi)):
        raise NoConvergence("root-find failed to bracket the rate magnitude")
    coef = np.where(s > TINY, hi / np.where(s > TINY, s, 1.0), 0.0)
    return _scale(coef, S)


def generalized_viscosity(model: BulkModel, d):
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise InvalidParameters("generalized viscosity needs d > 0")
    return flow_curve(model, d) / (2.0 * d)


def generalized_fluidity(model: BulkModel, s):
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise InvalidParameters("generalized fluidity needs s > 0")
    lo, hi = _rate_bounds(model, s)
    if np.any(lo != hi) or not np.all(np.isfinite(lo)):
        raise NotInvertible(f"{model.family.value} has no single rate at the requested stress")
    out = lo / s
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Limit:
    """Symbolic zero-shear limit: zero, finite (with value) or infinite."""

    kind: str
    value: float = 0.0

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def finite(cls, value: float):
        return cls("finite", float(value)) if value != 0 else cls("zero")

    @classmethod
    def infinite(cls):
        return cls("infinite", math.inf)

    def __add__(self, other: "Limit") -> "Limit":
        if "infinite" in (self.kind, other.kind):
            return Limit.infinite()
        return Limit.finite(self.value + other.value)

    def reciprocal_fluidity(self) -> "Limit":
        """Map a zero-rate viscosity nu_0 to the zero-stress fluidity 1/(2 nu_0)."""
        if self.kind == "zero":
            return Limit.infinite()
        if self.kind == "infinite":
            return Limit.zero()
        return Limit.finite(1.0 / (2.0 * self.value))

    def to_json(self):
        return {"kind": self.kind, "value": self.value if self.kind == "finite" else None}


def _power_limit(coef: float, expo: float) -> Limit:
    """Limit of coef * x**expo as x -> 0+."""
    if expo > 0:
        return Limit.zero()
    if expo == 0:
        return Limit.finite(coef)
    return Limit.infinite()


def _nu0(m: BulkModel) -> Limit:
    f = m.family
    if f in (Family.EULER, Family.EULER_RIGID_LIMIT):
        return Limit.zero()
    if f in (Family.RIGID_ONLY, Family.RIGID_FREE_FLOW_LIMIT):
        return Limit.infinite()
    if f in (Family.NAVIER_STOKES, Family.BOUNDED_STRESS, Family.BOUNDED_RATE):
        return Limit.finite(m.nu_star)
    if f is Family.POWER_LAW:
        return _power_limit(m.nu_star, m.r - 2)
    if f is Family.GEN_POWER_LAW:
        return Limit.finite(m.nu_star * 0.5 ** ((m.r - 2) / 2))
    if f is Family.STRESS_POWER_LAW:
        alpha0 = m.alpha_star * 0.5 ** ((m.r_prime - 2) / 2)
        return Limit.finite(1.0 / (2.0 * alpha0))
    if f in (Family.BINGHAM, Family.HERSCHEL_BULKLEY):
        if m.sigma_star > 0:
            return Limit.infinite()
        if f is Family.BINGHAM:
            return Limit.finite(m.nu_star)
        return _power_limit(m.nu_star, m.r - 2)
    if f in _ACTIVATED:
        eps = m.epsilon_star if f is Family.REGULARIZED_ACTIVATED_EULER else 0.0
        reg = Limit.finite(m.nu_star * eps)
        if m.delta_star > 0:
            return reg
        kind = m.activation_kind
        if kind is ActivationKind.ONE:
            base = Limit.finite(m.nu_star)
        elif kind is ActivationKind.POWER_LAW:
            base = _power_limit(m.nu_star, m.r - 2)
        elif kind is ActivationKind.SHIFTED_POWER_LAW:
            base = Limit.finite(m.nu_star * m.A ** ((m.r - 2) / 2))
        else:
            base = Limit.finite(m.nu_star) + _power_limit(m.nu_star * m.A, m.r - 2)
        return reg + base
    if f is Family.ADDITIVE_MIX:
        total = Limit.zero()
        for c in m.components:
            total = total + _nu0(c)
        return total
    raise AssertionError(f)  # pragma: no cover


def zero_limits(model: BulkModel) -> tuple[Limit, Limit]:
    """(nu_0, alpha_0): zero-shear-rate viscosity and zero-shear-stress fluidity."""
    nu0 = _nu0(model)
    return nu0, nu0.reciprocal_fluidity()


def graph_residual(model: BulkModel, pair: TensorPair):
    """Non-negative defect, zero iff (S, D) belongs to the graph."""
    S = np.asarray(pair.S, dtype=float)
    D = np.asarray(pair.D, dtype=float)
    m = model
    f = m.family
    if f is Family.RIGID_FREE_FLOW_LIMIT:
        k = 2.0 * m.nu_star * m.d_star
        res = _relu(frobenius(S) - k) + frobenius(k * D - _scale(frobenius(D), S))
    elif f is Family.EULER_RIGID_LIMIT:
        res = _relu(2.0 * m.nu_star * frobenius(D) - m.d_star) + \
            frobenius(_scale(2.0 * m.nu_star * frobenius(S), D) - m.d_star * S)
    elif f in (Family.BINGHAM, Family.HERSCHEL_BULKLEY):
        s = frobenius(S)
        d = frobenius(D)
        if f is Family.BINGHAM:
            visc = 2.0 * m.nu_star * D
        else:
            coef = np.where(d > TINY, _pl_g(m.nu_star, m.d_star, m.r, d) / np.where(d > TINY, d, 1), 0)
            visc = _scale(coef, D)
        plastic = np.where(s > TINY, _relu(s - m.sigma_star) / np.where(s > TINY, s, 1.0), 0.0)
        res = frobenius(visc - _scale(plastic, S))
    elif f in _RATE_EXPLICIT:
        res = frobenius(D - rate_of_stress(m, S))
    elif f is Family.ADDITIVE_MIX:
        res = _interval_residual(m, S, D)
    else:
        res = frobenius(S - stress_of_rate(m, D))
    return float(res) if np.ndim(res) == 0 else res


def _interval_residual(m: BulkModel, S, D):
    d = frobenius(D)
    s = frobenius(S)
    lo, hi = _stress_bounds(m, d)
    nz = d > TINY
    n = _scale(np.where(nz, 1.0 / np.where(nz, d, 1.0), 0.0), D)
    lam = np.sum(S * n, axis=(-2, -1))
    perp = frobenius(S - _scale(lam, n))
    with np.errstate(invalid="ignore"):
        dist = np.where(lam < lo, lo - lam, np.where(lam > hi, lam - hi, 0.0))
    res_active = perp + dist
    res_zero = _relu(s - hi)
    return np.where(nz, res_active, res_zero)


# ---------------------------------------------------------------------------
# 1D shear reduction  (v = (u(y), 0, 0), omega = du/dy)


def shear_stress(model: BulkModel, omega):
    """tau(omega) = S_12 = g(|omega|/sqrt 2) sign(omega)/sqrt 2."""
    omega = np.asarray(omega, dtype=float)
    g = _single_valued(model, np.abs(omega) / SQRT2)
    return np.sign(omega) * g / SQRT2


def shear_stress_derivative(model: BulkModel, omega):
    omega = np.asarray(omega, dtype=float)
    return 0.5 * flow_curve_derivative(model, np.abs(omega) / SQRT2)


def reference_viscosity(model: BulkModel) -> float:
    if model.nu_star is not None:
        return float(model.nu_star)
    nus = [c.nu_star for c in model.components if c.nu_star is not None]
    return float(max(nus)) if nus else 1.0


# ---------------------------------------------------------------------------
# boundary graphs


def _unit(v):
    v = np.asarray(v, dtype=float)
    n = _vnorm(v)
    return np.where(n[..., None] > TINY, v / np.where(n > TINY, n, 1.0)[..., None], 0.0), n


def traction_of_slip(bc: BoundaryModel, v_tau):
    v_tau = np.asarray(v_tau, dtype=float)
    f = bc.family
    if f is BoundaryFamily.FREE_SLIP:
        return np.zeros_like(v_tau)
    if f is BoundaryFamily.NAVIER_SLIP:
        return bc.gamma_star * v_tau
    if f is BoundaryFamily.FREE_SLIP_NAVIER_SLIP or (
            f is BoundaryFamily.COMBINED and bc.s_star == 0):
        e, n = _unit(v_tau)
        return bc.gamma_star * _relu(n - bc.v_star)[..., None] * e
    raise FamilyNotExplicit(f"{f.value} does not give the traction as a function of the slip")


def slip_of_traction(bc: BoundaryModel, s):
    s = np.asarray(s, dtype=float)
    f = bc.family
    if f is BoundaryFamily.NO_SLIP:
        return np.zeros_like(s)
    if f is BoundaryFamily.NAVIER_SLIP:
        return s / bc.gamma_star
    if f is BoundaryFamily.NO_SLIP_NAVIER_SLIP or (
            f is BoundaryFamily.COMBINED and bc.v_star == 0):
        e, n = _unit(s)
        return _relu(n - bc.s_star)[..., None] * e / bc.gamma_star
    raise FamilyNotExplicit(f"{f.value} does not give the slip as a function of the traction")


def bc_residual(bc: BoundaryModel, s, v_tau):
    s = np.asarray(s, dtype=float)
    v = np.asarray(v_tau, dtype=float)
    f = bc.family
    if f is BoundaryFamily.NO_SLIP:
        res = _vnorm(v)
    elif f is BoundaryFamily.FREE_SLIP:
        res = _vnorm(s)
    else:
        ev, nv = _unit(v)
        es, ns = _unit(s)
        lhs = bc.gamma_star * _relu(nv - bc.v_star)[..., None] * ev
        rhs = _relu(ns - bc.s_star)[..., None] * es
        res = _vnorm(lhs - rhs)
    return float(res) if np.ndim(res) == 0 else res


def wall_scalar_laws(bc: BoundaryModel) -> tuple[Callable, Callable, Callable, Callable]:
    """Scalar pieces phi_v(u), phi_v'(u), phi_s(s), phi_s'(s) of the combined law
    ``phi_v(u) = phi_s(s)`` used by the channel solver (active branch at ties)."""
    gamma, s_star, v_star = bc.wall_law()
    free = bc.family is BoundaryFamily.FREE_SLIP

    def phi_v(u):
        return 0.0 if free else gamma * math.copysign(max(abs(u) - v_star, 0.0), u)

    def dphi_v(u):
        return 0.0 if free else (gamma if abs(u) >= v_star else 0.0)

    def phi_s(s):
        return math.copysign(max(abs(s) - s_star, 0.0), s)

    def dphi_s(s):
        return 1.0 if abs(s) >= s_star else 0.0

    return phi_v, dphi_v, phi_s, dphi_s

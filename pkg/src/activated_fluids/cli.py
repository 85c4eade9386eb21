"""Command-line front end.

Every command takes a JSON config (``--config``); command-line flags override
its top-level scalars. Outputs are written atomically below ``--out-dir``.
Exit codes: 0 success, 2 invalid input, 3 solver failure (partial report
written and flagged).
"""

from __future__ import annotations

import argparse
import copy
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable

import jsonschema
import numpy as np

from . import channel as CH
from . import graphcheck as GC
from . import models as M
from . import shear as SH
from .errors import FluidsError, InvalidAxis, NoConvergence, SingularJacobian

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3


# ---------------------------------------------------------------------------
# defaults and schemas

_MODEL = {"type": "object", "required": ["family"],
          "properties": {"family": {"type": "string"}, "params": {"type": "object"}},
          "additionalProperties": False}
_NUM = {"type": "number"}
_OPT_NUM = {"type": ["number", "null"]}
_PATH = {"type": "string"}
_OPT_PATH = {"type": ["string", "null"]}

DEFAULTS: dict[str, dict[str, Any]] = {
    "flowcurve": {"model": None, "d_min": 1e-3, "d_max": 1e3, "n_points": 200,
                  "out": "flowcurve.csv"},
    "graphcheck": {"model": None, "inverse": None, "axiom": "G2", "pairs": 100000,
                   "samples": 10000, "seed": 0, "d_min": 1e-3, "d_max": 1e3, "r": None,
                   "out": "report.json"},
    "shear": {"variant": "regularized", "C": 1.0, "y0": 0.0, "u0": 0.0, "eps_star": 1.0,
              "delta_star": 0.0, "nu_star": 1.0, "y_min": -1.0, "y_max": 1.0,
              "n_points": 201, "profile_out": "u.csv", "out": "shear.json"},
    "poiseuille": {"problem": None, "n_points": 201, "profile_out": "u.csv",
                   "report_out": "regime.json"},
    "channel-steady": {"problem": None, "n": 512, "eps_final": 1e-8, "tol": None,
                       "max_iter": 200, "out": "report.json", "profile_out": "u.csv"},
    "channel-unsteady": {"problem": None, "n": 256, "eps_final": 1e-8, "tol": None,
                         "max_iter": 200, "dt": 1e-3, "T": 1.0, "out": "report.json",
                         "profile_out": "u.csv", "ledger_out": "energy.csv"},
    "sweep": {"base": None, "axis": None, "values": [], "jobs": 1, "out": "sweep.csv"},
}

_PROBLEM = {"type": "object", "required": ["L", "fluid", "bc"],
            "properties": {"L": _NUM, "Q": _NUM, "C": _NUM, "fluid": _MODEL, "bc": _MODEL,
                           "body_force": {"type": ["object", "null"]},
                           "v0": {"type": ["object", "null"]}},
            "additionalProperties": False}


def _schema(command: str) -> dict[str, Any]:
    props: dict[str, Any] = {"command": {"const": command}}
    for key, value in DEFAULTS[command].items():
        if key in ("model", "inverse"):
            props[key] = _MODEL if key == "model" else {"oneOf": [_MODEL, {"type": "null"}]}
        elif key == "problem":
            props[key] = _PROBLEM
        elif key in ("out", "profile_out", "report_out", "ledger_out"):
            props[key] = _OPT_PATH
        elif key in ("axiom", "variant", "axis"):
            props[key] = {"type": "string"}
        elif key == "values":
            props[key] = {"type": "array", "items": _NUM}
        elif key == "base":
            props[key] = {"type": "object", "required": ["command"]}
        elif key in ("n_points", "pairs", "samples", "seed", "n", "jobs", "max_iter"):
            props[key] = {"type": "integer", "minimum": 0}
        elif value is None:
            props[key] = _OPT_NUM
        else:
            props[key] = _NUM
    required = [k for k in ("model", "problem", "base", "axis") if k in DEFAULTS[command]]
    return {"type": "object", "properties": props, "required": required,
            "additionalProperties": False}


def complete_config(cfg: dict[str, Any]) -> dict[str, Any]:
    command = cfg.get("command")
    if command not in DEFAULTS:
        raise M.InvalidParameters(f"unknown command {command!r}")
    full = {"command": command, **copy.deepcopy(DEFAULTS[command])}
    full.update(copy.deepcopy(cfg))
    jsonschema.validate(full, _schema(command))
    return full


# ---------------------------------------------------------------------------
# output helpers


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def write_json(path: str | None, obj: Any) -> None:
    if path:
        _atomic_write(path, dumps(obj))


def write_csv(path: str | None, header: list[str], rows) -> None:
    if not path:
        return
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else fmt(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def _resolve(out_dir: str, path: str | None) -> str | None:
    if not path:
        return None
    return path if os.path.isabs(path) else os.path.join(out_dir, path)


# ---------------------------------------------------------------------------
# problem construction


def _body_force(spec: dict[str, Any] | None) -> CH.BodyForce | None:
    if not spec:
        return None
    kind = spec.get("type")
    if kind == "constant":
        value = float(spec["value"])
        return lambda t, y: np.full_like(y, value)
    if kind == "harmonic":
        amp, omega, phase = float(spec["amplitude"]), float(spec["omega"]), float(spec.get("phase", 0.0))
        return lambda t, y: np.full_like(y, amp * math.sin(omega * t + phase))
    raise M.InvalidParameters(f"unknown body_force type {kind!r}")


def _initial(spec: dict[str, Any] | None, L: float):
    if not spec:
        return None
    kind = spec.get("type")
    amp = float(spec.get("amplitude", 1.0))
    if kind == "zero":
        return None
    if kind == "sine_mode":
        k = int(spec.get("mode", 1))
        return lambda y: amp * np.sin(k * np.pi * (y + L) / (2.0 * L))
    if kind == "cosine":
        return lambda y: amp * np.cos(np.pi * y / (2.0 * L))
    if kind == "tent":
        slope = float(spec["slope"])
        return lambda y: slope * (L - np.abs(y))
    if kind == "values":
        return np.asarray(spec["values"], dtype=float)
    raise M.InvalidParameters(f"unknown v0 type {kind!r}")


def _channel_problem(p: dict[str, Any], T: float = 0.0) -> CH.ChannelProblem:
    has_q, has_c = "Q" in p, "C" in p
    if has_q == has_c:
        raise M.InvalidParameters("problem needs exactly one of Q (given flux) or C (given pressure gradient)")
    forcing = CH.GivenQ(float(p["Q"])) if has_q else CH.GivenC(float(p["C"]))
    L = float(p["L"])
    return CH.ChannelProblem(L, forcing, M.BulkModel.from_dict(p["fluid"]),
                             M.BoundaryModel.from_dict(p["bc"]), _body_force(p.get("body_force")),
                             _initial(p.get("v0"), L), T)


# ---------------------------------------------------------------------------
# commands; each returns a flat summary dict


def run_flowcurve(cfg, out_dir):
    model = M.BulkModel.from_dict(cfg["model"])
    if not 0 < cfg["d_min"] < cfg["d_max"]:
        raise M.InvalidParameters("need 0 < d_min < d_max")
    d = np.logspace(math.log10(cfg["d_min"]), math.log10(cfg["d_max"]), cfg["n_points"])
    lo, hi = M._stress_bounds(model, d)
    single = (lo == hi) & np.isfinite(lo)
    s = np.where(single, lo, np.nan)
    rows = [(d[i], s[i], s[i] / (2.0 * d[i])) for i in range(d.size)]
    write_csv(_resolve(out_dir, cfg["out"]), ["d", "s", "nu_g"], rows)
    return {"n_points": int(d.size), "n_multivalued": int(np.count_nonzero(~single))}


def run_graphcheck(cfg, out_dir):
    raw = cfg["model"]
    model = M.model_from_dict(raw)
    axiom = GC.Axiom(cfg["axiom"])
    domain = GC.SampleDomain((cfg["d_min"], cfg["d_max"]), 1, cfg["seed"])
    if axiom in (GC.Axiom.G2, GC.Axiom.B2):
        rep = GC.check_monotonicity(model, domain, cfg["pairs"])
    elif axiom in (GC.Axiom.G1, GC.Axiom.B1):
        rep = GC.check_origin(model)
    elif axiom is GC.Axiom.G4:
        if not isinstance(model, M.BulkModel):
            raise M.InvalidParameters("G4 applies to bulk models")
        r = cfg["r"] if cfg["r"] is not None else (model.r if model.r is not None else 2.0)
        rep = GC.check_coercivity(model, r, domain, cfg["samples"])
    elif axiom is GC.Axiom.B4:
        if not isinstance(model, M.BoundaryModel):
            raise M.InvalidParameters("B4 applies to boundary models")
        rep = GC.check_boundary_coercivity(model, domain, cfg["samples"])
    else:
        if cfg["inverse"] is None:
            raise M.InvalidParameters(f"{axiom.value} needs an 'inverse' model")
        inverse = M.BulkModel.from_dict(cfg["inverse"])
        rep = GC.check_duality(model, inverse, domain, axiom, cfg["samples"])
    write_json(_resolve(out_dir, cfg["out"]), rep.to_json())
    return {"passed": rep.passed, "worst_violation": rep.worst_violation}


def _profile_rows(sol: SH.ShearSolution, y: np.ndarray, nu: float, delta: float, eps: float):
    u = sol.u(y)
    du = sol.du(y)
    tau = SH.limit_shear_stress(du, nu, delta, eps)
    return [(y[i], u[i], du[i], tau[i]) for i in range(y.size)]


def run_shear(cfg, out_dir):
    args = (cfg["C"], cfg["y0"], cfg["u0"])
    if cfg["variant"] == "regularized":
        sol = SH.whole_space_regularized(*args, cfg["eps_star"], cfg["delta_star"], cfg["nu_star"])
        eps = cfg["eps_star"]
    elif cfg["variant"] == "limit":
        sol = SH.whole_space_limit(*args, cfg["delta_star"], cfg["nu_star"])
        eps = 0.0
    else:
        raise M.InvalidParameters("variant must be 'regularized' or 'limit'")
    y = np.linspace(cfg["y_min"], cfg["y_max"], cfg["n_points"])
    write_csv(_resolve(out_dir, cfg["profile_out"]), ["y", "u", "du_dy", "shear_stress"],
              _profile_rows(sol, y, cfg["nu_star"], cfg["delta_star"], eps))
    write_json(_resolve(out_dir, cfg["out"]), sol.to_json())
    return {"n_activation": len(sol.activation_points)}


def run_poiseuille(cfg, out_dir):
    prob = SH.PoiseuilleProblem.from_dict(cfg["problem"])
    sol = SH.poiseuille_solve(prob)
    y = np.linspace(-prob.L, prob.L, cfg["n_points"])
    write_csv(_resolve(out_dir, cfg["profile_out"]), ["y", "u", "du_dy", "shear_stress"],
              _profile_rows(sol, y, prob.nu_star, prob.delta_star, 0.0))
    q_low, q_high = sol.thresholds
    report = {
        "C": sol.C,
        "regime": sol.regime.to_json(),
        "thresholds": {"Q_low": q_low if math.isfinite(q_low) else None,
                       "Q_high": q_high if math.isfinite(q_high) else None},
        "family": sol.kind is SH.SolutionKind.SUBTHRESHOLD_FAMILY,
        "flow_rate": SH.flow_rate(sol, prob.L),
        "solution": sol.to_json(),
    }
    write_json(_resolve(out_dir, cfg["report_out"]), report)
    return {"C": sol.C, "regime_block": sol.regime.bc_block.value,
            "regime_branch": sol.regime.branch.value}


def _options(cfg) -> CH.SolveOptions:
    return CH.SolveOptions(eps_final=float(cfg["eps_final"]), tol=cfg["tol"],
                           max_iter=int(cfg["max_iter"]))


def _write_channel(cfg, out_dir, rep: CH.SolveReport):
    write_json(_resolve(out_dir, cfg["out"]), rep.to_json())
    rows = [(rep.y[i], rep.u[i]) for i in range(rep.y.size)]
    write_csv(_resolve(out_dir, cfg["profile_out"]), ["y", "u"], rows)
    if rep.energy_ledger is not None and cfg.get("ledger_out"):
        keys = ["t", "kinetic", "dissipation", "work", "slack"]
        write_csv(_resolve(out_dir, cfg["ledger_out"]), keys,
                  [[r[k] for k in keys] for r in rep.energy_ledger])


def _solver_guard(cfg, out_dir, fn: Callable[[], CH.SolveReport]) -> CH.SolveReport:
    try:
        return fn()
    except (NoConvergence, SingularJacobian) as exc:
        part = exc.partial if isinstance(exc.partial, CH.SolveReport) else None
        if part is not None:
            _write_channel(cfg, out_dir, part)
        raise


def run_channel_steady(cfg, out_dir):
    prob = _channel_problem(cfg["problem"])
    grid = CH.Grid(int(cfg["n"]), prob.L)
    rep = _solver_guard(cfg, out_dir, lambda: CH.steady_solve(prob, grid, _options(cfg)))
    _write_channel(cfg, out_dir, rep)
    return {"C": rep.C, "residual_norm": rep.residual_norm}


def run_channel_unsteady(cfg, out_dir):
    prob = _channel_problem(cfg["problem"], float(cfg["T"]))
    grid = CH.Grid(int(cfg["n"]), prob.L)
    rep = _solver_guard(cfg, out_dir,
                        lambda: CH.unsteady_solve(prob, grid, float(cfg["dt"]), _options(cfg)))
    _write_channel(cfg, out_dir, rep)
    check = CH.energy_ledger_check(rep)
    return {"ledger_passed": check.passed, "final_kinetic": rep.energy_ledger[-1]["kinetic"]}


COMMANDS: dict[str, Callable[[dict, str], dict]] = {
    "flowcurve": run_flowcurve,
    "graphcheck": run_graphcheck,
    "shear": run_shear,
    "poiseuille": run_poiseuille,
    "channel-steady": run_channel_steady,
    "channel-unsteady": run_channel_unsteady,
}


# ---------------------------------------------------------------------------
# sweep


def _set_path(cfg: dict, axis: str, value: float) -> dict:
    out = copy.deepcopy(cfg)
    node: Any = out
    keys = axis.split(".")
    for k in keys[:-1]:
        if not isinstance(node, dict) or k not in node:
            raise InvalidAxis(f"axis {axis!r} does not name a config entry")
        node = node[k]
    leaf = keys[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise InvalidAxis(f"axis {axis!r} does not name a config entry")
    old = node[leaf]
    if isinstance(old, bool) or not isinstance(old, (int, float)):
        raise InvalidAxis(f"axis {axis!r} is not numeric")
    node[leaf] = int(value) if isinstance(old, int) and float(value).is_integer() else float(value)
    return out


def _sweep_row(args):
    k, cfg, out_dir = args
    row_dir = os.path.join(out_dir, f"row_{k:04d}")
    try:
        summary = COMMANDS[cfg["command"]](complete_config(cfg), row_dir)
        return "ok", summary, ""
    except (NoConvergence, SingularJacobian) as exc:
        return "no_convergence", {}, str(exc)
    except (FluidsError, jsonschema.ValidationError, ValueError, KeyError) as exc:
        return "invalid", {}, _message(exc)


def run_sweep(cfg, out_dir):
    base = complete_config(cfg["base"])
    if base["command"] == "sweep":
        raise M.InvalidParameters("sweeps cannot be nested")
    axis = cfg["axis"]
    # validate the axis even when there are no values
    _set_path(base, axis, 0.0)
    jobs_args = [(k, _set_path(base, axis, v), out_dir) for k, v in enumerate(cfg["values"])]
    if cfg["jobs"] > 1 and len(jobs_args) > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            results = list(pool.map(_sweep_row, jobs_args))
    else:
        results = [_sweep_row(a) for a in jobs_args]
    keys = sorted({k for _, summary, _ in results for k in summary})
    rows = []
    for (k, _, _), v, (status, summary, msg) in zip(jobs_args, cfg["values"], results):
        row = [str(k), fmt(v), status]
        for key in keys:
            val = summary.get(key, "")
            if isinstance(val, bool):
                val = str(val).lower()
            elif isinstance(val, float):
                val = fmt(val)
            row.append(str(val))
        row.append(msg.replace(",", ";").replace("\n", " "))
        rows.append(row)
    write_csv(_resolve(out_dir, cfg["out"]), ["index", "value", "status", *keys, "message"], rows)
    return {"rows": len(rows), "failed": sum(1 for r in results if r[0] != "ok")}


COMMANDS["sweep"] = run_sweep


# ---------------------------------------------------------------------------
# argument parsing


_FLAG_MAP = {
    "seed": "seed", "pairs": "pairs", "axiom": "axiom", "n": "n", "dt": "dt", "T": "T",
    "eps_final": "eps_final", "tol": "tol", "out": "out", "profile_out": "profile_out",
    "report_out": "report_out", "ledger_out": "ledger_out", "jobs": "jobs",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="activated-fluids",
                                     description="Constitutive graphs and channel flows of activated fluids.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in DEFAULTS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out-dir", default=".", help="directory for relative output paths")
        p.add_argument("--print-config", action="store_true",
                       help="print the fully defaulted config and exit")
        if name in ("flowcurve", "graphcheck"):
            p.add_argument("--model", help="model JSON file (overrides the config's model)")
        if name == "graphcheck":
            p.add_argument("--axiom")
            p.add_argument("--pairs", type=int)
            p.add_argument("--seed", type=int)
        if name.startswith("channel"):
            p.add_argument("--n", type=int)
            p.add_argument("--eps-final", type=float)
            p.add_argument("--tol", type=float)
        if name == "channel-unsteady":
            p.add_argument("--dt", type=float)
            p.add_argument("--T", type=float)
            p.add_argument("--ledger-out")
        if name == "poiseuille":
            p.add_argument("--report-out")
        if name in ("shear", "poiseuille", "channel-steady", "channel-unsteady"):
            p.add_argument("--profile-out")
        if name == "sweep":
            p.add_argument("--jobs", type=int)
        p.add_argument("--out")
    return parser


def _message(exc: BaseException) -> str:
    if isinstance(exc, jsonschema.ValidationError):
        where = "/".join(str(p) for p in exc.absolute_path)
        return f"{where}: {exc.message}" if where else exc.message
    return str(exc)


def _diagnostic(kind: str, exc: BaseException) -> None:
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__,
                                 "message": _message(exc)}, sort_keys=True) + "\n")


def _load_json(path: str) -> Any:
    with open(path) as fh:
        return json.load(fh)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg: dict[str, Any] = _load_json(args.config) if args.config else {}
        if not isinstance(cfg, dict):
            raise M.InvalidParameters("config must be a JSON object")
        cfg["command"] = args.command
        if getattr(args, "model", None):
            cfg["model"] = _load_json(args.model)
        for attr, key in _FLAG_MAP.items():
            value = getattr(args, attr, None)
            if value is not None and key in DEFAULTS[args.command]:
                cfg[key] = value
        full = complete_config(cfg)
        if args.print_config:
            sys.stdout.write(dumps(full))
            return EXIT_OK
        summary = COMMANDS[args.command](full, args.out_dir)
    except (NoConvergence, SingularJacobian) as exc:
        _diagnostic("no_convergence", exc)
        return EXIT_SOLVER
    except (FluidsError, jsonschema.ValidationError, ValueError, KeyError, OSError) as exc:
        _diagnostic("invalid_input", exc)
        return EXIT_INVALID
    sys.stdout.write(dumps(summary))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

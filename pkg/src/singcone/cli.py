"""Command-line front end.

Every command writes its outputs plus a ``run.json`` holding the fully
resolved configuration into ``--out``. Feeding that file back through
``--config`` repeats the run. Exit codes: 0 success, 1 bad arguments or
unreadable inputs, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from .bounds_barriers import (
    lower_bound,
    subsolution_alpha,
    upper_bound,
    verify_subsolution,
    verify_supersolution,
)
from .cone_exponents import (
    ConeSpec,
    ShootingConfig,
    ShootingError,
    alpha_minus_via_inversion,
    exponent_json,
    reconstruct,
    shoot,
)
from .fd_viscosity import (
    SolverConfig,
    StencilSet,
    build_grid,
    experiment_hopf,
    experiment_singularity,
    solve_dirichlet,
)
from .operators import VARIANTS, EllipticityParams, OperatorSpec, spec_from_json

DEFAULT_SEED = 20240601
COMMANDS = ("exponents", "profile", "bounds", "verify-barrier", "solve", "ratios", "experiment")


class UsageError(Exception):
    """Bad arguments or inputs (exit code 1)."""


class NumericalFailure(Exception):
    """A computation did not succeed (exit code 2)."""

    def __init__(self, message, payload=None):
        super().__init__(message)
        self.payload = payload


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# output


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    s = f"{x:.17g}"
    # keep floats recognisable as floats
    return s if any(c in s for c in ".en") else s + ".0"


def dumps(obj, indent=0):
    """JSON with every float at 17 significant digits and sorted keys."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps(v, indent + 1)}"
                 for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(dumps(v) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent + 1) for v in seq) + "\n" + end + "]"
    if isinstance(obj, (bool, int, float, np.bool_, np.integer, np.floating)):
        return _fmt(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(dumps(obj) + "\n")


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _flat(obj, prefix=""):
    out = {}
    for k, v in sorted(obj.items()):
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flat(v, key + "."))
        elif isinstance(v, (list, tuple)):
            continue
        else:
            out[key] = v
    return out


def _emit(cfg, stem, obj):
    """Write a scalar report as JSON or as a one-row CSV."""
    if cfg["format"] == "csv":
        flat = _flat(obj)
        path = os.path.join(cfg["out"], stem + ".csv")
        _write_csv(path, list(flat), [list(flat.values())])
    else:
        path = os.path.join(cfg["out"], stem + ".json")
        _write_json(path, obj)
    return path


# ---------------------------------------------------------------------------
# parsing


def _common(p):
    p.add_argument("--op", choices=VARIANTS, default=None, help="operator variant")
    p.add_argument("--op-json", default=None,
                   help="operator as a JSON object or a path to one (overrides --op)")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--Lambda", dest="Lam", type=float, default=None)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--theta0", type=float, default=None, help="half-aperture in radians")
    p.add_argument("--degrees", action="store_true", help="read --theta0 in degrees")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--format", choices=("json", "csv"), default=None)


def _grid_args(p):
    p.add_argument("--Nr", type=int, default=None)
    p.add_argument("--Ntheta", type=int, default=None)
    p.add_argument("--r0", type=float, default=None)
    p.add_argument("--r1", type=float, default=None)
    p.add_argument("--directions", type=int, default=None, help="stencil directions K")
    p.add_argument("--step-factor", dest="step_factor", type=float, default=None)
    p.add_argument("--method", choices=("newton", "explicit"), default=None)


DEFAULTS = {
    "op": "laplacian", "op_json": None, "lam": 1.0, "Lam": 1.0, "mu": 0.0, "dim": 2,
    "theta0": math.pi / 4, "degrees": False, "tol": None, "out": ".", "seed": DEFAULT_SEED,
    "format": "json",
    # exponents / profile
    "sweep": None, "branch": "plus",
    # verify-barrier
    "which": "super", "samples": 10_000, "alpha": None, "sigma": None, "kappa": None,
    "collar": 1e-3,
    # grids
    "Nr": None, "Ntheta": None, "r0": None, "r1": None, "directions": 16, "step_factor": 1.0,
    "method": "newton",
    # solve / experiments
    "boundary": None, "mode": "singular", "kind": "singular", "outer": None,
    "radii": None,
}

COMMAND_KEYS = {
    "exponents": ("sweep",),
    "profile": ("branch",),
    "bounds": (),
    "verify-barrier": ("which", "samples", "alpha", "sigma", "kappa", "collar"),
    "solve": ("Nr", "Ntheta", "r0", "r1", "directions", "step_factor", "method", "boundary"),
    "ratios": ("Nr", "Ntheta", "r0", "directions", "step_factor", "method", "mode", "outer",
               "radii"),
    "experiment": ("Nr", "Ntheta", "r0", "directions", "step_factor", "method", "kind",
                   "outer", "radii"),
}
COMMON_KEYS = ("op", "op_json", "lam", "Lam", "mu", "dim", "theta0", "tol", "out", "seed",
               "format")


def build_parser():
    top = _Parser(prog="singcone", description=__doc__.splitlines()[0])
    top.add_argument("--config", default=None, help="replay a run.json")
    sub = top.add_subparsers(dest="command")
    p = sub.add_parser("exponents", help="alpha+ and alpha- with bounds")
    _common(p)
    p.add_argument("--sweep", type=float, nargs="+", default=None,
                   help="half-apertures for a sweep CSV")
    p = sub.add_parser("profile", help="angular profile as CSV")
    _common(p)
    p.add_argument("--branch", choices=("plus", "minus"), default=None)
    p = sub.add_parser("bounds", help="closed-form exponent bounds")
    _common(p)
    p = sub.add_parser("verify-barrier", help="sample a barrier's residual")
    _common(p)
    p.add_argument("--which", choices=("super", "sub"), default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--kappa", type=float, default=None)
    p.add_argument("--collar", type=float, default=None)
    p = sub.add_parser("solve", help="finite-difference Dirichlet solve")
    _common(p)
    _grid_args(p)
    p.add_argument("--boundary", default=None,
                   help="CSV file with a value column, psi-plus, psi-minus or const:V")
    p = sub.add_parser("ratios", help="u/Psi ratio traces")
    _common(p)
    _grid_args(p)
    p.add_argument("--mode", choices=("singular", "bounded"), default=None)
    p.add_argument("--outer", choices=("zero", "psi"), default=None)
    p.add_argument("--radii", type=float, nargs="+", default=None)
    p = sub.add_parser("experiment", help="uniqueness or Hopf experiment")
    _common(p)
    _grid_args(p)
    p.add_argument("--kind", choices=("singular", "bounded", "hopf"), default=None)
    p.add_argument("--outer", choices=("zero", "psi"), default=None)
    p.add_argument("--radii", type=float, nargs="+", default=None)
    return top


def resolve(argv):
    """Parse ``argv`` into a resolved configuration dictionary."""
    parser = build_parser()
    ns = parser.parse_args(argv)
    base = {}
    if ns.config is not None:
        try:
            with open(ns.config) as fh:
                base = json.load(fh)
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {ns.config}: {exc}") from exc
        if not isinstance(base, dict):
            raise UsageError("config must be a JSON object")
    command = ns.command or base.get("command")
    if command not in COMMANDS:
        raise UsageError("a command is required")
    if base.get("command", command) != command:
        raise UsageError(f"config is for {base['command']!r}, not {command!r}")
    keys = COMMON_KEYS + COMMAND_KEYS[command]
    unknown = set(base) - set(keys) - {"command"}
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    cfg = {"command": command}
    for k in keys:
        v = getattr(ns, k, None)
        if v is None:
            v = base.get(k, DEFAULTS[k])
        cfg[k] = v
    # resolve the angle once, so run.json is always in radians
    if getattr(ns, "degrees", False):
        if ns.theta0 is None:
            raise UsageError("--degrees needs --theta0")
        cfg["theta0"] = math.radians(ns.theta0)
        if cfg.get("sweep") is not None and ns.sweep is not None:
            cfg["sweep"] = [math.radians(t) for t in ns.sweep]
    if cfg["op_json"] is not None and os.path.isfile(cfg["op_json"]):
        with open(cfg["op_json"]) as fh:
            cfg["op_json"] = fh.read()
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg["dim"] < 2:
        raise UsageError("--dim must be at least 2")
    if not 0.0 < cfg["theta0"] < math.pi:
        raise UsageError("--theta0 must lie in (0, pi)")
    if cfg["tol"] is not None and not cfg["tol"] > 0:
        raise UsageError("--tol must be positive")
    if cfg["command"] in ("solve", "ratios", "experiment") and cfg["dim"] != 2:
        raise UsageError("the finite-difference solver is planar (--dim 2)")
    if cfg["command"] == "verify-barrier" and cfg["samples"] < 1:
        raise UsageError("--samples must be positive")


def make_operator(cfg):
    try:
        if cfg["op_json"] is not None:
            return spec_from_json(json.loads(cfg["op_json"]))
        if cfg["op"] == "laplacian":
            return OperatorSpec.laplacian()
        if cfg["op"] == "isaacs":
            raise UsageError("isaacs operators need --op-json")
        return OperatorSpec(cfg["op"], EllipticityParams(cfg["lam"], cfg["Lam"], cfg["mu"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad operator: {exc}") from exc


def _cone(cfg, theta0=None):
    return ConeSpec(cfg["dim"], cfg["theta0"] if theta0 is None else theta0)


def _shooting(cfg):
    return ShootingConfig() if cfg["tol"] is None else ShootingConfig(tol_alpha=cfg["tol"])


def _solver(cfg):
    tol = 1e-8 if cfg["tol"] is None else cfg["tol"]
    return SolverConfig(tol=tol, method=cfg["method"])


def _stencil(cfg):
    return StencilSet(K=cfg["directions"], step_factor=cfg["step_factor"])


# ---------------------------------------------------------------------------
# commands


def _bounds_json(spec, cone):
    return upper_bound(spec.ellipticity(cone.dim), cone).to_json()


def cmd_exponents(cfg):
    spec = make_operator(cfg)
    cone = _cone(cfg)
    sc = _shooting(cfg)
    ap, prof_p = shoot(spec, cone, "plus", sc)
    am, prof_m = shoot(spec, cone, "minus", sc)
    res = {
        "alpha_plus": ap,
        "alpha_minus": am,
        "alpha_minus_via_inversion": alpha_minus_via_inversion(spec, cone, sc),
        "plus": exponent_json(ap, prof_p),
        "minus": exponent_json(am, prof_m),
        "bounds": _bounds_json(spec, cone),
    }
    files = [_emit(cfg, "exponents", res)]
    if cfg["sweep"]:
        rows = []
        for t0 in cfg["sweep"]:
            if not 0.0 < t0 < math.pi:
                raise UsageError("sweep half-apertures must lie in (0, pi)")
            c = _cone(cfg, t0)
            a1, _ = shoot(spec, c, "plus", sc)
            a2, _ = shoot(spec, c, "minus", sc)
            b = _bounds_json(spec, c)
            rows.append((t0, a1, a2, b["alpha_lb"], b["alpha_ub"]))
        path = os.path.join(cfg["out"], "exponents_sweep.csv")
        _write_csv(path, ["theta0", "alpha_plus", "alpha_minus", "alpha_lb", "alpha_ub"], rows)
        files.append(path)
    return res, files


def cmd_profile(cfg):
    spec = make_operator(cfg)
    cone = _cone(cfg)
    alpha, prof = shoot(spec, cone, cfg["branch"], _shooting(cfg))
    path = os.path.join(cfg["out"], "profile.csv")
    prof.to_csv(path)
    res = exponent_json(alpha, prof)
    return res, [path, _emit(cfg, "exponent", res)]


def cmd_bounds(cfg):
    spec = make_operator(cfg)
    res = _bounds_json(spec, _cone(cfg))
    return res, [_emit(cfg, "bounds", res)]


def cmd_verify_barrier(cfg):
    spec = make_operator(cfg)
    cone = _cone(cfg)
    params = spec.ellipticity(cone.dim)
    n = cfg["samples"]
    if cfg["which"] == "super":
        lb = lower_bound(params, cone)
        alpha = lb.alpha_lb if cfg["alpha"] is None else cfg["alpha"]
        kappa = lb.kappa if cfg["kappa"] is None else cfg["kappa"]
        val, wit = verify_supersolution(params, alpha, kappa, cone, n, cfg["seed"])
        res = {"min_residual": val, "witness": wit.tolist(), "num_samples": n,
               "alpha": alpha, "kappa": kappa, "scale": math.exp(-kappa),
               "passed": bool(val >= -1e-12)}
    else:
        sigma = cfg["sigma"]
        if sigma is None:
            if cone.theta0 >= math.pi / 2:
                raise UsageError("no inscribed cap for theta0 >= pi/2; pass --sigma")
            sigma = upper_bound(params, cone).sigma_ub
        if not 0.0 < sigma < 1.0:
            raise UsageError("--sigma must lie in (0, 1)")
        alpha = subsolution_alpha(params, cone.dim, sigma) if cfg["alpha"] is None \
            else cfg["alpha"]
        val, wit = verify_subsolution(params, alpha, sigma, cone, n, cfg["seed"],
                                      collar=cfg["collar"])
        res = {"max_residual": val, "witness": wit.tolist(), "num_samples": n,
               "alpha": alpha, "sigma": sigma, "passed": bool(val < 0)}
    files = [_emit(cfg, "verify_barrier", res)]
    if not res["passed"]:
        raise NumericalFailure("barrier inequality violated", (res, files))
    return res, files


def _grid(cfg, r0=1.0, r1=4.0, Nr=64, Nt=64):
    return build_grid(cfg["r0"] or r0, cfg["r1"] or r1, cfg["Nr"] or Nr, cfg["Ntheta"] or Nt,
                      cfg["theta0"])


def _boundary_data(cfg, spec, grid):
    src = cfg["boundary"]
    if src is None:
        raise UsageError("solve needs --boundary")
    if src in ("psi-plus", "psi-minus"):
        branch = src.split("-")[1]
        _, prof = shoot(spec, _cone(cfg), branch, _shooting(cfg))
        return lambda pts: reconstruct(prof, pts)
    if src.startswith("const:"):
        try:
            return float(src[6:])
        except ValueError as exc:
            raise UsageError(f"bad constant boundary value {src!r}") from exc
    if not os.path.isfile(src):
        raise UsageError(f"boundary file not found: {src}")
    try:
        with open(src, newline="") as fh:
            vals = [float(row["value"]) for row in csv.DictReader(fh)]
    except (OSError, KeyError, ValueError) as exc:
        raise UsageError(f"cannot read boundary file {src}: {exc}") from exc
    if len(vals) not in (grid.N, grid.boundary.size):
        raise UsageError(f"boundary file has {len(vals)} values; expected {grid.N} "
                         f"or {grid.boundary.size}")
    return np.array(vals)


def cmd_solve(cfg):
    spec = make_operator(cfg)
    grid = _grid(cfg)
    data = _boundary_data(cfg, spec, grid)
    try:
        u = solve_dirichlet(spec, grid, data, _solver(cfg), _stencil(cfg))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    path = os.path.join(cfg["out"], "field.csv")
    u.to_csv(path)
    res = dict(u.report)
    res["grid"] = grid.to_json()
    files = [path, _emit(cfg, "solve_report", res)]
    if not res["converged"]:
        raise NumericalFailure("solver did not converge", (res, files))
    return res, files


def _experiment_kwargs(cfg):
    kw = {"config": _solver(cfg), "stencil": _stencil(cfg), "shooting": _shooting(cfg)}
    for k in ("Nr", "Ntheta", "r0"):
        if cfg[k] is not None:
            kw[k] = cfg[k]
    return kw


def _run_singularity(cfg, mode):
    spec = make_operator(cfg)
    kw = _experiment_kwargs(cfg)
    return experiment_singularity(spec, _cone(cfg), mode=mode, r_list=cfg["radii"],
                                  outer=cfg["outer"], **kw)


def cmd_ratios(cfg):
    exp = _run_singularity(cfg, cfg["mode"])
    path = os.path.join(cfg["out"], "ratios.csv")
    exp.to_csv(path)
    res = exp.to_json()
    files = [path, _emit(cfg, "ratios", res)]
    if not exp.field.report["converged"]:
        raise NumericalFailure("solver did not converge", (res, files))
    return res, files


def cmd_experiment(cfg):
    if cfg["kind"] == "hopf":
        spec = make_operator(cfg)
        kw = _experiment_kwargs(cfg)
        exp = experiment_hopf(spec, _cone(cfg), t_list=cfg["radii"], **kw)
        res = exp.to_json()
        path = os.path.join(cfg["out"], "hopf.csv")
        _write_csv(path, ["t", "value"], zip(exp.t, exp.values))
        files = [path]
    else:
        exp = _run_singularity(cfg, cfg["kind"])
        res = exp.to_json()
        path = os.path.join(cfg["out"], "ratios.csv")
        exp.to_csv(path)
        files = [path]
    fpath = os.path.join(cfg["out"], "field.csv")
    exp.field.to_csv(fpath)
    files += [fpath, _emit(cfg, "experiment", res)]
    if not exp.field.report["converged"]:
        raise NumericalFailure("solver did not converge", (res, files))
    return res, files


HANDLERS = {
    "exponents": cmd_exponents,
    "profile": cmd_profile,
    "bounds": cmd_bounds,
    "verify-barrier": cmd_verify_barrier,
    "solve": cmd_solve,
    "ratios": cmd_ratios,
    "experiment": cmd_experiment,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = resolve(argv)
        os.makedirs(cfg["out"], exist_ok=True)
        _write_json(os.path.join(cfg["out"], "run.json"), cfg)
        res, _ = HANDLERS[cfg["command"]](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ShootingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        out = locals().get("cfg", {}).get("out", ".")
        _write_json(os.path.join(out, "shooting_failure.json"),
                    {"message": str(exc), "table": [list(t) for t in exc.table]})
        return 2
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.payload is not None:
            print(dumps(exc.payload[0]))
        return 2
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ValueError, TypeError) as exc:
        # raised by argument validation inside the library
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(dumps(res))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

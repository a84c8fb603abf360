"""Command-line front end: ``fluid-exit <command> --model FILE [options]``.

Exit codes: 0 ok, 1 I/O error, 2 invalid model, 3 bad parameter or failed
precondition, 4 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import exit_ops, mc_engine
from .errors import FluidExitError, ModelError
from .model import ValidatedModel, load_model
from .payoff import ExpDecayFunction
from .wh_factor import DEFAULT_TOL, WienerHopfFactors, residual, tilt_factorize

EXIT_OK, EXIT_IO, EXIT_MODEL, EXIT_PARAM, EXIT_VERIFY = 0, 1, 2, 3, 4


class ParameterError(FluidExitError, ValueError):
    pass


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float written to 17 significant digits."""
    pad, inner = " " * (indent * _level), " " * (indent * (_level + 1))
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x) or math.isinf(x):
            return json.dumps(str(x))
        text = format(x, ".17g")
        return text if any(ch in text for ch in ".en") else text + ".0"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (list, tuple, dict, np.ndarray)) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(inner + dumps(v, indent, _level + 1) for v in obj) + "\n" + pad + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _load_payload(text: str):
    if text.startswith("@"):
        text = Path(text[1:]).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"invalid JSON payload: {exc}") from exc


def _vector(model: ValidatedModel, text, indices, name: str, default: float = 1.0) -> np.ndarray:
    """Parse a payoff over ``indices`` given as a JSON list or a label -> value object."""
    if text is None:
        return np.full(len(indices), default)
    data = _load_payload(text)
    if isinstance(data, dict):
        labels = [model.states[k] for k in indices]
        unknown = set(data) - set(labels)
        if unknown:
            raise ParameterError(f"{name}: unknown or off-side states {sorted(unknown)}")
        return np.array([float(data.get(lab, 0.0)) for lab in labels])
    arr = np.asarray(data, dtype=float).reshape(-1)
    if arr.size != len(indices):
        raise ParameterError(f"{name} needs {len(indices)} entries, got {arr.size}")
    return arr


def _state(model: ValidatedModel, label):
    if label is None:
        return None
    if label in model.states:
        return model.states.index(label)
    try:
        return model.index(int(label))
    except (ValueError, KeyError):
        raise ParameterError(f"unknown state {label!r}") from None


def _decay(args, model: ValidatedModel) -> float:
    if args.decay is not None:
        if args.decay < 0:
            raise ParameterError("--decay must be nonnegative")
        return args.decay
    if model.killing_floor > 0:
        return 0.0
    raise ParameterError("--decay is required for models without a positive killing floor")


def _require_homogeneous(model: ValidatedModel) -> None:
    if not model.is_homogeneous:
        raise ModelError("analytic path requires constant schedule")


def cmd_validate(args, model, out):
    out.write(dumps({"valid": True, **model.summary()}) + "\n")
    return EXIT_OK


def cmd_factorize(args, model, out):
    _require_homogeneous(model)
    c = args.decay or 0.0
    F = tilt_factorize(model.generator(), model.velocities, c, tol=args.tol, method=args.solver)
    payload = F.to_dict()
    payload["plusStates"] = [model.states[k] for k in F.plus_index]
    payload["minusStates"] = [model.states[k] for k in F.minus_index]
    out.write(dumps(payload) + "\n")
    return EXIT_OK


def _levels(args):
    lminus = math.inf if args.lminus is None else args.lminus
    lplus = math.inf if args.lplus is None else args.lplus
    if lminus < 0 or lplus < 0:
        raise ParameterError("levels must be nonnegative")
    return lminus, lplus


def cmd_exit(args, model, out):
    _require_homogeneous(model)
    if args.lminus is None or args.lplus is None:
        raise ParameterError("exit needs --lminus and --lplus")
    c = _decay(args, model)
    gp = ExpDecayFunction(c, _vector(model, args.fplus, model.plus_states, "fplus"), "+")
    gm = ExpDecayFunction(c, _vector(model, args.fminus, model.minus_states, "fminus"), "-")
    res = exit_ops.two_sided(model, gp, gm, args.lminus, args.lplus, s=args.time,
                             method=args.method, tol=args.tol)
    payload = res.to_dict(model.states)
    i = _state(model, args.state)
    if i is not None:
        payload.update(
            state=model.states[i], xiPlus=res.xi_plus[i], xiMinus=res.xi_minus[i], joint=res.joint[i]
        )
    out.write(dumps(payload) + "\n")
    return EXIT_OK


def _query(args, model):
    lminus, lplus = _levels(args)
    kind = args.query
    if kind == "pre-exit":
        if args.horizon is None:
            raise ParameterError("pre-exit query needs --horizon (the time T)")
        h = _vector(model, args.h, range(model.m), "h")
        return mc_engine.PreExitLaw(tuple(h), args.horizon, lminus, lplus), None
    c = _decay(args, model)
    gp = ExpDecayFunction(c, _vector(model, args.fplus, model.plus_states, "fplus"), "+")
    gm = ExpDecayFunction(c, _vector(model, args.fminus, model.minus_states, "fminus"), "-")
    if kind == "up":
        if args.lplus is None:
            raise ParameterError("up query needs --lplus")
        q = mc_engine.OneSided("+", lplus, gp)
    elif kind == "down":
        if args.lminus is None:
            raise ParameterError("down query needs --lminus")
        q = mc_engine.OneSided("-", lminus, gm)
    elif kind == "xi-plus":
        q = mc_engine.TwoSidedXi("+", lminus, lplus, gp)
    elif kind == "xi-minus":
        q = mc_engine.TwoSidedXi("-", lminus, lplus, gm)
    else:
        q = mc_engine.JointExit(lminus, lplus, gp, gm)
    return q, args.horizon


def _check_budget(n, name="-N"):
    if n is None or n < 2:
        raise ParameterError(f"{name} must be at least 2")


def cmd_simulate(args, model, out):
    _check_budget(args.N)
    i = _state(model, args.state)
    if i is None:
        raise ParameterError("simulate needs --state")
    q, horizon = _query(args, model)
    est, batch = mc_engine.simulate(model, q, args.time, i, args.N, args.seed, horizon=horizon)
    if args.format == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pathIndex", "outcomeKind", "exitTime", "exitState", "payoff"])
        for p in range(est.n):
            outcome = mc_engine.paths.KIND_TO_OUTCOME[int(batch.kind[p])].value
            state = model.states[batch.state[p]] if batch.state[p] >= 0 else ""
            t = "" if outcome == "Neither" else dumps(float(batch.time[p]))
            w.writerow([p, outcome, t, state, dumps(float(batch.payoff[p]))])
        out.write(buf.getvalue())
    else:
        payload = {"query": args.query, "state": model.states[i], "time": args.time, **est.to_dict()}
        out.write(dumps(payload) + "\n")
    return EXIT_OK


def cmd_pre_exit(args, model, out):
    if args.horizon is None:
        raise ParameterError("pre-exit needs --horizon (the time T)")
    _check_budget(args.N)
    i = _state(model, args.state)
    if i is None:
        raise ParameterError("pre-exit needs --state")
    lminus, lplus = _levels(args)
    h = _vector(model, args.h, range(model.m), "h")
    res = exit_ops.pre_exit_law(model, h, args.horizon, lminus, lplus, args.time, i, args.N, args.seed)
    payload = {"state": model.states[i], "time": args.time, "T": args.horizon, **res.to_dict()}
    out.write(dumps(payload) + "\n")
    return EXIT_OK


def _verify_checks(args, model):
    """Yield ``(name, value, threshold, passed)`` rows of the verification battery."""
    c = _decay(args, model)
    lminus = 0.5 if args.lminus is None else args.lminus
    lplus = 0.5 if args.lplus is None else args.lplus
    n, n_inner, seed = args.N, args.inner, args.seed
    _check_budget(n)
    start = model.plus_states[0] if args.state is None else _state(model, args.state)

    if model.is_homogeneous:
        L = model.generator()
        F = tilt_factorize(L, model.velocities, c, tol=args.tol)
        if args.corrupt_factors:
            F = WienerHopfFactors(**{**F.__dict__, "Jplus": F.Jplus + 0.1})
        r = residual(F, L, model.velocities)
        yield "factorization residual", r, args.tol, r <= args.tol

        d = exit_ops.decomposition_residual(model, c, lminus, lplus, tol=args.tol)
        yield "decomposition identity (matrix)", d, 1e-8, d <= 1e-8

        ones_p = ExpDecayFunction(c, np.ones(len(model.plus_states)), "+")
        ones_m = ExpDecayFunction(c, np.ones(len(model.minus_states)), "-")
        res_r = exit_ops.two_sided(model, ones_p, ones_m, lminus, lplus, method="resolvent")
        res_n = exit_ops.two_sided(model, ones_p, ones_m, lminus, lplus, method="neumann")
        gap = float(np.abs(res_r.joint - res_n.joint).max())
        yield "neumann vs resolvent", gap, res_n.truncation_bound, gap <= res_n.truncation_bound + 1e-15
        est = mc_engine.estimate(model, mc_engine.JointExit(lminus, lplus, ones_p, ones_m),
                                 0.0, start, n, seed)
        z = mc_engine.z_score(est.mean, est.stderr, float(res_r.joint[start]), 0.0)
        yield "joint exit MC vs analytic |z|", abs(z), 3.0, abs(z) <= 3.0

    # long enough for a down-then-up round trip to be possible
    T = 1.0 + 2.0 * (lminus + lplus) / model.max_speed
    cb = mc_engine.composite_indicator_bound(model, T, lminus, lplus, 0.0, start,
                                             n, n_inner, seed)
    yield ("round-trip indicator bound", cb.estimate.mean,
           cb.bound + 3.0 * cb.estimate.stderr, cb.holds)

    rep = mc_engine.verify_decomposition(model, c, lminus, lplus, 0.0, start, n, n_inner, seed)
    yield "decomposition identity (MC) |z|", abs(rep.z), 3.0, abs(rep.z) <= 3.0


def cmd_verify(args, model, out):
    rows = list(_verify_checks(args, model))
    if args.format is not None:
        payload = {
            "checks": [
                {"name": n, "value": v, "threshold": t, "passed": bool(p)} for n, v, t, p in rows
            ],
            "passed": all(p for *_, p in rows),
        }
        out.write(dumps(payload) + "\n")
    else:
        width = max(len(r[0]) for r in rows)
        for name, value, thr, ok in rows:
            out.write(f"{name:<{width}}  {value:>12.5g}  <= {thr:<10.3g} {'PASS' if ok else 'FAIL'}\n")
    return EXIT_OK if all(p for *_, p in rows) else EXIT_VERIFY


COMMANDS = {
    "validate": cmd_validate,
    "factorize": cmd_factorize,
    "exit": cmd_exit,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "pre-exit": cmd_pre_exit,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fluid-exit", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=list(COMMANDS))
    p.add_argument("--model", required=True, help="JSON model file")
    p.add_argument("--lplus", type=float)
    p.add_argument("--lminus", type=float)
    p.add_argument("--decay", type=float, help="exponential decay rate c of the payoff")
    p.add_argument("--fplus", help="payoff on E+: JSON list, label->value object, or @file")
    p.add_argument("--fminus", help="payoff on E-: JSON list, label->value object, or @file")
    p.add_argument("--h", help="function on E for pre-exit queries (JSON or @file)")
    p.add_argument("--time", type=float, default=0.0, help="start time s")
    p.add_argument("--state", help="start state label")
    p.add_argument("--horizon", type=float, help="simulation horizon; the time T for pre-exit")
    p.add_argument("-N", type=int, default=20_000, help="Monte Carlo paths")
    p.add_argument("--inner", type=int, default=200, help="inner paths for nested estimates")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    p.add_argument("--method", choices=exit_ops.METHODS, default="resolvent")
    p.add_argument("--solver", choices=("newton", "fixed_point"), default="newton")
    p.add_argument("--query", choices=("up", "down", "xi-plus", "xi-minus", "joint", "pre-exit"),
                   default="joint")
    p.add_argument("--format", choices=("json", "csv"),
                   help="output format; default JSON (verify: a plain table)")
    p.add_argument("--corrupt-factors", action="store_true", help=argparse.SUPPRESS)
    return p


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)

    def fail(code, exc):
        out.write(dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return code

    try:
        model = load_model(args.model)
    except ModelError as exc:
        return fail(EXIT_MODEL, exc)
    except OSError as exc:
        return fail(EXIT_IO, exc)
    try:
        return COMMANDS[args.command](args, model, out)
    except ModelError as exc:
        return fail(EXIT_MODEL, exc)
    except OSError as exc:
        return fail(EXIT_IO, exc)
    except (FluidExitError, ValueError, KeyError) as exc:
        return fail(EXIT_PARAM, exc)


if __name__ == "__main__":
    sys.exit(main())

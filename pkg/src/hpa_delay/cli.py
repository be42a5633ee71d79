"""Command-line front end: one JSON report plus CSV series per run.

Every run writes ``<command>.json`` (config echo, library version, seed,
results) and ``<command>.<channel>.csv`` files into ``--output``. Wall
time goes to a separate ``timing.json`` so the reports themselves are
byte-reproducible. Exit status: 0 ok, 2 config error, 3 guard violation,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .delay import (build_quasi_characteristic, contour_field, count_rhp_roots, f_function,
                    locate_characteristic_roots, quasi_characteristic, switch_schedule)
from .equilibria import all_equilibria, classify_case, jacobian, solve_equilibrium, with_coeffs
from .errors import (DomainError, GuardViolationError, InfeasibleHistoryError, InternalConsistencyError,
                     InvalidInputError, NonConvergenceError, UnsupportedCaseError)
from .integrate import integrate_dde, integrate_ode
from .lyapunov import lyapunov_constants, verify_decay
from .model import HistorySpec, ModelParams, State, history_from_mapping, params_from_mapping
from .periodic import build_periodic_setup, estimate_period, lag_series, verify_periodicity
from .stability import char_cubic, routh_hurwitz, verify_rh_always_stable

COMMANDS = ("equilibrium", "stability", "cases", "lyapunov", "delay-switches", "roots",
            "simulate", "simulate-dde", "periodic", "sweep")
EXIT_OK, EXIT_CONFIG, EXIT_GUARD, EXIT_NUMERIC = 0, 2, 3, 4

DEFAULTS = {
    "seed": 0,
    "t_end": 100.0,
    "dt": 1e-2,
    "steps_per_delay": 200,
    "n_max": 10,
    "region": [-2.0, 1.0, -2.0, 2.0],
    "resolution": 200,
    "grid": 40,
    "history_kind": "poly_exp",
    "lyapunov_cap": 1.0,
    "sweep": {"draws": 16, "spread": 0.1, "workers": 0},
}


class ConfigError(Exception):
    pass


@dataclasses.dataclass
class RunConfig:
    command: str
    raw: dict
    params: ModelParams | None
    history: HistorySpec | None
    options: dict
    output_dir: Path


# --------------------------------------------------------------------------
# serialization


def _fmt(v: float) -> str:
    return "%.17g" % v


def _plain(obj: Any) -> Any:
    """Recursively convert results to JSON-ready values (floats stay floats)."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _encode(obj: Any, indent: int = 0) -> str:
    """JSON with floats at 17 significant digits; non-finite floats become strings."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        if math.isnan(obj):
            return '"nan"'
        if math.isinf(obj):
            return '"inf"' if obj > 0 else '"-inf"'
        return _fmt(obj)
    if isinstance(obj, int):
        return str(obj)
    return json.dumps(obj, ensure_ascii=False)


def write_json(path: Path, doc: Any) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_encode(_plain(doc)) + "\n")


def write_csv(path: Path, header, rows, comments: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for k in sorted(comments or {}):
            v = comments[k]
            fh.write(f"# {k}={'' if v is None else (_fmt(v) if isinstance(v, float) else v)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _trajectory_rows(traj):
    return ([float(t), *map(float, y)] for t, y in zip(traj.times, traj.states))


def _write_trajectory(out: Path, name: str, traj) -> None:
    write_csv(out / f"{name}.trajectory.csv", ["t", "a", "r", "o"], _trajectory_rows(traj),
              comments=traj.flags)


def _write_lags(out: Path, name: str, traj, tau: float) -> None:
    cols, header = [], ["t"]
    for ch, label in enumerate("aro"):
        t, x, lag, dx = lag_series(traj, tau, ch)
        cols.extend([x, lag, dx])
        header.extend([label, f"{label}_lag", f"d{label}"])
    rows = (list(map(float, r)) for r in zip(t, *cols))
    write_csv(out / f"{name}.lag.csv", header, rows)


# --------------------------------------------------------------------------
# commands


def _need_params(cfg: RunConfig) -> ModelParams:
    if cfg.params is None:
        raise ConfigError(f"'{cfg.command}' needs the model parameters A, p2..p6")
    return cfg.params


def _generic_equilibrium(params: ModelParams):
    if not params.is_generic:
        raise ConfigError("parameters are not all positive; use the 'cases' command")
    return with_coeffs(params, solve_equilibrium(params))


def _initial_state(cfg: RunConfig) -> State:
    init = cfg.options.get("initial")
    if init is not None:
        return State(float(init["a"]), float(init["r"]), float(init["o"]))
    if cfg.history is not None:
        h = cfg.history
        return State(float(h(0.0)), h.r0, h.o0)
    raise ConfigError("need 'initial' {a, r, o} or a history with r0, o0")


def _point_summary(p: ModelParams, eq) -> dict:
    cubic = char_cubic(p, eq)
    verdict = routh_hurwitz(cubic)
    real = all(abs(z.imag) <= 1e-12 * (1 + abs(z)) for z in cubic.roots)
    if verdict.kind == "asymptotically_stable":
        nature = "stable_node" if real else "stable_focus"
    elif verdict.kind == "unstable":
        nature = "unstable"
    else:
        nature = "non_hyperbolic"
    return {"r_star": eq.r_star, "a_star": eq.a_star, "o_star": eq.o_star,
            "K1": eq.K1, "K2": eq.K2, "K3": eq.K3, "K4": eq.K4,
            "alpha1": cubic.alpha1, "alpha2": cubic.alpha2, "alpha3": cubic.alpha3,
            "delta": cubic.delta, "roots": list(cubic.roots), "verdict": verdict.kind,
            "rh_checks": verdict.rh_checks, "nature": nature}


def cmd_equilibrium(cfg: RunConfig, out: Path) -> dict:
    p = _need_params(cfg)
    eq = _generic_equilibrium(p)
    pts = all_equilibria(p)
    return {**_point_summary(p, eq), "fixed_point_count": len(pts),
            "fixed_points": [_point_summary(p, e) for e in pts]}


def cmd_stability(cfg: RunConfig, out: Path) -> dict:
    p = _need_params(cfg)
    eq = _generic_equilibrium(p)
    cubic = char_cubic(p, eq)
    eigs = np.linalg.eigvals(jacobian(p, eq))
    eigs = sorted((complex(z) for z in eigs), key=lambda z: (z.real, z.imag))
    return {"equilibrium": eq, "cubic": cubic, "verdict": routh_hurwitz(cubic),
            "chains": verify_rh_always_stable(p, eq), "jacobian_eigenvalues": eigs}


def cmd_cases(cfg: RunConfig, out: Path) -> dict:
    p = _need_params(cfg)
    r0 = cfg.options.get("r0")
    return {"report": classify_case(p, None if r0 is None else float(r0))}


def cmd_lyapunov(cfg: RunConfig, out: Path) -> dict:
    p = _need_params(cfg)
    eq = _generic_equilibrium(p)
    cap = float(cfg.options["lyapunov_cap"])
    report = lyapunov_constants(p, eq, cap)
    result: dict = {"equilibrium": eq, "constants": report, "cap": cap}
    if cfg.options.get("initial") is not None:
        rec = verify_decay(p, eq, _initial_state(cfg), float(cfg.options["t_end"]),
                           dt=float(cfg.options["dt"]), cap=cap)
        result["decay"] = {"converged": rec.converged, "in_basin": rec.in_basin,
                           "max_bound_excess": rec.max_bound_excess,
                           "W0": float(rec.w_series[0]), "W_end": float(rec.w_series[-1])}
        write_csv(out / "lyapunov.w.csv", ["t", "W"],
                  ([float(t), float(w)] for t, w in zip(rec.times, rec.w_series)))
    return result


def _quasi(cfg: RunConfig):
    q = cfg.options.get("quasi")
    if q is not None:
        return quasi_characteristic(float(q["p3"]), float(q["p6"]), float(q["K2"]), float(q["K3"]))
    p = _need_params(cfg)
    return build_quasi_characteristic(p, _generic_equilibrium(p))


def cmd_delay_switches(cfg: RunConfig, out: Path) -> dict:
    qc = _quasi(cfg)
    sched = switch_schedule(qc, int(cfg.options["n_max"]))
    ys = np.linspace(0.0, max(1.0, 1.5 * max((x for x, _ in sched.positive_roots_x), default=0.0)), 401)
    write_csv(out / "delay-switches.f.csv", ["y", "F"],
              ([float(y), float(f)] for y, f in zip(ys, f_function(qc, ys))))
    write_csv(out / "delay-switches.events.csv", ["tau", "frequency_index", "rhp_count"],
              ([float(t), int(j), int(c)] for t, j, c in sched.events))
    return {"p_coeffs": qc.p_coeffs, "q_coeffs": qc.q_coeffs, "p0_plus_q0": qc.p0_plus_q0,
            "tau0_roots": list(np.roots(qc.tau_zero_coeffs())), "schedule": sched}


def cmd_roots(cfg: RunConfig, out: Path) -> dict:
    qc = _quasi(cfg)
    tau = float(cfg.options.get("tau", 0.0))
    region = [float(v) for v in cfg.options["region"]]
    roots = locate_characteristic_roots(qc, tau, region, grid=int(cfg.options["grid"]))
    xs, ys, re, im = contour_field(qc, tau, region, int(cfg.options["resolution"]))
    write_csv(out / "roots.roots.csv", ["re", "im"], ([z.real, z.imag] for z in roots))
    write_csv(out / "roots.contour.csv", ["re", "im", "re_C", "im_C"],
              ([float(xs[i]), float(ys[k]), float(re[k, i]), float(im[k, i])]
               for k in range(ys.size) for i in range(xs.size)))
    return {"tau": tau, "region": region, "roots": roots, "rhp_count": count_rhp_roots(qc, tau)}


def cmd_simulate(cfg: RunConfig, out: Path) -> dict:
    p = _need_params(cfg)
    traj = integrate_ode(p.with_(tau=0.0), _initial_state(cfg), float(cfg.options["t_end"]),
                         float(cfg.options["dt"]))
    _write_trajectory(out, "simulate", traj)
    return {"flags": traj.flags, "extras": traj.extras, "final_state": traj.states[-1]}


def _need_history(cfg: RunConfig) -> HistorySpec:
    if cfg.history is None:
        raise ConfigError("this command needs history.kind, history.params, r0 and o0")
    return cfg.history


def cmd_simulate_dde(cfg: RunConfig, out: Path) -> dict:
    p = _need_params(cfg)
    hist = _need_history(cfg)
    traj = integrate_dde(p, hist, float(cfg.options["t_end"]), int(cfg.options["steps_per_delay"]))
    _write_trajectory(out, "simulate-dde", traj)
    _write_lags(out, "simulate-dde", traj, p.tau)
    extras = {k: v for k, v in traj.extras.items() if k != "history"}
    return {"history": hist.as_dict(), "flags": traj.flags, "extras": extras,
            "final_state": traj.states[-1]}


def cmd_periodic(cfg: RunConfig, out: Path) -> dict:
    p = _need_params(cfg)
    tau = p.tau
    r0 = cfg.options.get("r0")
    r0 = 0.5 * (p.p5 / p.p6 + (p.p5 + 1.0) / p.p6) if r0 is None else float(r0)
    setup = build_periodic_setup(p, r0, cfg.options["history_kind"], cfg.options.get("o0"))
    t_end = float(cfg.options.get("t_end_periodic", 20.0 * tau))
    traj = integrate_dde(p, setup.history, t_end, int(cfg.options["steps_per_delay"]))
    t_start = float(cfg.options.get("t_start", 10.0 * tau))
    check = verify_periodicity(traj, tau, t_start)
    control = verify_periodicity(traj, 1.37 * tau, t_start) if t_start + 2.74 * tau <= traj.t_end else None
    _write_trajectory(out, "periodic", traj)
    _write_lags(out, "periodic", traj, tau)
    return {"setup": {"r0": setup.r0, "a_tau_0": setup.a_tau_0,
                      "a_tau_minus_tau": setup.a_tau_minus_tau, "history": setup.history.as_dict(),
                      "residuals": setup.residuals},
            "flags": traj.flags, "period_tau": check, "off_period_control": control,
            "estimated_period": estimate_period(traj, t_start)}


def _sweep_one(job):
    """One sweep draw; runs in a worker process and writes its own directory."""
    index, pdict, run_dir, n_max = job
    p = ModelParams(**pdict)
    rec: dict = {"index": index, "params": pdict}
    try:
        eq = with_coeffs(p, solve_equilibrium(p))
        cubic = char_cubic(p, eq)
        rec.update(r_star=eq.r_star, a_star=eq.a_star, verdict=routh_hurwitz(cubic).kind,
                   max_real_part=cubic.max_real_part)
        sched = switch_schedule(build_quasi_characteristic(p, eq), n_max)
        rec.update(switch_verdict=sched.verdict, tau_critical=sched.tau_critical,
                   first_destabilizing_tau=sched.first_destabilizing_tau)
        rec["status"] = "ok"
    except (GuardViolationError, NonConvergenceError, InternalConsistencyError, DomainError) as exc:
        rec["status"] = f"{type(exc).__name__}: {exc}"
    os.makedirs(run_dir, exist_ok=True)
    write_json(Path(run_dir) / "run.json", rec)
    return rec


def cmd_sweep(cfg: RunConfig, out: Path) -> dict:
    p = _need_params(cfg)
    sw = {**DEFAULTS["sweep"], **(cfg.options.get("sweep") or {})}
    draws, spread = int(sw["draws"]), float(sw["spread"])
    rng = np.random.default_rng(int(cfg.options["seed"]))
    base = p.as_dict()
    names = ("A", "p2", "p3", "p4", "p5", "p6")
    jobs = []
    for i in range(draws):
        f = rng.uniform(1.0 - spread, 1.0 + spread, size=len(names))
        pdict = {k: float(base[k] * fk) for k, fk in zip(names, f)}
        pdict["tau"] = float(p.tau)
        jobs.append((i, pdict, str(out / f"run_{i:04d}"), int(cfg.options["n_max"])))
    workers = int(sw["workers"]) or min(4, os.cpu_count() or 1)
    if workers > 1 and draws > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    cols = ["index", *names, "r_star", "a_star", "verdict", "switch_verdict", "tau_critical", "status"]
    write_csv(out / "sweep.summary.csv", cols,
              ([r["index"], *(r["params"][k] for k in names), r.get("r_star", math.nan),
                r.get("a_star", math.nan), r.get("verdict", ""), r.get("switch_verdict", ""),
                r.get("tau_critical") if r.get("tau_critical") is not None else math.nan, r["status"]]
               for r in results))
    counts: dict = {}
    for r in results:
        counts[r.get("verdict", "failed")] = counts.get(r.get("verdict", "failed"), 0) + 1
    return {"draws": draws, "spread": spread, "verdict_counts": dict(sorted(counts.items())),
            "runs": results}


HANDLERS = {
    "equilibrium": cmd_equilibrium, "stability": cmd_stability, "cases": cmd_cases,
    "lyapunov": cmd_lyapunov, "delay-switches": cmd_delay_switches, "roots": cmd_roots,
    "simulate": cmd_simulate, "simulate-dde": cmd_simulate_dde, "periodic": cmd_periodic,
    "sweep": cmd_sweep,
}


# --------------------------------------------------------------------------
# driver


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hpa-delay", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON config document")
        sp.add_argument("--output", required=True, help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--tau", type=float)
        sp.add_argument("--t-end", dest="t_end", type=float)
        sp.add_argument("--dt", type=float)
        sp.add_argument("--steps-per-delay", dest="steps_per_delay", type=int)
        sp.add_argument("--n-max", dest="n_max", type=int)
        sp.add_argument("--region", help="re0,re1,im0,im1")
        sp.add_argument("--resolution", type=int)
        sp.add_argument("--r0", type=float)
    return ap


def make_config(args: argparse.Namespace) -> RunConfig:
    try:
        raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    options = {k: v for k, v in DEFAULTS.items() if k != "sweep"}
    options.update({k: v for k, v in raw.items() if k not in ("A", "p2", "p3", "p4", "p5", "p6")})
    for key in ("seed", "tau", "t_end", "dt", "steps_per_delay", "n_max", "resolution", "r0"):
        val = getattr(args, key)
        if val is not None:
            options[key] = val
    if args.region is not None:
        try:
            region = [float(v) for v in args.region.split(",")]
        except ValueError as exc:
            raise ConfigError("--region must be four comma-separated numbers") from exc
        options["region"] = region
    if len(options["region"]) != 4:
        raise ConfigError("region needs four numbers re0,re1,im0,im1")
    if options["seed"] < 0:
        raise ConfigError("seed must be nonnegative")

    has_params = all(k in raw for k in ("A", "p2", "p3", "p4", "p5", "p6"))
    params = history = None
    if has_params:
        doc = dict(raw)
        if "tau" in options:
            doc["tau"] = options["tau"]
        params = params_from_mapping(doc)
        history = history_from_mapping(doc, params)
    return RunConfig(args.command, raw, params, history, options, Path(args.output))


def run(cfg: RunConfig) -> int:
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    result = HANDLERS[cfg.command](cfg, out)
    wall = time.perf_counter() - t0
    report = {"command": cfg.command, "version": __version__, "seed": int(cfg.options["seed"]),
              "config": {"input": cfg.raw, "effective": cfg.options}, "result": result}
    write_json(out / f"{cfg.command}.json", report)
    write_json(out / "timing.json", {"command": cfg.command, "wall_time_s": wall})
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = make_config(args)
        return run(cfg)
    except (ConfigError, InvalidInputError, DomainError, UnsupportedCaseError,
            InfeasibleHistoryError, KeyError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GuardViolationError as exc:
        print(f"guard violation: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (NonConvergenceError, InternalConsistencyError, FloatingPointError,
            ZeroDivisionError, OverflowError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

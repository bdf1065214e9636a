"""``tonelli-flows``: run flow / connect / mane / check / convergence scenarios.

Each run reads a TOML scenario, applies command-line overrides, executes the
experiment and writes ``summary.json`` (effective config, seed, results and
the pass/fail verdict of every asserted invariant) plus ``series.csv``.

Exit codes: 0 all invariants passed, 1 an invariant failed or the experiment
raised, 2 the configuration could not be parsed or validated.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import tomli

from . import scenarios
from .flow import BlowUp, FlowState, band_leakage, integrate, regularity_monitor, \
    self_convergence_order
from .groups import GroupError
from .lagrangian import (LegendreError, NotTonelli, check_growth, check_tonelli, eval_L,
                         energy, fiber_derivative, hamiltonian, legendre_inverse, verify_growth)
from .mane import ChainViolation, ManeOptions, estimate_all, verify_chain
from .metric import ad, ad_star
from .variational import ConnectOptions, DegenerateEndpoints, NotConverged, connect


def _float(x):
    x = float(x)
    return x if math.isfinite(x) else str(x)


def _clean(obj):
    """JSON-safe copy: numpy to builtins, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _float(obj)
    return obj


class _Invariants:
    def __init__(self):
        self.items = {}

    def upper(self, name, value, bound):
        self.items[name] = {"value": value, "bound": bound, "kind": "<=",
                            "pass": bool(np.isfinite(value) and value <= bound)}

    def lower(self, name, value, bound):
        self.items[name] = {"value": value, "bound": bound, "kind": ">=",
                            "pass": bool(np.isfinite(value) and value >= bound)}

    def flag(self, name, ok):
        self.items[name] = {"value": bool(ok), "kind": "true", "pass": bool(ok)}

    @property
    def ok(self):
        return all(v["pass"] for v in self.items.values())


# -- experiments ----------------------------------------------------------------
def _run_flow(cfg, spec, rng, inv):
    f = cfg["flow"]
    g = spec.group
    u0 = scenarios.vector_from(g, f["u0"], f["u0_modes"], "u0")
    m_hat, M_hat = check_tonelli(spec, sample_count=50, rng=rng)
    b_hat = check_growth(spec, m_hat, M_hat, sample_count=50, rng=rng)
    try:
        states, diag = integrate(spec, FlowState.initial(spec, u0), float(f["horizon"]),
                                 float(f["dt"]), growth=(m_hat, b_hat), adaptive=bool(f["adaptive"]),
                                 max_records=int(f["max_records"]))
    except BlowUp as exc:
        inv.flag("no_blowup", False)
        return {"error": str(exc)}, [["t"]]
    inv.flag("no_blowup", True)
    tol = cfg["tolerances"]
    inv.upper("energy_drift", diag.energy_drift, tol["energy_drift"])
    if g.kind == "SO3":
        inv.upper("casimir_drift", diag.casimir_drift, tol["casimir_drift"])
    mom = max(float(np.max(np.abs(s.m - fiber_derivative(spec, s.u)))) for s in states)
    inv.upper("momentum_consistency", mom, tol["momentum"])
    inv.upper("max_speed", diag.max_speed, diag.speed_bound)
    results = {"energy_drift": diag.energy_drift, "casimir_drift": diag.casimir_drift,
               "max_speed": diag.max_speed, "speed_bound": diag.speed_bound,
               "m_hat": m_hat, "M_hat": M_hat, "b_hat": b_hat,
               "terminal_u": states[-1].u, "terminal_x": states[-1].x.data,
               "terminal_t": states[-1].t}
    if g.kind == "DiffS1":
        rep = regularity_monitor(diag, 1.0, float(f["regularity_ceiling"]))
        inv.upper("regularity_ratio", rep.ratio, rep.ceiling)
        results["regularity_ratio"] = rep.ratio
        if f["band"] is not None:
            results["band_leakage_t_le_1"] = band_leakage(diag, int(f["band"]), 1.0)
    header = ["t", "energy", "casimir", "speed", "sobolev", "step"]
    rows = [header] + [list(r) for r in zip(diag.times, diag.energy, diag.casimir, diag.speed,
                                             diag.sobolev, diag.step_sizes)]
    return results, rows


def _run_connect(cfg, spec, rng, inv):
    c = cfg["connect"]
    g = spec.group
    p = scenarios.element_from(g, c["p"], c["p_modes"], "p")
    q = scenarios.element_from(g, c["q"], c["q_modes"], "q")
    tol = cfg["tolerances"]
    opts = ConnectOptions(n_nodes=int(c["n_nodes"]), starts=int(c["starts"]),
                          polish=bool(c["polish"]), tol_constraint=tol["constraint"],
                          tol_el=tol["el_residual"], tol_energy=tol["energy_defect"],
                          seed=int(rng.integers(2**31)), strict=False)
    rep = connect(spec, p, q, float(c["kappa"]), opts)
    inv.upper("constraint_defect", rep.constraint_defect, tol["constraint"])
    inv.upper("el_residual", rep.el_residual, tol["el_residual"])
    inv.upper("energy_defect", rep.energy_defect, tol["energy_defect"])
    results = {"T": rep.T, "action": rep.action, "constraint_defect": rep.constraint_defect,
               "el_residual": rep.el_residual, "energy_defect": rep.energy_defect,
               "iterations": rep.iterations, "converged": rep.converged, "winding": rep.winding,
               "polished": rep.polished, "starts": rep.starts}
    path = rep.path
    s = np.linspace(0.0, 1.0, path.n_nodes)
    header = ["s"] + [f"xi_{j}" for j in range(path.xi.shape[1])] + ["energy"]
    E = energy(spec, path.velocities)
    rows = [header] + [[s[i], *path.xi[i], E[i]] for i in range(path.n_nodes)]
    return results, rows


def _run_mane(cfg, spec, rng, inv):
    mc = cfg["mane"]
    opts = ManeOptions(n_nodes=int(mc["n_nodes"]), max_winding=int(mc["max_winding"]))
    est = estimate_all(spec, opts)
    chain = verify_chain(spec, est, slack=float(mc["slack"]), raise_on_violation=False)
    inv.flag("chain", chain.ok)
    for key in ("c_u", "c_0", "c"):
        inv.flag(f"{key}_converged", est[key].converged)
    results = {"min_E": est["min_E"], "e0": est["e0"],
               "c_u": est["c_u"].value, "c_0": est["c_0"].value, "c": est["c"].value,
               "c_class": est["c"].winding, "chain_violations": chain.violations,
               "per_class": {str(k): v for k, v in sorted(est["c"].per_class.items())}}
    rows = [["class", "value"]] + [[k, v] for k, v in sorted(est["c"].per_class.items())]
    return results, rows


def _run_check(cfg, spec, rng, inv):
    ck = cfg["check"]
    tol = cfg["tolerances"]
    g = spec.group
    m_hat, M_hat = check_tonelli(spec, sample_count=int(ck["sample_count"]),
                                 directions=int(ck["directions"]), rng=rng)
    b_hat = check_growth(spec, m_hat, M_hat, rng=rng, radius=float(ck["radius"]))
    ok, slack = verify_growth(spec, m_hat, M_hat, b_hat, samples=int(ck["growth_samples"]),
                              radius=float(ck["radius"]), rng=rng)
    inv.flag("growth_fresh_samples", ok)
    n = int(ck["legendre_samples"])
    V = np.stack([g.random_algebra(rng) for _ in range(n)])
    rt = float(np.max(np.abs(legendre_inverse(spec, fiber_derivative(spec, V)) - V)))
    inv.upper("legendre_roundtrip", rt, tol["legendre"])
    P = fiber_derivative(spec, V)
    eh = float(np.max(np.abs(energy(spec, V) - hamiltonian(spec, P))))
    inv.upper("energy_hamiltonian", eh, 1e-12 * max(1.0, float(np.max(np.abs(energy(spec, V))))))
    # fiber derivative against central differences of L along random directions
    W = np.stack([g.random_algebra(rng) for _ in range(n)])
    h = 1e-5
    fd = (eval_L(spec, V + h * W) - eval_L(spec, V - h * W)) / (2 * h)
    an = np.sum(P * W, axis=1)
    rel = float(np.max(np.abs(fd - an) / np.maximum(1.0, np.abs(an))))
    inv.upper("fiber_derivative_fd", rel, tol["fd_relative"])
    U = np.stack([g.random_algebra(rng) for _ in range(n)])
    M = np.stack([g.random_algebra(rng) for _ in range(n)])
    pair = np.abs(np.sum(ad_star(g, U, M) * W, axis=1) - np.sum(M * ad(g, U, W), axis=1))
    scale = np.maximum(1.0, np.linalg.norm(U, axis=1) * np.linalg.norm(M, axis=1)
                       * np.linalg.norm(W, axis=1))
    inv.upper("ad_star_pairing", float(np.max(pair / scale)), 1e-8)
    results = {"m_hat": m_hat, "M_hat": M_hat, "b_hat": b_hat, "growth_worst_slack": slack,
               "legendre_roundtrip": rt}
    rows = [["quantity", "value"]] + [[k, v] for k, v in results.items()]
    return results, rows


def _run_convergence(cfg, spec, rng, inv):
    cc = cfg["convergence"]
    f = cfg["flow"]
    u0 = scenarios.vector_from(spec.group, f["u0"], f["u0_modes"], "u0")
    order, e1, e2 = self_convergence_order(spec, u0, float(cc["horizon"]), float(cc["dt"]))
    inv.lower("observed_order", order, float(cc["min_order"]))
    dt = float(cc["dt"])
    rows = [["dt_pair", "difference"], [f"{dt}/{dt / 2}", e1], [f"{dt / 2}/{dt / 4}", e2]]
    return {"observed_order": order, "diff_dt_half": e1, "diff_half_quarter": e2}, rows


RUNNERS = {"flow": _run_flow, "connect": _run_connect, "mane": _run_mane,
           "check": _run_check, "convergence": _run_convergence}


# -- orchestration --------------------------------------------------------------
class ConfigParseError(Exception):
    pass


def load_config(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        line = getattr(exc, "lineno", None)
        col = getattr(exc, "colno", None)
        msg = getattr(exc, "msg", str(exc))
        raise ConfigParseError(f"{path}:{line}:{col}: {msg}") from exc


def _apply_overrides(raw: dict, experiment: str, args) -> dict:
    raw = {k: dict(v) if isinstance(v, dict) else v for k, v in raw.items()}
    raw.setdefault("scenario", {})["experiment"] = experiment
    if args.seed is not None:
        raw["scenario"]["seed"] = args.seed
    elif "seed" not in raw["scenario"] and os.environ.get("TONELLI_SEED"):
        raw["scenario"]["seed"] = int(os.environ["TONELLI_SEED"])
    section = "convergence" if experiment == "convergence" else "flow"
    if args.dt is not None:
        raw.setdefault(section, {})["dt"] = args.dt
    if args.horizon is not None:
        raw.setdefault(section, {})["horizon"] = args.horizon
    if args.kappa is not None:
        raw.setdefault("connect", {})["kappa"] = args.kappa
    if args.out is not None:
        raw.setdefault("output", {})["dir"] = args.out
    return raw


def execute(cfg: dict) -> tuple[int, dict]:
    """Run a resolved config; returns (exit code, summary) and writes the artifacts."""
    seed = int(cfg["scenario"]["seed"])
    rng = np.random.default_rng(seed)
    experiment = cfg["scenario"]["experiment"]
    inv = _Invariants()
    error = None
    results, rows = {}, [["empty"]]
    try:
        spec = scenarios.build_spec(cfg)
        results, rows = RUNNERS[experiment](cfg, spec, rng, inv)
    except (NotTonelli, LegendreError, GroupError, DegenerateEndpoints, NotConverged,
            ChainViolation, BlowUp, ArithmeticError) as exc:
        error = f"{type(exc).__name__}: {exc}"
    summary = {"config": cfg, "seed": seed, "experiment": experiment, "results": results,
               "invariants": inv.items, "error": error, "ok": error is None and inv.ok}
    summary = _clean(summary)
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / "series.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL)
        for row in rows:
            writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x
                             for x in row])
    return (0 if summary["ok"] else 1), summary


def run(config_path, experiment: str | None = None, args=None) -> int:
    """Load, resolve and execute one scenario file; returns the exit code."""
    try:
        raw = load_config(config_path)
        experiment = experiment or raw.get("scenario", {}).get("experiment", "check")
        raw = _apply_overrides(raw, experiment, args or _no_overrides())
        cfg = scenarios.resolve(raw)
    except (ConfigParseError, scenarios.ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        code, summary = execute(cfg)
    except scenarios.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    status = "ok" if code == 0 else "FAILED"
    print(f"{cfg['scenario']['name']} [{cfg['scenario']['experiment']}]: {status}"
          f" -> {cfg['output']['dir']}")
    if summary["error"]:
        print(summary["error"], file=sys.stderr)
    for name, item in summary["invariants"].items():
        if not item["pass"]:
            print(f"  invariant {name} failed: {item}", file=sys.stderr)
    return code


def _no_overrides():
    return argparse.Namespace(seed=None, dt=None, horizon=None, kappa=None, out=None)


def _batch_entry(entry):
    path, out = entry
    args = _no_overrides()
    args.out = out
    return run(path, None, args)


def run_batch(batch_path) -> int:
    """``[[run]]`` entries with ``config`` and ``out``; concurrency from TONELLI_THREADS."""
    try:
        raw = load_config(batch_path)
        entries = raw.get("run", [])
        base = Path(batch_path).parent
        jobs = [(str(base / e["config"]), str(base / e["out"])) for e in entries]
    except (ConfigParseError, KeyError, TypeError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    workers = max(1, int(os.environ.get("TONELLI_THREADS", "1")))
    if workers == 1 or len(jobs) <= 1:
        codes = [_batch_entry(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            codes = list(pool.map(_batch_entry, jobs))
    return max(codes, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tonelli-flows",
                                     description="Right-invariant Tonelli dynamics scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in scenarios.EXPERIMENTS:
        p = sub.add_parser(name, help=f"run a {name} scenario")
        p.add_argument("--config", required=True, help="scenario TOML file")
        p.add_argument("--kappa", type=float, help="energy level for connect")
        p.add_argument("--dt", type=float, help="time step (flow / convergence)")
        p.add_argument("--horizon", type=float, help="integration horizon")
        p.add_argument("--seed", type=int, help="random seed (default: config or TONELLI_SEED)")
        p.add_argument("--out", help="output directory")
    b = sub.add_parser("batch", help="run several scenario files")
    b.add_argument("--config", required=True, help="batch TOML with [[run]] entries")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "batch":
        return run_batch(args.config)
    return run(args.config, args.command, args)


if __name__ == "__main__":
    sys.exit(main())

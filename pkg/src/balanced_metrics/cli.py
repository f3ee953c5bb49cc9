"""Command line front end.

Every subcommand builds a :class:`RunConfig` and hands it to :func:`run`,
which validates it, executes the pipeline and writes ``report.json`` plus
CSV side tables into the output directory.  Exit codes: 0 on success, 1 when
the run ended in a valid but unwanted mathematical outcome, 2 on
configuration or validation errors (a JSON diagnostic list goes to stderr).
"""

import argparse
import hashlib
import json
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import convex, io, quantization, samples, weights
from .errors import BalancedMetricsError, ValidationError

COMMANDS = ("balance", "slope", "decide", "chow", "bergman", "convexity")

# Inputs each command reads, and the defaults of its numeric options.
INPUTS = {
    "balance": ("sample",),
    "slope": ("sample", "direction"),
    "decide": ("sample",),
    "chow": ("toric",),
    "bergman": ("profile",),
    "convexity": ("sample",),
}
OPTIONAL_INPUTS = {"balance": ("h0",), "slope": ("h0",), "decide": ("h0",)}
DEFAULTS = {
    "balance": {"eps_bal": 1e-12, "max_iter": 2000, "cond_cap": 1e12},
    "slope": {"t_max": 60.0, "tol": 1e-8},
    "decide": {"stat_tol": 1e-9, "cond_cap": 1e12, "max_iter": 20000,
               "n_checks": 100, "expect": None},
    "chow": {"m_max": 50},
    "bergman": {"k": [8, 16, 32], "ratio_low": 0.1, "ratio_high": 0.8},
    "convexity": {"trials": 1000, "t_span": 5.0, "n_grid": 21, "tol": None,
                  "spread": 1.0},
}
INT_OPTIONS = {"max_iter", "m_max", "n_checks", "trials", "n_grid"}
MAX_SEED = 2 ** 64 - 1


@dataclass
class RunConfig:
    command: str
    inputs: dict
    options: dict = field(default_factory=dict)
    seed: int = 0
    out: str = "."


class ConfigErrors(Exception):
    def __init__(self, diagnostics):
        super().__init__(f"{len(diagnostics)} configuration error(s)")
        self.diagnostics = diagnostics


def _diag(path, message):
    return {"path": path, "message": message}


def validate_config(doc):
    """Turn a config document into a :class:`RunConfig` or raise :class:`ConfigErrors`."""
    errs = []
    if not isinstance(doc, dict):
        raise ConfigErrors([_diag("/", "config must be a JSON object")])
    command = doc.get("command")
    if command not in COMMANDS:
        errs.append(_diag("/command", f"command must be one of {list(COMMANDS)}"))
    seed = doc.get("seed")
    if "seed" not in doc:
        errs.append(_diag("/seed", "seed is required"))
    elif isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= MAX_SEED:
        errs.append(_diag("/seed", "seed must be an unsigned 64-bit integer"))
    out = doc.get("out")
    if not isinstance(out, str) or not out:
        errs.append(_diag("/out", "output directory is required"))
    inputs = doc.get("inputs", {})
    if not isinstance(inputs, dict):
        errs.append(_diag("/inputs", "inputs must be an object"))
        inputs = {}
    options = doc.get("options", {})
    if not isinstance(options, dict):
        errs.append(_diag("/options", "options must be an object"))
        options = {}
    if command in COMMANDS:
        for name in INPUTS[command]:
            if not isinstance(inputs.get(name), str):
                errs.append(_diag(f"/inputs/{name}", "input path is required"))
        allowed = set(INPUTS[command]) | set(OPTIONAL_INPUTS.get(command, ()))
        for name in inputs:
            if name not in allowed:
                errs.append(_diag(f"/inputs/{name}", "unknown input"))
        merged = dict(DEFAULTS[command])
        for key, value in options.items():
            if key not in merged:
                errs.append(_diag(f"/options/{key}", "unknown option"))
                continue
            merged[key] = value
        errs.extend(_check_options(merged))
        options = merged
    if errs:
        raise ConfigErrors(errs)
    return RunConfig(command, dict(inputs), options, seed, out)


def _check_options(opts):
    errs = []
    for key, value in opts.items():
        path = f"/options/{key}"
        if value is None or key == "expect":
            if key == "expect" and value not in (None, "existence", "degenerate"):
                errs.append(_diag(path, "expect must be 'existence' or 'degenerate'"))
            continue
        if key == "k":
            if (not isinstance(value, list) or len(value) < 2
                    or not all(isinstance(v, int) and v >= 1 for v in value)):
                errs.append(_diag(path, "k must be a list of at least two levels >= 1"))
            continue
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errs.append(_diag(path, "must be a number"))
        elif key in INT_OPTIONS and not float(value).is_integer():
            errs.append(_diag(path, "must be an integer"))
        elif not value > 0:
            errs.append(_diag(path, "must be > 0"))
    return errs


# Pipelines. Each returns (results, tables, tolerances, ok).


def _load_sample(cfg):
    return io.sample_from_json(io.read_json(cfg.inputs["sample"]))


def _load_h0(cfg, n):
    if "h0" in cfg.inputs:
        return io.matrix_from_json(io.read_json(cfg.inputs["h0"]))
    return np.eye(n, dtype=complex)


def _run_balance(cfg):
    o = cfg.options
    s = _load_sample(cfg)
    res = quantization.balance_iterate(s, _load_h0(cfg, s.N), eps_bal=o["eps_bal"],
                                       max_iter=int(o["max_iter"]),
                                       cond_cap=o["cond_cap"])
    results = {"status": res.status.value, "iterations": res.iterations,
               "residual": res.residual, "monotone": res.monotone,
               "H": io.matrix_to_json(res.H.entries)}
    tables = {"residuals.csv": io.rows_csv(
        ["iteration", "residual"],
        [(i + 1, float(r)) for i, r in enumerate(res.residual_history)])}
    if res.status is quantization.Status.CONVERGED:
        rho = quantization.bergman_density(s, res.H.entries, "paper")
        results["density_spread"] = float(np.max(rho) - np.min(rho))
        tables["density.csv"] = io.rows_csv(
            ["point", "rho"], [(a, float(r)) for a, r in enumerate(rho)])
    if res.escape_direction is not None:
        results["escape_direction"] = io.matrix_to_json(res.escape_direction.entries)
        energy = quantization.energy_for(s)
        results["escape_slope"] = float(energy.exact_slope(
            np.eye(s.N), res.escape_direction.entries))
    ok = res.status is quantization.Status.CONVERGED
    return results, tables, {"eps_bal": o["eps_bal"], "cond_cap": o["cond_cap"]}, ok


def _run_slope(cfg):
    o = cfg.options
    s = _load_sample(cfg)
    a = io.matrix_from_json(io.read_json(cfg.inputs["direction"]))
    h0 = _load_h0(cfg, s.N)
    energy = quantization.energy_for(s)
    rf = energy.restriction(h0, a)
    est = convex.asymptotic_slope(rf, t_max=o["t_max"], tol=o["tol"])
    exact = float(rf.exact_slope)
    agree = bool(abs(est.value - exact) <= o["tol"] * (1 + abs(exact)))
    results = {"exact_slope": exact, "estimated_slope": est.value,
               "window": list(est.window), "drift": est.drift,
               "converged": est.converged, "agree": agree}
    ts = np.linspace(0.0, est.window[1], 61)
    tables = {"restriction.csv": io.rows_csv(
        ["t", "value"], [(float(t), float(rf(t))) for t in ts])}
    return results, tables, {"tol": o["tol"], "t_max": o["t_max"],
                             "support_rtol": quantization.SUPPORT_RTOL}, agree


def _run_decide(cfg):
    o = cfg.options
    s = _load_sample(cfg)
    energy = quantization.energy_for(s)
    opts = convex.DescentOptions(stat_tol=o["stat_tol"], cond_cap=o["cond_cap"],
                                 max_iter=int(o["max_iter"]), seed=cfg.seed % 2 ** 32)
    verdict = convex.decide_existence(energy, _load_h0(cfg, s.N), opts,
                                      n_checks=int(o["n_checks"]), seed=cfg.seed)
    if isinstance(verdict, convex.Minimizer):
        results = {"verdict": "Minimizer", "H": io.matrix_to_json(verdict.point.entries),
                   "gradient_norm": verdict.gradient_norm, "value": verdict.value,
                   "iterations": verdict.iterations}
    else:
        results = {"verdict": "Degenerate",
                   "direction": io.matrix_to_json(verdict.direction.entries),
                   "certified_slope": verdict.certified_slope,
                   "slope_source": verdict.slope_source,
                   "witness": verdict.witness_iterates}
    ok = {"existence": results["verdict"] == "Minimizer",
          "degenerate": results["verdict"] == "Degenerate",
          None: True}[o["expect"]]
    return results, {}, {"stat_tol": o["stat_tol"], "cond_cap": o["cond_cap"],
                         "support_rtol": quantization.SUPPORT_RTOL}, ok


def _run_chow(cfg):
    m_max = int(cfg.options["m_max"])
    tcfg = weights.ToricConfigData.from_json(io.read_json(cfg.inputs["toric"]))
    table = weights.toric_weight_table(tcfg, m_max)
    coeffs = weights.fit_expansion(table)
    report = weights.chow_limit_check(tcfg, m_max)
    results = {"a0": coeffs.a0, "a1": coeffs.a1, "b0": coeffs.b0, "b1": coeffs.b1,
               "fit_period": coeffs.fit_period, "DF": report.df,
               "chow": [report.chow[m] for m in range(1, m_max + 1)],
               "max_tail_error": report.max_tail_error,
               "rate_constant": report.k_tail, "rate_ok": report.passed}
    tables = {"weights.csv": weights.table_csv(table, coeffs)}
    return results, tables, {"arithmetic": "exact rational"}, report.passed


def _run_bergman(cfg):
    o = cfg.options
    profile = io.profile_from_json(io.read_json(cfg.inputs["profile"]))
    ks = sorted(o["k"])
    res = {k: samples.expansion_residual(k, profile) for k in ks}
    ratios = [res[b] / res[a] for a, b in zip(ks, ks[1:])]
    ok = all(o["ratio_low"] <= r <= o["ratio_high"] for r in ratios)
    _, grid = samples.deformed_p1_sample(ks[-1], profile)
    results = {"residuals": {str(k): res[k] for k in ks}, "ratios": ratios,
               "in_band": ok, "margin": profile.margin}
    tables = {"curvature.csv": io.curvature_csv(grid),
              "residuals.csv": io.rows_csv(["k", "r_k"], [(k, res[k]) for k in ks])}
    return results, tables, {"ratio_low": o["ratio_low"],
                             "ratio_high": o["ratio_high"]}, ok


def _run_convexity(cfg):
    o = cfg.options
    s = _load_sample(cfg)
    energy = quantization.energy_for(s)
    is_ac = isinstance(s, quantization.AnticanonicalSample)
    tol = o["tol"] if o["tol"] is not None else (1e-6 if is_ac else 1e-9)
    rng = np.random.default_rng(cfg.seed)
    from .hermitian import random_positive, random_unit_direction
    grid = np.linspace(-o["t_span"], o["t_span"], int(o["n_grid"]))
    rows = []
    for trial in range(int(o["trials"])):
        h0 = random_positive(rng, s.N, spread=o["spread"])
        a = random_unit_direction(rng, s.N)
        rf = energy.restriction(h0, a)
        d2 = convex.second_differences(rf, grid)
        mid = len(grid) // 2
        rows.append((trial, float(d2.min()), float(d2[mid - 1])))
    worst = min(r[1] for r in rows)
    results = {"trials": len(rows), "min_second_difference": worst,
               "violations": sum(1 for r in rows if r[1] < -tol),
               "min_margin_at_zero": min(r[2] for r in rows)}
    tables = {"second_differences.csv": io.rows_csv(
        ["trial", "min_second_difference", "second_difference_at_0"], rows)}
    return results, tables, {"violation_tol": tol}, worst >= -tol


PIPELINES = {"balance": _run_balance, "slope": _run_slope, "decide": _run_decide,
             "chow": _run_chow, "bergman": _run_bergman, "convexity": _run_convexity}


def _digest(cfg):
    h = hashlib.sha256()
    for name in sorted(cfg.inputs):
        h.update(name.encode())
        try:
            h.update(Path(cfg.inputs[name]).read_bytes())
        except OSError as exc:
            raise ValidationError(f"cannot read {cfg.inputs[name]}",
                                  invariant="io", path=f"/inputs/{name}") from exc
    return h.hexdigest()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, Fraction):
        return weights.frac_str(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def run(cfg):
    """Execute a validated config; returns the process exit code."""
    if isinstance(cfg, dict):
        cfg = validate_config(cfg)
    digest = _digest(cfg)
    start = time.perf_counter()
    results, tables, tolerances, ok = PIPELINES[cfg.command](cfg)
    elapsed = time.perf_counter() - start
    report = {"command": cfg.command, "seed": cfg.seed,
              "inputs": {"paths": dict(sorted(cfg.inputs.items())),
                         "sha256": digest},
              "options": _jsonable(cfg.options),
              "results": _jsonable(results), "tolerances": _jsonable(tolerances),
              "outcome": "ok" if ok else "failure",
              "timings": {"total_seconds": elapsed}}
    out = Path(cfg.out)
    for name, text in sorted(tables.items()):
        io.atomic_write(out / name, text)
    io.write_json(out / "report.json", report)
    return 0 if ok else 1


def build_parser():
    p = argparse.ArgumentParser(prog="balanced-metrics",
                                description="Balanced metrics at desk scale.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--out", default=".", help="output directory")
        if seed:
            sp.add_argument("--seed", type=int, default=0)
        return sp

    sp = common(sub.add_parser("balance", help="run the T-operator iteration"))
    sp.add_argument("--sample", required=True)
    sp.add_argument("--h0")
    sp.add_argument("--eps", dest="eps_bal", type=float, default=1e-12)
    sp.add_argument("--max-iter", type=int, default=2000)
    sp.add_argument("--cond-cap", type=float, default=1e12)

    sp = common(sub.add_parser("slope", help="compare estimated and exact slopes"))
    sp.add_argument("--sample", required=True)
    sp.add_argument("--direction", required=True)
    sp.add_argument("--h0")
    sp.add_argument("--t-max", type=float, default=60.0)
    sp.add_argument("--tol", type=float, default=1e-8)

    sp = common(sub.add_parser("decide", help="decide existence of a balanced point"))
    sp.add_argument("--sample", required=True)
    sp.add_argument("--h0")
    sp.add_argument("--stat-tol", type=float, default=1e-9)
    sp.add_argument("--n-checks", type=int, default=100)
    sp.add_argument("--expect", choices=("existence", "degenerate"))

    sp = common(sub.add_parser("chow", help="exact Chow weights of a toric configuration"))
    sp.add_argument("--toric", required=True)
    sp.add_argument("--m-max", type=int, default=50)

    sp = common(sub.add_parser("bergman", help="Bergman expansion residuals"))
    sp.add_argument("--profile", required=True)
    sp.add_argument("--k", default="8,16,32", help="comma-separated levels")

    sp = common(sub.add_parser("convexity", help="random second-difference test"))
    sp.add_argument("--sample", required=True)
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--tol", type=float)

    sp = sub.add_parser("run", help="run a JSON config (seed required)")
    sp.add_argument("--config", required=True)

    sp = sub.add_parser("make-sample", help="write a built-in sample as JSON")
    sp.add_argument("kind", choices=("p1", "ac-p1", "degenerate"))
    sp.add_argument("--k", type=int, default=2)
    sp.add_argument("--n-sections", type=int, default=3)
    sp.add_argument("--n-points", type=int, default=9)
    sp.add_argument("--hyperplane-dim", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--output", required=True)
    return p


def _config_from_args(args):
    cmd = args.command
    names = INPUTS[cmd] + OPTIONAL_INPUTS.get(cmd, ())
    inputs = {n: getattr(args, n) for n in names if getattr(args, n, None)}
    options = {}
    for key in DEFAULTS[cmd]:
        if hasattr(args, key) and getattr(args, key) is not None:
            options[key] = getattr(args, key)
    if cmd == "bergman":
        try:
            options["k"] = [int(x) for x in args.k.split(",")]
        except ValueError:
            raise ConfigErrors([_diag("/options/k", "k must be comma-separated integers")])
    return {"command": cmd, "inputs": inputs, "options": options,
            "seed": args.seed, "out": args.out}


def _make_sample(args):
    if args.kind == "p1":
        s = samples.build_p1_sample(args.k)
    elif args.kind == "ac-p1":
        s = samples.build_ac_p1_sample(args.k)
    else:
        s = samples.degenerate_sample(args.n_sections, args.n_points,
                                      args.hyperplane_dim, allow_degenerate=True,
                                      seed=args.seed)
    io.write_json(args.output, io.sample_to_json(s))
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "make-sample":
            return _make_sample(args)
        if args.command == "run":
            doc = io.read_json(args.config)
        else:
            doc = _config_from_args(args)
        return run(validate_config(doc))
    except ConfigErrors as exc:
        json.dump({"errors": exc.diagnostics}, sys.stderr, indent=2)
        sys.stderr.write("\n")
        return 2
    except ValidationError as exc:
        diag = _diag(exc.path or "/", str(exc))
        if exc.invariant:
            diag["invariant"] = exc.invariant
        json.dump({"errors": [diag]}, sys.stderr, indent=2)
        sys.stderr.write("\n")
        return 2
    except BalancedMetricsError as exc:
        json.dump({"errors": [_diag("/", f"{type(exc).__name__}: {exc}")]},
                  sys.stderr, indent=2)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``degendens <subcommand> [flags]``.

Every subcommand prints one JSON document on stdout holding ``schema_version``,
the effective configuration and the result.  With ``--out DIR`` the same JSON,
a CSV artifact and ``<prefix>.config.json`` are written there as well.

Exit codes: 0 success, 1 invalid input, 2 numerical failure, 3 acceptance failure.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys

import numpy as np

from . import acceptance, bounds, bridge, control, density, forward, malliavin
from .config import SCHEMA_VERSION, ConfigError, RunConfig, load_config
from .core import SpecError, support_contains

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_ACCEPTANCE = 0, 1, 2, 3
COMMANDS = ("simulate", "density", "bounds", "control", "verify", "sweep")
DENSITY_GRID = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; usage errors map to 1 here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON configuration file; flags override its values")
    p.add_argument("--spec", dest="family", choices=["radial", "component"], help="drift family")
    p.add_argument("--n", type=int, help="number of Brownian coordinates")
    p.add_argument("--k", type=int, help="drift exponent")
    p.add_argument("--t", type=float, help="time horizon")
    p.add_argument("--x", type=_floats, help="start point x1,...,xn,xdeg")
    p.add_argument("--xi", type=_floats, help="end point xi1,...,xin,xideg")
    p.add_argument("--paths", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--antithetic", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--K-large", dest="K_large", type=float)
    p.add_argument("--Cbar", type=float)
    p.add_argument("--K-small", dest="K_small", type=float)
    p.add_argument("--bandwidth", type=float, help="kernel bandwidth (default: Silverman rule)")
    p.add_argument("--form", choices=list(bridge.FORMS), help="bridge construction")
    p.add_argument("--out", help="directory for JSON/CSV artifacts")
    p.add_argument("--prefix", help="artifact file prefix")
    p.add_argument("--workers", type=int, help="worker pool size (default: DEGENDENS_THREADS or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="degendens", description="Transition densities of degenerate diffusions.")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("simulate", help="forward simulation; terminal points as CSV")
    _common(p)

    p = sub.add_parser("density", help="transition density estimate with confidence interval")
    _common(p)
    p.add_argument("--fits", action="store_true", help="also fit tail and small-ball exponents of Y")

    p = sub.add_parser("bounds", help="regime classification and two-sided envelopes")
    _common(p)
    p.add_argument("--empirical", action="store_true", help="estimate the density and test envelope membership")
    p.add_argument("--fit", action="store_true", help="fit envelope constants over the sweep (implies --empirical)")
    p.add_argument("--prefactor", choices=["standard", "unified"], default="standard")

    p = sub.add_parser("control", help="admissible control path and chain cost")
    _common(p)

    p = sub.add_parser("sweep", help="Malliavin covariance sweep")
    _common(p)
    p.add_argument("--tau", type=float, default=0.0)
    p.add_argument("--monte-carlo", dest="monte_carlo", action="store_true",
                   help="add sampled covariance means (costs paths per query)")

    p = sub.add_parser("verify", help="run the acceptance suite")
    p.add_argument("--suite", choices=["core"], default="core")
    p.add_argument("--criteria", type=lambda s: [int(v) for v in s.split(",")],
                   help="comma-separated subset of criteria 1-11")
    p.add_argument("--seed", type=int, default=acceptance.BASE_SEED)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-determinism", dest="determinism", action="store_false",
                   help="skip the pool-size rerun")
    p.add_argument("--out", help="directory for the JSON report")
    return parser


def _overrides(args) -> dict:
    """Translate flags into a partial configuration dict."""
    out: dict = {}
    spec = {key: getattr(args, attr) for key, attr in (("family", "family"), ("n", "n"), ("k", "k"))
            if getattr(args, attr) is not None}
    if spec:
        out["spec"] = spec
    if any(getattr(args, a) is not None for a in ("t", "x", "xi")):
        out["query"] = {key: getattr(args, key) for key in ("t", "x", "xi") if getattr(args, key) is not None}
    mc = {key: getattr(args, key) for key in ("paths", "steps", "seed", "antithetic") if getattr(args, key) is not None}
    if mc:
        out["mc"] = mc
    th = {key: getattr(args, key) for key in ("K_large", "Cbar", "K_small") if getattr(args, key) is not None}
    if th:
        out["thresholds"] = th
    if args.bandwidth is not None:
        out["bandwidth"] = args.bandwidth
    if args.form is not None:
        out["bridge_form"] = args.form
    output = {key: getattr(args, attr) for key, attr in (("dir", "out"), ("prefix", "prefix"))
              if getattr(args, attr) is not None}
    if output:
        out["output"] = output
    return out


def _resolve(args) -> RunConfig:
    overrides = _overrides(args)
    if args.config:
        return load_config(args.config, overrides)
    if "spec" in overrides and set(overrides["spec"]) != {"family", "n", "k"}:
        raise ConfigError("spec: --spec, --n and --k are all required without --config")
    return RunConfig.from_dict(overrides)


def _queries(cfg: RunConfig, command: str):
    if cfg.sweep is not None:
        return list(cfg.sweep)
    if cfg.query is None:
        raise ConfigError(f"query: {command} needs --t, --x and --xi (or a query in --config)")
    return [cfg.query]


def _single(cfg: RunConfig, command: str):
    if cfg.query is None:
        raise ConfigError(f"query: {command} needs --t, --x and --xi (or a query in --config)")
    return cfg.query


def cmd_simulate(cfg: RunConfig, workers):
    q = _single(cfg, "simulate")
    batch = forward.simulate_forward(q.start, q.t, cfg.spec, cfg.mc, workers=workers)
    buf = io.StringIO()
    forward.write_terminal_csv(batch, buf)
    result = {
        "paths": len(batch),
        "t": q.t,
        "start": q.start.flat(),
        "mean": [*(float(v) for v in batch.nondeg.mean(axis=0)), float(batch.deg.mean())],
        "std": [*(float(v) for v in batch.nondeg.std(axis=0, ddof=1)), float(batch.deg.std(ddof=1))],
        "deg_min": float(batch.deg.min()),
        "deg_max": float(batch.deg.max()),
    }
    return result, buf.getvalue()


def cmd_density(cfg: RunConfig, workers, fits: bool = False):
    q = _single(cfg, "density")
    spec = cfg.spec
    value, halfwidth = density.transition_density(q, spec, cfg.mc, bandwidth=cfg.bandwidth, form=cfg.bridge_form,
                                                  workers=workers)
    inside = support_contains(q, spec)
    result = {"value": value, "halfwidth": halfwidth, "ci": [max(0.0, value - halfwidth), value + halfwidth],
              "in_support": inside, "gaussian_factor": density.gaussian_factor(q.t, q.x, q.xi)}
    samples = bridge.sample_Y_values(q.t, q.x, q.xi, spec, cfg.mc, form=cfg.bridge_form, workers=workers)
    lo, hi = np.quantile(samples, [0.001, 0.999])
    if hi <= lo:
        lo, hi = lo - 1.0, hi + 1.0
    est = density.estimate_pY(samples, np.linspace(lo, hi, DENSITY_GRID), cfg.bandwidth)
    result["pY"] = est.to_dict()
    if fits:
        result["fits"] = {
            "tail": density.fit_tail_exponent(density.tail_points(samples)).to_dict(),
            "log_survival": density.fit_log_survival(density.tail_points(samples)).to_dict(),
            "small_ball": density.fit_tail_exponent(density.small_ball_points(samples)).to_dict(),
        }
    buf = io.StringIO()
    density.write_density_csv(est, buf)
    return result, buf.getvalue()


def cmd_bounds(cfg: RunConfig, workers, empirical=False, fit=False, prefactor_form="standard"):
    spec = cfg.spec
    queries = _queries(cfg, "bounds")
    rows, entries, observations = [], [], []
    for q in queries:
        report = bounds.classify_regime(q, spec, **cfg.thresholds)
        value = None
        if empirical or fit:
            value, _ = density.transition_density(q, spec, cfg.mc, bandwidth=cfg.bandwidth, form=cfg.bridge_form,
                                                  workers=workers)
        envs = {}
        for regime in report.regimes:
            env = bounds.envelope(q, spec, regime, prefactor_form=prefactor_form, report=report)
            envs[regime.value] = {**env.to_dict(), "inside": None if value is None else env.contains(value)}
            rows.append((q, env, value))
            if value is not None and value > 0:
                observations.append((q, regime, value))
        entries.append({"query": q.to_dict(), "report": report.to_dict(), "envelopes": envs, "empirical": value})
    result = {"queries": entries, "prefactor_form": prefactor_form}
    if fit:
        c_fit, coverage = bounds.fit_envelope_constants(observations, spec, prefactor_form)
        result["fit"] = {"C": c_fit, "coverage": coverage, "observations": len(observations)}
    buf = io.StringIO()
    bounds.write_envelope_csv(rows, buf)
    return result, buf.getvalue()


def cmd_control(cfg: RunConfig, workers):
    q = _single(cfg, "control")
    path, ce = control.build_admissible_path(q, cfg.spec)
    buf = io.StringIO()
    control.write_path_csv(path, buf)
    return control.path_summary(q, cfg.spec, path, ce), buf.getvalue()


def cmd_sweep(cfg: RunConfig, workers, tau=0.0, monte_carlo=False):
    mc = cfg.mc if monte_carlo else None
    rows = [malliavin.sweep_row(q.t, q.x, q.xi, cfg.spec, mc, tau, workers) for q in _queries(cfg, "sweep")]
    ratios = [r["ratio"] for r in rows if np.isfinite(r["ratio"]) and r["ratio"] > 0]
    result = {"rows": rows, "tau": tau,
              "ratio_spread": max(ratios) / min(ratios) if ratios else None}
    buf = io.StringIO()
    malliavin.write_sweep_csv(rows, buf)
    return result, buf.getvalue()


def _dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, allow_nan=True)


def _emit(command: str, cfg: RunConfig, result: dict, csv_text: str | None) -> None:
    doc = {"schema_version": SCHEMA_VERSION, "command": command, "config": cfg.to_dict(), "result": result}
    text = _dumps(doc)
    sys.stdout.write(text + "\n")
    out_dir = cfg.output["dir"]
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        stem = os.path.join(out_dir, f"{cfg.output['prefix']}.{command}")
        with open(stem + ".json", "w") as fh:
            fh.write(text + "\n")
        if csv_text is not None:
            with open(stem + ".csv", "w") as fh:
                fh.write(csv_text)
        with open(os.path.join(out_dir, f"{cfg.output['prefix']}.config.json"), "w") as fh:
            fh.write(cfg.to_json() + "\n")


def cmd_verify(args) -> int:
    def report(res):
        print(res.line(), file=sys.stderr, flush=True)

    results = acceptance.run_suite(args.criteria, workers=args.workers, seed=args.seed,
                                   determinism=args.determinism, report=report)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": "verify",
        "config": {"suite": args.suite, "seed": args.seed, "criteria": args.criteria,
                   "determinism": args.determinism},
        "result": {"passed": all(r.passed for r in results),
                   "criteria": [{"number": r.number, "name": r.name, "passed": r.passed, "detail": r.detail,
                                 "payload": r.payload} for r in results]},
    }
    text = _dumps(doc)
    sys.stdout.write(text + "\n")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "verify.json"), "w") as fh:
            fh.write(text + "\n")
    return EXIT_OK if doc["result"]["passed"] else EXIT_ACCEPTANCE


def run_command(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(list(argv))
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    try:
        if args.command == "verify":
            if args.criteria and any(c not in acceptance.CRITERIA for c in args.criteria):
                raise ConfigError(f"criteria: expected numbers in 1-{max(acceptance.CRITERIA)}")
            return cmd_verify(args)
        if args.workers is not None and args.workers < 1:
            raise ConfigError(f"workers: must be >= 1, got {args.workers}")
        cfg = _resolve(args)
        workers = args.workers
        if args.command == "simulate":
            result, csv_text = cmd_simulate(cfg, workers)
        elif args.command == "density":
            result, csv_text = cmd_density(cfg, workers, args.fits)
        elif args.command == "bounds":
            result, csv_text = cmd_bounds(cfg, workers, args.empirical, args.fit, args.prefactor)
        elif args.command == "control":
            result, csv_text = cmd_control(cfg, workers)
        else:
            result, csv_text = cmd_sweep(cfg, workers, args.tau, args.monte_carlo)
        _emit(args.command, cfg, result, csv_text)
        return EXIT_OK
    except (control.UnreachableTarget, bounds.EnvelopeFitError, FloatingPointError) as exc:
        print(f"degendens: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SpecError as exc:
        print(f"degendens: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()

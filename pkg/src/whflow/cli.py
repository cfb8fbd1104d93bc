"""Command-line entry point: ``whflow {run,verify,sweep,info}``.

Exit codes: 0 when every executed check passes, 1 when a check fails or a
run aborts (positivity loss, solver divergence), 2 on usage or config errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .errors import ConfigError, WHFError
from .scenarios import SCENARIOS, ScenarioConfig, run, summary_json, validate
from .verify import run_checks

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

DESCRIPTIONS = {
    "geodesic": "F = 0 geodesic flow, implicit midpoint; conservation and primal-residual diagnostics",
    "linear-vlasov": "F = int V rho; particle characteristics oracle",
    "nonlinear-vlasov": "F = 1/2 int int W rho rho; mean-field particle oracle",
    "schrodinger": "F = int V rho + I/8; split-step Schrodinger oracle via Madelung",
    "bridge": "F = -I/8; Hopf-Cole transform of a forward/backward heat pair",
}
SWEEP_METRICS = ("hamiltonian_drift", "primal_residual_mid", "oracle_l1")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", action="store_true", help="only print errors and the final verdict")

    scenario = argparse.ArgumentParser(add_help=False)
    scenario.add_argument("config_arg", nargs="?", metavar="CONFIG",
                          help="path to a JSON config, or a preset name")
    scenario.add_argument("--config", help="same as the positional CONFIG")
    scenario.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                          help="dotted override applied before validation (repeatable)")
    scenario.add_argument("--out", help="output directory (overrides output_dir)")
    scenario.add_argument("--seed", type=int, help="particle seed (overrides oracle.seed)")

    parser = _Parser(prog="whflow", description="Wasserstein Hamiltonian flow simulator")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    sub.add_parser("run", parents=[common, scenario], help="run one scenario")
    sub.add_parser("verify", parents=[common], help="run the invariant suite on small grids")
    sw = sub.add_parser("sweep", parents=[common, scenario], help="refinement study over one parameter")
    sw.add_argument("--param", required=True, help="dotted key to vary, e.g. time.dt or grid.n")
    sw.add_argument("--values", required=True, nargs="+", help="values of --param, coarse to fine")
    sw.add_argument("--metric", action="append", choices=SWEEP_METRICS,
                    help="summary field(s) to report (default: all available)")
    sw.add_argument("--dt-power", type=float, default=None,
                    help="with --param grid.n, also scale time.dt by (n0/n)^P")
    sw.add_argument("--expect-order", type=float, default=None,
                    help="fail unless every measured order of the first metric is within --order-tol")
    sw.add_argument("--order-tol", type=float, default=0.3)
    sw.add_argument("--jobs", type=int, default=1, help="parallel runs")
    info = sub.add_parser("info", parents=[common], help="list presets or show one")
    info.add_argument("name", nargs="?", choices=SCENARIOS)
    return parser


def load_config(args) -> ScenarioConfig:
    source = args.config or args.config_arg
    if source is None:
        raise UsageError("a config path or preset name is required")
    if Path(source).is_file():
        cfg = ScenarioConfig.load(source)
    elif source in SCENARIOS:
        cfg = ScenarioConfig.preset(source)
    else:
        raise ConfigError(f"config: {source!r} is neither a file nor a preset ({', '.join(SCENARIOS)})")
    overrides = list(args.overrides)
    if args.out is not None:
        overrides.append(f"output_dir={json.dumps(args.out)}")
    if args.seed is not None:
        overrides.append(f"oracle.seed={args.seed}")
    cfg = cfg.with_overrides(overrides)
    violations = validate(cfg)
    if violations:
        raise ConfigError(violations)
    return cfg


def _say(args, text, stream=None):
    if not args.quiet:
        print(text, file=stream or sys.stdout)


def cmd_run(args) -> int:
    cfg = load_config(args)
    report = run(cfg)
    _say(args, summary_json(report.summary).rstrip())
    passed = report.summary["oracle_pass"] is not False
    print(f"{'PASS' if passed else 'FAIL'} run {cfg.name}: output in {report.output_dir}")
    return EXIT_OK if passed else EXIT_FAIL


def cmd_verify(args) -> int:
    results = run_checks(emit=None if args.quiet else print)
    failed = [r for r in results if not r.passed]
    for r in failed if args.quiet else ():
        print(f"FAIL {r.name}: {r.detail}")
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_OK if not failed else EXIT_FAIL


def _sweep_one(payload):
    data, out = payload
    report = run(ScenarioConfig.from_dict(data), output_dir=out, write=out is not None)
    return report.summary


def measured_orders(params, values, refine_by_increase: bool):
    """Orders ``log(e_i / e_{i+1}) / log(h_i / h_{i+1})`` between successive runs."""
    orders = []
    for (p0, e0), (p1, e1) in zip(zip(params, values), zip(params[1:], values[1:])):
        ratio = (p1 / p0) if refine_by_increase else (p0 / p1)
        if e0 is None or e1 is None or e0 <= 0 or e1 <= 0 or ratio == 1:
            orders.append(None)
        else:
            orders.append(math.log(e0 / e1) / math.log(ratio))
    return orders


def cmd_sweep(args) -> int:
    base = load_config(args)
    params = []
    for raw in args.values:
        try:
            params.append(json.loads(raw))
        except json.JSONDecodeError:
            raise UsageError(f"--values: {raw!r} is not a number") from None
    if not all(isinstance(p, (int, float)) and p > 0 for p in params):
        raise UsageError("--values must be positive numbers")
    configs = []
    for p in params:
        overrides = [f"{args.param}={json.dumps(p)}"]
        if args.dt_power is not None:
            if args.param != "grid.n":
                raise UsageError("--dt-power only applies to --param grid.n")
            dt = base.time["dt"] * (params[0] / p) ** args.dt_power
            overrides.append(f"time.dt={dt!r}")
        cfg = base.with_overrides(overrides)
        violations = validate(cfg)
        if violations:
            raise ConfigError([f"{args.param}={p}: {v}" for v in violations])
        out = str(Path(args.out) / f"{args.param}={p}") if args.out else None
        configs.append((cfg.to_dict(), out))

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            summaries = list(pool.map(_sweep_one, configs))
    else:
        summaries = [_sweep_one(c) for c in configs]

    metrics = args.metric or [m for m in SWEEP_METRICS if any(s.get(m) is not None for s in summaries)]
    refine_up = args.param == "grid.n"
    print(f"sweep {base.name} over {args.param}")
    print("  ".join([f"{args.param:>12}"] + [f"{m:>20}" for m in metrics]))
    for p, s in zip(params, summaries):
        cells = [f"{s[m]:>20.6e}" if s.get(m) is not None else f"{'-':>20}" for m in metrics]
        print("  ".join([f"{p!s:>12}"] + cells))
    verdict = True
    for i, m in enumerate(metrics):
        orders = measured_orders(params, [s.get(m) for s in summaries], refine_up)
        text = ", ".join("-" if o is None else f"{o:.3f}" for o in orders)
        print(f"order[{m}]: {text}")
        if args.expect_order is not None and i == 0:
            ok = all(o is not None and abs(o - args.expect_order) <= args.order_tol for o in orders)
            verdict = verdict and ok
            print(f"{'PASS' if ok else 'FAIL'} order of {m} within {args.order_tol} of {args.expect_order}")
    return EXIT_OK if verdict else EXIT_FAIL


def cmd_info(args) -> int:
    if args.name:
        print(json.dumps(ScenarioConfig.preset(args.name).to_dict(), indent=2))
        return EXIT_OK
    for name in SCENARIOS:
        print(f"{name:<18} {DESCRIPTIONS[name]}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "verify": cmd_verify, "sweep": cmd_sweep, "info": cmd_info}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.verb](args)
    except UsageError as exc:
        print(f"whflow: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        for v in exc.violations:
            print(f"whflow: config error: {v}", file=sys.stderr)
        return EXIT_USAGE
    except WHFError as exc:
        print(f"whflow: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

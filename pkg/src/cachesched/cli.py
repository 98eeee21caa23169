"""Command-line entry point: ``cachesched {table,simulate,sweep,learn,bounds}``.

Exit status: 0 success, 1 usage or validation error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys

from . import sim
from .learn import run_learner
from .scenario import ConfigError, load_scenario
from .valuefn import (ReducedState, build_value_table, poisson_truncation, save_table, table_to_text,
                      tiny_instance, value_bounds)

RESULT_COLUMNS = ["config_hash", "seed", "policy", "swept_key", "swept_value", "replications",
                  "mean_cost", "ci95_halfwidth", "mean_energy_term", "mean_time_term", "mean_requests"]
BOUNDS_COLUMNS = ["config_hash", "seed", "state", "m", "lower", "exact", "upper", "certified"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _policy_list(text):
    names = [n.strip() for n in text.split(",") if n.strip()]
    if not names:
        raise argparse.ArgumentTypeError("empty policy list")
    for n in names:
        if n not in sim.POLICY_NAMES:
            raise argparse.ArgumentTypeError(f"unknown policy {n!r}; choose from {', '.join(sim.POLICY_NAMES)}")
    return names


def _value_list(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad numeric list {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty value list")
    return values


def build_parser():
    parser = _Parser(prog="cachesched", description="Cache-assisted multicast scheduling experiments.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, out_help):
        p.add_argument("--config", required=True, help="scenario file (key = value lines)")
        p.add_argument("--out", help=out_help + " (default: stdout)")
        p.add_argument("--seed", type=int, help="override the config's master seed")
        p.add_argument("--mc-samples", type=int, default=100_000, help="Monte Carlo draws for table builds")

    p = sub.add_parser("table", help="build and save a value table")
    common(p, "table file")

    for name, helptext in (("simulate", "run policies on one config"),
                           ("sweep", "run policies over values of one config key")):
        p = sub.add_parser(name, help=helptext)
        common(p, "CSV file")
        p.add_argument("--policies", type=_policy_list, default=["amdp", "b1", "b2"])
        p.add_argument("--replications", type=int, help="override the config's replication count")
        p.add_argument("--proactive", choices=["on", "off"],
                       help="force proactive placement on or off for every policy")
        p.add_argument("--learn-draws", type=int, default=10_000, help="observations for amdp-learned")
        if name == "sweep":
            p.add_argument("--key", required=True, help="numeric config key, e.g. lambda")
            p.add_argument("--values", type=_value_list, required=True, help="comma-separated values")

    p = sub.add_parser("learn", help="learn a table from synthetic requests")
    common(p, "table file")
    p.add_argument("--max-draws", type=int, default=10_000)
    p.add_argument("--tau", type=float, help="override the config's learning threshold")

    p = sub.add_parser("bounds", help="tiny-instance exact values against the table bounds")
    common(p, "CSV file")
    p.add_argument("--n-max", type=int, help="stages (default from the Poisson truncation)")
    return parser


def _emit(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _csv(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x):
    return repr(float(x))


def _result_rows(config, result, key="", value=""):
    rows = []
    for name, s in result.summaries.items():
        rows.append([config.config_hash(), result.seed, name, key, value if value == "" else _fmt(value),
                     result.replications, _fmt(s.mean), _fmt(s.ci95), _fmt(s.energy.mean()),
                     _fmt(s.time.mean()), _fmt(s.requests.mean())])
    return rows


def _run_policies(config, args, seed):
    geometry = sim.experiment_geometry(config, seed)
    policies = sim.build_policies(config, geometry, args.policies, seed, args.mc_samples, args.learn_draws)
    if args.proactive is not None:
        for p in policies:
            p.proactive = args.proactive == "on"
    reps = args.replications if args.replications is not None else config.replications
    return sim.run_experiment(config, policies, reps, seed, geometry)


def cmd_table(config, args, seed):
    geometry = sim.experiment_geometry(config, seed)
    table = build_value_table(config, geometry, args.mc_samples, sim.table_rng(seed, "table"))
    if args.out is None:
        sys.stdout.write(table_to_text(table))
    else:
        save_table(table, args.out)


def cmd_simulate(config, args, seed):
    result = _run_policies(config, args, seed)
    _emit(_csv(RESULT_COLUMNS, _result_rows(config, result)), args.out)


def cmd_sweep(config, args, seed):
    rows = []
    for value in args.values:
        swept = config.with_value(args.key, value)
        rows += _result_rows(swept, _run_policies(swept, args, seed), args.key, value)
    _emit(_csv(RESULT_COLUMNS, rows), args.out)


def cmd_learn(config, args, seed):
    geometry = sim.experiment_geometry(config, seed)
    run = run_learner(config, geometry, sim.table_rng(seed, "learned"), args.max_draws, tau=args.tau,
                      init_samples=args.mc_samples)
    if args.out is None:
        sys.stdout.write(table_to_text(run.state.table, t=run.state.t))
    else:
        save_table(run.state.table, args.out, t=run.state.t)
    state = "converged" if run.converged else "draw budget exhausted"
    print(f"learn: {run.state.t} observations, last delta {run.state.last_delta:.6g} ({state})",
          file=sys.stderr)


def cmd_bounds(config, args, seed):
    geometry = sim.experiment_geometry(config, seed)
    n_max = args.n_max
    if n_max is None:
        n_max = poisson_truncation(config.request_rate, config.lifetime, config.tail_epsilon)
    exact, table = tiny_instance(config, geometry, args.mc_samples, sim.table_rng(seed, "exact"), n_max)
    overlap = geometry.overlap_detected
    rows = []
    for idx in range(1 << (geometry.n_caches * config.segments)):
        state = ReducedState.from_index(idx, geometry.n_caches, config.segments)
        for m in range(1, n_max + 1):
            b = value_bounds(state, m, table, overlap)
            rows.append([config.config_hash(), seed, state.label(), m, _fmt(b.lower),
                         _fmt(exact.value(state, m)), _fmt(b.upper), int(b.certified)])
    _emit(_csv(BOUNDS_COLUMNS, rows), args.out)


COMMANDS = {"table": cmd_table, "simulate": cmd_simulate, "sweep": cmd_sweep, "learn": cmd_learn,
            "bounds": cmd_bounds}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        try:
            config = load_scenario(args.config)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config!r}: {exc.strerror}") from None
        seed = config.seed if args.seed is None else args.seed
        if args.seed is not None:
            config = config.replace(seed=seed)
        COMMANDS[args.command](config, args, seed)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (ConfigError, ValueError) as exc:
        print(f"cachesched: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"cachesched: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

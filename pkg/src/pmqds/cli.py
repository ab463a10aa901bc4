"""Command-line entry point: ``pmqds {simulate,security,optimize,sweep}``.

Every command prints plain ``key=value`` lines (or CSV for ``sweep``) and is
deterministic for a fixed configuration and seed.

Exit codes: 0 success, 2 protocol abort or rejection, 3 security targets not
met (infeasible or vacuous), 4 configuration error.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import fields
from pathlib import Path

from .channel import expected_pair_counts, expected_pair_observation
from .domain import LABELS, ChannelModel, DecoyCounts, PairObservation, ProtocolParams, SecurityTargets
from .optimize import SearchConfig, optimize, sweep, sweep_csv
from .protocol import Transcript, run_protocol
from .security import CHERNOFF_BUDGET, VacuousEstimate, evaluate_security
from .textio import (
    ConfigError,
    counts_items,
    format_record,
    load_channel,
    load_params,
    load_targets,
    params_from_kv,
    params_items,
    parse_counts,
    read_kv,
)

EXIT_OK, EXIT_REJECT, EXIT_INFEASIBLE, EXIT_CONFIG = 0, 2, 3, 4
MC_CEILING = 10**7
SEED_LIMIT = 2**64

# rounded optimum at 25 km on the default channel
DEFAULT_PARAMS = ProtocolParams(mu=0.334, nu=0.093, p_mu=0.648, p_nu=0.274, t=0.319, N=10**6, T_a=0.005, T_v=0.031)


def _seed(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v < SEED_LIMIT:
        raise argparse.ArgumentTypeError(f"seed must lie in [0, 2**64), got {v}")
    return v


def _pulses(text: str) -> int:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"pulse count must be a number, got {text!r}") from None
    if not math.isfinite(v) or v < 1 or v != int(v):
        raise argparse.ArgumentTypeError(f"pulse count must be a positive integer, got {text!r}")
    return int(v)


def _distance(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"distance must be a number, got {text!r}") from None
    if not math.isfinite(v) or v < 0:
        raise argparse.ArgumentTypeError(f"distance must be finite and non-negative, got {text!r}")
    return v


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` with ``stop`` included, e.g. ``0:200:10``."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"--grid: expected start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"--grid: non-numeric entry in {text!r}") from None
    if step <= 0 or start < 0 or not all(map(math.isfinite, (start, stop, step))):
        raise ConfigError(f"--grid: need start >= 0 and step > 0, got {text!r}")
    if stop < start:
        raise ConfigError(f"--grid: empty grid {text!r}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(n)]


def _channel(args) -> ChannelModel:
    ch = load_channel(args.channel)
    if args.distance is not None:
        ch = ch.at_distance(args.distance)
    return ch


def _params(args) -> ProtocolParams:
    p = load_params(args.params, DEFAULT_PARAMS)
    if getattr(args, "pulses", None) is not None:
        p = p.with_N(args.pulses)
    return p


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def transcript_items(tr: Transcript) -> list[tuple[str, object]]:
    items: list[tuple[str, object]] = [("seed", tr.seed), ("authenticator", tr.authenticator)]
    items += params_items(tr.params)
    for msg in tr.messages:
        pre = f"m{msg.m}."
        items += [(f"{pre}matched.{lab.value}", msg.matched[lab]) for lab in LABELS]
        pair = msg.estimation.pair if msg.estimation else None
        items += counts_items(msg.counts, pair, prefix=pre)
        for who in ("B", "C"):
            t = msg.counts.of(who)[LABELS[0]]
            items.append((f"{pre}{who}.mu.conclusive_fraction", t.n_c / t.n if t.n else math.nan))
        if msg.estimation:
            e = msg.estimation
            items += [(f"{pre}E_B_ct", e.E_B_ct), (f"{pre}E_C_ct", e.E_C_ct),
                      (f"{pre}P_B_c", e.P_B_c), (f"{pre}P_C_c", e.P_C_c)]
        if msg.verdict:
            v = msg.verdict
            items += [(f"{pre}E_B_cu", v.E_B_cu), (f"{pre}E_C_cu", v.E_C_cu),
                      (f"{pre}bob_accepts", v.bob_accepts), (f"{pre}charlie_accepts", v.charlie_accepts)]
        items += [(f"{pre}aborted", msg.aborted), (f"{pre}abort_reason", msg.abort_reason or "none"),
                  (f"{pre}signed", msg.signed)]
    items.append(("signed", tr.signed))
    return items


def report_items(report, targets: SecurityTargets, prefix: str = "report.") -> list[tuple[str, object]]:
    est = report.estimates
    items = [(f"{prefix}{f.name}", getattr(est, f.name)) for f in fields(est)]
    items.append((f"{prefix}chernoff_budget", CHERNOFF_BUDGET))
    items.append((f"{prefix}e11_upper", est.e11_upper))
    skip = {"estimates", "extras"}
    items += [(f"{prefix}{f.name}", getattr(report, f.name)) for f in fields(report) if f.name not in skip]
    items += [(f"{prefix}target.{f.name}", getattr(targets, f.name)) for f in fields(targets)]
    items.append((f"{prefix}meets_targets", report.meets(targets)))
    return items


def cmd_simulate(args) -> int:
    p = _params(args)
    if p.N > args.ceiling:
        raise ConfigError(f"--pulses {p.N} exceeds the Monte Carlo ceiling {args.ceiling}")
    tr = run_protocol(p, _channel(args), args.seed, authenticator=args.authenticator)
    _emit(format_record(transcript_items(tr)), args.out)
    return EXIT_OK if tr.signed else EXIT_REJECT


def _security_input(args) -> tuple[ProtocolParams, DecoyCounts, PairObservation, list]:
    """Counts from a file, from the analytic model, or from a fresh simulation."""
    if args.counts is not None:
        kv = read_kv(args.counts)
        prefix = "" if "B.mu.sent" in kv else f"m{args.message}."
        stored = {k[len("params."):]: v for k, v in kv.items() if k.startswith("params.")}
        base = DEFAULT_PARAMS
        if stored and args.params is None:
            base = params_from_kv(stored, str(args.counts), DEFAULT_PARAMS)
        p = load_params(args.params, base)
        counts, pair = parse_counts(kv, str(args.counts), prefix)
        if pair is None:
            pair = expected_pair_observation(counts, p.t)
        return p, counts, pair, []
    p = _params(args)
    ch = _channel(args)
    if args.analytic:
        counts = expected_pair_counts(p, ch)
        return p, counts, expected_pair_observation(counts, p.t), []
    if p.N > args.ceiling:
        raise ConfigError(f"--pulses {p.N} exceeds the Monte Carlo ceiling {args.ceiling}")
    tr = run_protocol(p, ch, args.seed)
    msg = tr.messages[args.message]
    if msg.estimation is None:
        return p, msg.counts, None, [("status", "ABORT"), ("abort_reason", msg.abort_reason)]
    return p, msg.counts, msg.estimation.pair, []


def cmd_security(args) -> int:
    targets = load_targets(args.targets)
    p, counts, pair, header = _security_input(args)
    if pair is None:
        _emit(format_record(header + params_items(p) + counts_items(counts)), args.out)
        return EXIT_REJECT
    items = header + params_items(p) + counts_items(counts, pair)
    try:
        report = evaluate_security(counts, p, pair, targets)
    except VacuousEstimate as exc:
        est = exc.estimates
        items += [(f"report.{f.name}", getattr(est, f.name)) for f in fields(est)]
        items.append(("status", "VACUOUS"))
        _emit(format_record(items), args.out)
        return EXIT_INFEASIBLE
    items += report_items(report, targets)
    ok = report.meets(targets)
    items.append(("status", "PASS" if ok else "INFEASIBLE"))
    _emit(format_record(items), args.out)
    return EXIT_OK if ok else EXIT_INFEASIBLE


def _search_config(args) -> SearchConfig:
    return SearchConfig(starts=args.starts, seed=args.seed, jobs=args.jobs)


def cmd_optimize(args) -> int:
    targets = load_targets(args.targets)
    ch = load_channel(args.channel)
    dist = args.distance if args.distance is not None else 50.0
    res = optimize(dist, ch, targets, _search_config(args), coincidence=args.baseline)
    items: list[tuple[str, object]] = [("dist_km", dist), ("protocol", "baseline" if args.baseline else "post-matching"),
                                       ("evaluations", res.evaluations), ("converged", res.converged)]
    if not res.feasible:
        items.append(("status", "INFEASIBLE"))
        _emit(format_record(items), args.out)
        return EXIT_INFEASIBLE
    items += [("N_min", res.N_min), ("R", res.R)]
    items += params_items(res.best_params)
    items += report_items(res.report, targets)
    items.append(("status", "PASS"))
    _emit(format_record(items), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    targets = load_targets(args.targets)
    ch = load_channel(args.channel)
    grid = parse_grid(args.grid)
    rows = sweep(grid, ch, targets, _search_config(args))
    _emit(sweep_csv(rows), args.out)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors, so they share exit code 4."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pmqds", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    common = _Parser(add_help=False)
    common.add_argument("--channel", type=Path, help="key=value file overriding channel defaults")
    common.add_argument("--targets", type=Path, help="key=value file overriding security targets")
    common.add_argument("--seed", type=_seed, default=1)
    common.add_argument("--out", type=Path, help="write output here instead of stdout")

    run = _Parser(add_help=False)
    run.add_argument("--params", type=Path, help="key=value file overriding protocol parameters")
    run.add_argument("--distance", type=_distance, help="fiber length to each receiver in km")
    run.add_argument("--pulses", type=_pulses, help="pulses per message N")
    run.add_argument("--ceiling", type=_pulses, default=MC_CEILING, help="Monte Carlo pulse ceiling")

    s = sub.add_parser("simulate", parents=[common, run], help="one seeded end-to-end protocol run")
    s.add_argument("--authenticator", choices=("B", "C"), default="B")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("security", parents=[common, run], help="security report for one set of counts")
    src = s.add_mutually_exclusive_group()
    src.add_argument("--counts", type=Path, help="counts file as written by simulate or security")
    src.add_argument("--analytic", action="store_true", help="use expected counts instead of a simulation")
    s.add_argument("--message", type=int, choices=(0, 1), default=0)
    s.set_defaults(func=cmd_security)

    search = _Parser(add_help=False)
    search.add_argument("--starts", type=int, default=SearchConfig.starts)
    search.add_argument("--jobs", type=int, default=1)

    s = sub.add_parser("optimize", parents=[common, search], help="minimum N at one distance")
    s.add_argument("--distance", type=_distance)
    s.add_argument("--baseline", action="store_true", help="coincidence-detection protocol instead")
    s.set_defaults(func=cmd_optimize)

    s = sub.add_parser("sweep", parents=[common, search], help="optimised N versus distance as CSV")
    s.add_argument("--grid", default="0:200:10", help="start:stop:step in km (stop included)")
    s.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"pmqds: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"pmqds: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

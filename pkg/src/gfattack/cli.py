"""Command-line entry point: ``gfattack {attack,compare,spectrum,synth}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import DataError, GFAttackError
from .experiment import (DELTA_HEADER, SPECTRUM_HEADER, SWEEP_HEADER, Experiment, RunConfig, compare,
                         spectrum_rows, write_csv)
from .graph import largest_connected_component, load_dataset, write_graph
from .report import write_reports

log = logging.getLogger("gfattack")


def _csv_list(cast):
    def parse(s):
        return [cast(x) for x in s.split(",") if x]
    return parse


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML run configuration; flags override it")
    p.add_argument("--dataset", help="dataset directory or .npz file")
    p.add_argument("--K", type=int, help="filter order of the attack loss")
    p.add_argument("--tail-size", type=int, dest="tail_size", help="n - T, eigenpairs in the loss tail")
    p.add_argument("--family", choices=["symmetric", "random_walk"])
    p.add_argument("--no-lcc", dest="lcc", action="store_const", const=False)
    p.add_argument("--raw-features", dest="normalize_features", action="store_const", const=False)
    p.add_argument("--workers", type=int)


def _add_attack_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--budget", type=int)
    p.add_argument("--n-targets", type=int, dest="n_targets")
    p.add_argument("--split-seed", type=int, dest="split_seed")
    p.add_argument("--model-seed", type=int, dest="model_seed")
    p.add_argument("--target-seed", type=int, dest="target_seed")
    p.add_argument("--random-seeds", type=_csv_list(int), dest="random_seeds")
    p.add_argument("--greedy", action="store_const", const=True,
                   help="re-decompose and rescore after every selected flip")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gfattack", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attack", help="attack sampled targets and write a report")
    _add_common(p)
    _add_attack_args(p)
    p.add_argument("--model", choices=["gcn", "sgc", "deepwalk", "line"])
    p.add_argument("--method", choices=["gf_attack", "random", "degree"])
    p.add_argument("--seed", type=int, default=None, help="seed for the random baseline (default: all random_seeds)")
    p.add_argument("--out", required=True, help="report path (JSON)")

    p = sub.add_parser("compare", help="methods x models delta table and budget sweep")
    _add_common(p)
    _add_attack_args(p)
    p.add_argument("--models", type=_csv_list(str))
    p.add_argument("--methods", type=_csv_list(str))
    p.add_argument("--budgets", type=_csv_list(int))
    p.add_argument("--out-dir", required=True, dest="out_dir")

    p = sub.add_parser("spectrum", help="eigenvalues, filter responses and signal energies as CSV")
    _add_common(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="write a synthetic citation-like dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=2500)
    p.add_argument("--seed", type=int, default=0)
    return parser


_NON_CONFIG = {"command", "verbose", "config", "out", "out_dir", "seed"}


def _config(args) -> RunConfig:
    overrides = {k: v for k, v in vars(args).items() if k not in _NON_CONFIG}
    return RunConfig.load(args.config, **overrides)


def cmd_attack(args) -> int:
    cfg = _config(args)
    exp = Experiment(cfg)
    if args.seed is not None:
        reports = [exp.run(cfg.model, cfg.method, cfg.budget, args.seed)]
    else:
        reports = exp.run_averaged(cfg.model, cfg.method, cfg.budget)
    path = write_reports(reports, args.out)
    for r in reports:
        a = r.aggregates
        print(f"{r.model} {r.method} seed={r.config['seed']}: target accuracy "
              f"{a['clean_accuracy']:.4f} -> {a['attacked_accuracy']:.4f} (delta {100 * a['delta']:+.2f} pts)")
    print(f"report written to {path}")
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args)
    exp = Experiment(cfg)
    table, sweep, reports = compare(exp)
    out = Path(args.out_dir)
    write_csv(out / "deltas.csv", ["method", *cfg.models] if cfg.models else DELTA_HEADER, table)
    write_csv(out / "beta_sweep.csv", SWEEP_HEADER, sweep)
    write_reports(reports, out / "reports.json")
    for row in table:
        print(row["method"].ljust(10), "  ".join(f"{m}={row[m]:+.2f}" for m in cfg.models))
    print(f"tables written to {out}")
    return 0


def cmd_spectrum(args) -> int:
    overrides = {k: v for k, v in vars(args).items() if k not in _NON_CONFIG}
    cfg = RunConfig.load(args.config, **overrides)
    g = load_dataset(cfg.dataset, cfg.normalize_features)
    if cfg.lcc:
        g = largest_connected_component(g)
    family = cfg.family or "symmetric"
    rows = spectrum_rows(g, family, cfg.K, cfg.tail_size)
    write_csv(args.out, SPECTRUM_HEADER, rows)
    print(f"{len(rows)} eigenpairs written to {args.out}")
    return 0


def cmd_synth(args) -> int:
    from .synthetic import citation_like

    g = citation_like(n=args.n, seed=args.seed)
    write_graph(g, args.out)
    print(f"wrote {g.n} vertices, {g.n_edges} edges to {args.out}")
    return 0


COMMANDS = {"attack": cmd_attack, "compare": cmd_compare, "spectrum": cmd_spectrum, "synth": cmd_synth}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except GFAttackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())

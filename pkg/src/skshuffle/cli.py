"""Command-line entry point: ``skshuffle <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from . import experiments as ex
from .config import ExperimentConfig, build_config, read_config_file, _int_list, _float_list

log = logging.getLogger("skshuffle")

SUBCOMMANDS = {
    "verify": "check identities, generator action and k=2 exactness on a grid",
    "spectrum": "exact gaps, lambda approximations and eigen-residuals",
    "mixing-exact": "exact TV mixing times for small N (full chain or projection)",
    "mixing-mc": "Monte Carlo TV bracket: statistic lower bound and coupling upper bound",
    "cutoff-sweep": "normalized mixing-time constant across N, with an asymptote fit",
    "no-precutoff": "mixing proxy for the plain variant at k=N^0.75 plus a boundary control",
    "decay": "decay of E[Phi] against the predicted eigenvalue",
    "trajectories": "sampled observables along individual runs",
}


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value configuration file (flags override it)")
    p.add_argument("--N", dest="Ns", type=_int_list, help="deck sizes, e.g. 64,128 or 4..8")
    p.add_argument("--k", dest="ks", type=_int_list, help="block sizes")
    p.add_argument("--j", dest="js", type=_int_list, help="mode indices (spectrum)")
    p.add_argument("--variant", choices=["plain", "with_boundaries", "unit_boundaries"])
    p.add_argument("--eps", type=_float_list, help="TV thresholds")
    p.add_argument("--delta", type=float, help="exponent for k = floor(N^delta) (no-precutoff)")
    p.add_argument("--K", type=int, help="number of marked labels for the exclusion projection")
    p.add_argument("--replicas", type=int)
    p.add_argument("--coupling-replicas", dest="coupling_replicas", type=int)
    p.add_argument("--seed", dest="master_seed", type=int,
                   help="master seed (default: $SKSHUFFLE_SEED or a fixed constant)")
    p.add_argument("--t-grid", dest="t_grid", help="start:stop:count or a comma list")
    p.add_argument("--t-units", dest="t_units", choices=["abs", "scale"])
    p.add_argument("--T", dest="T", type=float, help="horizon; samples 11 equally spaced times in [0, T]")
    p.add_argument("--sample-times", dest="sample_times", help="comma list of absolute times")
    p.add_argument("--start", choices=["uniform", "reverse"],
                   help="start of the second coupled copy")
    p.add_argument("--literal-block-range", dest="literal_range", action="store_true",
                   default=None, help="bulk windows start at 1..N-k instead of 1..N-k+1")
    p.add_argument("--workers", type=int, help="worker threads (results do not depend on it)")
    p.add_argument("--max-events", dest="max_events", type=float,
                   help="refuse runs whose estimated event count exceeds this")
    p.add_argument("--force", action="store_true", default=None,
                   help="run even when the work estimate exceeds --max-events")
    p.add_argument("--out", dest="output", help="output CSV path (default: stdout)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skshuffle",
                                     description="Simulation and analysis of the S_k block shuffle.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, summary in SUBCOMMANDS.items():
        _add_common(sub.add_parser(name, help=summary))
    p = sub.add_parser("plotdata", help="turn a results CSV into plot-ready CSV")
    p.add_argument("--kind", required=True, choices=list(ex.PLOT_KINDS))
    p.add_argument("--input", required=True, help="results CSV from mixing-mc, decay or cutoff-sweep")
    p.add_argument("--out", dest="output")
    p = sub.add_parser("reproduce", help="rerun the point configuration behind a CSV row")
    p.add_argument("--configs", required=True, help="the .configs.json sidecar of a results CSV")
    p.add_argument("--hash", dest="config_hash", required=True)
    p.add_argument("--seed", dest="master_seed", type=int, required=True)
    p.add_argument("--out", dest="output")
    return parser


_CONFIG_KEYS = ("Ns", "ks", "js", "variant", "eps", "delta", "K", "replicas", "coupling_replicas",
                "master_seed", "t_grid", "t_units", "T", "sample_times", "start", "literal_range",
                "workers",
                "max_events", "force", "output")


def config_from_args(args) -> ExperimentConfig:
    file_values = read_config_file(args.config) if args.config else {}
    flags = {key: getattr(args, key, None) for key in _CONFIG_KEYS}
    if args.command == "verify":
        file_values.setdefault("Ns", list(range(4, 9)))
        file_values.setdefault("ks", [2, 3])
    return build_config(args.command, file_values, flags)


def _emit(text: str, output: str | None):
    if output:
        Path(output).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)


def _run_verify(cfg: ExperimentConfig) -> int:
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        results = ex.run_verify(cfg)
    lines = [f"# seed={cfg.master_seed} seed_source={cfg.seed_source} "
             f"literal_range={int(cfg.literal_range)}"]
    for w in caught:
        lines.append(f"WARNING {w.message}")
    lines.extend(r.line() for r in results)
    failed = [r for r in results if not r.passed]
    lines.append(f"SUMMARY {len(results) - len(failed)}/{len(results)} passed")
    _emit("\n".join(lines) + "\n", cfg.output)
    return 1 if failed else 0


def _run_experiment(cfg: ExperimentConfig) -> int:
    try:
        rows = ex.run(cfg)
    except ex.WorkTooLarge as exc:
        log.error("%s", exc)
        return 3
    text = ex.rows_to_csv(rows, ex.header_for(cfg.experiment))
    _emit(text, cfg.output)
    if cfg.output:
        ex.write_config_sidecar(cfg, rows, cfg.output + ".configs.json")
    log.info("seed=%d (%s) config_hash=%s", cfg.master_seed, cfg.seed_source, cfg.config_hash())
    return 0


def _run_reproduce(args) -> int:
    records = json.loads(Path(args.configs).read_text(encoding="utf-8"))
    if args.config_hash not in records:
        log.error("hash %s not found in %s", args.config_hash, args.configs)
        return 2
    rec = dict(records[args.config_hash])
    rec["master_seed"] = args.master_seed
    cfg = ExperimentConfig.from_record(rec)
    rows = [r for r in ex.run(cfg) if r.get("config_hash") == args.config_hash]
    _emit(ex.rows_to_csv(rows, ex.header_for(cfg.experiment)), args.output)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.command == "plotdata":
        text = ex.emit_plotdata(ex.read_csv(args.input), args.kind)
        _emit(text, args.output)
        return 0
    if args.command == "reproduce":
        return _run_reproduce(args)
    try:
        cfg = config_from_args(args)
    except ValueError as exc:
        parser.error(str(exc))
    if cfg.experiment == "verify":
        return _run_verify(cfg)
    return _run_experiment(cfg)


if __name__ == "__main__":
    sys.exit(main())

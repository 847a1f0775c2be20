"""Command line entry point: ``hallpump SUBCOMMAND --config PATH [options]``.

Subcommands
    run              full pipeline (or one stage and its prerequisites with --stage)
    sweep-eps        parallel transport plus the driven epsilon sweep
    index            index suite
    lr-cone          Lieb-Robinson cone scan
    oracle           print the Chern integer of the filled bands
    validate-config  parse and check the config, print the normalised form

Heavy modules are imported after the thread count is fixed, so that
``--threads`` also bounds the BLAS pool of every worker.
"""

from __future__ import annotations

import argparse
import os
import sys

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")
_SUBSTAGE = {"sweep-eps": "sweep", "index": "index", "lr-cone": "lr"}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hallpump", description="Quantum Hall charge pump on a finite torus.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run the pipeline"), ("sweep-eps", "driven epsilon sweep"),
                       ("index", "index suite"), ("lr-cone", "Lieb-Robinson cone scan"),
                       ("oracle", "print the Chern integer"), ("validate-config", "check a config file")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", metavar="PATH", help="config file (default: built-in defaults)")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--threads", type=int, metavar="N", help="worker processes")
        p.add_argument("--seed", type=int, metavar="S", help="random seed")
        if name == "run":
            p.add_argument("--stage", metavar="NAME", help="run one stage with its prerequisites")
    return ap


def _load(args):
    from .config import ExperimentConfig, load_config

    cfg = load_config(args.config) if args.config else ExperimentConfig()
    run = {}
    if args.out is not None:
        run["out"] = args.out
    if args.threads is not None:
        run["threads"] = args.threads
    if args.seed is not None:
        run["seed"] = args.seed
    if run:
        cfg = cfg.replace("run", **run)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    # one BLAS thread per worker when the sweep fans out over processes
    if (args.threads or 1) > 1:
        for var in _THREAD_VARS:
            os.environ.setdefault(var, "1")
    from .config import ConfigError

    try:
        cfg = _load(args)
    except (ConfigError, OSError) as exc:
        print(f"hallpump: config error: {exc}", file=sys.stderr)
        return 2
    if args.command == "validate-config":
        sys.stdout.write(cfg.dumps())
        return 0
    if args.command == "oracle":
        from .pipeline import oracle_integer

        try:
            print(oracle_integer(cfg))
        except ValueError as exc:
            print(f"hallpump: {exc}", file=sys.stderr)
            return 1
        return 0
    from .pipeline import run_experiment

    stage = getattr(args, "stage", None) or _SUBSTAGE.get(args.command)
    if stage == "lr" and not cfg.lrdiag.enabled:
        cfg = cfg.replace("lrdiag", enabled=True)
    if stage is not None and stage not in ("validate", "gap", "parallel", "sweep", "index", "proposition", "lr"):
        print(f"hallpump: unknown stage {stage!r}", file=sys.stderr)
        return 2
    log = lambda msg: print(msg, file=sys.stderr, flush=True)
    summary = run_experiment(cfg, stage=stage, log=log)
    for c in summary["checks"]:
        rel = c["relation"]
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}: {c['value']} {rel} {c['threshold']}")
    for s in summary["stages"]:
        if s["status"] != "ok":
            print(f"STAGE {s['name']} {s['status']}: {s.get('diagnostic', '')}")
    return 0 if summary["ok"] else 1


if __name__ == "__main__":
    sys.exit(main())

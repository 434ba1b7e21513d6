"""Command-line entry point: ``evosynth {train-ancestor,evolve,overlap,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import harness
from .architecture import load_architecture, save_architecture
from .errors import EvosynthError, StageError
from .similarity import percent_overlap

logger = logging.getLogger("evosynth")


def _config_from_args(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    return cfg.with_overrides(
        alignment=getattr(args, "alignment", None),
        generations=getattr(args, "generations", None),
        population_size=getattr(args, "population", None),
        m=getattr(args, "parents", None),
        r_cluster=getattr(args, "r_cluster", None),
        r_synapse=getattr(args, "r_synapse", None),
        master_seed=args.seed,
        data_dir=args.data_dir,
        output_dir=args.out,
        train_limit=args.train_limit,
        epochs=args.epochs,
    )


def cmd_train_ancestor(args) -> int:
    cfg = _config_from_args(args)
    data = harness.load_datasets(cfg)
    ancestor = harness.train_ancestor(cfg, data)
    record = harness.ancestor_record(ancestor, data)
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, "ancestor.json")
    save_architecture(ancestor, path)
    print(f"{path}\taccuracy={record.networks[0].accuracy:.6f}")
    return 0


def cmd_evolve(args) -> int:
    cfg = _config_from_args(args)
    if args.save_networks:
        cfg = cfg.with_overrides(save_networks=True)
    ancestor = None
    if args.ancestor:
        try:
            ancestor = load_architecture(args.ancestor)
        except (OSError, EvosynthError) as exc:
            raise StageError("load_ancestor", exc) from exc
    records = harness.run_experiment(cfg, ancestor=ancestor)
    for r in records[1:]:
        print(f"{r.generation},{harness._fmt(r.generation_average_overlap)}")
    return 0


def cmd_overlap(args) -> int:
    try:
        a = load_architecture(args.a)
        b = load_architecture(args.b)
    except (OSError, EvosynthError) as exc:
        raise StageError("load_architecture", exc) from exc
    try:
        print(f"{percent_overlap(a, b):.6f}")
    except EvosynthError as exc:
        raise StageError("percent_overlap", exc) from exc
    return 0


def cmd_report(args) -> int:
    try:
        records = harness.load_records(args.records)
    except (OSError, ValueError, KeyError) as exc:
        raise StageError("load_records", exc) from exc
    manifest = None
    if args.manifest:
        with open(args.manifest) as fh:
            manifest = json.load(fh)
    written = harness.emit_reports(records, args.out, manifest=manifest)
    for path in written.values():
        print(path)
    return 0


def _add_run_flags(p, evolution=True):
    p.add_argument("--config", help="experiment config (or manifest) JSON")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--data-dir", help="directory holding the MNIST IDX files")
    p.add_argument("--out", help="output directory")
    p.add_argument("--train-limit", type=int, help="train on the first N examples only")
    p.add_argument("--epochs", type=int)
    if evolution:
        p.add_argument("--alignment", choices=["tagged", "positional"])
        p.add_argument("--generations", type=int)
        p.add_argument("--population", type=int)
        p.add_argument("--parents", type=int, help="parents per offspring (m)")
        p.add_argument("--r-cluster", type=float)
        p.add_argument("--r-synapse", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evosynth", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-ancestor", help="train the dense generation-0 network")
    _add_run_flags(p, evolution=False)
    p.set_defaults(func=cmd_train_ancestor)

    p = sub.add_parser("evolve", help="run a full multi-generation experiment")
    _add_run_flags(p)
    p.add_argument("--ancestor", help="reuse a trained ancestor architecture file")
    p.add_argument("--save-networks", action="store_true",
                   help="write every network as an architecture file")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("overlap", help="percentage overlap of two architecture files")
    p.add_argument("a")
    p.add_argument("b")
    p.set_defaults(func=cmd_overlap)

    p = sub.add_parser("report", help="rewrite CSV reports from a records file")
    p.add_argument("--records", required=True)
    p.add_argument("--manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except StageError as exc:
        print(f"evosynth: error: {exc}", file=sys.stderr)
        return 1
    except (EvosynthError, ValueError, OSError) as exc:
        print(f"evosynth: error: stage '{args.command}' failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

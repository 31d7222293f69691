"""Command line entry point.

    dsa run    <scenario.cfg> [--out DIR] [--seeds N] [--snapshot-every S] [--dump-wire PATH]
    dsa sweep  <scenario.cfg> [--out DIR] [--seeds N] [--threads N] ...
    dsa replay <scenario.cfg> --seed S [--out DIR] [--snapshot-every S] [--dump-wire PATH]

``run`` takes a single-cell config; ``sweep`` expands comma-separated values
into a grid. ``replay`` re-runs one seed of every cell, by default with 1 s
snapshots. Failures print one ``ERROR {json}`` line on stderr and exit
nonzero (2 for bad input, 1 otherwise).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .harness import ConfigError, Scenario, error_line, run_scenario


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(error_line("usage", message), file=sys.stderr)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dsa", description="Shared-reference-frame swarm simulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seeds_default=50):
        sp.add_argument("config", type=Path, help="flat key = value scenario file")
        sp.add_argument("--out", type=Path, default=Path("out"), help="output directory (default: out)")
        sp.add_argument("--snapshot-every", type=float, default=None, metavar="S",
                        help="write frame CSVs every S simulated seconds")
        sp.add_argument("--dump-wire", default=None, metavar="PATH",
                        help="append every encoded message to PATH (one file per run)")
        sp.add_argument("--threads", type=int, default=1, metavar="N",
                        help="worker processes over (cell, seed) pairs")
        if seeds_default is not None:
            sp.add_argument("--seeds", type=int, default=seeds_default, metavar="N",
                            help=f"seeds per cell (default: {seeds_default})")

    common(sub.add_parser("run", help="run a single-cell scenario"))
    common(sub.add_parser("sweep", help="run every cell of a parameter grid"))
    rp = sub.add_parser("replay", help="re-run one seed with snapshots")
    common(rp, seeds_default=None)
    rp.add_argument("--seed", type=int, required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if getattr(args, "seeds", 1) < 1:
            raise ConfigError("--seeds must be >= 1")
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.snapshot_every is not None and not args.snapshot_every > 0:
            raise ConfigError("--snapshot-every must be positive")
        try:
            text = args.config.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read {args.config}: {e.strerror}") from None
        scenario = Scenario.from_text(text, seeds=getattr(args, "seeds", 1))
        if args.command == "run" and len(scenario.cells) > 1:
            raise ConfigError(f"config defines a grid of {len(scenario.cells)} cells; use 'sweep'")
        only_seed = None
        snapshot = args.snapshot_every
        if args.command == "replay":
            only_seed = args.seed
            snapshot = 1.0 if snapshot is None else snapshot
        return run_scenario(scenario, args.out, threads=args.threads, snapshot_every=snapshot,
                            dump_wire=args.dump_wire, only_seed=only_seed)
    except ConfigError as e:
        print(error_line("config", str(e)), file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - surface anything else as a machine-readable line
        print(error_line(type(e).__name__, str(e)), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

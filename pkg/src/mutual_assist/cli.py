"""Command line entry point: ``mutual-assist simulate`` and ``mutual-assist sweep``.

Exit codes: 0 success, 1 validation or parse error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .config import default_config_path, load_config
from .harness import DEFAULT_P_D, SweepSpec, run_single, run_sweep, write_sweep
from .model import ValidationError

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


def parse_floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def parse_seeds(text: str) -> list[int]:
    """``"0,3,7"`` or inclusive ranges like ``"0-19"``, freely mixed."""
    seeds = []
    try:
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            lo, sep, hi = part.partition("-")
            if sep and lo:
                seeds.extend(range(int(lo), int(hi) + 1))
            else:
                seeds.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    return seeds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mutual-assist", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="one run; snapshot CSV plus summary")
    sim.add_argument("--config", default=None, help="parameter file (default: packaged calibration)")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--steps", type=int)
    sim.add_argument("--record-every", type=int)
    sim.add_argument("--out", required=True)

    sw = sub.add_parser("sweep", help="participant-rate sweep over seeds")
    sw.add_argument("--config", default=None, help="parameter file (default: packaged calibration)")
    sw.add_argument("--p-d", type=parse_floats, default=list(DEFAULT_P_D))
    sw.add_argument("--seeds", type=parse_seeds, default=list(range(20)))
    sw.add_argument("--steps", type=int)
    sw.add_argument("--workers", type=int, default=1)
    sw.add_argument("--out", required=True)
    sw.add_argument("--plot-out", default=None, help="directory for failures.tsv and latency.tsv")
    return parser


def _overrides(args) -> dict:
    out = {}
    for name in ("seed", "steps", "record_every"):
        value = getattr(args, name, None)
        if value is not None:
            out[name] = value
    return out


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        params = load_config(args.config or default_config_path())
        params = replace(params, **_overrides(args)).validate()
        if args.command == "simulate":
            summary, _ = run_single(params, args.out)
            print(summary.format())
        else:
            rows = run_sweep(params, SweepSpec(tuple(args.p_d), tuple(args.seeds)), workers=args.workers)
            write_sweep(rows, args.out, args.plot_out)
            print(f"{len(rows)} runs written to {args.out}")
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

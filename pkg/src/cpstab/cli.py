"""Command-line interface: check / relax / pulse / scan subcommands."""

from __future__ import annotations

import argparse
import sys
import time

from .errors import ConfigurationError
from .runner import parse_config, run


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpstab",
        description="3D hydrogen atom in a circularly polarized laser pulse",
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode, text in (
        ("check", "report k_max, Nyquist margin, U_p, quiver radius per field"),
        ("relax", "imaginary-time ground state on the configured grid"),
        ("pulse", "single pulse run at peak_field"),
        ("scan", "pulse runs over scan_fields"),
    ):
        p = sub.add_parser(mode, help=text)
        p.add_argument("--config", metavar="PATH", help="key=value config file")
        p.add_argument("--out", metavar="DIR", help="output directory override")
        p.add_argument("--force", action="store_true",
                       help="run even if the resolution check fails")
        p.add_argument("--quiet", action="store_true",
                       help="suppress the step progress counter")
    return parser


class _Progress:
    """Step counter on stderr, refreshed a few times per second."""

    def __init__(self):
        self._last = 0.0

    def __call__(self, step: int, n_steps: int):
        now = time.monotonic()
        if step == n_steps or now - self._last > 2.0:
            self._last = now
            print(f"  step {step}/{n_steps}", file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    text = ""
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            print(f"cannot read config {args.config}: {exc}", file=sys.stderr)
            return 3
    try:
        config = parse_config(
            text,
            mode=args.mode,
            out_dir=args.out,
            force=True if args.force else None,
        )
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    progress = None if args.quiet else _Progress()
    return run(config, progress=progress)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Export CLI: ``export-bundle`` and ``export-fixture`` subcommands."""

from __future__ import annotations

import argparse
import logging
import sys

from . import ExportError
from .densenet import DEFAULT_TAP_INDICES, INPUT_SHAPE, TOTAL_CONVS, build_densenet161, make_tap_manifest, walk
from .fixture import export_fixture
from .writer import write_bundle

logger = logging.getLogger(__name__)


def export_bundle(out_dir: str, taps=DEFAULT_TAP_INDICES, init: str = "pretrained", seed: int = 0):
    model = build_densenet161(init=init, seed=seed)
    build = walk(model)
    manifest = make_tap_manifest(build, taps)
    path = write_bundle(
        out_dir, build.nodes, manifest, build.tensors, INPUT_SHAPE, conv_count=TOTAL_CONVS
    )
    logger.info("wrote bundle with %d nodes, %d taps to %s", len(build.nodes), len(manifest), path)
    return path


def _parse_taps(text: str):
    return tuple(int(part) for part in text.split(",") if part.strip())


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = argparse.ArgumentParser(prog="model-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-bundle", help="export DenseNet-161 as an inference bundle")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--taps", help=f"12 comma-separated conv indices (default {DEFAULT_TAP_INDICES})")
    p.add_argument(
        "--init", choices=("pretrained", "random"), default="pretrained",
        help="'pretrained' downloads zoo weights; 'random' is seeded (structure tests)",
    )
    p.add_argument("--seed", type=int, default=0, help="seed for --init random")

    p = sub.add_parser("export-fixture", help="export the tiny random-weight test bundle")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)
    try:
        if args.command == "export-bundle":
            taps = _parse_taps(args.taps) if args.taps else DEFAULT_TAP_INDICES
            export_bundle(args.out, taps=taps, init=args.init, seed=args.seed)
        else:
            export_fixture(args.out, seed=args.seed)
            logger.info("wrote fixture bundle to %s", args.out)
    except ExportError as exc:
        logger.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Operator entry point: run pipeline stages, audit cells, serve the API.

Every command is re-runnable: outputs are pure functions of the inputs on
disk plus the config, all writes are write-then-rename, and failures exit
nonzero (2 validation, 3 gateway, 4 data integrity).
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import __version__
from .config import RunConfig, load_config, validate_config
from .corpus import condition_sizes
from .errors import CloudError, ValidationError
from .salience import SCALING_MODES
from .workflows import (
    apply_audit,
    atomic_write,
    condition_cloud_svg,
    diff_cloud_svg,
    frequency_cloud_svg,
    open_corpus,
    resolve_run,
    run_elicit,
    run_map,
)

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="conceptcloud",
        description="Participant-weighted thematic word clouds from interview transcripts.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", required=True, help="path to the run config JSON")
    parser.add_argument("--run-id", default=None, help="run directory name (default: latest)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("conditions", help="list conditions with transcript counts")

    p = sub.add_parser("elicit", help="propose the concept vocabulary for a condition")
    p.add_argument("--condition", required=True)
    p.add_argument("--n", type=int, default=None, help="number of concepts (default from config)")
    p.add_argument("--new-run", action="store_true", help="start a fresh run directory")

    p = sub.add_parser("map", help="judge every transcript against the vocabulary")
    p.add_argument("--condition", required=True)
    p.add_argument("--mode", choices=("binary", "soft"), default=None)
    p.add_argument("--tau", type=float, default=None)

    p = sub.add_parser("cloud", help="render the participant-weighted cloud")
    p.add_argument("--condition", required=True)
    p.add_argument("--scale", choices=SCALING_MODES, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--force", action="store_true", help="render despite stale/incomplete tables")

    p = sub.add_parser("diff", help="render a two-condition contrast cloud")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--margin", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--separate", action="store_true",
                   help="two-panel rendering instead of color-mixed")

    p = sub.add_parser("freq", help="render the frequency-baseline cloud")
    p.add_argument("--condition", required=True)
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("audit", help="correct one assignment cell")
    p.add_argument("--condition", required=True)
    p.add_argument("--transcript", required=True)
    p.add_argument("--concept", required=True)
    p.add_argument("--value", type=int, choices=(0, 1), required=True)
    p.add_argument("--note", default="")

    p = sub.add_parser("serve", help="serve the HTTP API for the audit UI")
    p.add_argument("--bind", default="127.0.0.1:8000")
    p.add_argument("--ui", default=None, help="directory of built UI assets to serve at /")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = validate_config(load_config(args.config))
        return _dispatch(args, config)
    except CloudError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


def _dispatch(args: argparse.Namespace, config: RunConfig) -> int:
    if args.command == "conditions":
        corpus = open_corpus(config)
        for condition, size in condition_sizes(corpus).items():
            print(f"{condition}\t{size}")
        return 0

    if args.command == "elicit":
        if args.n is not None and args.n < 1:
            raise ValidationError("--n must be >= 1")
        paths = resolve_run(config, args.run_id, allow_create=True, new_run=args.new_run)
        vocab = run_elicit(config, args.condition, paths, n=args.n)
        print(f"run: {paths.run_id}")
        print(f"vocabulary: {paths.vocab_file(args.condition)} ({len(vocab)} concepts)")
        for phrase in vocab:
            marker = " [pinned]" if phrase.pinned else ""
            print(f"- {phrase.text}{marker}")
        return 0

    paths = resolve_run(config, args.run_id)

    if args.command == "map":
        table = run_map(config, args.condition, paths, mode=args.mode, tau=args.tau)
        print(f"table: {paths.table_file(args.condition)} "
              f"({len(table.rows)} rows x {len(table.concept_keys)} concepts)")
        if table.incomplete:
            print(f"warning: {len(table.incomplete)} incomplete row(s): "
                  f"{', '.join(table.incomplete)}", file=sys.stderr)
        return 0

    if args.command == "cloud":
        svg = condition_cloud_svg(
            config, paths, args.condition,
            scale=args.scale, seed=args.seed, top_k=args.top_k, force=args.force,
        )
        out = paths.cloud_file(args.condition)
        atomic_write(out, svg)
        print(f"cloud: {out}")
        return 0

    if args.command == "diff":
        svg = diff_cloud_svg(config, paths, args.a, args.b, margin=args.margin,
                             seed=args.seed, separate=args.separate)
        out = paths.diff_file(args.a, args.b)
        atomic_write(out, svg)
        print(f"diff cloud: {out}")
        return 0

    if args.command == "freq":
        svg = frequency_cloud_svg(config, args.condition, top_k=args.top_k, seed=args.seed)
        out = paths.freq_file(args.condition)
        atomic_write(out, svg)
        print(f"frequency cloud: {out}")
        return 0

    if args.command == "audit":
        table = apply_audit(
            paths, args.condition, args.transcript, args.concept, args.value, args.note
        )
        entry = table.journal[-1]
        print(
            f"corrected ({entry.transcript_id}, {entry.concept_key}): "
            f"{entry.old_value} -> {entry.new_value}"
        )
        return 0

    if args.command == "serve":
        import uvicorn

        from .api import create_app

        host, _, port = args.bind.partition(":")
        app = create_app(config, paths, ui_dir=args.ui)
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port or "8000"), log_level="info")
        return 0

    raise AssertionError(f"unhandled command {args.command}")  # pragma: no cover


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()

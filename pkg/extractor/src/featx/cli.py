"""Extractor command line: ``featx extract --manifest m.json ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import FeatxError
from .extract import ExtractionManifest, SkipReport, extract_image_features, extract_text_features


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(message)s")
    parser = argparse.ArgumentParser(prog="featx")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("extract", help="produce feature TSVs from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--text-out")
    p.add_argument("--image-out")
    p.add_argument("--skip-report", help="write skipped-entity JSON here")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if not args.text_out and not args.image_out:
        print("error: need --text-out and/or --image-out", file=sys.stderr)
        return 1
    try:
        manifest = ExtractionManifest.load(args.manifest)
        report = SkipReport()
        if args.text_out:
            extract_text_features(manifest, args.text_out, report)
        if args.image_out:
            extract_image_features(manifest, args.image_out, report)
    except FeatxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    summary = {
        "command": "extract",
        "text_out": args.text_out,
        "image_out": args.image_out,
        "entities": len(manifest.items),
    }
    summary.update(report.as_dict())
    text = json.dumps(summary, indent=2)
    print(text)
    if args.skip_report:
        with open(args.skip_report, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(report.as_dict(), indent=2) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())

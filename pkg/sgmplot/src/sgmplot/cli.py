"""Command line entry point: render a figure spec or a whole manifest."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .discover import render_manifest
from .figures import FigureSpec, SchemaError, parse_spec
from .render import render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sgmplot",
        description="Render CSV artifacts into PNG figures. The argument is "
        "either a figure spec JSON or a scenario manifest.json, in which case "
        "every renderable artifact gets its default figure.",
    )
    parser.add_argument("spec", help="figure spec JSON or scenario manifest.json")
    parser.add_argument(
        "--out-dir",
        default=None,
        help="directory for the rendered figures (default: next to the input file)",
    )
    args = parser.parse_args(argv)

    spec_path = Path(args.spec)
    try:
        doc = json.loads(spec_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"sgmplot: cannot read {spec_path}: {exc}", file=sys.stderr)
        return 2

    out_dir = Path(args.out_dir) if args.out_dir else spec_path.parent
    try:
        if isinstance(doc, dict) and "files" in doc and "kind" not in doc:
            written = render_manifest(spec_path, out_dir)
        else:
            spec = parse_spec(doc, spec_path.parent)
            if args.out_dir:
                spec = FigureSpec(
                    kind=spec.kind,
                    inputs=spec.inputs,
                    output=out_dir / spec.output.name,
                    overlay=spec.overlay,
                    styling=spec.styling,
                )
            written = [render(spec)]
    except (SchemaError, ValueError) as exc:
        print(f"sgmplot: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"sgmplot: {exc}", file=sys.stderr)
        return 3

    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())

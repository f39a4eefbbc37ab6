"""render-figures: turn robustmfc CSV outputs into static publication figures."""

from __future__ import annotations

import argparse
import os
import sys

from .render import FIGURE_IDS, FigureSpec, RenderError, discover_inputs, render


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="render-figures", description=__doc__)
    ap.add_argument("--in", dest="in_dir", required=True,
                    help="directory holding the solver's CSV outputs")
    ap.add_argument("--out", dest="out_dir", required=True,
                    help="directory for the rendered images")
    ap.add_argument("--which", choices=list(FIGURE_IDS), default=None,
                    help="render a single figure id (default: all six)")
    ap.add_argument("--format", choices=["png", "svg"], default="png")
    return ap


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if not exc.code else 2
    ids = [args.which] if args.which else list(FIGURE_IDS)
    try:
        os.makedirs(args.out_dir, exist_ok=True)
        for fid in ids:
            spec = FigureSpec(figure_id=fid,
                              inputs=discover_inputs(fid, args.in_dir),
                              output=os.path.join(args.out_dir, f"{fid}.{args.format}"))
            result = render(spec)
            print(f"wrote {result.output} ({result.n_panels} panels)")
        return 0
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        import traceback

        traceback.print_exc()
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

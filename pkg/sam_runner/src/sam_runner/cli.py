"""Command-line entry point: sam-runner --density ... --frame ... --prompts ... --out ..."""

from __future__ import annotations

import argparse
import logging
import sys

from .runner import DeviceUnavailable, MissingCheckpoint, RunnerConfig, run


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="sam-runner",
        description="Prompted segmentation of a density raster; writes mask "
                    "PNGs and manifest.json")
    ap.add_argument("--density", required=True, help="8-bit grayscale PNG")
    ap.add_argument("--frame", required=True, help="frame.json")
    ap.add_argument("--prompts", required=True, help="prompts.json")
    ap.add_argument("--out", required=True, help="output mask directory")
    ap.add_argument("--variant", default="vit_b",
                    choices=["vit_b", "vit_l", "vit_h"])
    ap.add_argument("--checkpoint", help="checkpoint path (otherwise resolved "
                    "from $SAM_RUNNER_CHECKPOINT_DIR and the variant)")
    ap.add_argument("--device", default="cpu")
    ap.add_argument("--single-mask", action="store_true",
                    help="disable multimask output")
    ap.add_argument("--stability", type=float, default=0.8,
                    help="minimum mask-quality score to emit")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    config = RunnerConfig(variant=args.variant, checkpoint=args.checkpoint,
                          device=args.device, multimask=not args.single_mask,
                          stability_cutoff=args.stability)
    try:
        run(args.density, args.frame, args.prompts, args.out, config)
    except (MissingCheckpoint, DeviceUnavailable) as exc:
        print(f"sam-runner: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError, KeyError) as exc:
        print(f"sam-runner: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

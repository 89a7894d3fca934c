"""Entry point: parse flags, then serve the protocol on stdio."""

from __future__ import annotations

import argparse
import sys

from .server import AdapterConfig, serve


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="gazeseg-adapter",
        description="Segmentation/depth model adapter speaking the exec wire protocol on stdio.",
    )
    parser.add_argument("--backend", choices=["test", "models"], default="test")
    parser.add_argument("--seg-model", default="efficientsam-ti")
    parser.add_argument("--depth-model", default="depth-anything/Depth-Anything-V2-Small-hf")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--mask-threshold", type=float, default=None,
                        help="Binarization threshold (default: model's own)")
    parser.add_argument("--depth-near-low", action="store_true",
                        help="Flip depth output from a near-low model to near-high")
    args = parser.parse_args(argv)

    cfg = AdapterConfig(
        backend=args.backend,
        seg_model=args.seg_model,
        depth_model=args.depth_model,
        device=args.device,
        mask_threshold=args.mask_threshold,
        depth_near_low=args.depth_near_low,
    )
    serve(cfg, sys.stdin.buffer, sys.stdout.buffer)
    return 0


if __name__ == "__main__":
    sys.exit(main())

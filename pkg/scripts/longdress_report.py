"""
Rate-distortion comparison on the longdress frame, when it is available:
I-RAGFT against I-RAHT around the 0.5 bpp operating point.
"""
import os
import sys
import logging
import argparse

import numpy as np

# Add project root to path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))
from core.codec import preset
from core.pcgeom import load_ply
from core.sweep import rd_sweep, write_csv, write_summary
from shared.config import (
    LONGDRESS_PATH, LONGDRESS_POINTS, LONGDRESS_TARGET_BPP, LONGDRESS_TARGET_PSNR,
    RESULTS_DIR, SWEEP_WORKERS, LOG_LEVEL, LOG_FORMAT
)

logger = logging.getLogger("Dataset")

REPORT_STEPS = (96.0, 64.0, 48.0, 32.0, 24.0, 16.0, 8.0)
PSNR_SLACK = 0.5


def psnr_at_rate(rows, bpp):
    rows = sorted(rows, key=lambda r: r.bpp)
    return float(np.interp(bpp, [r.bpp for r in rows], [r.psnr_y for r in rows]))


def compare(ragft_rows, raht_rows):
    """(bpp, I-RAGFT PSNR, I-RAHT PSNR at that bpp, gain) per I-RAGFT point inside I-RAHT's range."""
    lo = min(r.bpp for r in raht_rows)
    hi = max(r.bpp for r in raht_rows)
    out = []
    for row in sorted(ragft_rows, key=lambda r: r.bpp):
        if lo <= row.bpp <= hi:
            reference = psnr_at_rate(raht_rows, row.bpp)
            out.append((row.bpp, row.psnr_y, reference, row.psnr_y - reference))
    return out


def main():
    parser = argparse.ArgumentParser(description="longdress I-RAGFT vs I-RAHT report")
    parser.add_argument("--input", default=LONGDRESS_PATH)
    parser.add_argument("--workers", type=int, default=SWEEP_WORKERS)
    parser.add_argument("--out", default=os.path.join(RESULTS_DIR, "longdress_rd.csv"))
    args = parser.parse_args()

    logging.basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)
    if not os.path.exists(args.input):
        logger.warning(f"{args.input} not found; fetch it with scripts/fetch_dataset.py")
        return 0

    cloud = load_ply(args.input, depth=10)
    if cloud.n != LONGDRESS_POINTS:
        logger.warning(f"Expected {LONGDRESS_POINTS} points, found {cloud.n}")

    configs = [preset("I-RAGFT"), preset("I-RAHT")]
    rows = rd_sweep(cloud, configs, REPORT_STEPS, args.workers)
    write_csv(rows, args.out)
    write_summary(rows, os.path.splitext(args.out)[0] + ".json", meta={"input": args.input})

    ragft = [r for r in rows if r.config == "I-RAGFT"]
    raht = [r for r in rows if r.config == "I-RAHT"]
    psnr = psnr_at_rate(ragft, LONGDRESS_TARGET_BPP)
    status = "OK" if abs(psnr - LONGDRESS_TARGET_PSNR) <= PSNR_SLACK else "OFF"
    print(f"I-RAGFT at {LONGDRESS_TARGET_BPP} bpp: {psnr:.2f} dB "
          f"(target {LONGDRESS_TARGET_PSNR} +/- {PSNR_SLACK}) [{status}]")
    print("bpp      I-RAGFT  I-RAHT   gain")
    for bpp, a, b, gain in compare(ragft, raht):
        print(f"{bpp:.4f}   {a:6.2f}   {b:6.2f}   {gain:+.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

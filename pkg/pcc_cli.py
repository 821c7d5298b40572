"""
Command line front end for the point cloud color codec.

    python3 pcc_cli.py encode --input x.ply --output x.bin --transform ragft --blocks 2 \
        --predictor proposed --k 7 --step 16
    python3 pcc_cli.py decode --input x.bin --geometry x.ply --output y.ply
    python3 pcc_cli.py eval --input x.ply --preset I-RAGFT --step 16
    python3 pcc_cli.py sweep --config data/sweep.cfg --out rd.csv
    python3 pcc_cli.py synth --kind sphere --points 4096 --depth 6 --output sphere.ply
"""
import os
import sys
import logging
import argparse

from core.errors import CodecError
from core.codec import CodecConfig, PRESETS, preset, encode_with_reconstruction, decode
from core.entropy import deserialize
from core.metrics import psnr_channels, combine_psnr, bits_per_point
from core.pcgeom import load_ply, save_ply
from core.predict import PredictorConfig
from core.synth import synth_cloud, KINDS, FIELDS
from core.sweep import rd_sweep, run_sweep_file, write_csv, write_summary, parse_steps
from shared.config import (
    LOG_LEVEL, LOG_FORMAT, DEFAULT_TRANSFORM, DEFAULT_BLOCK_SIZE, DEFAULT_PREDICTOR,
    DEFAULT_STEP, DEFAULT_COLOR, DEFAULT_STEPS, SWEEP_WORKERS, SWEEP_CONFIG_PATH,
    SYNTH_SEED, SYNTH_POINTS, SYNTH_DEPTH
)

logger = logging.getLogger("CLI")


def _add_codec_flags(parser):
    parser.add_argument("--preset", choices=sorted(PRESETS), help="named configuration")
    parser.add_argument("--transform", default=DEFAULT_TRANSFORM, choices=["ragft", "raht"])
    parser.add_argument("--blocks", default=str(DEFAULT_BLOCK_SIZE),
                        help="block sizes, finest level first: '2', '16,2,2', '16,2...'")
    parser.add_argument("--predictor", default=DEFAULT_PREDICTOR,
                        choices=["none", "proposed", "lowres"])
    parser.add_argument("--k", type=int, default=None, help="neighbours (default per predictor)")
    parser.add_argument("--step", type=float, default=DEFAULT_STEP, help="quantisation step")
    parser.add_argument("--color", default=DEFAULT_COLOR, choices=["bt709", "bt601"])
    parser.add_argument("--depth", type=int, default=None, help="voxel depth (default from data)")
    parser.add_argument("--workers", type=int, default=1, help="KNN query threads")


def config_from_args(args):
    if args.preset:
        return preset(args.preset, step=args.step, color=args.color)
    return CodecConfig(
        transform=args.transform,
        block_sizes=args.blocks,
        predictor=PredictorConfig(args.predictor, args.k),
        step=args.step,
        color=args.color,
    )


def cmd_encode(args):
    cloud = load_ply(args.input, depth=args.depth)
    config = config_from_args(args)
    result = encode_with_reconstruction(cloud, config, workers=args.workers)
    data = result.bitstream.to_bytes()
    with open(args.output, "wb") as f:
        f.write(data)
    logger.info(f"{args.output}: {len(data)} bytes, {bits_per_point(data, cloud.n):.4f} bpp")
    return 0


def cmd_decode(args):
    with open(args.input, "rb") as f:
        bitstream = deserialize(f.read())
    geometry = load_ply(args.geometry, depth=bitstream.header.depth)
    decoded = decode(bitstream, geometry, workers=args.workers)
    save_ply(args.output, decoded, binary=not args.ascii)
    return 0


def cmd_eval(args):
    cloud = load_ply(args.input, depth=args.depth)
    config = config_from_args(args)
    result = encode_with_reconstruction(cloud, config, workers=args.workers)
    data = result.bitstream.to_bytes()
    decoded = decode(data, cloud, config=config, workers=args.workers)
    y, u, v = psnr_channels(cloud, decoded, config.convention)
    print(f"config     {config.label}")
    print(f"points     {cloud.n}")
    print(f"bytes      {len(data)}")
    print(f"bpp        {bits_per_point(data, cloud.n):.4f}")
    print(f"payload    {bits_per_point(result.bitstream, cloud.n, payload_only=True):.4f} bpp")
    print(f"psnr Y/U/V {y:.2f} / {u:.2f} / {v:.2f} dB")
    print(f"psnr YUV   {combine_psnr(y, u, v):.2f} dB")
    if args.output:
        save_ply(args.output, decoded)
    return 0


def cmd_sweep(args):
    if args.config:
        run_sweep_file(args.config, out=args.out, workers=args.workers)
        return 0

    # No config file: presets over a ply or synthetic cloud
    if args.input:
        cloud = load_ply(args.input)
    else:
        cloud = synth_cloud("sphere", SYNTH_POINTS, SYNTH_DEPTH, "smooth-sinusoid", SYNTH_SEED)
    names = args.presets.split(",") if args.presets else list(PRESETS)
    configs = [preset(name.strip()) for name in names]
    rows = rd_sweep(cloud, configs, parse_steps(args.steps), args.workers)
    write_csv(rows, args.out)
    write_summary(rows, os.path.splitext(args.out)[0] + ".json",
                  meta={"cloud_points": cloud.n, "configs": names})
    return 0


def cmd_synth(args):
    cloud = synth_cloud(args.kind, args.points, args.depth, args.field, args.seed)
    save_ply(args.output, cloud, binary=not args.ascii)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(description="Point cloud color codec")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="PLY -> bitstream")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    _add_codec_flags(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="bitstream + geometry PLY -> PLY")
    p.add_argument("--input", required=True)
    p.add_argument("--geometry", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--ascii", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("eval", help="encode, decode and report rate / PSNR")
    p.add_argument("--input", required=True)
    p.add_argument("--output", help="optional decoded PLY")
    _add_codec_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="rate-distortion sweep to CSV")
    p.add_argument("--config", help=f"sweep file, e.g. {os.path.relpath(SWEEP_CONFIG_PATH)}")
    p.add_argument("--input", help="PLY to sweep when no config file is given")
    p.add_argument("--presets", help="comma separated preset names")
    p.add_argument("--steps", default=",".join(f"{s:g}" for s in DEFAULT_STEPS))
    p.add_argument("--workers", type=int, default=SWEEP_WORKERS)
    p.add_argument("--out", default="rd.csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="write a synthetic test cloud")
    p.add_argument("--kind", default="sphere", choices=KINDS)
    p.add_argument("--points", type=int, default=SYNTH_POINTS)
    p.add_argument("--depth", type=int, default=SYNTH_DEPTH)
    p.add_argument("--field", default="smooth-sinusoid", choices=FIELDS)
    p.add_argument("--seed", type=int, default=SYNTH_SEED)
    p.add_argument("--output", required=True)
    p.add_argument("--ascii", action="store_true")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else LOG_LEVEL, format=LOG_FORMAT)
    try:
        return args.func(args)
    except CodecError as e:
        logger.error(str(e))
        return e.code
    except (OSError, KeyError, ValueError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""
Rate-distortion sweeps: one encode + decode per (config, step), collected
into RdPoint rows and written as CSV with a JSON run summary beside it.
"""
import os
import csv
import math
import time
import logging
import platform
import dataclasses
from dataclasses import dataclass, fields, astuple
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import ujson

from core.codec import CodecConfig, PRESETS, preset, encode_with_reconstruction, decode
from core.metrics import psnr_channels, combine_psnr, bits_per_point
from core.predict import PredictorConfig
from core.pcgeom import load_ply
from core.synth import synth_cloud
from shared.config import (
    DEFAULT_STEPS, SWEEP_WORKERS, SYNTH_SEED, SYNTH_POINTS, SYNTH_DEPTH, load_sweep_config
)

logger = logging.getLogger("Sweep")

# Slack when comparing PSNR values that should tie
PSNR_TOLERANCE = 1e-9


@dataclass(frozen=True)
class RdPoint:
    config: str
    step: float
    bpp: float
    psnr_y: float
    encode_ms: float
    decode_ms: float
    payload_bpp: float
    psnr_u: float
    psnr_v: float

    @property
    def mse_y(self):
        return 0.0 if math.isinf(self.psnr_y) else 255.0 ** 2 / 10 ** (self.psnr_y / 10.0)

    @property
    def psnr_yuv(self):
        return combine_psnr(self.psnr_y, self.psnr_u, self.psnr_v)


CSV_COLUMNS = [f.name for f in fields(RdPoint)]


def run_point(cloud, config, step, workers=1):
    config = config.with_step(step)
    result = encode_with_reconstruction(cloud, config, workers=workers)
    data = result.bitstream.to_bytes()

    start = time.perf_counter()
    decoded = decode(data, cloud, config=config, workers=workers)
    decode_ms = (time.perf_counter() - start) * 1000.0

    psnr_y, psnr_u, psnr_v = psnr_channels(cloud, decoded, config.convention)
    point = RdPoint(
        config=config.label, step=float(step),
        bpp=bits_per_point(data, cloud.n),
        psnr_y=psnr_y, encode_ms=result.encode_ms, decode_ms=decode_ms,
        payload_bpp=bits_per_point(result.bitstream, cloud.n, payload_only=True),
        psnr_u=psnr_u, psnr_v=psnr_v)
    logger.info(f"{point.config} step {step:g}: {point.bpp:.4f} bpp, Y-PSNR {point.psnr_y:.2f} dB")
    return point


def rd_sweep(cloud, configs, steps=DEFAULT_STEPS, workers=SWEEP_WORKERS):
    """Rows come back ordered by config, then step, as given."""
    jobs = [(config, step) for config in configs for step in steps]
    if workers <= 1:
        return [run_point(cloud, config, step) for config, step in jobs]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_point, cloud, config, step) for config, step in jobs]
        return [f.result() for f in futures]


def write_csv(rows, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in astuple(row)])
    logger.info(f"Wrote {len(rows)} RD points to {path}")


def read_csv(path):
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        for record in csv.DictReader(f):
            values = {name: record[name] for name in CSV_COLUMNS}
            rows.append(RdPoint(
                config=values.pop("config"),
                **{name: float(v) for name, v in values.items()}))
    return rows


def write_summary(rows, path, meta=None):
    """JSON summary: run metadata plus the rows grouped per config."""
    curves = {}
    for row in rows:
        curves.setdefault(row.config, []).append({
            "step": row.step, "bpp": row.bpp,
            "psnr_y": None if math.isinf(row.psnr_y) else row.psnr_y,
            "psnr_yuv": None if math.isinf(row.psnr_yuv) else row.psnr_yuv,
        })
    summary = {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "points": len(rows),
        "meta": meta or {},
        "curves": curves,
    }
    with open(path, "w", encoding="utf-8") as f:
        ujson.dump(summary, f, indent=2)
    return summary


def count_wins(rows_a, rows_b):
    """
    Points of curve A whose Y-PSNR is at least curve B's, read off B at the
    same bpp (linear between B's points, flat beyond them).
    """
    b = sorted(rows_b, key=lambda r: r.bpp)
    if not b:
        return 0
    bpp_b = np.array([r.bpp for r in b])
    psnr_b = np.array([r.psnr_y for r in b])
    wins = 0
    for row in rows_a:
        reference = float(np.interp(row.bpp, bpp_b, psnr_b))
        if row.psnr_y >= reference - PSNR_TOLERANCE:
            wins += 1
    return wins


def dominates(rows_a, rows_b, min_fraction=0.75):
    if not rows_a:
        return False
    return count_wins(rows_a, rows_b) >= math.ceil(min_fraction * len(rows_a))


# --- Sweep files ---

def configs_from_mapping(mapping):
    """{name: options} from a sweep file to CodecConfig objects, file order kept."""
    configs = []
    for name, options in mapping.items():
        options = dict(options)
        base = options.pop("preset", name if name in PRESETS and not options else None)
        if base is not None:
            configs.append(dataclasses.replace(preset(base), name=name))
            continue
        predictor = options.get("predictor", "proposed")
        k = options.get("k")
        configs.append(CodecConfig(
            transform=options.get("transform", "ragft"),
            block_sizes=options.get("blocks", "2"),
            predictor=_predictor_config(predictor, k),
            color=options.get("color", "bt709"),
            name=name,
        ))
    return configs


def _predictor_config(kind, k):
    return PredictorConfig(kind, None if k in (None, "") else int(k))


def parse_steps(text):
    return tuple(float(s) for s in str(text).split(",") if s.strip())


def cloud_from_options(options):
    """[sweep] input = path.ply, or synth = kind:points:depth:field[:seed]."""
    if options.get("input"):
        return load_ply(options["input"])
    parts = options.get("synth", "sphere").split(":")
    kind = parts[0]
    points = int(parts[1]) if len(parts) > 1 else SYNTH_POINTS
    depth = int(parts[2]) if len(parts) > 2 else SYNTH_DEPTH
    field = parts[3] if len(parts) > 3 else "smooth-sinusoid"
    seed = int(parts[4]) if len(parts) > 4 else SYNTH_SEED
    return synth_cloud(kind, points, depth, field, seed)


def run_sweep_file(path, out=None, workers=None):
    sweep, mapping = load_sweep_config(path)
    cloud = cloud_from_options(sweep)
    configs = configs_from_mapping(mapping)
    steps = parse_steps(sweep.get("steps", ",".join(str(s) for s in DEFAULT_STEPS)))
    workers = workers or int(sweep.get("workers", SWEEP_WORKERS))
    out = out or sweep.get("out", "rd.csv")

    rows = rd_sweep(cloud, configs, steps, workers)
    write_csv(rows, out)
    write_summary(rows, os.path.splitext(out)[0] + ".json", meta={
        "config_file": os.path.abspath(path),
        "cloud_points": cloud.n,
        "steps": list(steps),
        "configs": [c.label for c in configs],
    })
    return rows

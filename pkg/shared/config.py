import os
import configparser
import logging

# Base Directory (Project Root)
BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
DATA_DIR = os.path.join(BASE_DIR, "data")
DATASET_DIR = os.path.join(DATA_DIR, "datasets")
RESULTS_DIR = os.path.join(DATA_DIR, "results")

# Dataset (external, see scripts/fetch_dataset.py)
LONGDRESS_PATH = os.path.join(DATASET_DIR, "longdress_vox10_1300.ply")
LONGDRESS_POINTS = 857966
LONGDRESS_TARGET_BPP = 0.493
LONGDRESS_TARGET_PSNR = 30.31

# Codec Defaults
DEFAULT_TRANSFORM = "ragft"
DEFAULT_BLOCK_SIZE = 2
DEFAULT_STEP = 16.0
DEFAULT_PREDICTOR = "proposed"
PROPOSED_K = 7
LOWRES_K = 5
DEFAULT_COLOR = "bt709"

# Sweep Configuration
DEFAULT_STEPS = (64.0, 32.0, 16.0, 8.0)
SWEEP_WORKERS = 4
SWEEP_CONFIG_PATH = os.path.join(DATA_DIR, "sweep.cfg")

# Synthetic Clouds
SYNTH_SEED = 1234
SYNTH_POINTS = 4096
SYNTH_DEPTH = 6

# Logging
LOG_LEVEL = logging.INFO
LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger("Config")


def load_sweep_config(path):
    """
    Reads a key-value sweep file.

    [sweep] holds input/synth, steps, workers and out; every
    [config NAME] section describes one codec configuration.
    Returns (sweep_options, {name: options}) as plain string dicts.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Sweep config not found: {path}")

    parser = configparser.ConfigParser()
    # Keep config names case sensitive ("I-RAGFT")
    parser.optionxform = str
    parser.read(path, encoding="utf-8")

    sweep = dict(parser["sweep"]) if parser.has_section("sweep") else {}
    configs = {}
    for section in parser.sections():
        if section.startswith("config "):
            name = section[len("config "):].strip()
            configs[name] = dict(parser[section])

    if not configs:
        logger.warning(f"No [config ...] sections in {path}")
    return sweep, configs

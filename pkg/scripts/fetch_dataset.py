import os
import sys
import logging
import argparse

import requests

# Add project root to path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))
from shared.config import DATASET_DIR, LOG_LEVEL, LOG_FORMAT

logger = logging.getLogger("Dataset")


def download_file(url, filename=None, dest_dir=DATASET_DIR, params=None):
    os.makedirs(dest_dir, exist_ok=True)

    if filename is None:
        filename = url.split('/')[-1].split('?')[0]
    local_path = os.path.join(dest_dir, filename)
    partial_path = local_path + ".part"

    logger.info(f"Downloading {filename} from {url}...")
    try:
        with requests.get(url, stream=True, params=params, timeout=30) as r:
            r.raise_for_status()
            with open(partial_path, 'wb') as f:
                for chunk in r.iter_content(chunk_size=1 << 16):
                    f.write(chunk)
        os.replace(partial_path, local_path)
        logger.info(f"Downloaded: {local_path}")
        return local_path
    except requests.exceptions.RequestException as e:
        logger.error(f"Failed to download {filename}: {e}")
        if os.path.exists(partial_path):
            os.remove(partial_path)
        return None


def main():
    parser = argparse.ArgumentParser(
        description="Download a voxelized point cloud frame (e.g. an 8i longdress PLY) into data/datasets")
    parser.add_argument("url", help="direct link to the PLY file")
    parser.add_argument("--name", help="local file name (default: last URL component)")
    args = parser.parse_args()

    logging.basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)
    path = download_file(args.url, args.name)
    return 0 if path else 1


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Download and unpack the FashionMNIST IDX files.

Usage: python scripts/fetch_fashion_mnist.py [--out data/fashion-mnist]

Tries the known mirrors in order and writes the four uncompressed IDX files
the loader expects. Needs outbound network access.
"""

from __future__ import annotations

import argparse
import gzip
import sys
import urllib.request
from pathlib import Path

MIRRORS = [
    "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/",
    "https://storage.googleapis.com/tensorflow/tf-keras-datasets/",
]
FILES = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
]


def fetch(name: str, out_dir: Path) -> None:
    target = out_dir / name
    if target.exists():
        print(f"{name}: already present")
        return
    last_error = None
    for mirror in MIRRORS:
        url = mirror + name + ".gz"
        try:
            print(f"{name}: fetching {url}")
            with urllib.request.urlopen(url, timeout=60) as response:
                target.write_bytes(gzip.decompress(response.read()))
            return
        except Exception as exc:  # try the next mirror
            last_error = exc
            print(f"  failed: {exc}")
    raise SystemExit(f"could not fetch {name}: {last_error}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="data/fashion-mnist", help="output directory")
    args = parser.parse_args()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in FILES:
        fetch(name, out_dir)
    print(f"done; point FEDSPARSIFY_DATA at {out_dir} (or keep the default path)")
    return 0


if __name__ == "__main__":
    sys.exit(main())

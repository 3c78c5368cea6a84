#!/usr/bin/env python3
"""Build IDX-format MNIST files from the `mnist` npm package.

The npm package ships 10000 real MNIST digits (roughly 1000 per class) as
per-digit JSON arrays of flat 784-float images in [0, 1]. This script writes
the standard IDX files the trainer reads:

    train-images-idx3-ubyte.gz  train-labels-idx1-ubyte.gz
    t10k-images-idx3-ubyte.gz   t10k-labels-idx1-ubyte.gz

Samples are interleaved round-robin across the ten classes and split
8000 train / 2000 test, so both splits stay class-balanced. Output is
deterministic (fixed order, zeroed gzip timestamps).

Usage: fetch_mnist.py [--src DIR] [--out DIR]
  --src  directory holding 0.json .. 9.json (default: extract `npm pack mnist`)
  --out  output directory (default: <repo>/data)
"""

import argparse
import gzip
import json
import struct
import subprocess
import sys
import tempfile
from pathlib import Path

ROWS = COLS = 28
PIXELS = ROWS * COLS
TRAIN_COUNT = 8000


def obtain_src(src: Path | None) -> Path:
    if src is not None:
        if not (src / "0.json").exists():
            sys.exit(f"error: {src} does not contain 0.json")
        return src
    prefetched = Path("/tmp/package/src/digits")
    if (prefetched / "0.json").exists():
        return prefetched
    work = Path(tempfile.mkdtemp(prefix="mnist_npm_"))
    print(f"fetching mnist npm package into {work} ...")
    subprocess.run(["npm", "pack", "mnist", "--pack-destination", str(work)], check=True)
    tarball = next(work.glob("mnist-*.tgz"))
    subprocess.run(["tar", "xf", str(tarball), "-C", str(work)], check=True)
    return work / "package" / "src" / "digits"


def load_samples(src: Path) -> list[tuple[int, bytes]]:
    samples: list[list[bytes]] = []
    for digit in range(10):
        flat = json.loads((src / f"{digit}.json").read_text())["data"]
        if len(flat) % PIXELS:
            sys.exit(f"error: digit {digit} has {len(flat)} values, not a multiple of {PIXELS}")
        images = [
            bytes(min(255, max(0, round(v * 255))) for v in flat[i : i + PIXELS])
            for i in range(0, len(flat), PIXELS)
        ]
        samples.append(images)
    interleaved: list[tuple[int, bytes]] = []
    for i in range(max(len(s) for s in samples)):
        for digit in range(10):
            if i < len(samples[digit]):
                interleaved.append((digit, samples[digit][i]))
    return interleaved


def write_idx(path: Path, header: bytes, payload: bytes) -> None:
    with open(path, "wb") as raw:
        with gzip.GzipFile(fileobj=raw, mode="wb", mtime=0) as f:
            f.write(header + payload)
    print(f"wrote {path} ({path.stat().st_size} bytes compressed)")


def write_split(out: Path, stem: str, split: list[tuple[int, bytes]]) -> None:
    n = len(split)
    write_idx(out / f"{stem}-images-idx3-ubyte.gz",
              struct.pack(">IIII", 0x803, n, ROWS, COLS),
              b"".join(img for _, img in split))
    write_idx(out / f"{stem}-labels-idx1-ubyte.gz",
              struct.pack(">II", 0x801, n),
              bytes(label for label, _ in split))
    counts = [sum(1 for label, _ in split if label == d) for d in range(10)]
    print(f"  {stem}: {n} samples, per-class {counts}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--src", type=Path, default=None)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data")
    args = ap.parse_args()

    samples = load_samples(obtain_src(args.src))
    if len(samples) <= TRAIN_COUNT:
        sys.exit(f"error: only {len(samples)} samples; expected more than {TRAIN_COUNT}")
    args.out.mkdir(parents=True, exist_ok=True)
    write_split(args.out, "train", samples[:TRAIN_COUNT])
    write_split(args.out, "t10k", samples[TRAIN_COUNT:])


if __name__ == "__main__":
    main()

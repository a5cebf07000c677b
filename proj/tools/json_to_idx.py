#!/usr/bin/env python3
"""Convert per-class JSON pixel dumps (npm `fashion-mnist` package layout) into IDX files.

Each input file <dir>/<label>.json holds {"data": [[784 uint8 pixels], ...]}.
Writes train/t10k image+label IDX pairs with a seeded shuffle and a fixed
number of test samples per class.
"""
import argparse
import json
import random
import struct
from pathlib import Path


def write_images(path, images, rows, cols):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), rows, cols))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("src", type=Path, help="directory containing 0.json .. 9.json")
    ap.add_argument("dst", type=Path)
    ap.add_argument("--test-per-class", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=1234)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    train, test = [], []
    for path in sorted(args.src.glob("*.json"), key=lambda p: int(p.stem)):
        label = int(path.stem)
        data = [img for img in json.loads(path.read_text())["data"] if len(img) == 784]
        rng.shuffle(data)
        test += [(img, label) for img in data[: args.test_per_class]]
        train += [(img, label) for img in data[args.test_per_class:]]
    rng.shuffle(train)
    rng.shuffle(test)

    args.dst.mkdir(parents=True, exist_ok=True)
    for prefix, rows in (("train", train), ("t10k", test)):
        write_images(args.dst / f"{prefix}-images-idx3-ubyte", [r[0] for r in rows], 28, 28)
        write_labels(args.dst / f"{prefix}-labels-idx1-ubyte", [r[1] for r in rows])
        print(f"{prefix}: {len(rows)} samples")


if __name__ == "__main__":
    main()

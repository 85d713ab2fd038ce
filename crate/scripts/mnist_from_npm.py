#!/usr/bin/env python3
"""Rebuild data/mnist/*.idx from the digits bundled in the npm `mnist` package.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_from_npm.py package/src/digits data/mnist

The package ships 10,000 MNIST digits as JSON with pixel intensities divided by
255 and rounded to three decimals; multiplying back by 255 and rounding recovers
the original bytes. Digits are shuffled with a fixed seed and split 8000/2000.
"""
import json
import random
import struct
import sys
from pathlib import Path


def write_idx(path, magic, dims, payload):
    with open(path, "wb") as f:
        f.write(struct.pack(">I", magic))
        for d in dims:
            f.write(struct.pack(">I", d))
        f.write(bytes(payload))


def main(src, dst):
    samples = []
    for digit in range(10):
        data = json.loads(Path(src, f"{digit}.json").read_text())["data"]
        assert len(data) % 784 == 0
        for i in range(0, len(data), 784):
            pixels = [min(255, max(0, round(v * 255))) for v in data[i : i + 784]]
            samples.append((pixels, digit))
    random.Random(20220125).shuffle(samples)
    out = Path(dst)
    out.mkdir(parents=True, exist_ok=True)
    for name, part in (("train", samples[:8000]), ("t10k", samples[8000:])):
        images = [p for pixels, _ in part for p in pixels]
        labels = [label for _, label in part]
        write_idx(out / f"{name}-images-idx3-ubyte", 0x803, [len(part), 28, 28], images)
        write_idx(out / f"{name}-labels-idx1-ubyte", 0x801, [len(part)], labels)
    print(f"wrote {len(samples)} digits to {out}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])

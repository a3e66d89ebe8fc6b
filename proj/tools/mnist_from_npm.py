#!/usr/bin/env python3
"""Build IDX-format MNIST files from the 10000-digit sample shipped in the
`mnist` npm package (https://www.npmjs.com/package/mnist).

The package stores pixels as byte/255 rounded to three decimals, which is
enough resolution to recover the original bytes exactly.

    python3 tools/mnist_from_npm.py --out data/mnist            # runs `npm pack mnist`
    python3 tools/mnist_from_npm.py --package /path/to/package --out data/mnist

Writes train-images-idx3-ubyte / train-labels-idx1-ubyte (8000 samples) and
t10k-images-idx3-ubyte / t10k-labels-idx1-ubyte (2000 samples). The split is
a fixed seeded shuffle so every checkout gets the same files.
"""

import argparse
import json
import os
import random
import struct
import subprocess
import tarfile
import tempfile

TRAIN_COUNT = 8000
SPLIT_SEED = 20180518


def fetch_package(workdir):
    subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=workdir, check=True,
                   stdout=subprocess.DEVNULL)
    tgz = [f for f in os.listdir(workdir) if f.endswith(".tgz")][0]
    with tarfile.open(os.path.join(workdir, tgz)) as tar:
        tar.extractall(workdir)
    return os.path.join(workdir, "package")


def load_digits(package_dir):
    samples = []
    for digit in range(10):
        with open(os.path.join(package_dir, "src", "digits", f"{digit}.json")) as f:
            flat = json.load(f)["data"]
        if len(flat) % 784:
            raise ValueError(f"digit {digit}: length {len(flat)} not a multiple of 784")
        for i in range(0, len(flat), 784):
            pixels = bytes(round(v * 255) for v in flat[i:i + 784])
            samples.append((pixels, digit))
    return samples


def write_idx(out_dir, prefix, samples):
    with open(os.path.join(out_dir, f"{prefix}-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(samples), 28, 28))
        for pixels, _ in samples:
            f.write(pixels)
    with open(os.path.join(out_dir, f"{prefix}-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(samples)))
        f.write(bytes(label for _, label in samples))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--package", help="extracted npm package directory")
    parser.add_argument("--out", default="data/mnist")
    args = parser.parse_args()

    os.makedirs(args.out, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        package_dir = args.package or fetch_package(tmp)
        samples = load_digits(package_dir)

    random.Random(SPLIT_SEED).shuffle(samples)
    write_idx(args.out, "train", samples[:TRAIN_COUNT])
    write_idx(args.out, "t10k", samples[TRAIN_COUNT:])
    print(f"wrote {TRAIN_COUNT} train / {len(samples) - TRAIN_COUNT} test samples to {args.out}")


if __name__ == "__main__":
    main()

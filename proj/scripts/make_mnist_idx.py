#!/usr/bin/env python3
# dpvae/scripts/make_mnist_idx.py

# Copyright 2026 The dpvae Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Builds big-endian IDX image/label files from the `mnist` npm package.

That package ships one JSON file per digit ({digit}.json with a flat
"data" array of 784-pixel images, values in [0, 1]). This script packs a
deterministic subset into the classic MNIST binary layout:

  images: magic 0x00000803, dims N x 28 x 28, row-major u8 pixels
  labels: magic 0x00000801, dims N, u8 labels

Pixels are quantized with round(v * 255). Images are concatenated digit by
digit (all 0s, then all 1s, ...), which is fine for training because every
consumer shuffles or filters by label.

Usage:
  python3 scripts/make_mnist_idx.py --source /path/to/mnist/src/digits \
      --out data/mnist [--per-digit 1001] [--digits 0123456789]
"""

import argparse
import json
import pathlib
import struct


def load_digit(source: pathlib.Path, digit: int, cap: int) -> list[bytes]:
    with open(source / f"{digit}.json") as f:
        flat = json.load(f)["data"]
    if len(flat) % 784 != 0:
        raise SystemExit(f"{digit}.json: {len(flat)} values is not a "
                         "multiple of 784")
    count = len(flat) // 784
    if cap > 0:
        count = min(count, cap)
    images = []
    for i in range(count):
        pixels = flat[i * 784:(i + 1) * 784]
        images.append(bytes(round(v * 255) for v in pixels))
    return images


def write_idx_images(path: pathlib.Path, images: list[bytes]) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(img)


def write_idx_labels(path: pathlib.Path, labels: list[int]) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--source", required=True,
                    help="directory with 0.json .. 9.json")
    ap.add_argument("--out", default="data/mnist", help="output directory")
    ap.add_argument("--per-digit", type=int, default=0,
                    help="cap images per digit (0 = all)")
    ap.add_argument("--digits", default="0123456789",
                    help="digits to include, e.g. 012")
    args = ap.parse_args()

    source = pathlib.Path(args.source)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    images: list[bytes] = []
    labels: list[int] = []
    for ch in args.digits:
        digit = int(ch)
        block = load_digit(source, digit, args.per_digit)
        images.extend(block)
        labels.extend([digit] * len(block))
        print(f"digit {digit}: {len(block)} images")

    write_idx_images(out / "train-images-idx3-ubyte", images)
    write_idx_labels(out / "train-labels-idx1-ubyte", labels)
    print(f"wrote {len(images)} images to {out}")


if __name__ == "__main__":
    main()

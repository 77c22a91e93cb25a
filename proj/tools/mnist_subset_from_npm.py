#!/usr/bin/env python3
"""Rebuild an MNIST IDX pair from the digit arrays bundled in the npm `mnist` package.

The npm package (MIT, https://www.npmjs.com/package/mnist) ships 10000 MNIST digits
as 784-float arrays rounded to three decimals. Those values are multiples of 1/255
rounded, so round(v * 255) recovers the original byte exactly.

usage: mnist_subset_from_npm.py <path/to/dist/mnist.js> <out_dir> [--classes 4,6]
"""
import argparse
import json
import re
import struct
from pathlib import Path


def digit_arrays(bundle: str):
    starts = [m.start() for m in re.finditer(r'module\.exports=\{ "data": \[', bundle)]
    if len(starts) != 10:
        raise SystemExit(f"expected 10 digit blocks, found {len(starts)}")
    for digit, pos in enumerate(starts):
        a = bundle.index("[", pos)
        b = bundle.index("]", a)
        yield digit, json.loads(bundle[a:b + 1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("bundle")
    ap.add_argument("out_dir")
    ap.add_argument("--classes", default="0,1,2,3,4,5,6,7,8,9")
    args = ap.parse_args()
    keep = {int(c) for c in args.classes.split(",")}

    images = bytearray()
    labels = bytearray()
    count = 0
    for digit, values in digit_arrays(Path(args.bundle).read_text()):
        if digit not in keep:
            continue
        if len(values) % 784:
            raise SystemExit(f"digit {digit}: {len(values)} values is not a multiple of 784")
        for v in values:
            b = round(v * 255)
            if abs(b / 255 - v) > 0.001:
                raise SystemExit(f"digit {digit}: value {v} is not a rounded byte")
            images.append(b)
        n = len(values) // 784
        labels.extend([digit] * n)
        count += n

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "images-idx3-ubyte").write_bytes(struct.pack(">IIII", 0x803, count, 28, 28) + images)
    (out / "labels-idx1-ubyte").write_bytes(struct.pack(">II", 0x801, count) + labels)
    print(f"wrote {count} images to {out}")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Convert the 5000-digit MNIST sample shipped with mlxtend to an IDX pair.

The sample is a gzipped CSV, one digit per line: 784 pixel values (0-255)
followed by the label. Input may be that .csv.gz file or an mlxtend wheel.

    pip download mlxtend==0.24.0 --no-deps -d /tmp/wheels
    python3 tools/mnist5k_to_idx.py /tmp/wheels/mlxtend-0.24.0-py3-none-any.whl data/mnist5k

Writes <out>/images.idx3-ubyte and <out>/labels.idx1-ubyte.
"""
import argparse
import gzip
import pathlib
import struct
import zipfile

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_rows(source: pathlib.Path):
    if source.suffix == ".whl":
        with zipfile.ZipFile(source) as z:
            raw = z.read(MEMBER)
    else:
        raw = source.read_bytes()
    for line in gzip.decompress(raw).decode().splitlines():
        if line.strip():
            values = [int(v) for v in line.split(",")]
            yield values[:-1], values[-1]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("source", type=pathlib.Path)
    parser.add_argument("out", type=pathlib.Path)
    args = parser.parse_args()

    rows = list(read_rows(args.source))
    if any(len(p) != 784 for p, _ in rows):
        raise SystemExit("expected 784 pixels per row")
    args.out.mkdir(parents=True, exist_ok=True)
    with open(args.out / "images.idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(rows), 28, 28))
        for pixels, _ in rows:
            f.write(bytes(pixels))
    with open(args.out / "labels.idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 2049, len(rows)))
        f.write(bytes(label for _, label in rows))
    print(f"wrote {len(rows)} examples to {args.out}")


if __name__ == "__main__":
    main()

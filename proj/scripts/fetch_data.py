#!/usr/bin/env python3
"""Download the image datasets into a data directory.

Layout produced (what the CLI expects under --data-dir):

    mnist/   train-images-idx3-ubyte  train-labels-idx1-ubyte
             t10k-images-idx3-ubyte   t10k-labels-idx1-ubyte
    fashion/ (same four IDX files)
    cifar10/ data_batch_1.bin .. data_batch_5.bin  test_batch.bin

If the official MNIST mirrors are unreachable, --mnist-fallback writes IDX
files built from the 5000-image MNIST sample bundled with the mlxtend wheel
(500 images per class): 1000 stratified images become the train split and the
remaining 4000 the test split. FLAGS.txt in the dataset directory records that.
"""

import argparse
import gzip
import io
import os
import struct
import sys
import tarfile
import urllib.request
import zipfile

MNIST_MIRRORS = [
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "http://yann.lecun.com/exdb/mnist/",
]
FASHION_MIRRORS = [
    "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/",
    "https://github.com/zalandoresearch/fashion-mnist/raw/master/data/fashion/",
]
IDX_FILES = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
]
CIFAR_URL = "https://www.cs.toronto.edu/~kriz/cifar-10-binary.tar.gz"


def fetch(url, timeout=60):
    with urllib.request.urlopen(url, timeout=timeout) as r:
        return r.read()


def fetch_idx(dest, mirrors):
    os.makedirs(dest, exist_ok=True)
    for name in IDX_FILES:
        target = os.path.join(dest, name)
        if os.path.exists(target):
            continue
        last = None
        for base in mirrors:
            try:
                data = gzip.decompress(fetch(base + name + ".gz"))
                with open(target, "wb") as f:
                    f.write(data)
                print(f"  {name} <- {base}")
                break
            except Exception as e:  # try the next mirror
                last = e
        else:
            raise RuntimeError(f"could not download {name}: {last}")


def fetch_cifar(dest):
    os.makedirs(dest, exist_ok=True)
    if os.path.exists(os.path.join(dest, "test_batch.bin")):
        return
    blob = fetch(CIFAR_URL, timeout=600)
    with tarfile.open(fileobj=io.BytesIO(blob), mode="r:gz") as tar:
        for m in tar.getmembers():
            if m.name.endswith(".bin"):
                with open(os.path.join(dest, os.path.basename(m.name)), "wb") as f:
                    f.write(tar.extractfile(m).read())


def write_idx_images(path, rows):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x803, len(rows), 28, 28))
        for r in rows:
            f.write(bytes(r))


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x801, len(labels)))
        f.write(bytes(labels))


def mlxtend_sample():
    """Rows of (784 pixels, label) from mlxtend's bundled mnist_5k.csv.gz."""
    try:
        import mlxtend  # noqa: F401
        path = os.path.join(os.path.dirname(mlxtend.__file__), "data", "data", "mnist_5k.csv.gz")
        raw = open(path, "rb").read()
    except Exception:
        import subprocess
        import tempfile
        tmp = tempfile.mkdtemp()
        subprocess.check_call([sys.executable, "-m", "pip", "download", "--no-deps",
                               "mlxtend==0.24.0", "-d", tmp])
        wheel = next(os.path.join(tmp, n) for n in os.listdir(tmp) if n.endswith(".whl"))
        with zipfile.ZipFile(wheel) as z:
            raw = z.read("mlxtend/data/data/mnist_5k.csv.gz")
    rows = []
    for line in gzip.decompress(raw).decode().splitlines():
        vals = [int(float(v)) for v in line.split(",")]
        rows.append((vals[:784], vals[784]))
    return rows


def mnist_fallback(dest, train_per_class=100):
    os.makedirs(dest, exist_ok=True)
    rows = mlxtend_sample()
    seen = [0] * 10
    train, test = [], []
    for pixels, label in rows:  # file order is the deterministic split
        if seen[label] < train_per_class:
            train.append((pixels, label))
            seen[label] += 1
        else:
            test.append((pixels, label))
    for split, data in (("train", train), ("t10k", test)):
        write_idx_images(os.path.join(dest, f"{split}-images-idx3-ubyte"), [p for p, _ in data])
        write_idx_labels(os.path.join(dest, f"{split}-labels-idx1-ubyte"), [l for _, l in data])
    with open(os.path.join(dest, "FLAGS.txt"), "w") as f:
        f.write(f"source=mlxtend-mnist_5k train={len(train)} test={len(test)}\n")
    print(f"  mnist fallback: {len(train)} train / {len(test)} test images")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--data-dir", default=os.environ.get("TDCA_DATA_DIR", "data"))
    ap.add_argument("--datasets", default="mnist,fashion,cifar10")
    ap.add_argument("--mnist-fallback", action="store_true",
                    help="use the bundled 5000-image MNIST sample if downloads fail")
    args = ap.parse_args()

    failed = []
    for ds in args.datasets.split(","):
        dest = os.path.join(args.data_dir, ds)
        print(f"{ds} -> {dest}")
        try:
            if ds == "mnist":
                fetch_idx(dest, MNIST_MIRRORS)
            elif ds == "fashion":
                fetch_idx(dest, FASHION_MIRRORS)
            elif ds == "cifar10":
                fetch_cifar(dest)
            else:
                raise ValueError(f"unknown dataset {ds}")
        except Exception as e:
            if ds == "mnist" and args.mnist_fallback:
                print(f"  download failed ({e}); using fallback sample")
                for name in IDX_FILES:
                    p = os.path.join(dest, name)
                    if os.path.exists(p):
                        os.remove(p)
                mnist_fallback(dest)
            else:
                print(f"  FAILED: {e}", file=sys.stderr)
                failed.append(ds)
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""Build a 28x28 digit corpus in DMAT format for the optional image-grid demo.

The full-resolution handwritten-digit corpus is not bundled with this
repository, so this script builds a stand-in from scikit-learn's 8x8 digits:
each image is bilinearly upscaled to 28x28, normalized to [0, 1], and the pool
is grown to the requested size with small random pixel shifts (the base corpus
has only 1797 images). Train and test rows never share a base image.

Usage:
    python3 tools/export_digits.py --out /tmp/digits [--train 2000] [--test 500]

Writes <out>.train.x.dmat, <out>.train.labels, <out>.test.x.dmat,
<out>.test.labels. Check them against the acceptance gate with:

    RGCN_DIGITS=/tmp/digits ./build/tests/rgcn_acceptance 10
"""

import argparse
import struct

import numpy as np
from scipy import ndimage
from sklearn.datasets import load_digits


def save_dmat(path: str, m: np.ndarray) -> None:
    m = np.ascontiguousarray(m, dtype="<f8")
    with open(path, "wb") as f:
        f.write(b"DMAT1")
        f.write(struct.pack("<QQ", m.shape[0], m.shape[1]))
        f.write(m.tobytes())


def save_labels(path: str, y: np.ndarray) -> None:
    with open(path, "w") as f:
        for v in y:
            f.write(f"{int(v)}\n")


def upscale(img8: np.ndarray) -> np.ndarray:
    img = ndimage.zoom(img8 / 16.0, 28 / 8, order=1)
    return np.clip(img, 0.0, 1.0)


def shifted(img: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    dy, dx = rng.integers(-2, 3, size=2)
    out = np.zeros_like(img)
    ys, xs = slice(max(dy, 0), 28 + min(dy, 0)), slice(max(dx, 0), 28 + min(dx, 0))
    yd, xd = slice(max(-dy, 0), 28 + min(-dy, 0)), slice(max(-dx, 0), 28 + min(-dx, 0))
    out[ys, xs] = img[yd, xd]
    return out


def grow(base_x: np.ndarray, base_y: np.ndarray, count: int,
         rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    i = 0
    while len(xs) < count:
        img = base_x[i % len(base_x)]
        xs.append(img if i < len(base_x) else shifted(img, rng))
        ys.append(base_y[i % len(base_y)])
        i += 1
    return np.stack(xs).reshape(count, 784), np.array(ys)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True, help="output path prefix")
    ap.add_argument("--train", type=int, default=2000)
    ap.add_argument("--test", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    digits = load_digits()
    rng = np.random.default_rng(args.seed)
    order = rng.permutation(len(digits.images))
    images = np.stack([upscale(digits.images[i]) for i in order])
    labels = digits.target[order]

    n_test_base = max(args.test // 2, len(images) // 5)
    test_x, test_y = grow(images[:n_test_base], labels[:n_test_base], args.test, rng)
    train_x, train_y = grow(images[n_test_base:], labels[n_test_base:], args.train, rng)

    save_dmat(f"{args.out}.train.x.dmat", train_x)
    save_labels(f"{args.out}.train.labels", train_y)
    save_dmat(f"{args.out}.test.x.dmat", test_x)
    save_labels(f"{args.out}.test.labels", test_y)
    print(f"wrote {args.train} train / {args.test} test digit rows to {args.out}.*")


if __name__ == "__main__":
    main()

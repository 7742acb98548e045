#!/usr/bin/env python3
"""Convert torchvision VGG-19 ImageNet weights into a sketchforge archive.

    python3 tools/export_vgg19.py --out vgg19.skf [--state-dict vgg19.pth] [--tap relu2_2]

Without --state-dict the torchvision weights are downloaded (needs network).
Only the convolutions up to the tap layer are written; the feature extractor
reads tensors named conv<stage>_<i>.weight / .bias.
"""

import argparse
import json
import os
import struct
import tempfile

import numpy as np

MAGIC = b"SKFARCH\0"
VERSION = 1
STAGES = [(64, 2), (128, 2), (256, 4), (512, 4), (512, 4)]


def layer_names():
    names = []
    for s, (_, convs) in enumerate(STAGES, start=1):
        for i in range(1, convs + 1):
            names += [f"conv{s}_{i}", f"relu{s}_{i}"]
        names.append(f"pool{s}")
    return names


def write_archive(path, meta, tensors):
    index, blobs, offset = [], [], 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f8")
        shape = list(arr.shape) + [1] * (4 - arr.ndim)
        index.append({"name": name, "dtype": "f64", "shape": shape,
                      "offset": offset, "nbytes": arr.nbytes})
        blobs.append(arr.tobytes())
        offset += arr.nbytes
    header = json.dumps({"meta": meta, "tensors": index}).encode()
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)))
    with os.fdopen(fd, "wb") as f:
        f.write(MAGIC + struct.pack("<IQ", VERSION, len(header)) + header)
        for b in blobs:
            f.write(b)
    os.replace(tmp, path)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True)
    ap.add_argument("--state-dict", help="torchvision vgg19 state_dict (.pth)")
    ap.add_argument("--tap", default="relu2_2")
    args = ap.parse_args()

    names = layer_names()
    if args.tap not in names:
        ap.error(f"unknown tap {args.tap}")
    import torch
    if args.state_dict:
        state = torch.load(args.state_dict, map_location="cpu")
    else:
        from torchvision.models import VGG19_Weights, vgg19
        state = vgg19(weights=VGG19_Weights.IMAGENET1K_V1).state_dict()

    # torchvision numbers every module in `features`: conv, relu, ..., pool
    tensors = {}
    for idx, name in enumerate(names):
        if name.startswith("conv"):
            tensors[f"{name}.weight"] = state[f"features.{idx}.weight"].double().numpy()
            tensors[f"{name}.bias"] = state[f"features.{idx}.bias"].double().numpy()
        if name == args.tap:
            break
    meta = {"kind": "vgg19_features", "tap": args.tap, "source": "torchvision IMAGENET1K_V1"}
    write_archive(args.out, meta, tensors)
    print(f"wrote {len(tensors)} tensors to {args.out}")


if __name__ == "__main__":
    main()

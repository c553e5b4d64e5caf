#!/usr/bin/env python3
"""Train the baseline MNIST fixture and write it as an SLWA archive.

This only produces the `original` variant consumed by the simulator's test
suite. Usage:

    python3 tools/train_fixture.py --mnist-dir /path/to/idx --out fixtures/models/original.slwa

The IDX directory must contain the four standard MNIST files (optionally
gzipped).
"""

import argparse
import gzip
import json
import struct
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


def read_idx(path: Path) -> np.ndarray:
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        data = f.read()
    magic, = struct.unpack(">I", data[:4])
    rank = magic & 0xFF
    dims = struct.unpack(">" + "I" * rank, data[4:4 + 4 * rank])
    return np.frombuffer(data, dtype=np.uint8, offset=4 + 4 * rank).reshape(dims)


def find(dir_: Path, stem: str) -> Path:
    for cand in (dir_ / stem, dir_ / (stem + ".gz")):
        if cand.exists():
            return cand
    raise FileNotFoundError(dir_ / stem)


LAYERS = [
    {"type": "conv2d", "name": "conv1", "in_channels": 1, "out_channels": 6,
     "kernel": [5, 5], "stride": 1, "padding": 0, "bias": False},
    {"type": "relu"},
    {"type": "maxpool2d", "kernel": 2, "stride": 2},
    {"type": "conv2d", "name": "conv2", "in_channels": 6, "out_channels": 16,
     "kernel": [5, 5], "stride": 1, "padding": 0, "bias": False},
    {"type": "relu"},
    {"type": "maxpool2d", "kernel": 2, "stride": 2},
    {"type": "flatten"},
    {"type": "fc", "name": "fc1", "in": 256, "out": 120, "bias": False},
    {"type": "relu"},
    {"type": "fc", "name": "fc2", "in": 120, "out": 84, "bias": False},
    {"type": "relu"},
    {"type": "fc", "name": "fc3", "in": 84, "out": 10, "bias": False},
]


class Net(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 6, 5, bias=False)
        self.conv2 = nn.Conv2d(6, 16, 5, bias=False)
        self.fc1 = nn.Linear(256, 120, bias=False)
        self.fc2 = nn.Linear(120, 84, bias=False)
        self.fc3 = nn.Linear(84, 10, bias=False)

    def forward(self, x):
        x = F.max_pool2d(F.relu(self.conv1(x)), 2)
        x = F.max_pool2d(F.relu(self.conv2(x)), 2)
        x = torch.flatten(x, 1)
        x = F.relu(self.fc1(x))
        x = F.relu(self.fc2(x))
        return self.fc3(x)


def write_slwa(path: Path, manifest: dict, tensors: list) -> None:
    text = json.dumps(manifest, indent=2, sort_keys=True).encode("utf-8")
    out = bytearray(b"SLWA")
    out += struct.pack("<HI", 1, len(text)) + text
    out += struct.pack("<I", len(tensors))
    for name, arr in tensors:
        arr = np.ascontiguousarray(arr, dtype="<f4")
        raw = name.encode("utf-8")
        out += struct.pack("<H", len(raw)) + raw
        out += struct.pack("<B", arr.ndim)
        out += struct.pack("<" + "I" * arr.ndim, *arr.shape)
        out += arr.tobytes()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(bytes(out))


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--mnist-dir", type=Path, required=True)
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--epochs", type=int, default=4)
    ap.add_argument("--lr", type=float, default=0.05)
    ap.add_argument("--momentum", type=float, default=0.9)
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    np.random.seed(args.seed)
    torch.set_num_threads(1)

    def load(kind):
        x = read_idx(find(args.mnist_dir, f"{kind}-images-idx3-ubyte"))
        y = read_idx(find(args.mnist_dir, f"{kind}-labels-idx1-ubyte"))
        x = torch.from_numpy(x.astype(np.float32) / 255.0).unsqueeze(1)
        return x, torch.from_numpy(y.astype(np.int64))

    xtr, ytr = load("train")
    xte, yte = load("t10k")

    net = Net()
    opt = torch.optim.SGD(net.parameters(), lr=args.lr, momentum=args.momentum)
    gen = torch.Generator().manual_seed(args.seed)
    for epoch in range(args.epochs):
        net.train()
        perm = torch.randperm(len(xtr), generator=gen)
        for i in range(0, len(xtr), args.batch):
            idx = perm[i:i + args.batch]
            loss = F.cross_entropy(net(xtr[idx]), ytr[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
        for g in opt.param_groups:
            g["lr"] *= 0.5
        net.eval()
        with torch.no_grad():
            acc = (net(xte).argmax(1) == yte).float().mean().item()
        print(f"epoch {epoch + 1}: loss {loss.item():.4f} test acc {acc:.4f}")

    # Recompute the recorded accuracy in float32 from the exact exported values.
    net.eval()
    with torch.no_grad():
        correct = int((net(xte).argmax(1) == yte).sum().item())

    tensors = []
    for layer in LAYERS:
        if layer["type"] in ("conv2d", "fc"):
            mod = getattr(net, layer["name"])
            tensors.append((layer["name"] + ".weight", mod.weight.detach().numpy()))

    manifest = {
        "name": "mnist_cnn",
        "dataset": "MNIST",
        "variant": "original",
        "input_shape": [1, 28, 28],
        "num_classes": 10,
        "layers": LAYERS,
        "training": {
            "optimizer": "sgd_momentum",
            "lr": args.lr,
            "lr_decay_per_epoch": 0.5,
            "momentum": args.momentum,
            "batch_size": args.batch,
            "epochs": args.epochs,
            "seed": args.seed,
            "reg_lambda": 0.0,
            "noise_sigma": 0.0,
        },
        "test_accuracy": correct / len(xte),
        "test_samples": len(xte),
    }
    write_slwa(args.out, manifest, tensors)
    n = sum(int(np.prod(a.shape)) for _, a in tensors)
    print(f"wrote {args.out}: {n} parameters, test accuracy {correct / len(xte):.4f}")


if __name__ == "__main__":
    main()

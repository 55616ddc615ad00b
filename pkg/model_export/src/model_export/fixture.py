"""Tiny random-weight fixture bundle in the same format.

Nine nodes covering all seven operator kinds, two taps, well under 1 MB.
``fixture_torch_model`` builds the matching torch module so tests can
check the bundle against a reference forward pass.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from torch import nn

from .writer import write_bundle

INPUT_SHAPE = [3, 224, 224]


def fixture_tensors(seed: int = 0) -> dict[str, np.ndarray]:
    rng = np.random.default_rng([seed, 0xF1D])
    return {
        "conv1.weight": rng.normal(0.0, 0.12, size=(8, 3, 5, 5)).astype(np.float32),
        "conv1.bias": rng.normal(0.0, 0.05, size=(8,)).astype(np.float32),
        "bn1.gamma": rng.uniform(0.8, 1.2, size=(8,)).astype(np.float32),
        "bn1.beta": rng.normal(0.0, 0.1, size=(8,)).astype(np.float32),
        "bn1.mean": rng.normal(0.0, 0.2, size=(8,)).astype(np.float32),
        "bn1.var": rng.uniform(0.5, 1.5, size=(8,)).astype(np.float32),
        "conv2.weight": rng.normal(0.0, 0.1, size=(16, 8, 3, 3)).astype(np.float32),
        "conv2.bias": rng.normal(0.0, 0.05, size=(16,)).astype(np.float32),
    }


def export_fixture(out_dir: str | Path, seed: int = 0) -> Path:
    tensors = fixture_tensors(seed)
    nodes = [
        {
            "name": "conv1",
            "op": "conv2d",
            "inputs": ["input"],
            "attrs": {"stride": [4, 4], "padding": [2, 2]},
            "weights": {"weight": "conv1.weight", "bias": "conv1.bias"},
        },
        {
            "name": "bn1",
            "op": "batchnorm",
            "inputs": ["conv1"],
            "attrs": {"epsilon": 1e-5},
            "weights": {
                "gamma": "bn1.gamma",
                "beta": "bn1.beta",
                "mean": "bn1.mean",
                "var": "bn1.var",
            },
        },
        {"name": "relu1", "op": "relu", "inputs": ["bn1"], "attrs": {}, "weights": {}},
        {
            "name": "pool1",
            "op": "maxpool",
            "inputs": ["relu1"],
            "attrs": {"kernel": [3, 3], "stride": [2, 2], "padding": [1, 1]},
            "weights": {},
        },
        {
            "name": "conv2",
            "op": "conv2d",
            "inputs": ["pool1"],
            "attrs": {"stride": [2, 2], "padding": [1, 1]},
            "weights": {"weight": "conv2.weight", "bias": "conv2.bias"},
        },
        {"name": "relu2", "op": "relu", "inputs": ["conv2"], "attrs": {}, "weights": {}},
        {"name": "cat", "op": "concat", "inputs": ["conv2", "relu2"], "attrs": {}, "weights": {}},
        {
            "name": "ap",
            "op": "avgpool",
            "inputs": ["cat"],
            "attrs": {"kernel": [2, 2], "stride": [2, 2], "padding": [0, 0]},
            "weights": {},
        },
        {"name": "gap", "op": "global_avgpool", "inputs": ["ap"], "attrs": {}, "weights": {}},
    ]
    taps = [
        {"name": "conv1", "conv_index": 1, "channels": 8},
        {"name": "conv2", "conv_index": 2, "channels": 16},
    ]
    return write_bundle(out_dir, nodes, taps, tensors, INPUT_SHAPE, conv_count=2)


class FixtureNet(nn.Module):
    """Torch twin of the fixture graph, taps exposed on forward."""

    def __init__(self, tensors: dict[str, np.ndarray]):
        super().__init__()
        self.conv1 = nn.Conv2d(3, 8, 5, stride=4, padding=2)
        self.bn1 = nn.BatchNorm2d(8)
        self.pool1 = nn.MaxPool2d(3, stride=2, padding=1)
        self.conv2 = nn.Conv2d(8, 16, 3, stride=2, padding=1)
        with torch.no_grad():
            self.conv1.weight.copy_(torch.from_numpy(tensors["conv1.weight"]))
            self.conv1.bias.copy_(torch.from_numpy(tensors["conv1.bias"]))
            self.bn1.weight.copy_(torch.from_numpy(tensors["bn1.gamma"]))
            self.bn1.bias.copy_(torch.from_numpy(tensors["bn1.beta"]))
            self.bn1.running_mean.copy_(torch.from_numpy(tensors["bn1.mean"]))
            self.bn1.running_var.copy_(torch.from_numpy(tensors["bn1.var"]))
            self.conv2.weight.copy_(torch.from_numpy(tensors["conv2.weight"]))
            self.conv2.bias.copy_(torch.from_numpy(tensors["conv2.bias"]))
        self.eval()

    def forward(self, x):
        t1 = self.conv1(x)
        h = self.pool1(torch.relu(self.bn1(t1)))
        t2 = self.conv2(h)
        return t1, t2


def fixture_torch_model(seed: int = 0) -> FixtureNet:
    return FixtureNet(fixture_tensors(seed))

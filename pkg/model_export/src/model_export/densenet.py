"""DenseNet-161 structural walk.

Builds the node list, tensor table, and the 1-based enumeration of
convolution layers in execution order.  The torchvision classifier
(a Linear on the pooled features) is emitted as an equivalent 1x1
convolution applied after global average pooling, which brings the
convolution count to the documented 161 and keeps tap indices
well-defined across the whole network.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from . import ExportError

BLOCK_SIZES = (6, 12, 36, 24)
DEFAULT_TAP_INDICES = (13, 26, 39, 52, 65, 78, 91, 104, 112, 125, 138, 151)
TOTAL_CONVS = 161
INPUT_SHAPE = [3, 224, 224]
REQUIRED_TAP = 112


@dataclass
class GraphBuild:
    nodes: list[dict] = field(default_factory=list)
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    conv_channels: dict[int, int] = field(default_factory=dict)  # conv index -> C_out
    conv_names: dict[int, str] = field(default_factory=dict)
    conv_modules: dict[int, str] = field(default_factory=dict)  # torch module path


def build_densenet161(init: str = "pretrained", seed: int = 0) -> nn.Module:
    """Instantiate the zoo model; ``init="random"`` gives seeded weights."""
    import torchvision.models as models

    if init == "pretrained":
        try:
            return models.densenet161(weights=models.DenseNet161_Weights.IMAGENET1K_V1).eval()
        except Exception as exc:
            raise ExportError(f"pretrained weight download failed: {exc}") from exc
    if init != "random":
        raise ExportError(f"unknown init {init!r}; expected 'pretrained' or 'random'")
    model = models.densenet161(weights=None)
    _randomize(model, seed)
    return model.eval()


def _randomize(model: nn.Module, seed: int) -> None:
    """Seeded, forward-stable random weights (He-scaled convolutions,
    near-identity batchnorm statistics)."""
    rng = np.random.default_rng([seed, 0xDE5E])
    state = model.state_dict()
    for name in sorted(state):
        tensor = state[name]
        if name.endswith("num_batches_tracked"):
            continue
        shape = tuple(tensor.shape)
        if "conv" in name and name.endswith("weight"):
            fan_in = int(np.prod(shape[1:]))
            values = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
        elif name == "classifier.weight":
            values = rng.normal(0.0, 0.02, size=shape)
        elif name == "classifier.bias":
            values = np.zeros(shape)
        elif name.endswith("running_var"):
            values = rng.uniform(0.8, 1.2, size=shape)
        elif name.endswith("running_mean"):
            values = rng.normal(0.0, 0.05, size=shape)
        elif name.endswith("bias"):  # batchnorm beta
            values = rng.normal(0.0, 0.05, size=shape)
        elif name.endswith("weight"):  # batchnorm gamma
            values = rng.uniform(0.9, 1.1, size=shape)
        else:
            raise ExportError(f"unexpected state entry {name!r}")
        state[name] = torch.from_numpy(values.astype(np.float32))
    model.load_state_dict(state)


def walk(model: nn.Module) -> GraphBuild:
    """Emit nodes in execution order; tensor names follow the state dict."""
    build = GraphBuild()
    state = {k: v.detach().cpu().numpy().astype(np.float32) for k, v in model.state_dict().items()}
    conv_index = 0

    def tensor(name: str) -> str:
        if name not in state:
            raise ExportError(f"state dict is missing {name!r}")
        build.tensors[name] = state[name]
        return name

    def conv(name: str, src: str, stride: int, padding: int, module_path: str) -> str:
        nonlocal conv_index
        conv_index += 1
        weight = tensor(f"{module_path}.weight")
        weights = {"weight": weight}
        if f"{module_path}.bias" in state:
            weights["bias"] = tensor(f"{module_path}.bias")
        build.nodes.append(
            {
                "name": name,
                "op": "conv2d",
                "inputs": [src],
                "attrs": {"stride": [stride, stride], "padding": [padding, padding]},
                "weights": weights,
            }
        )
        build.conv_channels[conv_index] = int(state[weight].shape[0])
        build.conv_names[conv_index] = name
        build.conv_modules[conv_index] = module_path
        return name

    def batchnorm(name: str, src: str, module_path: str) -> str:
        build.nodes.append(
            {
                "name": name,
                "op": "batchnorm",
                "inputs": [src],
                "attrs": {"epsilon": 1e-5},
                "weights": {
                    "gamma": tensor(f"{module_path}.weight"),
                    "beta": tensor(f"{module_path}.bias"),
                    "mean": tensor(f"{module_path}.running_mean"),
                    "var": tensor(f"{module_path}.running_var"),
                },
            }
        )
        return name

    def simple(name: str, op: str, inputs: list[str], attrs: dict | None = None) -> str:
        build.nodes.append(
            {"name": name, "op": op, "inputs": inputs, "attrs": attrs or {}, "weights": {}}
        )
        return name

    cur = conv("features.conv0", "input", 2, 3, "features.conv0")
    cur = batchnorm("features.norm0", cur, "features.norm0")
    cur = simple("features.relu0", "relu", [cur])
    cur = simple(
        "features.pool0", "maxpool", [cur],
        {"kernel": [3, 3], "stride": [2, 2], "padding": [1, 1]},
    )

    for b, n_layers in enumerate(BLOCK_SIZES, start=1):
        block = f"features.denseblock{b}"
        feature_list = [cur]
        for layer in range(1, n_layers + 1):
            prefix = f"{block}.denselayer{layer}"
            if len(feature_list) == 1:
                src = feature_list[0]
            else:
                src = simple(f"{prefix}.concat", "concat", list(feature_list))
            h = batchnorm(f"{prefix}.norm1", src, f"{prefix}.norm1")
            h = simple(f"{prefix}.relu1", "relu", [h])
            h = conv(f"{prefix}.conv1", h, 1, 0, f"{prefix}.conv1")
            h = batchnorm(f"{prefix}.norm2", h, f"{prefix}.norm2")
            h = simple(f"{prefix}.relu2", "relu", [h])
            h = conv(f"{prefix}.conv2", h, 1, 1, f"{prefix}.conv2")
            feature_list.append(h)
        cur = simple(f"{block}.concat", "concat", list(feature_list))
        if b < len(BLOCK_SIZES):
            prefix = f"features.transition{b}"
            cur = batchnorm(f"{prefix}.norm", cur, f"{prefix}.norm")
            cur = simple(f"{prefix}.relu", "relu", [cur])
            cur = conv(f"{prefix}.conv", cur, 1, 0, f"{prefix}.conv")
            cur = simple(
                f"{prefix}.pool", "avgpool", [cur],
                {"kernel": [2, 2], "stride": [2, 2], "padding": [0, 0]},
            )

    cur = batchnorm("features.norm5", cur, "features.norm5")
    cur = simple("final.relu", "relu", [cur])
    cur = simple("final.gap", "global_avgpool", [cur])

    # the Linear classifier as an equivalent 1x1 convolution on the
    # pooled C x 1 x 1 tensor; this is convolution number 161
    weight = state["classifier.weight"]
    build.tensors["classifier.weight"] = weight.reshape(*weight.shape, 1, 1)
    build.tensors["classifier.bias"] = state["classifier.bias"]
    conv_index += 1
    build.nodes.append(
        {
            "name": "classifier",
            "op": "conv2d",
            "inputs": [cur],
            "attrs": {"stride": [1, 1], "padding": [0, 0]},
            "weights": {"weight": "classifier.weight", "bias": "classifier.bias"},
        }
    )
    build.conv_channels[conv_index] = int(weight.shape[0])
    build.conv_names[conv_index] = "classifier"
    build.conv_modules[conv_index] = "classifier"

    if conv_index != TOTAL_CONVS:
        raise ExportError(f"expected {TOTAL_CONVS} convolutions, walked {conv_index}")
    return build


def make_tap_manifest(build: GraphBuild, indices) -> list[dict]:
    indices = tuple(int(i) for i in indices)
    if len(indices) != 12:
        raise ExportError(f"tap manifest needs exactly 12 entries, got {len(indices)}")
    if list(indices) != sorted(set(indices)):
        raise ExportError("tap indices must be strictly increasing")
    if indices[0] < 1 or indices[-1] > TOTAL_CONVS:
        raise ExportError(f"tap indices must lie in 1..{TOTAL_CONVS}")
    if REQUIRED_TAP not in indices:
        raise ExportError(f"tap manifest must include convolution {REQUIRED_TAP}")
    return [
        {
            "name": build.conv_names[i],
            "conv_index": i,
            "channels": build.conv_channels[i],
        }
        for i in indices
    ]

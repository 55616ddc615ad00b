"""Model bundle loading and validation.

On-disk layout (a directory or a .zip with the same member names):

  graph.json        {"nodes": [...], "taps": [...], "input_shape": [C,H,W],
                     "conv_count": N, "sha256": hex digest of weights.bin}
  weights.bin       concatenated little-endian float32 tensors
  weights.idx.json  tensor name -> {"offset": byte offset, "shape": [...]}

Each node object: {"name", "op", "inputs": [names], "attrs": {...},
"weights": {role: tensor name}}.  ``op`` is one of conv2d, batchnorm,
relu, maxpool, avgpool, concat, global_avgpool.  The reserved name
"input" denotes the image tensor.  Tap entries are {"name", "conv_index",
"channels"} where conv_index is the 1-based position among conv2d nodes
in topological order.

Loading validates everything eagerly: the checksum, weight resolution,
acyclicity, tap existence, the conv-node count, and a full static shape
inference whose per-node output shapes are kept on the bundle.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BundleError,
    ChecksumMismatchError,
    CyclicGraphError,
    TapNotFoundError,
    UnresolvedWeightError,
)

INPUT_NAME = "input"

SUPPORTED_OPS = (
    "conv2d",
    "batchnorm",
    "relu",
    "maxpool",
    "avgpool",
    "concat",
    "global_avgpool",
)

_WEIGHT_ROLES = {
    "conv2d": {"required": ("weight",), "optional": ("bias",)},
    "batchnorm": {"required": ("gamma", "beta", "mean", "var"), "optional": ()},
}


def _pair(value, what: str, node: str) -> tuple[int, int]:
    if isinstance(value, int):
        return (value, value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return (int(value[0]), int(value[1]))
    raise BundleError(f"node {node}: malformed {what} attribute {value!r}")


@dataclass(frozen=True)
class Node:
    name: str
    op: str
    inputs: tuple[str, ...]
    attrs: dict
    weights: dict[str, str]

    def stride(self) -> tuple[int, int]:
        return _pair(self.attrs.get("stride", 1), "stride", self.name)

    def padding(self) -> tuple[int, int]:
        return _pair(self.attrs.get("padding", 0), "padding", self.name)

    def kernel(self) -> tuple[int, int]:
        if "kernel" not in self.attrs:
            raise BundleError(f"node {self.name}: missing kernel attribute")
        return _pair(self.attrs["kernel"], "kernel", self.name)

    def epsilon(self) -> float:
        return float(self.attrs.get("epsilon", 1e-5))


@dataclass(frozen=True)
class Tap:
    name: str
    conv_index: int
    channels: int


@dataclass
class ModelBundle:
    nodes: list[Node]  # topologically ordered
    taps: list[Tap]
    input_shape: tuple[int, int, int]
    conv_count: int
    weights: dict[str, np.ndarray]
    shapes: dict[str, tuple[int, int, int]] = field(default_factory=dict)

    def node_map(self) -> dict[str, Node]:
        return {n.name: n for n in self.nodes}


def _read_members(path: Path) -> tuple[dict, dict, bytes]:
    names = ("graph.json", "weights.idx.json", "weights.bin")
    if path.is_dir():
        blobs = {}
        for name in names:
            member = path / name
            if not member.is_file():
                raise BundleError(f"bundle member missing: {member}")
            blobs[name] = member.read_bytes()
    elif zipfile.is_zipfile(path):
        with zipfile.ZipFile(path) as zf:
            present = set(zf.namelist())
            for name in names:
                if name not in present:
                    raise BundleError(f"bundle member missing from zip: {name}")
            blobs = {name: zf.read(name) for name in names}
    else:
        raise BundleError(f"bundle path is neither a directory nor a zip: {path}")
    try:
        graph = json.loads(blobs["graph.json"])
        index = json.loads(blobs["weights.idx.json"])
    except json.JSONDecodeError as exc:
        raise BundleError(f"malformed bundle JSON: {exc}") from None
    return graph, index, blobs["weights.bin"]


def _topological_order(nodes: list[Node]) -> list[Node]:
    """Kahn's algorithm, keeping the file order whenever it is valid."""
    by_name = {n.name: n for n in nodes}
    position = {n.name: i for i, n in enumerate(nodes)}
    indegree = {n.name: 0 for n in nodes}
    consumers: dict[str, list[str]] = {n.name: [] for n in nodes}
    for n in nodes:
        for src in n.inputs:
            if src == INPUT_NAME:
                continue
            if src not in by_name:
                raise BundleError(f"node {n.name}: unknown input {src!r}")
            indegree[n.name] += 1
            consumers[src].append(n.name)
    ready = [position[name] for name, deg in indegree.items() if deg == 0]
    heapq.heapify(ready)
    ordered: list[Node] = []
    while ready:
        name = nodes[heapq.heappop(ready)].name
        ordered.append(by_name[name])
        for consumer in consumers[name]:
            indegree[consumer] -= 1
            if indegree[consumer] == 0:
                heapq.heappush(ready, position[consumer])
    if len(ordered) != len(nodes):
        stuck = sorted(set(by_name) - {n.name for n in ordered})
        raise CyclicGraphError(f"graph contains a cycle involving: {', '.join(stuck)}")
    return ordered


def _conv_out(size: int, kernel: int, stride: int, pad: int, node: str) -> int:
    out = (size + 2 * pad - kernel) // stride + 1
    if out < 1:
        raise BundleError(f"node {node}: output spatial size collapses to {out}")
    return out


def infer_shapes(
    nodes: list[Node],
    input_shape: tuple[int, int, int],
    weights: dict[str, np.ndarray],
) -> dict[str, tuple[int, int, int]]:
    """Static C,H,W inference in topological order; validates weights."""
    shapes: dict[str, tuple[int, int, int]] = {INPUT_NAME: tuple(input_shape)}
    for n in nodes:
        in_shapes = [shapes[src] for src in n.inputs]
        if n.op == "conv2d":
            (c, h, w) = in_shapes[0]
            wt = weights[n.weights["weight"]]
            if wt.ndim != 4 or wt.shape[1] != c:
                raise BundleError(
                    f"node {n.name}: weight shape {wt.shape} does not accept {c} input channels"
                )
            kh, kw = wt.shape[2], wt.shape[3]
            sh, sw = n.stride()
            ph, pw = n.padding()
            shape = (
                wt.shape[0],
                _conv_out(h, kh, sh, ph, n.name),
                _conv_out(w, kw, sw, pw, n.name),
            )
            if "bias" in n.weights and weights[n.weights["bias"]].shape != (wt.shape[0],):
                raise BundleError(f"node {n.name}: bias shape mismatch")
        elif n.op == "batchnorm":
            (c, h, w) = in_shapes[0]
            for role in ("gamma", "beta", "mean", "var"):
                if weights[n.weights[role]].shape != (c,):
                    raise BundleError(
                        f"node {n.name}: {role} has shape "
                        f"{weights[n.weights[role]].shape}, expected ({c},)"
                    )
            shape = (c, h, w)
        elif n.op == "relu":
            shape = in_shapes[0]
        elif n.op in ("maxpool", "avgpool"):
            (c, h, w) = in_shapes[0]
            kh, kw = n.kernel()
            sh, sw = n.stride()
            ph, pw = n.padding()
            shape = (c, _conv_out(h, kh, sh, ph, n.name), _conv_out(w, kw, sw, pw, n.name))
        elif n.op == "concat":
            hw = {(h, w) for (_, h, w) in in_shapes}
            if len(hw) != 1:
                raise BundleError(f"node {n.name}: concat inputs disagree on spatial dims {hw}")
            shape = (sum(c for (c, _, _) in in_shapes), *hw.pop())
        elif n.op == "global_avgpool":
            (c, h, w) = in_shapes[0]
            if h < 1 or w < 1:
                raise BundleError(f"node {n.name}: empty spatial dims")
            shape = (c, 1, 1)
        else:
            raise BundleError(f"node {n.name}: unsupported op {n.op!r}")
        shapes[n.name] = shape
    return shapes


def _arity(op: str) -> tuple[int, int]:
    if op == "concat":
        return (2, 1_000_000)
    return (1, 1)


def load_bundle(path: str | Path) -> ModelBundle:
    """Load and eagerly validate a bundle from a directory or zip."""
    path = Path(path)
    graph, index, blob = _read_members(path)

    for key in ("nodes", "taps", "input_shape", "conv_count", "sha256"):
        if key not in graph:
            raise BundleError(f"graph.json missing field {key!r}")
    digest = hashlib.sha256(blob).hexdigest()
    if digest != graph["sha256"]:
        raise ChecksumMismatchError(
            f"weights.bin sha256 {digest} does not match recorded {graph['sha256']}"
        )

    nodes: list[Node] = []
    seen: set[str] = set()
    for raw in graph["nodes"]:
        name = raw["name"]
        if name == INPUT_NAME or name in seen:
            raise BundleError(f"duplicate or reserved node name {name!r}")
        seen.add(name)
        op = raw["op"]
        if op not in SUPPORTED_OPS:
            raise BundleError(f"node {name}: unsupported op {op!r}")
        inputs = tuple(raw.get("inputs", ()))
        lo, hi = _arity(op)
        if not lo <= len(inputs) <= hi:
            raise BundleError(f"node {name}: op {op} takes {lo} input(s), got {len(inputs)}")
        nodes.append(
            Node(
                name=name,
                op=op,
                inputs=inputs,
                attrs=dict(raw.get("attrs", {})),
                weights=dict(raw.get("weights", {})),
            )
        )
    if not nodes:
        raise BundleError("bundle has no nodes")

    nodes = _topological_order(nodes)

    weights: dict[str, np.ndarray] = {}
    for node in nodes:
        roles = _WEIGHT_ROLES.get(node.op, {"required": (), "optional": ()})
        for role in roles["required"]:
            if role not in node.weights:
                raise BundleError(f"node {node.name}: missing required weight role {role!r}")
        for role, tensor_name in node.weights.items():
            if role not in roles["required"] + roles["optional"]:
                raise BundleError(f"node {node.name}: unexpected weight role {role!r}")
            if tensor_name in weights:
                continue
            entry = index.get(tensor_name)
            if entry is None:
                raise UnresolvedWeightError(f"unresolved weight {tensor_name!r}")
            shape = tuple(int(d) for d in entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            offset = int(entry["offset"])
            if offset < 0 or offset + 4 * count > len(blob):
                raise UnresolvedWeightError(
                    f"weight {tensor_name!r} extends past weights.bin "
                    f"(offset {offset}, {count} floats, file {len(blob)} bytes)"
                )
            weights[tensor_name] = np.frombuffer(
                blob, dtype="<f4", count=count, offset=offset
            ).reshape(shape)

    input_shape = tuple(int(d) for d in graph["input_shape"])
    if len(input_shape) != 3 or any(d < 1 for d in input_shape):
        raise BundleError(f"malformed input_shape {graph['input_shape']!r}")

    conv_nodes = sum(1 for n in nodes if n.op == "conv2d")
    if conv_nodes != int(graph["conv_count"]):
        raise BundleError(
            f"conv count mismatch: metadata says {graph['conv_count']}, graph has {conv_nodes}"
        )

    shapes = infer_shapes(nodes, input_shape, weights)

    node_names = {n.name for n in nodes}
    taps: list[Tap] = []
    for raw in graph["taps"]:
        tap = Tap(
            name=raw["name"],
            conv_index=int(raw["conv_index"]),
            channels=int(raw["channels"]),
        )
        if tap.name not in node_names:
            raise TapNotFoundError(f"tap not found: {tap.name!r}")
        if tap.conv_index < 1:
            raise BundleError(f"tap {tap.name}: conv_index must be >= 1")
        if shapes[tap.name][0] != tap.channels:
            raise BundleError(
                f"tap {tap.name}: declared {tap.channels} channels, "
                f"graph produces {shapes[tap.name][0]}"
            )
        taps.append(tap)
    if not taps:
        raise BundleError("bundle declares no taps")

    return ModelBundle(
        nodes=nodes,
        taps=taps,
        input_shape=input_shape,
        conv_count=conv_nodes,
        weights=weights,
        shapes=shapes,
    )

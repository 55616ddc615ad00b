"""Graph execution and feature extraction.

Nodes are evaluated in the bundle's topological order, float32
throughout; conv2d is cross-correlation (no kernel flip) implemented via
im2col and a single matmul.  Intermediate tensors are freed as soon as no
remaining node or tap needs them, and an optional stats object reports
the peak number of retained bytes so the liveness rule is testable.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bundle import INPUT_NAME, ModelBundle, Node
from .errors import ShapeError


@dataclass
class ExecutionStats:
    peak_retained_bytes: int = 0
    nodes_evaluated: int = 0

    def observe(self, live_bytes: int) -> None:
        self.peak_retained_bytes = max(self.peak_retained_bytes, live_bytes)


def _conv2d(x: np.ndarray, weight: np.ndarray, bias, stride, padding) -> np.ndarray:
    c_in, h, w = x.shape
    c_out, _, kh, kw = weight.shape
    sh, sw = stride
    ph, pw = padding
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (w + 2 * pw - kw) // sw + 1
    if ph or pw:
        padded = np.zeros((c_in, h + 2 * ph, w + 2 * pw), dtype=np.float32)
        padded[:, ph : ph + h, pw : pw + w] = x
    else:
        padded = x
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(1, 2))
    windows = windows[:, ::sh, ::sw, :, :]  # (C, OH, OW, KH, KW)
    cols = windows.transpose(0, 3, 4, 1, 2).reshape(c_in * kh * kw, oh * ow)
    flat = weight.reshape(c_out, c_in * kh * kw) @ np.ascontiguousarray(cols)
    out = flat.reshape(c_out, oh, ow)
    if bias is not None:
        out += bias[:, None, None]
    return out


def _pool_windows(x: np.ndarray, kernel, stride, padding, fill: float) -> np.ndarray:
    c, h, w = x.shape
    kh, kw = kernel
    sh, sw = stride
    ph, pw = padding
    if ph or pw:
        padded = np.full((c, h + 2 * ph, w + 2 * pw), fill, dtype=np.float32)
        padded[:, ph : ph + h, pw : pw + w] = x
    else:
        padded = x
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(1, 2))
    return windows[:, ::sh, ::sw, :, :]


def _eval_node(node: Node, inputs: list[np.ndarray], bundle: ModelBundle) -> np.ndarray:
    if node.op == "conv2d":
        weight = bundle.weights[node.weights["weight"]]
        bias = bundle.weights[node.weights["bias"]] if "bias" in node.weights else None
        return _conv2d(inputs[0], weight, bias, node.stride(), node.padding())
    if node.op == "batchnorm":
        gamma = bundle.weights[node.weights["gamma"]]
        beta = bundle.weights[node.weights["beta"]]
        mean = bundle.weights[node.weights["mean"]]
        var = bundle.weights[node.weights["var"]]
        scale = (gamma / np.sqrt(var + np.float32(node.epsilon()))).astype(np.float32)
        shift = (beta - mean * scale).astype(np.float32)
        return inputs[0] * scale[:, None, None] + shift[:, None, None]
    if node.op == "relu":
        return np.maximum(inputs[0], np.float32(0.0))
    if node.op == "maxpool":
        windows = _pool_windows(
            inputs[0], node.kernel(), node.stride(), node.padding(), -np.inf
        )
        return windows.max(axis=(3, 4))
    if node.op == "avgpool":
        windows = _pool_windows(inputs[0], node.kernel(), node.stride(), node.padding(), 0.0)
        return windows.mean(axis=(3, 4), dtype=np.float32)
    if node.op == "concat":
        return np.concatenate(inputs, axis=0)
    if node.op == "global_avgpool":
        return inputs[0].mean(axis=(1, 2), keepdims=True, dtype=np.float32)
    raise ShapeError(f"node {node.name}: unsupported op {node.op!r}")


def execute(
    bundle: ModelBundle,
    image: np.ndarray,
    stats: ExecutionStats | None = None,
) -> dict[str, np.ndarray]:
    """Run the graph on one image and return the tap activations."""
    image = np.asarray(image, dtype=np.float32)
    if image.shape != bundle.input_shape:
        raise ShapeError(
            f"input: expected shape {bundle.input_shape}, got {tuple(image.shape)}"
        )

    remaining_uses: dict[str, int] = {INPUT_NAME: 0}
    for node in bundle.nodes:
        remaining_uses[node.name] = 0
        for src in node.inputs:
            remaining_uses[src] += 1
    tap_names = {t.name for t in bundle.taps}

    live: dict[str, np.ndarray] = {INPUT_NAME: image}
    taps: dict[str, np.ndarray] = {}

    def live_bytes() -> int:
        return sum(t.nbytes for t in live.values())

    for node in bundle.nodes:
        inputs = [live[src] for src in node.inputs]
        out = _eval_node(node, inputs, bundle)
        expected = bundle.shapes[node.name]
        if tuple(out.shape) != expected:
            raise ShapeError(
                f"node {node.name}: produced shape {tuple(out.shape)}, inferred {expected}"
            )
        if out.dtype != np.float32:
            out = out.astype(np.float32)
        live[node.name] = out
        if node.name in tap_names:
            taps[node.name] = out
        for src in node.inputs:
            remaining_uses[src] -= 1
            if remaining_uses[src] == 0 and src not in tap_names:
                del live[src]
        if remaining_uses[node.name] == 0 and node.name not in tap_names:
            del live[node.name]
        if stats is not None:
            stats.nodes_evaluated += 1
            stats.observe(live_bytes())
    return taps


def pool_features(activation: np.ndarray) -> np.ndarray:
    """Global average pooling: C,H,W -> length-C vector."""
    if activation.ndim != 3:
        raise ShapeError(f"expected a 3-D activation, got shape {tuple(activation.shape)}")
    c, h, w = activation.shape
    if h < 1 or w < 1:
        raise ShapeError(f"empty spatial dims {(h, w)}")
    return activation.mean(axis=(1, 2), dtype=np.float32)


def extract_all(
    bundle: ModelBundle,
    images,
    jobs: int = 1,
) -> dict[str, np.ndarray]:
    """Pooled feature matrices (instances x channels), one per tap.

    Row order equals instance order regardless of ``jobs``; every image
    is executed independently so threading cannot change the numbers.
    """
    images = list(images)
    matrices = {
        t.name: np.empty((len(images), t.channels), dtype=np.float32) for t in bundle.taps
    }

    def run_one(i: int) -> None:
        taps = execute(bundle, images[i])
        for name, activation in taps.items():
            matrices[name][i, :] = pool_features(activation)

    if jobs > 1 and len(images) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(run_one, range(len(images))))
    else:
        for i in range(len(images)):
            run_one(i)
    return matrices

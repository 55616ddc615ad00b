"""Bundle serialization: graph.json, weights.bin, weights.idx.json."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np


def write_bundle(
    out_dir: str | Path,
    nodes: list[dict],
    taps: list[dict],
    tensors: dict[str, np.ndarray],
    input_shape: list[int],
    conv_count: int,
) -> Path:
    """Write the three bundle members; tensors go out in insertion order
    so exports are byte-identical for identical weights."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    index: dict[str, dict] = {}
    digest = hashlib.sha256()
    offset = 0
    with open(out_dir / "weights.bin", "wb") as fh:
        for name, tensor in tensors.items():
            blob = np.ascontiguousarray(tensor, dtype="<f4").tobytes()
            fh.write(blob)
            digest.update(blob)
            index[name] = {"offset": offset, "shape": list(tensor.shape)}
            offset += len(blob)

    graph = {
        "nodes": nodes,
        "taps": taps,
        "input_shape": list(input_shape),
        "conv_count": conv_count,
        "sha256": digest.hexdigest(),
    }
    (out_dir / "graph.json").write_text(json.dumps(graph, indent=1) + "\n")
    (out_dir / "weights.idx.json").write_text(json.dumps(index, indent=1) + "\n")
    return out_dir

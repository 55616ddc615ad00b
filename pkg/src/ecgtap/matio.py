"""Binary feature-matrix files and the per-extraction index.

Matrix file: rows u32, cols u32 (little-endian), then row-major
little-endian float32 values.  The index (features.json) records which
tap produced which file so evaluation can run from cached features.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .bundle import Tap
from .errors import DataError


def save_matrix(path: str | Path, matrix: np.ndarray) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {matrix.shape}")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<II", matrix.shape[0], matrix.shape[1]))
        fh.write(matrix.tobytes())


def load_matrix(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < 8:
        raise DataError(f"{path}: truncated matrix file")
    rows, cols = struct.unpack_from("<II", data, 0)
    expected = 8 + 4 * rows * cols
    if len(data) != expected:
        raise DataError(
            f"{path}: expected {expected} bytes for {rows}x{cols}, found {len(data)}"
        )
    return np.frombuffer(data, dtype="<f4", count=rows * cols, offset=8).reshape(rows, cols)


def write_feature_index(
    directory: str | Path,
    taps: list[Tap],
    files: dict[str, str],
    rows: int,
    dataset_path: str,
) -> Path:
    index = {
        "dataset": dataset_path,
        "rows": rows,
        "taps": [
            {
                "name": t.name,
                "conv_index": t.conv_index,
                "channels": t.channels,
                "file": files[t.name],
            }
            for t in sorted(taps, key=lambda t: t.conv_index)
        ],
    }
    path = Path(directory) / "features.json"
    path.write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    return path


def read_feature_index(directory: str | Path) -> tuple[list[Tap], dict[str, Path], int, str]:
    path = Path(directory) / "features.json"
    if not path.is_file():
        raise DataError(f"feature index not found: {path}")
    raw = json.loads(path.read_text())
    taps = [
        Tap(name=t["name"], conv_index=int(t["conv_index"]), channels=int(t["channels"]))
        for t in raw["taps"]
    ]
    files = {t["name"]: Path(directory) / t["file"] for t in raw["taps"]}
    return taps, files, int(raw["rows"]), raw["dataset"]

"""Shared builders for synthetic records, datasets, and model bundles.

The on-disk writers intentionally produce the file formats independently
of the package code (via the oracle encoders), so reading them back
exercises real cross-implementation round trips.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from ecgtap.dataset import RhythmClass, WindowInstance
from ecgtap.wfdb import Annotation, EcgRecord, RecordHeader, SignalSpec

from oracles import encode_16, encode_212, encode_annotations


def make_record(
    name: str,
    n_samples: int = 4000,
    events: list[tuple[int, int, str | None]] = (),
    fs: float = 250.0,
    n_channels: int = 1,
    adc_gain: float = 200.0,
    adc_zero: int = 0,
    seed: int = 0,
) -> EcgRecord:
    """In-memory record with random 12-bit content and given annotations.

    ``events`` are (sample_index, type_code, aux) triples.
    """
    rng = np.random.default_rng(seed)
    signals = [
        rng.integers(-2048, 2048, size=n_samples).astype(np.int16)
        for _ in range(n_channels)
    ]
    specs = tuple(
        SignalSpec(
            file_name=f"{name}.dat",
            format_code=212,
            adc_gain=adc_gain,
            baseline=adc_zero,
            adc_zero=adc_zero,
            description=f"ECG{c + 1}",
        )
        for c in range(n_channels)
    )
    header = RecordHeader(
        record_name=name,
        n_signals=n_channels,
        sampling_frequency=fs,
        n_samples=n_samples,
        signals=specs,
    )
    annotations = [
        Annotation(sample_index=idx, type_code=code, aux=aux)
        for idx, code, aux in sorted(events)
    ]
    return EcgRecord(header=header, signals=signals, annotations=annotations)


def write_record_files(
    directory: Path,
    name: str,
    channels: list[np.ndarray],
    events: list[tuple[int, int, str | None]],
    fmt: int = 212,
    fs: float = 250.0,
    adc_gain: float = 200.0,
) -> None:
    """Write .hea/.dat/.atr files for a synthetic record."""
    n_channels = len(channels)
    n_samples = len(channels[0])
    flat = np.empty(n_channels * n_samples, dtype=np.int64)
    for c, ch in enumerate(channels):
        flat[c::n_channels] = ch
    if fmt == 212:
        if flat.size % 2:
            flat = np.append(flat, 0)
        payload = encode_212(flat.tolist())
    elif fmt == 16:
        payload = encode_16(flat.tolist())
    else:
        raise ValueError(fmt)
    (directory / f"{name}.dat").write_bytes(payload)
    lines = [f"{name} {n_channels} {fs:g} {n_samples}"]
    for c in range(n_channels):
        lines.append(f"{name}.dat {fmt} {adc_gain:g} 12 0 0 0 0 ECG{c + 1}")
    (directory / f"{name}.hea").write_text("\n".join(lines) + "\n")
    anns = [(idx, code, 0, 0, 0, aux) for idx, code, aux in sorted(events)]
    (directory / f"{name}.atr").write_bytes(encode_annotations(anns))


def write_synthetic_database(
    root: Path,
    records: int,
    rhythm_aux: str | None,
    beat_codes: bool = False,
    n_samples: int = 6000,
    seed: int = 0,
    base_freq: float = 5.0,
    fs: float = 250.0,
) -> None:
    """A tiny on-disk database: sinusoid content, one kind of annotation.

    Rhythm databases get aux-marked rhythm-change annotations (code 28);
    ``beat_codes`` databases get plain beat annotations (code 1).
    """
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    for r in range(records):
        t = np.arange(n_samples) / fs
        freq = base_freq * (1.0 + 0.1 * rng.standard_normal())
        sig = 400.0 * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
        sig = sig + 40.0 * rng.standard_normal(n_samples)
        channel = np.clip(np.round(sig), -2048, 2047).astype(np.int64)
        events: list[tuple[int, int, str | None]] = []
        if beat_codes:
            for idx in range(250, n_samples - 600, 450):
                events.append((idx, 1, None))
        if rhythm_aux is not None:
            for idx in range(600, n_samples - 800, 1200):
                events.append((idx, 28, rhythm_aux))
        write_record_files(root, f"rec{r:02d}", [channel], events, fs=fs)


def make_smoke_instances(
    n: int = 200,
    seed: int = 2024,
    freq_lo: float = 5.0,
    freq_hi: float = 30.0,
    fs: float = 250.0,
    snr_db: float = 20.0,
) -> list[WindowInstance]:
    """Two-class dataset of frequency-separated noisy sinusoids."""
    rng = np.random.default_rng(seed)
    t = np.arange(500) / fs
    noise_sigma = float(np.sqrt(0.5 / 10.0 ** (snr_db / 10.0)))
    instances = []
    for i in range(n):
        label = RhythmClass.NORMAL if i % 2 == 0 else RhythmClass.AF
        freq = freq_lo if label == RhythmClass.NORMAL else freq_hi
        phase = rng.uniform(0.0, 2.0 * np.pi)
        x = np.sin(2 * np.pi * freq * t + phase) + noise_sigma * rng.standard_normal(500)
        instances.append(
            WindowInstance(
                samples=x.astype(np.float32),
                label=label,
                source_record=f"synthetic/{i:03d}",
                start_index=0,
                channel=0,
            )
        )
    return instances


def build_fixture_bundle(directory: Path, seed: int = 7, zipped: bool = False) -> Path:
    """Write a small 9-node bundle exercising all seven operator kinds.

    Layout: conv1(3->8, k5 s4 p2) -> bn1 -> relu1 -> maxpool -> conv2
    (8->16, k3 s2 p1) -> relu2 -> concat(conv2, relu2) -> avgpool ->
    global_avgpool.  Taps: conv1 and conv2 outputs.
    """
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {
        "conv1.weight": rng.normal(0.0, 0.12, size=(8, 3, 5, 5)).astype(np.float32),
        "conv1.bias": rng.normal(0.0, 0.05, size=(8,)).astype(np.float32),
        "bn1.gamma": rng.uniform(0.8, 1.2, size=(8,)).astype(np.float32),
        "bn1.beta": rng.normal(0.0, 0.1, size=(8,)).astype(np.float32),
        "bn1.mean": rng.normal(0.0, 0.2, size=(8,)).astype(np.float32),
        "bn1.var": rng.uniform(0.5, 1.5, size=(8,)).astype(np.float32),
        "conv2.weight": rng.normal(0.0, 0.1, size=(16, 8, 3, 3)).astype(np.float32),
        "conv2.bias": rng.normal(0.0, 0.05, size=(16,)).astype(np.float32),
    }
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
        {
            "name": "cat",
            "op": "concat",
            "inputs": ["conv2", "relu2"],
            "attrs": {},
            "weights": {},
        },
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
    return write_bundle(directory, nodes, taps, tensors, [3, 224, 224], zipped=zipped)


def write_bundle(
    directory: Path,
    nodes: list[dict],
    taps: list[dict],
    tensors: dict[str, np.ndarray],
    input_shape: list[int],
    conv_count: int | None = None,
    zipped: bool = False,
    tamper_sha: bool = False,
) -> Path:
    """Serialize a bundle (graph.json, weights.bin, weights.idx.json)."""
    directory.mkdir(parents=True, exist_ok=True)
    blob = bytearray()
    index: dict[str, dict] = {}
    for name, tensor in tensors.items():
        index[name] = {"offset": len(blob), "shape": list(tensor.shape)}
        blob += np.ascontiguousarray(tensor, dtype="<f4").tobytes()
    digest = hashlib.sha256(bytes(blob)).hexdigest()
    if tamper_sha:
        digest = "0" * 64
    if conv_count is None:
        conv_count = sum(1 for n in nodes if n["op"] == "conv2d")
    graph = {
        "nodes": nodes,
        "taps": taps,
        "input_shape": input_shape,
        "conv_count": conv_count,
        "sha256": digest,
    }
    if zipped:
        import zipfile

        path = directory / "bundle.zip"
        with zipfile.ZipFile(path, "w") as zf:
            zf.writestr("graph.json", json.dumps(graph, indent=1))
            zf.writestr("weights.bin", bytes(blob))
            zf.writestr("weights.idx.json", json.dumps(index, indent=1))
        return path
    (directory / "graph.json").write_text(json.dumps(graph, indent=1))
    (directory / "weights.bin").write_bytes(bytes(blob))
    (directory / "weights.idx.json").write_text(json.dumps(index, indent=1))
    return directory

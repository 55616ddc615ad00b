"""Spectrogram images from fixed-length signal windows.

A window is split into a fixed number of equal partitions (default 31;
remainder samples at the tail are dropped), each partition is Hamming
windowed and run through a one-sided DFT, and the squared magnitudes are
mapped to decibels with a small floor so silent partitions stay finite.
A 500-sample window therefore becomes a 9x31 matrix (16-sample
partitions, 16/2+1 frequency bins).

``to_image`` turns that matrix into the 3x224x224 float32 tensor the
pretrained network expects: per-instance min-max to [0,1], corner-aligned
bilinear resize, channel replication, then the fixed per-channel
standardization the network was trained with.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LOG_POWER_FLOOR = 1e-12
DEFAULT_PARTITIONS = 31

# Standardization constants of the pretrained network's training pipeline.
CHANNEL_MEAN = (0.485, 0.456, 0.406)
CHANNEL_STD = (0.229, 0.224, 0.225)

_WINDOWS = {
    "hamming": np.hamming,
    "rectangular": np.ones,
}


@dataclass(frozen=True)
class Spectrogram:
    """Log-power matrix, frequency bins x time partitions."""

    values: np.ndarray

    @property
    def freq_bins(self) -> int:
        return self.values.shape[0]

    @property
    def time_partitions(self) -> int:
        return self.values.shape[1]


def stft_spectrogram(
    samples,
    partitions: int = DEFAULT_PARTITIONS,
    window: str = "hamming",
    overlap: float = 0.0,
) -> Spectrogram:
    """Short-time power spectrum of a window, in dB.

    ``overlap`` is a sensitivity knob: partitions keep their length but
    start every ``round(length * (1-overlap))`` samples. The default 0
    gives back-to-back partitions.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if partitions < 1 or partitions > x.size:
        raise ValueError(
            f"partitions must be in [1, {x.size}] for a {x.size}-sample window, got {partitions}"
        )
    if not 0.0 <= overlap < 1.0:
        raise ValueError(f"overlap must be in [0, 1), got {overlap}")
    if window not in _WINDOWS:
        raise ValueError(f"unknown window {window!r}; expected one of {sorted(_WINDOWS)}")

    plen = x.size // partitions
    hop = max(1, round(plen * (1.0 - overlap)))
    taper = _WINDOWS[window](plen)

    starts = np.arange(partitions) * hop
    frames = np.stack([x[s : s + plen] for s in starts]) * taper
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    values = 10.0 * np.log10(power + LOG_POWER_FLOOR)
    return Spectrogram(values=values.T.copy())


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resize of a 2-D array (float64)."""
    src = np.asarray(img, dtype=np.float64)
    in_h, in_w = src.shape
    if out_h < 1 or out_w < 1:
        raise ValueError(f"degenerate target size {out_h}x{out_w}")
    if (out_h, out_w) == (in_h, in_w):
        return src.copy()

    ys = np.arange(out_h) * ((in_h - 1) / (out_h - 1)) if out_h > 1 else np.zeros(1)
    xs = np.arange(out_w) * ((in_w - 1) / (out_w - 1)) if out_w > 1 else np.zeros(1)
    y0 = np.minimum(np.floor(ys).astype(np.intp), in_h - 1)
    x0 = np.minimum(np.floor(xs).astype(np.intp), in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]

    top = src[np.ix_(y0, x0)] * (1 - fx) + src[np.ix_(y0, x1)] * fx
    bottom = src[np.ix_(y1, x0)] * (1 - fx) + src[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bottom * fy


def to_image(spec: Spectrogram, target: tuple[int, int] = (224, 224)) -> np.ndarray:
    """3-channel standardized float32 tensor for the network input."""
    v = spec.values
    if not np.all(np.isfinite(v)):
        raise ValueError("spectrogram contains non-finite values")
    height, width = target
    vmin = v.min()
    vmax = v.max()
    unit = np.zeros_like(v) if vmax <= vmin else (v - vmin) / (vmax - vmin)
    resized = bilinear_resize(unit, height, width)
    out = np.empty((3, height, width), dtype=np.float32)
    for c in range(3):
        out[c] = ((resized - CHANNEL_MEAN[c]) / CHANNEL_STD[c]).astype(np.float32)
    return out


def write_pgm(spec: Spectrogram, path) -> None:
    """Debug emission: 8-bit binary PGM, low frequencies at the bottom."""
    v = spec.values
    vmin, vmax = v.min(), v.max()
    unit = np.zeros_like(v) if vmax <= vmin else (v - vmin) / (vmax - vmin)
    gray = np.flipud(np.round(unit * 255).astype(np.uint8))
    header = f"P5\n{gray.shape[1]} {gray.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header + gray.tobytes())

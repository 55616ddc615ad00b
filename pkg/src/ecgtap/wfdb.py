"""Readers for PhysioNet WFDB records.

Covers the subset of the WFDB conventions that the four source databases
use: text ".hea" headers, signal files in formats 212 and 16, and
MIT-format annotation files (".atr" and friends).  Decoding is bit-exact
and ADC values stay raw integers; physical-unit conversion is left to
the caller so nothing is lost to rounding here.

Format 212 packs two 12-bit two's-complement samples into three bytes:
sample one is byte 0 plus the low nibble of byte 1 shifted up, sample two
is byte 2 plus the high nibble of byte 1 shifted up.  Format 16 is plain
little-endian signed 16-bit.  Samples are dealt round-robin across the
channels that share a signal file.

MIT annotation files are streams of little-endian 16-bit words: the top
6 bits are the annotation code, the low 10 bits a data field (normally
the sample interval since the previous annotation).  Codes 59..63 are
pseudo-annotations (SKIP, NUM, SUB, CHN, AUX) that modify the most recent
annotation, and a zero word terminates the stream.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import AnnotationError, DataError, HeaderError, SignalError

logger = logging.getLogger(__name__)

SUPPORTED_FORMATS = (212, 16)

DEFAULT_ADC_GAIN = 200.0
DEFAULT_ADC_ZERO = 0
DEFAULT_SAMPLING_FREQUENCY = 250.0

# Pseudo-annotation codes of the MIT format.
_SKIP = 59
_NUM = 60
_SUB = 61
_CHN = 62
_AUX = 63


@dataclass(frozen=True)
class SignalSpec:
    """One signal line of a WFDB header."""

    file_name: str
    format_code: int
    adc_gain: float = DEFAULT_ADC_GAIN
    baseline: int = DEFAULT_ADC_ZERO  # ADC value that reads as 0 physical units
    adc_zero: int = DEFAULT_ADC_ZERO
    description: str = ""


@dataclass(frozen=True)
class RecordHeader:
    record_name: str
    n_signals: int
    sampling_frequency: float
    n_samples: int  # 0 when the header leaves the length unspecified
    signals: tuple[SignalSpec, ...]


@dataclass(frozen=True)
class Annotation:
    sample_index: int
    type_code: int
    subtype: int = 0
    channel: int = 0
    num_field: int = 0
    aux: str | None = None


@dataclass
class EcgRecord:
    """A decoded record: header, per-channel ADC samples, annotations."""

    header: RecordHeader
    signals: list[np.ndarray]
    annotations: list[Annotation]

    def n_samples(self) -> int:
        return min(len(s) for s in self.signals) if self.signals else 0


def _parse_int(token: str, what: str, line_no: int) -> int:
    try:
        return int(token)
    except ValueError:
        raise HeaderError(f"malformed {what} (line {line_no}): {token!r}") from None


def _parse_gain_token(token: str, line_no: int) -> tuple[float, int | None]:
    """Parse ``gain(baseline)/units``; returns (gain, baseline or None)."""
    body = token.split("/", 1)[0]
    baseline = None
    if "(" in body:
        if not body.endswith(")"):
            raise HeaderError(f"malformed gain field (line {line_no}): {token!r}")
        body, rest = body[:-1].split("(", 1)
        baseline = _parse_int(rest, "baseline", line_no)
    try:
        gain = float(body)
    except ValueError:
        raise HeaderError(f"malformed gain field (line {line_no}): {token!r}") from None
    if gain == 0.0:  # WFDB: zero means "unspecified", use the default
        gain = DEFAULT_ADC_GAIN
    if gain < 0.0:
        raise HeaderError(f"negative ADC gain (line {line_no}): {token!r}")
    return gain, baseline


def _parse_signal_line(line: str, line_no: int) -> SignalSpec:
    fields = line.split()
    if len(fields) < 2:
        raise HeaderError(f"malformed signal line (line {line_no}): {line!r}")
    file_name = fields[0]
    fmt_token = fields[1]
    for mark, feature in (("x", "samples-per-frame"), (":", "skew"), ("+", "byte offset")):
        if mark in fmt_token:
            raise HeaderError(
                f"unsupported {feature} field in format token (line {line_no}): {fmt_token!r}"
            )
    fmt = _parse_int(fmt_token, "format code", line_no)
    if fmt not in SUPPORTED_FORMATS:
        raise HeaderError(f"unsupported format code {fmt} (line {line_no})")

    gain, baseline = (DEFAULT_ADC_GAIN, None)
    if len(fields) > 2:
        gain, baseline = _parse_gain_token(fields[2], line_no)
    adc_zero = DEFAULT_ADC_ZERO
    if len(fields) > 4:
        adc_zero = _parse_int(fields[4], "ADC zero", line_no)
    description = " ".join(fields[8:]) if len(fields) > 8 else ""
    return SignalSpec(
        file_name=file_name,
        format_code=fmt,
        adc_gain=gain,
        baseline=adc_zero if baseline is None else baseline,
        adc_zero=adc_zero,
        description=description,
    )


def parse_header(text: str) -> RecordHeader:
    """Parse the content of a ``.hea`` file.

    Comment lines (leading ``#``) and blank lines are skipped; optional
    fields take the documented WFDB defaults (gain 200, ADC zero 0,
    sampling frequency 250).
    """
    lines = [(no, ln.strip()) for no, ln in enumerate(text.splitlines(), start=1)]
    lines = [(no, ln) for no, ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise HeaderError("empty header")

    rec_no, rec_line = lines[0]
    fields = rec_line.split()
    if len(fields) < 2:
        raise HeaderError(f"malformed record line (line {rec_no}): {rec_line!r}")
    record_name = fields[0]
    if "/" in record_name:
        raise HeaderError(f"multi-segment records are not supported (line {rec_no})")
    n_signals = _parse_int(fields[1], "signal count", rec_no)
    if n_signals < 1:
        raise HeaderError(f"signal count must be >= 1 (line {rec_no})")

    sampling_frequency = DEFAULT_SAMPLING_FREQUENCY
    if len(fields) > 2:
        try:
            sampling_frequency = float(fields[2].split("/", 1)[0])
        except ValueError:
            raise HeaderError(
                f"malformed sampling frequency (line {rec_no}): {fields[2]!r}"
            ) from None
    if sampling_frequency <= 0:
        raise HeaderError(f"sampling frequency must be positive (line {rec_no})")

    n_samples = 0
    if len(fields) > 3:
        n_samples = _parse_int(fields[3], "sample count", rec_no)
        if n_samples < 0:
            raise HeaderError(f"negative sample count (line {rec_no})")

    signal_lines = lines[1 : 1 + n_signals]
    if len(signal_lines) != n_signals:
        raise HeaderError(
            f"signal-count mismatch (line {rec_no}): record line declares "
            f"{n_signals} signal(s) but only {len(signal_lines)} signal line(s) follow"
        )
    signals = tuple(_parse_signal_line(ln, no) for no, ln in signal_lines)
    return RecordHeader(
        record_name=record_name,
        n_signals=n_signals,
        sampling_frequency=sampling_frequency,
        n_samples=n_samples,
        signals=signals,
    )


def decode_signal_212(data: bytes, n_channels: int) -> tuple[list[np.ndarray], int]:
    """Decode format-212 bytes into per-channel int16 arrays.

    Returns ``(channels, trailing_bytes)`` where ``trailing_bytes`` counts
    the bytes of an incomplete final triplet (dropped, not an error).
    """
    if n_channels < 1:
        raise ValueError("n_channels must be >= 1")
    n_triplets = len(data) // 3
    trailing = len(data) - 3 * n_triplets
    raw = np.frombuffer(data, dtype=np.uint8, count=3 * n_triplets)
    b = raw.reshape(-1, 3).astype(np.int32)
    s1 = b[:, 0] | ((b[:, 1] & 0x0F) << 8)
    s2 = b[:, 2] | ((b[:, 1] >> 4) << 8)
    s1 -= (s1 & 0x800) << 1  # sign-extend from 12 bits
    s2 -= (s2 & 0x800) << 1
    flat = np.empty(2 * n_triplets, dtype=np.int16)
    flat[0::2] = s1
    flat[1::2] = s2
    channels = [flat[c::n_channels].copy() for c in range(n_channels)]
    return channels, trailing


def decode_signal_16(data: bytes, n_channels: int) -> tuple[list[np.ndarray], int]:
    """Decode format-16 (little-endian signed 16-bit) bytes, as above."""
    if n_channels < 1:
        raise ValueError("n_channels must be >= 1")
    n_samples = len(data) // 2
    trailing = len(data) - 2 * n_samples
    flat = np.frombuffer(data, dtype="<i2", count=n_samples).astype(np.int16)
    channels = [flat[c::n_channels].copy() for c in range(n_channels)]
    return channels, trailing


_DECODERS = {212: decode_signal_212, 16: decode_signal_16}


def parse_annotations(data: bytes) -> list[Annotation]:
    """Parse an MIT-format annotation stream.

    Sample indices are absolute, accumulated from the interval fields
    (plus 4-byte SKIP offsets).  SUB/NUM/CHN/AUX pseudo-annotations modify
    the most recent annotation; NUM and CHN also set the default for
    subsequent ones.  The stream must end with the zero EOF word.
    """
    annotations: list[Annotation] = []
    time = 0
    cur_num = 0
    cur_chan = 0
    i = 0
    n = len(data)
    saw_eof = False
    while i + 2 <= n:
        word = data[i] | (data[i + 1] << 8)
        i += 2
        if word == 0:
            saw_eof = True
            break
        code = word >> 10
        field = word & 0x3FF
        if code == _SKIP:
            if i + 4 > n:
                raise AnnotationError(f"SKIP offset runs past end of file at byte {i - 2}")
            hi = data[i] | (data[i + 1] << 8)
            lo = data[i + 2] | (data[i + 3] << 8)
            i += 4
            offset = (hi << 16) | lo
            if offset >= 1 << 31:
                offset -= 1 << 32
            time += offset
        elif code == _NUM:
            if not annotations:
                raise AnnotationError(f"NUM before any annotation at byte {i - 2}")
            cur_num = field
            annotations[-1] = replace(annotations[-1], num_field=field)
        elif code == _SUB:
            if not annotations:
                raise AnnotationError(f"SUB before any annotation at byte {i - 2}")
            annotations[-1] = replace(annotations[-1], subtype=field)
        elif code == _CHN:
            if not annotations:
                raise AnnotationError(f"CHN before any annotation at byte {i - 2}")
            cur_chan = field
            annotations[-1] = replace(annotations[-1], channel=field)
        elif code == _AUX:
            if not annotations:
                raise AnnotationError(f"AUX before any annotation at byte {i - 2}")
            if i + field > n:
                raise AnnotationError(f"AUX payload runs past end of file at byte {i - 2}")
            payload = data[i : i + field]
            i += field + (field & 1)  # odd payloads are padded to even length
            aux = payload.decode("latin-1").rstrip("\x00")
            annotations[-1] = replace(annotations[-1], aux=aux)
        elif code == 0:
            raise AnnotationError(
                f"zero annotation code with nonzero interval at byte {i - 2}"
            )
        else:
            time += field
            if annotations and time < annotations[-1].sample_index:
                raise AnnotationError(
                    f"annotation times decrease at byte {i - 2} "
                    f"({time} after {annotations[-1].sample_index})"
                )
            annotations.append(
                Annotation(
                    sample_index=time,
                    type_code=code,
                    channel=cur_chan,
                    num_field=cur_num,
                )
            )
    if not saw_eof:
        raise AnnotationError("annotation stream does not end with the EOF word")
    return annotations


def read_header(path: str | Path) -> RecordHeader:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"header file not found: {path}")
    return parse_header(path.read_text())


def read_annotations(path: str | Path) -> list[Annotation]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"annotation file not found: {path}")
    return parse_annotations(path.read_bytes())


def read_record(record_base: str | Path, annotator: str | None = "atr") -> EcgRecord:
    """Read header, signal file(s), and (optionally) annotations.

    ``record_base`` is the record path without extension, e.g.
    ``data/afdb/04015``.  Signals that share a .dat file are decoded
    together and dealt round-robin; channels are truncated to the declared
    sample count when the header specifies one.
    """
    base = Path(record_base)
    header = read_header(base.with_suffix(".hea"))

    channels: list[np.ndarray | None] = [None] * header.n_signals
    by_file: dict[str, list[int]] = {}
    for idx, spec in enumerate(header.signals):
        by_file.setdefault(spec.file_name, []).append(idx)
    for file_name, sig_indices in by_file.items():
        formats = {header.signals[i].format_code for i in sig_indices}
        if len(formats) > 1:
            raise SignalError(
                f"{file_name}: signals sharing a file use different formats {sorted(formats)}"
            )
        sig_path = base.parent / file_name
        if not sig_path.is_file():
            raise DataError(f"signal file not found: {sig_path}")
        decode = _DECODERS[formats.pop()]
        decoded, trailing = decode(sig_path.read_bytes(), len(sig_indices))
        if trailing:
            logger.warning("%s: %d trailing byte(s) ignored", sig_path, trailing)
        for ch, sig_idx in enumerate(sig_indices):
            samples = decoded[ch]
            if header.n_samples:
                if len(samples) < header.n_samples:
                    raise SignalError(
                        f"{sig_path}: signal {sig_idx} has {len(samples)} samples, "
                        f"header declares {header.n_samples}"
                    )
                samples = samples[: header.n_samples]
            channels[sig_idx] = samples

    annotations: list[Annotation] = []
    if annotator is not None:
        annotations = read_annotations(base.with_suffix("." + annotator))
    return EcgRecord(header=header, signals=list(channels), annotations=annotations)

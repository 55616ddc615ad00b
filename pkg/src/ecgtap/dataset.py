"""Labeled 500-sample window extraction from annotated records.

Selection follows the annotation conventions of the four source
databases: rhythm-change aux strings for AF and ventricular rhythms,
ST-episode markers for ST, beat annotations for normal sinus rhythm.
Window starts are jittered around the anchors (per-class amount), class
quotas are filled round-robin across recordings so every contributing
recording is represented, and everything is deterministic under the
configured seed.

The on-disk container is binary: magic "ECGW", version u16, instance
count u32, then per instance label u8, record-name length (u16) + UTF-8
bytes, start u32, channel u8, and 500 little-endian float32 samples.
All integers little-endian.  A CSV manifest accompanies it for audit.
"""

from __future__ import annotations

import csv
import logging
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .errors import DatasetError
from .wfdb import EcgRecord

logger = logging.getLogger(__name__)

WINDOW_SAMPLES = 500

_MAGIC = b"ECGW"
_VERSION = 1


class RhythmClass(IntEnum):
    NORMAL = 0
    AF = 1
    VF = 2
    ST = 3


@dataclass(frozen=True)
class AnchorRule:
    """What counts as an anchor annotation for one class.

    An annotation matches when its type code is listed or its aux string
    starts with one of the prefixes.
    """

    aux_prefixes: tuple[str, ...] = ()
    type_codes: tuple[int, ...] = ()

    def matches(self, type_code: int, aux: str | None) -> bool:
        if type_code in self.type_codes:
            return True
        if aux is not None:
            return any(aux.startswith(p) for p in self.aux_prefixes)
        return False


@dataclass
class SelectionConfig:
    seed: int = 0
    channel: int = 0
    quotas: dict[RhythmClass, int] = field(default_factory=dict)
    jitter: dict[RhythmClass, int] = field(default_factory=dict)
    rules: dict[RhythmClass, AnchorRule] = field(default_factory=dict)

    def validate(self) -> None:
        for cls, quota in self.quotas.items():
            if quota < 1:
                raise DatasetError(f"quota for {cls.name} must be positive, got {quota}")
            rule = self.rules.get(cls)
            if rule is None or (not rule.aux_prefixes and not rule.type_codes):
                raise DatasetError(f"no anchor rule configured for class {cls.name}")
            if self.jitter.get(cls, 0) < 0:
                raise DatasetError(f"negative jitter for class {cls.name}")


def default_rules() -> dict[RhythmClass, AnchorRule]:
    return {
        RhythmClass.NORMAL: AnchorRule(type_codes=(1,)),
        RhythmClass.AF: AnchorRule(aux_prefixes=("(AFIB", "(AFL")),
        RhythmClass.VF: AnchorRule(aux_prefixes=("(VT", "(VF", "(VFL")),
        # European ST-T episode markers: start "(STn+-", extremum "ASTn+-",
        # end "STn+-)".
        RhythmClass.ST: AnchorRule(aux_prefixes=("(ST", "AST", "ST")),
    }


def default_selection_config(seed: int = 0) -> SelectionConfig:
    # 4 x 1752 = 7008 instances, the calibrated total over the four
    # databases; the per-class split is configuration, not ground truth.
    return SelectionConfig(
        seed=seed,
        channel=0,
        quotas={cls: 1752 for cls in RhythmClass},
        jitter={
            RhythmClass.NORMAL: 125,
            RhythmClass.AF: 0,
            RhythmClass.VF: 0,
            RhythmClass.ST: 0,
        },
        rules=default_rules(),
    )


@dataclass
class WindowInstance:
    """One labeled window; samples are float32 mV."""

    samples: np.ndarray
    label: RhythmClass
    source_record: str
    start_index: int
    channel: int
    overlaps: bool = False  # set when the no-overlap pass could not fill the quota

    def __eq__(self, other) -> bool:  # normative fields only
        if not isinstance(other, WindowInstance):
            return NotImplemented
        return (
            self.label == other.label
            and self.source_record == other.source_record
            and self.start_index == other.start_index
            and self.channel == other.channel
            and np.array_equal(self.samples, other.samples)
        )


def find_anchors(
    record: EcgRecord,
    rhythm_class: RhythmClass,
    rules: dict[RhythmClass, AnchorRule],
    window: int = WINDOW_SAMPLES,
) -> list[int]:
    """Anchor sample indices for one class in one record.

    Anchors whose window (starting at the anchor) would overflow the
    record are dropped; duplicates collapse to one anchor.
    """
    rule = rules.get(rhythm_class)
    if rule is None:
        raise DatasetError(f"no anchor rule configured for class {rhythm_class.name}")
    n = record.n_samples()
    anchors: list[int] = []
    seen: set[int] = set()
    for ann in record.annotations:
        if not rule.matches(ann.type_code, ann.aux):
            continue
        if ann.sample_index + window > n or ann.sample_index < 0:
            continue
        if ann.sample_index in seen:
            continue
        seen.add(ann.sample_index)
        anchors.append(ann.sample_index)
    return anchors


def _to_millivolts(record: EcgRecord, channel: int, start: int, window: int) -> np.ndarray:
    spec = record.header.signals[channel]
    adc = record.signals[channel][start : start + window]
    mv = (adc.astype(np.float64) - spec.baseline) / spec.adc_gain
    return mv.astype(np.float32)


@dataclass
class CutResult:
    instances: list[WindowInstance]
    quota: int
    achieved: int
    diagnostic: str | None = None


def cut_windows(
    sources: list[tuple[str, EcgRecord, list[int]]],
    rhythm_class: RhythmClass,
    config: SelectionConfig,
    window: int = WINDOW_SAMPLES,
) -> CutResult:
    """Cut up to the class quota of windows, round-robin over recordings.

    ``sources`` pairs a qualified record name ("db/record") with the
    parsed record and its anchor list.  Pass one visits recordings in
    name order taking one seeded-shuffled anchor at a time and refuses
    overlapping windows; if the quota is still short, further passes
    allow overlap (flagged) but never an exact duplicate start.
    """
    quota = config.quotas.get(rhythm_class, 0)
    if quota < 1:
        raise DatasetError(f"no quota configured for class {rhythm_class.name}")
    jitter = config.jitter.get(rhythm_class, 0)
    rng = np.random.default_rng([config.seed, int(rhythm_class), 0xEC6])

    ordered = sorted(sources, key=lambda s: s[0])
    queues: list[list[int]] = []
    for _, _, anchors in ordered:
        shuffled = [anchors[i] for i in rng.permutation(len(anchors))]
        queues.append(shuffled)

    taken: list[list[tuple[int, int]]] = [[] for _ in ordered]  # intervals per record
    starts_used: list[set[int]] = [set() for _ in ordered]
    instances: list[WindowInstance] = []

    def draw_start(anchor: int, n: int) -> int:
        offset = int(rng.integers(-jitter, jitter + 1)) if jitter else 0
        return int(np.clip(anchor + offset, 0, n - window))

    def take(rec_idx: int, start: int, overlaps: bool) -> None:
        name, record, _ = ordered[rec_idx]
        samples = _to_millivolts(record, config.channel, start, window)
        if not np.all(np.isfinite(samples)):
            raise DatasetError(f"non-finite samples in {name} at {start}")
        instances.append(
            WindowInstance(
                samples=samples,
                label=rhythm_class,
                source_record=name,
                start_index=start,
                channel=config.channel,
                overlaps=overlaps,
            )
        )
        taken[rec_idx].append((start, start + window))
        starts_used[rec_idx].add(start)

    # Pass 1: no overlapping windows within a recording.
    cursors = [0] * len(ordered)
    active = True
    while len(instances) < quota and active:
        active = False
        for rec_idx, (name, record, _) in enumerate(ordered):
            if len(instances) >= quota:
                break
            if cursors[rec_idx] >= len(queues[rec_idx]):
                continue
            anchor = queues[rec_idx][cursors[rec_idx]]
            cursors[rec_idx] += 1
            active = True
            start = draw_start(anchor, record.n_samples())
            end = start + window
            if any(s < end and start < e for s, e in taken[rec_idx]):
                continue
            take(rec_idx, start, overlaps=False)

    # Pass 2: allow overlap, re-drawing jitter, never duplicating a start.
    while len(instances) < quota:
        added = 0
        for rec_idx, (name, record, _) in enumerate(ordered):
            if len(instances) >= quota:
                break
            for anchor in queues[rec_idx]:
                if len(instances) >= quota:
                    break
                start = draw_start(anchor, record.n_samples())
                if start in starts_used[rec_idx]:
                    continue
                take(rec_idx, start, overlaps=True)
                added += 1
        if added == 0:
            break

    diagnostic = None
    if len(instances) < quota:
        diagnostic = (
            f"quota unreachable for class {rhythm_class.name}: "
            f"achieved {len(instances)} of {quota}"
        )
        logger.warning("%s", diagnostic)
    return CutResult(
        instances=instances, quota=quota, achieved=len(instances), diagnostic=diagnostic
    )


@dataclass
class DatasetBuildResult:
    instances: list[WindowInstance]
    anchor_counts: dict[RhythmClass, dict[str, int]]  # class -> record -> anchors
    diagnostics: list[str]

    def class_histogram(self) -> dict[RhythmClass, int]:
        hist: dict[RhythmClass, int] = {}
        for inst in self.instances:
            hist[inst.label] = hist.get(inst.label, 0) + 1
        return hist


def count_anchors(
    class_sources: dict[RhythmClass, list[tuple[str, EcgRecord]]],
    config: SelectionConfig,
    window: int = WINDOW_SAMPLES,
) -> dict[RhythmClass, dict[str, int]]:
    """Per-class, per-record anchor counts (the --dry-run report)."""
    counts: dict[RhythmClass, dict[str, int]] = {}
    for cls, recs in sorted(class_sources.items()):
        counts[cls] = {
            name: len(find_anchors(rec, cls, config.rules, window))
            for name, rec in sorted(recs, key=lambda r: r[0])
        }
    return counts


def build_dataset(
    class_sources: dict[RhythmClass, list[tuple[str, EcgRecord]]],
    config: SelectionConfig,
    window: int = WINDOW_SAMPLES,
) -> DatasetBuildResult:
    """Select windows for every configured class.

    ``class_sources`` maps each class to the (qualified name, record)
    pairs of the databases contributing it.  A class whose records yield
    no anchors at all is an error naming the records searched.
    """
    config.validate()
    instances: list[WindowInstance] = []
    diagnostics: list[str] = []
    anchor_counts = count_anchors(class_sources, config, window)
    for cls in sorted(class_sources):
        recs = class_sources[cls]
        with_anchors = []
        for name, rec in recs:
            anchors = find_anchors(rec, cls, config.rules, window)
            if anchors:
                with_anchors.append((name, rec, anchors))
        if not with_anchors:
            searched = ", ".join(sorted(name for name, _ in recs)) or "<none>"
            raise DatasetError(
                f"no anchors for class {cls.name} in any record (searched: {searched})"
            )
        result = cut_windows(with_anchors, cls, config, window)
        if result.diagnostic:
            diagnostics.append(result.diagnostic)
        instances.extend(result.instances)
    instances.sort(key=lambda i: (i.source_record, i.start_index, int(i.label)))
    return DatasetBuildResult(
        instances=instances, anchor_counts=anchor_counts, diagnostics=diagnostics
    )


def export_dataset(instances: list[WindowInstance], path: str | Path) -> None:
    """Write the binary container; refuses an empty instance list."""
    if not instances:
        raise DatasetError("refusing to write an empty dataset")
    path = Path(path)
    parts = [_MAGIC, struct.pack("<HI", _VERSION, len(instances))]
    for inst in instances:
        if inst.samples.shape != (WINDOW_SAMPLES,):
            raise DatasetError(
                f"instance from {inst.source_record} has {inst.samples.shape[0]} samples"
            )
        name = inst.source_record.encode("utf-8")
        parts.append(struct.pack("<BH", int(inst.label), len(name)))
        parts.append(name)
        parts.append(struct.pack("<IB", inst.start_index, inst.channel))
        parts.append(inst.samples.astype("<f4").tobytes())
    path.write_bytes(b"".join(parts))


def load_dataset(path: str | Path) -> list[WindowInstance]:
    """Reload a container written by :func:`export_dataset`.

    The overlap flag lives in the manifest only, so reloaded instances
    carry ``overlaps=False``.
    """
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise DatasetError(f"{path}: not a dataset container (bad magic)")
    version, count = struct.unpack_from("<HI", data, 4)
    if version != _VERSION:
        raise DatasetError(f"{path}: unsupported container version {version}")
    offset = 10
    instances: list[WindowInstance] = []
    try:
        for _ in range(count):
            label_value, name_len = struct.unpack_from("<BH", data, offset)
            offset += 3
            name = data[offset : offset + name_len].decode("utf-8")
            offset += name_len
            start, channel = struct.unpack_from("<IB", data, offset)
            offset += 5
            samples = np.frombuffer(data, dtype="<f4", count=WINDOW_SAMPLES, offset=offset)
            offset += 4 * WINDOW_SAMPLES
            instances.append(
                WindowInstance(
                    samples=samples.copy(),
                    label=RhythmClass(label_value),
                    source_record=name,
                    start_index=start,
                    channel=channel,
                )
            )
    except (struct.error, ValueError) as exc:
        raise DatasetError(f"{path}: truncated or corrupt container: {exc}") from None
    if offset != len(data):
        raise DatasetError(f"{path}: {len(data) - offset} unexpected trailing byte(s)")
    return instances


def write_manifest(instances: list[WindowInstance], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label", "record", "start", "channel", "overlap"])
        for inst in instances:
            writer.writerow(
                [
                    inst.label.name,
                    inst.source_record,
                    inst.start_index,
                    inst.channel,
                    int(inst.overlaps),
                ]
            )

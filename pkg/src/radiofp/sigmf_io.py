"""SigMF-compatible persistence for recordings, schedules, and datasets.

Each session is a file pair: <stem>.sigmf-data holds interleaved I,Q as
little-endian 32-bit floats with no header (the SigMF "cf32_le" datatype;
exactly 8 bytes per complex sample, I first), and <stem>.sigmf-meta is a
JSON document with "global", "captures", and "annotations" sections using
SigMF core field names. Ground-truth emitter labels ride in the
annotations' "core:label" field.

Session metadata is parsed permissively (unknown fields from other SigMF
tools are ignored); schedule documents and manifests are parsed strictly
(an unknown field is an error naming the field). All writes are atomic
(temp file + rename) and all JSON is emitted with sorted keys so reruns
are byte-identical.

A dataset build renders a session, runs it through the channel and the
receiver, and writes the session pair plus a self-contained manifest from
which the byte-identical dataset can be regenerated.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .channel import ChannelSpec, add_awgn, apply_multipath, apply_path_loss
from .dsp import IqRecording
from .emitter import BurstSpan, EmitterProfile, TransmissionSchedule, render_session
from .errors import (
    ConsistencyError,
    CorruptDataError,
    UnsupportedFormatError,
    ValidationError,
)
from .receiver import ReceiverConfig, acquire

__all__ = [
    "DATATYPE",
    "CaptureInfo",
    "AnnotationSpan",
    "SessionMeta",
    "DatasetSeeds",
    "DatasetBuildResult",
    "write_recording",
    "read_recording",
    "write_schedule",
    "read_schedule",
    "build_dataset",
    "regenerate_from_manifest",
    "read_manifest",
]

DATATYPE = "cf32_le"
SIGMF_VERSION = "1.0.0"
SCHEDULE_FORMAT = "schedule-v1"
MANIFEST_FORMAT = "dataset-manifest-v1"


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def _atomic_write_json(path: Path, doc: dict) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    _atomic_write_bytes(path, text.encode("utf-8"))


@dataclass(frozen=True)
class CaptureInfo:
    sample_start: int = 0
    center_freq_hz: float = 0.0
    datetime_str: str = ""


@dataclass(frozen=True)
class AnnotationSpan:
    sample_start: int
    sample_count: int
    label: str
    comment: str = ""

    def __post_init__(self) -> None:
        if self.sample_start < 0 or self.sample_count <= 0:
            raise ValidationError("annotation must have sample_start >= 0 and sample_count > 0")


@dataclass(frozen=True)
class SessionMeta:
    """The metadata half of a session file pair."""

    sample_rate_hz: float
    description: str = ""
    datatype: str = DATATYPE
    version: str = SIGMF_VERSION
    recording_id: str = ""
    sample_count: int | None = None
    captures: tuple[CaptureInfo, ...] = field(default_factory=tuple)
    annotations: tuple[AnnotationSpan, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.datatype != DATATYPE:
            raise UnsupportedFormatError(f"datatype must be '{DATATYPE}', got '{self.datatype}'")
        if not self.sample_rate_hz > 0:
            raise ValidationError("sample_rate_hz must be > 0")
        anns = tuple(self.annotations)
        starts = [a.sample_start for a in anns]
        if any(b < a for a, b in zip(starts, starts[1:])):
            raise ValidationError("annotations must be sorted by sample_start")
        object.__setattr__(self, "captures", tuple(self.captures))
        object.__setattr__(self, "annotations", anns)

    @staticmethod
    def for_recording(
        recording: IqRecording,
        ground_truth: Sequence[BurstSpan] = (),
        description: str = "",
    ) -> "SessionMeta":
        anns = tuple(
            AnnotationSpan(span.start_sample, span.length, span.emitter_id)
            for span in sorted(ground_truth, key=lambda s: (s.start_sample, s.emitter_id))
        )
        return SessionMeta(
            sample_rate_hz=recording.sample_rate_hz,
            description=description,
            recording_id=recording.id,
            sample_count=len(recording),
            captures=(CaptureInfo(0, recording.center_freq_hz),),
            annotations=anns,
        )


def _check_annotation_bounds(meta: SessionMeta, n_samples: int) -> None:
    for ann in meta.annotations:
        if ann.sample_start + ann.sample_count > n_samples:
            raise ValidationError(
                f"annotation [{ann.sample_start}, +{ann.sample_count}) exceeds "
                f"recording length {n_samples}"
            )


def data_path(path_stem) -> Path:
    return Path(f"{path_stem}.sigmf-data")


def meta_path(path_stem) -> Path:
    return Path(f"{path_stem}.sigmf-meta")


def write_recording(recording: IqRecording, meta: SessionMeta, path_stem) -> tuple[Path, Path]:
    """Write a session pair; validates before touching the filesystem.

    Sample data is stored as float32, so values already representable in
    float32 round-trip bit-identically.
    """
    if meta.sample_rate_hz != recording.sample_rate_hz:
        raise ValidationError(
            f"meta sample_rate_hz {meta.sample_rate_hz} != recording {recording.sample_rate_hz}"
        )
    _check_annotation_bounds(meta, len(recording))
    meta = replace(meta, sample_count=len(recording))

    interleaved = np.empty(2 * len(recording), dtype="<f4")
    interleaved[0::2] = recording.samples.real
    interleaved[1::2] = recording.samples.imag

    global_section = {
        "core:datatype": meta.datatype,
        "core:sample_rate": meta.sample_rate_hz,
        "core:version": meta.version,
        "core:description": meta.description,
        "workbench:sample_count": meta.sample_count,
        "workbench:recording_id": meta.recording_id or recording.id,
    }
    captures = []
    for cap in (meta.captures or (CaptureInfo(0, recording.center_freq_hz),)):
        entry = {"core:sample_start": cap.sample_start, "core:frequency": cap.center_freq_hz}
        if cap.datetime_str:
            entry["core:datetime"] = cap.datetime_str
        captures.append(entry)
    annotations = [
        {
            "core:sample_start": ann.sample_start,
            "core:sample_count": ann.sample_count,
            "core:label": ann.label,
            "core:comment": ann.comment,
        }
        for ann in meta.annotations
    ]
    doc = {"global": global_section, "captures": captures, "annotations": annotations}

    dpath, mpath = data_path(path_stem), meta_path(path_stem)
    _atomic_write_bytes(dpath, interleaved.tobytes())
    _atomic_write_json(mpath, doc)
    return dpath, mpath


def read_recording(path_stem) -> tuple[IqRecording, SessionMeta]:
    """Read a session pair back; inverse of write_recording.

    Unknown metadata fields are ignored so files from other SigMF tools
    still load, but the datatype must be cf32_le and the data size must
    agree with the metadata.
    """
    dpath, mpath = data_path(path_stem), meta_path(path_stem)
    raw = dpath.read_bytes()
    if len(raw) % 8 != 0:
        raise CorruptDataError(
            f"{dpath} holds {len(raw)} bytes, not a whole number of cf32 samples"
        )
    try:
        doc = json.loads(mpath.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorruptDataError(f"{mpath} is not valid JSON: {exc}") from None

    global_section = doc.get("global", {})
    datatype = global_section.get("core:datatype")
    if datatype != DATATYPE:
        raise UnsupportedFormatError(f"unsupported datatype {datatype!r} (expected '{DATATYPE}')")
    sample_rate = global_section.get("core:sample_rate")
    if sample_rate is None:
        raise ValidationError("meta is missing field 'core:sample_rate'")

    interleaved = np.frombuffer(raw, dtype="<f4")
    samples = interleaved[0::2].astype(np.float64) + 1j * interleaved[1::2].astype(np.float64)

    claimed = global_section.get("workbench:sample_count")
    if claimed is not None and int(claimed) != samples.size:
        raise ConsistencyError(
            f"meta claims {claimed} samples but data holds {samples.size}"
        )

    captures = tuple(
        CaptureInfo(
            int(c.get("core:sample_start", 0)),
            float(c.get("core:frequency", 0.0)),
            str(c.get("core:datetime", "")),
        )
        for c in doc.get("captures", [])
    )
    annotations = tuple(
        AnnotationSpan(
            int(a["core:sample_start"]),
            int(a["core:sample_count"]),
            str(a.get("core:label", "")),
            str(a.get("core:comment", "")),
        )
        for a in doc.get("annotations", [])
    )
    meta = SessionMeta(
        sample_rate_hz=float(sample_rate),
        description=str(global_section.get("core:description", "")),
        version=str(global_section.get("core:version", SIGMF_VERSION)),
        recording_id=str(global_section.get("workbench:recording_id", "")),
        sample_count=samples.size,
        captures=captures,
        annotations=annotations,
    )
    _check_annotation_bounds(meta, samples.size)

    center = captures[0].center_freq_hz if captures else 0.0
    recording = IqRecording(samples, float(sample_rate), center, meta.recording_id)
    return recording, meta


# --- schedule documents -----------------------------------------------------

_PROFILE_FIELDS = (
    "emitter_id", "cfo_hz", "iq_gain_imbalance", "iq_phase_imbalance_rad",
    "phase_noise_linewidth_hz", "pa_a1", "pa_a3", "ramp_up_samples", "ramp_down_samples",
)
_ENTRY_FIELDS = ("emitter_id", "start_time_s", "payload_bits")


def _reject_unknown(section: Mapping, allowed: Sequence[str], where: str) -> None:
    unknown = sorted(set(section.keys()) - set(allowed))
    if unknown:
        raise ValidationError(f"unknown field '{unknown[0]}' in {where}")


def _profile_to_doc(profile: EmitterProfile) -> dict:
    return {
        "emitter_id": profile.emitter_id,
        "cfo_hz": profile.cfo_hz,
        "iq_gain_imbalance": profile.iq_gain_imbalance,
        "iq_phase_imbalance_rad": profile.iq_phase_imbalance_rad,
        "phase_noise_linewidth_hz": profile.phase_noise_linewidth_hz,
        "pa_a1": [complex(profile.pa_a1).real, complex(profile.pa_a1).imag],
        "pa_a3": [complex(profile.pa_a3).real, complex(profile.pa_a3).imag],
        "ramp_up_samples": profile.ramp_up_samples,
        "ramp_down_samples": profile.ramp_down_samples,
    }


def _profile_from_doc(doc: Mapping) -> EmitterProfile:
    _reject_unknown(doc, _PROFILE_FIELDS, "profile")
    missing = sorted(set(_PROFILE_FIELDS) - set(doc.keys()))
    if missing:
        raise ValidationError(f"profile missing field '{missing[0]}'")
    return EmitterProfile(
        emitter_id=str(doc["emitter_id"]),
        cfo_hz=float(doc["cfo_hz"]),
        iq_gain_imbalance=float(doc["iq_gain_imbalance"]),
        iq_phase_imbalance_rad=float(doc["iq_phase_imbalance_rad"]),
        phase_noise_linewidth_hz=float(doc["phase_noise_linewidth_hz"]),
        pa_a1=complex(doc["pa_a1"][0], doc["pa_a1"][1]),
        pa_a3=complex(doc["pa_a3"][0], doc["pa_a3"][1]),
        ramp_up_samples=int(doc["ramp_up_samples"]),
        ramp_down_samples=int(doc["ramp_down_samples"]),
    )


def schedule_to_doc(schedule: TransmissionSchedule, profiles: Mapping[str, EmitterProfile]) -> dict:
    ids = [p.emitter_id for p in profiles.values()]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate emitter_id among profiles")
    for key, profile in profiles.items():
        if key != profile.emitter_id:
            raise ValidationError(f"profile map key '{key}' != emitter_id '{profile.emitter_id}'")
    known = set(profiles.keys())
    for entry in schedule.entries:
        if entry.emitter_id not in known:
            raise ValidationError(f"schedule references unknown emitter_id '{entry.emitter_id}'")
    return {
        "format": SCHEDULE_FORMAT,
        "session_duration_s": schedule.session_duration_s,
        "profiles": [_profile_to_doc(profiles[i]) for i in sorted(profiles)],
        "entries": [
            {
                "emitter_id": e.emitter_id,
                "start_time_s": e.start_time_s,
                "payload_bits": list(e.payload_bits),
            }
            for e in schedule.entries
        ],
    }


def schedule_from_doc(doc: Mapping) -> tuple[TransmissionSchedule, dict[str, EmitterProfile]]:
    _reject_unknown(doc, ("format", "session_duration_s", "profiles", "entries"), "schedule document")
    if doc.get("format") != SCHEDULE_FORMAT:
        raise UnsupportedFormatError(f"unsupported schedule format {doc.get('format')!r}")
    for key in ("session_duration_s", "profiles", "entries"):
        if key not in doc:
            raise ValidationError(f"schedule document missing field '{key}'")
    profiles: dict[str, EmitterProfile] = {}
    for pdoc in doc["profiles"]:
        profile = _profile_from_doc(pdoc)
        if profile.emitter_id in profiles:
            raise ValidationError(f"duplicate emitter_id '{profile.emitter_id}'")
        profiles[profile.emitter_id] = profile
    entries = []
    for edoc in doc["entries"]:
        _reject_unknown(edoc, _ENTRY_FIELDS, "schedule entry")
        missing = sorted(set(_ENTRY_FIELDS) - set(edoc.keys()))
        if missing:
            raise ValidationError(f"schedule entry missing field '{missing[0]}'")
        if edoc["emitter_id"] not in profiles:
            raise ValidationError(f"schedule references unknown emitter_id '{edoc['emitter_id']}'")
        entries.append((str(edoc["emitter_id"]), float(edoc["start_time_s"]), tuple(edoc["payload_bits"])))
    schedule = TransmissionSchedule(tuple(entries), float(doc["session_duration_s"]))
    return schedule, profiles


def write_schedule(schedule: TransmissionSchedule, profiles: Mapping[str, EmitterProfile], path) -> Path:
    path = Path(path)
    _atomic_write_json(path, schedule_to_doc(schedule, profiles))
    return path


def read_schedule(path) -> tuple[TransmissionSchedule, dict[str, EmitterProfile]]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    return schedule_from_doc(doc)


# --- dataset building --------------------------------------------------------

@dataclass(frozen=True)
class DatasetSeeds:
    """Every random draw in a dataset build is pinned by these three seeds."""

    render: int
    channel: int
    frontend: int


@dataclass(frozen=True)
class DatasetBuildResult:
    data_file: Path
    meta_file: Path
    manifest_file: Path
    ground_truth: tuple[BurstSpan, ...]


def _channel_to_doc(spec: ChannelSpec) -> dict:
    return {
        "snr_db": "inf" if np.isinf(spec.snr_db) else spec.snr_db,
        "multipath_taps": [[d, g.real, g.imag] for d, g in spec.multipath_taps],
        "path_loss_db": spec.path_loss_db,
    }


def _channel_from_doc(doc: Mapping) -> ChannelSpec:
    _reject_unknown(doc, ("snr_db", "multipath_taps", "path_loss_db"), "channel")
    for key in ("snr_db", "multipath_taps", "path_loss_db"):
        if key not in doc:
            raise ValidationError(f"channel missing field '{key}'")
    snr = doc["snr_db"]
    snr_db = float("inf") if snr == "inf" else float(snr)
    taps = tuple((int(t[0]), complex(t[1], t[2])) for t in doc["multipath_taps"])
    return ChannelSpec(snr_db=snr_db, multipath_taps=taps, path_loss_db=float(doc["path_loss_db"]))


_RECEIVER_FIELDS = ("filter_bw_hz", "gain_db", "adc_bits", "full_scale", "frontend_noise_power")


def _receiver_to_doc(config: ReceiverConfig) -> dict:
    return {name: getattr(config, name) for name in _RECEIVER_FIELDS}


def _receiver_from_doc(doc: Mapping) -> ReceiverConfig:
    _reject_unknown(doc, _RECEIVER_FIELDS, "receiver")
    missing = sorted(set(_RECEIVER_FIELDS) - set(doc.keys()))
    if missing:
        raise ValidationError(f"receiver missing field '{missing[0]}'")
    return ReceiverConfig(
        filter_bw_hz=float(doc["filter_bw_hz"]),
        gain_db=float(doc["gain_db"]),
        adc_bits=int(doc["adc_bits"]),
        full_scale=float(doc["full_scale"]),
        frontend_noise_power=float(doc["frontend_noise_power"]),
    )


def _seeds_from_doc(doc: Mapping) -> DatasetSeeds:
    _reject_unknown(doc, ("render", "channel", "frontend"), "seeds")
    for key in ("render", "channel", "frontend"):
        if key not in doc:
            raise ValidationError(f"seeds missing field '{key}'")
    return DatasetSeeds(int(doc["render"]), int(doc["channel"]), int(doc["frontend"]))


def propagate(
    recording: IqRecording,
    ground_truth: Sequence[BurstSpan],
    channel: ChannelSpec,
    seed: int,
) -> IqRecording:
    """Run a rendered session through the channel.

    The AWGN level references the mean power over the ground-truth burst
    spans, measured after multipath and path loss, so inter-burst silence
    does not skew the target SNR. With no bursts the reference power is 1.0
    (full scale).
    """
    faded = apply_multipath(recording, channel.multipath_taps)
    faded = apply_path_loss(faded, channel.path_loss_db)
    if np.isinf(channel.snr_db) and channel.snr_db > 0:
        return faded
    mask = np.zeros(len(faded), dtype=bool)
    for span in ground_truth:
        mask[span.start_sample:span.start_sample + span.length] = True
    ref = float(np.mean(np.abs(faded.samples[mask]) ** 2)) if mask.any() else 1.0
    if ref <= 0.0:
        ref = 1.0
    return add_awgn(faded, channel.snr_db, ref, seed)


def build_dataset(
    schedule: TransmissionSchedule,
    profiles: Mapping[str, EmitterProfile],
    channel: ChannelSpec,
    rx: ReceiverConfig,
    seeds: DatasetSeeds,
    out_dir,
    sample_rate_hz: float,
    samples_per_symbol: int,
    stem: str = "session",
) -> DatasetBuildResult:
    """Render, propagate, acquire, and persist one session plus its manifest.

    The manifest embeds the schedule, profiles, channel, receiver config,
    and seeds, so regenerate_from_manifest() reproduces the data files
    byte-identically. Partial outputs are removed if anything fails.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rendered, ground_truth = render_session(
        schedule, profiles, sample_rate_hz, samples_per_symbol, seeds.render
    )
    received = propagate(rendered, ground_truth, channel, seeds.channel)
    acquired = acquire(received, rx, seeds.frontend)

    meta = SessionMeta.for_recording(acquired, ground_truth, description="synthesized session")
    manifest = {
        "format": MANIFEST_FORMAT,
        "sample_rate_hz": sample_rate_hz,
        "samples_per_symbol": samples_per_symbol,
        "seeds": {"render": seeds.render, "channel": seeds.channel, "frontend": seeds.frontend},
        "channel": _channel_to_doc(channel),
        "receiver": _receiver_to_doc(rx),
        "schedule": schedule_to_doc(schedule, profiles),
        "sessions": [
            {"stem": stem, "data_file": f"{stem}.sigmf-data", "meta_file": f"{stem}.sigmf-meta"}
        ],
    }

    written: list[Path] = []
    try:
        dpath, mpath = write_recording(acquired, meta, out_dir / stem)
        written.extend([dpath, mpath])
        manifest_file = out_dir / "manifest.json"
        _atomic_write_json(manifest_file, manifest)
        written.append(manifest_file)
    except Exception:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return DatasetBuildResult(dpath, mpath, manifest_file, tuple(ground_truth))


def read_manifest(manifest_path) -> dict:
    """Load and strictly validate a dataset manifest."""
    with open(manifest_path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    allowed = ("format", "sample_rate_hz", "samples_per_symbol", "seeds", "channel",
               "receiver", "schedule", "sessions")
    _reject_unknown(doc, allowed, "manifest")
    if doc.get("format") != MANIFEST_FORMAT:
        raise UnsupportedFormatError(f"unsupported manifest format {doc.get('format')!r}")
    missing = sorted(set(allowed) - set(doc.keys()))
    if missing:
        raise ValidationError(f"manifest missing field '{missing[0]}'")
    _seeds_from_doc(doc["seeds"])  # raises with the field name if incomplete
    return doc


def regenerate_from_manifest(manifest_path, out_dir) -> DatasetBuildResult:
    """Rebuild a dataset from its manifest; output is byte-identical."""
    doc = read_manifest(manifest_path)
    schedule, profiles = schedule_from_doc(doc["schedule"])
    channel = _channel_from_doc(doc["channel"])
    rx = _receiver_from_doc(doc["receiver"])
    seeds = _seeds_from_doc(doc["seeds"])
    if len(doc["sessions"]) != 1:
        raise ValidationError("manifest must describe exactly one session")
    stem = doc["sessions"][0]["stem"]
    return build_dataset(
        schedule, profiles, channel, rx, seeds, out_dir,
        float(doc["sample_rate_hz"]), int(doc["samples_per_symbol"]), stem=stem,
    )

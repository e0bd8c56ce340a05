"""Dataset container format, validation, and the synthetic generator.

Each video lives in its own binary file: a fixed header (magic, version,
frame count, feature dim, section flags, id, corpus tag), the feature
rows as little-endian float64, then the optional sections in flag-bit
order, each prefixed with its byte length so a truncated file names the
section it died in. A JSON manifest ties the files of a dataset together
and carries the F-score aggregation mode.

Converters from common benchmark dumps are deliberately out of scope;
the format is documented in the README so users can write their own.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .segmentation import ShotPartition, binarize_ground_truth

MAGIC = b"DSUM"
FORMAT_VERSION = 1

_FLAG_GT_SCORES = 1 << 0
_FLAG_GT_BINARY = 1 << 1
_FLAG_USERS = 1 << 2
_FLAG_CHANGE_POINTS = 1 << 3
_FLAG_PICKS = 1 << 4

AGGREGATION_MODES = ("max_over_users", "mean_over_users")


class DataFormatError(ValueError):
    """Raised when a dataset file is malformed, with the failing part named."""


@dataclass
class VideoRecord:
    """One video's features plus whatever annotations it carries.

    Features are held as a raw T x d array; the model boundary wraps them
    into an autograd matrix, keeping I/O and metric paths numpy-only.
    """

    id: str
    features: np.ndarray
    gt_scores: np.ndarray | None = None
    gt_binary: np.ndarray | None = None
    user_summaries: list[np.ndarray] | None = None
    change_points: ShotPartition | None = None
    picks: np.ndarray | None = None
    corpus_tag: str = ""

    @property
    def frame_count(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def validate(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise DataFormatError(f"video {self.id}: features must be 2-D")
        if not np.all(np.isfinite(feats)):
            raise DataFormatError(f"video {self.id}: features contain NaN or Inf")
        T = feats.shape[0]
        for name, vec in (("gt_scores", self.gt_scores), ("gt_binary", self.gt_binary),
                          ("picks", self.picks)):
            if vec is not None and len(vec) != T:
                raise DataFormatError(
                    f"video {self.id}: {name} has {len(vec)} entries for {T} frames"
                )
        if self.gt_binary is not None and not np.all(np.isin(self.gt_binary, (0, 1))):
            raise DataFormatError(f"video {self.id}: gt_binary entries must be 0 or 1")
        if self.user_summaries is not None:
            for u, s in enumerate(self.user_summaries):
                if len(s) != T:
                    raise DataFormatError(
                        f"video {self.id}: user summary {u} has {len(s)} entries for {T} frames"
                    )
                if not np.all(np.isin(s, (0, 1))):
                    raise DataFormatError(
                        f"video {self.id}: user summary {u} entries must be 0 or 1"
                    )
        if self.change_points is not None and self.change_points.total_frames != T:
            raise DataFormatError(
                f"video {self.id}: change points cover {self.change_points.total_frames} "
                f"frames, features have {T}"
            )


@dataclass
class DatasetManifest:
    name: str
    dim: int
    video_files: list[str]
    aggregation: str = "mean_over_users"
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.aggregation not in AGGREGATION_MODES:
            raise DataFormatError(f"unknown aggregation mode: {self.aggregation!r}")


# ---------------------------------------------------------------------------
# binary video files


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _section(payload: bytes) -> bytes:
    return struct.pack("<I", len(payload)) + payload


def save_video(path, rec: VideoRecord):
    rec.validate()
    feats = np.ascontiguousarray(rec.features, dtype="<f8")
    T, d = feats.shape
    flags = 0
    if rec.gt_scores is not None:
        flags |= _FLAG_GT_SCORES
    if rec.gt_binary is not None:
        flags |= _FLAG_GT_BINARY
    if rec.user_summaries is not None:
        flags |= _FLAG_USERS
    if rec.change_points is not None:
        flags |= _FLAG_CHANGE_POINTS
    if rec.picks is not None:
        flags |= _FLAG_PICKS
    parts = [
        MAGIC,
        struct.pack("<III", FORMAT_VERSION, T, d),
        struct.pack("<I", flags),
        _pack_str(rec.id),
        _pack_str(rec.corpus_tag),
        feats.tobytes(),
    ]
    if rec.gt_scores is not None:
        parts.append(_section(np.asarray(rec.gt_scores, dtype="<f8").tobytes()))
    if rec.gt_binary is not None:
        parts.append(_section(np.asarray(rec.gt_binary, dtype=np.uint8).tobytes()))
    if rec.user_summaries is not None:
        payload = struct.pack("<I", len(rec.user_summaries))
        payload += b"".join(np.asarray(u, dtype=np.uint8).tobytes()
                            for u in rec.user_summaries)
        parts.append(_section(payload))
    if rec.change_points is not None:
        starts = np.asarray(rec.change_points.change_points, dtype="<u4")
        parts.append(_section(struct.pack("<I", starts.size) + starts.tobytes()))
    if rec.picks is not None:
        parts.append(_section(np.asarray(rec.picks, dtype="<u4").tobytes()))
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    """Cursor over a file's bytes; every read names what it was after."""

    def __init__(self, blob: bytes, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise DataFormatError(f"{self.path}: truncated while reading {what}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def string(self, what: str) -> str:
        return self.take(self.u32(what + " length"), what).decode("utf-8")


def load_video(path) -> VideoRecord:
    r = _Reader(Path(path).read_bytes(), path)
    if r.take(4, "magic") != MAGIC:
        raise DataFormatError(f"{path}: not a video container (bad magic)")
    version = r.u32("version")
    if version != FORMAT_VERSION:
        raise DataFormatError(
            f"{path}: format version {version}, this build reads {FORMAT_VERSION}"
        )
    T = r.u32("frame count")
    d = r.u32("feature dim")
    flags = r.u32("flags")
    vid = r.string("video id")
    corpus = r.string("corpus tag")
    feats = np.frombuffer(r.take(8 * T * d, "features"), dtype="<f8").reshape(T, d).copy()

    def section(what: str) -> bytes:
        n = r.u32(what + " section length")
        return r.take(n, what + " section")

    gt_scores = gt_binary = picks = None
    users = None
    cps = None
    if flags & _FLAG_GT_SCORES:
        raw = section("gt_scores")
        if len(raw) != 8 * T:
            raise DataFormatError(f"{path}: gt_scores section holds {len(raw)} bytes, "
                                  f"expected {8 * T}")
        gt_scores = np.frombuffer(raw, dtype="<f8").copy()
    if flags & _FLAG_GT_BINARY:
        raw = section("gt_binary")
        if len(raw) != T:
            raise DataFormatError(f"{path}: gt_binary section holds {len(raw)} bytes, "
                                  f"expected {T}")
        gt_binary = np.frombuffer(raw, dtype=np.uint8).astype(int)
    if flags & _FLAG_USERS:
        raw = section("user_summaries")
        if len(raw) < 4:
            raise DataFormatError(f"{path}: user_summaries section too short for its count")
        count = struct.unpack("<I", raw[:4])[0]
        if len(raw) != 4 + count * T:
            raise DataFormatError(
                f"{path}: user_summaries section holds {len(raw) - 4} bytes "
                f"for {count} users of {T} frames"
            )
        users = [np.frombuffer(raw, dtype=np.uint8, count=T, offset=4 + u * T).astype(int)
                 for u in range(count)]
    if flags & _FLAG_CHANGE_POINTS:
        raw = section("change_points")
        if len(raw) < 4:
            raise DataFormatError(f"{path}: change_points section too short for its count")
        count = struct.unpack("<I", raw[:4])[0]
        if len(raw) != 4 + 4 * count:
            raise DataFormatError(
                f"{path}: change_points section holds {len(raw) - 4} bytes for {count} points"
            )
        starts = np.frombuffer(raw, dtype="<u4", count=count, offset=4).astype(int)
        cps = ShotPartition.from_change_points(starts, T)
    if flags & _FLAG_PICKS:
        raw = section("picks")
        if len(raw) != 4 * T:
            raise DataFormatError(f"{path}: picks section holds {len(raw)} bytes, "
                                  f"expected {4 * T}")
        picks = np.frombuffer(raw, dtype="<u4").astype(int)
    rec = VideoRecord(
        id=vid, features=feats, gt_scores=gt_scores, gt_binary=gt_binary,
        user_summaries=users, change_points=cps, picks=picks, corpus_tag=corpus,
    )
    rec.validate()
    return rec


# ---------------------------------------------------------------------------
# manifests and whole datasets


def save_dataset(directory, records: list[VideoRecord], name: str,
                 aggregation: str = "mean_over_users") -> Path:
    """Write every record plus a manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if not records:
        raise DataFormatError("refusing to write an empty dataset")
    dim = records[0].dim
    files = []
    for rec in records:
        if rec.dim != dim:
            raise DataFormatError(
                f"video {rec.id} has dim {rec.dim}, dataset started with {dim}"
            )
        fname = f"{rec.id}.dsv"
        save_video(directory / fname, rec)
        files.append(fname)
    manifest = DatasetManifest(name=name, dim=dim, video_files=files,
                               aggregation=aggregation)
    path = directory / "manifest.json"
    path.write_text(json.dumps({
        "name": manifest.name,
        "dim": manifest.dim,
        "format_version": manifest.format_version,
        "aggregation": manifest.aggregation,
        "videos": manifest.video_files,
    }, indent=2) + "\n")
    return path


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise DataFormatError(f"{path}: manifest not found")
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{path}: manifest is not valid JSON ({e})")
    try:
        return DatasetManifest(
            name=raw["name"], dim=int(raw["dim"]), video_files=list(raw["videos"]),
            aggregation=raw.get("aggregation", "mean_over_users"),
            format_version=int(raw.get("format_version", FORMAT_VERSION)),
        )
    except KeyError as e:
        raise DataFormatError(f"{path}: manifest missing field {e}")


def load_dataset(path) -> list[VideoRecord]:
    """Read a manifest (file or directory) and every video it references."""
    path = Path(path)
    base = path if path.is_dir() else path.parent
    manifest = load_manifest(path)
    if manifest.format_version != FORMAT_VERSION:
        raise DataFormatError(
            f"{path}: manifest format version {manifest.format_version}, "
            f"this build reads {FORMAT_VERSION}"
        )
    records = []
    for fname in manifest.video_files:
        rec = load_video(base / fname)
        if rec.dim != manifest.dim:
            raise DataFormatError(
                f"{fname}: feature dim {rec.dim} disagrees with manifest dim {manifest.dim}"
            )
        records.append(rec)
    return records


# ---------------------------------------------------------------------------
# synthetic data


@dataclass
class SynthSpec:
    videos: int = 5
    frames: int = 40
    dim: int = 16
    shots_per_video: int = 8
    noise: float = 0.05
    seed: int = 0
    users: int = 3
    budget_ratio: float = 0.15
    name: str = "synth"
    aggregation: str = "mean_over_users"


def _random_partition(rng, T: int, shots: int, min_len: int) -> ShotPartition:
    while True:
        cuts = np.sort(rng.choice(np.arange(1, T), size=shots - 1, replace=False))
        starts = np.concatenate([[0], cuts])
        lengths = np.diff(np.concatenate([starts, [T]]))
        if lengths.min() >= min_len:
            return ShotPartition(change_points=starts.astype(int),
                                 shot_lengths=lengths.astype(int))


def synth_generate(spec: SynthSpec) -> list[VideoRecord]:
    """Piecewise-constant videos with planted key shots.

    Key shots draw their prototypes from the top of the feature range and
    their frame scores high, so importance is learnable from features;
    the key set is chosen to fit the summary budget, so the binarized
    labels mostly coincide with it. Fully deterministic per seed.
    """
    if min(spec.videos, spec.frames, spec.dim, spec.shots_per_video) < 1:
        raise DataFormatError("synthetic sizes must all be positive")
    if spec.shots_per_video * 2 > spec.frames:
        raise DataFormatError(
            f"cannot fit {spec.shots_per_video} shots of >= 2 frames into {spec.frames}"
        )
    rng = np.random.default_rng(spec.seed)
    records = []
    for v in range(spec.videos):
        part = _random_partition(rng, spec.frames, spec.shots_per_video, min_len=2)
        S = part.num_shots
        budget = int(np.floor(spec.budget_ratio * spec.frames))
        # mark key shots greedily in random order while they still fit
        order = rng.permutation(S)
        key = np.zeros(S, dtype=bool)
        used = 0
        for i in order:
            if used + part.shot_lengths[i] <= budget:
                key[i] = True
                used += int(part.shot_lengths[i])
        if not key.any():
            key[int(np.argmin(part.shot_lengths))] = True
        protos = np.where(
            key[:, None],
            rng.uniform(0.6, 1.0, size=(S, spec.dim)),
            rng.uniform(0.0, 0.4, size=(S, spec.dim)),
        )
        feats = np.repeat(protos, part.shot_lengths, axis=0)
        if spec.noise > 0.0:
            feats = feats + rng.normal(0.0, spec.noise, size=feats.shape)
        frame_key = np.repeat(key, part.shot_lengths)
        gt_scores = np.where(
            frame_key,
            rng.uniform(0.75, 0.95, size=spec.frames),
            rng.uniform(0.05, 0.25, size=spec.frames),
        )
        gt_binary = binarize_ground_truth(gt_scores, part, spec.budget_ratio)
        users = []
        for _ in range(spec.users):
            noisy = np.clip(gt_scores + rng.normal(0.0, 0.1, size=spec.frames), 0.0, 1.0)
            users.append(binarize_ground_truth(noisy, part, spec.budget_ratio))
        records.append(VideoRecord(
            id=f"{spec.name}_{v:03d}",
            features=feats,
            gt_scores=gt_scores,
            gt_binary=gt_binary,
            user_summaries=users,
            change_points=part,
            picks=np.arange(spec.frames) * 15,
            corpus_tag=spec.name,
        ))
    return records

"""Skeleton sequences: types, preprocessing, synthetic gait data, file I/O.

File formats
------------
Sequence file (one per sequence): ``# layout=<name>`` header, a column header,
then ``seq_id,label,frame_index,x0,y0,z0,...`` rows with 0-based frame indices
and repr-formatted floats (bit-exact round trips).

Dataset manifest: ``# layout=<name>`` and ``# classes=<C>`` headers followed by
``split,path`` rows, paths relative to the manifest.
"""

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import (
    IndexOutOfRange,
    InvalidConfig,
    InvalidLabel,
    LayoutMismatch,
    SequenceTooShort,
)
from .layouts import JointLayout, load_layout


@dataclass(frozen=True)
class SkeletonSequence:
    """An immutable (frames, joints, 3) coordinate block with an optional label."""

    positions: np.ndarray
    label: int | None = None
    source_id: str = ""

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 3 or pos.shape[2] != 3:
            raise LayoutMismatch("positions must have shape (frames, joints, 3)")
        if pos.shape[0] < 1:
            raise SequenceTooShort("a sequence needs at least one frame")
        if not np.isfinite(pos).all():
            raise LayoutMismatch("positions must be finite")
        pos = pos.copy()
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def frame_count(self) -> int:
        return self.positions.shape[0]

    @property
    def joint_count(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class DatasetSplit:
    """Train/test sequences over a fixed layout and label set 1..num_classes."""

    layout: str
    num_classes: int
    train: tuple
    test: tuple

    def __post_init__(self):
        if self.num_classes < 1:
            raise InvalidConfig("num_classes must be >= 1")
        for seq in (*self.train, *self.test):
            if seq.label is not None and not (1 <= seq.label <= self.num_classes):
                raise InvalidLabel(
                    f"label {seq.label} outside 1..{self.num_classes} ({seq.source_id})"
                )


# ---------------------------------------------------------------------------
# preprocessing
# ---------------------------------------------------------------------------


def trim_sequence(seq: SkeletonSequence, trim: int) -> SkeletonSequence:
    """Drop ``trim`` frames from each end (unstable capture boundaries)."""
    if trim < 0:
        raise InvalidConfig("trim must be >= 0")
    if trim == 0:
        return seq
    if seq.frame_count <= 2 * trim:
        raise SequenceTooShort(
            f"{seq.frame_count} frames cannot lose {trim} from each end"
        )
    return replace(seq, positions=seq.positions[trim:-trim])


def normalize_frames(seq: SkeletonSequence, reference_joint: int) -> SkeletonSequence:
    """Subtract the reference joint per frame; idempotent, zeros the reference."""
    if not (0 <= reference_joint < seq.joint_count):
        raise IndexOutOfRange(
            f"reference joint {reference_joint} outside 0..{seq.joint_count - 1}"
        )
    centered = seq.positions - seq.positions[:, reference_joint : reference_joint + 1, :]
    return replace(seq, positions=centered)


def window_sequence(seq: SkeletonSequence, length: int) -> list:
    """Cut into windows of ``length`` frames, stride ``length // 2``."""
    if length < 2 or length % 2:
        raise InvalidConfig("window length must be an even integer >= 2")
    if seq.frame_count < length:
        raise SequenceTooShort(f"{seq.frame_count} frames < window length {length}")
    stride = length // 2
    out = []
    for start in range(0, seq.frame_count - length + 1, stride):
        out.append(
            replace(
                seq,
                positions=seq.positions[start : start + length],
                source_id=f"{seq.source_id}/w{start:03d}",
            )
        )
    return out


def prepare_windows(split: DatasetSplit, trim: int, length: int) -> DatasetSplit:
    """Trim, normalize (layout reference joint), and window both splits."""
    layout = load_layout(split.layout)

    def process(sequences):
        windows = []
        for seq in sequences:
            seq = trim_sequence(seq, trim)
            seq = normalize_frames(seq, layout.reference_joint)
            windows.extend(window_sequence(seq, length))
        return tuple(windows)

    return DatasetSplit(
        layout=split.layout,
        num_classes=split.num_classes,
        train=process(split.train),
        test=process(split.test),
    )


# ---------------------------------------------------------------------------
# synthetic gait generator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    layout: str = "kinect20"
    identities: int = 5
    train_per_identity: int = 20
    test_per_identity: int = 5
    frames_per_sequence: int = 40
    noise: float = 0.005
    amplitude: float = 1.0
    scale_spread: float = 0.16
    yaw_range: float = 0.0
    motion: str = "sinusoid"


_ARM_WORDS = ("shoulder", "elbow", "wrist", "hand", "thumb", "tip", "arm")
_LEG_WORDS = ("hip", "knee", "ankle", "foot", "leg")
_SWING = {
    "shoulder": 0.35,
    "hip": 0.35,
    "elbow": 0.7,
    "knee": 0.7,
    "wrist": 0.9,
    "ankle": 0.9,
    "hand": 1.0,
    "foot": 1.0,
    "thumb": 1.0,
    "tip": 1.0,
    "arm": 0.8,
    "leg": 0.8,
}


def _joint_traits(name: str):
    """(scale category, swing factor, phase offset) from a joint name."""
    n = name.lower()
    category = "torso"
    swing = 0.0
    for word in _ARM_WORDS:
        if word in n:
            category, swing = "arm", _SWING[word]
            break
    else:
        for word in _LEG_WORDS:
            if word in n:
                category, swing = "leg", _SWING[word]
                break
        else:
            if "head" in n or "neck" in n:
                category = "head"
    left = "left" in n or (n.startswith("l") and category in ("arm", "leg"))
    right = "right" in n or (n.startswith("r") and category in ("arm", "leg"))
    # contralateral gait: left arm swings with the right leg
    if category == "arm":
        phase = 0.0 if left else math.pi if right else 0.0
    elif category == "leg":
        phase = math.pi if left else 0.0 if right else 0.0
    else:
        phase = 0.0
    return category, swing, phase


def _identity_params(layout: JointLayout, config: SynthConfig, seed: int, ident: int):
    rng = np.random.default_rng(np.random.SeedSequence((seed, ident)))
    lo, hi = 1.0 - config.scale_spread, 1.0 + config.scale_spread
    scales = {cat: rng.uniform(lo, hi) for cat in ("head", "torso", "arm", "leg")}
    traits = [_joint_traits(name) for name in layout.joint_names]
    offset_scale = np.array([scales[cat] for cat, _, _ in traits])
    rest = layout.rest_pose(offset_scale)
    swing = np.array(
        [
            (rng.uniform(0.05, 0.11) if cat == "arm" else rng.uniform(0.07, 0.15)) * s
            for cat, s, _ in traits
        ]
    )
    swing *= config.amplitude
    phase = np.array([p for _, _, p in traits])
    bob = rng.uniform(0.008, 0.02) * config.amplitude
    omega = rng.uniform(0.25, 0.45)
    return rest, swing, phase, bob, omega


def _sequence_positions(rest, swing, phase, bob, omega, config, rng):
    frames = config.frames_per_sequence
    t = np.arange(frames, dtype=np.float64)[:, None]
    pos = np.broadcast_to(rest, (frames, *rest.shape)).copy()
    if config.motion == "sinusoid":
        w = omega * rng.uniform(0.95, 1.05)
        start = rng.uniform(0.0, 2.0 * math.pi)
        pos[:, :, 2] += swing[None, :] * np.sin(w * t + start + phase[None, :])
        pos[:, :, 1] += bob * np.sin(2.0 * (w * t + start))
    elif config.motion == "linear":
        velocity = rng.uniform(-0.04, 0.04, size=3) * config.amplitude
        pos += t[:, :, None] * velocity[None, None, :]
    else:
        raise InvalidConfig(f"unknown motion model {config.motion!r}")
    if config.yaw_range > 0.0:
        # per-sequence viewing direction; the rotation axis choice is
        # immaterial because preprocessing centers on the reference joint
        yaw = rng.uniform(-config.yaw_range, config.yaw_range)
        cy, sy = math.cos(yaw), math.sin(yaw)
        x = pos[:, :, 0].copy()
        z = pos[:, :, 2]
        pos[:, :, 0] = cy * x + sy * z
        pos[:, :, 2] = cy * z - sy * x
    if config.noise > 0.0:
        pos += rng.normal(0.0, config.noise, size=pos.shape)
    return pos


def generate_synthetic_gait(config: SynthConfig, seed: int) -> DatasetSplit:
    """Deterministic synthetic walkers: per-identity limb lengths and stride."""
    if config.identities < 1:
        raise InvalidConfig("identities must be >= 1")
    if config.train_per_identity < 1 or config.test_per_identity < 0:
        raise InvalidConfig("need >= 1 train sequence and >= 0 test sequences per identity")
    if config.frames_per_sequence < 1:
        raise InvalidConfig("frames_per_sequence must be >= 1")
    if config.noise < 0.0 or config.amplitude < 0.0:
        raise InvalidConfig("noise and amplitude must be >= 0")
    if not 0.0 <= config.scale_spread < 1.0:
        raise InvalidConfig("scale_spread must be in [0, 1)")
    if not 0.0 <= config.yaw_range <= math.pi:
        raise InvalidConfig("yaw_range must be in [0, pi] radians")
    if config.motion not in ("sinusoid", "linear"):
        raise InvalidConfig(f"unknown motion model {config.motion!r}")
    layout = load_layout(config.layout)
    train = []
    test = []
    for ident in range(1, config.identities + 1):
        params = _identity_params(layout, config, seed, ident)
        for part, count, bucket in (
            ("train", config.train_per_identity, train),
            ("test", config.test_per_identity, test),
        ):
            for idx in range(count):
                rng = np.random.default_rng(
                    np.random.SeedSequence((seed, ident, idx, 0 if part == "train" else 1))
                )
                positions = _sequence_positions(*params, config, rng)
                bucket.append(
                    SkeletonSequence(
                        positions=positions,
                        label=ident,
                        source_id=f"id{ident:02d}_{part}{idx:02d}",
                    )
                )
    return DatasetSplit(
        layout=config.layout,
        num_classes=config.identities,
        train=tuple(train),
        test=tuple(test),
    )


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------


def _coord_header(joint_count: int) -> str:
    return ",".join(f"x{j},y{j},z{j}" for j in range(joint_count))


def save_sequence(seq: SkeletonSequence, layout_name: str, path: Path) -> None:
    lines = [f"# layout={layout_name}"]
    lines.append(f"seq_id,label,frame_index,{_coord_header(seq.joint_count)}")
    label = "" if seq.label is None else str(seq.label)
    for t in range(seq.frame_count):
        coords = ",".join(repr(float(v)) for v in seq.positions[t].ravel())
        lines.append(f"{seq.source_id},{label},{t},{coords}")
    path.write_text("\n".join(lines) + "\n")


def load_sequences(path: Path):
    """Read one sequence file; returns (layout_name, [SkeletonSequence, ...])."""
    layout_name = None
    frames: dict[str, list] = {}
    labels: dict[str, int | None] = {}
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line.lstrip("# ").partition("=")
            if key.strip() == "layout":
                layout_name = value.strip()
            continue
        if line.startswith("seq_id,"):
            continue
        seq_id, label_s, frame_s, rest = line.split(",", 3)
        coords = np.fromstring(rest, dtype=np.float64, sep=",")
        if coords.size % 3:
            raise LayoutMismatch(f"{path}: coordinate count not a multiple of 3")
        label = int(label_s) if label_s else None
        if seq_id in labels and labels[seq_id] != label:
            raise InvalidLabel(f"{path}: conflicting labels for {seq_id}")
        labels[seq_id] = label
        frames.setdefault(seq_id, []).append((int(frame_s), coords.reshape(-1, 3)))
    if layout_name is None:
        raise LayoutMismatch(f"{path}: missing '# layout=' header")
    sequences = []
    for seq_id, rows in frames.items():
        rows.sort(key=lambda r: r[0])
        if [r[0] for r in rows] != list(range(len(rows))):
            raise LayoutMismatch(f"{path}: frame indices of {seq_id} not 0..f-1")
        sequences.append(
            SkeletonSequence(
                positions=np.stack([r[1] for r in rows]),
                label=labels[seq_id],
                source_id=seq_id,
            )
        )
    return layout_name, sequences


def save_dataset(split: DatasetSplit, out_dir: Path) -> Path:
    """One file per sequence plus a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    seq_dir = out_dir / "sequences"
    seq_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for part, sequences in (("train", split.train), ("test", split.test)):
        for seq in sequences:
            rel = f"sequences/{seq.source_id}.csv"
            save_sequence(seq, split.layout, out_dir / rel)
            rows.append(f"{part},{rel}")
    manifest = out_dir / "manifest.txt"
    lines = [f"# layout={split.layout}", f"# classes={split.num_classes}", "split,path"]
    manifest.write_text("\n".join(lines + rows) + "\n")
    return manifest


def load_dataset(manifest_path: Path) -> DatasetSplit:
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    layout_name = None
    num_classes = None
    buckets: dict[str, list] = {"train": [], "test": []}
    for line in manifest_path.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line.lstrip("# ").partition("=")
            key = key.strip()
            if key == "layout":
                layout_name = value.strip()
            elif key == "classes":
                num_classes = int(value)
            continue
        if line.startswith("split,"):
            continue
        part, rel = line.split(",", 1)
        if part not in buckets:
            raise InvalidConfig(f"{manifest_path}: unknown split {part!r}")
        file_layout, sequences = load_sequences(base / rel)
        if file_layout != layout_name:
            raise LayoutMismatch(
                f"{rel}: layout {file_layout!r} != manifest layout {layout_name!r}"
            )
        buckets[part].extend(sequences)
    if layout_name is None or num_classes is None:
        raise InvalidConfig(f"{manifest_path}: missing layout/classes headers")
    joint_count = load_layout(layout_name).joint_count
    for seq in (*buckets["train"], *buckets["test"]):
        if seq.joint_count != joint_count:
            raise LayoutMismatch(
                f"{seq.source_id}: {seq.joint_count} joints, layout has {joint_count}"
            )
    return DatasetSplit(
        layout=layout_name,
        num_classes=num_classes,
        train=tuple(buckets["train"]),
        test=tuple(buckets["test"]),
    )

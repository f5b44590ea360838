import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skelgait.errors import (
    IndexOutOfRange,
    InvalidConfig,
    InvalidLabel,
    LayoutMismatch,
    SequenceTooShort,
)
from skelgait.skeletons import (
    DatasetSplit,
    SkeletonSequence,
    SynthConfig,
    generate_synthetic_gait,
    load_dataset,
    load_sequences,
    normalize_frames,
    prepare_windows,
    save_dataset,
    save_sequence,
    trim_sequence,
    window_sequence,
)


def seq_of(frames, joints=2, label=None, source_id="s"):
    base = np.arange(frames * joints * 3, dtype=np.float64).reshape(frames, joints, 3)
    return SkeletonSequence(positions=base, label=label, source_id=source_id)


# --- sequence type ----------------------------------------------------------


def test_positions_are_frozen_copies():
    raw = np.zeros((2, 2, 3))
    seq = SkeletonSequence(positions=raw)
    raw[0, 0, 0] = 5.0
    assert seq.positions[0, 0, 0] == 0.0
    with pytest.raises(ValueError):
        seq.positions[0, 0, 0] = 1.0


def test_sequence_shape_and_finiteness_validated():
    with pytest.raises(LayoutMismatch):
        SkeletonSequence(positions=np.zeros((2, 2)))
    with pytest.raises(LayoutMismatch):
        SkeletonSequence(positions=np.full((1, 2, 3), np.nan))
    with pytest.raises(SequenceTooShort):
        SkeletonSequence(positions=np.zeros((0, 2, 3)))


def test_split_rejects_out_of_range_labels():
    good = seq_of(2, label=1)
    with pytest.raises(InvalidLabel):
        DatasetSplit(layout="toy6", num_classes=1, train=(good, seq_of(2, label=2)), test=())


# --- trimming ---------------------------------------------------------------


def test_trim_keeps_middle_frames():
    seq = seq_of(30)
    trimmed = trim_sequence(seq, 10)
    assert trimmed.frame_count == 10
    np.testing.assert_array_equal(trimmed.positions, seq.positions[10:20])


def test_trim_to_single_frame():
    seq = seq_of(21)
    trimmed = trim_sequence(seq, 10)
    assert trimmed.frame_count == 1
    np.testing.assert_array_equal(trimmed.positions[0], seq.positions[10])


def test_trim_edge_cases():
    seq = seq_of(5)
    assert trim_sequence(seq, 0) is seq
    with pytest.raises(SequenceTooShort):
        trim_sequence(seq_of(20), 10)
    with pytest.raises(InvalidConfig):
        trim_sequence(seq, -1)


# --- normalization ----------------------------------------------------------


def test_normalize_subtracts_reference_joint():
    positions = np.array([[[1.0, 2.0, 3.0], [1.0, 2.0, 4.0]]])
    seq = SkeletonSequence(positions=positions)
    out = normalize_frames(seq, 0)
    np.testing.assert_array_equal(out.positions, [[[0, 0, 0], [0, 0, 1]]])


def test_normalize_is_idempotent_and_offset_invariant():
    rng = np.random.default_rng(3)
    positions = rng.normal(size=(4, 5, 3))
    seq = SkeletonSequence(positions=positions)
    once = normalize_frames(seq, 2)
    twice = normalize_frames(once, 2)
    np.testing.assert_array_equal(once.positions, twice.positions)
    shifted = SkeletonSequence(positions=positions + np.array([10.0, -3.0, 0.5]))
    np.testing.assert_allclose(
        normalize_frames(shifted, 2).positions, once.positions, atol=1e-12
    )


def test_normalize_reference_out_of_range():
    with pytest.raises(IndexOutOfRange):
        normalize_frames(seq_of(2, joints=3), 3)


# --- windowing --------------------------------------------------------------


def test_window_starts_at_half_length_stride():
    windows = window_sequence(seq_of(12, source_id="run"), 6)
    assert [w.source_id for w in windows] == ["run/w000", "run/w003", "run/w006"]
    for w, start in zip(windows, (0, 3, 6)):
        assert w.frame_count == 6
        np.testing.assert_array_equal(w.positions, seq_of(12).positions[start : start + 6])


def test_window_exact_fit_and_remainder():
    assert len(window_sequence(seq_of(6), 6)) == 1
    assert len(window_sequence(seq_of(13), 6)) == 3  # trailing frame dropped


def test_window_validation():
    with pytest.raises(InvalidConfig):
        window_sequence(seq_of(10), 5)
    with pytest.raises(InvalidConfig):
        window_sequence(seq_of(10), 0)
    with pytest.raises(SequenceTooShort):
        window_sequence(seq_of(4), 6)


@given(st.integers(6, 40), st.sampled_from([2, 4, 6]))
@settings(max_examples=30, deadline=None)
def test_window_count_formula(frames, length):
    if frames < length:
        return
    windows = window_sequence(seq_of(frames), length)
    stride = length // 2
    assert len(windows) == (frames - length) // stride + 1
    assert all(w.frame_count == length for w in windows)


def test_prepare_windows_counts_and_reference_zeroing(toy_split):
    # 14 raw frames, trim 2 -> 10, windows of 4 (stride 2) -> starts 0,2,4,6
    prepared = prepare_windows(toy_split, trim=2, length=4)
    assert len(prepared.train) == len(toy_split.train) * 4
    assert len(prepared.test) == len(toy_split.test) * 4
    for w in prepared.train[:4]:
        np.testing.assert_array_equal(w.positions[:, 1, :], 0.0)  # toy6 reference joint
        assert w.label == toy_split.train[0].label


# --- synthetic data ---------------------------------------------------------


def test_same_seed_is_bit_identical():
    config = SynthConfig(layout="toy6", identities=2, train_per_identity=2,
                         test_per_identity=1, frames_per_sequence=6)
    a = generate_synthetic_gait(config, seed=9)
    b = generate_synthetic_gait(config, seed=9)
    for left, right in zip((*a.train, *a.test), (*b.train, *b.test)):
        np.testing.assert_array_equal(left.positions, right.positions)
        assert left.source_id == right.source_id and left.label == right.label


def test_zero_amplitude_zero_noise_freezes_the_walker():
    config = SynthConfig(layout="toy6", identities=1, train_per_identity=1,
                         test_per_identity=0, frames_per_sequence=5,
                         amplitude=0.0, noise=0.0)
    split = generate_synthetic_gait(config, seed=4)
    frames = split.train[0].positions
    for t in range(1, 5):
        np.testing.assert_array_equal(frames[t], frames[0])


def test_identities_have_distinct_proportions():
    config = SynthConfig(layout="toy6", identities=3, train_per_identity=1,
                         test_per_identity=0, frames_per_sequence=4, noise=0.0)
    split = generate_synthetic_gait(config, seed=5)

    def mean_bone_spread(seq):
        pos = seq.positions[0]
        return float(np.linalg.norm(pos[:, None] - pos[None, :], axis=-1).mean())

    spreads = [mean_bone_spread(s) for s in split.train]
    assert len({round(v, 6) for v in spreads}) == 3


def test_synth_labels_and_ids():
    config = SynthConfig(layout="toy6", identities=2, train_per_identity=2,
                         test_per_identity=1, frames_per_sequence=4)
    split = generate_synthetic_gait(config, seed=1)
    assert split.num_classes == 2
    assert sorted({s.label for s in split.train}) == [1, 2]
    ids = [s.source_id for s in (*split.train, *split.test)]
    assert len(set(ids)) == len(ids)


def test_synth_validation():
    base = dict(layout="toy6", identities=1, train_per_identity=1,
                test_per_identity=0, frames_per_sequence=4)
    with pytest.raises(InvalidConfig):
        generate_synthetic_gait(SynthConfig(**base, motion="hover"), seed=1)
    with pytest.raises(InvalidConfig):
        generate_synthetic_gait(SynthConfig(**base, scale_spread=1.0), seed=1)
    with pytest.raises(InvalidConfig):
        generate_synthetic_gait(SynthConfig(**base, yaw_range=4.0), seed=1)
    with pytest.raises(InvalidConfig):
        generate_synthetic_gait(SynthConfig(**base, noise=-0.1), seed=1)


def test_yaw_rotation_preserves_heights_and_lengths():
    base = dict(layout="toy6", identities=1, train_per_identity=3,
                test_per_identity=0, frames_per_sequence=4, noise=0.0)
    flat = generate_synthetic_gait(SynthConfig(**base), seed=6)
    turned = generate_synthetic_gait(SynthConfig(**base, yaw_range=2.0), seed=6)
    for a, b in zip(flat.train, turned.train):
        np.testing.assert_allclose(a.positions[..., 1], b.positions[..., 1], atol=1e-12)
        np.testing.assert_allclose(
            np.linalg.norm(a.positions, axis=-1),
            np.linalg.norm(b.positions, axis=-1),
            atol=1e-12,
        )


def test_linear_motion_advances_monotonically():
    config = SynthConfig(layout="toy6", identities=1, train_per_identity=1,
                         test_per_identity=0, frames_per_sequence=6,
                         noise=0.0, motion="linear")
    split = generate_synthetic_gait(config, seed=2)
    centers = split.train[0].positions.mean(axis=1)
    deltas = np.diff(centers[:, 0])
    assert np.all(deltas > 0) or np.all(deltas < 0)


# --- file I/O ---------------------------------------------------------------


def test_sequence_roundtrip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(8)
    seq = SkeletonSequence(positions=rng.normal(size=(3, 6, 3)), label=2, source_id="id01_a")
    path = tmp_path / "one.csv"
    save_sequence(seq, "toy6", path)
    layout_name, loaded = load_sequences(path)
    assert layout_name == "toy6"
    assert len(loaded) == 1
    np.testing.assert_array_equal(loaded[0].positions, seq.positions)
    assert loaded[0].label == 2 and loaded[0].source_id == "id01_a"


def test_unlabeled_sequence_roundtrip(tmp_path):
    seq = SkeletonSequence(positions=np.ones((2, 6, 3)), source_id="x")
    path = tmp_path / "u.csv"
    save_sequence(seq, "toy6", path)
    _, loaded = load_sequences(path)
    assert loaded[0].label is None


def test_dataset_roundtrip(toy_split, tmp_path):
    manifest = save_dataset(toy_split, tmp_path)
    loaded = load_dataset(manifest)
    assert loaded.layout == toy_split.layout
    assert loaded.num_classes == toy_split.num_classes
    assert len(loaded.train) == len(toy_split.train)
    assert len(loaded.test) == len(toy_split.test)
    by_id = {s.source_id: s for s in loaded.train}
    for seq in toy_split.train:
        np.testing.assert_array_equal(by_id[seq.source_id].positions, seq.positions)
        assert by_id[seq.source_id].label == seq.label


def test_manifest_lists_every_sequence(toy_manifest):
    rows = [ln for ln in toy_manifest.read_text().splitlines()
            if ln and not ln.startswith(("#", "split,"))]
    assert len(rows) == 15 + 6
    assert sum(r.startswith("train,") for r in rows) == 15

"""Training, evaluation and export stages wired together behind the CLI.

Every stage is seeded through independent ``np.random.SeedSequence`` streams,
so two runs with the same config produce byte-identical logs, checkpoints and
reports (with threads pinned to one, BLAS reductions are deterministic too).
"""

from pathlib import Path

import numpy as np

from . import evaluation, ssp
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig
from .errors import InvalidConfig, InvalidLabel, LayoutMismatch
from .layouts import load_layout
from .model import ModelConfig, RelationNetwork
from .recognition import recognition_loss
from .skeletons import (
    DatasetSplit,
    SynthConfig,
    generate_synthetic_gait,
    normalize_frames,
    prepare_windows,
    save_dataset,
    trim_sequence,
)
from .training import AdamState, adam_step, backward

# disjoint per-purpose seed streams (arbitrary fixed tags)
_MODEL_STREAM = 11
_SSP_STREAM = 13
_SHUFFLE_STREAM = 17


def synth_dataset(config: RunConfig) -> DatasetSplit:
    synth = SynthConfig(
        layout=config.layout,
        identities=config.identities,
        train_per_identity=config.train_per_identity,
        test_per_identity=config.test_per_identity,
        frames_per_sequence=config.raw_frames,
        noise=config.noise,
        amplitude=config.amplitude,
        scale_spread=config.scale_spread,
        yaw_range=config.yaw_range,
        motion=config.motion,
    )
    return generate_synthetic_gait(synth, config.seed)


def synth(config: RunConfig, out_dir) -> Path:
    """Generate a synthetic dataset on disk; returns the manifest path."""
    return save_dataset(synth_dataset(config), Path(out_dir))


def windowed(config: RunConfig, split: DatasetSplit) -> DatasetSplit:
    return prepare_windows(split, trim=config.trim, length=config.frames)


def stack_split(sequences, require_labels: bool = True):
    """Stack equal-length windows into (N, f, J, 3) plus a label vector."""
    if not sequences:
        raise InvalidConfig("split holds no sequences")
    positions = np.stack([seq.positions for seq in sequences])
    labels = np.zeros(len(sequences), dtype=np.int64)
    for i, seq in enumerate(sequences):
        if seq.label is None:
            if require_labels:
                raise InvalidLabel(f"sequence {seq.source_id!r} carries no label")
            continue
        labels[i] = seq.label
    return positions, labels


def model_config(config: RunConfig, classes: int | None) -> ModelConfig:
    return ModelConfig(
        layout=config.layout,
        feature_dim=config.feature_dim,
        heads=config.heads,
        level_mix=config.level_mix,
        hidden_dim=config.hidden_dim,
        pred_hidden=config.pred_hidden,
        rec_hidden=config.rec_hidden,
        classes=classes,
        ccrl_sequential=config.ccrl_sequential,
    )


def build_model(config: RunConfig, classes: int | None = None) -> RelationNetwork:
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, _MODEL_STREAM)))
    return RelationNetwork(model_config(config, classes), rng)


def predict_scores(model: RelationNetwork, positions: np.ndarray, batch_size: int):
    rows = []
    for start in range(0, positions.shape[0], batch_size):
        rows.append(model.class_probabilities(positions[start : start + batch_size]).data)
    return np.concatenate(rows, axis=0)


def _write_lines(path: Path, lines) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    return path


def pretrain(config: RunConfig, dataset: DatasetSplit, out_dir, resume=None) -> dict:
    """Sparse next-skeleton pre-training over the training windows."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    positions, _ = stack_split(windowed(config, dataset).train, require_labels=False)
    count = positions.shape[0]
    model = build_model(config, classes=None)
    adam = AdamState.for_store(model.store, config.lr)
    first_epoch = 1
    if resume is not None:
        data = load_checkpoint(resume)
        if data.metadata.get("layout") != config.layout:
            raise LayoutMismatch(
                f"checkpoint layout {data.metadata.get('layout')!r} != run layout "
                f"{config.layout!r}"
            )
        model.load_entries(data.entries)
        if data.adam_step is not None:
            adam = data.restore_adam(config.lr)
        first_epoch = int(data.metadata.get("epochs_done", "0")) + 1
    lines = ["epoch,ssp_loss"]
    losses = []
    last_epoch = first_epoch - 1
    for epoch in range(first_epoch, first_epoch + config.pretrain_epochs):
        last_epoch = epoch
        sample_rng = np.random.default_rng(
            np.random.SeedSequence((config.seed, _SSP_STREAM, epoch))
        )
        samples = [ssp.sample_subsequences(config.frames, sample_rng) for _ in range(count)]
        order = np.random.default_rng(
            np.random.SeedSequence((config.seed, _SHUFFLE_STREAM, epoch))
        ).permutation(count)
        total = 0.0
        for start in range(0, count, config.batch_size):
            batch = order[start : start + config.batch_size]
            loss = model.ssp_loss(positions[batch], [samples[i] for i in batch])
            backward(loss, model.store)
            adam_step(adam, model.store)
            total += loss.item() * batch.size
        losses.append(total / count)
        lines.append(f"{epoch},{repr(float(losses[-1]))}")
    _write_lines(out / "pretrain_log.csv", lines)
    metadata = model.metadata() | {
        "stage": "pretrain",
        "seed": str(config.seed),
        "epochs_done": str(last_epoch),
    }
    path = save_checkpoint(out / "pretrain.ckpt", model.store, metadata, adam=adam)
    return {
        "checkpoint": path,
        "log": out / "pretrain_log.csv",
        "losses": losses,
        "adam_step": adam.step,
    }


def finetune(config: RunConfig, dataset: DatasetSplit, out_dir, init=None) -> dict:
    """Recognition fine-tuning, optionally from a pre-trained backbone."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    positions, labels = stack_split(windowed(config, dataset).train)
    count = positions.shape[0]
    model = build_model(config, classes=dataset.num_classes)
    if init is not None:
        data = load_checkpoint(init)
        if data.metadata.get("layout") != config.layout:
            raise LayoutMismatch(
                f"checkpoint layout {data.metadata.get('layout')!r} != run layout "
                f"{config.layout!r}"
            )
        model.load_entries(data.entries, allow_fresh_recognition=True)
    adam = AdamState.for_store(model.store, config.lr)
    lines = ["epoch,train_loss,train_rank1"]
    milestone = -1
    perfect_streak = 0
    epochs_run = 0
    train_loss = float("nan")
    train_rank1 = 0.0
    for epoch in range(1, config.finetune_epochs + 1):
        epochs_run = epoch
        order = np.random.default_rng(
            np.random.SeedSequence((config.seed, _SHUFFLE_STREAM, epoch))
        ).permutation(count)
        total = 0.0
        for start in range(0, count, config.batch_size):
            batch = order[start : start + config.batch_size]
            probs = model.class_probabilities(positions[batch])
            loss = recognition_loss(probs, labels[batch], model.store, config.l2_coeff)
            backward(loss, model.store)
            adam_step(adam, model.store)
            total += loss.item() * batch.size
        train_loss = total / count
        curve = evaluation.cmc(predict_scores(model, positions, config.batch_size), labels)
        train_rank1 = evaluation.rank1(curve)
        lines.append(f"{epoch},{repr(float(train_loss))},{repr(float(train_rank1))}")
        if train_rank1 >= 100.0:
            if milestone < 0:
                milestone = epoch
            perfect_streak += 1
        else:
            perfect_streak = 0
        if config.patience and perfect_streak >= config.patience:
            break
    _write_lines(out / "finetune_log.csv", lines)
    _write_lines(
        out / "finetune_summary.txt",
        [
            f"epochs_run={epochs_run}",
            f"milestone_epoch={milestone}",
            f"final_train_loss={repr(float(train_loss))}",
            f"final_train_rank1={repr(float(train_rank1))}",
        ],
    )
    metadata = model.metadata() | {"stage": "finetune", "seed": str(config.seed)}
    path = save_checkpoint(out / "finetune.ckpt", model.store, metadata, adam=adam)
    return {
        "checkpoint": path,
        "log": out / "finetune_log.csv",
        "summary": out / "finetune_summary.txt",
        "milestone": milestone,
        "train_rank1": train_rank1,
    }


def _restore(checkpoint_path, expected_layout: str) -> RelationNetwork:
    data = load_checkpoint(checkpoint_path)
    loaded = RelationNetwork.config_from_metadata(data.metadata)
    if loaded.layout != expected_layout:
        raise LayoutMismatch(
            f"checkpoint layout {loaded.layout!r} != dataset layout {expected_layout!r}"
        )
    model = RelationNetwork(loaded, 0)
    model.load_entries(data.entries)
    return model


def evaluate(
    config: RunConfig, dataset: DatasetSplit, checkpoint_path, out_dir, split: str = "test"
) -> dict:
    """Closed-set identification over one split's windows; writes the CMC report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if split not in ("train", "test"):
        raise InvalidConfig(f"split must be train or test, got {split!r}")
    model = _restore(checkpoint_path, dataset.layout)
    if model.recognition_head is None:
        raise InvalidConfig("checkpoint has no recognition head; fine-tune first")
    prepared = windowed(config, dataset)
    positions, labels = stack_split(prepared.train if split == "train" else prepared.test)
    scores = predict_scores(model, positions, config.batch_size)
    evaluation.validate_scores(scores)
    curve = evaluation.cmc(scores, labels)
    report = evaluation.write_report(out / "report.csv", curve, probes=labels.size)
    return {
        "report": report,
        "curve": curve,
        "rank1": evaluation.rank1(curve),
        "nauc": evaluation.nauc(curve),
    }


def export_relations(
    config: RunConfig,
    dataset: DatasetSplit,
    checkpoint_path,
    out_dir,
    sequence_id: str | None = None,
    limit: int | None = None,
) -> list:
    """Dump learned relation matrices per frame of one (preprocessed) sequence."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = _restore(checkpoint_path, dataset.layout)
    pool = (*dataset.test, *dataset.train)
    if sequence_id is None:
        seq = pool[0]
    else:
        matches = [s for s in pool if s.source_id == sequence_id]
        if not matches:
            raise InvalidConfig(f"no sequence with id {sequence_id!r} in the dataset")
        seq = matches[0]
    layout = load_layout(dataset.layout)
    seq = normalize_frames(trim_sequence(seq, config.trim), layout.reference_joint)
    frames = seq.positions if limit is None else seq.positions[:limit]
    written = []
    for t, frame in enumerate(frames):
        maps = model.relation_maps(frame)
        rows = ["level,head,i,j,weight"]
        for level in sorted(maps["adjacency"]):
            for head, matrix in enumerate(maps["adjacency"][level]):
                for i in range(matrix.shape[0]):
                    for j in range(matrix.shape[1]):
                        rows.append(f"{level},{head},{i},{j},{repr(float(matrix[i, j]))}")
        written.append(_write_lines(out / f"structural_frame{t:03d}.csv", rows))
        rows = ["pair,i,j,weight"]
        for pair in ("2-1", "3-2"):
            matrix = maps["collab"][pair]
            for i in range(matrix.shape[0]):
                for j in range(matrix.shape[1]):
                    rows.append(f"{pair},{i},{j},{repr(float(matrix[i, j]))}")
        written.append(_write_lines(out / f"collab_frame{t:03d}.csv", rows))
        rows = ["level,node,x,y,z"]
        for level in sorted(maps["node_positions"]):
            nodes = maps["node_positions"][level]
            for i in range(nodes.shape[0]):
                x, y, z = (repr(float(v)) for v in nodes[i])
                rows.append(f"{level},{i},{x},{y},{z}")
        written.append(_write_lines(out / f"positions_frame{t:03d}.csv", rows))
    return written

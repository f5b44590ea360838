"""The assembled multi-level skeleton relation network.

Pipeline per frame batch: three structural relation passes (joints, parts,
body regions), cross-level collaborative updates of the part/body features,
broadcast back to member joints, weighted fusion into per-joint features.
Frame features are flattened row-major over joints and fed to a 2-layer LSTM;
heads decode hidden states into next-skeleton predictions (pre-training) or
class distributions (recognition).
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import collab, recognition, ssp, structural
from .encoder import LstmLayerParams, encode_sequence
from .errors import DimensionMismatch, InvalidConfig, LayoutMismatch
from .graphs import adjacency_mask, node_positions_batch
from .heads import MlpHead
from .layouts import load_layout
from .ssp import ssp_loss as _ssp_loss
from .training import ParameterStore

LEVELS = (1, 2, 3)


@dataclass
class ModelConfig:
    layout: str = "kinect20"
    feature_dim: int = 8
    heads: int = 8
    level_mix: float = 0.3
    hidden_dim: int = 128
    pred_hidden: int = 128
    rec_hidden: int = 128
    classes: int | None = None
    ccrl_sequential: bool = False

    def validate(self) -> None:
        positive = (
            self.feature_dim,
            self.heads,
            self.hidden_dim,
            self.pred_hidden,
            self.rec_hidden,
        )
        if any(v < 1 for v in positive):
            raise InvalidConfig("model dimensions must all be >= 1")
        if self.classes is not None and self.classes < 1:
            raise InvalidConfig("classes must be >= 1 when set")
        if self.level_mix < 0.0:
            raise InvalidConfig("level_mix must be >= 0")


def _glorot(rng: np.random.Generator, shape) -> np.ndarray:
    if len(shape) == 1:
        fan_in, fan_out = shape[0], 1
    else:
        fan_out, fan_in = shape
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class RelationNetwork:
    """Owns the parameter store and wires the module ops together."""

    def __init__(self, config: ModelConfig, rng):
        config.validate()
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        self.config = config
        self.layout = load_layout(config.layout)
        self.store = ParameterStore()
        self.masks = {
            level: adjacency_mask(self.layout.node_count(level), self.layout.edges[level])
            for level in LEVELS
        }
        self.memberships = {
            level: self.layout.membership_matrix(level) for level in (2, 3)
        }
        self.joint_maps = {level: self.layout.joint_to_node(level) for level in (2, 3)}
        self._build_parameters(rng)

    # -- parameters -----------------------------------------------------------

    def _param(self, rng, name, shape):
        return self.store.add(name, _glorot(rng, shape))

    def _build_parameters(self, rng: np.random.Generator) -> None:
        cfg = self.config
        d1 = cfg.feature_dim
        self.structural_heads = {}
        for level in LEVELS:
            heads = []
            for i in range(cfg.heads):
                prefix = f"structural.l{level}.h{i}"
                heads.append(
                    structural.RelationHeadParams(
                        node_weight=self._param(rng, f"{prefix}.node_weight", (d1, 3)),
                        relation_weight=self._param(
                            rng, f"{prefix}.relation_weight", (2 * d1,)
                        ),
                    )
                )
            self.structural_heads[level] = heads
        self.collab_w21 = self._param(rng, "collab.w21", (d1, d1))
        self.collab_w32 = self._param(rng, "collab.w32", (d1, d1))

        rep_dim = self.layout.joint_count * d1
        hidden = cfg.hidden_dim
        self.lstm_layers = []
        for i, in_dim in enumerate((rep_dim, hidden), start=1):
            bias = np.zeros(4 * hidden)
            bias[hidden : 2 * hidden] = 1.0  # forget gate starts open
            self.lstm_layers.append(
                LstmLayerParams(
                    wx=self._param(rng, f"encoder.l{i}.wx", (4 * hidden, in_dim)),
                    wh=self._param(rng, f"encoder.l{i}.wh", (4 * hidden, hidden)),
                    b=self.store.add(f"encoder.l{i}.b", bias),
                )
            )
        # head output layers start at zero: predictions begin neutral and the
        # backbone sees no gradient until the head has aligned, which protects
        # pre-trained features from the initially random head
        self.prediction_head = MlpHead(
            hidden_weight=self._param(rng, "predict.hidden_weight", (cfg.pred_hidden, hidden)),
            hidden_bias=self.store.add("predict.hidden_bias", np.zeros(cfg.pred_hidden)),
            out_weight=self.store.add(
                "predict.out_weight", np.zeros((self.layout.joint_count * 3, cfg.pred_hidden))
            ),
            out_bias=self.store.add(
                "predict.out_bias", np.zeros(self.layout.joint_count * 3)
            ),
        )
        self.recognition_head = None
        if cfg.classes is not None:
            self.recognition_head = MlpHead(
                hidden_weight=self._param(
                    rng, "recognize.hidden_weight", (cfg.rec_hidden, hidden)
                ),
                hidden_bias=self.store.add("recognize.hidden_bias", np.zeros(cfg.rec_hidden)),
                out_weight=self.store.add(
                    "recognize.out_weight", np.zeros((cfg.classes, cfg.rec_hidden))
                ),
                out_bias=self.store.add("recognize.out_bias", np.zeros(cfg.classes)),
            )

    # -- forward passes --------------------------------------------------------

    def frame_features(self, frames: np.ndarray, collect: bool = False):
        """Fused per-joint features for frames (B, J, 3)."""
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim != 3 or frames.shape[2] != 3:
            raise DimensionMismatch("frames must be (batch, joints, 3)")
        if frames.shape[1] != self.layout.joint_count:
            raise LayoutMismatch(
                f"layout {self.layout.name!r} has {self.layout.joint_count} joints, "
                f"frames carry {frames.shape[1]}"
            )
        nodes = {
            1: frames,
            2: node_positions_batch(frames, self.memberships[2]),
            3: node_positions_batch(frames, self.memberships[3]),
        }
        feats = {}
        adjacencies = {}
        for level in LEVELS:
            feats[level], adjacencies[level] = structural.msrl_forward_batch(
                self.structural_heads[level], nodes[level], self.masks[level]
            )
        relations21 = collab.collab_relations(feats[2], feats[1])
        if self.config.ccrl_sequential:
            updated2 = collab.collab_update(feats[2], feats[1], relations21, self.collab_w21)
            relations32 = collab.collab_relations(feats[3], updated2)
            updated3 = collab.collab_update(feats[3], updated2, relations32, self.collab_w32)
        else:
            relations32 = collab.collab_relations(feats[3], feats[2])
            updated2 = collab.collab_update(feats[2], feats[1], relations21, self.collab_w21)
            updated3 = collab.collab_update(feats[3], feats[2], relations32, self.collab_w32)
        part_joints = collab.broadcast_to_joints(updated2, self.joint_maps[2])
        body_joints = collab.broadcast_to_joints(updated3, self.joint_maps[3])
        fused = collab.fuse_levels(feats[1], part_joints, body_joints, self.config.level_mix)
        if not collect:
            return fused
        details = {
            "node_positions": nodes,
            "adjacency": adjacencies,
            "collab": {"2-1": relations21, "3-2": relations32},
            "level_features": feats,
        }
        return fused, details

    def sequence_representations(self, positions: np.ndarray) -> ad.Tensor:
        """(N, f, J, 3) positions -> (N, f, J*D1) frame representations."""
        positions = np.asarray(positions, dtype=np.float64)
        if positions.ndim != 4 or positions.shape[3] != 3:
            raise DimensionMismatch("positions must be (N, f, J, 3)")
        n_seq, frames = positions.shape[:2]
        fused = self.frame_features(positions.reshape(n_seq * frames, *positions.shape[2:]))
        width = self.layout.joint_count * self.config.feature_dim
        return ad.reshape(fused, (n_seq, frames, width))

    def encode(self, reps) -> ad.Tensor:
        return encode_sequence(self.lstm_layers, reps)

    def ssp_loss(self, positions, samples) -> ad.Tensor:
        return _ssp_loss(self, positions, samples)

    def class_probabilities(self, positions: np.ndarray) -> ad.Tensor:
        if self.recognition_head is None:
            raise InvalidConfig("model has no recognition head (classes unset)")
        states = self.encode(self.sequence_representations(positions))
        return recognition.sequence_probabilities(self.recognition_head, states)

    def relation_maps(self, frame: np.ndarray) -> dict:
        """Numpy relation matrices of one frame (export/diagnostics)."""
        _, details = self.frame_features(np.asarray(frame)[None], collect=True)
        out = {
            "node_positions": {
                level: np.asarray(pos[0]) for level, pos in details["node_positions"].items()
            },
            "adjacency": {
                level: [np.asarray(a.data[0]) for a in heads]
                for level, heads in details["adjacency"].items()
            },
            "collab": {
                pair: np.asarray(t.data[0]) for pair, t in details["collab"].items()
            },
        }
        return out

    # -- persistence -----------------------------------------------------------

    def metadata(self) -> dict:
        cfg = self.config
        return {
            "kind": "skelgait-relation-network",
            "layout": cfg.layout,
            "feature_dim": str(cfg.feature_dim),
            "heads": str(cfg.heads),
            "level_mix": repr(cfg.level_mix),
            "hidden_dim": str(cfg.hidden_dim),
            "pred_hidden": str(cfg.pred_hidden),
            "rec_hidden": str(cfg.rec_hidden),
            "classes": "" if cfg.classes is None else str(cfg.classes),
            "ccrl_sequential": str(cfg.ccrl_sequential).lower(),
            "gate_order": "input,forget,cell,output",
            "rep_flatten": "row-major over joints",
            "init": "glorot-uniform",
            "forget_bias": "1.0",
        }

    @staticmethod
    def config_from_metadata(metadata: dict) -> ModelConfig:
        return ModelConfig(
            layout=metadata["layout"],
            feature_dim=int(metadata["feature_dim"]),
            heads=int(metadata["heads"]),
            level_mix=float(metadata["level_mix"]),
            hidden_dim=int(metadata["hidden_dim"]),
            pred_hidden=int(metadata["pred_hidden"]),
            rec_hidden=int(metadata["rec_hidden"]),
            classes=int(metadata["classes"]) if metadata.get("classes") else None,
            ccrl_sequential=metadata.get("ccrl_sequential", "false") == "true",
        )

    def load_entries(self, entries: dict, allow_fresh_recognition: bool = False) -> None:
        """Overwrite parameters from checkpoint entries (shapes must match)."""
        for name, tensor in self.store.items():
            if name in entries:
                value = entries[name]
                if tuple(value.shape) != tensor.data.shape:
                    raise DimensionMismatch(
                        f"{name}: checkpoint shape {tuple(value.shape)} != "
                        f"model shape {tensor.data.shape}"
                    )
                tensor.data[...] = value
            elif allow_fresh_recognition and name.startswith("recognize."):
                continue
            else:
                raise InvalidConfig(f"checkpoint is missing parameter {name!r}")
        unknown = set(entries) - set(self.store.names())
        if unknown:
            raise InvalidConfig(f"checkpoint has unknown parameters: {sorted(unknown)}")

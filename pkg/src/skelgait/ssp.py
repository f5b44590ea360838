"""Self-supervised sparse next-skeleton prediction.

For a training sequence of f frames, one subsequence is sampled per length
k = 1..f-1: a uniformly random size-k subset of frames 0..f-2, kept in
order. Encoding the gathered frames gives hidden states h_1..h_k; state t
predicts the skeleton at the next sampled index (for t < k) and the state at
the last sampled index predicts its immediate successor frame. The loss sums
squared residuals over all states and samples, averaged over sequences only.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DimensionMismatch, InvalidLength
from .heads import MlpHead, head_apply


@dataclass(frozen=True)
class SparseSample:
    """Strictly increasing 0-based frame indices drawn from 0..f-2."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if not idx:
            raise InvalidLength("a sparse sample needs at least one index")
        if idx[0] < 0 or any(b <= a for a, b in zip(idx, idx[1:])):
            raise InvalidLength("indices must be strictly increasing and >= 0")
        object.__setattr__(self, "indices", idx)

    @property
    def k(self) -> int:
        return len(self.indices)

    @property
    def target_indices(self) -> tuple:
        """Frame predicted by each state: the next index, then the successor."""
        return (*self.indices[1:], self.indices[-1] + 1)


def sample_subsequences(frame_count: int, rng) -> list:
    """One uniformly drawn SparseSample per length k = 1..frame_count-1."""
    if frame_count < 2:
        raise InvalidLength("sampling needs sequences of at least 2 frames")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    out = []
    for k in range(1, frame_count):
        picks = np.sort(rng.choice(frame_count - 1, size=k, replace=False))
        out.append(SparseSample(tuple(int(i) for i in picks)))
    return out


def predict_next(head: MlpHead, state) -> ad.Tensor:
    """Decode one hidden state into a (J, 3) skeleton prediction."""
    state = ad.as_tensor(state)
    if state.data.ndim != 1:
        raise DimensionMismatch("predict_next expects a single (D2,) state")
    if head.out_dim % 3:
        raise DimensionMismatch("prediction head output must be J*3 wide")
    out = head_apply(head, ad.reshape(state, (1, state.data.shape[0])))
    return ad.reshape(out, (head.out_dim // 3, 3))


def ssp_loss(model, positions: np.ndarray, samples) -> ad.Tensor:
    """Sparse prediction loss over a batch.

    positions: (N, f, J, 3) array; samples: per sequence, the list produced by
    :func:`sample_subsequences` (exactly one sample per k, in order). ``model``
    supplies ``sequence_representations``, ``encode`` and ``prediction_head``.
    """
    positions = np.asarray(positions, dtype=np.float64)
    if positions.ndim != 4 or positions.shape[3] != 3:
        raise DimensionMismatch("positions must be (N, f, J, 3)")
    n_seq, frames = positions.shape[:2]
    if frames < 2:
        raise InvalidLength("sparse prediction needs f >= 2")
    if len(samples) != n_seq:
        raise DimensionMismatch("need one sample list per sequence")
    for per_seq in samples:
        if [s.k for s in per_seq] != list(range(1, frames)):
            raise InvalidLength("each sequence needs one sample per k = 1..f-1")
        if any(s.indices[-1] > frames - 2 for s in per_seq):
            raise InvalidLength("sample indices must stay within 0..f-2")

    reps = model.sequence_representations(positions)
    flat_targets = positions.reshape(n_seq, frames, -1)
    rows = np.arange(n_seq)[:, None]
    total = None
    for k in range(1, frames):
        idx = np.array([per_seq[k - 1].indices for per_seq in samples], dtype=np.intp)
        gathered = ad.take_frames(reps, idx)
        states = model.encode(gathered)
        stacked = ad.reshape(states, (n_seq * k, states.data.shape[-1]))
        predicted = head_apply(model.prediction_head, stacked)
        target_idx = np.concatenate([idx[:, 1:], idx[:, -1:] + 1], axis=1)
        target = ad.Tensor(flat_targets[rows, target_idx].reshape(n_seq * k, -1))
        diff = ad.add(predicted, ad.scale(target, -1.0))
        term = ad.tensor_sum(ad.mul(diff, diff))
        total = term if total is None else ad.add(total, term)
    return ad.scale(total, 1.0 / n_seq)

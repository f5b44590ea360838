"""Recognition head: per-frame class distributions averaged over a sequence."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DimensionMismatch, InvalidLabel
from .heads import MlpHead, head_apply


@dataclass(frozen=True)
class SequencePrediction:
    """Per-frame distributions, their average, and the 1-based argmax label."""

    frame_probabilities: np.ndarray
    probabilities: np.ndarray
    label: int


def frame_distributions(head: MlpHead, states) -> ad.Tensor:
    """Softmax class distribution for each state: (..., D2) -> (..., C)."""
    return ad.masked_softmax(head_apply(head, states), None)


def sequence_probabilities(head: MlpHead, states) -> ad.Tensor:
    """Average the per-frame distributions over the steps axis.

    states: (batch, steps, D2) -> (batch, C). Probabilities are averaged
    after the softmax, so the result stays row-stochastic.
    """
    states = ad.as_tensor(states)
    if states.data.ndim != 3:
        raise DimensionMismatch("sequence_probabilities expects (batch, steps, D2)")
    return ad.tensor_mean(frame_distributions(head, states), axis=1)


def predict_sequence(head: MlpHead, states) -> SequencePrediction:
    """Classify one sequence of hidden states (steps, D2).

    Ties resolve to the lowest class index; labels are 1-based.
    """
    states = ad.as_tensor(states)
    if states.data.ndim != 2:
        raise DimensionMismatch("predict_sequence expects (steps, D2) states")
    frame_probs = frame_distributions(head, states).data
    avg = frame_probs.mean(axis=0)
    return SequencePrediction(
        frame_probabilities=frame_probs,
        probabilities=avg,
        label=int(np.argmax(avg)) + 1,
    )


def recognition_loss(probabilities, labels, store, l2_coeff: float) -> ad.Tensor:
    """Cross entropy of averaged distributions plus l2_coeff * ||Theta||^2.

    probabilities: (N, C) tensor of sequence-level distributions; labels:
    1-based ints; store: parameter registry summed into the penalty term.
    """
    probabilities = ad.as_tensor(probabilities)
    if probabilities.data.ndim != 2:
        raise DimensionMismatch("probabilities must be (N, C)")
    n_seq, n_classes = probabilities.data.shape
    labels = np.asarray(labels)
    if labels.shape != (n_seq,):
        raise DimensionMismatch("need exactly one label per row")
    if labels.size and (labels.min() < 1 or labels.max() > n_classes):
        raise InvalidLabel(f"labels must lie in 1..{n_classes}")
    one_hot = np.zeros((n_seq, n_classes))
    one_hot[np.arange(n_seq), labels - 1] = 1.0
    picked = ad.tensor_sum(ad.mul(ad.log_clipped(probabilities), ad.Tensor(one_hot)))
    entropy = ad.scale(picked, -1.0 / n_seq)
    return ad.add(entropy, ad.scale(store.l2_norm_sq(), l2_coeff))

"""Cumulative match characteristic metrics for re-identification."""

from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, InvalidConfig, InvalidLabel

SCORE_ROW_TOLERANCE = 1e-6


def validate_scores(scores: np.ndarray) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise DimensionMismatch("score matrix must be (probes, classes)")
    sums = scores.sum(axis=1)
    if sums.size and np.abs(sums - 1.0).max() > SCORE_ROW_TOLERANCE:
        raise InvalidConfig("score rows must each sum to 1")
    return scores


def cmc(scores: np.ndarray, labels) -> np.ndarray:
    """CMC curve in percent: curve[r-1] = share of probes ranked within r.

    The true class's rank is its position when classes are sorted by
    descending score; ties resolve toward the lowest class index. Labels are
    1-based; column j scores class j+1.
    """
    scores = validate_scores(scores)
    probes, classes = scores.shape
    labels = np.asarray(labels)
    if labels.shape != (probes,):
        raise DimensionMismatch("need one label per probe row")
    if probes and (labels.min() < 1 or labels.max() > classes):
        raise InvalidLabel(f"labels must lie in 1..{classes}")
    if probes == 0:
        raise DimensionMismatch("need at least one probe")
    order = np.argsort(-scores, axis=1, kind="stable")
    ranks = np.argmax(order == (labels - 1)[:, None], axis=1)
    hits = np.bincount(ranks, minlength=classes)
    return hits.cumsum() / probes * 100.0


def rank1(curve: np.ndarray) -> float:
    return float(curve[0])


def nauc(curve: np.ndarray) -> float:
    """Mean of the CMC curve over all ranks (percent)."""
    return float(np.mean(curve))


def write_report(path: Path, curve: np.ndarray, probes: int) -> Path:
    path = Path(path)
    lines = ["probes,classes,rank1,nauc"]
    lines.append(
        f"{probes},{curve.shape[0]},{repr(rank1(curve))},{repr(nauc(curve))}"
    )
    lines.append("rank,value")
    for r, value in enumerate(curve, start=1):
        lines.append(f"{r},{repr(float(value))}")
    path.write_text("\n".join(lines) + "\n")
    return path

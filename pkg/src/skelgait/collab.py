"""Cross-level collaborative relations and level fusion.

A higher-level node attends over every lower-level node (softmax of feature
inner products, no neighbor mask), pulls in a linearly mapped combination of
lower features as a residual update, and the updated part/body features are
broadcast back to their member joints before the weighted fusion.
"""

import numpy as np

from . import autodiff as ad
from .errors import DimensionMismatch, UncoveredJoint


def collab_relations(upper, lower) -> ad.Tensor:
    """(..., n_up, n_low) attention of upper nodes over all lower nodes."""
    upper = ad.as_tensor(upper)
    lower = ad.as_tensor(lower)
    if upper.data.shape[-1] != lower.data.shape[-1]:
        raise DimensionMismatch("upper/lower feature widths differ")
    scores = ad.matmul(upper, ad.transpose_last2(lower))
    return ad.masked_softmax(scores, None)


def collab_update(upper, lower, relations, weight) -> ad.Tensor:
    """Residual update: relations @ (lower @ weight.T) + upper."""
    upper = ad.as_tensor(upper)
    lower = ad.as_tensor(lower)
    relations = ad.as_tensor(relations)
    d1 = upper.data.shape[-1]
    if weight.data.shape != (d1, d1):
        raise DimensionMismatch(f"collab weight must be ({d1}, {d1})")
    mapped = ad.matmul(lower, ad.transpose_last2(weight))
    return ad.add(ad.matmul(relations, mapped), upper)


def broadcast_to_joints(features, joint_to_node: np.ndarray) -> ad.Tensor:
    """Copy each node's feature row to all of its member joints."""
    features = ad.as_tensor(features)
    idx = np.asarray(joint_to_node, dtype=np.intp)
    if (idx < 0).any():
        missing = int(np.nonzero(idx < 0)[0][0])
        raise UncoveredJoint(f"joint {missing} belongs to no node")
    if idx.size and idx.max() >= features.data.shape[-2]:
        raise DimensionMismatch("joint map points past the node axis")
    return ad.take(features, idx, axis=-2)


def fuse_levels(joint_feats, part_feats, body_feats, level_mix: float) -> ad.Tensor:
    """joint + level_mix * (part + body), all shaped (..., J, D1)."""
    joint_feats = ad.as_tensor(joint_feats)
    part_feats = ad.as_tensor(part_feats)
    body_feats = ad.as_tensor(body_feats)
    if not joint_feats.data.shape == part_feats.data.shape == body_feats.data.shape:
        raise DimensionMismatch("fusion inputs must share one shape")
    return ad.add(joint_feats, ad.scale(ad.add(part_feats, body_feats), level_mix))

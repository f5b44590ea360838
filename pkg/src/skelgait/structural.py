"""Multi-head structural relation learning within one graph level.

Each head scores ordered node pairs with a learned linear form over the
concatenated mapped features (LeakyReLU, slope 0.2), normalizes the scores
over each node's neighborhood (self included) with a masked softmax, and
aggregates neighbor features through an ELU. Head outputs are averaged.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DimensionMismatch
from .graphs import LevelGraph, neighbor_mask

LEAKY_SLOPE = 0.2


@dataclass
class RelationHeadParams:
    """One attention head: node map (D1, D) and pair scorer (2*D1,)."""

    node_weight: ad.Tensor
    relation_weight: ad.Tensor

    @property
    def feature_dim(self) -> int:
        return self.node_weight.data.shape[0]

    def validate(self) -> None:
        d1 = self.node_weight.data.shape[0]
        if self.node_weight.data.ndim != 2:
            raise DimensionMismatch("node_weight must be a (D1, D) matrix")
        if self.relation_weight.data.shape != (2 * d1,):
            raise DimensionMismatch("relation_weight must have length 2*D1")


def relation_logit(head: RelationHeadParams, v_i: np.ndarray, v_j: np.ndarray) -> float:
    """Raw pair score for one ordered node pair (diagnostic / oracle path)."""
    head.validate()
    wv = head.node_weight.data
    wr = head.relation_weight.data
    v_i = np.asarray(v_i, dtype=np.float64)
    v_j = np.asarray(v_j, dtype=np.float64)
    if v_i.shape != (wv.shape[1],) or v_j.shape != (wv.shape[1],):
        raise DimensionMismatch(
            f"node features must have shape ({wv.shape[1]},) to match node_weight"
        )
    d1 = wv.shape[0]
    pre = float(wr[:d1] @ (wv @ v_i) + wr[d1:] @ (wv @ v_j))
    return pre if pre > 0.0 else LEAKY_SLOPE * pre


def normalize_relations(logits, mask: np.ndarray) -> ad.Tensor:
    """Neighbor-restricted softmax of pair scores; rows sum to 1 on-support."""
    logits = ad.as_tensor(logits)
    if logits.data.shape[-1] != logits.data.shape[-2]:
        raise DimensionMismatch("relation logits must be square per frame")
    return ad.masked_softmax(logits, mask)


def aggregate_head(head: RelationHeadParams, adjacency, nodes) -> ad.Tensor:
    """ELU of adjacency-weighted mapped neighbor features."""
    head.validate()
    adjacency = ad.as_tensor(adjacency)
    nodes = ad.as_tensor(nodes)
    mapped = ad.matmul(nodes, ad.transpose_last2(head.node_weight))
    return ad.elu(ad.matmul(adjacency, mapped))


def head_scores(head: RelationHeadParams, nodes: ad.Tensor):
    """(pair logits (..., n, n), mapped nodes (..., n, D1)) for one head."""
    head.validate()
    d1 = head.feature_dim
    mapped = ad.matmul(nodes, ad.transpose_last2(head.node_weight))
    r_src = ad.reshape(ad.narrow(head.relation_weight, 0, d1), (d1, 1))
    r_dst = ad.reshape(ad.narrow(head.relation_weight, d1, d1), (d1, 1))
    s_src = ad.matmul(mapped, r_src)
    s_dst = ad.matmul(mapped, r_dst)
    logits = ad.leaky_relu(ad.add(s_src, ad.transpose_last2(s_dst)), LEAKY_SLOPE)
    return logits, mapped


def msrl_forward_batch(heads, nodes, mask: np.ndarray):
    """Multi-head structural pass over batched node features.

    nodes: (..., n, D) tensor/array; mask: (n, n) bool neighbor mask.
    Returns (head-averaged features (..., n, D1), per-head adjacency list).
    """
    if not heads:
        raise DimensionMismatch("need at least one relation head")
    nodes = ad.as_tensor(nodes)
    dims = {h.feature_dim for h in heads}
    if len(dims) != 1:
        raise DimensionMismatch("all heads of one level must share D1")
    acc = None
    adjacencies = []
    for head in heads:
        logits, mapped = head_scores(head, nodes)
        adjacency = ad.masked_softmax(logits, mask)
        out = ad.elu(ad.matmul(adjacency, mapped))
        acc = out if acc is None else ad.add(acc, out)
        adjacencies.append(adjacency)
    return ad.scale(acc, 1.0 / len(heads)), adjacencies


def msrl_forward(heads, graph: LevelGraph):
    """Single-frame structural pass over a built level graph."""
    mask = neighbor_mask(graph)
    n = graph.node_count
    feats, adjacencies = msrl_forward_batch(
        heads, graph.node_positions[None, :, :], mask
    )
    d1 = heads[0].feature_dim
    flat = ad.reshape(feats, (n, d1))
    return flat, [ad.reshape(a, (n, n)) for a in adjacencies]

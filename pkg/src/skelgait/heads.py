"""Two-layer MLP heads (ELU hidden) used for prediction and recognition."""

from dataclasses import dataclass

from . import autodiff as ad
from .errors import DimensionMismatch


@dataclass
class MlpHead:
    hidden_weight: ad.Tensor
    hidden_bias: ad.Tensor
    out_weight: ad.Tensor
    out_bias: ad.Tensor

    @property
    def in_dim(self) -> int:
        return self.hidden_weight.data.shape[1]

    @property
    def out_dim(self) -> int:
        return self.out_weight.data.shape[0]


def head_apply(head: MlpHead, x) -> ad.Tensor:
    """x (..., in_dim) -> (..., out_dim)."""
    x = ad.as_tensor(x)
    if x.data.shape[-1] != head.in_dim:
        raise DimensionMismatch(
            f"head expects {head.in_dim} input features, got {x.data.shape[-1]}"
        )
    hidden = ad.elu(ad.affine(x, head.hidden_weight, head.hidden_bias))
    return ad.affine(hidden, head.out_weight, head.out_bias)

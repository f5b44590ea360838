"""Stacked-LSTM dynamics encoder over per-frame skeleton representations."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import kernels
from .errors import DimensionMismatch


@dataclass
class LstmLayerParams:
    """Gate weights for one layer; 4H rows ordered input, forget, cell, output."""

    wx: ad.Tensor
    wh: ad.Tensor
    b: ad.Tensor

    @property
    def hidden_dim(self) -> int:
        return self.wh.data.shape[1]


def encode_sequence(layers, reps) -> ad.Tensor:
    """Hidden states of the top layer for reps (batch, steps, features).

    A 2D (steps, features) input is treated as a single sequence and returns
    (steps, hidden). Initial hidden/cell states are zero.
    """
    if not layers:
        raise DimensionMismatch("need at least one LSTM layer")
    x = ad.as_tensor(reps)
    single = x.data.ndim == 2
    if single:
        x = ad.reshape(x, (1, *x.data.shape))
    if x.data.ndim != 3:
        raise DimensionMismatch("reps must be (batch, steps, features)")
    for layer in layers:
        x = ad.lstm_layer(x, layer.wx, layer.wh, layer.b)
    if single:
        x = ad.reshape(x, x.data.shape[1:])
    return x


def gate_traces(layers, reps: np.ndarray) -> list:
    """Per-layer gate activations (diagnostics; bypasses the tape).

    Returns one dict per layer with arrays shaped (steps, batch, hidden) for
    keys in_gate, forget_gate, cell_cand, out_gate, cell, hidden.
    """
    x = np.asarray(reps, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    xt = np.ascontiguousarray(np.swapaxes(x, 0, 1))
    traces = []
    for layer in layers:
        hidden = layer.hidden_dim
        batch = xt.shape[1]
        h0 = np.zeros((batch, hidden))
        c0 = np.zeros((batch, hidden))
        h, c, gi, gf, gg, go, _ = kernels.ACTIVE.lstm_forward(
            xt, layer.wx.data, layer.wh.data, layer.b.data, h0, c0
        )
        traces.append(
            {
                "in_gate": gi,
                "forget_gate": gf,
                "cell_cand": gg,
                "out_gate": go,
                "cell": c,
                "hidden": h,
            }
        )
        xt = np.ascontiguousarray(h)
    return traces

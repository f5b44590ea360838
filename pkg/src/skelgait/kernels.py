"""Hot numeric kernels with numba-compiled and pure-numpy twins.

The package runs the same pipeline on either backend; the env flag
``SKELGAIT_BACKEND`` picks one at import time:

* ``auto`` (default): numba when importable, numpy otherwise
* ``numba``: require the compiled kernels (error when numba is missing)
* ``numpy``: force the vectorized fallback

Only the truly hot inner loops live here: the LSTM recurrence (sequential in
time, so numba's fused loops beat allocating numpy temporaries per step), the
row-masked softmax, and the Adam update. Everything else in the package is
ordinary vectorized numpy.

Array conventions: float64 throughout; LSTM activations are laid out
(steps, batch, hidden); gate blocks along the 4H axis are ordered
input, forget, cell, output.
"""

import os
from typing import Callable, NamedTuple

import numpy as np

from .errors import InvalidConfig

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    njit = None
    HAVE_NUMBA = False

ENV_FLAG = "SKELGAIT_BACKEND"


# ---------------------------------------------------------------------------
# numpy twins
# ---------------------------------------------------------------------------


def _sigmoid_np(z):
    # evaluate exp only on the sign-safe branch so large |z| cannot overflow
    out = np.empty_like(z)
    pos = z >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _lstm_forward_numpy(x, wx, wh, b, h0, c0):
    steps, batch, _ = x.shape
    hidden = wh.shape[1]
    wxt = np.ascontiguousarray(wx.T)
    wht = np.ascontiguousarray(wh.T)
    h = np.empty((steps, batch, hidden))
    c = np.empty((steps, batch, hidden))
    gi = np.empty((steps, batch, hidden))
    gf = np.empty((steps, batch, hidden))
    gg = np.empty((steps, batch, hidden))
    go = np.empty((steps, batch, hidden))
    tc = np.empty((steps, batch, hidden))
    h_prev = h0
    c_prev = c0
    for t in range(steps):
        z = x[t] @ wxt + h_prev @ wht + b
        gi[t] = _sigmoid_np(z[:, :hidden])
        gf[t] = _sigmoid_np(z[:, hidden : 2 * hidden])
        gg[t] = np.tanh(z[:, 2 * hidden : 3 * hidden])
        go[t] = _sigmoid_np(z[:, 3 * hidden :])
        c[t] = gf[t] * c_prev + gi[t] * gg[t]
        tc[t] = np.tanh(c[t])
        h[t] = go[t] * tc[t]
        h_prev = h[t]
        c_prev = c[t]
    return h, c, gi, gf, gg, go, tc


def _lstm_backward_numpy(dh_out, x, h, c, gi, gf, gg, go, tc, wx, wh, h0, c0):
    steps, batch, nin = x.shape
    hidden = wh.shape[1]
    dz = np.empty((steps, batch, 4 * hidden))
    dh_next = np.zeros((batch, hidden))
    dc_next = np.zeros((batch, hidden))
    for t in range(steps - 1, -1, -1):
        dh = dh_out[t] + dh_next
        do = dh * tc[t]
        dc = dc_next + dh * go[t] * (1.0 - tc[t] * tc[t])
        c_prev = c[t - 1] if t > 0 else c0
        di = dc * gg[t]
        dg = dc * gi[t]
        df = dc * c_prev
        dc_next = dc * gf[t]
        dz[t, :, :hidden] = di * gi[t] * (1.0 - gi[t])
        dz[t, :, hidden : 2 * hidden] = df * gf[t] * (1.0 - gf[t])
        dz[t, :, 2 * hidden : 3 * hidden] = dg * (1.0 - gg[t] * gg[t])
        dz[t, :, 3 * hidden :] = do * go[t] * (1.0 - go[t])
        dh_next = dz[t] @ wh
    flat_dz = np.ascontiguousarray(dz.reshape(steps * batch, 4 * hidden))
    dx = (flat_dz @ wx).reshape(steps, batch, nin)
    h_prev_all = np.concatenate([h0[None], h[:-1]], axis=0)
    dwx = np.ascontiguousarray(flat_dz.T) @ np.ascontiguousarray(x.reshape(steps * batch, nin))
    dwh = np.ascontiguousarray(flat_dz.T) @ np.ascontiguousarray(
        h_prev_all.reshape(steps * batch, hidden)
    )
    db = flat_dz.sum(axis=0)
    return dx, dwx, dwh, db, dh_next, dc_next


def _masked_softmax_numpy(values, mask):
    # values (rows, n), mask (rows, n) bool with >= 1 True per row (callers validate)
    neg = np.where(mask, values, -np.inf)
    top = neg.max(axis=1, keepdims=True)
    e = np.exp(neg - top)
    return e / e.sum(axis=1, keepdims=True)


def _masked_softmax_grad_numpy(probs, grad_out):
    inner = (probs * grad_out).sum(axis=1, keepdims=True)
    return probs * (grad_out - inner)


def _adam_update_numpy(param, grad, m, v, step, lr, beta1, beta2, eps):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    bc1 = 1.0 - beta1**step
    bc2 = 1.0 - beta2**step
    param -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


# ---------------------------------------------------------------------------
# numba twins (loop-fused; compiled lazily, cached on disk)
# ---------------------------------------------------------------------------


def _lstm_forward_loops(x, wx, wh, b, h0, c0):
    steps, batch, _ = x.shape
    hidden = wh.shape[1]
    wxt = np.ascontiguousarray(wx.T)
    wht = np.ascontiguousarray(wh.T)
    h = np.empty((steps, batch, hidden))
    c = np.empty((steps, batch, hidden))
    gi = np.empty((steps, batch, hidden))
    gf = np.empty((steps, batch, hidden))
    gg = np.empty((steps, batch, hidden))
    go = np.empty((steps, batch, hidden))
    tc = np.empty((steps, batch, hidden))
    h_prev = h0.copy()
    c_prev = c0.copy()
    for t in range(steps):
        z = np.dot(x[t], wxt) + np.dot(h_prev, wht)
        for bi in range(batch):
            for j in range(hidden):
                zi = z[bi, j] + b[j]
                zf = z[bi, hidden + j] + b[hidden + j]
                zg = z[bi, 2 * hidden + j] + b[2 * hidden + j]
                zo = z[bi, 3 * hidden + j] + b[3 * hidden + j]
                if zi >= 0.0:
                    vi = 1.0 / (1.0 + np.exp(-zi))
                else:
                    ei = np.exp(zi)
                    vi = ei / (1.0 + ei)
                if zf >= 0.0:
                    vf = 1.0 / (1.0 + np.exp(-zf))
                else:
                    ef = np.exp(zf)
                    vf = ef / (1.0 + ef)
                if zo >= 0.0:
                    vo = 1.0 / (1.0 + np.exp(-zo))
                else:
                    eo = np.exp(zo)
                    vo = eo / (1.0 + eo)
                vg = np.tanh(zg)
                cc = vf * c_prev[bi, j] + vi * vg
                tcc = np.tanh(cc)
                gi[t, bi, j] = vi
                gf[t, bi, j] = vf
                gg[t, bi, j] = vg
                go[t, bi, j] = vo
                c[t, bi, j] = cc
                tc[t, bi, j] = tcc
                h[t, bi, j] = vo * tcc
        h_prev = h[t]
        c_prev = c[t]
    return h, c, gi, gf, gg, go, tc


def _lstm_backward_loops(dh_out, x, h, c, gi, gf, gg, go, tc, wx, wh, h0, c0):
    steps, batch, nin = x.shape
    hidden = wh.shape[1]
    dz = np.empty((steps, batch, 4 * hidden))
    dh_next = np.zeros((batch, hidden))
    dc_next = np.zeros((batch, hidden))
    for t in range(steps - 1, -1, -1):
        for bi in range(batch):
            for j in range(hidden):
                dh = dh_out[t, bi, j] + dh_next[bi, j]
                tcc = tc[t, bi, j]
                do = dh * tcc
                dc = dc_next[bi, j] + dh * go[t, bi, j] * (1.0 - tcc * tcc)
                if t > 0:
                    cp = c[t - 1, bi, j]
                else:
                    cp = c0[bi, j]
                di = dc * gg[t, bi, j]
                dg = dc * gi[t, bi, j]
                df = dc * cp
                dc_next[bi, j] = dc * gf[t, bi, j]
                vi = gi[t, bi, j]
                vf = gf[t, bi, j]
                vg = gg[t, bi, j]
                vo = go[t, bi, j]
                dz[t, bi, j] = di * vi * (1.0 - vi)
                dz[t, bi, hidden + j] = df * vf * (1.0 - vf)
                dz[t, bi, 2 * hidden + j] = dg * (1.0 - vg * vg)
                dz[t, bi, 3 * hidden + j] = do * vo * (1.0 - vo)
        dh_next = np.dot(dz[t], wh)
    flat_dz = np.ascontiguousarray(dz.reshape(steps * batch, 4 * hidden))
    dx = np.dot(flat_dz, wx).reshape(steps, batch, nin)
    h_prev_all = np.empty((steps, batch, hidden))
    h_prev_all[0] = h0
    for t in range(1, steps):
        h_prev_all[t] = h[t - 1]
    dzt = np.ascontiguousarray(flat_dz.T)
    dwx = np.dot(dzt, np.ascontiguousarray(x.reshape(steps * batch, nin)))
    dwh = np.dot(dzt, np.ascontiguousarray(h_prev_all.reshape(steps * batch, hidden)))
    db = np.zeros(4 * hidden)
    for r in range(steps * batch):
        for j in range(4 * hidden):
            db[j] += flat_dz[r, j]
    return dx, dwx, dwh, db, dh_next, dc_next


def _masked_softmax_loops(values, mask):
    rows, n = values.shape
    out = np.zeros((rows, n))
    for r in range(rows):
        top = -np.inf
        for j in range(n):
            if mask[r, j] and values[r, j] > top:
                top = values[r, j]
        total = 0.0
        for j in range(n):
            if mask[r, j]:
                e = np.exp(values[r, j] - top)
                out[r, j] = e
                total += e
        for j in range(n):
            if mask[r, j]:
                out[r, j] /= total
    return out


def _masked_softmax_grad_loops(probs, grad_out):
    rows, n = probs.shape
    out = np.empty((rows, n))
    for r in range(rows):
        inner = 0.0
        for j in range(n):
            inner += probs[r, j] * grad_out[r, j]
        for j in range(n):
            out[r, j] = probs[r, j] * (grad_out[r, j] - inner)
    return out


def _adam_update_loops(param, grad, m, v, step, lr, beta1, beta2, eps):
    bc1 = 1.0 - beta1**step
    bc2 = 1.0 - beta2**step
    for j in range(param.shape[0]):
        mj = beta1 * m[j] + (1.0 - beta1) * grad[j]
        vj = beta2 * v[j] + (1.0 - beta2) * grad[j] * grad[j]
        m[j] = mj
        v[j] = vj
        param[j] -= lr * (mj / bc1) / (np.sqrt(vj / bc2) + eps)


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------


class KernelSet(NamedTuple):
    name: str
    lstm_forward: Callable
    lstm_backward: Callable
    masked_softmax: Callable
    masked_softmax_grad: Callable
    adam_update: Callable


_NUMBA_CACHE: dict = {}


def make_kernels(backend: str) -> KernelSet:
    """Build the kernel table for ``backend`` ("numpy" or "numba")."""
    if backend == "numpy":
        return KernelSet(
            "numpy",
            _lstm_forward_numpy,
            _lstm_backward_numpy,
            _masked_softmax_numpy,
            _masked_softmax_grad_numpy,
            _adam_update_numpy,
        )
    if backend == "numba":
        if not HAVE_NUMBA:
            raise InvalidConfig("numba backend requested but numba is not importable")
        if not _NUMBA_CACHE:
            jit = njit(cache=True)
            _NUMBA_CACHE.update(
                lstm_forward=jit(_lstm_forward_loops),
                lstm_backward=jit(_lstm_backward_loops),
                masked_softmax=jit(_masked_softmax_loops),
                masked_softmax_grad=jit(_masked_softmax_grad_loops),
                adam_update=jit(_adam_update_loops),
            )
        return KernelSet(
            "numba",
            _NUMBA_CACHE["lstm_forward"],
            _NUMBA_CACHE["lstm_backward"],
            _NUMBA_CACHE["masked_softmax"],
            _NUMBA_CACHE["masked_softmax_grad"],
            _NUMBA_CACHE["adam_update"],
        )
    raise InvalidConfig(f"unknown kernel backend {backend!r}")


def _resolve_backend() -> str:
    requested = os.environ.get(ENV_FLAG, "auto").strip().lower()
    if requested not in ("auto", "numba", "numpy"):
        raise InvalidConfig(
            f"{ENV_FLAG} must be auto, numba, or numpy (got {requested!r})"
        )
    if requested == "auto":
        return "numba" if HAVE_NUMBA else "numpy"
    return requested


ACTIVE = make_kernels(_resolve_backend())


def active_backend() -> str:
    return ACTIVE.name

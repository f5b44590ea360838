"""Parameter registry, gradient plumbing, Adam, and gradient verification."""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import kernels
from .errors import InvalidConfig

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class ParameterStore:
    """Ordered registry of named trainable tensors with zeroed grad slots."""

    def __init__(self):
        self._entries: dict[str, ad.Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> ad.Tensor:
        if name in self._entries:
            raise InvalidConfig(f"parameter {name!r} registered twice")
        data = np.ascontiguousarray(value, dtype=np.float64)
        tensor = ad.Tensor(data, requires_grad=True)
        tensor.grad = np.zeros_like(data)
        self._entries[name] = tensor
        return tensor

    def __getitem__(self, name: str) -> ad.Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self):
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def zero_grads(self) -> None:
        for tensor in self._entries.values():
            tensor.grad = np.zeros_like(tensor.data)

    def l2_norm_sq(self) -> ad.Tensor:
        """Differentiable sum of squares over every registered entry."""
        if not self._entries:
            return ad.Tensor(np.zeros(()))
        return ad.total_sum(
            ad.tensor_sum(ad.mul(p, p)) for p in self._entries.values()
        )


def backward(loss: ad.Tensor, store: ParameterStore) -> None:
    """Zero all grad slots, then accumulate d(loss)/d(param) into them.

    Parameters that do not participate in the loss keep exactly-zero grads.
    """
    store.zero_grads()
    loss.backward()


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    @classmethod
    def for_store(cls, store: ParameterStore, lr: float) -> "AdamState":
        state = cls(lr=lr)
        for name, tensor in store.items():
            state.m[name] = np.zeros(tensor.data.size)
            state.v[name] = np.zeros(tensor.data.size)
        return state


def adam_step(state: AdamState, store: ParameterStore) -> None:
    """One bias-corrected Adam update over every registered parameter."""
    state.step += 1
    update = kernels.ACTIVE.adam_update
    for name, tensor in store.items():
        grad = tensor.grad
        if grad is None:
            grad = np.zeros_like(tensor.data)
        update(
            tensor.data.reshape(-1),
            np.ascontiguousarray(grad, dtype=np.float64).reshape(-1),
            state.m[name],
            state.v[name],
            state.step,
            state.lr,
            ADAM_BETA1,
            ADAM_BETA2,
            ADAM_EPS,
        )


# ---------------------------------------------------------------------------
# finite-difference gradient verification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FdEntryReport:
    name: str
    checked: int
    flagged: int
    max_rel_err: float
    passed: bool


@dataclass(frozen=True)
class FdReport:
    entries: tuple
    step: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def worst(self) -> FdEntryReport:
        return max(self.entries, key=lambda e: e.max_rel_err)

    def summary(self) -> str:
        lines = [
            f"{e.name}: max_rel_err={e.max_rel_err:.3e} "
            f"checked={e.checked} flagged={e.flagged} "
            f"{'ok' if e.passed else 'FAIL'}"
            for e in self.entries
        ]
        return "\n".join(lines)


def finite_difference_check(
    loss_fn,
    store: ParameterStore,
    step: float = 1e-5,
    tolerance: float = 1e-4,
    rel_floor: float = 1e-2,
    names=None,
) -> FdReport:
    """Compare analytic gradients of ``loss_fn()`` against central differences.

    ``loss_fn`` must be deterministic (fix any sampling outside it). Elements
    whose mismatch changes materially when the probe step is halved sit next
    to a nondifferentiability (activation kink) and are counted as flagged
    rather than failed. Relative errors use max(|analytic|, |numeric|,
    rel_floor) as denominator so near-zero gradients are judged absolutely.
    """
    loss = loss_fn()
    backward(loss, store)
    analytic = {name: tensor.grad.copy() for name, tensor in store.items()}

    def evaluate() -> float:
        return float(loss_fn().data)

    def probe(data, flat_index, h) -> float:
        original = data.flat[flat_index]
        data.flat[flat_index] = original + h
        upper = evaluate()
        data.flat[flat_index] = original - h
        lower = evaluate()
        data.flat[flat_index] = original
        return (upper - lower) / (2.0 * h)

    selected = names if names is not None else store.names()
    entries = []
    for name in selected:
        tensor = store[name]
        grads = analytic[name]
        worst = 0.0
        flagged = 0
        ok = True
        for flat_index in range(tensor.data.size):
            a = grads.flat[flat_index]
            fd = probe(tensor.data, flat_index, step)
            rel = abs(a - fd) / max(abs(a), abs(fd), rel_floor)
            if rel > tolerance:
                fd_half = probe(tensor.data, flat_index, step / 2.0)
                drift = abs(fd_half - fd) / max(abs(fd), abs(fd_half), rel_floor)
                if drift > tolerance:
                    flagged += 1
                    continue
                ok = False
            worst = max(worst, rel)
        entries.append(
            FdEntryReport(
                name=name,
                checked=tensor.data.size,
                flagged=flagged,
                max_rel_err=worst,
                passed=ok,
            )
        )
    return FdReport(entries=tuple(entries), step=step, tolerance=tolerance)

import numpy as np
import pytest

from skelgait.checkpoint import (
    FORMAT_VERSION,
    MAGIC,
    load_checkpoint,
    save_checkpoint,
)
from skelgait.errors import VersionMismatch
from skelgait.training import AdamState, ParameterStore


def sample_store():
    rng = np.random.default_rng(0)
    store = ParameterStore()
    store.add("layer.weight", rng.normal(size=(3, 4)))
    store.add("layer.bias", rng.normal(size=3))
    store.add("scalarish", rng.normal(size=(1,)))
    return store


def test_roundtrip_restores_entries_and_metadata(tmp_path):
    store = sample_store()
    meta = {"stage": "pretrain", "seed": "7", "epochs_done": "3"}
    path = save_checkpoint(tmp_path / "model.ckpt", store, meta)
    loaded = load_checkpoint(path)
    assert loaded.metadata == meta
    assert list(loaded.entries) == store.names()
    for name, data in loaded.entries.items():
        np.testing.assert_array_equal(data, store[name].data)
        assert data.shape == store[name].data.shape
    assert loaded.adam_step is None


def test_roundtrip_with_optimizer_state(tmp_path):
    store = sample_store()
    state = AdamState.for_store(store, lr=0.01)
    rng = np.random.default_rng(1)
    for name in store.names():
        state.m[name][...] = rng.normal(size=state.m[name].shape)
        state.v[name][...] = rng.random(size=state.v[name].shape)
    state.step = 42
    path = save_checkpoint(tmp_path / "model.ckpt", store, {}, adam=state)
    loaded = load_checkpoint(path)
    assert loaded.adam_step == 42
    for name in store.names():
        np.testing.assert_array_equal(loaded.adam_m[name], state.m[name])
        np.testing.assert_array_equal(loaded.adam_v[name], state.v[name])
    restored = loaded.restore_adam(lr=0.005)
    assert restored.lr == 0.005 and restored.step == 42
    np.testing.assert_array_equal(restored.m["layer.bias"], state.m["layer.bias"])
    # restored moments are private copies
    restored.m["layer.bias"][0] += 1.0
    assert restored.m["layer.bias"][0] != loaded.adam_m["layer.bias"][0]


def test_save_load_save_is_byte_identical(tmp_path):
    store = sample_store()
    state = AdamState.for_store(store, lr=0.01)
    state.step = 5
    first = save_checkpoint(tmp_path / "a.ckpt", store, {"k": "v"}, adam=state)
    loaded = load_checkpoint(first)
    clone = ParameterStore()
    for name, data in loaded.entries.items():
        clone.add(name, data)
    second = save_checkpoint(
        tmp_path / "b.ckpt", clone, loaded.metadata, adam=loaded.restore_adam(0.01)
    )
    assert first.read_bytes() == second.read_bytes()


def test_wrong_magic_rejected(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(VersionMismatch):
        load_checkpoint(path)


def test_future_version_rejected(tmp_path):
    store = sample_store()
    path = save_checkpoint(tmp_path / "m.ckpt", store, {})
    blob = bytearray(path.read_bytes())
    blob[4:8] = (FORMAT_VERSION + 1).to_bytes(4, "little")
    path.write_bytes(bytes(blob))
    with pytest.raises(VersionMismatch):
        load_checkpoint(path)


def test_truncated_file_rejected(tmp_path):
    store = sample_store()
    path = save_checkpoint(tmp_path / "m.ckpt", store, {"stage": "x"})
    blob = path.read_bytes()
    for cut in (3, 10, len(blob) // 2, len(blob) - 5):
        short = tmp_path / f"cut{cut}.ckpt"
        short.write_bytes(blob[:cut])
        with pytest.raises(VersionMismatch):
            load_checkpoint(short)


def test_format_constants():
    assert MAGIC == b"SKGT"
    assert FORMAT_VERSION == 1


def test_metadata_values_are_stringified(tmp_path):
    store = sample_store()
    path = save_checkpoint(tmp_path / "m.ckpt", store, {"epochs": 7, "lr": 0.01})
    loaded = load_checkpoint(path)
    assert loaded.metadata == {"epochs": "7", "lr": "0.01"}

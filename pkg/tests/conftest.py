import os

# Pin BLAS/OpenMP pools before numpy loads so in-process bitwise
# reproducibility checks are not at the mercy of library threading.
for _var in (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
    "NUMEXPR_NUM_THREADS",
):
    os.environ.setdefault(_var, "1")

import numpy as np
import pytest

from skelgait.config import RunConfig, override
from skelgait.model import ModelConfig, RelationNetwork
from skelgait.skeletons import SynthConfig, generate_synthetic_gait

# Small six-node recipe that overfits in well under a second of training;
# the zero l2_coeff matters (weight decay on a zero-initialized class head
# erodes the backbone before any class signal arrives).
TOY_RUN = dict(
    layout="toy6",
    identities=3,
    train_per_identity=5,
    test_per_identity=2,
    raw_frames=14,
    trim=2,
    frames=4,
    noise=0.003,
    scale_spread=0.3,
    feature_dim=4,
    heads=2,
    hidden_dim=8,
    pred_hidden=16,
    rec_hidden=16,
    batch_size=16,
    lr=0.01,
    l2_coeff=0.0,
    seed=2,
    pretrain_epochs=4,
    finetune_epochs=150,
    patience=3,
)


def toy_run_config(**overrides):
    return override(RunConfig(), **(TOY_RUN | overrides))


def tiny_model(classes=None, seed=5, scrambled=False, **config_fields):
    """Six-node network small enough for finite-difference sweeps.

    scrambled=True replaces every parameter with random values so zero
    initializations do not hide gradient paths.
    """
    fields = dict(
        layout="toy6",
        feature_dim=4,
        heads=2,
        hidden_dim=8,
        pred_hidden=8,
        rec_hidden=8,
    )
    fields.update(config_fields)
    model = RelationNetwork(ModelConfig(classes=classes, **fields), seed)
    if scrambled:
        rng = np.random.default_rng(seed + 1000)
        for _, tensor in model.store.items():
            tensor.data[...] = rng.normal(0.0, 0.35, size=tensor.data.shape)
    return model


@pytest.fixture
def toy_config():
    return toy_run_config()


@pytest.fixture(scope="session")
def toy_split():
    config = SynthConfig(
        layout="toy6",
        identities=3,
        train_per_identity=5,
        test_per_identity=2,
        frames_per_sequence=14,
        noise=0.003,
        scale_spread=0.3,
    )
    return generate_synthetic_gait(config, seed=2)


@pytest.fixture(scope="session")
def toy_manifest(tmp_path_factory, toy_split):
    from skelgait.skeletons import save_dataset

    root = tmp_path_factory.mktemp("toy_data")
    return save_dataset(toy_split, root)

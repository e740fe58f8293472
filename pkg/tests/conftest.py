import time

import numpy as np
import pytest
import torch

from tipose import motions, sbp, training
from tipose.kinematics import default_skeleton
from tipose.model import ModelConfig, TipModel, save_checkpoint

TOY_EPOCHS = 300
STAND_EPOCHS = 120


@pytest.fixture(scope="session")
def skeleton():
    return default_skeleton()


@pytest.fixture(scope="session")
def walk_clip():
    sm = motions.walking(200)
    return sm, training.prepare_sequence(sm.motion)


@pytest.fixture(scope="session")
def walk_model(walk_clip):
    """Tiny model overfit on one 200-frame walk (batch 8)."""
    _, seq = walk_clip
    torch.manual_seed(0)
    model = TipModel(ModelConfig.tiny())
    t0 = time.perf_counter()
    result = training.train(model, training.WindowDataset([seq]), TOY_EPOCHS, batch_size=8, lr=1e-3, seed=0)
    return model, result, time.perf_counter() - t0


@pytest.fixture(scope="session")
def stand_clip():
    motion = motions.standing(200)
    return motion, training.prepare_sequence(motion)


@pytest.fixture(scope="session")
def stand_model(stand_clip):
    _, seq = stand_clip
    torch.manual_seed(1)
    model = TipModel(ModelConfig.tiny())
    training.train(model, training.WindowDataset([seq]), STAND_EPOCHS, batch_size=8, lr=1e-3, seed=1)
    return model


@pytest.fixture(scope="session")
def checkpoints(tmp_path_factory, walk_model, stand_model):
    d = tmp_path_factory.mktemp("ckpt")
    save_checkpoint(d / "walk.npz", walk_model[0])
    save_checkpoint(d / "stand.npz", stand_model)
    return {"walk": d / "walk.npz", "stand": d / "stand.npz"}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def standing_contacts(skeleton, n=3):
    return sbp.contact_vectors(*sbp.label_motion(skeleton, motions.standing(n)))[0]

import numpy as np
import pytest

from amde.data import generate_synthetic
from amde.encoder import EncoderConfig, LocalBranch
from amde.engine import TrainConfig


def tiny_encoder(branch=LocalBranch.LSTM, **changes):
    fields = dict(input_shape=(1, 16, 8), backbone_channels=[4, 6, 8],
                  feature_channels=8, map_height=2, map_width=1,
                  reduced_channels=4, embed_dim=6, local_branch=branch)
    fields.update(changes)
    return EncoderConfig(**fields)


def tiny_train_config(**changes):
    fields = dict(
        encoder=tiny_encoder(),
        data={'num_ids': 6, 'imgs_per_id': 8, 'noise_sigma': 0.05,
              'seed': 3},
        pk={'P': 3, 'K': 2},
        epochs=2,
        steps_per_epoch=3,
        learning_rate=1e-2,
        progress=False,
        occlusion_eval_s=[0.0, 0.5],
    )
    fields.update(changes)
    return TrainConfig.unmarshal({
        key: value.to_dict() if hasattr(value, 'to_dict') else value
        for key, value in fields.items()
    })


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def encoder_config():
    return tiny_encoder(num_classes=3)


@pytest.fixture
def train_config():
    return tiny_train_config()


@pytest.fixture
def tiny_dataset():
    return generate_synthetic(6, 8, 0.05, 3, shape=(1, 16, 8))

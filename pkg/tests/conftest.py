import numpy as np
import pytest

from vlnav import graphworld as gw
from vlnav.model import NavModel

SPLITS = (0.5, 0.1, 0.2, 0.2)


@pytest.fixture(scope="session")
def tiny_dataset():
    return gw.make_dataset([7, 8], 12, SPLITS, d_v=8)


@pytest.fixture()
def tiny_model():
    return NavModel(np.random.default_rng(0), d_v=8, d_h=8, vocab_size=64)


def make_model(seed=0, d_v=8, d_h=8, **kw):
    return NavModel(np.random.default_rng(seed), d_v=d_v, d_h=d_h,
                    vocab_size=64, **kw)

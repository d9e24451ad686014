from pathlib import Path

import numpy as np
import pytest

from src import config
from src.model import ModelConfig

PRESETS_DIR = Path(__file__).resolve().parent.parent / "presets"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run tests that train to convergence or time throughput")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def presets_dir(monkeypatch, tmp_path):
    monkeypatch.setattr(config, "LAB_PRESETS_DIR", str(PRESETS_DIR))
    monkeypatch.setattr(config, "LAB_OUT_DIR", str(tmp_path / "runs"))
    return PRESETS_DIR


@pytest.fixture
def micro_config():
    """Factory for the d=8, V=11 gradient-oracle configs."""
    def make(**overrides) -> ModelConfig:
        values = dict(d_model=8, n_heads=2, d_ff=16, vocab_size=11, enc_layers=4, dec_layers=4,
                      enc_blocks=2, dec_blocks=2, strategy="cycle", ln_placement="post", admin=False,
                      tie_embeddings=True, dropout=0.0, max_len=16)
        values.update(overrides)
        return ModelConfig(**values)
    return make


@pytest.fixture
def token_batch():
    """Source/target ids for a micro model (V=11): padded rows, BOS-framed targets."""
    src = np.array([[3, 4, 5, 6, 2], [7, 8, 2, 0, 0]], dtype=np.int64)
    tgt_in = np.array([[1, 3, 4, 5, 6], [1, 7, 8, 0, 0]], dtype=np.int64)
    tgt_out = np.array([[3, 4, 5, 6, 2], [7, 8, 2, 0, 0]], dtype=np.int64)
    return src, tgt_in, tgt_out

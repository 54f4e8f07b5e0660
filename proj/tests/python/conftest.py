import os
import pathlib

import pytest


@pytest.fixture(scope="session")
def cli():
    path = os.environ.get("SUPERMASK_CLI")
    if not path or not pathlib.Path(path).exists():
        pytest.skip("SUPERMASK_CLI not set")
    return path


DESK = """\
arch = mlp
dataset = synth
mlp_hidden = 16, 16
synth_n = 200
synth_test_n = 40
synth_dim = 8
epochs = 3
batch_size = 32
"""


@pytest.fixture
def desk_config(tmp_path):
    p = tmp_path / "desk.cfg"
    p.write_text(DESK)
    return p

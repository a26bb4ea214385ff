import numpy as np
import pytest

from iic.midi import NoteEvent
from iic.midi import NoteList
from iic.tokenizer import tokenize
from iic.critic import train


SCALE = (60, 62, 64, 65, 67, 69, 71, 72)


def make_piece(seed, count=40, iois=(0.2, 0.2, 0.4), scale=SCALE):
    """
    A monophonic line over `scale` with onsets on the 0.02 s grid.
    """
    rng = np.random.default_rng(seed)
    notes = []
    onset = 0.0
    for _ in range(count):
        notes.append(NoteEvent(round(onset, 6), int(rng.choice(scale)),
                               int(rng.integers(40, 100)), 0.18))
        onset += float(rng.choice(iois))
    return NoteList(notes)


def make_blocks(seed, blocks=6, block_length=4.0, sparse_ioi=1.0, dense_ioi=0.125):
    """
    Alternating sparse and dense blocks of random pitches, sparse first.
    """
    rng = np.random.default_rng(seed)
    notes = []
    t = 0.0
    for b in range(blocks):
        ioi = sparse_ioi if b % 2 == 0 else dense_ioi
        end = t + block_length
        while t < end - 1e-9:
            notes.append(NoteEvent(round(t, 6), int(rng.integers(48, 84)), 64, 0.1))
            t += ioi
    return NoteList(notes)


@pytest.fixture(scope="session")
def pieces():
    return [make_piece(seed) for seed in range(4)]


@pytest.fixture(scope="session")
def corpus(pieces):
    return [tokenize(p) for p in pieces]


@pytest.fixture(scope="session")
def model(corpus):
    return train(corpus, max_order=3)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run the slow search trend tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long running search trend test")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)

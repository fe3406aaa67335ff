import numpy as np
import pytest

from spatialsoundqa import qa
from spatialsoundqa.corpus import synth_corpus
from spatialsoundqa.presets import load_presets, room_variants


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    return synth_corpus(22, 5, tmp_path_factory.mktemp("corpus"))


@pytest.fixture(scope="session")
def rooms():
    return room_variants(load_presets(), per_category=2, seed=0)


@pytest.fixture(scope="session")
def manifest(corpus, rooms):
    return qa.build_dataset(corpus, rooms, n=3000, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

import numpy as np
import pytest

from lsfanim.corpus import Corpus, CorpusConfig, synth_corpus


@pytest.fixture(scope="session")
def tiny_corpus() -> Corpus:
    """Four subjects, two sentences per cell; small enough for fast training."""
    cfg = CorpusConfig(
        n_subjects=4,
        sentences_per_cell=1,
        neutral_sentences=1,
        t_min=25,
        t_max=32,
        split_ratios=(0.5, 0.25, 0.25),
    )
    return synth_corpus(seed=11, cfg=cfg)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(1234))

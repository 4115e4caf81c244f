import numpy as np
import pytest

from framemark import (EmbedParams, build_ldpc, codeword_templates,
                       corpus_frames, generate_templates)

CODE_SEED = 7
TEMPLATE_SEED = 3


@pytest.fixture(scope="session")
def code7():
    return build_ldpc(CODE_SEED)


@pytest.fixture(scope="session")
def tpl16(code7):
    return codeword_templates(code7, 16, seed=TEMPLATE_SEED, min_distance=16)


@pytest.fixture(scope="session")
def raw_tpl16():
    return generate_templates(16, 48, seed=1, min_distance=16)


@pytest.fixture(scope="session")
def corpus8():
    return corpus_frames(8, 512, seed=0)


@pytest.fixture(scope="session")
def embed_params():
    return EmbedParams(pattern_seed=9)

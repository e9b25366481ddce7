import os
import sys

import pytest

PROJECT_ROOT = os.path.dirname(os.path.dirname(__file__))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from db.connection import reset_db_cache


@pytest.fixture(autouse=True)
def reset_opened_databases():
    reset_db_cache()
    yield
    reset_db_cache()


@pytest.fixture(scope="session")
def synth_corpus():
    from synthgen.corpus import SynthConfig, gen_synthetic_corpus

    return gen_synthetic_corpus(SynthConfig(seed=11, n_studies=40, embed_dim_image=16, embed_dim_text=16))


@pytest.fixture(scope="session")
def synth_db(synth_corpus):
    from db.operations import build_database

    return build_database(
        synth_corpus.paragraphs,
        synth_corpus.sentence_embeddings,
        synth_corpus.image_embeddings,
        synth_corpus.labels,
    )


@pytest.fixture(scope="session")
def hundred_study_db():
    from db.operations import build_database
    from synthgen.corpus import SynthConfig, gen_synthetic_corpus

    corpus = gen_synthetic_corpus(SynthConfig(seed=2, n_studies=100, embed_dim_image=16, embed_dim_text=16))
    return build_database(corpus.paragraphs, corpus.sentence_embeddings, corpus.image_embeddings, corpus.labels)

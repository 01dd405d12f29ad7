"""Shared sampled fixtures.

Sampling the corpus is the expensive part of most tests, so the grids
are built once per session and shared read-only.
"""

import numpy as np
import pytest

import gnlab.funcspace as fs
import gnlab.gn as gn


@pytest.fixture(scope="session")
def bump_4097():
    return fs.sample(fs.BumpChi(), (0.0, 1.0), 4097, 3)


@pytest.fixture(scope="session")
def bump_65537():
    return fs.sample(fs.BumpChi(), (0.0, 1.0), 2 ** 16 + 1, 3)


@pytest.fixture(scope="session")
def corpus_2049():
    return [(name, fs.sample(f, (0.0, 1.0), 2049, 3))
            for name, f in fs.standard_corpus()]


@pytest.fixture(scope="session")
def corpus_65537():
    return [(name, fs.sample(f, (0.0, 1.0), 2 ** 16 + 1, 3))
            for name, f in fs.standard_corpus()]


@pytest.fixture(scope="session")
def l12():
    return gn.l12_params()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)

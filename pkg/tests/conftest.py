"""Shared fixtures: expensive corpora are built once per session."""

import numpy as np
import pytest

from revwer import corpus


@pytest.fixture(scope="session")
def default_corpus():
    """Default desk-scale oracle corpus (no audio), built once."""
    records, airs, params = corpus.build_corpus(corpus.CorpusConfig())
    return records, airs, params


@pytest.fixture(scope="session")
def blind_corpus():
    """600-utterance audio corpus whose AIR C50 spans -5 to above 20 dB.

    The AIR grid plants log-spaced decay times against a sliding DRR so
    the clarity range is covered deterministically.
    """
    n_airs = 40
    rng = np.random.default_rng(11)
    t60s = np.geomspace(0.2, 4.0, n_airs)
    drrs = np.linspace(8.0, -10.0, n_airs) + rng.uniform(-1, 1, n_airs)
    specs = [
        corpus.AirSpec(
            t60_target=float(t60), drr_target=float(drr),
            length=max(1.5 * float(t60), 0.5), seed=int(rng.integers(2**31)),
        )
        for t60, drr in zip(t60s, drrs)
    ]
    config = corpus.CorpusConfig(
        n_talkers=30, n_airs=n_airs, utterances_per_talker=20,
        duration_s=2.0, with_audio=True, noise_sd=0.05, seed=3,
    )
    records, airs, params = corpus.build_corpus(config, air_specs=specs)
    return records, airs, params


def random_air(seed, length=4000, sample_rate=16000, t60=0.3):
    """Decaying Gaussian AIR used by randomized invariance checks."""
    from revwer import air

    rng = np.random.default_rng(seed)
    decay = np.exp(-3.0 * np.log(10.0) / (t60 * sample_rate)
                   * np.arange(length))
    return air.ImpulseResponse(rng.standard_normal(length) * decay,
                               sample_rate)

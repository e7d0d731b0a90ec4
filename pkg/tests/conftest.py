"""Shared fixtures: small seeded generative models."""

import numpy as np
import pytest

from contrastlab.synthetic import ModelConfig, build_generative_model, prompt_confound_model


@pytest.fixture(scope="session")
def default_gen():
    """Desk-scale model with ball-kind unique features on both sides."""
    return build_generative_model(ModelConfig(radius=0.25, seed=7))


@pytest.fixture(scope="session")
def mixed_gen():
    """Same shape but with seeded orthogonal mixing applied to G and H."""
    return build_generative_model(ModelConfig(radius=0.25, mix=True, seed=7))


@pytest.fixture(scope="session")
def separable_gen():
    """Zero unique features: scores through the shared latent only."""
    return build_generative_model(
        ModelConfig(K=8, K1=9, K2=0, K3=0, d1=9, d2=9, gamma=0.5,
                    xi_kind="zero", zeta_kind="zero", radius=0.0, seed=7)
    )


@pytest.fixture(scope="session")
def confound_gen():
    """The two-point text-feature construction that defeats square loss."""
    return prompt_confound_model(4, 0.2, seed=7)


@pytest.fixture
def make_rng():
    def _make(seed=0):
        return np.random.default_rng(seed)

    return _make

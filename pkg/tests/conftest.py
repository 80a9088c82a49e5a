import numpy as np
import pytest

from fwspde import DriftSpec, ModelSpec, NoiseSpec, SpectralBasis, SpectralField


@pytest.fixture
def ou_model():
    """Single-mode linear additive channel: gamma = 1, lambda = 1, g = 1."""
    basis = SpectralBasis.dirichlet_interval(1, np.pi)
    return ModelSpec(basis, DriftSpec("none"), NoiseSpec((1.0,)),
                     t_end=1.0, n_steps=100, state_norm="l2")


@pytest.fixture
def two_mode_model():
    """Diagonal linear model with gamma = (1, 4), default lambda decay."""
    basis = SpectralBasis.dirichlet_interval(2, np.pi)
    noise = NoiseSpec.power_decay(1.0, 1.5, 2)
    return ModelSpec(basis, DriftSpec("none"), noise,
                     t_end=1.0, n_steps=100, state_norm="l2")


@pytest.fixture
def reaction_model():
    """16-mode reaction-diffusion surrogate with bounded multiplicative g."""
    basis = SpectralBasis.dirichlet_interval(16, np.pi)
    noise = NoiseSpec.power_decay(1.0, 1.5, 16, "bounded_rational", (1.0,))
    drift = DriftSpec("reaction_polynomial", (0.0, 1.0, 0.0, -1.0))
    return ModelSpec(basis, drift, noise, t_end=0.5, n_steps=250)


@pytest.fixture
def ns_model():
    """Torus Navier-Stokes model, K = 3, trace-class noise."""
    basis = SpectralBasis.torus_2d_divfree(3)
    noise = NoiseSpec.power_decay(0.5, 2.0, 8)
    return ModelSpec(basis, DriftSpec("navier_stokes"), noise,
                     t_end=0.25, n_steps=100)


def random_field(basis, rng, scale=1.0):
    return SpectralField(basis, rng.normal(size=basis.n_modes) * scale)

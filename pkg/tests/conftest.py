import numpy as np
import pytest

from ramimo.channels import ChannelRealization
from ramimo.geometry import ScenarioConfig


def synthetic_realization(
    num_antennas: int,
    num_repeaters: int,
    num_ues: int,
    seed: int,
    direct_scale: float = 0.3,
    noise: float = 0.1,
    rho: float = 1.0,
) -> ChannelRealization:
    """Unit-scale i.i.d. Rayleigh channels, far better conditioned than physical ones."""
    rng = np.random.default_rng(seed)

    def cn(*shape):
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)

    return ChannelRealization(
        h=cn(num_repeaters, num_ues),
        g=cn(num_antennas, num_repeaters),
        h_bar=direct_scale * cn(num_antennas, num_ues),
        noise_rep=noise,
        noise_bs=noise,
        uplink_power=rho,
    )


@pytest.fixture
def make_realization():
    return synthetic_realization


@pytest.fixture
def unit_config() -> ScenarioConfig:
    """Caps matching the synthetic channels: alpha <= 1 and a power limit that rarely binds."""
    return ScenarioConfig(
        num_bs_antennas=4,
        num_repeaters=4,
        num_ues=2,
        alpha_max_db=0.0,
        p_max_w=100.0,
        deployment="custom",
        epsilon=1e-8,
    )


@pytest.fixture
def tiny_scenario() -> ScenarioConfig:
    """Physical scenario small enough for unit tests."""
    return ScenarioConfig(num_bs_antennas=4, num_repeaters=16, num_ues=2)

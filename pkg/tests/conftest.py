import numpy as np
import pytest
import torch

from cotrain.data import DomainTag, Episode, FactorConfig

torch.set_num_threads(2)

ROBOT_DIMS = (8, 8)
HUMAN_DIMS = (22, 22)


def make_factors(**kw) -> FactorConfig:
    base = dict(obj="set_red", dist="none", dist_count=0, light="neutral", bg="base", init="full")
    base.update(kw)
    return FactorConfig(**base)


def make_episode(
    domain=DomainTag.SIM,
    T=6,
    hw=8,
    seed=0,
    task="stack_discs",
    frequency_hz=10.0,
    factors=None,
) -> Episode:
    rng = np.random.default_rng(seed)
    d = HUMAN_DIMS[0] if domain is DomainTag.HUMAN else ROBOT_DIMS[0]
    actions = rng.normal(0, 0.02, (T, d))
    if domain is not DomainTag.HUMAN:
        actions[:, [3, 7]] = rng.integers(0, 2, (T, 2))
    return Episode(
        domain=domain,
        task=task,
        factors=factors or make_factors(),
        frequency_hz=frequency_hz,
        observations=rng.integers(0, 256, (T, hw, hw, 3), dtype=np.uint8),
        states=rng.normal(0.5, 0.2, (T, d)),
        actions=actions,
    )


@pytest.fixture(scope="session")
def tiny_policy_cfg():
    from cotrain.policy import PolicyConfig

    return PolicyConfig(
        views=1,
        image_hw=(16, 16),
        hidden=32,
        enc_layers=1,
        dec_layers=1,
        heads=2,
        ffn_mult=2,
        conv_channels=(4, 8),
        horizon=4,
    )


@pytest.fixture(scope="session")
def world_episode_set():
    """A small set of expert episodes from every domain, shared by tests."""
    from cotrain.experiments import WorldConfig, generate_pool

    wcfg = WorldConfig(resolution=16, human_capture_hz=10.0)
    return {
        DomainTag.SIM: generate_pool(DomainTag.SIM, wcfg, 4, seed=11),
        DomainTag.HUMAN: generate_pool(DomainTag.HUMAN, wcfg, 4, seed=12),
        DomainTag.REAL: generate_pool(DomainTag.REAL, wcfg, 3, seed=13),
    }

"""Shared test utilities."""

import numpy as np

from treecolor.dynamics import (
    PaletteConfig,
    TypeDistribution,
    VertexType,
    cascade_growth,
    type_space,
)
from treecolor.errors import DegenerateDistributionError


def random_subcritical(rng, cfg: PaletteConfig, growth_cap: float = 0.95):
    """Random sub-probability type distribution with cascade growth below cap."""
    space = type_space(cfg)
    while True:
        vec = rng.dirichlet(np.ones(space.size)) * rng.uniform(0.2, 1.0)
        z = TypeDistribution(cfg, vec)
        try:
            if cascade_growth(z) < growth_cap:
                return z
        except DegenerateDistributionError:
            continue


def mixed_example() -> TypeDistribution:
    """Reference two-type state used by several frozen-value tests."""
    cfg = PaletteConfig(4, 3)
    return TypeDistribution.from_dict(
        cfg, {VertexType(4, 3): 0.5, VertexType(2, 2): 0.5}
    )

import math

import numpy as np
import pytest

from aqua_qkd.polarization import (
    MuellerMatrix,
    WaveplateSpec,
    polarizer_mueller,
    rotation_mueller,
    waveplate_mueller,
)


def _random_physical_mueller(rng) -> MuellerMatrix:
    """Random physical Mueller matrix with positive total-intensity element.

    Convex combinations of products of rotations, retarders, depolarizers,
    and (occasionally) polarizers are physical by construction.
    """
    terms = []
    weights = rng.dirichlet(np.ones(rng.integers(1, 4)))
    for w in weights:
        m = rotation_mueller(rng.uniform(0, 2 * math.pi))
        m = m @ waveplate_mueller(
            WaveplateSpec(theta=rng.uniform(0, math.pi), delta=rng.uniform(0, 2 * math.pi))
        )
        d = rng.uniform(0, 1, size=3)
        m = m @ MuellerMatrix(np.diag([1.0, d[0], d[1], d[2]]))
        if rng.random() < 0.3:
            m = m @ polarizer_mueller(rng.uniform(0, math.pi))
        m = m @ rotation_mueller(rng.uniform(0, 2 * math.pi))
        terms.append(w * m.m)
    return MuellerMatrix(np.sum(terms, axis=0))


@pytest.fixture
def random_mueller_factory():
    return _random_physical_mueller

"""Coupled four-variable synthetic benchmark.

    W_t = 0.9 W_{t-1}                + e_W
    X_t = 0.8 X_{t-1} + 0.5 W_{t-1}  + e_X
    Y_t = -0.9 W_{t-1}               + e_Y
    Z_t = 0.6 X_{t-1} + 0.5 Y_{t-1}  + e_Z

with every e drawn independently from uniform[-h, h]. The ground-truth edge
set is therefore W->W, W->X, X->X, W->Y, X->Z, Y->Z, all at lag 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import EnsembleSet, FeatureCollection, FeatureSeries
from .rng import Xoshiro256pp, derive_seed

NAMES = ("W", "X", "Y", "Z")
TRUE_EDGES = frozenset({("W", "W", 1), ("W", "X", 1), ("X", "X", 1),
                        ("W", "Y", 1), ("X", "Z", 1), ("Y", "Z", 1)})


@dataclass(frozen=True)
class SynthConfig:
    n_ensembles: int = 5
    length: int = 750
    seed: int = 0
    noise_half_width: float = 0.5

    def __post_init__(self):
        if self.n_ensembles < 1:
            raise ValueError("n_ensembles must be >= 1")
        if self.length < 2:
            raise ValueError("length must be >= 2")
        if self.noise_half_width < 0:
            raise ValueError("noise_half_width must be >= 0")


def member_seed(master: int, member: int) -> int:
    return derive_seed(master, "synth", member)


def generate_member(seed: int, length: int, h: float) -> FeatureCollection:
    gen = Xoshiro256pp(seed)
    out = np.zeros((length, 4))

    def e():
        return gen.uniform(-h, h)

    # t=1 is pure noise; draws are taken in W, X, Y, Z order every step
    out[0] = [e(), e(), e(), e()]
    for t in range(1, length):
        w, x, y, _ = out[t - 1]
        out[t, 0] = 0.9 * w + e()
        out[t, 1] = 0.8 * x + 0.5 * w + e()
        out[t, 2] = -0.9 * w + e()
        out[t, 3] = 0.6 * x + 0.5 * y + e()
    return FeatureCollection(tuple(FeatureSeries(n, out[:, i]) for i, n in enumerate(NAMES)))


def generate(config: SynthConfig = SynthConfig()) -> EnsembleSet:
    return EnsembleSet(tuple(
        generate_member(member_seed(config.seed, r), config.length, config.noise_half_width)
        for r in range(config.n_ensembles)
    ))

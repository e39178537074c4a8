#!/usr/bin/env python3
"""Compare simulated tail frequencies of the sign-weighted noise average with the bound."""

import math

import numpy as np

from sps_scalar.bounds import as_probability, lemma_tail
from sps_scalar.montecarlo import UniformNoise, lemma_tail_experiment

N, K, SEED = 11, 50_000, 7
eps = np.round(np.arange(0, 1.01, 0.1), 10)
freq = lemma_tail_experiment(N, UniformNoise(1.0), eps, K, SEED)
print(f"{'eps':>5} {'empirical':>10} {'bound':>10}")
for e, f in zip(eps, freq):
    print(f"{e:5.2f} {f:10.5f} {as_probability(lemma_tail(e, N, math.sqrt(1 / 3))):10.5f}")

"""Baseline aggregators side by side on a round with one wild client.

Nine clients agree on small weights; the tenth submits a huge vector. FedAvg
is dragged, the robust rules are not.
"""

import numpy as np

from fedfft import (
    ClientUpdate,
    FftStrategy,
    ModelWeights,
    coordinate_median,
    fed_avg,
    fft_aggregate,
    krum,
    trimmed_mean,
)

rng = np.random.default_rng(1)

updates = [
    ClientUpdate(k, ModelWeights([rng.normal(0.0, 0.05, 4)]), dataset_size=100)
    for k in range(9)
]
updates.append(ClientUpdate(9, ModelWeights([np.full(4, 1e6)]), dataset_size=100))

print("client 9 submits 1e6 everywhere; first coordinates of each aggregate:\n")
for name, result in [
    ("fed_avg", fed_avg(updates)),
    ("coordinate_median", coordinate_median(updates)),
    ("trimmed_mean(n=1)", trimmed_mean(updates, 1)),
    ("krum(f=1)", krum(updates, 1)),
    ("fft kde mode", fft_aggregate(updates, FftStrategy())),
    ("fft literal", fft_aggregate(updates, FftStrategy(kind="literal"))),
]:
    print(f"{name:>18}: {np.round(result.layers[0], 4)}")

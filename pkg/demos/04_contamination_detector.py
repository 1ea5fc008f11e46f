"""The per-coordinate contamination score and the dynamic switch.

A clean population scores near zero; replacing 30% of the clients with
random-weight attackers pushes the score far beyond the switch threshold.
"""

import numpy as np

from fedfft import (
    AttackSpec,
    ClientUpdate,
    DetectorConfig,
    FftStrategy,
    ModelWeights,
    apply_attack,
    dynamic_aggregate,
    ks_test,
    mal_test,
)

rng = np.random.default_rng(4)

base = rng.normal(0.0, 0.5, 60)
clean = [
    ClientUpdate(k, ModelWeights([base + rng.normal(0.0, 0.01, 60)]), dataset_size=160)
    for k in range(20)
]
spec = AttackSpec(kind="random_weights", attacker_fraction=0.3)
attacked = apply_attack(clean, spec, set(range(6)), np.random.default_rng(5))

cfg = DetectorConfig()  # C=10 repetitions, subsets of 5, threshold 0.02
for label, updates in [("clean", clean), ("30% random attackers", attacked)]:
    scores = mal_test(updates, cfg, seed=0)
    weights, decision, score = dynamic_aggregate(updates, cfg, FftStrategy(), seed=0)
    print(f"{label:>22}: mean score {score:.4f} -> {decision}")
    print(f"{'':>22}  per-coordinate score quartiles "
          f"{np.percentile(scores, [25, 50, 75]).round(3)}")

# the plain two-sample test is also exposed directly
a, b = rng.normal(0, 1, 40), rng.normal(0.6, 1, 40)
res = ks_test(a, b)
print(f"\ntwo-sample KS on shifted normals: statistic {res.statistic:.3f}, "
      f"p-value {res.p_value:.4f}")

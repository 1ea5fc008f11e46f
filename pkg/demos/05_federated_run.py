"""A full federated run with a sudden attack and the dynamic aggregator.

Attackers stay dormant for ten rounds, then start submitting random weights.
The switch holds FedAvg while the population is clean and flips to
FFT-density aggregation the moment contamination appears; accuracy never
dips.
"""

from fedfft import AggregatorSpec, AttackSpec, SyntheticTask, TrainConfig, run_experiment

task = SyntheticTask(seed=0)
cfg = TrainConfig(
    rounds=20,
    aggregator=AggregatorSpec(kind="dynamic"),
    attack=AttackSpec(kind="random_weights", attacker_fraction=0.3, start_round=11),
    seed=42,
)

print("round  decision  score   accuracy")
for rec in run_experiment(cfg, task):
    marker = " <- attack begins" if rec.round == 11 else ""
    print(f"{rec.round:>5}  {rec.decision:>8}  {rec.detector_score:.4f}  {rec.global_accuracy:.3f}{marker}")

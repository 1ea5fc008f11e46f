"""Model-poisoning attacks: random Gaussian weights and the colluding min-max
crafting rule with three perturbation directions.

Attackers operate online, each round, on the updates they control. Random
attackers submit fresh Glorot-initialized weights, which makes them
distributionally camouflaged against a freshly initialized model. Min-max
attackers pool their honestly trained weights, take the mean, and push it as
far as possible along a perturbation direction while staying within the
attackers' own mutual diameter, so the crafted point never looks farther
from any colluder than the colluders are from each other.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensors import ClientUpdate, ModelWeights

ATTACK_NONE = "none"
ATTACK_RANDOM_WEIGHTS = "random_weights"
ATTACK_MIN_MAX = "min_max"

INVERSE_UNIT_VECTOR = "inverse_unit_vector"
INVERSE_STD = "inverse_std"
INVERSE_SIGN = "inverse_sign"

_GAMMA_CAP = 2.0 ** 60


class ZeroNorm(ValueError):
    """The inverse-unit-vector direction is undefined for a zero mean."""


class UnknownClientId(ValueError):
    """An attacker id does not occur among the submitted updates."""


@dataclass(frozen=True)
class AttackSpec:
    """Which attack runs, with which perturbation, against what fraction.

    ``start_round`` lets a simulation keep the attack dormant until a given
    round (1-based), which is how sudden-onset scenarios are built.
    """

    kind: str = ATTACK_NONE
    perturbation: str = INVERSE_UNIT_VECTOR
    attacker_fraction: float = 0.0
    start_round: int = 1

    def __post_init__(self):
        if self.kind not in (ATTACK_NONE, ATTACK_RANDOM_WEIGHTS, ATTACK_MIN_MAX):
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.perturbation not in (INVERSE_UNIT_VECTOR, INVERSE_STD, INVERSE_SIGN):
            raise ValueError(f"unknown perturbation {self.perturbation!r}")
        if not 0.0 <= self.attacker_fraction < 0.5:
            raise ValueError("attacker_fraction must lie in [0, 0.5)")
        if self.start_round < 1:
            raise ValueError("start_round must be >= 1")

    def attacker_count(self, clients: int) -> int:
        return int(np.floor(self.attacker_fraction * clients))


@dataclass(frozen=True)
class MinMaxResult:
    crafted: ModelWeights
    gamma: float
    perturbation_vec: ModelWeights


def _glorot_sigma(shape: tuple[int, ...]) -> float:
    if len(shape) >= 2:
        fan_in = int(np.prod(shape[:-1]))
        fan_out = shape[-1]
    else:
        fan_in, fan_out = shape[0], 1
    return float(np.sqrt(2.0 / (fan_in + fan_out)))


def random_weights(template: ModelWeights, rng: np.random.Generator) -> ModelWeights:
    """Fresh Glorot-normal weights with the template's layer shapes."""
    return ModelWeights(
        rng.normal(0.0, _glorot_sigma(a.shape), a.shape) for a in template.layers
    )


def perturbation_vector(malicious: Sequence[ModelWeights], kind: str) -> ModelWeights:
    """Attack direction derived from the colluders' pooled weights.

    ``inverse_unit_vector``: -mean / ||mean|| over all coordinates jointly.
    ``inverse_std``: per-coordinate negative population std across colluders.
    ``inverse_sign``: per-coordinate -sign(mean), with sign(0) = 0.
    """
    if not malicious:
        raise ValueError("need at least one malicious update")
    stack = np.stack([w.flat() for w in malicious])
    mean = stack.mean(axis=0)
    if kind == INVERSE_UNIT_VECTOR:
        norm = float(np.linalg.norm(mean))
        if norm == 0.0:
            raise ZeroNorm("mean of malicious weights has zero norm")
        flat = -mean / norm
    elif kind == INVERSE_STD:
        flat = -stack.std(axis=0)
    elif kind == INVERSE_SIGN:
        flat = -np.sign(mean)
    else:
        raise ValueError(f"unknown perturbation {kind!r}")
    return malicious[0].with_flat(flat)


def min_max_craft(malicious: Sequence[ModelWeights], kind: str = INVERSE_UNIT_VECTOR) -> MinMaxResult:
    """Craft the common submission mean + gamma * perturbation.

    gamma is pushed as high as the colluders' mutual diameter allows:
    max_m ||crafted - W^m|| <= max_{m,l} ||W^m - W^l||. gamma = 0 is always
    feasible, so the search doubles from 1 until the constraint breaks (cap
    2^60), then bisects 60 times; if the cap is reached without a violation
    (a degenerate near-zero perturbation direction) the cap is returned with
    a warning.
    """
    pert = perturbation_vector(malicious, kind)
    stack = np.stack([w.flat() for w in malicious])
    mean = stack.mean(axis=0)
    pvec = pert.flat()

    diameter = 0.0
    for i in range(len(stack)):
        for j in range(i + 1, len(stack)):
            diameter = max(diameter, float(np.linalg.norm(stack[i] - stack[j])))

    def feasible(gamma: float) -> bool:
        crafted = mean + gamma * pvec
        worst = max(float(np.linalg.norm(crafted - row)) for row in stack)
        return worst <= diameter

    if diameter == 0.0:
        gamma = 0.0
    elif not feasible(1.0):
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if feasible(mid) else (lo, mid)
        gamma = lo
    else:
        gamma = 1.0
        while feasible(gamma * 2.0) and gamma * 2.0 <= _GAMMA_CAP:
            gamma *= 2.0
        if gamma * 2.0 > _GAMMA_CAP:
            warnings.warn("min-max gamma search hit its cap; perturbation is degenerate")
            gamma = _GAMMA_CAP
        else:
            lo, hi = gamma, gamma * 2.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                lo, hi = (mid, hi) if feasible(mid) else (lo, mid)
            gamma = lo

    crafted = malicious[0].with_flat(mean + gamma * pvec)
    return MinMaxResult(crafted=crafted, gamma=gamma, perturbation_vec=pert)


def apply_attack(
    updates: Sequence[ClientUpdate],
    spec: AttackSpec,
    attacker_ids: set[int],
    rng: np.random.Generator,
) -> list[ClientUpdate]:
    """Replace the attackers' submissions per the attack spec.

    Benign updates pass through unmodified (same objects); dataset sizes are
    never touched. Random attackers draw from per-attacker substreams of
    ``rng`` in ascending id order, so the result is independent of list
    order.
    """
    known = {u.client_id for u in updates}
    missing = set(attacker_ids) - known
    if missing:
        raise UnknownClientId(f"attacker ids {sorted(missing)} not among updates")
    if spec.kind == ATTACK_NONE or not attacker_ids:
        return list(updates)

    by_id = {u.client_id: u for u in updates}
    ordered = sorted(attacker_ids)
    replacements: dict[int, ModelWeights] = {}
    if spec.kind == ATTACK_RANDOM_WEIGHTS:
        streams = rng.spawn(len(ordered))
        for cid, stream in zip(ordered, streams):
            replacements[cid] = random_weights(by_id[cid].weights, stream)
    else:
        pooled = [by_id[cid].weights for cid in ordered]
        crafted = min_max_craft(pooled, spec.perturbation).crafted
        for cid in ordered:
            replacements[cid] = crafted

    out = []
    for u in updates:
        if u.client_id in replacements:
            out.append(ClientUpdate(u.client_id, replacements[u.client_id], u.dataset_size))
        else:
            out.append(u)
    return out

"""Desk-scale federated training: synthetic blob tasks, a small from-scratch
MLP with SGD, and the round loop tying clients, attacks, and aggregation
together.

Everything is deterministic given the config seeds. Every random draw comes
from a generator keyed on structured tuples like ``(seed, round, client)``,
so results do not depend on scheduling or worker counts.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import adversary
from .adversary import AttackSpec, apply_attack
from .aggregators import KrumParam, TrimParam, coordinate_median, fed_avg, krum, trimmed_mean
from .detector import DetectorConfig, dynamic_aggregate
from .fft_aggregator import FftStrategy, fft_aggregate
from .tensors import ClientUpdate, ModelWeights

DECISION_NA = "n/a"

_SALT_CENTERS = 101
_SALT_CLIENT_DATA = 202
_SALT_GLOBAL_TEST = 303
_SALT_INIT = 404
_SALT_ATTACKER_SET = 505
_SALT_ATTACK_RNG = 606

CENTER_RADIUS = 3.0
GLOBAL_TEST_SIZE = 1000
TRAIN_SPLIT = 0.8


@dataclass(frozen=True)
class SyntheticTask:
    """Gaussian-blob classification task sharded across clients.

    Class centers sit on a sphere of radius 3; samples are center plus
    isotropic noise. ``dirichlet_alpha`` of infinity means IID label
    assignment; finite values skew each client's label mix by a Dirichlet
    draw.
    """

    dim: int = 8
    classes: int = 4
    per_client: int = 200
    clients: int = 20
    dirichlet_alpha: float = math.inf
    noise_sigma: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError("need at least two classes")
        if self.per_client < self.classes:
            raise ValueError("per_client must be >= classes")
        if self.clients < 1:
            raise ValueError("need at least one client")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class ClientData:
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray


@dataclass(frozen=True)
class TaskData:
    clients: tuple[ClientData, ...]
    global_test_x: np.ndarray
    global_test_y: np.ndarray
    centers: np.ndarray


def gen_task(task: SyntheticTask) -> TaskData:
    """Generate all client shards and the global held-out test set."""
    rng = np.random.default_rng([task.seed, _SALT_CENTERS])
    dirs = rng.normal(size=(task.classes, task.dim))
    centers = CENTER_RADIUS * dirs / np.linalg.norm(dirs, axis=1, keepdims=True)

    shards = []
    for k in range(task.clients):
        crng = np.random.default_rng([task.seed, _SALT_CLIENT_DATA, k])
        if math.isinf(task.dirichlet_alpha):
            labels = crng.integers(0, task.classes, task.per_client)
        else:
            mix = crng.dirichlet(np.full(task.classes, task.dirichlet_alpha))
            labels = crng.choice(task.classes, size=task.per_client, p=mix)
        x = centers[labels] + crng.normal(0.0, task.noise_sigma, (task.per_client, task.dim))
        n_train = int(TRAIN_SPLIT * task.per_client)
        shards.append(
            ClientData(
                train_x=x[:n_train],
                train_y=labels[:n_train],
                test_x=x[n_train:],
                test_y=labels[n_train:],
            )
        )

    grng = np.random.default_rng([task.seed, _SALT_GLOBAL_TEST])
    gy = grng.integers(0, task.classes, GLOBAL_TEST_SIZE)
    gx = centers[gy] + grng.normal(0.0, task.noise_sigma, (GLOBAL_TEST_SIZE, task.dim))
    return TaskData(clients=tuple(shards), global_test_x=gx, global_test_y=gy, centers=centers)


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MlpModel:
    """One-hidden-layer MLP: ReLU hidden units, softmax output.

    Weights are carried separately as ModelWeights in the layer order
    (W1, b1, W2, b2); this object only holds the architecture.
    """

    dim: int
    hidden: int = 16
    classes: int = 4

    def init_weights(self, seed: int) -> ModelWeights:
        """Glorot-normal kernels, zero biases."""
        rng = np.random.default_rng([seed, _SALT_INIT])
        w1 = rng.normal(0.0, np.sqrt(2.0 / (self.dim + self.hidden)), (self.dim, self.hidden))
        w2 = rng.normal(0.0, np.sqrt(2.0 / (self.hidden + self.classes)), (self.hidden, self.classes))
        return ModelWeights([w1, np.zeros(self.hidden), w2, np.zeros(self.classes)])

    def forward(self, weights: ModelWeights, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Hidden activations and softmax probabilities for a batch."""
        w1, b1, w2, b2 = weights.layers
        hidden = np.maximum(x @ w1 + b1, 0.0)
        logits = hidden @ w2 + b2
        logits = logits - logits.max(axis=1, keepdims=True)
        expl = np.exp(logits)
        probs = expl / expl.sum(axis=1, keepdims=True)
        return hidden, probs

    def gradients(self, weights: ModelWeights, x: np.ndarray, y: np.ndarray) -> list[np.ndarray]:
        """Mean cross-entropy gradients for a batch, in layer order."""
        w1, b1, w2, b2 = weights.layers
        n = x.shape[0]
        hidden, probs = self.forward(weights, x)
        dlogits = probs.copy()
        dlogits[np.arange(n), y] -= 1.0
        dlogits /= n
        gw2 = hidden.T @ dlogits
        gb2 = dlogits.sum(axis=0)
        dhidden = dlogits @ w2.T
        dhidden[hidden <= 0.0] = 0.0
        gw1 = x.T @ dhidden
        gb1 = dhidden.sum(axis=0)
        return [gw1, gb1, gw2, gb2]

    def loss(self, weights: ModelWeights, x: np.ndarray, y: np.ndarray) -> float:
        _, probs = self.forward(weights, x)
        picked = probs[np.arange(x.shape[0]), y]
        return float(-np.mean(np.log(np.maximum(picked, 1e-300))))

    def evaluate(self, weights: ModelWeights, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
        """(accuracy, mean cross-entropy) on a labeled set."""
        _, probs = self.forward(weights, x)
        acc = float(np.mean(probs.argmax(axis=1) == y))
        picked = probs[np.arange(x.shape[0]), y]
        return acc, float(-np.mean(np.log(np.maximum(picked, 1e-300))))


def local_update(
    model: MlpModel,
    weights: ModelWeights,
    data: ClientData,
    epochs: int,
    batch_size: int,
    learning_rate: float,
    rng: np.random.Generator,
    client_id: int = 0,
) -> ClientUpdate:
    """Mini-batch SGD on the client's training shard; shuffling comes from rng."""
    params = [a.copy() for a in weights.layers]
    n = data.train_x.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            current = ModelWeights(params)
            grads = model.gradients(current, data.train_x[idx], data.train_y[idx])
            for p, g in zip(params, grads):
                p -= learning_rate * g
    return ClientUpdate(client_id=client_id, weights=ModelWeights(params), dataset_size=n)


def grad_check(
    model: MlpModel,
    weights: ModelWeights,
    x: np.ndarray,
    y: np.ndarray,
    step: float = 1e-5,
) -> float:
    """Max relative error between backprop and central finite differences.

    Relative error per parameter is |analytic - numeric| divided by
    max(|analytic|, |numeric|, 1e-8), so exactly matching (including both
    zero) scores 0.
    """
    analytic = model.gradients(weights, x, y)
    worst = 0.0
    layers = [a.copy() for a in weights.layers]
    for li, layer in enumerate(layers):
        flat = layer.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            loss_hi = model.loss(ModelWeights(layers), x, y)
            flat[i] = orig - step
            loss_lo = model.loss(ModelWeights(layers), x, y)
            flat[i] = orig
            numeric = (loss_hi - loss_lo) / (2.0 * step)
            a = float(analytic[li].ravel()[i])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# round loop
# ---------------------------------------------------------------------------

def _sim_detector_default() -> DetectorConfig:
    # simulation runs score a quarter of the coordinates per round; plenty
    # for the decision and cheaper on wide models (full scoring via config)
    return DetectorConfig(coordinate_fraction=0.25)


@dataclass(frozen=True)
class AggregatorSpec:
    """Server-side aggregation rule for a run.

    kind: one of fedavg, median, trimmed_mean, krum, fft, dynamic.
    ``trim_n`` / ``krum_f`` of None mean "match the attacker count", the
    best-case tuning for those baselines.
    """

    kind: str = "fedavg"
    trim_n: int | None = None
    krum_f: int | None = None
    strategy: FftStrategy = field(default_factory=FftStrategy)
    detector: DetectorConfig = field(default_factory=_sim_detector_default)

    def __post_init__(self):
        if self.kind not in ("fedavg", "median", "trimmed_mean", "krum", "fft", "dynamic"):
            raise ValueError(f"unknown aggregator kind {self.kind!r}")


@dataclass(frozen=True)
class TrainConfig:
    rounds: int = 30
    epochs: int = 2
    batch_size: int = 32
    learning_rate: float = 0.05
    hidden: int = 16
    aggregator: AggregatorSpec = field(default_factory=AggregatorSpec)
    attack: AttackSpec = field(default_factory=AttackSpec)
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 1 or self.epochs < 1:
            raise ValueError("rounds and epochs must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass(frozen=True)
class RoundRecord:
    round: int
    decision: str
    detector_score: float | None
    global_accuracy: float
    global_loss: float
    wall_ms: int


def _aggregate(
    spec: AggregatorSpec,
    updates: Sequence[ClientUpdate],
    attacker_count: int,
    seed: int,
) -> tuple[ModelWeights, str, float | None]:
    if spec.kind == "fedavg":
        return fed_avg(updates), DECISION_NA, None
    if spec.kind == "median":
        return coordinate_median(updates), DECISION_NA, None
    if spec.kind == "trimmed_mean":
        n = spec.trim_n if spec.trim_n is not None else attacker_count
        return trimmed_mean(updates, TrimParam(n)), DECISION_NA, None
    if spec.kind == "krum":
        f = spec.krum_f if spec.krum_f is not None else attacker_count
        return krum(updates, KrumParam(f)), DECISION_NA, None
    if spec.kind == "fft":
        return fft_aggregate(updates, spec.strategy), DECISION_NA, None
    weights, decision, score = dynamic_aggregate(updates, spec.detector, spec.strategy, seed)
    return weights, decision, score


def attacker_ids_for(cfg: TrainConfig, task: SyntheticTask) -> set[int]:
    """The attacker set a run with this config uses, sampled from the run seed."""
    count = cfg.attack.attacker_count(task.clients)
    if not count:
        return set()
    rng = np.random.default_rng([cfg.seed, _SALT_ATTACKER_SET])
    return set(rng.choice(task.clients, size=count, replace=False).tolist())


def run_experiment(
    cfg: TrainConfig,
    task: SyntheticTask,
    round_hook: Callable[[int, Sequence[ClientUpdate], ModelWeights], None] | None = None,
) -> list[RoundRecord]:
    """Run a full federation: local training, attack, aggregation, evaluation.

    The attacker set is sampled once per run and held fixed across rounds;
    the attack itself activates at ``cfg.attack.start_round``. All clients
    participate every round. ``round_hook``, if given, observes
    ``(round, post-attack updates, aggregated weights)`` after each round.
    """
    data = gen_task(task)
    model = MlpModel(dim=task.dim, hidden=cfg.hidden, classes=task.classes)
    weights = model.init_weights(cfg.seed)

    attacker_count = cfg.attack.attacker_count(task.clients)
    attacker_ids = attacker_ids_for(cfg, task)

    records: list[RoundRecord] = []
    for rnd in range(1, cfg.rounds + 1):
        started = time.perf_counter()
        updates = [
            local_update(
                model,
                weights,
                data.clients[k],
                cfg.epochs,
                cfg.batch_size,
                cfg.learning_rate,
                np.random.default_rng([cfg.seed, rnd, k]),
                client_id=k,
            )
            for k in range(task.clients)
        ]
        if cfg.attack.kind != adversary.ATTACK_NONE and rnd >= cfg.attack.start_round:
            updates = apply_attack(
                updates,
                cfg.attack,
                attacker_ids,
                np.random.default_rng([cfg.seed, rnd, _SALT_ATTACK_RNG]),
            )
        weights, decision, score = _aggregate(
            cfg.aggregator, updates, attacker_count, seed=cfg.seed * 100003 + rnd
        )
        accuracy, loss = model.evaluate(weights, data.global_test_x, data.global_test_y)
        if round_hook is not None:
            round_hook(rnd, updates, weights)
        records.append(
            RoundRecord(
                round=rnd,
                decision=decision,
                detector_score=score,
                global_accuracy=accuracy,
                global_loss=loss,
                wall_ms=int((time.perf_counter() - started) * 1000.0),
            )
        )
    return records

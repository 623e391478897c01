"""Desk-scale federated training with quantized aggregation, attacks and defense.

Each round samples clients without replacement, runs local SGD from the
global model, and treats ``global - local`` as the client's update. The
server keeps a momentum buffer and steps against the aggregated update.
Aggregation runs the same arithmetic as the secure pipelines (see
:mod:`secquant.experiments.nmse`); the defended arm runs Aura on the
quantized updates instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from secquant.experiments.config import ExperimentConfig, FlTask
from secquant.experiments.nmse import simulate_aggregate
from secquant.quantize import quantize
from secquant.ring import ParameterError
from secquant.robust import AttackConfig, DefenseConfig, aura_defend, minmax_attack


@dataclass(frozen=True)
class Dataset:
    client_x: np.ndarray  # (population, samples, features + 1), last column is the bias input
    client_y: np.ndarray  # (population, samples)
    test_x: np.ndarray
    test_y: np.ndarray


def make_dataset(task: FlTask, population: int, seed: int) -> Dataset:
    """Two Gaussian classes whose means differ on ``informative`` coordinates."""
    rng = np.random.default_rng([seed, 0xDA7A])
    direction = np.zeros(task.features)
    direction[: task.informative] = 1.0 / math.sqrt(task.informative)
    offset = 0.5 * task.separation * direction

    def draw(count: int) -> tuple[np.ndarray, np.ndarray]:
        y = rng.integers(0, 2, size=count)
        x = rng.normal(size=(count, task.features)) + np.where(y[:, None] == 1, offset, -offset)
        flip = rng.random(count) < task.label_noise
        y = np.where(flip, 1 - y, y)
        return np.hstack([x, np.ones((count, 1))]), y.astype(np.float64)

    xs, ys = zip(*(draw(task.samples_per_client) for _ in range(population)))
    test_x, test_y = draw(task.test_samples)
    return Dataset(np.stack(xs), np.stack(ys), test_x, test_y)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def evaluate(weights: np.ndarray, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Accuracy and mean logistic loss."""
    z = x @ weights
    acc = float(np.mean((z > 0) == (y == 1)))
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
    return acc, loss


def local_update(
    weights: np.ndarray, x: np.ndarray, y: np.ndarray, task: FlTask, rng: np.random.Generator
) -> np.ndarray:
    """``weights - local_weights`` after ``local_steps`` minibatch SGD steps."""
    local = weights.copy()
    for _ in range(task.local_steps):
        idx = rng.choice(x.shape[0], size=min(task.batch_size, x.shape[0]), replace=False)
        xb, yb = x[idx], y[idx]
        grad = xb.T @ (_sigmoid(xb @ local) - yb) / len(idx)
        local -= task.client_lr * grad
    return weights - local


@dataclass
class FlResult:
    accuracy: list[float] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    attackers_selected: list[int] = field(default_factory=list)
    attackers_excluded: list[int] = field(default_factory=list)
    diverged: bool = False

    @property
    def final_accuracy(self) -> float:
        return self.accuracy[-1] if self.accuracy else float("nan")

    def exclusion_rate(self) -> float:
        """Excluded attackers over selected attackers, pooled across rounds."""
        selected = sum(self.attackers_selected)
        return sum(self.attackers_excluded) / selected if selected else float("nan")

    def rows(self, arm: str) -> list[dict]:
        return [
            {
                "arm": arm,
                "round": t + 1,
                "accuracy": self.accuracy[t],
                "loss": self.loss[t],
                "attackers_selected": self.attackers_selected[t],
                "attackers_excluded": self.attackers_excluded[t],
            }
            for t in range(len(self.accuracy))
        ]


def malicious_clients(population: int, fraction: float, seed: int) -> frozenset[int]:
    rng = np.random.default_rng([seed, 0xBAD])
    count = int(round(fraction * population))
    return frozenset(int(i) for i in rng.choice(population, size=count, replace=False))


def run_fl_training(
    task: FlTask,
    config: ExperimentConfig,
    attack: AttackConfig | None = None,
    defense: DefenseConfig | None = None,
    *,
    dataset: Dataset | None = None,
) -> FlResult:
    n = config.clients[0]
    population = config.population
    if n > population:
        raise ParameterError("cannot select more clients than the population holds")
    if defense is not None and config.scheme == "none":
        raise ParameterError("the defense operates on quantized updates; pick a scheme")
    data = dataset if dataset is not None else make_dataset(task, population, config.seed)
    bad = malicious_clients(population, attack.malicious_fraction, config.seed) if attack else frozenset()
    weights = np.zeros(task.dim)
    velocity = np.zeros(task.dim)
    result = FlResult()
    for t in range(task.rounds):
        selected = np.sort(np.random.default_rng([config.seed, t, 0x5E1]).choice(population, n, replace=False))
        honest = np.stack(
            [
                local_update(weights, data.client_x[c], data.client_y[c], task, np.random.default_rng([config.seed, t, int(c)]))
                for c in selected
            ]
        )
        attackers = [i for i, c in enumerate(selected) if int(c) in bad]
        updates = honest.copy()
        if attackers:
            benign_rows = [i for i in range(n) if i not in attackers]
            surrogates = honest[benign_rows] if len(benign_rows) >= 2 else honest
            updates[attackers] = minmax_attack(surrogates, attack).gradient
        round_seed = config.seed * 100_003 + t
        qrng = np.random.default_rng([config.seed, t, 0x9A])
        excluded_attackers = 0
        if defense is not None:
            qvs = [quantize(u, config.scheme, qrng, seed=round_seed) for u in updates]
            outcome = aura_defend(qvs, defense)
            aggregate = outcome.aggregate
            excluded_attackers = sum(1 for i in outcome.excluded if i in attackers)
        else:
            aggregate = simulate_aggregate(updates, config, qrng, seed=round_seed)
        momentum = defense.momentum if defense is not None else task.momentum
        velocity = momentum * velocity + aggregate
        weights = weights - task.server_lr * velocity
        if not np.all(np.isfinite(weights)):
            result.diverged = True
            break
        acc, loss = evaluate(weights, data.test_x, data.test_y)
        result.accuracy.append(acc)
        result.loss.append(loss)
        result.attackers_selected.append(len(attackers))
        result.attackers_excluded.append(excluded_attackers)
    return result


ARMS = ("clean", "attack", "defended")


def run_defense_experiment(
    task: FlTask,
    config: ExperimentConfig,
    attack: AttackConfig = AttackConfig(),
    defense: DefenseConfig = DefenseConfig(),
) -> dict[str, FlResult]:
    """No attack, undefended attack, and defended attack with shared selection seeds."""
    data = make_dataset(task, config.population, config.seed)
    return {
        "clean": run_fl_training(task, config, dataset=data),
        "attack": run_fl_training(task, config, attack, dataset=data),
        "defended": run_fl_training(task, config, attack, defense, dataset=data),
    }

"""Experiment configuration with JSON loading and flag overrides."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from secquant.ring import ParameterError

SCHEMES = ("none", "sq", "hsq", "ksq")
SCALES = ("global", "local")
CONVERSIONS = ("exact", "approx")
APPROACHES = ("I", "II", "III", "global")


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep or training configuration.

    ``dims`` and ``clients`` are swept as a grid by the NMSE harness; the
    training harness takes the model size from its task and uses
    ``clients[0]`` as the number of clients per round.
    """

    scheme: str = "sq"
    scales: str = "global"
    conversion: str = "exact"
    approach: str = "I"
    q: int = 3
    dims: tuple[int, ...] = (1024,)
    clients: tuple[int, ...] = (1, 10, 100, 1000)
    population: int = 50
    trials: int = 10
    seed: int = 0
    lognormal_mean: float = 0.0
    lognormal_sigma: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "scheme", self.scheme.lower())
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "clients", tuple(int(n) for n in self.clients))
        if self.scheme not in SCHEMES:
            raise ParameterError(f"scheme must be one of {SCHEMES}")
        if self.scales not in SCALES:
            raise ParameterError(f"scales must be one of {SCALES}")
        if self.conversion not in CONVERSIONS:
            raise ParameterError(f"conversion must be one of {CONVERSIONS}")
        if self.approach not in APPROACHES:
            raise ParameterError(f"approach must be one of {APPROACHES}")
        if self.approach == "global" and self.scales != "global":
            raise ParameterError("the global-scale approach requires global scales")
        if self.scheme == "none" and self.conversion == "approx":
            raise ParameterError("approximate conversion needs a quantization scheme")
        if self.q < 2:
            raise ParameterError("need at least two servers")
        if not self.dims or min(self.dims) < 1 or not self.clients or min(self.clients) < 1:
            raise ParameterError("dimensions and client counts must be positive")
        if self.trials < 1 or self.population < 1:
            raise ParameterError("trials and population must be positive")
        if self.lognormal_sigma < 0:
            raise ParameterError("sigma must be non-negative")

    @property
    def sepagg(self) -> bool:
        return self.approach == "III"

    @property
    def mode(self) -> str:
        """Short label combining conversion and aggregation."""
        return self.conversion if not self.sepagg else f"{self.conversion}-sepagg"


@dataclass(frozen=True)
class FlTask:
    """Desk-scale federated task: logistic regression on two Gaussian blobs."""

    features: int = 1023
    samples_per_client: int = 64
    test_samples: int = 2000
    separation: float = 3.0
    informative: int = 32
    label_noise: float = 0.05
    client_lr: float = 0.1
    server_lr: float = 1.0
    momentum: float = 0.9
    local_steps: int = 10
    batch_size: int = 16
    rounds: int = 100

    def __post_init__(self) -> None:
        if self.features < 1 or self.samples_per_client < 1 or self.test_samples < 1:
            raise ParameterError("sizes must be positive")
        if not 1 <= self.informative <= self.features:
            raise ParameterError("informative features must lie in [1, features]")
        if self.local_steps < 0 or self.batch_size < 1 or self.rounds < 0:
            raise ParameterError("invalid training schedule")
        if not 0 <= self.momentum < 1 or not 0 <= self.label_noise < 0.5:
            raise ParameterError("momentum and label noise out of range")

    @property
    def dim(self) -> int:
        """Model size: one weight per feature plus a bias."""
        return self.features + 1


def _coerce(cls, data: dict[str, Any]):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ParameterError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


@dataclass(frozen=True)
class RunConfig:
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    task: FlTask = field(default_factory=FlTask)
    defense: dict = field(default_factory=dict)
    attack: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "experiment": asdict(self.experiment),
            "task": asdict(self.task),
            "defense": dict(self.defense),
            "attack": dict(self.attack),
        }


def load_config(path: str | Path | None) -> RunConfig:
    """Read a JSON file with optional ``experiment``, ``task``, ``defense``, ``attack`` objects."""
    if path is None:
        return RunConfig()
    data = json.loads(Path(path).read_text())
    if not isinstance(data, dict):
        raise ParameterError("config root must be a JSON object")
    unknown = set(data) - {"experiment", "task", "defense", "attack"}
    if unknown:
        raise ParameterError(f"unknown config sections: {sorted(unknown)}")
    return RunConfig(
        _coerce(ExperimentConfig, data.get("experiment", {})),
        _coerce(FlTask, data.get("task", {})),
        dict(data.get("defense", {})),
        dict(data.get("attack", {})),
    )


def override(config, **changes):
    """``dataclasses.replace`` that ignores ``None`` values (unset flags)."""
    return replace(config, **{k: v for k, v in changes.items() if v is not None})

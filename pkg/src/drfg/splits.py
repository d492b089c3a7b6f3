"""Seeded stratified splits and partition handles that record who reads what."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, InvalidInputError
from .store import FeatureSet


def trial_rng(master_seed: int, trial: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for (master seed, trial index, component stream)."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, trial, stream]))


def trial_seed(master_seed: int, trial: int, stream: int = 0) -> int:
    return int(np.random.SeedSequence([master_seed, trial, stream]).generate_state(1)[0])


def split_dataset(labels, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stratified shuffle split; returns sorted (train, test) index arrays.

    Each class contributes ``round(n_c * test_fraction)`` test samples, clamped
    so that both sides get at least one.
    """
    if not 0.0 < test_fraction < 1.0:
        raise InvalidInputError(f"test_fraction must be in (0, 1), got {test_fraction}")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        if len(members) < 2:
            raise InvalidInputError(f"class {cls} has {len(members)} sample(s); need >= 2")
        n_test = min(max(int(round(len(members) * test_fraction)), 1), len(members) - 1)
        members = rng.permutation(members)
        test.append(members[:n_test])
        train.append(members[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


@dataclass
class AccessLog:
    events: list[tuple[str, str]] = field(default_factory=list)

    def stages_for(self, role: str) -> set[str]:
        return {stage for r, stage in self.events if r == role}


@dataclass
class Partition:
    """A read-logged view of one side of a split."""

    role: str
    data: FeatureSet
    log: AccessLog = field(default_factory=AccessLog)

    def read(self, stage: str) -> FeatureSet:
        self.log.events.append((self.role, stage))
        return self.data

    def __len__(self):
        return len(self.data)


def training_values(data, stage: str) -> tuple[np.ndarray, np.ndarray | None]:
    """Values (and labels, if known) for a fitting stage; refuses test partitions."""
    if isinstance(data, Partition):
        if data.role != "train":
            raise ContractViolation(f"{stage} attempted to fit on the {data.role} partition")
        fs = data.read(stage)
        return fs.values, fs.labels
    if isinstance(data, FeatureSet):
        return data.values, data.labels
    return np.asarray(data), None


def inference_values(data, stage: str) -> np.ndarray:
    if isinstance(data, Partition):
        return data.read(stage).values
    if isinstance(data, FeatureSet):
        return data.values
    return np.asarray(data)

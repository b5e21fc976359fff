"""Dataset container shared by the generator, trainers, and topology runs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError


@dataclass(frozen=True)
class Sample:
    """One observation: concatenated modality features plus one beam label
    per prediction slot (current slot first)."""

    features: np.ndarray  # (input_dim,)
    labels: np.ndarray    # (num_slots,) int


class Dataset:
    """Feature matrix (n, input_dim) with per-slot labels (n, num_slots).

    ``angles`` optionally carries the generating ground-truth angle
    trajectories for cross-checks; they are never part of the model input.
    """

    def __init__(self, features: np.ndarray, labels: np.ndarray,
                 angles: np.ndarray | None = None):
        features = np.ascontiguousarray(features, dtype=np.float64)
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        if features.ndim != 2:
            raise DimensionError(f"features must be 2-D, got {features.shape}")
        if labels.ndim != 2:
            raise DimensionError(f"labels must be 2-D, got {labels.shape}")
        if features.shape[0] != labels.shape[0]:
            raise DimensionError(
                f"{features.shape[0]} feature rows vs {labels.shape[0]} label rows"
            )
        if not np.isfinite(features).all():
            raise ContractError("features contain non-finite entries")
        self.features = features
        self.labels = labels
        self.angles = angles

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_slots(self) -> int:
        return self.labels.shape[1]

    def sample(self, i: int) -> Sample:
        return Sample(self.features[i], self.labels[i])

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        ang = self.angles[idx] if self.angles is not None else None
        return Dataset(self.features[idx], self.labels[idx], ang)

    @staticmethod
    def concat(parts: list["Dataset"]) -> "Dataset":
        if not parts:
            raise ContractError("cannot concatenate zero datasets")
        feats = np.concatenate([p.features for p in parts], axis=0)
        labs = np.concatenate([p.labels for p in parts], axis=0)
        angles = None
        if all(p.angles is not None for p in parts):
            angles = np.concatenate([p.angles for p in parts], axis=0)
        return Dataset(feats, labs, angles)

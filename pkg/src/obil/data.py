"""Labeled dataset container shared by training, resampling, and the CLI."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DegenerateData(ValueError):
    pass


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix with binary labels (1 = minority/positive)."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels, dtype=int)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] != y.shape[0]:
            raise ValueError("features and labels must have equal length")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be binary 0/1")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_positive(self) -> int:
        return int(self.labels.sum())

    @property
    def n_negative(self) -> int:
        return len(self) - self.n_positive

    @property
    def imbalance_ratio(self) -> float:
        """Majority-over-minority count ratio N0 / N1."""
        if self.n_positive == 0:
            raise DegenerateData("no positive samples")
        return self.n_negative / self.n_positive

    def require_both_classes(self):
        if self.n_positive == 0 or self.n_negative == 0:
            raise DegenerateData("dataset must contain both classes")

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.features[idx], self.labels[idx])


def stratified_split(dataset: LabeledDataset, fractions, seed: int):
    """Split into len(fractions)+1 parts preserving class proportions.

    fractions are the sizes of the leading parts; the remainder forms the
    last part.  Returns a list of LabeledDataset.
    """
    rng = np.random.default_rng(seed)
    y = dataset.labels
    parts_idx = [[] for _ in range(len(fractions) + 1)]
    for cls in (0, 1):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        n = len(idx)
        start = 0
        for j, f in enumerate(fractions):
            take = int(round(f * n))
            parts_idx[j].extend(idx[start:start + take])
            start += take
        parts_idx[-1].extend(idx[start:])
    return [dataset.subset(np.sort(np.array(p, dtype=int))) for p in parts_idx]

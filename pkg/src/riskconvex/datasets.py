"""Dataset ingestion, label corruption, and synthetic generators.

The on-disk format is headerless CSV, features first and the label in
the last column, decimal floating point throughout.  Malformed rows are
hard errors naming the line.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .csvio import parse_float, read_csv, write_csv
from .errors import ConfigError, ContractError
from .sampling import GaussianSampler


@dataclass
class Dataset:
    """Feature matrix, label vector, and where they came from."""

    X: np.ndarray
    y: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=float)
        if self.X.shape[0] != self.y.shape[0]:
            raise ContractError("feature and label counts differ")
        if not (np.all(np.isfinite(self.X)) and np.all(np.isfinite(self.y))):
            raise ContractError("dataset contains non-finite entries")

    @property
    def size(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def is_binary(self) -> bool:
        return bool(np.all(np.isin(self.y, (-1.0, 1.0))))

    def split(self, test_fraction: float, sampler: GaussianSampler):
        """Deterministic shuffle split into (train, test)."""
        if not 0.0 <= test_fraction < 1.0:
            raise ContractError("test_fraction must be in [0, 1)")
        order = sampler.rng.permutation(self.size)
        n_test = int(round(test_fraction * self.size))
        test_idx, train_idx = order[:n_test], order[n_test:]
        return (
            Dataset(self.X[train_idx], self.y[train_idx], self.provenance + "#train"),
            Dataset(self.X[test_idx], self.y[test_idx], self.provenance + "#test"),
        )


def load_dataset(path, task: str = "classification") -> Dataset:
    """Load a headerless CSV with the label in the last column.

    ``task`` "classification" requires labels in {-1, +1}; "regression"
    accepts any finite label.
    """
    path = Path(path)
    _, rows = read_csv(path, header=False)
    if not rows:
        raise ConfigError(f"{path}: dataset is empty")
    width = len(rows[0])
    if width < 2:
        raise ConfigError(f"{path}, line 1: need at least one feature and a label")
    X = np.empty((len(rows), width - 1))
    y = np.empty(len(rows))
    for i, cells in enumerate(rows):
        line_no = i + 1
        if len(cells) != width:
            raise ConfigError(
                f"{path}, line {line_no}: expected {width} columns, found {len(cells)}"
            )
        values = [parse_float(c, path, line_no) for c in cells]
        if not all(np.isfinite(v) for v in values):
            raise ConfigError(f"{path}, line {line_no}: non-finite value")
        X[i] = values[:-1]
        y[i] = values[-1]
    if task == "classification" and not np.all(np.isin(y, (-1.0, 1.0))):
        bad = int(np.argmin(np.isin(y, (-1.0, 1.0))))
        raise ConfigError(f"{path}, line {bad + 1}: label {y[bad]} is not -1 or +1")
    return Dataset(X=X, y=y, provenance=str(path))


def save_dataset(path, ds: Dataset) -> None:
    write_csv(path, ([*row, label] for row, label in zip(ds.X, ds.y)))


def sign_plus(x):
    """sign with the tie sign(0) broken to +1."""
    return np.where(np.asarray(x, dtype=float) >= 0.0, 1.0, -1.0)


def corrupt_labels(ds: Dataset, sigma_noise: float, sampler: GaussianSampler) -> Dataset:
    """Per-example label corruption yhat = sign(y + w), w ~ N(0, sigma^2).

    For sigma_noise = 0 the labels are returned unchanged; the flip
    probability of a clean label is Phi(-1/sigma_noise).
    """
    if not ds.is_binary():
        raise ContractError("corruption requires labels in {-1, +1}")
    sigma_noise = float(sigma_noise)
    if sigma_noise < 0.0:
        raise ContractError("sigma_noise must be nonnegative")
    if sigma_noise == 0.0:
        return Dataset(ds.X.copy(), ds.y.copy(), ds.provenance + "#corrupt0")
    noise = sigma_noise * sampler.normal(ds.size)
    return Dataset(ds.X.copy(), sign_plus(ds.y + noise),
                   ds.provenance + f"#corrupt{sigma_noise}")


def make_blobs(m: int, sampler: GaussianSampler, separation: float = 4.0,
               dim: int = 2) -> Dataset:
    """Two symmetric unit-variance Gaussian blobs with centers
    ``separation`` apart along the first axis; labels are the blob signs."""
    if m < 2:
        raise ContractError("need at least two points")
    labels = sign_plus(sampler.normal(m))
    centers = np.zeros((m, dim))
    centers[:, 0] = 0.5 * separation * labels
    X = centers + sampler.normal((m, dim))
    return Dataset(X=X, y=labels, provenance=f"blobs(m={m},sep={separation})")


def make_sine(m: int, sampler: GaussianSampler, amplitude: float = 0.4,
              frequency: float = 2.0, noise: float = 0.0) -> Dataset:
    """1-D regression targets y = amplitude * sin(frequency * x), x ~ U(-1, 1)."""
    if m < 2:
        raise ContractError("need at least two points")
    x = sampler.rng.uniform(-1.0, 1.0, size=m)
    y = amplitude * np.sin(frequency * x)
    if noise > 0.0:
        y = y + noise * sampler.normal(m)
    return Dataset(X=x[:, None], y=y,
                   provenance=f"sine(m={m},A={amplitude},f={frequency})")

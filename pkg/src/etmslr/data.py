"""Dataset containers, standardization, CSV ingestion and train/test splitting."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EPS = 1e-10


class DataError(ValueError):
    """Raised for malformed or unusable input data."""


def _as_matrix(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if arr.size else arr.reshape(0, 0)
    if arr.ndim != 2:
        raise DataError(f"{name} must be a 2-d matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LabeledSample:
    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = _as_matrix(self.features, "features")
        y = np.asarray(self.labels)
        if y.ndim != 1 or y.shape[0] != x.shape[0]:
            raise DataError("labels must be a vector with one entry per row")
        if not np.all((y == 0) | (y == 1)):
            raise DataError("labels must be 0 or 1")
        y = y.astype(int)
        y.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class SemiDataset:
    """Three samples: x1 (label 0), x2 (label 1) and x3 (unlabeled)."""

    x1: np.ndarray
    x2: np.ndarray
    x3: np.ndarray

    def __post_init__(self):
        mats = []
        for name in ("x1", "x2", "x3"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.ndim == 1 and arr.size == 0:
                arr = arr.reshape(0, 0)
            mats.append(_as_matrix(arr, name))
        widths = {m.shape[1] for m in mats if m.shape[0] > 0}
        if len(widths) > 1:
            raise DataError(f"samples disagree on feature count: {sorted(widths)}")
        p = widths.pop() if widths else 0
        mats = [m if m.shape[0] > 0 else np.zeros((0, p)) for m in mats]
        for name, m in zip(("x1", "x2", "x3"), mats):
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @property
    def n1(self) -> int:
        return self.x1.shape[0]

    @property
    def n2(self) -> int:
        return self.x2.shape[0]

    @property
    def n3(self) -> int:
        return self.x3.shape[0]

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    @property
    def N(self) -> int:
        return self.n1 + self.n2 + self.n3

    @property
    def p(self) -> int:
        return self.x1.shape[1]

    @property
    def counts(self) -> tuple[int, int, int, int]:
        return self.n1, self.n2, self.n3, self.N

    @property
    def rho_labeled(self) -> float:
        """Proportion of positives among the labeled rows, n2/n."""
        return self.n2 / self.n

    def pooled(self) -> np.ndarray:
        return np.vstack([self.x1, self.x2, self.x3])

    def labeled(self) -> LabeledSample:
        x = np.vstack([self.x1, self.x2])
        y = np.concatenate([np.zeros(self.n1, int), np.ones(self.n2, int)])
        return LabeledSample(x, y)

    def require_labeled(self):
        if self.n1 < 1 or self.n2 < 1:
            raise DataError("both labeled classes must be present")


@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray
    scales: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.scales) <= 0):
            raise DataError("scales must be strictly positive")

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, float) - self.means) / self.scales

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, float) * self.scales + self.means

    def transform_dataset(self, data: SemiDataset) -> SemiDataset:
        return SemiDataset(self.transform(data.x1), self.transform(data.x2), self.transform(data.x3))

    def transform_sample(self, sample: LabeledSample) -> LabeledSample:
        return LabeledSample(self.transform(sample.features), sample.labels)


def fit_standardizer(data: SemiDataset) -> Standardizer:
    """Pooled mean and population standard deviation over all N rows.

    Constant columns (spread at rounding level) get scale 1.
    """
    x = data.pooled()
    if x.shape[0] < 2:
        raise DataError("need at least two rows to standardize")
    means = x.mean(axis=0)
    scales = x.std(axis=0)
    constant = scales <= 1e-12 * np.abs(x).max(axis=0)
    scales = np.where(constant, 1.0, scales)
    return Standardizer(means, scales)


@dataclass(frozen=True)
class ModelParams:
    rho: float
    beta0: float
    beta1: np.ndarray
    clamped: bool = field(default=False, compare=False)

    def __post_init__(self):
        b1 = np.atleast_1d(np.asarray(self.beta1, dtype=float)).copy()
        rho = float(self.rho)
        if not (math.isfinite(rho) and math.isfinite(self.beta0) and np.all(np.isfinite(b1))):
            raise ValueError("model parameters must be finite")
        clamped = self.clamped or rho < EPS or rho > 1 - EPS
        b1.setflags(write=False)
        object.__setattr__(self, "rho", min(max(rho, EPS), 1 - EPS))
        object.__setattr__(self, "beta0", float(self.beta0))
        object.__setattr__(self, "beta1", b1)
        object.__setattr__(self, "clamped", clamped)

    @property
    def beta(self) -> np.ndarray:
        return np.concatenate([[self.beta0], self.beta1])

    @classmethod
    def from_vector(cls, rho: float, beta) -> "ModelParams":
        beta = np.asarray(beta, float)
        return cls(rho, beta[0], beta[1:])

    def to_dict(self) -> dict:
        return {"rho": self.rho, "beta0": self.beta0, "beta1": self.beta1.tolist()}


@dataclass(frozen=True)
class PenaltyConfig:
    """Ridge scale ``lam`` on beta1 and Beta-prior (scale ``gamma``, center ``rho0``) on rho.

    ``gamma = inf`` freezes rho at ``rho0``.
    """

    lam: float = 0.0
    gamma: float = 0.0
    rho0: float = 0.5

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")
        if not self.gamma >= 0:
            raise ValueError("gamma must be nonnegative")
        if not 0 < self.rho0 < 1:
            raise ValueError("rho0 must lie in (0, 1)")

    @property
    def frozen_rho(self) -> bool:
        return math.isinf(self.gamma)

    def taus(self, n3: int, N: int) -> tuple[float, float]:
        w = self.gamma * n3 / N
        return w * (1 - self.rho0), w * self.rho0


@dataclass(frozen=True)
class Responsibilities:
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray

    @property
    def total(self) -> float:
        return float(self.u2.sum() + self.u3.sum())

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.u1, self.u2, self.u3])


@dataclass
class FitResult:
    params: ModelParams
    objective_trace: list[float]
    iterations: int
    converged: bool
    final_gradient_norm: float
    objective: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "final_gradient_norm": self.final_gradient_norm,
        }


_MISSING = {"", "NA"}


def load_csv(path, label_column: str) -> SemiDataset:
    """Read a CSV with a header row; empty or ``NA`` labels mark unlabeled rows."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"missing file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError("empty file (no header row)") from None
        if label_column not in header:
            raise DataError(f"label column {label_column!r} not found in header")
        li = header.index(label_column)
        groups: dict[str, list] = {"0": [], "1": [], "": []}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            label = row[li].strip()
            if label in _MISSING:
                label = ""
            elif label in ("0", "1", "0.0", "1.0"):
                label = label[0]
            else:
                raise DataError(f"line {lineno}: invalid label {label!r}")
            try:
                feats = [float(c) for j, c in enumerate(row) if j != li]
            except ValueError:
                raise DataError(f"line {lineno}: non-numeric feature cell") from None
            if not all(math.isfinite(v) for v in feats):
                raise DataError(f"line {lineno}: non-finite feature value")
            groups[label].append(feats)
    p = len(header) - 1
    if not any(groups.values()):
        raise DataError("file contains zero data rows")
    mats = [np.array(groups[k], dtype=float).reshape(-1, p) for k in ("0", "1", "")]
    return SemiDataset(*mats)


def load_labeled_csv(path, label_column: str) -> LabeledSample:
    """Fully labeled source file, as used by the benchmark protocol."""
    data = load_csv(path, label_column)
    if data.n3:
        raise DataError("source dataset for benchmarking must be fully labeled")
    return data.labeled()


def labeled_counts(n_pos: int, n_neg: int, size: int, scheme: str) -> tuple[int, int]:
    """Class counts (negatives, positives) for a labeled draw of ``size`` rows.

    ``homo`` keeps the source odds; ``flip`` multiplies the odds by 4 when they
    are at most 1 and divides by 4 otherwise.
    """
    odds = n_pos / n_neg
    if scheme == "homo":
        target = odds
    elif scheme == "flip":
        target = odds * 4 if odds <= 1 else odds / 4
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    k_pos = int(round(size * target / (1 + target)))
    k_pos = min(max(k_pos, 1), size - 1)
    return size - k_pos, k_pos


def split_train_test(
    data: LabeledSample, scheme: str, labeled_size: int, seed
) -> tuple[SemiDataset, LabeledSample]:
    """Draw labeled, unlabeled and test parts from a fully labeled source.

    Labeled plus unlabeled rows make up two thirds of the source (rounded);
    the remaining rows form the test set.
    """
    rng = np.random.default_rng(seed)
    y = data.labels
    pos = np.flatnonzero(y == 1)
    neg = np.flatnonzero(y == 0)
    if labeled_size < 2:
        raise DataError("labeled size must be at least 2")
    k_neg, k_pos = labeled_counts(len(pos), len(neg), labeled_size, scheme)
    if k_pos > len(pos) or k_neg > len(neg):
        raise DataError(
            f"requested {k_neg} negative / {k_pos} positive labeled rows, "
            f"source has {len(neg)} / {len(pos)}"
        )
    n_train = int(round(2 * data.n / 3))
    if n_train < labeled_size:
        raise DataError("labeled size exceeds the training pool")
    lab_neg = rng.choice(neg, k_neg, replace=False)
    lab_pos = rng.choice(pos, k_pos, replace=False)
    rest = np.setdiff1d(np.arange(data.n), np.concatenate([lab_neg, lab_pos]))
    rest = rng.permutation(rest)
    n_unl = n_train - labeled_size
    unl, test = rest[:n_unl], rest[n_unl:]
    x = data.features
    semi = SemiDataset(x[np.sort(lab_neg)], x[np.sort(lab_pos)], x[np.sort(unl)])
    test = np.sort(test)
    return semi, LabeledSample(x[test], y[test])

"""Training-frame generation and correlation diagnostics.

Each operator assigns its N lines a private N x T QPSK training matrix.
Operators never see each other's training, so the set exposes per-operator
handles; the stacked KN x T view exists for the centralized / data-sharing
baselines only.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .model import ScenarioConfig

__all__ = [
    "OperatorTraining",
    "TrainingSet",
    "CrossCorrelationReport",
    "gen_training",
    "orthogonalize",
    "crosscorr_report",
]


@dataclass(frozen=True)
class OperatorTraining:
    """The training matrix one operator is allowed to see."""

    operator: int
    matrix: np.ndarray  # N x T


@dataclass(frozen=True)
class TrainingSet:
    """Per-operator N x T training matrices, row-block stacked into KN x T."""

    per_operator: np.ndarray  # (K, N, T) complex

    def __post_init__(self):
        x = np.asarray(self.per_operator)
        if x.ndim != 3:
            raise ValueError("per_operator must have shape (K, N, T)")
        object.__setattr__(self, "per_operator", x.astype(np.complex128, copy=False))

    @property
    def num_operators(self) -> int:
        return self.per_operator.shape[0]

    @property
    def lines_per_operator(self) -> int:
        return self.per_operator.shape[1]

    @property
    def length(self) -> int:
        return self.per_operator.shape[2]

    def handle(self, k: int) -> OperatorTraining:
        """Knowledge-boundary accessor: operator k's own matrix, nothing else."""
        return OperatorTraining(operator=k, matrix=self.per_operator[k])

    def operator(self, k: int) -> np.ndarray:
        return self.per_operator[k]

    @property
    def stacked(self) -> np.ndarray:
        K, N, T = self.per_operator.shape
        return self.per_operator.reshape(K * N, T)

    def to_csv(self, path) -> None:
        """Regression-fixture export: one row per entry, complex as re,im."""
        K, N, T = self.per_operator.shape
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["operator", "line", "t", "re", "im"])
            for k in range(K):
                for n in range(N):
                    for t in range(T):
                        v = self.per_operator[k, n, t]
                        w.writerow([k, n, t, repr(float(v.real)), repr(float(v.imag))])

    @classmethod
    def from_csv(cls, path) -> "TrainingSet":
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.append((int(rec["operator"]), int(rec["line"]), int(rec["t"]),
                             float(rec["re"]), float(rec["im"])))
        K = 1 + max(r[0] for r in rows)
        N = 1 + max(r[1] for r in rows)
        T = 1 + max(r[2] for r in rows)
        out = np.zeros((K, N, T), dtype=np.complex128)
        for k, n, t, re, im in rows:
            out[k, n, t] = re + 1j * im
        return cls(per_operator=out)


def gen_training(config: ScenarioConfig, rng: np.random.Generator) -> TrainingSet:
    """Random unit-power QPSK training, independent across operators."""
    K, N, T = config.num_operators, config.lines_per_operator, config.training_length
    if T <= N:
        raise ValueError("training_length must exceed lines_per_operator")
    quadrant = rng.integers(0, 4, size=(K, N, T))
    entries = np.exp(1j * (np.pi / 4.0 + np.pi / 2.0 * quadrant))
    return TrainingSet(per_operator=entries)


def orthogonalize(training: TrainingSet) -> TrainingSet:
    """Replace the set with an exactly orthogonal one spanning the same rows.

    Models the ideal coordinated-training assumption used by the analysis:
    the stacked rows become mutually orthogonal with squared norm T, so
    Xbar Xbar^H = T I.  Requires T >= KN.  Entries are no longer unit
    modulus, but per-row power is preserved.
    """
    K, N, T = (training.num_operators, training.lines_per_operator, training.length)
    if T < K * N:
        raise ValueError("orthogonalization needs training_length >= K*N")
    q, _ = np.linalg.qr(training.stacked.conj().T)  # T x KN, orthonormal columns
    rows = np.sqrt(T) * q.conj().T
    return TrainingSet(per_operator=rows.reshape(K, N, T))


@dataclass(frozen=True)
class CrossCorrelationReport:
    """Summary of the normalized training Gram matrix Xbar Xbar^H / T."""

    max_offdiag: float
    mean_offdiag: float
    max_cross_operator: float
    block_max: np.ndarray  # (K, K) max |entry| per operator pair


def crosscorr_report(training: TrainingSet) -> CrossCorrelationReport:
    K, N, _ = training.per_operator.shape
    gram = np.abs(training.stacked @ training.stacked.conj().T) / training.length
    off = gram[~np.eye(K * N, dtype=bool)]
    block_max = np.zeros((K, K))
    for k in range(K):
        for m in range(K):
            blk = gram[k * N:(k + 1) * N, m * N:(m + 1) * N].copy()
            if k == m:
                blk[np.diag_indices(N)] = 0.0
            block_max[k, m] = blk.max(initial=0.0)
    cross = block_max[~np.eye(K, dtype=bool)].max(initial=0.0) if K > 1 else 0.0
    return CrossCorrelationReport(
        max_offdiag=float(off.max(initial=0.0)),
        mean_offdiag=float(off.mean()) if off.size else 0.0,
        max_cross_operator=float(cross),
        block_max=block_max,
    )

"""Block-Jacobi splittings behind the cooperative iterations.

Both cooperative loops are block-Jacobi sweeps on a stacked linear system
b = A v: estimation stacks the training observations over operators,
detection stacks the received vector.  This module builds the splits
A = D - F with D the block-diagonal (locally known) part, computes spectral
radii of the iteration matrix J = (D^H D)^{-1} D^H F, derives geometric
error envelopes, and checks an implementation trace against the explicit
recursion D v^(n+1) = F v^(n) + b solved in the least-squares sense.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import MultiOperatorChannel
from .training import TrainingSet

__all__ = [
    "JacobiSplit",
    "build_split_estimation",
    "build_split_detection",
    "spectral_radius",
    "spectral_radius_matrix",
    "predicted_error_decay",
    "vectorize_estimation_state",
    "vectorize_observations",
    "jacobi_recursion",
    "estimation_jacobi_deviation",
    "detection_jacobi_deviation",
]

DEFAULT_UNKNOWN_CAP = 4096


@dataclass(frozen=True)
class JacobiSplit:
    """One block-Jacobi split of a stacked cooperative system.

    `factors[k]` is the block only operator k knows (its training matrix for
    estimation, its compound column-group channel for detection).  Dense D,
    F and b are materialized on demand and guarded by `unknown_cap`; the
    reduced iteration matrix is always available and has exactly the
    spectrum of the full J (the estimation J is a Kronecker inflation of
    it, the detection J is it).
    """

    kind: str                 # "estimation" | "detection"
    factors: tuple            # per-operator matrices
    rhs: np.ndarray           # stacked observations (KN x T or KN x L)
    num_operators: int
    lines_per_operator: int
    unknown_cap: int = DEFAULT_UNKNOWN_CAP
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def num_unknowns(self) -> int:
        K, N = self.num_operators, self.lines_per_operator
        return K * K * N * N if self.kind == "estimation" else K * N

    def _guard(self):
        if self.num_unknowns > self.unknown_cap:
            raise ValueError(
                f"{self.num_unknowns} unknowns exceed the dense cap "
                f"{self.unknown_cap}; use the reduced form")

    def reduced_matrix(self) -> np.ndarray:
        """KN x KN matrix with the same spectrum (and power norms) as J."""
        if "reduced" in self._cache:
            return self._cache["reduced"]
        K, N = self.num_operators, self.lines_per_operator
        J = np.zeros((K * N, K * N), dtype=np.complex128)
        if self.kind == "estimation":
            cross = {(k, m): np.conj(self.factors[k] @ self.factors[m].conj().T)
                     for k in range(K) for m in range(K)}
            for k in range(K):
                for m in range(K):
                    if m == k:
                        continue
                    J[k * N:(k + 1) * N, m * N:(m + 1) * N] = \
                        -np.linalg.solve(cross[(k, k)], cross[(k, m)])
        else:
            grams = [f.conj().T @ f for f in self.factors]
            for k in range(K):
                for m in range(K):
                    if m == k:
                        continue
                    J[k * N:(k + 1) * N, m * N:(m + 1) * N] = \
                        -np.linalg.solve(grams[k],
                                         self.factors[k].conj().T @ self.factors[m])
        self._cache["reduced"] = J
        return J

    def _dense_factors(self):
        """Per-operator diagonal blocks of D in the stacked coordinates."""
        K, N = self.num_operators, self.lines_per_operator
        if self.kind == "estimation":
            eye_k, eye_n = np.eye(K), np.eye(N)
            return [np.kron(np.kron(eye_k, f.T), eye_n) for f in self.factors]
        return list(self.factors)

    def dense_d(self) -> np.ndarray:
        self._guard()
        if "D" in self._cache:
            return self._cache["D"]
        parts = self._dense_factors()
        rows = sum(p.shape[0] for p in parts)
        cols = sum(p.shape[1] for p in parts)
        D = np.zeros((rows, cols), dtype=np.complex128)
        r = c = 0
        for p in parts:
            D[r:r + p.shape[0], c:c + p.shape[1]] = p
            r += p.shape[0]
            c += p.shape[1]
        self._cache["D"] = D
        return D

    def dense_a(self) -> np.ndarray:
        self._guard()
        if "A" in self._cache:
            return self._cache["A"]
        strip = np.hstack(self._dense_factors())
        self._cache["A"] = np.tile(strip, (self.num_operators, 1))
        return self._cache["A"]

    def dense_f(self) -> np.ndarray:
        return self.dense_d() - self.dense_a()

    def dense_b(self) -> np.ndarray:
        self._guard()
        if self.kind == "estimation":
            v = vectorize_observations(self.rhs, self.num_operators,
                                       self.lines_per_operator)
        else:
            v = np.atleast_2d(self.rhs)
            if v.shape[0] != self.num_operators * self.lines_per_operator:
                v = v.T
        return np.tile(v, (self.num_operators, 1))

    def iteration_matrix(self) -> np.ndarray:
        """Dense J = (D^H D)^{-1} D^H F; prefer reduced_matrix for spectra."""
        D = self.dense_d()
        F = self.dense_f()
        return np.linalg.solve(D.conj().T @ D, D.conj().T @ F)


def build_split_estimation(training: TrainingSet,
                           unknown_cap: int = DEFAULT_UNKNOWN_CAP,
                           observations: np.ndarray | None = None) -> JacobiSplit:
    """Split of the stacked training system over the operators' knowledge."""
    K, N, T = (training.num_operators, training.lines_per_operator, training.length)
    rhs = observations if observations is not None else np.zeros((K * N, T),
                                                                 dtype=np.complex128)
    return JacobiSplit(kind="estimation",
                       factors=tuple(training.operator(k) for k in range(K)),
                       rhs=np.asarray(rhs, dtype=np.complex128),
                       num_operators=K, lines_per_operator=N,
                       unknown_cap=unknown_cap)


def build_split_detection(channel: MultiOperatorChannel,
                          observation: np.ndarray | None = None,
                          unknown_cap: int = DEFAULT_UNKNOWN_CAP) -> JacobiSplit:
    """Split of the stacked detection system y = H x over the operators."""
    K, N = channel.num_operators, channel.lines_per_operator
    rhs = observation if observation is not None else np.zeros((K * N, 1),
                                                               dtype=np.complex128)
    return JacobiSplit(kind="detection",
                       factors=tuple(channel.column_group(k) for k in range(K)),
                       rhs=np.asarray(rhs, dtype=np.complex128),
                       num_operators=K, lines_per_operator=N,
                       unknown_cap=unknown_cap)


def spectral_radius_matrix(J: np.ndarray, tol: float = 1e-8,
                           max_iterations: int = 20000) -> float:
    """Largest |eigenvalue|: dense solver when small, power iteration else."""
    J = np.asarray(J)
    if J.shape[0] != J.shape[1]:
        raise ValueError("iteration matrix must be square")
    if J.shape[0] <= 2048:
        if not np.any(J):
            return 0.0
        return float(np.abs(np.linalg.eigvals(J)).max())
    rng = np.random.default_rng(0)
    x = rng.standard_normal(J.shape[0]) + 1j * rng.standard_normal(J.shape[0])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(max_iterations):
        y = J @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            return 0.0
        x = y / norm
        if abs(norm - est) <= tol * max(norm, 1.0):
            return float(norm)
        est = norm
    raise RuntimeError("power iteration did not converge")


def spectral_radius(split: JacobiSplit, tol: float = 1e-8) -> float:
    return spectral_radius_matrix(split.reduced_matrix(), tol=tol)


def predicted_error_decay(split: JacobiSplit, n: int) -> np.ndarray:
    """Geometric envelope ||J^k||_2 for k = 1..n.

    The reduced matrix shares its power norms with the full J, so the
    envelope bounds the error of the distributed iteration:
    ||e^(k)|| <= ||J^k|| ||e^(0)||.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    J = split.reduced_matrix()
    out = np.empty(n)
    P = np.eye(J.shape[0], dtype=np.complex128)
    for k in range(n):
        P = P @ J
        out[k] = np.linalg.norm(P, 2)
    return out


def vectorize_estimation_state(blocks: np.ndarray) -> np.ndarray:
    """Stack a (K, K, N, N) block estimate into the split's unknown vector.

    Operator-major: for each k, the blocks H_k1 .. H_kK, each column-major.
    """
    blocks = np.asarray(blocks)
    K = blocks.shape[0]
    cols = [blocks[k, j].flatten(order="F") for k in range(K) for j in range(K)]
    return np.concatenate(cols)[:, None]


def vectorize_observations(Y: np.ndarray, num_operators: int,
                           lines: int) -> np.ndarray:
    """Column-major vec of each operator's observation rows, stacked."""
    Y = np.atleast_2d(Y)
    parts = [Y[k * lines:(k + 1) * lines].flatten(order="F")
             for k in range(num_operators)]
    return np.concatenate(parts)[:, None]


def jacobi_recursion(split: JacobiSplit, v0: np.ndarray, n_iterations: int) -> list:
    """Iterate v <- argmin ||D v - (F v + b)|| through dense least squares.

    This is the reference recursion the distributed protocols are checked
    against; it shares no code with the node implementations.
    """
    D = split.dense_d()
    F = split.dense_f()
    b = split.dense_b()
    states = [np.asarray(v0, dtype=np.complex128)]
    for _ in range(n_iterations):
        rhs = F @ states[-1] + b
        sol, *_ = np.linalg.lstsq(D, rhs, rcond=None)
        states.append(sol)
    return states


def _max_relative_deviation(reference: list, measured: list) -> float:
    dev = 0.0
    for ref, got in zip(reference, measured):
        denom = max(np.linalg.norm(ref), 1e-300)
        dev = max(dev, float(np.linalg.norm(ref - got) / denom))
    return dev


def estimation_jacobi_deviation(training: TrainingSet, observations: np.ndarray,
                                states: list,
                                unknown_cap: int = DEFAULT_UNKNOWN_CAP) -> float:
    """Max per-iteration relative gap between an IC estimation trace and the
    explicit Jacobi recursion started from the trace's first state."""
    split = build_split_estimation(training, unknown_cap=unknown_cap,
                                   observations=observations)
    measured = [vectorize_estimation_state(s) for s in states]
    reference = jacobi_recursion(split, measured[0], len(measured) - 1)
    return _max_relative_deviation(reference[1:], measured[1:])


def detection_jacobi_deviation(channel: MultiOperatorChannel, observation: np.ndarray,
                               states: list,
                               unknown_cap: int = DEFAULT_UNKNOWN_CAP) -> float:
    """Same check for linear-mode IC detection (soft detector = identity)."""
    split = build_split_detection(channel, observation=observation,
                                  unknown_cap=unknown_cap)
    measured = [np.atleast_2d(s) for s in states]
    reference = jacobi_recursion(split, measured[0], len(measured) - 1)
    return _max_relative_deviation(reference[1:], measured[1:])

"""Channel estimation for the multi-operator link.

Four regimes: the centralized maximum-likelihood estimate of the whole
channel, data cooperation (every operator shares training and solves the
same normal equations for its receive rows), iterative interference
cooperation (operators exchange only channel-mixed residuals and
re-encoded products over the backhaul), and the no-cooperation self-block
fit that treats alien crosstalk as noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .backhaul import InterferenceMessage, MessageKind, Protocol, RoundLog, run_rounds
from .model import (
    STREAM_NOISE,
    STREAM_TRAINING,
    STREAM_TRIAL,
    MultiOperatorChannel,
    ScenarioConfig,
    substream,
)
from .training import OperatorTraining, TrainingSet, gen_training, orthogonalize

__all__ = [
    "ChannelEstimate",
    "EstimationTrace",
    "mle_centralized",
    "dc_estimate",
    "crb",
    "CrbReport",
    "ic_init",
    "EstimationNode",
    "assemble_estimates",
    "run_ic_estimation",
    "IcEstimationResult",
]


def _ls_fit(train_matrix: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Solve min_H || target - H X ||_F through a QR of X^H.

    Never forms the Gram inverse; raises on rank-deficient training.
    """
    X = np.atleast_2d(train_matrix)
    Z = np.atleast_2d(target)
    if X.shape[1] != Z.shape[1]:
        raise ValueError("training and observation lengths differ")
    q, r = np.linalg.qr(X.conj().T)  # X^H = Q R, thin
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-12 * max(diag.max(), 1.0):
        raise np.linalg.LinAlgError("rank-deficient training sequence")
    # H = Z Q R^{-H}  =>  H^H = R^{-1} Q^H Z^H
    return np.linalg.solve(r, q.conj().T @ Z.conj().T).conj().T


@dataclass(frozen=True)
class ChannelEstimate:
    """Block-structured channel estimate with per-block validity.

    grouping records which slice of the channel this estimate legitimately
    holds: "full" (centralized), "column" (operator `owner` holds the blocks
    leaving its own lines) or "row" (operator `owner` holds the blocks
    arriving at its receivers).  Asking for the other grouping raises, which
    keeps the two cooperation models from silently bleeding into each other.
    """

    blocks: np.ndarray        # (K, K, N, N)
    valid: np.ndarray         # (K, K) bool
    updated_at: np.ndarray    # (K, K) int, iteration of last update
    grouping: str = "full"
    owner: int | None = None

    @property
    def num_operators(self) -> int:
        return self.blocks.shape[0]

    @property
    def lines_per_operator(self) -> int:
        return self.blocks.shape[2]

    def block(self, i: int, j: int) -> np.ndarray:
        if not self.valid[i, j]:
            raise KeyError(f"block ({i}, {j}) is not held by this estimate")
        return self.blocks[i, j]

    @property
    def full_matrix(self) -> np.ndarray:
        if not self.valid.all():
            raise ValueError("estimate does not hold the full channel")
        return MultiOperatorChannel(blocks=self.blocks).full_matrix

    def column_group(self, k: int) -> np.ndarray:
        if self.grouping not in ("full", "column") or (
                self.grouping == "column" and k != self.owner):
            raise ValueError("column group not available from this estimate")
        if not self.valid[k, :].all():
            raise ValueError("column group incomplete")
        K, _, N, _ = self.blocks.shape
        return np.concatenate([self.blocks[k, j] for j in range(K)], axis=0)

    def row_group(self, k: int) -> np.ndarray:
        if self.grouping not in ("full", "row") or (
                self.grouping == "row" and k != self.owner):
            raise ValueError("row group not available from this estimate")
        if not self.valid[:, k].all():
            raise ValueError("row group incomplete")
        K, _, N, _ = self.blocks.shape
        return np.concatenate([self.blocks[m, k] for m in range(K)], axis=1)


def _empty_estimate(K: int, N: int, grouping: str, owner=None) -> dict:
    return dict(blocks=np.zeros((K, K, N, N), dtype=np.complex128),
                valid=np.zeros((K, K), dtype=bool),
                updated_at=np.zeros((K, K), dtype=int),
                grouping=grouping, owner=owner)


def mle_centralized(observations: np.ndarray, training: TrainingSet) -> ChannelEstimate:
    """System-wide least squares: Hhat = Y Xbar^H (Xbar Xbar^H)^{-1}."""
    X = training.stacked
    Y = np.atleast_2d(observations)
    H = _ls_fit(X, Y)
    K, N = training.num_operators, training.lines_per_operator
    est = _empty_estimate(K, N, "full")
    for i in range(K):
        for j in range(K):
            est["blocks"][i, j] = H[j * N:(j + 1) * N, i * N:(i + 1) * N]
    est["valid"][:] = True
    return ChannelEstimate(**est)


def dc_estimate(observations_k: np.ndarray, training: TrainingSet,
                operator: int) -> ChannelEstimate:
    """Data-cooperation estimate of one operator's receive rows.

    Needs the full stacked training (the DC setup shares it); returns the
    row group [H_1k ... H_Kk] held by `operator`.
    """
    G = _ls_fit(training.stacked, np.atleast_2d(observations_k))  # N x KN
    K, N = training.num_operators, training.lines_per_operator
    est = _empty_estimate(K, N, "row", owner=operator)
    for m in range(K):
        est["blocks"][m, operator] = G[:, m * N:(m + 1) * N]
        est["valid"][m, operator] = True
        est["updated_at"][m, operator] = 1
    return ChannelEstimate(**est)


@dataclass(frozen=True)
class CrbReport:
    """trace[sigma^2 (Xbar Xbar^H)^{-1}] and its per-entry average."""

    trace_bound: float
    per_entry: float


def crb(sigma2: float, training: TrainingSet) -> CrbReport:
    """Estimation variance floor; per-entry sigma^2/T for orthogonal training."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    gram = training.stacked @ training.stacked.conj().T
    try:
        inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError:
        raise np.linalg.LinAlgError("singular training Gram matrix") from None
    trace = float(sigma2 * np.trace(inv).real)
    return CrbReport(trace_bound=trace, per_entry=trace / gram.shape[0])


def ic_init(observations_k: np.ndarray, own_training: OperatorTraining) -> np.ndarray:
    """First self-block estimate, alien crosstalk treated as extra noise."""
    return _ls_fit(own_training.matrix, np.atleast_2d(observations_k))


class EstimationNode:
    """One operator's state in the interference-cooperation rounds.

    Holds only its own training and received rows.  Round 0 replays the
    bootstrap exchange (residuals carry just the initial self-block).

    round_mode picks the freshness of the self-block inside the round-r
    residual: "literal" updates the self-block first and strips it fresh,
    which is the published algorithm and converges in roughly half the
    rounds; "jacobi" strips the previous iteration's self-block, making
    the whole sweep exactly one block-Jacobi step on the stacked system
    (the form the convergence analysis and the mechanical-equivalence
    checks are stated for).  Both share the same fixed point, and under
    orthogonal training they coincide round by round.
    """

    def __init__(self, operator: int, num_operators: int,
                 observations_k: np.ndarray, own_training: OperatorTraining,
                 round_mode: str = "literal"):
        if own_training.operator != operator:
            raise ValueError("training handle belongs to another operator")
        if round_mode not in ("literal", "jacobi"):
            raise ValueError(f"unknown round_mode {round_mode!r}")
        self.operator_id = operator
        self.K = num_operators
        self.round_mode = round_mode
        self.Y = np.atleast_2d(np.asarray(observations_k, dtype=np.complex128))
        self.X = np.asarray(own_training.matrix, dtype=np.complex128)
        self.N = self.X.shape[0]
        self.peers = [m for m in range(num_operators) if m != operator]
        self.self_block = ic_init(self.Y, own_training)
        self.alien_blocks = {m: np.zeros((self.N, self.N), dtype=np.complex128)
                             for m in self.peers}
        self.products_in: dict = {}
        self._residuals_in: dict = {}
        self._self_done = False
        self.iteration = 0

    def _check_complete(self, inbox: dict, what: str) -> None:
        missing = [m for m in self.peers if m not in inbox]
        if missing:
            raise RuntimeError(f"missing {what} from operators {missing}")

    def _updated_self(self) -> np.ndarray:
        stripped = self.Y.copy()
        for m in self.peers:
            stripped -= self.products_in[m]
        return _ls_fit(self.X, stripped)

    def phase1_messages(self, round_index: int):
        if round_index > 0 and self.round_mode == "literal":
            self.self_block = self._updated_self()
            self._self_done = True
        else:
            self._self_done = round_index == 0
        base = self.Y - self.self_block @ self.X
        out = []
        for m in self.peers:
            resid = base.copy()
            if round_index > 0:
                for p in self.peers:
                    if p != m:
                        resid -= self.products_in[p]
            out.append(InterferenceMessage(round=round_index, sender=self.operator_id,
                                           receiver=m, kind=MessageKind.EST_RESIDUAL,
                                           payload=resid))
        return out

    def receive_phase1(self, inbox):
        self._residuals_in = {m.sender: m.payload for m in inbox}
        self._check_complete(self._residuals_in, "residuals")

    def phase2_messages(self, round_index: int):
        if not self._self_done:
            self.self_block = self._updated_self()
            self._self_done = True
        self.alien_blocks = {m: _ls_fit(self.X, self._residuals_in[m])
                             for m in self.peers}
        return [InterferenceMessage(round=round_index, sender=self.operator_id,
                                    receiver=m, kind=MessageKind.EST_REENCODED,
                                    payload=self.alien_blocks[m] @ self.X)
                for m in self.peers]

    def receive_phase2(self, inbox):
        self.products_in = {m.sender: m.payload for m in inbox}
        self._check_complete(self.products_in, "re-encoded products")

    def end_round(self, round_index: int):
        self.iteration = round_index + 1

    def estimate(self) -> ChannelEstimate:
        """Column group held by this operator: H_k = [H_k1 ... H_kK]."""
        est = _empty_estimate(self.K, self.N, "column", owner=self.operator_id)
        est["blocks"][self.operator_id, self.operator_id] = self.self_block
        for m in self.peers:
            est["blocks"][self.operator_id, m] = self.alien_blocks[m]
        est["valid"][self.operator_id, :] = True
        est["updated_at"][self.operator_id, :] = self.iteration
        return ChannelEstimate(**est)


def assemble_estimates(nodes) -> ChannelEstimate:
    """Merge every operator's column group into one full-channel estimate."""
    K, N = nodes[0].K, nodes[0].N
    est = _empty_estimate(K, N, "full")
    for node in nodes:
        k = node.operator_id
        est["blocks"][k, k] = node.self_block
        for m, blk in node.alien_blocks.items():
            est["blocks"][k, m] = blk
        est["updated_at"][k, :] = node.iteration
    est["valid"][:] = True
    return ChannelEstimate(**est)


@dataclass
class EstimationTrace:
    """Per-iteration record of the cooperative estimation run."""

    iterations: list = field(default_factory=list)
    mse_self_db: list = field(default_factory=list)
    mse_alien_db: list = field(default_factory=list)
    crb_db: float = metrics.DB_FLOOR
    residual: list = field(default_factory=list)
    msgs_sent: list = field(default_factory=list)

    def csv_rows(self):
        header = ["iteration", "mse_self_db", "mse_alien_db", "crb_db",
                  "residual", "msgs_sent"]
        rows = [
            [self.iterations[i], self.mse_self_db[i], self.mse_alien_db[i],
             self.crb_db, self.residual[i], self.msgs_sent[i]]
            for i in range(len(self.iterations))
        ]
        return header, rows


@dataclass
class IcEstimationResult:
    estimates: list                 # per-operator column-group ChannelEstimate
    assembled: ChannelEstimate      # all column groups merged (harness view)
    trace: EstimationTrace
    log: RoundLog
    training: TrainingSet
    observations: np.ndarray
    states: list | None = None      # optional per-iteration assembled blocks


def normalized_crb_db(config: ScenarioConfig, alpha: float | None = None,
                      sigma2: float | None = None) -> float:
    """Per-entry CRB normalized by the ensemble self-block entry power."""
    a = config.alpha if alpha is None else alpha
    s2 = config.sigma2 if sigma2 is None else sigma2
    N, T = config.lines_per_operator, config.training_length
    per_entry = s2 / T
    self_entry_power = (1.0 + (N - 1) * a * a) / N
    return 10.0 * np.log10(per_entry / self_entry_power)


def run_ic_estimation(config: ScenarioConfig, channel: MultiOperatorChannel, *,
                      training: TrainingSet | None = None,
                      orthogonal_training: bool = False,
                      observations: np.ndarray | None = None,
                      n_iterations: int | None = None,
                      early_stop_tol: float | None = None,
                      record_states: bool = False,
                      round_mode: str = "literal",
                      trial: int | None = None) -> IcEstimationResult:
    """Run the full interference-cooperation channel estimation protocol.

    Returns each operator's column-group estimate, the assembled full
    estimate, the iteration trace and the backhaul log.  Deterministic in
    (config.seed, trial).
    """
    K, N = config.num_operators, config.lines_per_operator
    n_iterations = config.max_iterations if n_iterations is None else n_iterations
    tkey = (STREAM_TRIAL, trial) if trial is not None else ()
    if training is None:
        training = gen_training(config, substream(config.seed, *tkey, STREAM_TRAINING))
        if orthogonal_training:
            training = orthogonalize(training)
    if observations is None:
        noise_rng = substream(config.seed, *tkey, STREAM_NOISE)
        W = np.zeros((K * N, config.training_length), dtype=np.complex128)
        if config.sigma2 > 0:
            scale = np.sqrt(config.sigma2 / 2.0)
            W = scale * (noise_rng.standard_normal(W.shape)
                         + 1j * noise_rng.standard_normal(W.shape))
        observations = channel.full_matrix @ training.stacked + W

    nodes = [EstimationNode(k, K, observations[k * N:(k + 1) * N],
                            training.handle(k), round_mode=round_mode)
             for k in range(K)]
    log = RoundLog(num_operators=K)
    trace = EstimationTrace(crb_db=normalized_crb_db(config))
    states = [] if record_states else None
    X_full = training.stacked
    prev_blocks = None

    for r in range(n_iterations):
        run_rounds(nodes, Protocol.IC_ESTIMATION, 1, log=log)
        assembled = assemble_estimates(nodes)
        mse_self, mse_alien = metrics.normalized_mse(
            assembled, channel, alpha=channel.alpha, denominator="ensemble")
        trace.iterations.append(r + 1)
        trace.mse_self_db.append(mse_self)
        trace.mse_alien_db.append(mse_alien)
        trace.residual.append(float(np.linalg.norm(
            observations - assembled.full_matrix @ X_full)))
        trace.msgs_sent.append(sum(log.sent_scalars.get((k, r), 0) for k in range(K)))
        if record_states:
            states.append(assembled.blocks.copy())
        if early_stop_tol is not None and prev_blocks is not None:
            change = np.abs(assembled.blocks - prev_blocks).max()
            scale = max(np.abs(assembled.blocks).max(), 1.0)
            if change <= early_stop_tol * scale:
                break
        prev_blocks = assembled.blocks.copy()

    return IcEstimationResult(
        estimates=[node.estimate() for node in nodes],
        assembled=assemble_estimates(nodes),
        trace=trace, log=log, training=training,
        observations=observations, states=states)

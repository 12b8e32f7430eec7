"""Multi-user detection for the multi-operator link.

Implements the posterior-mean soft symbol estimator for separable QAM, the
QR-based matrix decision-feedback equalizer, and the four detection
regimes: centralized ZF/MMSE, data-cooperation MUD (operators trade decoded
symbols), interference-cooperation MUD (operators trade stripped residuals
and re-mixed products only) and the no-cooperation single-operator bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .backhaul import InterferenceMessage, MessageKind, Protocol, RoundLog, run_rounds
from .model import Constellation, MultiOperatorChannel, ReceivedFrame, SymbolFrame

__all__ = [
    "soft_estimate",
    "SoftDetector",
    "DfeFactorization",
    "MatrixDfe",
    "MudOutput",
    "zf_centralized",
    "mmse_centralized",
    "centralized_em",
    "dc_loss",
    "init_variance_dc",
    "update_sigma_n",
    "decision_noise_power",
    "dc_mud_iterate",
    "no_coop_mud",
    "IcMudNode",
    "DcMudNode",
    "DetectionTrace",
    "MudRunResult",
    "run_ic_mud",
    "run_dc_mud",
]


def soft_estimate(y_component, sigma_n2: float, component_alphabet) -> np.ndarray:
    """Posterior-mean estimate of one real symbol component in Gaussian noise.

    For y = a + z with a uniform over the alphabet and z ~ N(0, sigma_n2),
    returns E[a | y] evaluated in closed form from the Gaussian mixture.
    Equals y + sigma_n2 * d/dy log p(y) and reduces to tanh(y / sigma_n2)
    for the {-1, +1} alphabet.
    """
    levels = np.asarray(component_alphabet, dtype=float).ravel()
    if levels.size == 0:
        raise ValueError("component alphabet is empty")
    if sigma_n2 <= 0:
        raise ValueError("sigma_n2 must be > 0")
    y = np.asarray(y_component, dtype=float)
    scalar = y.ndim == 0
    if levels.size == 1:
        out = np.full_like(np.atleast_1d(y), levels[0])
        return float(out[0]) if scalar else out.reshape(y.shape)
    logw = -((y[..., None] - levels) ** 2) / (2.0 * sigma_n2)
    logw -= logw.max(axis=-1, keepdims=True)
    w = np.exp(logw)
    w /= w.sum(axis=-1, keepdims=True)
    out = w @ levels
    return float(out) if scalar else out


def _slice_component(y: np.ndarray, levels: np.ndarray) -> np.ndarray:
    """Nearest level; exact midpoint ties pick the smaller |level|, then the
    smaller value."""
    levels = np.asarray(levels, dtype=float)
    if levels.size == 1:
        return np.full_like(y, levels[0])
    mids = (levels[:-1] + levels[1:]) / 2.0
    lo = levels[np.searchsorted(mids, y, side="left")]
    hi = levels[np.searchsorted(mids, y, side="right")]
    tie_hi = (np.abs(hi), hi)
    tie_lo = (np.abs(lo), lo)
    pick_hi = (tie_hi[0] < tie_lo[0]) | ((tie_hi[0] == tie_lo[0])
                                         & (tie_hi[1] < tie_lo[1]))
    return np.where(pick_hi, hi, lo)


@dataclass
class SoftDetector:
    """Symbol-wise MMSE estimator g for a separable QAM alphabet.

    sigma_n2 is the current decision-noise variance of the complex decision
    variable; each I/Q component sees half of it.
    """

    constellation: Constellation
    sigma_n2: float = 1.0

    def estimate(self, y, sigma_n2: float | None = None) -> np.ndarray:
        s2 = self.sigma_n2 if sigma_n2 is None else sigma_n2
        if s2 <= 0:
            raise ValueError("sigma_n2 must be > 0")
        y = np.asarray(y, dtype=np.complex128)
        re = soft_estimate(y.real, s2 / 2.0, self.constellation.component_alphabet)
        im = soft_estimate(y.imag, s2 / 2.0, self.constellation.component_alphabet_imag)
        return re + 1j * im

    def slice(self, y) -> np.ndarray:
        """Nearest-symbol decision; ties go to the smaller-magnitude symbol
        (then smaller real, then smaller imaginary part).

        Separable alphabets are sliced per component, so the cost is the
        number of levels, not the constellation size.
        """
        y = np.asarray(y, dtype=np.complex128)
        re = _slice_component(y.real, self.constellation.component_alphabet)
        im = _slice_component(y.imag, self.constellation.component_alphabet_imag)
        return re + 1j * im

    def decision(self, mode: str):
        """Per-layer decision function u, sigma2 -> symbol for the DFE loop."""
        if mode == "soft":
            return lambda u, s2: self.estimate(u, s2)
        if mode == "hard":
            return lambda u, s2: self.slice(u)
        if mode == "linear":
            return lambda u, s2: u
        raise ValueError(f"unknown decision mode {mode!r}")


@dataclass(frozen=True)
class DfeFactorization:
    """QR pair of a (possibly augmented) tall channel, positive real diagonal."""

    q: np.ndarray
    r: np.ndarray

    @classmethod
    def factorize(cls, matrix: np.ndarray) -> "DfeFactorization":
        q, r = np.linalg.qr(np.asarray(matrix, dtype=np.complex128))
        d = np.diag(r)
        mag = np.abs(d)
        if mag.min() <= 1e-12 * max(mag.max(), 1.0):
            raise np.linalg.LinAlgError("channel factorization has a zero pivot")
        phase = d / mag
        return cls(q=q * phase[None, :], r=r * phase.conj()[:, None])


@dataclass(frozen=True)
class MatrixDfe:
    """Matrix decision-feedback equalizer from a QR factorization.

    For the MMSE variant the factorization is of the channel augmented with
    sqrt(sigma2) I rows; only the signal rows of Q touch the observation.
    The per-layer decision-noise gain is 1/r_ii^2.
    """

    factorization: DfeFactorization
    q_signal: np.ndarray
    noise_gain: np.ndarray

    @classmethod
    def zf(cls, channel: np.ndarray) -> "MatrixDfe":
        fact = DfeFactorization.factorize(channel)
        gain = 1.0 / np.abs(np.diag(fact.r)) ** 2
        return cls(factorization=fact, q_signal=fact.q, noise_gain=gain)

    @classmethod
    def mmse(cls, channel: np.ndarray, sigma2: float) -> "MatrixDfe":
        H = np.asarray(channel, dtype=np.complex128)
        if sigma2 < 0:
            raise ValueError("sigma2 must be >= 0")
        aug = np.vstack([H, np.sqrt(sigma2) * np.eye(H.shape[1], dtype=np.complex128)])
        fact = DfeFactorization.factorize(aug)
        gain = 1.0 / np.abs(np.diag(fact.r)) ** 2
        return cls(factorization=fact, q_signal=fact.q[:H.shape[0]], noise_gain=gain)

    def detect(self, observation: np.ndarray, decision, sigma_n2: float):
        """Layered back-substitution with a per-layer decision in the loop.

        Returns (pre-decision soft values u, decided symbols).  Layer i sees
        decision noise sigma_n2 / r_ii^2, which is what the soft estimator
        is evaluated with.
        """
        z = np.atleast_2d(np.asarray(observation, dtype=np.complex128))
        r = self.factorization.r
        n = r.shape[1]
        zt = self.q_signal.conj().T @ z
        u = np.zeros((n, z.shape[1]), dtype=np.complex128)
        xhat = np.zeros_like(u)
        for i in range(n - 1, -1, -1):
            acc = zt[i]
            if i + 1 < n:
                acc = acc - r[i, i + 1:] @ xhat[i + 1:]
            u[i] = acc / r[i, i]
            xhat[i] = decision(u[i], sigma_n2 * self.noise_gain[i])
        return u, xhat


@dataclass(frozen=True)
class MudOutput:
    """Pre-decision soft values and the corresponding symbol decisions."""

    soft: np.ndarray
    hard: np.ndarray


def _build_dfe(channel: np.ndarray, criterion: str, sigma_n2: float) -> MatrixDfe:
    if criterion == "zf":
        return MatrixDfe.zf(channel)
    if criterion == "mmse":
        return MatrixDfe.mmse(channel, sigma_n2)
    raise ValueError(f"unknown criterion {criterion!r}")


def zf_centralized(y, H, constellation: Constellation,
                   cond_limit: float = 1e12) -> MudOutput:
    """Joint zero-forcing detection of all KN streams: xhat = H^{-1} y."""
    H = np.asarray(H, dtype=np.complex128)
    if H.shape[0] != H.shape[1]:
        raise ValueError("centralized ZF needs the square full channel")
    if np.linalg.cond(H) > cond_limit:
        raise np.linalg.LinAlgError("channel too ill-conditioned for ZF")
    y2 = np.atleast_2d(np.asarray(y, dtype=np.complex128))
    if y2.shape[0] != H.shape[0]:
        y2 = y2.T
    soft = np.linalg.solve(H, y2)
    det = SoftDetector(constellation)
    return MudOutput(soft=soft, hard=det.slice(soft))


def mmse_centralized(y, H, sigma2: float, constellation: Constellation,
                     decisions: str = "soft") -> MudOutput:
    """Joint MMSE matrix-DFE over the full channel (BLAST-style QR of the
    sigma-augmented channel); approaches the ZF solution as sigma2 -> 0."""
    H = np.asarray(H, dtype=np.complex128)
    y2 = np.atleast_2d(np.asarray(y, dtype=np.complex128))
    if y2.shape[0] != H.shape[0]:
        y2 = y2.T
    det = SoftDetector(constellation)
    dfe = MatrixDfe.mmse(H, sigma2)
    u, _ = dfe.detect(y2, det.decision(decisions), max(sigma2, 1e-300))
    return MudOutput(soft=u, hard=det.slice(u))


def centralized_em(y, H, sigma2: float, constellation: Constellation,
                   iterations: int = 1, decisions: str = "soft") -> MudOutput:
    """Centralized reference with the same refinement budget as the
    cooperative schemes.

    Pass 1 is the joint MMSE matrix-DFE; later passes cancel every stream
    with the current decisions and matched-filter each stream against its
    own column, which attains the per-stream diversity bound once the
    decisions settle.  With iterations=1 this is exactly mmse_centralized.
    """
    H = np.asarray(H, dtype=np.complex128)
    y2 = np.atleast_2d(np.asarray(y, dtype=np.complex128))
    if y2.shape[0] != H.shape[0]:
        y2 = y2.T
    det = SoftDetector(constellation)
    first = mmse_centralized(y2, H, sigma2, constellation, decisions=decisions)
    if iterations <= 1:
        return first
    decision = det.decision(decisions)
    gains = np.sum(np.abs(H) ** 2, axis=0).real
    u = first.soft
    sigma_n2 = update_sigma_n(y2 - H @ det.slice(u), sigma2)
    x = np.empty_like(u)
    for p in range(H.shape[1]):
        x[p] = decision(u[p], sigma_n2 / gains[p])
    for _ in range(iterations - 1):
        residual = y2 - H @ x
        sigma_n2 = update_sigma_n(residual, sigma2)
        u = (H.conj().T @ residual) / gains[:, None] + x
        for p in range(H.shape[1]):
            x[p] = decision(u[p], sigma_n2 / gains[p])
    return MudOutput(soft=u, hard=det.slice(u))


def dc_loss(N: int, K: int, alpha: float) -> float:
    """Decision-noise degradation of data cooperation vs centralized MUD."""
    if N < 1 or K < 1:
        raise ValueError("N and K must be >= 1")
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    a2 = alpha * alpha
    return 1.0 + N * (K - 1) * a2 / (1.0 + (N - 1) * a2)


def init_variance_dc(N: int, K: int, alpha: float, sigma2: float) -> float:
    """First-iteration decision-noise variance with alien crosstalk treated
    as extra AWGN: ((K-1) N alpha^2 + sigma^2) / (1 + (N-1) alpha^2)."""
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    a2 = alpha * alpha
    return ((K - 1) * N * a2 + sigma2) / (1.0 + (N - 1) * a2)


def update_sigma_n(residual, sigma2: float, floor_factor: float = 1e-6) -> float:
    """Residual-power estimate of the decision-noise variance.

    sigma_n^2 = max(mean |residual|^2, floor) with floor = 1e-6 sigma2.  No
    monotonicity is imposed; the variance may rise when decisions worsen.
    """
    power = float(np.mean(np.abs(np.asarray(residual)) ** 2))
    return max(power, floor_factor * sigma2)


def decision_noise_power(observation, channel_columns, decisions) -> float:
    """Noise power at the fully-cancelled per-stream decision variable.

    For each stream p, cancels every stream with the supplied decisions,
    matched-filters the remainder onto column p and measures the error
    power against the decision.  With correct decisions this is the
    quantity the cooperative-loss analysis bounds: sigma^2 / ||h_p||^2.
    """
    H = np.asarray(channel_columns, dtype=np.complex128)
    y = np.atleast_2d(np.asarray(observation, dtype=np.complex128))
    x = np.atleast_2d(np.asarray(decisions, dtype=np.complex128))
    residual = y - H @ x
    total = 0.0
    for p in range(H.shape[1]):
        h = H[:, p]
        u = (h.conj() @ (residual + np.outer(h, x[p]))) / np.real(h.conj() @ h)
        total += float(np.mean(np.abs(u - x[p]) ** 2))
    return total / H.shape[1]


def dc_mud_iterate(y_k, blocks_into_k: dict, self_block: np.ndarray,
                   inbound_symbols: dict, detector: SoftDetector, sigma_n2: float,
                   criterion: str = "mmse", decisions: str = "soft") -> MudOutput:
    """One data-cooperation refinement at operator k.

    Cancels alien crosstalk with the peers' decoded symbols, then runs the
    matrix DFE on the local N x N self block.
    """
    y = np.atleast_2d(np.asarray(y_k, dtype=np.complex128))
    cancelled = y.copy()
    for m, H_mk in blocks_into_k.items():
        if m not in inbound_symbols:
            raise RuntimeError(f"missing decoded symbols from operator {m}")
        cancelled -= H_mk @ np.atleast_2d(inbound_symbols[m])
    dfe = _build_dfe(self_block, criterion, sigma_n2)
    u, xhat = dfe.detect(cancelled, detector.decision(decisions), sigma_n2)
    return MudOutput(soft=u, hard=xhat)


def no_coop_mud(y_k, H_kk, alpha: float, K: int, N: int, sigma2: float,
                constellation: Constellation, decisions: str = "soft",
                criterion: str = "mmse") -> MudOutput:
    """Local vectoring only: alien crosstalk is lumped into the noise."""
    sigma_eff = (K - 1) * N * alpha * alpha + sigma2
    det = SoftDetector(constellation)
    dfe = _build_dfe(np.asarray(H_kk, dtype=np.complex128), criterion, sigma_eff)
    u, _ = dfe.detect(np.atleast_2d(np.asarray(y_k, dtype=np.complex128)),
                      det.decision(decisions), sigma_eff)
    return MudOutput(soft=u, hard=det.slice(u))


class IcMudNode:
    """One operator's state in interference-cooperation MUD rounds.

    Holds its own observation rows and the compound column-group channel
    H_k leaving its lines.  Every outbound payload is either a re-mixed
    product H_km x_k or a stripped residual; raw symbol vectors never leave
    the node.
    """

    def __init__(self, operator: int, num_operators: int, y_k,
                 column_group: np.ndarray, constellation: Constellation,
                 sigma2: float, init_sigma_n2: float,
                 decisions: str = "soft", criterion: str = "mmse"):
        self.operator_id = operator
        self.K = num_operators
        self.y = np.atleast_2d(np.asarray(y_k, dtype=np.complex128))
        self.Hk = np.asarray(column_group, dtype=np.complex128)
        self.N = self.Hk.shape[1]
        if self.Hk.shape[0] != self.K * self.N:
            raise ValueError("column group must be KN x N")
        self.blocks = {j: self.Hk[j * self.N:(j + 1) * self.N] for j in range(self.K)}
        self.peers = [m for m in range(num_operators) if m != operator]
        self.detector = SoftDetector(constellation)
        self.sigma2 = sigma2
        self.sigma_n2 = init_sigma_n2
        self.decisions = decisions
        self.criterion = criterion
        self.x = np.zeros((self.N, self.y.shape[1]), dtype=np.complex128)
        self.u = np.zeros_like(self.x)
        self.products_in: dict = {}
        self._stripped_in: dict = {}
        self.iteration = 0

    def _detect(self, channel: np.ndarray, z: np.ndarray) -> None:
        dfe = _build_dfe(channel, self.criterion, self.sigma_n2)
        self.u, self.x = dfe.detect(z, self.detector.decision(self.decisions),
                                    self.sigma_n2)

    def initialize(self) -> None:
        """Iteration 1: detect from the local rows only (no exchange yet)."""
        own = self.blocks[self.operator_id]
        self._detect(own, self.y)
        self.sigma_n2 = update_sigma_n(self.y - own @ self.x, self.sigma2)
        self.iteration = 1

    def phase1_messages(self, round_index: int):
        return [InterferenceMessage(round=round_index, sender=self.operator_id,
                                    receiver=m, kind=MessageKind.MUD_REMIXED,
                                    payload=self.blocks[m] @ self.x)
                for m in self.peers]

    def receive_phase1(self, inbox):
        self.products_in = {m.sender: m.payload for m in inbox}
        missing = [m for m in self.peers if m not in self.products_in]
        if missing:
            raise RuntimeError(f"missing re-mixed products from {missing}")

    def phase2_messages(self, round_index: int):
        own = self.blocks[self.operator_id] @ self.x
        out = []
        for m in self.peers:
            stripped = self.y - own
            for p in self.peers:
                if p != m:
                    stripped = stripped - self.products_in[p]
            out.append(InterferenceMessage(round=round_index, sender=self.operator_id,
                                           receiver=m, kind=MessageKind.MUD_STRIPPED,
                                           payload=stripped))
        return out

    def receive_phase2(self, inbox):
        self._stripped_in = {m.sender: m.payload for m in inbox}
        missing = [m for m in self.peers if m not in self._stripped_in]
        if missing:
            raise RuntimeError(f"missing stripped residuals from {missing}")

    def end_round(self, round_index: int):
        L = self.y.shape[1]
        z = np.zeros((self.K * self.N, L), dtype=np.complex128)
        own_rows = self.y.copy()
        for m in self.peers:
            own_rows -= self.products_in[m]
        z[self.operator_id * self.N:(self.operator_id + 1) * self.N] = own_rows
        for m in self.peers:
            z[m * self.N:(m + 1) * self.N] = self._stripped_in[m]
        self._detect(self.Hk, z)
        self.sigma_n2 = update_sigma_n(z - self.Hk @ self.x, self.sigma2)
        self.iteration = round_index + 2


class DcMudNode:
    """One operator's state in data-cooperation MUD rounds.

    Knows the row-group channel into its receivers and broadcasts its
    decoded symbols each round; by design this baseline exposes them.
    """

    def __init__(self, operator: int, num_operators: int, y_k,
                 row_group: np.ndarray, constellation: Constellation,
                 sigma2: float, init_sigma_n2: float,
                 decisions: str = "soft", criterion: str = "mmse"):
        self.operator_id = operator
        self.K = num_operators
        self.y = np.atleast_2d(np.asarray(y_k, dtype=np.complex128))
        G = np.asarray(row_group, dtype=np.complex128)
        self.N = G.shape[0]
        if G.shape[1] != self.K * self.N:
            raise ValueError("row group must be N x KN")
        self.blocks_into = {m: G[:, m * self.N:(m + 1) * self.N]
                            for m in range(self.K)}
        self.peers = [m for m in range(num_operators) if m != operator]
        self.detector = SoftDetector(constellation)
        self.sigma2 = sigma2
        self.sigma_n2 = init_sigma_n2
        self.decisions = decisions
        self.criterion = criterion
        self.x = np.zeros((self.N, self.y.shape[1]), dtype=np.complex128)
        self.u = np.zeros_like(self.x)
        self._symbols_in: dict = {}
        self.iteration = 0

    def initialize(self) -> None:
        dfe = _build_dfe(self.blocks_into[self.operator_id], self.criterion,
                         self.sigma_n2)
        self.u, self.x = dfe.detect(self.y, self.detector.decision(self.decisions),
                                    self.sigma_n2)
        self.sigma_n2 = update_sigma_n(
            self.y - self.blocks_into[self.operator_id] @ self.x, self.sigma2)
        self.iteration = 1

    def phase1_messages(self, round_index: int):
        return [InterferenceMessage(round=round_index, sender=self.operator_id,
                                    receiver=m, kind=MessageKind.DC_SYMBOLS,
                                    payload=self.x)
                for m in self.peers]

    def receive_phase1(self, inbox):
        self._symbols_in = {m.sender: m.payload for m in inbox}
        missing = [m for m in self.peers if m not in self._symbols_in]
        if missing:
            raise RuntimeError(f"missing decoded symbols from {missing}")

    def phase2_messages(self, round_index: int):
        return []

    def receive_phase2(self, inbox):
        pass

    def end_round(self, round_index: int):
        out = dc_mud_iterate(
            self.y,
            {m: self.blocks_into[m] for m in self.peers},
            self.blocks_into[self.operator_id],
            self._symbols_in, self.detector, self.sigma_n2,
            criterion=self.criterion, decisions=self.decisions)
        self.u, self.x = out.soft, out.hard
        self.sigma_n2 = update_sigma_n(
            self.y - sum(self.blocks_into[m] @ np.atleast_2d(self._symbols_in[m])
                         for m in self.peers)
            - self.blocks_into[self.operator_id] @ self.x, self.sigma2)
        self.iteration = round_index + 2


@dataclass
class DetectionTrace:
    """Per-iteration record of a cooperative detection run."""

    iterations: list = field(default_factory=list)
    snr_d_db: list = field(default_factory=list)
    symbol_errors: list = field(default_factory=list)
    total_symbols: list = field(default_factory=list)
    sigma_n2: list = field(default_factory=list)
    msgs_sent: list = field(default_factory=list)

    def csv_rows(self):
        header = ["iteration", "snr_d_db", "ser", "sigma_n2", "msgs_sent"]
        rows = []
        for i in range(len(self.iterations)):
            total = self.total_symbols[i]
            ser = self.symbol_errors[i] / total if total else float("nan")
            rows.append([self.iterations[i], self.snr_d_db[i], ser,
                         self.sigma_n2[i], self.msgs_sent[i]])
        return header, rows


@dataclass
class MudRunResult:
    outputs: list            # per-operator MudOutput at the final iteration
    trace: DetectionTrace
    log: RoundLog
    states: list | None = None   # optional per-iteration stacked soft symbols


def _record_iteration(trace: DetectionTrace, nodes, truth: SymbolFrame | None,
                      detector: SoftDetector, iteration: int, msgs: int) -> None:
    trace.iterations.append(iteration)
    trace.sigma_n2.append(float(np.mean([n.sigma_n2 for n in nodes])))
    trace.msgs_sent.append(msgs)
    if truth is None:
        trace.snr_d_db.append(float("nan"))
        trace.symbol_errors.append(0)
        trace.total_symbols.append(0)
        return
    u = np.concatenate([n.u for n in nodes], axis=0)
    x_true = truth.stacked
    trace.snr_d_db.append(metrics.snr_decision(u, x_true))
    sliced = detector.slice(u)
    trace.symbol_errors.append(int(np.count_nonzero(sliced != x_true)))
    trace.total_symbols.append(int(x_true.size))


def _run_mud(nodes, protocol: Protocol, iterations: int, truth: SymbolFrame | None,
             constellation: Constellation, record_states: bool) -> MudRunResult:
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    detector = SoftDetector(constellation)
    trace = DetectionTrace()
    log = RoundLog(num_operators=len(nodes))
    states = [] if record_states else None
    for node in nodes:
        node.initialize()
    _record_iteration(trace, nodes, truth, detector, 1, 0)
    if record_states:
        states.append(np.concatenate([n.x for n in nodes], axis=0))

    def hook(r, nodes_, log_):
        msgs = sum(log_.sent_scalars.get((n.operator_id, r), 0) for n in nodes_)
        _record_iteration(trace, nodes_, truth, detector, r + 2, msgs)
        if record_states:
            states.append(np.concatenate([n.x for n in nodes_], axis=0))

    if iterations > 1:
        run_rounds(nodes, protocol, iterations - 1, log=log, round_hook=hook)
    outputs = [MudOutput(soft=n.u, hard=detector.slice(n.u)) for n in nodes]
    return MudRunResult(outputs=outputs, trace=trace, log=log, states=states)


def run_ic_mud(channel: MultiOperatorChannel, received: ReceivedFrame,
               constellation: Constellation, sigma2: float, *,
               iterations: int, decisions: str = "soft", criterion: str = "mmse",
               true_symbols: SymbolFrame | None = None,
               column_groups: list | None = None,
               init_sigma_n2: float | None = None,
               record_states: bool = False) -> MudRunResult:
    """Interference-cooperation MUD over `iterations` detection passes.

    Pass `column_groups` (e.g. from IC channel estimation) to detect with
    estimated channels; defaults to the true ones.
    """
    K, N = channel.num_operators, channel.lines_per_operator
    if column_groups is None:
        column_groups = [channel.column_group(k) for k in range(K)]
    if init_sigma_n2 is None:
        # working sigma_n2 is per observation entry; the first pass sees the
        # whole alien power on top of the AWGN
        init_sigma_n2 = (K - 1) * N * channel.alpha ** 2 + sigma2
    crit = "zf" if decisions == "linear" else criterion
    nodes = [IcMudNode(k, K, received.operator(k), column_groups[k], constellation,
                       sigma2, init_sigma_n2, decisions=decisions, criterion=crit)
             for k in range(K)]
    return _run_mud(nodes, Protocol.IC_MUD, iterations, true_symbols,
                    constellation, record_states)


def run_dc_mud(channel: MultiOperatorChannel, received: ReceivedFrame,
               constellation: Constellation, sigma2: float, *,
               iterations: int, decisions: str = "soft", criterion: str = "mmse",
               true_symbols: SymbolFrame | None = None,
               row_groups: list | None = None,
               init_sigma_n2: float | None = None,
               record_states: bool = False) -> MudRunResult:
    """Data-cooperation MUD baseline (decoded symbols cross the backhaul)."""
    K, N = channel.num_operators, channel.lines_per_operator
    if row_groups is None:
        row_groups = [channel.row_group(k) for k in range(K)]
    if init_sigma_n2 is None:
        init_sigma_n2 = (K - 1) * N * channel.alpha ** 2 + sigma2
    nodes = [DcMudNode(k, K, received.operator(k), row_groups[k], constellation,
                       sigma2, init_sigma_n2, decisions=decisions, criterion=criterion)
             for k in range(K)]
    return _run_mud(nodes, Protocol.DC_MUD, iterations, true_symbols,
                    constellation, record_states)

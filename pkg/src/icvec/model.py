"""Core domain model for the multi-operator vectored DSL link.

K service providers (SPs) share one cable binder, each driving N lines on
every tone.  The per-tone system is y = H x + w with a KN x KN channel H
whose direct paths have unit amplitude and whose crosstalk entries are
complex Gaussian with amplitude coupling alpha.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Constellation",
    "ScenarioConfig",
    "AlphaProfile",
    "MultiOperatorChannel",
    "SymbolFrame",
    "ReceivedFrame",
    "substream",
    "synth_channel",
    "transmit",
    "draw_symbols",
    "STREAM_CHANNEL",
    "STREAM_TRAINING",
    "STREAM_SYMBOLS",
    "STREAM_NOISE",
    "STREAM_TRIAL",
    "STREAM_TONE",
]

# Fixed sub-stream labels.  Every random draw in the artifact comes from
# substream(seed, label, ...) so parallel trials/tones are order-independent.
STREAM_CHANNEL = 0
STREAM_TRAINING = 1
STREAM_SYMBOLS = 2
STREAM_NOISE = 3
STREAM_TRIAL = 4
STREAM_TONE = 5


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for a (seed, key...) path.

    Uses SeedSequence spawn keys, so the generator for one key never depends
    on whether (or in which order) other keys were consumed.
    """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


class Constellation(enum.Enum):
    """Supported square QAM alphabets, normalized to unit average power."""

    BPSK = "bpsk"
    QPSK = "qpsk"
    QAM16 = "qam16"
    QAM64 = "qam64"
    QAM256 = "qam256"
    QAM4096 = "qam4096"

    @property
    def size(self) -> int:
        return {"bpsk": 2, "qpsk": 4, "qam16": 16, "qam64": 64,
                "qam256": 256, "qam4096": 4096}[self.value]

    @property
    def bits_per_symbol(self) -> int:
        return int(np.log2(self.size))

    @property
    def points(self) -> np.ndarray:
        """The complex alphabet, average power exactly 1."""
        if self is Constellation.BPSK:
            return np.array([-1.0 + 0.0j, 1.0 + 0.0j])
        side = int(round(np.sqrt(self.size)))
        levels = self._component(side)
        re, im = np.meshgrid(levels, levels, indexing="ij")
        return (re + 1j * im).ravel()

    @property
    def component_alphabet(self) -> np.ndarray:
        """Real levels of one I/Q component (scaled like `points`)."""
        if self is Constellation.BPSK:
            return np.array([-1.0, 1.0])
        return self._component(int(round(np.sqrt(self.size))))

    @property
    def component_alphabet_imag(self) -> np.ndarray:
        """Imaginary-part levels; degenerate {0} for the real BPSK alphabet."""
        if self is Constellation.BPSK:
            return np.array([0.0])
        return self.component_alphabet

    @staticmethod
    def _component(side: int) -> np.ndarray:
        raw = np.arange(-(side - 1), side, 2, dtype=float)
        # per-component power (side^2-1)/3; two components must sum to 1
        return raw * np.sqrt(3.0 / (2.0 * (side * side - 1)))

    @classmethod
    def parse(cls, name: str) -> "Constellation":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown constellation {name!r}") from None


@dataclass(frozen=True)
class ScenarioConfig:
    """Full description of one simulated multi-operator link.

    alpha is the linear amplitude coupling of every crosstalk entry relative
    to the unit-amplitude direct paths; sigma2 is the linear AWGN power per
    receive line, so SNR = 1/sigma2 at the receiver.
    """

    num_operators: int
    lines_per_operator: int
    training_length: int
    alpha: float
    sigma2: float
    constellation: Constellation = Constellation.QPSK
    max_iterations: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.num_operators < 1:
            raise ValueError("num_operators must be >= 1")
        if self.lines_per_operator < 1:
            raise ValueError("lines_per_operator must be >= 1")
        if self.training_length <= self.lines_per_operator:
            raise ValueError("training_length must exceed lines_per_operator")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be > 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must fit in 64 bits")
        if not isinstance(self.constellation, Constellation):
            object.__setattr__(self, "constellation",
                               Constellation.parse(self.constellation))

    @property
    def total_lines(self) -> int:
        return self.num_operators * self.lines_per_operator

    @property
    def snr_db(self) -> float:
        return -10.0 * np.log10(self.sigma2)


@dataclass(frozen=True)
class AlphaProfile:
    """Piecewise-linear coupling profile alpha(f) over frequency in MHz."""

    freq_mhz: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freq_mhz, dtype=float)
        a = np.asarray(self.alpha, dtype=float)
        if f.ndim != 1 or f.shape != a.shape or f.size < 2:
            raise ValueError("profile needs matching 1-d freq/alpha tables, >= 2 points")
        if np.any(np.diff(f) <= 0):
            raise ValueError("profile frequencies must be strictly increasing")
        if np.any(a < 0):
            raise ValueError("alpha values must be >= 0")
        object.__setattr__(self, "freq_mhz", f)
        object.__setattr__(self, "alpha", a)

    def at(self, freq_mhz) -> np.ndarray:
        return np.interp(freq_mhz, self.freq_mhz, self.alpha)


@dataclass(frozen=True)
class MultiOperatorChannel:
    """The KN x KN channel as a K x K grid of N x N blocks.

    blocks[i, j] is the channel from operator i's lines into operator j's
    receivers.  Three views are exposed: the full matrix, the column group of
    one transmitter (all blocks leaving operator k) and the row group of one
    receiver (all blocks arriving at operator k).
    """

    blocks: np.ndarray  # (K, K, N, N) complex
    alpha: float = 0.0

    def __post_init__(self):
        b = np.asarray(self.blocks)
        if b.ndim != 4 or b.shape[0] != b.shape[1] or b.shape[2] != b.shape[3]:
            raise ValueError("blocks must have shape (K, K, N, N)")
        object.__setattr__(self, "blocks", b.astype(np.complex128, copy=False))

    @property
    def num_operators(self) -> int:
        return self.blocks.shape[0]

    @property
    def lines_per_operator(self) -> int:
        return self.blocks.shape[2]

    def block(self, i: int, j: int) -> np.ndarray:
        """Channel block from operator i into operator j."""
        return self.blocks[i, j]

    @property
    def full_matrix(self) -> np.ndarray:
        K, _, N, _ = self.blocks.shape
        H = np.empty((K * N, K * N), dtype=np.complex128)
        for i in range(K):
            for j in range(K):
                H[j * N:(j + 1) * N, i * N:(i + 1) * N] = self.blocks[i, j]
        return H

    def column_group(self, k: int) -> np.ndarray:
        """KN x N compound channel from operator k's lines toward all SPs."""
        K, _, N, _ = self.blocks.shape
        return np.concatenate([self.blocks[k, j] for j in range(K)], axis=0)

    def row_group(self, k: int) -> np.ndarray:
        """N x KN channel into operator k's receivers from all lines."""
        K, _, N, _ = self.blocks.shape
        return np.concatenate([self.blocks[m, k] for m in range(K)], axis=1)

    @classmethod
    def from_full_matrix(cls, H: np.ndarray, num_operators: int,
                         alpha: float = 0.0) -> "MultiOperatorChannel":
        H = np.asarray(H, dtype=np.complex128)
        K = num_operators
        if H.ndim != 2 or H.shape[0] != H.shape[1] or H.shape[0] % K:
            raise ValueError("full matrix must be square with KN rows")
        N = H.shape[0] // K
        blocks = np.empty((K, K, N, N), dtype=np.complex128)
        for i in range(K):
            for j in range(K):
                blocks[i, j] = H[j * N:(j + 1) * N, i * N:(i + 1) * N]
        return cls(blocks=blocks, alpha=alpha)


@dataclass(frozen=True)
class SymbolFrame:
    """Per-operator N x L symbol matrices plus the stacked KN x L view."""

    per_operator: np.ndarray  # (K, N, L) complex
    constellation: Constellation = Constellation.QPSK

    def __post_init__(self):
        x = np.asarray(self.per_operator)
        if x.ndim != 3:
            raise ValueError("per_operator must have shape (K, N, L)")
        object.__setattr__(self, "per_operator", x.astype(np.complex128, copy=False))

    @property
    def num_operators(self) -> int:
        return self.per_operator.shape[0]

    @property
    def length(self) -> int:
        return self.per_operator.shape[2]

    def operator(self, k: int) -> np.ndarray:
        return self.per_operator[k]

    @property
    def stacked(self) -> np.ndarray:
        K, N, L = self.per_operator.shape
        return self.per_operator.reshape(K * N, L)


@dataclass(frozen=True)
class ReceivedFrame:
    """Full-system KN x L received matrix with per-operator row slices."""

    y: np.ndarray
    num_operators: int

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.ndim == 1:
            y = y[:, None]
        if y.shape[0] % self.num_operators:
            raise ValueError("row count must be a multiple of num_operators")
        object.__setattr__(self, "y", y.astype(np.complex128, copy=False))

    @property
    def lines_per_operator(self) -> int:
        return self.y.shape[0] // self.num_operators

    def operator(self, k: int) -> np.ndarray:
        N = self.lines_per_operator
        return self.y[k * N:(k + 1) * N]


def _complex_gaussian(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    """CN(0, variance) draws; real block first, then imaginary block."""
    if variance == 0.0:
        return np.zeros(shape, dtype=np.complex128)
    scale = np.sqrt(variance / 2.0)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return scale * (re + 1j * im)


def synth_channel(config: ScenarioConfig, rng: np.random.Generator,
                  alpha: float | None = None) -> MultiOperatorChannel:
    """Draw one random multi-operator channel.

    Direct paths H_kk[p, p] = exp(j theta_p) with theta_p uniform on
    [0, 2pi); every other entry (self-FEXT off-diagonals and all alien
    blocks) is i.i.d. CN(0, alpha^2).  Draw order is fixed: crosstalk real
    part, crosstalk imaginary part, then the K x N direct-path phases.
    """
    K, N = config.num_operators, config.lines_per_operator
    a = config.alpha if alpha is None else float(alpha)
    if a < 0:
        raise ValueError("alpha must be >= 0")
    blocks = _complex_gaussian(rng, (K, K, N, N), a * a)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=(K, N))
    for k in range(K):
        blocks[k, k][np.diag_indices(N)] = np.exp(1j * theta[k])
    return MultiOperatorChannel(blocks=blocks, alpha=a)


def transmit(channel: MultiOperatorChannel, symbols: SymbolFrame, sigma2: float,
             rng: np.random.Generator) -> ReceivedFrame:
    """Propagate a symbol frame: y = H x + w, w i.i.d. CN(0, sigma2)."""
    if symbols.num_operators != channel.num_operators:
        raise ValueError("operator count mismatch between channel and symbols")
    if symbols.per_operator.shape[1] != channel.lines_per_operator:
        raise ValueError("line count mismatch between channel and symbols")
    if sigma2 < 0:
        raise ValueError("sigma2 must be >= 0")
    x = symbols.stacked
    y = channel.full_matrix @ x
    if sigma2 > 0:
        y = y + _complex_gaussian(rng, y.shape, sigma2)
    return ReceivedFrame(y=y, num_operators=channel.num_operators)


def draw_symbols(config: ScenarioConfig, length: int,
                 rng: np.random.Generator) -> SymbolFrame:
    """Uniform i.i.d. draws from the configured unit-power alphabet."""
    if length < 1:
        raise ValueError("frame length must be >= 1")
    points = config.constellation.points
    idx = rng.integers(0, points.size,
                       size=(config.num_operators, config.lines_per_operator, length))
    return SymbolFrame(per_operator=points[idx], constellation=config.constellation)

"""Link-level simulator for multi-operator interference cooperation in
vectored DSL: cooperative channel estimation, multi-user detection, the
backhaul exchange harness, and the experiment front ends."""

from .model import (
    AlphaProfile,
    Constellation,
    MultiOperatorChannel,
    ReceivedFrame,
    ScenarioConfig,
    SymbolFrame,
    draw_symbols,
    substream,
    synth_channel,
    transmit,
)
from .training import TrainingSet, crosscorr_report, gen_training, orthogonalize
from .estimation import (
    ChannelEstimate,
    EstimationTrace,
    crb,
    dc_estimate,
    ic_init,
    mle_centralized,
    run_ic_estimation,
)
from .detection import (
    DetectionTrace,
    MatrixDfe,
    SoftDetector,
    centralized_em,
    dc_loss,
    decision_noise_power,
    init_variance_dc,
    mmse_centralized,
    no_coop_mud,
    run_dc_mud,
    run_ic_mud,
    soft_estimate,
    update_sigma_n,
    zf_centralized,
)
from .convergence import (
    JacobiSplit,
    build_split_detection,
    build_split_estimation,
    predicted_error_decay,
    spectral_radius,
)
from .backhaul import InterferenceMessage, MessageKind, RoundLog, leak_check, run_rounds
from .metrics import GapModel, bit_loading, normalized_mse, snr_decision, throughput

__version__ = "0.1.0"

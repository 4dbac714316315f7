"""Device authentication from micro-scale distortions in WiFi channel state information."""
from .evaluation import (
    EvalConfig,
    EvalReport,
    Scenario,
    SweepConfig,
    ablation_sweep,
    compute_adr_far,
    enroll,
    round_robin_eval,
    simulate_scenario,
)
from .exceptions import (
    ConstantFingerprintError,
    DeepFadeError,
    DimensionError,
    EmptyBatchError,
    IllConditionedError,
    InsufficientDataError,
    MicroCsiError,
    ParseError,
)
from .extract import MicroCsi, MicroCsiExtractor, estimate_snr, extract_micro_csi, micro_csi_array
from .fingerprint import (
    Fingerprint,
    FingerprintBuilder,
    construct_fingerprint,
    fingerprints_from_stream,
    select_n_csi,
)
from .io import read_csi_dataset, read_library, write_csi_dataset, write_library
from .matcher import FingerprintLibrary, KnnAuthenticator, authenticate, fp_distance
from .ofdm import DEFAULT_NP, SUBCARRIERS, build_partial_dft, build_projector, tap_index_set
from .sim import (
    CsiMeasurement,
    DeviceProfile,
    doppler_shift,
    ici_upper_bound,
    inject_abnormal,
    make_device_profile,
    make_los_channel,
    scale_distortion,
    synthesize_csi,
)

__version__ = "0.1.0"

__all__ = [
    "ConstantFingerprintError",
    "CsiMeasurement",
    "DEFAULT_NP",
    "DeepFadeError",
    "DeviceProfile",
    "DimensionError",
    "EmptyBatchError",
    "EvalConfig",
    "EvalReport",
    "Fingerprint",
    "FingerprintBuilder",
    "FingerprintLibrary",
    "IllConditionedError",
    "InsufficientDataError",
    "KnnAuthenticator",
    "MicroCsi",
    "MicroCsiError",
    "MicroCsiExtractor",
    "ParseError",
    "SUBCARRIERS",
    "Scenario",
    "SweepConfig",
    "ablation_sweep",
    "authenticate",
    "build_partial_dft",
    "build_projector",
    "compute_adr_far",
    "construct_fingerprint",
    "doppler_shift",
    "enroll",
    "estimate_snr",
    "extract_micro_csi",
    "fingerprints_from_stream",
    "fp_distance",
    "ici_upper_bound",
    "inject_abnormal",
    "make_device_profile",
    "make_los_channel",
    "micro_csi_array",
    "read_csi_dataset",
    "read_library",
    "round_robin_eval",
    "scale_distortion",
    "select_n_csi",
    "simulate_scenario",
    "synthesize_csi",
    "tap_index_set",
    "write_csi_dataset",
    "write_library",
]

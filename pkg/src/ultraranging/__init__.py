"""Two-way acoustic time-of-flight ranging between devices with unsynchronised clocks."""
from .analysis import (
    CrlbQuery,
    MetricsReport,
    SnrVerdict,
    crlb_range_std,
    integrated_snr_db,
    processing_gain_db,
    score_campaign,
    unambiguous_snr_check,
)
from .channel import ChannelModel, DeviceModel, SimRng, propagate
from .detector import (
    DetectionError,
    DetectionResult,
    DetectorConfig,
    detect_first_arrival,
    detect_own_and_remote,
    estimate_freq_offset,
    excise,
    matched_filter,
)
from .kernels import BACKEND
from .protocol import (
    Device,
    MultiDeviceConfig,
    ProtocolConfig,
    SessionResult,
    SessionStatus,
    run_multi_device,
    run_pair,
    run_session,
    select_leader,
)
from .ranging import (
    RangeEstimate,
    SoundSpeed,
    TimingRecord,
    range_broadcast,
    range_full_form,
    range_loopback_form,
    range_sample_count,
)
from .waveform import (
    AudioBuffer,
    DeviceId,
    InvalidSpecError,
    WaveformKind,
    WaveformSpec,
    generate_lfm_chirp,
    generate_pn_waveform,
    generate_waveform,
    hash_device_id,
)

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer",
    "BACKEND",
    "ChannelModel",
    "DeviceModel",
    "SimRng",
    "propagate",
    "CrlbQuery",
    "DetectionError",
    "DetectionResult",
    "DetectorConfig",
    "Device",
    "DeviceId",
    "InvalidSpecError",
    "MetricsReport",
    "MultiDeviceConfig",
    "ProtocolConfig",
    "RangeEstimate",
    "SessionResult",
    "SessionStatus",
    "SnrVerdict",
    "SoundSpeed",
    "TimingRecord",
    "WaveformKind",
    "WaveformSpec",
    "crlb_range_std",
    "detect_first_arrival",
    "detect_own_and_remote",
    "estimate_freq_offset",
    "excise",
    "generate_lfm_chirp",
    "generate_pn_waveform",
    "generate_waveform",
    "hash_device_id",
    "integrated_snr_db",
    "matched_filter",
    "processing_gain_db",
    "range_broadcast",
    "range_full_form",
    "range_loopback_form",
    "range_sample_count",
    "run_multi_device",
    "run_pair",
    "run_session",
    "score_campaign",
    "select_leader",
    "unambiguous_snr_check",
]

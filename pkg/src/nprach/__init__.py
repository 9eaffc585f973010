"""NB-IoT NPRACH preamble detection, ToA and Doppler-rate estimation for LEO links."""

from .channel import (
    ChannelParams,
    NoiseModel,
    UplinkScenario,
    add_noise,
    apply_impairments,
    impaired_stream,
    superpose,
    synthesize,
)
from .geometry import (
    SET_1,
    SET_2,
    GeometryReport,
    LinkBudgetInputs,
    OrbitConfig,
    PayloadSet,
    beam_geometry,
    candidate_table,
    cnr,
    doppler,
    geometry_report,
    link_budget,
    slant_range,
    snr,
)
from .harness import Campaign, CampaignResults, classify_trial, extract_cdf, make_campaign, measure_false_alarm, run_campaign
from .iq import read_iq, write_iq
from .receiver import (
    DetectionResult,
    ReceiverConfig,
    Threshold,
    calibrate_threshold,
    compensate_toa,
    demodulate,
    detect,
    differential,
    estimate_doppler_rate,
    estimate_toa,
    receive,
    resolve_ambiguity,
    sg_sum,
    toa_metric,
)
from .waveform import (
    FORMATS,
    HoppingPattern,
    Numerology,
    PreambleConfig,
    PreambleFormat,
    build_numerology,
    generate_hopping,
    generate_waveform,
)

__version__ = "0.1.0"

__all__ = [
    "add_noise",
    "apply_impairments",
    "beam_geometry",
    "build_numerology",
    "calibrate_threshold",
    "Campaign",
    "CampaignResults",
    "candidate_table",
    "ChannelParams",
    "classify_trial",
    "cnr",
    "compensate_toa",
    "demodulate",
    "detect",
    "DetectionResult",
    "differential",
    "doppler",
    "estimate_doppler_rate",
    "estimate_toa",
    "extract_cdf",
    "FORMATS",
    "generate_hopping",
    "generate_waveform",
    "geometry_report",
    "GeometryReport",
    "HoppingPattern",
    "impaired_stream",
    "link_budget",
    "LinkBudgetInputs",
    "make_campaign",
    "measure_false_alarm",
    "NoiseModel",
    "Numerology",
    "OrbitConfig",
    "PayloadSet",
    "PreambleConfig",
    "PreambleFormat",
    "read_iq",
    "receive",
    "ReceiverConfig",
    "resolve_ambiguity",
    "run_campaign",
    "SET_1",
    "SET_2",
    "sg_sum",
    "slant_range",
    "snr",
    "superpose",
    "synthesize",
    "Threshold",
    "toa_metric",
    "UplinkScenario",
    "write_iq",
]

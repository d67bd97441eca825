"""Expected detection statistics for a lossy BB84 link with real detectors.

The model works in expectation values, not pulse-by-pulse sampling. A pulse
of intensity mu clicks with probability (1 - exp(-mu*eta)) + p_DC, errors
come from misalignment on signal clicks plus half the dark counts, and a
dead-time factor c_dt = 1/(1 + R * p_det * t_DT) rescales all rates. The
corrected total detection probability appears inside its own correction, so
c_dt is the closed-form fixed point of that relation, not a single pass;
this keeps a rate cost for every extra pulse even deep in saturation. The
Z-basis block size is fixed; the number of pulses needed to fill it, the
induced X-basis sample, the QBER and the acquisition time follow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .bounds import (
    BoundInputs,
    BoundOptions,
    DEFAULT_BOUND_OPTIONS,
    epsilon_budget,
    estimate_key,
)
from .model import (
    Basis,
    ChannelParams,
    NoDetectionsError,
    Observations,
    ParameterError,
    ProtocolParams,
    RatePoint,
    SecurityParams,
)

__all__ = [
    "SimulationPoint",
    "DetectorPreset",
    "DETECTOR_PRESETS",
    "channel_from_preset",
    "dead_time_factor",
    "saturated_dead_time_factor",
    "detection_prob",
    "error_prob",
    "expected_observations",
    "rate_point",
]

DEADTIME_MODES = ("zonly", "allclicks")
DEFAULT_DEADTIME_MODE = "zonly"


@dataclass(frozen=True)
class SimulationPoint:
    """One channel/protocol/security configuration to evaluate."""

    channel: ChannelParams
    protocol: ProtocolParams
    sec: SecurityParams

    @property
    def transmittance(self) -> float:
        return self.channel.transmittance


@dataclass(frozen=True)
class DetectorPreset:
    """Named detector defaults; dark_count_prob assumes 1 GHz gating."""

    name: str
    dead_time_s: float
    dark_count_prob: float
    note: str


DETECTOR_PRESETS = {
    "snspd": DetectorPreset(
        name="snspd",
        dead_time_s=100e-9,
        dark_count_prob=1e-8,
        note="superconducting nanowire, 10 Hz dark counts at 1 GHz",
    ),
    "ingaas": DetectorPreset(
        name="ingaas",
        dead_time_s=20e-6,
        dark_count_prob=1e-9,
        note="InGaAs avalanche photodiode, 1 Hz dark counts at 1 GHz",
    ),
}


def channel_from_preset(
    name: str,
    attenuation_db: float,
    rep_rate_hz: float = 1e9,
    misalignment_prob: float = 0.01,
) -> ChannelParams:
    """Build ChannelParams from a detector preset name."""
    try:
        preset = DETECTOR_PRESETS[name]
    except KeyError:
        raise ParameterError(
            f"unknown detector preset {name!r}; available: {sorted(DETECTOR_PRESETS)}"
        ) from None
    return ChannelParams(
        attenuation_db=attenuation_db,
        dark_count_prob=preset.dark_count_prob,
        misalignment_prob=misalignment_prob,
        dead_time_s=preset.dead_time_s,
        rep_rate_hz=rep_rate_hz,
    )


def dead_time_factor(raw_total_det_prob: float, channel: ChannelParams) -> float:
    """One application of the dead-time correction:
    1 / (1 + R * p_det * t_DT) for a given per-pulse detection probability."""
    if not 0.0 <= raw_total_det_prob <= 1.0:
        raise ParameterError("dead_time_factor: click probability must be in [0, 1]")
    return 1.0 / (1.0 + channel.rep_rate_hz * raw_total_det_prob * channel.dead_time_s)


def saturated_dead_time_factor(raw_total_det_prob: float, channel: ChannelParams) -> float:
    """Self-consistent dead-time factor: the corrected detection probability
    c * p_raw feeds its own correction, so c solves c = 1/(1 + R*t*c*p_raw).

    Closed form of the quadratic; satisfies
    c == dead_time_factor(c * p_raw, channel) exactly. Unlike a single pass,
    the corrected rate keeps growing (as sqrt) with the click probability, so
    wasted pulses still cost acquisition time deep in saturation."""
    if not 0.0 <= raw_total_det_prob <= 1.0:
        raise ParameterError("saturated_dead_time_factor: click probability must be in [0, 1]")
    a = channel.rep_rate_hz * channel.dead_time_s * raw_total_det_prob
    if a == 0.0:
        return 1.0
    return (math.sqrt(1.0 + 4.0 * a) - 1.0) / (2.0 * a)


def _click_prob(mu: float, eta: float, dark: float) -> float:
    # Linear dark-count model; cap keeps pathological corners a probability.
    return min(1.0, -math.expm1(-mu * eta) + dark)


def _raw_click_prob(point: SimulationPoint, deadtime_mode: str) -> float:
    """Per-pulse click probability before the dead-time correction.

    "zonly" keeps the sifted Z-basis share (the correction factor's total read
    literally); "allclicks" counts every click regardless of basis match (any
    click occupies the detector).
    """
    if deadtime_mode not in DEADTIME_MODES:
        raise ParameterError(f"deadtime_mode must be one of {DEADTIME_MODES}")
    eta = point.transmittance
    dark = point.channel.dark_count_prob
    total = sum(
        p * _click_prob(mu, eta, dark)
        for mu, p in zip(point.protocol.intensities, point.protocol.intensity_probs)
    )
    if deadtime_mode == "zonly":
        total *= point.protocol.basis_prob_z**2
    return min(1.0, total)


def _sift_prob(point: SimulationPoint, basis: Basis) -> float:
    pz = point.protocol.basis_prob_z
    return pz**2 if basis is Basis.Z else (1.0 - pz) ** 2


def detection_prob(
    point: SimulationPoint,
    basis: Basis,
    index: int,
    deadtime_mode: str = DEFAULT_DEADTIME_MODE,
) -> float:
    """Per-pulse probability of a sifted detection of intensity
    ``intensities[index]`` in the given basis:
    c_dt * P_basis * p_mu * ((1 - exp(-mu*eta)) + p_DC)."""
    mu = point.protocol.intensities[index]
    p_mu = point.protocol.intensity_probs[index]
    c_dt = saturated_dead_time_factor(_raw_click_prob(point, deadtime_mode), point.channel)
    click = _click_prob(mu, point.transmittance, point.channel.dark_count_prob)
    return c_dt * _sift_prob(point, basis) * p_mu * click


def error_prob(
    point: SimulationPoint,
    basis: Basis,
    index: int,
    deadtime_mode: str = DEFAULT_DEADTIME_MODE,
) -> float:
    """Per-pulse probability of a sifted *erroneous* detection:
    c_dt * P_basis * p_mu * ((1 - exp(-mu*eta)) * p_err + p_DC / 2).

    Always at most the matching detection probability, since p_err < 1/2 and
    only half the dark counts flip the bit."""
    mu = point.protocol.intensities[index]
    p_mu = point.protocol.intensity_probs[index]
    c_dt = saturated_dead_time_factor(_raw_click_prob(point, deadtime_mode), point.channel)
    signal = -math.expm1(-mu * point.transmittance)
    err = signal * point.channel.misalignment_prob + point.channel.dark_count_prob / 2.0
    return c_dt * _sift_prob(point, basis) * p_mu * min(err, _click_prob(mu, point.transmittance, point.channel.dark_count_prob))


def expected_observations(
    point: SimulationPoint, deadtime_mode: str = DEFAULT_DEADTIME_MODE
) -> Observations:
    """Expected counts for a completed block of ``sec.block_size`` Z detections.

    Z-basis cells are the block split in proportion to the per-intensity
    detection probabilities; the pulse budget N_tot = n_Z / P_Z_total then
    induces the X-basis sample, which is not independently fixed.
    """
    protocol = point.protocol
    channel = point.channel
    eta = point.transmittance
    dark = channel.dark_count_prob
    c_dt = saturated_dead_time_factor(_raw_click_prob(point, deadtime_mode), channel)

    sift_z = protocol.basis_prob_z**2
    sift_x = (1.0 - protocol.basis_prob_z) ** 2
    det_z, err_z, det_x, err_x = [], [], [], []
    for mu, p_mu in zip(protocol.intensities, protocol.intensity_probs):
        click = _click_prob(mu, eta, dark)
        err = min(-math.expm1(-mu * eta) * channel.misalignment_prob + dark / 2.0, click)
        det_z.append(c_dt * sift_z * p_mu * click)
        err_z.append(c_dt * sift_z * p_mu * err)
        det_x.append(c_dt * sift_x * p_mu * click)
        err_x.append(c_dt * sift_x * p_mu * err)

    p_det_z = sum(det_z)
    if p_det_z <= 0.0:
        raise NoDetectionsError("zero detection probability; no block can be collected")
    n_z = point.sec.block_size
    pulses = n_z / p_det_z
    cells_nz = tuple(n_z * p / p_det_z for p in det_z)
    cells_mz = tuple(n_z * p / p_det_z for p in err_z)
    cells_nx = tuple(pulses * p for p in det_x)
    cells_mx = tuple(pulses * p for p in err_x)
    return Observations(
        intensities=protocol.intensities,
        detections_z=cells_nz,
        errors_z=cells_mz,
        detections_x=cells_nx,
        errors_x=cells_mx,
        n_z=sum(cells_nz),
        m_z=sum(cells_mz),
        n_x=sum(cells_nx),
        m_x=sum(cells_mx),
        pulses_sent=pulses,
    )


def rate_point(
    point: SimulationPoint,
    options: BoundOptions = DEFAULT_BOUND_OPTIONS,
    deadtime_mode: str = DEFAULT_DEADTIME_MODE,
) -> RatePoint:
    """Full pipeline for one configuration: expected counts, finite-key
    bounds, secret key length, SKR = l / N_tot * R and acquisition time.

    Degenerate configurations come back as zero-rate points with a
    diagnostic status instead of raising."""
    rep_rate = point.channel.rep_rate_hz
    try:
        obs = expected_observations(point, deadtime_mode)
    except NoDetectionsError:
        return RatePoint(
            s0_lower=0.0,
            s0_upper=None,
            s1_lower_z=0.0,
            s1_lower_x=0.0,
            v1_upper_x=0.0,
            phase_error_upper=0.5,
            lambda_ec=0.0,
            key_length=0.0,
            skr_hz=0.0,
            qber_z=0.0,
            acquisition_s=math.inf,
            status="no_detections",
        )
    budget = epsilon_budget(point.protocol, point.sec)
    inputs = BoundInputs(params=point.protocol, sec=point.sec, obs=obs, budget=budget)
    estimate = estimate_key(inputs, options)
    return RatePoint(
        s0_lower=estimate.s0_lower,
        s0_upper=estimate.s0_upper,
        s1_lower_z=estimate.s1_lower_z,
        s1_lower_x=estimate.s1_lower_x,
        v1_upper_x=estimate.v1_upper_x,
        phase_error_upper=estimate.phase_error_upper,
        lambda_ec=estimate.lambda_ec,
        key_length=estimate.key_length,
        skr_hz=estimate.key_length / obs.pulses_sent * rep_rate,
        qber_z=obs.qber_z,
        acquisition_s=obs.pulses_sent / rep_rate,
        status=estimate.status,
    )

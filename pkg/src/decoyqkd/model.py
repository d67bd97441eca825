"""Domain types and elementary math shared by the key-rate analysis.

Counts are kept as nonnegative floats rather than integers: the channel
simulator works in expectation values and every bound formula stays valid
for real inputs. Photon-number sums elsewhere in the package truncate at
``PHOTON_CUTOFF``; for mean photon numbers below 1 the neglected Poisson
tail is smaller than 1e-300.

All functions here are pure and safe to call from any number of threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

__all__ = [
    "PHOTON_CUTOFF",
    "ParameterError",
    "NoDetectionsError",
    "NoKeyError",
    "InsufficientStatisticsError",
    "Variant",
    "Basis",
    "ProtocolParams",
    "ChannelParams",
    "SecurityParams",
    "Observations",
    "RatePoint",
    "hoeffding_delta",
    "binary_entropy",
    "poisson_pmf",
    "photon_number_prob",
]

# Truncation point for photon-number expansions (normalization checks,
# per-photon-number oracles).
PHOTON_CUTOFF = 200

_PROB_SUM_TOL = 1e-12
_COUNT_REL_TOL = 1e-9


class ParameterError(ValueError):
    """A value lies outside its documented domain."""


class NoDetectionsError(RuntimeError):
    """The configuration produces no detections at all."""


class NoKeyError(RuntimeError):
    """The finite-key bounds leave no extractable key."""


class InsufficientStatisticsError(RuntimeError):
    """Too few events to evaluate a statistical fluctuation term."""


class Variant(Enum):
    """Decoy flavour: one signal level plus one or two decoy levels."""

    ONE_DECOY = "one"
    TWO_DECOY = "two"

    @property
    def intensity_count(self) -> int:
        return 2 if self is Variant.ONE_DECOY else 3


class Basis(Enum):
    """Measurement basis label. Z carries the key, X estimates phase errors."""

    Z = "Z"
    X = "X"


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ParameterError(message)


@dataclass(frozen=True)
class ProtocolParams:
    """Tunable source settings: intensities, their probabilities, basis bias.

    ``intensities`` are mean photon numbers in strictly decreasing order
    (signal first). ``basis_prob_z`` is used for both parties, so a round is
    sifted into Z with probability basis_prob_z**2. The two-decoy variant
    additionally requires mu1*(mu2-mu3) - mu2**2 + mu3**2 > 0 (equivalently
    mu1 > mu2 + mu3) so the single-photon bound denominator stays positive.
    """

    variant: Variant
    intensities: tuple[float, ...]
    intensity_probs: tuple[float, ...]
    basis_prob_z: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "intensities", tuple(float(m) for m in self.intensities))
        object.__setattr__(self, "intensity_probs", tuple(float(p) for p in self.intensity_probs))
        n = self.variant.intensity_count
        _require(
            len(self.intensities) == n,
            f"intensities: {self.variant.value}-decoy takes exactly {n} levels, "
            f"got {len(self.intensities)}",
        )
        _require(
            len(self.intensity_probs) == n,
            f"intensity_probs: expected {n} entries, got {len(self.intensity_probs)}",
        )
        _require(
            all(math.isfinite(m) and m >= 0.0 for m in self.intensities),
            "intensities: each level must be finite and >= 0",
        )
        for hi, lo in zip(self.intensities, self.intensities[1:]):
            _require(hi > lo, "intensities: levels must be strictly decreasing")
        if self.variant is Variant.TWO_DECOY:
            mu1, mu2, mu3 = self.intensities
            _require(
                mu1 * (mu2 - mu3) - mu2**2 + mu3**2 > 0.0,
                "intensities: need mu1*(mu2-mu3) - mu2^2 + mu3^2 > 0 (mu1 > mu2 + mu3)",
            )
        _require(
            all(0.0 < p <= 1.0 for p in self.intensity_probs),
            "intensity_probs: each probability must be in (0, 1]",
        )
        _require(
            abs(sum(self.intensity_probs) - 1.0) <= _PROB_SUM_TOL,
            "intensity_probs: probabilities must sum to 1",
        )
        _require(0.0 < self.basis_prob_z < 1.0, "basis_prob_z: must lie strictly in (0, 1)")


@dataclass(frozen=True)
class ChannelParams:
    """Fixed link and detector properties.

    ``attenuation_db`` is the global loss with detector efficiency folded in.
    ``dark_count_prob`` is per gate, ``dead_time_s`` blinds the detector after
    each click, ``rep_rate_hz`` is the source pulse rate.
    """

    attenuation_db: float
    dark_count_prob: float
    misalignment_prob: float
    dead_time_s: float
    rep_rate_hz: float

    def __post_init__(self) -> None:
        _require(self.attenuation_db >= 0.0, "attenuation_db: must be >= 0")
        _require(0.0 <= self.dark_count_prob < 1.0, "dark_count_prob: must be in [0, 1)")
        _require(0.0 <= self.misalignment_prob < 0.5, "misalignment_prob: must be in [0, 0.5)")
        _require(self.dead_time_s >= 0.0, "dead_time_s: must be >= 0")
        _require(self.rep_rate_hz > 0.0, "rep_rate_hz: must be > 0")

    @property
    def transmittance(self) -> float:
        """Linear transmittance 10**(-attenuation_db/10)."""
        return 10.0 ** (-self.attenuation_db / 10.0)


@dataclass(frozen=True)
class SecurityParams:
    """Secrecy/correctness targets, block size, and error-correction overhead.

    ``block_size`` is the number of sifted Z-basis detections collected before
    privacy amplification. ``ec_efficiency`` multiplies the Shannon limit in
    the error-correction leakage model.
    """

    eps_sec: float
    eps_cor: float
    block_size: float
    ec_efficiency: float = 1.05

    def __post_init__(self) -> None:
        _require(0.0 < self.eps_sec < 1.0, "eps_sec: must lie strictly in (0, 1)")
        _require(0.0 < self.eps_cor < 1.0, "eps_cor: must lie strictly in (0, 1)")
        _require(self.block_size >= 1.0, "block_size: must be >= 1")
        _require(self.ec_efficiency >= 1.0, "ec_efficiency: must be >= 1")


@dataclass(frozen=True)
class Observations:
    """Per-basis, per-intensity detection and error counts, plus totals.

    Cell k of each tuple belongs to ``intensities[k]``. Totals must equal the
    sum of their cells and ``pulses_sent`` covers at least every sifted
    detection. Counts are expected values, hence floats.
    """

    intensities: tuple[float, ...]
    detections_z: tuple[float, ...]
    errors_z: tuple[float, ...]
    detections_x: tuple[float, ...]
    errors_x: tuple[float, ...]
    n_z: float
    m_z: float
    n_x: float
    m_x: float
    pulses_sent: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "intensities", tuple(float(m) for m in self.intensities))
        n = len(self.intensities)
        cells = {
            "detections_z": self.detections_z,
            "errors_z": self.errors_z,
            "detections_x": self.detections_x,
            "errors_x": self.errors_x,
        }
        for name, values in cells.items():
            object.__setattr__(self, name, tuple(float(v) for v in values))
            values = getattr(self, name)
            _require(len(values) == n, f"{name}: expected {n} cells")
            _require(all(v >= 0.0 for v in values), f"{name}: counts must be >= 0")
        for det, err in zip(self.detections_z, self.errors_z):
            _require(err <= det * (1.0 + _COUNT_REL_TOL), "errors_z: cell exceeds its detections")
        for det, err in zip(self.detections_x, self.errors_x):
            _require(err <= det * (1.0 + _COUNT_REL_TOL), "errors_x: cell exceeds its detections")
        totals = (
            ("n_z", self.n_z, sum(self.detections_z)),
            ("m_z", self.m_z, sum(self.errors_z)),
            ("n_x", self.n_x, sum(self.detections_x)),
            ("m_x", self.m_x, sum(self.errors_x)),
        )
        for name, total, cell_sum in totals:
            _require(total >= 0.0, f"{name}: must be >= 0")
            _require(
                math.isclose(total, cell_sum, rel_tol=_COUNT_REL_TOL, abs_tol=1e-9),
                f"{name}: total does not match the sum of its cells",
            )
        sifted = self.n_z + self.n_x
        _require(
            self.pulses_sent >= sifted * (1.0 - _COUNT_REL_TOL),
            "pulses_sent: fewer pulses than sifted detections",
        )

    def detections(self, basis: Basis) -> tuple[float, ...]:
        return self.detections_z if basis is Basis.Z else self.detections_x

    def errors(self, basis: Basis) -> tuple[float, ...]:
        return self.errors_z if basis is Basis.Z else self.errors_x

    def total_detections(self, basis: Basis) -> float:
        return self.n_z if basis is Basis.Z else self.n_x

    def total_errors(self, basis: Basis) -> float:
        return self.m_z if basis is Basis.Z else self.m_x

    @property
    def qber_z(self) -> float:
        return self.m_z / self.n_z


@dataclass(frozen=True)
class RatePoint:
    """Every bound value and the final rate figures for one configuration.

    ``status`` is "ok" when the estimation chain completed (the key length
    may still clamp to zero), "no_key" when the bounds collapsed (zero
    single-photon credit) and "no_detections" when the channel produced no
    statistics at all.
    """

    s0_lower: float
    s0_upper: float | None
    s1_lower_z: float
    s1_lower_x: float
    v1_upper_x: float
    phase_error_upper: float
    lambda_ec: float
    key_length: float
    skr_hz: float
    qber_z: float
    acquisition_s: float
    status: str = "ok"

    def __post_init__(self) -> None:
        _require(self.key_length >= 0.0, "key_length: must be >= 0")
        _require(self.skr_hz >= 0.0, "skr_hz: must be >= 0")
        if self.key_length > 0.0:
            _require(
                0.0 <= self.phase_error_upper <= 0.5,
                "phase_error_upper: must be in [0, 0.5] when a key is produced",
            )
        _require(self.acquisition_s > 0.0, "acquisition_s: must be > 0")


def hoeffding_delta(n: float, eps: float) -> float:
    """Hoeffding deviation sqrt(n * ln(1/eps) / 2).

    Bounds the gap between an observed sum of ``n`` independent bounded
    variables and its expectation, except with probability ``eps``. The
    logarithm is natural, matching the standard form of the inequality.
    """
    if n < 0:
        raise ParameterError("hoeffding_delta: n must be >= 0")
    if not 0.0 < eps <= 1.0:
        raise ParameterError("hoeffding_delta: eps must be in (0, 1]")
    return math.sqrt(0.5 * n * math.log(1.0 / eps))


def binary_entropy(x: float) -> float:
    """Binary entropy h(x) in bits, with h(0) = h(1) = 0 by continuity."""
    if not 0.0 <= x <= 1.0:
        raise ParameterError("binary_entropy: argument must be in [0, 1]")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def poisson_pmf(mu: float, n: int) -> float:
    """Probability that a coherent pulse of mean photon number ``mu`` carries
    exactly ``n`` photons: exp(-mu) * mu**n / n!."""
    if mu < 0:
        raise ParameterError("poisson_pmf: mu must be >= 0")
    if n < 0:
        raise ParameterError("poisson_pmf: n must be >= 0")
    if mu == 0.0:
        return 1.0 if n == 0 else 0.0
    # lgamma keeps large n finite where mu**n / n! would overflow
    return math.exp(-mu + n * math.log(mu) - math.lgamma(n + 1))


def photon_number_prob(params: ProtocolParams, n: int) -> float:
    """Total probability that a transmitted pulse carries ``n`` photons,
    averaged over the intensity choice."""
    return sum(
        p * poisson_pmf(mu, n)
        for mu, p in zip(params.intensities, params.intensity_probs)
    )

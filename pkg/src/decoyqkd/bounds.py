"""Finite-key estimation chain for decoy-state BB84.

Builds, from observed (or expected) counts, the corrected per-intensity
counts, the vacuum and single-photon bounds for both decoy variants, the
phase-error upper bound with its statistical fluctuation term, and finally
the extractable secret key length

    l = s0_lower + s1_lower * (1 - h(phi_upper)) - lambda_EC
        - a*log2(b/eps_sec) - log2(2/eps_cor)

with a = 6 and b = 19 (one decoy) or 21 (two decoys). Every bound clamps to
zero from below; the phase error clamps to 0.5 from above. All functions are
pure and thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import (
    Basis,
    InsufficientStatisticsError,
    NoKeyError,
    Observations,
    ParameterError,
    ProtocolParams,
    SecurityParams,
    Variant,
    binary_entropy,
    hoeffding_delta,
    photon_number_prob,
)

__all__ = [
    "EpsilonBudget",
    "BoundInputs",
    "BoundOptions",
    "DEFAULT_BOUND_OPTIONS",
    "KeyEstimate",
    "epsilon_budget",
    "corrected_count",
    "vacuum_events_lower",
    "vacuum_events_upper",
    "single_photon_lower",
    "single_photon_errors_upper",
    "phase_error_fluctuation",
    "phase_error_upper",
    "error_correction_leakage",
    "estimate_key",
    "secret_key_length",
]

_KEY_LENGTH_B = {Variant.ONE_DECOY: 19, Variant.TWO_DECOY: 21}


@dataclass(frozen=True)
class EpsilonBudget:
    """Failure-probability split for the concentration inequalities.

    ``eps1`` guards detection-count corrections, ``eps2`` error-count
    corrections. ``a`` and ``b`` are the key-length constants of the
    underlying security analysis; b counts how many times the error terms
    enter, so it is 19 for one decoy and 21 for two. eps = 1 is allowed and
    turns every Hoeffding deviation off (asymptotic evaluation).
    """

    eps1: float
    eps2: float
    a: int = 6
    b: int = 21

    def __post_init__(self) -> None:
        if not 0.0 < self.eps1 <= 1.0 or not 0.0 < self.eps2 <= 1.0:
            raise ParameterError("EpsilonBudget: eps1 and eps2 must be in (0, 1]")
        if self.a != 6:
            raise ParameterError("EpsilonBudget: a is fixed at 6 by the security analysis")
        if self.b not in (19, 21):
            raise ParameterError("EpsilonBudget: b must be 19 (one decoy) or 21 (two decoys)")


@dataclass(frozen=True)
class BoundInputs:
    """Everything the estimation chain needs for one evaluation."""

    params: ProtocolParams
    sec: SecurityParams
    obs: Observations
    budget: EpsilonBudget

    def __post_init__(self) -> None:
        if self.budget.b != _KEY_LENGTH_B[self.params.variant]:
            raise ParameterError("BoundInputs: budget constant b does not match the variant")
        if len(self.obs.intensities) != len(self.params.intensities):
            raise ParameterError("BoundInputs: observation cells do not match the intensities")
        for a, b in zip(self.obs.intensities, self.params.intensities):
            if not math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-15):
                raise ParameterError("BoundInputs: observation intensities differ from params")


@dataclass(frozen=True)
class BoundOptions:
    """Model switches left open by the analysis.

    ``s0_upper_mode`` selects the vacuum upper bound: "per-intensity" uses the
    errors of one intensity (index ``s0_upper_index``, default the weak decoy,
    which gives the better key rate), "total" uses all errors in the basis.
    ``gamma_base`` is the constant squared inside the fluctuation-term
    logarithm; 21 comes from the 2-decoy epsilon budget and is used for both
    variants by default, 19 matches the 1-decoy budget for sensitivity
    checks (sub-percent effect either way).
    """

    s0_upper_mode: str = "per-intensity"
    s0_upper_index: int = 1
    gamma_base: float = 21.0

    def __post_init__(self) -> None:
        if self.s0_upper_mode not in ("per-intensity", "total"):
            raise ParameterError("BoundOptions: s0_upper_mode must be 'per-intensity' or 'total'")
        if self.s0_upper_index < 0:
            raise ParameterError("BoundOptions: s0_upper_index must be >= 0")
        if self.gamma_base <= 0:
            raise ParameterError("BoundOptions: gamma_base must be > 0")


DEFAULT_BOUND_OPTIONS = BoundOptions()


def epsilon_budget(params: ProtocolParams, sec: SecurityParams) -> EpsilonBudget:
    """Split eps_sec evenly over the b error terms of the key-length bound."""
    b = _KEY_LENGTH_B[params.variant]
    eps = sec.eps_sec / b
    return EpsilonBudget(eps1=eps, eps2=eps, a=6, b=b)


def corrected_count(
    count_k: float, total: float, p_k: float, k: float, eps: float, sign: int
) -> float:
    """Finite-size corrected count (e**k / p_k) * (count_k +/- delta(total, eps)).

    ``total`` is the basis-wide count entering the Hoeffding deviation. The
    minus variant clamps at zero: the asymptotic count it bounds is never
    negative, so clamping only loosens the bound in the safe direction.
    """
    if p_k <= 0.0:
        raise ParameterError("corrected_count: intensity probability must be > 0")
    if count_k < 0.0:
        raise ParameterError("corrected_count: count must be >= 0")
    if total < count_k:
        raise ParameterError("corrected_count: total smaller than the cell count")
    if sign not in (1, -1):
        raise ParameterError("corrected_count: sign must be +1 or -1")
    shifted = count_k + sign * hoeffding_delta(total, eps)
    if sign < 0:
        shifted = max(0.0, shifted)
    return math.exp(k) / p_k * shifted


def _det_corrected(inputs: BoundInputs, basis: Basis, index: int, sign: int) -> float:
    return corrected_count(
        inputs.obs.detections(basis)[index],
        inputs.obs.total_detections(basis),
        inputs.params.intensity_probs[index],
        inputs.params.intensities[index],
        inputs.budget.eps1,
        sign,
    )


def _err_corrected(inputs: BoundInputs, basis: Basis, index: int, sign: int) -> float:
    return corrected_count(
        inputs.obs.errors(basis)[index],
        inputs.obs.total_errors(basis),
        inputs.params.intensity_probs[index],
        inputs.params.intensities[index],
        inputs.budget.eps2,
        sign,
    )


def _decoy_pair(params: ProtocolParams) -> tuple[int, int]:
    # Indices of the two lowest intensities: (mu1, mu2) for one decoy,
    # (mu2, mu3) for two decoys.
    return (0, 1) if params.variant is Variant.ONE_DECOY else (1, 2)


def vacuum_events_lower(inputs: BoundInputs, basis: Basis = Basis.Z) -> float:
    """Decoy lower bound on detections caused by vacuum pulses:
    tau0 * (mu_hi * n_lo^- - mu_lo * n_hi^+) / (mu_hi - mu_lo) over the two
    lowest intensities, clamped at zero."""
    hi, lo = _decoy_pair(inputs.params)
    mu_hi = inputs.params.intensities[hi]
    mu_lo = inputs.params.intensities[lo]
    if mu_hi <= mu_lo:
        raise ParameterError("vacuum_events_lower: degenerate intensity pair")
    tau0 = photon_number_prob(inputs.params, 0)
    value = (
        tau0
        * (mu_hi * _det_corrected(inputs, basis, lo, -1) - mu_lo * _det_corrected(inputs, basis, hi, +1))
        / (mu_hi - mu_lo)
    )
    return max(0.0, value)


def vacuum_events_upper(
    inputs: BoundInputs,
    basis: Basis = Basis.Z,
    options: BoundOptions = DEFAULT_BOUND_OPTIONS,
) -> float:
    """Upper bound on vacuum detections from observed errors (one decoy only).

    Vacuum pulses click through dark counts alone, so half of them show up as
    errors; the error counts therefore cap the vacuum events from above:
    2 * (tau0 * (e**k / p_k) * (m_k + delta(m, eps2)) + delta(n, eps1)) in the
    per-intensity mode, 2 * (m + delta(n, eps1)) in the total mode.
    """
    if inputs.params.variant is not Variant.ONE_DECOY:
        raise ParameterError("vacuum_events_upper: defined for the one-decoy variant only")
    n_total = inputs.obs.total_detections(basis)
    if options.s0_upper_mode == "total":
        value = 2.0 * (
            inputs.obs.total_errors(basis) + hoeffding_delta(n_total, inputs.budget.eps1)
        )
    else:
        index = options.s0_upper_index
        if index >= len(inputs.params.intensities):
            raise ParameterError("vacuum_events_upper: s0_upper_index out of range")
        tau0 = photon_number_prob(inputs.params, 0)
        value = 2.0 * (
            tau0 * _err_corrected(inputs, basis, index, +1)
            + hoeffding_delta(n_total, inputs.budget.eps1)
        )
    return max(0.0, value)


def single_photon_lower(
    inputs: BoundInputs,
    basis: Basis = Basis.Z,
    options: BoundOptions = DEFAULT_BOUND_OPTIONS,
) -> float:
    """Decoy lower bound on detections caused by single-photon pulses.

    One decoy:
        tau1*mu1/(mu2*(mu1-mu2)) * (n_mu2^- - (mu2^2/mu1^2) n_mu1^+
                                     - ((mu1^2-mu2^2)/mu1^2) * s0_upper/tau0)
    Two decoys:
        tau1*mu1/(mu1*(mu2-mu3)-mu2^2+mu3^2) * (n_mu2^- - n_mu3^+
            + ((mu2^2-mu3^2)/mu1^2) * (s0/tau0 - n_mu1^+))
    where s0 enters with a positive coefficient, so its *lower* bound is the
    conservative substitution. Clamped at zero.
    """
    params = inputs.params
    tau0 = photon_number_prob(params, 0)
    tau1 = photon_number_prob(params, 1)
    if params.variant is Variant.ONE_DECOY:
        mu1, mu2 = params.intensities
        s0_upper = vacuum_events_upper(inputs, basis, options)
        bracket = (
            _det_corrected(inputs, basis, 1, -1)
            - (mu2**2 / mu1**2) * _det_corrected(inputs, basis, 0, +1)
            - ((mu1**2 - mu2**2) / mu1**2) * s0_upper / tau0
        )
        value = tau1 * mu1 / (mu2 * (mu1 - mu2)) * bracket
    else:
        mu1, mu2, mu3 = params.intensities
        denom = mu1 * (mu2 - mu3) - mu2**2 + mu3**2
        s0_lower = vacuum_events_lower(inputs, basis)
        bracket = (
            _det_corrected(inputs, basis, 1, -1)
            - _det_corrected(inputs, basis, 2, +1)
            + ((mu2**2 - mu3**2) / mu1**2)
            * (s0_lower / tau0 - _det_corrected(inputs, basis, 0, +1))
        )
        value = tau1 * mu1 / denom * bracket
    return max(0.0, value)


def single_photon_errors_upper(inputs: BoundInputs) -> float:
    """Upper bound on X-basis errors from single-photon pulses:
    tau1 * (m_hi^+ - m_lo^-) / (mu_hi - mu_lo) over the two lowest
    intensities, clamped at zero. With few X-basis errors the corrections can
    push this past m_X itself; the excess is kept. Capping at m_X would also
    be a valid bound, but it rewards starving the X basis (tiny m_X makes the
    cap bite), which skews parameter optimization toward degenerate basis
    choices."""
    hi, lo = _decoy_pair(inputs.params)
    mu_hi = inputs.params.intensities[hi]
    mu_lo = inputs.params.intensities[lo]
    if mu_hi <= mu_lo:
        raise ParameterError("single_photon_errors_upper: degenerate intensity pair")
    tau1 = photon_number_prob(inputs.params, 1)
    value = (
        tau1
        * (_err_corrected(inputs, Basis.X, hi, +1) - _err_corrected(inputs, Basis.X, lo, -1))
        / (mu_hi - mu_lo)
    )
    return max(0.0, value)


def phase_error_fluctuation(
    eps_sec: float, ratio: float, count1: float, count2: float, base: float = 21.0
) -> float:
    """Statistical penalty for inferring one basis' error rate from the other.

    Evaluates sqrt((c+d)(1-b)b / (c d ln 2) * log2((c+d)/(c d (1-b)b) *
    base^2/eps^2)) for the observed ratio b and the two single-photon counts
    c, d. Symmetric in the counts. Returns 0 when the logarithm argument
    drops to 1 or below (no fluctuation left to pay for).
    """
    if not 0.0 < eps_sec < 1.0:
        raise ParameterError("phase_error_fluctuation: eps_sec must be in (0, 1)")
    if not 0.0 < ratio < 1.0 or count1 <= 0.0 or count2 <= 0.0:
        raise InsufficientStatisticsError(
            "phase_error_fluctuation: insufficient statistics, abort key extraction"
        )
    spread = (count1 + count2) / (count1 * count2 * (1.0 - ratio) * ratio)
    log_arg = spread * base**2 / eps_sec**2
    if log_arg <= 1.0:
        return 0.0
    variance = (count1 + count2) * (1.0 - ratio) * ratio / (count1 * count2 * math.log(2.0))
    return math.sqrt(variance * math.log2(log_arg))


def phase_error_upper(
    inputs: BoundInputs, options: BoundOptions = DEFAULT_BOUND_OPTIONS
) -> float:
    """Upper bound on the Z-basis phase error rate, clamped into [0, 0.5].

    Raises NoKeyError when either single-photon lower bound vanishes; with no
    single-photon credit there is nothing to extract a key from.
    """
    s1_z = single_photon_lower(inputs, Basis.Z, options)
    s1_x = single_photon_lower(inputs, Basis.X, options)
    if s1_z <= 0.0 or s1_x <= 0.0:
        raise NoKeyError("phase_error_upper: single-photon lower bound vanished")
    ratio = single_photon_errors_upper(inputs) / s1_x
    if ratio <= 0.0:
        # Error-free limit: the fluctuation term vanishes with the ratio.
        return 0.0
    if ratio >= 0.5:
        return 0.5
    phi = ratio + phase_error_fluctuation(
        inputs.sec.eps_sec, ratio, s1_z, s1_x, options.gamma_base
    )
    return min(0.5, phi)


def error_correction_leakage(obs: Observations, sec: SecurityParams) -> float:
    """Bits disclosed during error correction: ec_efficiency * n_Z * h(QBER)."""
    if obs.n_z <= 0.0:
        raise ParameterError("error_correction_leakage: needs n_z > 0")
    return sec.ec_efficiency * obs.n_z * binary_entropy(obs.m_z / obs.n_z)


@dataclass(frozen=True)
class KeyEstimate:
    """All intermediate bounds behind one secret key length evaluation."""

    s0_lower: float
    s0_upper: float | None
    s1_lower_z: float
    s1_lower_x: float
    v1_upper_x: float
    phase_error_upper: float
    lambda_ec: float
    key_length: float
    status: str


def estimate_key(
    inputs: BoundInputs, options: BoundOptions = DEFAULT_BOUND_OPTIONS
) -> KeyEstimate:
    """Run the whole estimation chain once and keep every intermediate value."""
    params = inputs.params
    s0_lower = vacuum_events_lower(inputs, Basis.Z)
    s0_upper = (
        vacuum_events_upper(inputs, Basis.Z, options)
        if params.variant is Variant.ONE_DECOY
        else None
    )
    s1_z = single_photon_lower(inputs, Basis.Z, options)
    s1_x = single_photon_lower(inputs, Basis.X, options)
    v1_x = single_photon_errors_upper(inputs)
    # An empty block discloses nothing; the chain ends in "no_key" below.
    lambda_ec = (
        error_correction_leakage(inputs.obs, inputs.sec) if inputs.obs.n_z > 0.0 else 0.0
    )
    try:
        phi = phase_error_upper(inputs, options)
    except NoKeyError:
        return KeyEstimate(
            s0_lower=s0_lower,
            s0_upper=s0_upper,
            s1_lower_z=s1_z,
            s1_lower_x=s1_x,
            v1_upper_x=v1_x,
            phase_error_upper=0.5,
            lambda_ec=lambda_ec,
            key_length=0.0,
            status="no_key",
        )
    penalty = inputs.budget.a * math.log2(inputs.budget.b / inputs.sec.eps_sec) + math.log2(
        2.0 / inputs.sec.eps_cor
    )
    length = s0_lower + s1_z * (1.0 - binary_entropy(phi)) - lambda_ec - penalty
    return KeyEstimate(
        s0_lower=s0_lower,
        s0_upper=s0_upper,
        s1_lower_z=s1_z,
        s1_lower_x=s1_x,
        v1_upper_x=v1_x,
        phase_error_upper=phi,
        lambda_ec=lambda_ec,
        key_length=max(0.0, length),
        status="ok",
    )


def secret_key_length(
    inputs: BoundInputs, options: BoundOptions = DEFAULT_BOUND_OPTIONS
) -> float:
    """Extractable secret key length in bits, clamped at zero."""
    return estimate_key(inputs, options).key_length

"""End-to-end BB84 session engine.

Alice prepares polarization qubits in two conjugate bases; the channel is a
loss factor plus a Mueller matrix; Bob's receiver picks a basis per pulse and
resolves clicks on two analyzer arms with Poissonian signal statistics, dark
counts, and background light.  Sifting, error estimation, CASCADE
reconciliation, and Toeplitz privacy amplification complete the pipeline.

The detection stage draws its per-pulse uniforms in a fixed order that does
not depend on outcomes, so runs at different channel transmissions but the
same seed use common random numbers and vary smoothly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..polarization import MuellerMatrix, StokesVector
from .cascade import cascade_reconcile
from .classical_channel import InProcessChannelPair
from .privacy import privacy_amplify

BASIS_RECTILINEAR = 0
BASIS_DIAGONAL = 1

# (basis, bit) -> Stokes vector of the prepared state.
STATE_MAP = {
    (BASIS_RECTILINEAR, 0): StokesVector(1, 1, 0, 0),
    (BASIS_RECTILINEAR, 1): StokesVector(1, -1, 0, 0),
    (BASIS_DIAGONAL, 0): StokesVector(1, 0, 1, 0),
    (BASIS_DIAGONAL, 1): StokesVector(1, 0, -1, 0),
}

MIN_SIFTED_BITS = 256


class InsufficientKeyError(RuntimeError):
    """Sifted key too short to post-process; carries the partial stats."""

    def __init__(self, message: str, stats: "SessionStats"):
        super().__init__(message)
        self.stats = stats


class DetectionOutcome(Enum):
    NO_CLICK = "no_click"
    BIT_0 = "bit_0"
    BIT_1 = "bit_1"
    DOUBLE = "double"


@dataclass(frozen=True)
class SessionConfig:
    pulse_rate: float = 1e6
    mean_photon_number: float = 0.1
    channel_transmission: float = 1.0
    channel_mueller: MuellerMatrix = field(default_factory=MuellerMatrix.identity)
    detector_efficiency: float = 0.077
    dark_count_prob: float = 0.0
    background_prob: float = 0.0
    intrinsic_error: float = 0.0
    sifting_factor: float = 0.5
    n_pulses: int = 1_000_000
    extraction_ratio: float = 0.11
    qber_estimation_fraction: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.pulse_rate <= 0:
            raise ValueError("pulse_rate must be positive")
        if self.n_pulses < 1:
            raise ValueError("n_pulses must be >= 1")
        if self.mean_photon_number < 0:
            raise ValueError("mean_photon_number must be non-negative")
        for name in (
            "channel_transmission",
            "detector_efficiency",
            "dark_count_prob",
            "background_prob",
            "extraction_ratio",
            "qber_estimation_fraction",
        ):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 <= self.intrinsic_error <= 0.5:
            raise ValueError("intrinsic_error must lie in [0, 0.5]")
        if self.sifting_factor <= 0:
            raise ValueError("sifting_factor must be positive")


@dataclass(frozen=True)
class SessionStats:
    qber: float
    sifted_rate: float
    secure_rate: float
    detected_pulses: int
    sifted_bits: int
    wrong_bits: int
    leaked_bits: int

    def to_dict(self) -> dict:
        return {
            "qber": self.qber,
            "sifted_rate": self.sifted_rate,
            "secure_rate": self.secure_rate,
            "detected_pulses": self.detected_pulses,
            "sifted_bits": self.sifted_bits,
            "wrong_bits": self.wrong_bits,
            "leaked_bits": self.leaked_bits,
        }


@dataclass
class KeyMaterial:
    raw_alice_bits: np.ndarray
    raw_alice_bases: np.ndarray
    raw_bob_bits: np.ndarray  # -1 where no usable click
    raw_bob_bases: np.ndarray
    sifted_alice: np.ndarray
    sifted_bob: np.ndarray
    reconciled: np.ndarray
    secret: np.ndarray
    leaked_bits: int


def alice_prepare(n: int, rng) -> tuple[np.ndarray, np.ndarray, list[StokesVector]]:
    """Uniform random bits and bases with their prepared Stokes vectors."""
    if n < 1:
        raise ValueError("n must be >= 1")
    bits = rng.integers(0, 2, size=n, dtype=np.uint8)
    bases = rng.integers(0, 2, size=n, dtype=np.uint8)
    states = [STATE_MAP[(int(b), int(x))] for b, x in zip(bases, bits)]
    return bits, bases, states


def _arm_probabilities(state: StokesVector, bob_basis: int, cfg: SessionConfig):
    """Malus projections of the channel output onto Bob's two analyzer arms."""
    out = cfg.channel_mueller.apply(state)
    if out.s0 <= 0:
        raise ValueError("channel extinguishes the state (s0 <= 0)")
    comp = out.s1 if bob_basis == BASIS_RECTILINEAR else out.s2
    p0 = 0.5 * (1.0 + comp / out.s0)
    p1 = 1.0 - p0
    e = cfg.intrinsic_error
    return p0 * (1 - 2 * e) + e, p1 * (1 - 2 * e) + e


def _click_prob(p_arm: float, cfg: SessionConfig) -> float:
    p_signal = 1.0 - math.exp(
        -cfg.mean_photon_number
        * cfg.channel_transmission
        * cfg.detector_efficiency
        * p_arm
    )
    p_noise = cfg.dark_count_prob + cfg.background_prob
    return 1.0 - (1.0 - p_signal) * (1.0 - p_noise)


def detect_pulse(state: StokesVector, bob_basis: int, cfg: SessionConfig, rng) -> DetectionOutcome:
    """Resolve one received pulse on the two analyzer arms of Bob's basis."""
    p0, p1 = _arm_probabilities(state, bob_basis, cfg)
    c0 = rng.random() < _click_prob(p0, cfg)
    c1 = rng.random() < _click_prob(p1, cfg)
    if c0 and c1:
        return DetectionOutcome.DOUBLE
    if c0:
        return DetectionOutcome.BIT_0
    if c1:
        return DetectionOutcome.BIT_1
    return DetectionOutcome.NO_CLICK


def sift(alice_bases, bob_bases, outcomes, alice_bits, double_rng) -> tuple[np.ndarray, np.ndarray]:
    """Keep single clicks (and squashed double clicks) with matching bases.

    ``outcomes`` is a sequence of :class:`DetectionOutcome`; double clicks are
    assigned a random bit drawn from ``double_rng`` and kept.
    """
    alice_bases = np.asarray(alice_bases)
    bob_bases = np.asarray(bob_bases)
    alice_bits = np.asarray(alice_bits)
    if not len(alice_bases) == len(bob_bases) == len(outcomes) == len(alice_bits):
        raise ValueError("input lengths must match")
    kept_a, kept_b = [], []
    for a_basis, b_basis, outcome, a_bit in zip(alice_bases, bob_bases, outcomes, alice_bits):
        if outcome is DetectionOutcome.NO_CLICK or a_basis != b_basis:
            continue
        if outcome is DetectionOutcome.DOUBLE:
            bob_bit = int(double_rng.random() < 0.5)
        else:
            bob_bit = 0 if outcome is DetectionOutcome.BIT_0 else 1
        kept_a.append(int(a_bit))
        kept_b.append(bob_bit)
    return np.array(kept_a, dtype=np.uint8), np.array(kept_b, dtype=np.uint8)


def compute_qber(sifted_alice, sifted_bob) -> float:
    """Fraction of sifted positions where the two keys disagree."""
    a = np.asarray(sifted_alice)
    b = np.asarray(sifted_bob)
    if len(a) != len(b):
        raise ValueError("sifted keys must have equal length")
    if len(a) == 0:
        raise ValueError("QBER is undefined for empty keys")
    return float(np.mean(a != b))


def sifted_key_rate(cfg: SessionConfig) -> float:
    """Analytic sifted-key rate: f * mu * T * q * eta / 2."""
    return (
        cfg.pulse_rate
        * cfg.mean_photon_number
        * cfg.channel_transmission
        * cfg.sifting_factor
        * cfg.detector_efficiency
        / 2.0
    )


def estimate_qber_disclosed(sifted_alice, sifted_bob, fraction: float, rng):
    """Protocol-realistic QBER estimator: disclose and discard a random sample.

    Returns (estimate, remaining_alice, remaining_bob, disclosed_count).
    """
    a = np.asarray(sifted_alice, dtype=np.uint8)
    b = np.asarray(sifted_bob, dtype=np.uint8)
    n = len(a)
    sample = rng.random(n) < fraction
    n_sample = int(np.count_nonzero(sample))
    if n_sample == 0:
        raise ValueError("disclosed sample is empty; increase the fraction")
    estimate = float(np.mean(a[sample] != b[sample]))
    return estimate, a[~sample], b[~sample], n_sample


# Pulses are processed in fixed-size chunks so memory stays bounded for
# large sessions without changing the draw schedule for a given seed.
_DETECT_CHUNK = 1 << 21


def _detect_chunk(cfg: SessionConfig, rng, n: int, p0_table: np.ndarray):
    bits = rng.integers(0, 2, size=n, dtype=np.uint8)
    bases = rng.integers(0, 2, size=n, dtype=np.uint8)
    bob_bases = rng.integers(0, 2, size=n, dtype=np.uint8)
    u0 = rng.random(n)
    u1 = rng.random(n)
    u_double = rng.random(n)

    p0 = p0_table[bases, bits, bob_bases]
    p1 = 1.0 - p0

    mu_eff = cfg.mean_photon_number * cfg.channel_transmission * cfg.detector_efficiency
    p_noise = cfg.dark_count_prob + cfg.background_prob
    pc0 = 1.0 - np.exp(-mu_eff * p0) * (1.0 - p_noise)
    pc1 = 1.0 - np.exp(-mu_eff * p1) * (1.0 - p_noise)

    c0 = u0 < pc0
    c1 = u1 < pc1
    detected = c0 | c1
    double = c0 & c1
    bob_bits = np.where(double, (u_double < 0.5).astype(np.uint8), c1.astype(np.uint8))
    return bits, bases, bob_bases, detected, bob_bits


def _detect_vectorized(cfg: SessionConfig, rng):
    """Vectorized prepare + transmit + detect with a fixed draw schedule."""
    # Arm probabilities for the 4 states x 2 measurement bases.
    p0_table = np.empty((2, 2, 2))  # [basis][bit][bob_basis]
    for (basis, bit), state in STATE_MAP.items():
        for bob_basis in (BASIS_RECTILINEAR, BASIS_DIAGONAL):
            p0, _ = _arm_probabilities(state, bob_basis, cfg)
            p0_table[basis, bit, bob_basis] = p0

    chunks = []
    remaining = cfg.n_pulses
    while remaining > 0:
        n = min(remaining, _DETECT_CHUNK)
        chunks.append(_detect_chunk(cfg, rng, n, p0_table))
        remaining -= n
    return tuple(np.concatenate(parts) for parts in zip(*chunks))


def run_session(cfg: SessionConfig) -> tuple[SessionStats, KeyMaterial]:
    """Run a full BB84 session: prepare, detect, sift, reconcile, amplify."""
    rng = np.random.default_rng(cfg.seed)
    bits, bases, bob_bases, detected, bob_bits = _detect_vectorized(cfg, rng)

    keep = detected & (bases == bob_bases)
    sifted_alice = bits[keep]
    sifted_bob = bob_bits[keep]
    duration = cfg.n_pulses / cfg.pulse_rate
    detected_pulses = int(np.count_nonzero(detected))
    sifted_bits = int(len(sifted_alice))

    if sifted_bits < MIN_SIFTED_BITS:
        qber = float(np.mean(sifted_alice != sifted_bob)) if sifted_bits else 0.0
        stats = SessionStats(
            qber=qber,
            sifted_rate=sifted_bits / duration,
            secure_rate=0.0,
            detected_pulses=detected_pulses,
            sifted_bits=sifted_bits,
            wrong_bits=int(np.count_nonzero(sifted_alice != sifted_bob)),
            leaked_bits=0,
        )
        raise InsufficientKeyError(
            f"sifted key of {sifted_bits} bits is below the {MIN_SIFTED_BITS}-bit minimum",
            stats,
        )

    qber = compute_qber(sifted_alice, sifted_bob)
    wrong_bits = int(np.count_nonzero(sifted_alice != sifted_bob))
    leak_from_estimation = 0

    cascade_alice, cascade_bob = sifted_alice, sifted_bob
    if cfg.qber_estimation_fraction > 0:
        qber_est, cascade_alice, cascade_bob, leak_from_estimation = estimate_qber_disclosed(
            sifted_alice, sifted_bob, cfg.qber_estimation_fraction, rng
        )
    else:
        qber_est = qber
    qber_est = min(0.49, max(qber_est, 1.0 / len(cascade_alice)))

    chan = InProcessChannelPair()
    reconciled, leaked = cascade_reconcile(cascade_alice, cascade_bob, qber_est, chan, rng)
    leaked += leak_from_estimation
    secret = privacy_amplify(reconciled, leaked, rng, extraction_ratio=cfg.extraction_ratio)

    stats = SessionStats(
        qber=qber,
        sifted_rate=sifted_bits / duration,
        secure_rate=len(secret) / duration,
        detected_pulses=detected_pulses,
        sifted_bits=sifted_bits,
        wrong_bits=wrong_bits,
        leaked_bits=leaked,
    )
    material = KeyMaterial(
        raw_alice_bits=bits,
        raw_alice_bases=bases,
        raw_bob_bits=np.where(detected, bob_bits.astype(np.int16), -1),
        raw_bob_bases=bob_bases,
        sifted_alice=sifted_alice,
        sifted_bob=sifted_bob,
        reconciled=reconciled,
        secret=secret,
        leaked_bits=leaked,
    )
    return stats, material

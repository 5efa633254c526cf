"""BB84 session engine: preparation, detection, sifting, reconciliation,
privacy amplification, and the classical-channel plumbing they need."""

from .cascade import ProtocolError, cascade_reconcile, reconcile_with_oracle, serve_parity_queries
from .classical_channel import (
    MSG_PARITY_REQUEST,
    MSG_PARITY_RESPONSE,
    MSG_PERMUTATION_SEED,
    MSG_VERIFICATION,
    FrameDecoder,
    FramedStreamChannel,
    FramingError,
    InProcessChannelPair,
    encode_frame,
)
from .privacy import privacy_amplify, toeplitz_hash
from .session import (
    BASIS_DIAGONAL,
    BASIS_RECTILINEAR,
    STATE_MAP,
    DetectionOutcome,
    InsufficientKeyError,
    KeyMaterial,
    SessionConfig,
    SessionStats,
    alice_prepare,
    compute_qber,
    detect_pulse,
    estimate_qber_disclosed,
    run_session,
    sift,
    sifted_key_rate,
)

__all__ = [
    "BASIS_DIAGONAL",
    "BASIS_RECTILINEAR",
    "STATE_MAP",
    "DetectionOutcome",
    "FrameDecoder",
    "FramedStreamChannel",
    "FramingError",
    "InProcessChannelPair",
    "InsufficientKeyError",
    "KeyMaterial",
    "MSG_PARITY_REQUEST",
    "MSG_PARITY_RESPONSE",
    "MSG_PERMUTATION_SEED",
    "MSG_VERIFICATION",
    "ProtocolError",
    "SessionConfig",
    "SessionStats",
    "alice_prepare",
    "cascade_reconcile",
    "compute_qber",
    "detect_pulse",
    "encode_frame",
    "estimate_qber_disclosed",
    "privacy_amplify",
    "reconcile_with_oracle",
    "run_session",
    "serve_parity_queries",
    "sift",
    "sifted_key_rate",
    "toeplitz_hash",
]

"""Mueller-matrix estimation of the water channel from 16 intensity readings.

The measurement train is P2 . QWP(theta2) . channel . QWP(theta1) . P1 with
both polarizers horizontal and an unpolarized unit-intensity source entering
P1.  The recorded intensity is linear in the 16 channel-matrix elements, so
the full {0, pi/8, pi/4, 3pi/8}^2 angle grid yields a well-conditioned 16x16
linear system solved by least squares.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .polarization import (
    MuellerMatrix,
    PhysicalityError,
    StokesVector,
    polarizer_mueller,
    quarter_waveplate,
    state_fidelity,
)

MEASUREMENT_ANGLES = (0.0, math.pi / 8, math.pi / 4, 3 * math.pi / 8)
CONDITION_LIMIT = 1e8

# BB84 signal states at unit intensity, with the analyzer angles of the
# correct and orthogonal detection arms.
BB84_STATES = {
    "H": (StokesVector(1, 1, 0, 0), 0.0, math.pi / 2),
    "V": (StokesVector(1, -1, 0, 0), math.pi / 2, 0.0),
    "+45": (StokesVector(1, 0, 1, 0), math.pi / 4, 3 * math.pi / 4),
    "-45": (StokesVector(1, 0, -1, 0), 3 * math.pi / 4, math.pi / 4),
}


class IllConditionedError(ValueError):
    """The measurement angle set does not determine the channel matrix."""


@dataclass(frozen=True)
class PolarimetricMeasurement:
    theta1: float
    theta2: float
    intensity: float

    def __post_init__(self):
        if self.intensity < 0:
            raise ValueError(f"intensity must be non-negative, got {self.intensity}")


@dataclass(frozen=True)
class ChannelMuellerEstimate:
    matrix: MuellerMatrix
    condition_number: float
    residual_norm: float

    def to_dict(self) -> dict:
        return {
            "matrix": self.matrix.m.tolist(),
            "condition_number": self.condition_number,
            "residual_norm": self.residual_norm,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def measurement_grid() -> list[tuple[float, float]]:
    """The full 4x4 (theta1, theta2) grid used by the estimation procedure."""
    return [(t1, t2) for t1 in MEASUREMENT_ANGLES for t2 in MEASUREMENT_ANGLES]


def _analyzer_row(theta2: float) -> np.ndarray:
    # First row of P2 . QWP(theta2).
    return (polarizer_mueller(0.0) @ quarter_waveplate(theta2)).m[0, :]


def _source_column(theta1: float) -> np.ndarray:
    # QWP(theta1) . P1 applied to an unpolarized unit-intensity source.
    s_in = np.array([1.0, 0.0, 0.0, 0.0])
    return (quarter_waveplate(theta1) @ polarizer_mueller(0.0)).m @ s_in


def predict_intensity(m_w: MuellerMatrix, theta1: float, theta2: float) -> float:
    """Detected intensity for one (theta1, theta2) setting of the train."""
    return float(_analyzer_row(theta2) @ m_w.m @ _source_column(theta1))


def _design_row(theta1: float, theta2: float) -> np.ndarray:
    # intensity = sum_ij analyzer[i] * M_w[i, j] * source[j]
    return np.outer(_analyzer_row(theta2), _source_column(theta1)).ravel()


def estimate_mueller(measurements) -> ChannelMuellerEstimate:
    """Least-squares recovery of the channel Mueller matrix.

    ``measurements`` is a sequence of 16 :class:`PolarimetricMeasurement`
    covering the full angle grid.  The result is normalized to m[0][0] = 1.
    """
    measurements = list(measurements)
    if len(measurements) != 16:
        raise ValueError(f"need 16 measurements, got {len(measurements)}")
    for m in measurements:
        if m.intensity < 0:
            raise ValueError("negative intensity")
    design = np.array([_design_row(m.theta1, m.theta2) for m in measurements])
    intensities = np.array([m.intensity for m in measurements])
    cond = float(np.linalg.cond(design))
    if cond > CONDITION_LIMIT:
        raise IllConditionedError(
            f"design matrix condition number {cond:.3g} exceeds {CONDITION_LIMIT:.0e}; "
            "the angle set does not determine the matrix"
        )
    sol, _, _, _ = np.linalg.lstsq(design, intensities, rcond=None)
    residual = float(np.linalg.norm(design @ sol - intensities))
    matrix = sol.reshape(4, 4)
    if matrix[0, 0] == 0:
        raise ValueError("recovered matrix has zero total-intensity element")
    matrix = matrix / matrix[0, 0]
    return ChannelMuellerEstimate(
        matrix=MuellerMatrix(matrix),
        condition_number=cond,
        residual_norm=residual,
    )


def estimate_mueller_from_stokes(pairs) -> ChannelMuellerEstimate:
    """Same linear solve fed by four (S_in, S_out) Stokes pairs.

    Covers the direct-readout procedure where a polarization meter records
    full output Stokes vectors: 4 vectors x 4 components give 16 equations.
    """
    pairs = list(pairs)
    if len(pairs) != 4:
        raise ValueError(f"need 4 Stokes pairs, got {len(pairs)}")
    rows = []
    rhs = []
    for s_in, s_out in pairs:
        a_in = s_in.as_array()
        a_out = s_out.as_array()
        for comp in range(4):
            row = np.zeros(16)
            row[comp * 4 : comp * 4 + 4] = a_in
            rows.append(row)
            rhs.append(a_out[comp])
    design = np.array(rows)
    rhs = np.array(rhs)
    cond = float(np.linalg.cond(design))
    if cond > CONDITION_LIMIT:
        raise IllConditionedError(
            f"Stokes input set is degenerate (condition number {cond:.3g})"
        )
    sol, _, _, _ = np.linalg.lstsq(design, rhs, rcond=None)
    residual = float(np.linalg.norm(design @ sol - rhs))
    matrix = sol.reshape(4, 4)
    if matrix[0, 0] == 0:
        raise ValueError("recovered matrix has zero total-intensity element")
    matrix = matrix / matrix[0, 0]
    return ChannelMuellerEstimate(
        matrix=MuellerMatrix(matrix), condition_number=cond, residual_norm=residual
    )


def _arm_intensity(s: StokesVector, analyzer_angle: float) -> float:
    out = polarizer_mueller(analyzer_angle).apply(s)
    if out.s0 < -1e-9:
        raise PhysicalityError(f"negative analyzer intensity {out.s0}")
    return max(0.0, out.s0)


def qber_from_mueller(m_w: MuellerMatrix) -> float:
    """Mean wrong-detection probability of the four BB84 states.

    Each state is propagated through the channel and projected onto the
    correct and orthogonal analyzers of its own basis; the wrong-click
    probability is I_wrong / (I_right + I_wrong), averaged over states.
    """
    probs = []
    for s_in, right, wrong in BB84_STATES.values():
        s_out = m_w.apply(s_in)
        i_right = _arm_intensity(s_out, right)
        i_wrong = _arm_intensity(s_out, wrong)
        total = i_right + i_wrong
        if total <= 0:
            raise PhysicalityError("channel extinguishes a signal state")
        probs.append(i_wrong / total)
    return float(np.mean(probs))


@dataclass(frozen=True)
class FidelityReport:
    per_state: dict
    mean: float


def channel_fidelity_report(m_w: MuellerMatrix) -> FidelityReport:
    """Fidelity between each BB84 input state and its (normalized) output."""
    per_state = {}
    for name, (s_in, _, _) in BB84_STATES.items():
        s_out = m_w.apply(s_in)
        per_state[name] = state_fidelity(s_in, s_out)
    return FidelityReport(per_state=per_state, mean=float(np.mean(list(per_state.values()))))


def read_measurements_csv(path) -> list[PolarimetricMeasurement]:
    """Load measurements from CSV with columns theta1_rad, theta2_rad, intensity."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"theta1_rad", "theta2_rad", "intensity"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"CSV must have columns {sorted(required)}")
        for row in reader:
            out.append(
                PolarimetricMeasurement(
                    theta1=float(row["theta1_rad"]),
                    theta2=float(row["theta2_rad"]),
                    intensity=float(row["intensity"]),
                )
            )
    return out

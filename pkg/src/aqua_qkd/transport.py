"""Monte Carlo photon transport through an absorbing/scattering water channel.

Analog transport in MCML style: free path lengths are sampled from the total
attenuation coefficient; each interaction either absorbs the photon (with
probability absorption/attenuation) or scatters it through a polar angle
drawn from a two-term Henyey-Greenstein mixture.  The receiver accepts
photons that exit the far plane inside a circular aperture and within a
field-of-view cone.

``run_transport`` assigns every photon index its own counter-based random
substream (see :mod:`aqua_qkd.rngstream`), so results are bit-identical for a
fixed (seed, n_photons) regardless of batching or worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from . import rngstream

_DIRECTION_TOL = 1e-9

# Per-photon draw-slot layout: 4 slots for the source sample, then a fixed
# stride of 5 per transport step (path, absorb, lobe choice, cos(theta),
# azimuth), so a photon's stream never depends on other photons' histories.
_SOURCE_SLOTS = 4
_STEP_STRIDE = 5


@dataclass(frozen=True)
class TTHGParams:
    """Two-term Henyey-Greenstein mixture: alpha * HG(g1) + (1-alpha) * HG(g2)."""

    alpha: float = 0.95
    g1: float = 0.65
    g2: float = -0.30

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        for name, g in (("g1", self.g1), ("g2", self.g2)):
            if not -1.0 < g < 1.0:
                raise ValueError(f"{name} must lie in (-1, 1), got {g}")


@dataclass(frozen=True)
class BeamParams:
    """Gaussian source: transverse waist and angular divergence."""

    waist_radius: float = 2.5e-3
    divergence_half_angle: float = 1e-3

    def __post_init__(self):
        if self.waist_radius <= 0:
            raise ValueError("waist_radius must be positive")
        if self.divergence_half_angle < 0:
            raise ValueError("divergence_half_angle must be non-negative")


@dataclass(frozen=True)
class ChannelParams:
    """Water optical properties plus receiver geometry."""

    absorption: float
    attenuation: float
    length: float
    aperture_diameter: float = 0.0254
    fov_half_angle: float = math.radians(5.0)
    phase_fn: TTHGParams = field(default_factory=TTHGParams)
    lateral_bound: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.absorption <= self.attenuation:
            raise ValueError("need 0 <= absorption <= attenuation")
        if self.length <= 0:
            raise ValueError("length must be positive")
        if self.aperture_diameter <= 0:
            raise ValueError("aperture_diameter must be positive")
        if not 0.0 < self.fov_half_angle <= math.pi / 2:
            raise ValueError("fov_half_angle must lie in (0, pi/2]")
        if self.lateral_bound <= 0:
            raise ValueError("lateral_bound must be positive")

    @property
    def albedo(self) -> float:
        if self.attenuation == 0:
            return 0.0
        return 1.0 - self.absorption / self.attenuation


@dataclass
class PhotonState:
    """One photon history record."""

    position: np.ndarray
    direction: np.ndarray
    scatter_count: int = 0
    alive: bool = True
    at_exit_plane: bool = False

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.direction = np.asarray(self.direction, dtype=float)
        norm = float(np.linalg.norm(self.direction))
        if abs(norm - 1.0) > _DIRECTION_TOL:
            raise ValueError(f"direction must be unit length, |d| = {norm}")


@dataclass(frozen=True)
class TransportStats:
    launched: int
    received: int
    received_unscattered: int
    received_scattered: int
    ballistic_transmission: float
    scattered_fraction_of_received: float

    def __post_init__(self):
        if self.received != self.received_unscattered + self.received_scattered:
            raise ValueError("received must equal unscattered + scattered")
        if max(self.received, self.received_unscattered, self.received_scattered) > self.launched:
            raise ValueError("counts cannot exceed launched")

    def to_dict(self) -> dict:
        return asdict(self)


def sample_source(beam: BeamParams, rng) -> PhotonState:
    """Launch one photon from the Gaussian source at the entrance plane.

    Transverse offsets are normal with sigma = waist_radius / 2 per axis;
    the direction is tilted by per-axis normal angles with sigma equal to
    the divergence half-angle, then renormalized.
    """
    sigma = beam.waist_radius / 2.0
    x, y = rng.normal(0.0, 1.0, size=2) * sigma if sigma > 0 else (0.0, 0.0)
    tx, ty = rng.normal(0.0, 1.0, size=2) * beam.divergence_half_angle
    d = np.array([tx, ty, 1.0])
    d /= np.linalg.norm(d)
    return PhotonState(position=np.array([x, y, 0.0]), direction=d)


def sample_path_length(attenuation: float, rng) -> float:
    """Exponential free path: -ln(u) / attenuation with u uniform in (0, 1]."""
    if attenuation <= 0:
        raise ValueError(f"attenuation must be positive, got {attenuation}")
    u = 1.0 - rng.random()  # rng.random() is in [0, 1), so u is in (0, 1]
    return -math.log(u) / attenuation


def _hg_cosine(g: float, u: float) -> float:
    if abs(g) < 1e-6:
        return 2.0 * u - 1.0
    frac = (1.0 - g * g) / (1.0 + g - 2.0 * g * u)
    return (1.0 + g * g - frac * frac) / (2.0 * g)


def sample_tthg_cosine(p: TTHGParams, rng) -> float:
    """Polar scattering cosine from the two-term HG mixture (inverse CDF)."""
    g = p.g1 if rng.random() < p.alpha else p.g2
    cos_t = _hg_cosine(g, rng.random())
    return min(1.0, max(-1.0, cos_t))


def _rotate_direction(d: np.ndarray, cos_t: float, phi: float) -> np.ndarray:
    sin_t = math.sqrt(max(0.0, 1.0 - cos_t * cos_t))
    ux, uy, uz = d
    if abs(uz) > 0.99999:
        new = np.array(
            [sin_t * math.cos(phi), sin_t * math.sin(phi), math.copysign(cos_t, uz)]
        )
    else:
        den = math.sqrt(1.0 - uz * uz)
        new = np.array(
            [
                sin_t * (ux * uz * math.cos(phi) - uy * math.sin(phi)) / den + ux * cos_t,
                sin_t * (uy * uz * math.cos(phi) + ux * math.sin(phi)) / den + uy * cos_t,
                -sin_t * math.cos(phi) * den + uz * cos_t,
            ]
        )
    return new / np.linalg.norm(new)


def propagate(photon: PhotonState, ch: ChannelParams, rng, max_events: int = 100_000) -> PhotonState:
    """Follow one photon until it exits the far plane, is absorbed, or escapes.

    Returns the terminal state: ``at_exit_plane`` is set when the photon
    reaches z = length (its position lies exactly on the plane); ``alive`` is
    False for absorbed, backscattered, or laterally escaped photons.
    """
    pos = photon.position.copy()
    d = photon.direction.copy()
    n_scatter = photon.scatter_count
    for _ in range(max_events):
        step = sample_path_length(ch.attenuation, rng)
        if d[2] > 0:
            to_exit = (ch.length - pos[2]) / d[2]
            if to_exit <= step:
                pos = pos + to_exit * d
                pos[2] = ch.length
                return PhotonState(pos, d, n_scatter, alive=True, at_exit_plane=True)
        pos = pos + step * d
        if pos[2] < 0 or math.hypot(pos[0], pos[1]) > ch.lateral_bound:
            return PhotonState(pos, d, n_scatter, alive=False)
        if rng.random() < ch.absorption / ch.attenuation:
            return PhotonState(pos, d, n_scatter, alive=False)
        cos_t = sample_tthg_cosine(ch.phase_fn, rng)
        phi = 2.0 * math.pi * rng.random()
        d = _rotate_direction(d, cos_t, phi)
        n_scatter += 1
    return PhotonState(pos, d, n_scatter, alive=False)


def receiver_accept(photon: PhotonState, ch: ChannelParams) -> bool:
    """Aperture-and-FOV test for a photon sitting on the exit plane."""
    if not photon.at_exit_plane:
        return False
    r = math.hypot(photon.position[0], photon.position[1])
    if r > ch.aperture_diameter / 2.0:
        return False
    return photon.direction[2] >= math.cos(ch.fov_half_angle)


def _simulate_batch(
    ch: ChannelParams, beam: BeamParams, seed: int, start: int, count: int, max_events: int
) -> tuple[int, int]:
    """Vectorized transport of photons [start, start+count); returns
    (received_unscattered, received_scattered)."""
    ids = np.arange(start, start + count, dtype=np.uint64)

    # Source sample: slots 0..3.
    gx, gy = rngstream.normal_pair(seed, ids, np.uint64(0))
    tx, ty = rngstream.normal_pair(seed, ids, np.uint64(2))
    sigma = beam.waist_radius / 2.0
    x = gx * sigma
    y = gy * sigma
    d = np.stack(
        [tx * beam.divergence_half_angle, ty * beam.divergence_half_angle, np.ones(count)],
        axis=1,
    )
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    pos = np.stack([x, y, np.zeros(count)], axis=1)
    n_scatter = np.zeros(count, dtype=np.int64)

    recv_unscattered = 0
    recv_scattered = 0
    p_absorb = ch.absorption / ch.attenuation
    cos_fov = math.cos(ch.fov_half_angle)
    half_ap = ch.aperture_diameter / 2.0

    alive = np.ones(count, dtype=bool)
    for step_idx in range(max_events):
        if not alive.any():
            break
        idx = np.nonzero(alive)[0]
        sid = ids[idx]
        base = np.uint64(_SOURCE_SLOTS + _STEP_STRIDE * step_idx)

        u_path = rngstream.uniform(seed, sid, base)
        step = -np.log(u_path) / ch.attenuation

        p = pos[idx]
        dd = d[idx]
        exiting = (dd[:, 2] > 0) & ((ch.length - p[:, 2]) / np.where(dd[:, 2] > 0, dd[:, 2], 1.0) <= step)
        if exiting.any():
            e = idx[exiting]
            t = (ch.length - pos[e, 2]) / d[e, 2]
            xe = pos[e, 0] + t * d[e, 0]
            ye = pos[e, 1] + t * d[e, 1]
            ok = (np.hypot(xe, ye) <= half_ap) & (d[e, 2] >= cos_fov)
            sc = n_scatter[e] > 0
            recv_scattered += int(np.count_nonzero(ok & sc))
            recv_unscattered += int(np.count_nonzero(ok & ~sc))
            alive[e] = False

        cont = idx[~exiting]
        if cont.size == 0:
            continue
        pos[cont] += step[~exiting, None] * d[cont]
        lost = (pos[cont, 2] < 0) | (np.hypot(pos[cont, 0], pos[cont, 1]) > ch.lateral_bound)
        alive[cont[lost]] = False
        cont = cont[~lost]
        if cont.size == 0:
            continue

        scid = ids[cont]
        u_abs = rngstream.uniform(seed, scid, base + np.uint64(1))
        absorbed = u_abs < p_absorb
        alive[cont[absorbed]] = False
        cont = cont[~absorbed]
        if cont.size == 0:
            continue

        scid = ids[cont]
        u_lobe = rngstream.uniform(seed, scid, base + np.uint64(2))
        u_cos = rngstream.uniform(seed, scid, base + np.uint64(3))
        u_phi = rngstream.uniform(seed, scid, base + np.uint64(4))
        g = np.where(u_lobe < ch.phase_fn.alpha, ch.phase_fn.g1, ch.phase_fn.g2)
        near_iso = np.abs(g) < 1e-6
        frac = (1.0 - g * g) / (1.0 + g - 2.0 * g * u_cos)
        cos_t = np.where(
            near_iso,
            2.0 * u_cos - 1.0,
            (1.0 + g * g - frac * frac) / np.where(near_iso, 1.0, 2.0 * g),
        )
        cos_t = np.clip(cos_t, -1.0, 1.0)
        sin_t = np.sqrt(1.0 - cos_t * cos_t)
        phi = 2.0 * np.pi * u_phi

        ux, uy, uz = d[cont, 0], d[cont, 1], d[cont, 2]
        straight = np.abs(uz) > 0.99999
        den = np.sqrt(np.maximum(1.0 - uz * uz, 1e-30))
        nx = np.where(
            straight,
            sin_t * np.cos(phi),
            sin_t * (ux * uz * np.cos(phi) - uy * np.sin(phi)) / den + ux * cos_t,
        )
        ny = np.where(
            straight,
            sin_t * np.sin(phi),
            sin_t * (uy * uz * np.cos(phi) + ux * np.sin(phi)) / den + uy * cos_t,
        )
        nz = np.where(
            straight,
            np.copysign(cos_t, uz),
            -sin_t * np.cos(phi) * den + uz * cos_t,
        )
        norm = np.sqrt(nx * nx + ny * ny + nz * nz)
        d[cont, 0] = nx / norm
        d[cont, 1] = ny / norm
        d[cont, 2] = nz / norm
        n_scatter[cont] += 1

    return recv_unscattered, recv_scattered


def run_transport(
    ch: ChannelParams,
    beam: BeamParams,
    n_photons: int,
    seed: int,
    n_workers: int = 1,
    batch_size: int = 262_144,
    max_events: int = 10_000,
) -> TransportStats:
    """Simulate ``n_photons`` independent histories and aggregate receiver counts.

    Deterministic for fixed (seed, n_photons): every photon index owns its own
    counter-based substream, and batch/worker partitioning only changes the
    order of commutative integer sums.
    """
    if n_photons < 1:
        raise ValueError("n_photons must be >= 1")
    batches = [
        (start, min(batch_size, n_photons - start))
        for start in range(0, n_photons, batch_size)
    ]
    if n_workers > 1 and len(batches) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(
                pool.map(
                    _batch_worker,
                    [(ch, beam, seed, s, c, max_events) for s, c in batches],
                )
            )
    else:
        results = [_simulate_batch(ch, beam, seed, s, c, max_events) for s, c in batches]

    unscattered = sum(r[0] for r in results)
    scattered = sum(r[1] for r in results)
    received = unscattered + scattered
    return TransportStats(
        launched=n_photons,
        received=received,
        received_unscattered=unscattered,
        received_scattered=scattered,
        ballistic_transmission=unscattered / n_photons,
        scattered_fraction_of_received=(scattered / received) if received else 0.0,
    )


def _batch_worker(args):
    return _simulate_batch(*args)

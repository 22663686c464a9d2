"""Parametric NLoS mmWave MIMO channel with block-to-block evolution.

The channel at block ``n`` is a sum of ``L`` rank-one ULA paths,

    H = sqrt(Nt * Nr / L) * Ar(aoa) @ diag(gains) @ At(aod)^H,

where the columns of ``Ar``/``At`` are unit-norm steering vectors. Between
blocks the path gains follow a first-order Gauss-Markov recursion and every
angle receives an independent uniform kick in ``[-delta, delta]``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

SPEED_OF_LIGHT = 3e8  # m/s, the rounded value used for the Doppler anchor


@dataclass(frozen=True)
class ChannelParams:
    """Array sizes and path count of one point-to-point link."""

    n_tx: int = 64
    n_rx: int = 64
    n_paths: int = 4
    spacing_ratio: float = 0.5

    def __post_init__(self):
        if self.n_tx < 1 or self.n_rx < 1:
            raise ValueError(f"antenna counts must be >= 1, got n_tx={self.n_tx}, n_rx={self.n_rx}")
        if not 1 <= self.n_paths <= min(self.n_tx, self.n_rx):
            raise ValueError(
                f"n_paths must lie in [1, min(n_tx, n_rx)] = [1, {min(self.n_tx, self.n_rx)}], got {self.n_paths}"
            )
        if not self.spacing_ratio > 0:
            raise ValueError(f"spacing_ratio must be positive, got {self.spacing_ratio}")


@dataclass(frozen=True)
class EvolutionParams:
    rho: float
    delta: float

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if self.delta < 0:
            raise ValueError(f"delta must be non-negative, got {self.delta}")


@dataclass(frozen=True)
class PathState:
    """Per-path departure angles, arrival angles and complex gains."""

    aod: np.ndarray
    aoa: np.ndarray
    gains: np.ndarray

    def __post_init__(self):
        n = len(self.gains)
        if len(self.aod) != n or len(self.aoa) != n:
            raise ValueError(
                f"path vectors disagree in length: aod={len(self.aod)}, aoa={len(self.aoa)}, gains={n}"
            )
        for name in ("aod", "aoa", "gains"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def n_paths(self) -> int:
        return len(self.gains)


def wrap_angle(angle):
    """Map angles into ``[-pi, pi)``."""
    wrapped = np.mod(np.asarray(angle, dtype=float) + np.pi, 2 * np.pi) - np.pi
    # mod can return exactly 2*pi - pi = pi after rounding
    return np.where(wrapped >= np.pi, -np.pi, wrapped)


def array_response(angle: float, n_antennas: int, spacing_ratio: float = 0.5) -> np.ndarray:
    """Unnormalized ULA response ``exp(j 2 pi (d/lambda) k sin(angle))``."""
    if n_antennas < 1:
        raise ValueError(f"n_antennas must be >= 1, got {n_antennas}")
    k = np.arange(n_antennas)
    return np.exp(1j * 2 * np.pi * spacing_ratio * k * np.sin(angle))


def steering_matrix(angles, n_antennas: int, spacing_ratio: float = 0.5) -> np.ndarray:
    """Columns ``array_response(angle) / sqrt(n_antennas)``, one per angle."""
    angles = np.atleast_1d(np.asarray(angles, dtype=float))
    k = np.arange(n_antennas)[:, None]
    return np.exp(1j * 2 * np.pi * spacing_ratio * k * np.sin(angles)[None, :]) / math.sqrt(n_antennas)


def assemble_channel(state: PathState, params: ChannelParams) -> np.ndarray:
    """Realize the ``n_rx x n_tx`` channel matrix for ``state``."""
    if state.n_paths != params.n_paths:
        raise ValueError(f"state has {state.n_paths} paths but params expect {params.n_paths}")
    a_r = steering_matrix(state.aoa, params.n_rx, params.spacing_ratio)
    a_t = steering_matrix(state.aod, params.n_tx, params.spacing_ratio)
    scale = math.sqrt(params.n_tx * params.n_rx / params.n_paths)
    return scale * (a_r * state.gains[None, :]) @ a_t.conj().T


def complex_normal(rng: np.random.Generator, size) -> np.ndarray:
    """Circular CN(0, 1) samples."""
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / math.sqrt(2)


def sample_initial_state(rng: np.random.Generator, params: ChannelParams) -> PathState:
    L = params.n_paths
    aod = rng.uniform(-np.pi, np.pi, L)
    aoa = rng.uniform(-np.pi, np.pi, L)
    gains = complex_normal(rng, L)
    return PathState(aod=aod, aoa=aoa, gains=gains)


def evolve_state(state: PathState, evo: EvolutionParams, rng: np.random.Generator) -> PathState:
    """Advance one block: Gauss-Markov gains, uniformly perturbed angles.

    Every path draws its own angle increments each block. The draw order
    (innovation, then AoD kicks, then AoA kicks) is fixed so that a seeded
    generator reproduces the same trajectory.
    """
    L = state.n_paths
    innovation = complex_normal(rng, L)
    d_aod = rng.uniform(-evo.delta, evo.delta, L)
    d_aoa = rng.uniform(-evo.delta, evo.delta, L)
    gains = evo.rho * state.gains + math.sqrt(1.0 - evo.rho**2) * innovation
    if evo.delta == 0:
        aod, aoa = state.aod.copy(), state.aoa.copy()
    else:
        aod = wrap_angle(state.aod + d_aod)
        aoa = wrap_angle(state.aoa + d_aoa)
    return PathState(aod=aod, aoa=aoa, gains=gains)


# Power series is accurate to ~1e-13 up to |x| = 12; the Hankel expansion
# beyond that has its smallest term below 1e-10.
_SERIES_LIMIT = 12.0


def bessel_j0(x: float) -> float:
    """Bessel function of the first kind, order zero."""
    x = abs(float(x))
    if not math.isfinite(x):
        raise ValueError(f"bessel_j0 requires a finite argument, got {x}")
    if x <= _SERIES_LIMIT:
        q = x * x / 4.0
        term, total, k = 1.0, 1.0, 0
        while abs(term) > 1e-17 * max(1.0, abs(total)):
            k += 1
            term *= -q / (k * k)
            total += term
        return total

    # Hankel asymptotic expansion, summed until terms stop shrinking.
    z = 8.0 * x
    p, q = 0.0, 0.0
    coeff = 1.0  # prod_{i<=k} (2i-1)^2 / (k! z^k)
    prev = math.inf
    for k in range(0, 60):
        if k > 0:
            coeff *= (2 * k - 1) ** 2 / (k * z)
        if abs(coeff) > prev:
            break
        prev = abs(coeff)
        if k % 2 == 0:
            p += (-1) ** (k // 2) * coeff
        else:
            q += (-1) ** ((k + 1) // 2) * coeff
        if abs(coeff) < 1e-17:
            break
    chi = x - math.pi / 4
    return math.sqrt(2.0 / (math.pi * x)) * (p * math.cos(chi) - q * math.sin(chi))


def doppler_frequency(carrier_hz: float, velocity_kmh: float) -> float:
    """Maximum Doppler shift ``f_c v / c`` with ``v`` given in km/h."""
    return carrier_hz * velocity_kmh / (3.6 * SPEED_OF_LIGHT)


def correlation_from_velocity(carrier_hz: float, velocity_kmh: float, block_s: float) -> float:
    """Jakes block correlation ``J0(2 pi f_D T)``, clamped at zero."""
    for name, value in (("carrier_hz", carrier_hz), ("velocity_kmh", velocity_kmh), ("block_s", block_s)):
        if value < 0:
            raise ValueError(f"{name} must be non-negative, got {value}")
    rho = bessel_j0(2 * math.pi * doppler_frequency(carrier_hz, velocity_kmh) * block_s)
    if rho < 0:
        log.warning("Jakes correlation %.4f is negative; clamping to 0", rho)
        return 0.0
    return min(rho, 1.0)

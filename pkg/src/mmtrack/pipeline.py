"""One channel block of either scheme: analog updates, digital updates, rate."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from mmtrack.baseband import (
    PilotMatrix,
    digital_update,
    effective_channel,
    ls_estimate,
    normalize_power,
    throughput,
)
from mmtrack.channel_model import complex_normal
from mmtrack.codebook import CandidateDictionary, RotationCodebook
from mmtrack.tracker import (
    AnalogMatrix,
    HybridConfig,
    SoundingBudget,
    TrackerState,
    independent_sounding_update,
    update_analog_combiner,
    update_analog_precoder,
)


@dataclass(frozen=True)
class Dictionaries:
    rx: CandidateDictionary
    tx: CandidateDictionary


@dataclass(frozen=True)
class Rotations:
    rx: RotationCodebook
    tx: RotationCodebook


@dataclass(frozen=True)
class BlockResult:
    state: TrackerState
    throughput: float
    channel_uses: int


def initial_state(dicts: Dictionaries, cfg: HybridConfig) -> TrackerState:
    """Channel-agnostic starting point before block 0.

    Modes point at ``sin(angle) = -1 + (2l + 1) / n_rf``, spread evenly over
    the visible region, with identity digital stages.
    """
    targets = np.arcsin(-1 + (2 * np.arange(cfg.n_rf) + 1) / cfg.n_rf)

    def pick(d: CandidateDictionary) -> AnalogMatrix:
        idx = [int(np.argmin(np.abs(np.sin(d.grid_angles) - np.sin(t)))) for t in targets]
        return AnalogMatrix.from_indices(d, idx)

    w, f = pick(dicts.rx), pick(dicts.tx)
    eye = np.eye(cfg.n_rf, cfg.n_streams, dtype=complex)
    return TrackerState(
        analog_combiner=w,
        analog_precoder=f,
        digital_combiner=normalize_power(w.entries, eye, cfg.n_streams),
        digital_precoder=normalize_power(f.entries, eye, cfg.n_streams),
    )


def digital_stage(
    combiner: AnalogMatrix,
    precoder: AnalogMatrix,
    channel: np.ndarray,
    pilot: PilotMatrix,
    cfg: HybridConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Pilot phases: downlink estimate gives ``U``, uplink estimate gives ``V``."""
    h_eff = effective_channel(combiner.entries, channel, precoder.entries)
    sigma = math.sqrt(cfg.noise_var)
    shape = (cfg.n_rf, pilot.length)

    q_dl = h_eff @ pilot.entries + sigma * complex_normal(rng, shape)
    u = digital_update(ls_estimate(q_dl, pilot), cfg.n_streams)

    # uplink effective channel is F^H H^H W = h_eff^H; its left singular
    # vectors are the right singular vectors of the downlink channel
    q_ul = h_eff.conj().T @ pilot.entries + sigma * complex_normal(rng, shape)
    v = digital_update(ls_estimate(q_ul, pilot), cfg.n_streams)

    u = normalize_power(combiner.entries, u, cfg.n_streams)
    v = normalize_power(precoder.entries, v, cfg.n_streams)
    return u, v


def block_pipeline(
    state: TrackerState,
    channel_next: np.ndarray,
    scheme: str,
    dicts: Dictionaries,
    pilot: PilotMatrix,
    cfg: HybridConfig,
    rng: np.random.Generator,
    rotations: Rotations | None = None,
    budget: SoundingBudget | None = None,
) -> BlockResult:
    """Advance ``state`` by one block and evaluate the rate on the true channel.

    ``scheme="proposed"`` tracks with ``rotations``; ``scheme="independent"``
    re-sweeps the static subset described by ``budget``.
    """
    if scheme == "proposed":
        if rotations is None:
            raise ValueError("the tracking scheme needs rotation codebooks")
        w = update_analog_combiner(state, channel_next, rotations.rx, dicts.rx, cfg, rng)
        f = update_analog_precoder(state, channel_next, rotations.tx, dicts.tx, cfg, rng, combiner=w)
    elif scheme == "independent":
        if budget is None:
            raise ValueError("independent sounding needs a sounding budget")
        w, f = independent_sounding_update(state, channel_next, dicts.rx, dicts.tx, cfg, budget, rng)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    u, v = digital_stage(w, f, channel_next, pilot, cfg, rng)
    new_state = TrackerState(analog_combiner=w, analog_precoder=f, digital_combiner=u, digital_precoder=v)
    rate = throughput(channel_next, w.entries, u, f.entries, v, cfg.noise_var, cfg.n_streams)
    uses = w.sounding_uses + f.sounding_uses + 2 * pilot.length
    return BlockResult(new_state, rate, uses)

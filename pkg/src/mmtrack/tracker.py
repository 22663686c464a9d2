"""Mode-by-mode analog beam tracking and the independent-sounding baseline.

Each column ("mode") of the analog combiner is refreshed in turn: the previous
mode is rotated by every codeword of the adapted rotation codebook, the
candidates are projected away from the modes already committed this block,
snapped to the quantized steering dictionary, sounded, and the strongest one
is kept. The analog precoder is refreshed the same way from uplink soundings.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from mmtrack.channel_model import complex_normal
from mmtrack.codebook import CandidateDictionary, RotationCodebook, nearest_candidates

log = logging.getLogger(__name__)


class DegenerateProjectionError(ValueError):
    """The committed modes do not span a well-conditioned subspace."""


@dataclass(frozen=True)
class HybridConfig:
    n_tx: int = 64
    n_rx: int = 64
    n_rf: int = 4
    n_streams: int = 4
    phase_bits: int = 4
    noise_var: float = 1.0

    def __post_init__(self):
        if not 1 <= self.n_streams <= self.n_rf <= min(self.n_tx, self.n_rx):
            raise ValueError(
                "need 1 <= n_streams <= n_rf <= min(n_tx, n_rx), got "
                f"n_streams={self.n_streams}, n_rf={self.n_rf}, n_tx={self.n_tx}, n_rx={self.n_rx}"
            )
        if not self.noise_var > 0:
            raise ValueError(f"noise_var must be positive, got {self.noise_var}")
        if self.phase_bits < 1:
            raise ValueError(f"phase_bits must be >= 1, got {self.phase_bits}")

    @property
    def training_vector(self) -> np.ndarray:
        return np.ones(self.n_streams) / math.sqrt(self.n_streams)


@dataclass(frozen=True)
class AnalogMatrix:
    """Phase-only beamformer built from dictionary columns.

    ``indices`` records which dictionary column each mode is, and
    ``sounding_uses`` the channel uses spent selecting them.
    """

    entries: np.ndarray
    indices: tuple[int, ...]
    sounding_uses: int = 0

    @classmethod
    def from_indices(cls, dictionary: CandidateDictionary, indices, sounding_uses: int = 0) -> "AnalogMatrix":
        indices = tuple(int(i) for i in indices)
        return cls(dictionary.columns[:, list(indices)].copy(), indices, sounding_uses)

    @property
    def n_rf(self) -> int:
        return self.entries.shape[1]


def is_legal_analog(entries: np.ndarray, bits: int, atol: float = 1e-12) -> bool:
    """Every entry has modulus ``1/sqrt(rows)`` and a phase on the ``bits``-bit grid."""
    n = entries.shape[0]
    if not np.allclose(np.abs(entries), 1 / math.sqrt(n), rtol=0, atol=atol):
        return False
    steps = np.angle(entries) * (2**bits / (2 * np.pi))
    return bool(np.allclose(steps, np.round(steps), rtol=0, atol=1e-9))


@dataclass(frozen=True)
class TrackerState:
    analog_combiner: AnalogMatrix
    analog_precoder: AnalogMatrix
    digital_combiner: np.ndarray
    digital_precoder: np.ndarray

    @property
    def W(self) -> np.ndarray:
        return self.analog_combiner.entries

    @property
    def F(self) -> np.ndarray:
        return self.analog_precoder.entries


@dataclass(frozen=True)
class SoundingBudget:
    """Candidates sounded per mode; ``n_rf`` of them share one channel use."""

    codebook_size: int
    n_rf: int
    n_pilot: int = 0

    def __post_init__(self):
        if self.codebook_size < 1:
            raise ValueError(f"need at least one candidate per mode, got {self.codebook_size}")

    @property
    def uses_per_mode(self) -> int:
        return math.ceil(self.codebook_size / self.n_rf)

    @property
    def uses_per_direction(self) -> int:
        return self.n_rf * self.uses_per_mode

    @property
    def total_uses_per_block(self) -> int:
        """Downlink plus uplink sounding, plus one pilot block in each direction."""
        return 2 * self.uses_per_direction + 2 * self.n_pilot


# ---------------------------------------------------------------------------
# single-mode building blocks

def generate_mode_candidates(w_prev_mode: np.ndarray, rotations: RotationCodebook) -> np.ndarray:
    """Columns ``C_k w`` for every rotation codeword, shape ``(n, N)``."""
    w = np.asarray(w_prev_mode).ravel()
    if w.size != rotations.n_rx:
        raise ValueError(f"mode has length {w.size}, rotations act on dimension {rotations.n_rx}")
    return (rotations.codewords * w[None, :]).T


def project_out_updated_modes(candidates: np.ndarray, updated: np.ndarray) -> np.ndarray:
    """Remove the span of ``updated`` from every candidate column."""
    updated = np.asarray(updated)
    if updated.ndim == 1:
        updated = updated[:, None]
    if updated.shape[1] == 0:
        return np.array(candidates, copy=True)
    gram = updated.conj().T @ updated
    if np.linalg.cond(gram) > 1e12:
        raise DegenerateProjectionError(
            f"updated modes are rank deficient (Gram condition number {np.linalg.cond(gram):.3g})"
        )
    coeffs = np.linalg.solve(gram, updated.conj().T @ candidates)
    return candidates - updated @ coeffs


def legalize_indices(candidates: np.ndarray, dictionary: CandidateDictionary, zero_tol: float = 1e-9) -> np.ndarray:
    """Dictionary index for each candidate column.

    A column whose norm is below ``zero_tol`` times the largest column norm
    carries no direction and is mapped to column 0.
    """
    norms = np.linalg.norm(candidates, axis=0)
    idx = nearest_candidates(candidates, dictionary)
    zero = norms <= zero_tol * max(norms.max(initial=0.0), np.finfo(float).tiny)
    if zero.any():
        log.debug("%d candidate column(s) vanished after projection; using dictionary column 0", zero.sum())
        idx = np.where(zero, 0, idx)
    return idx


def legalize_candidates(candidates: np.ndarray, dictionary: CandidateDictionary) -> np.ndarray:
    """Replace every candidate with its nearest dictionary column."""
    return dictionary.columns[:, legalize_indices(candidates, dictionary)]


def sound_candidates(
    candidates: np.ndarray,
    channel: np.ndarray,
    precoder_analog: np.ndarray,
    precoder_digital: np.ndarray,
    training: np.ndarray,
    noise_var: float,
    rng: np.random.Generator,
    n_rf: int = 1,
) -> np.ndarray:
    """Combiner outputs ``w_k^H (H F V s + n)``, one per candidate.

    Candidates are sounded ``n_rf`` at a time; each channel use draws its own
    noise vector, shared by the candidates sounded in that use.
    """
    received = channel @ (precoder_analog @ (precoder_digital @ training))
    return _sound(candidates, received, noise_var, rng, n_rf)


def _sound(candidates, received, noise_var, rng, n_rf):
    n, n_cand = candidates.shape
    n_uses = math.ceil(n_cand / n_rf)
    noise = math.sqrt(noise_var) * complex_normal(rng, (n_uses, n))
    use = np.arange(n_cand) // n_rf
    per_use_noise = noise[use].T  # (n, n_cand)
    return candidates.conj().T @ received + np.sum(candidates.conj() * per_use_noise, axis=0)


def select_best(soundings) -> int:
    """1-based index of the largest ``|x_k|^2``; ties go to the lowest index."""
    x = np.asarray(soundings).ravel()
    if x.size == 0:
        raise ValueError("cannot select from an empty sounding vector")
    return int(np.argmax(np.abs(x) ** 2)) + 1


# ---------------------------------------------------------------------------
# full analog updates

def _update_modes(candidate_sets, dictionary, received, noise_var, n_rf, rng) -> AnalogMatrix:
    """Run the generate/project/legalize/sound/select loop over all modes.

    ``candidate_sets(l)`` returns the raw candidates of mode ``l``.
    """
    chosen: list[int] = []
    uses = 0
    for l in range(n_rf):
        cand = candidate_sets(l)
        if chosen:
            # committed modes are dictionary columns; exact repeats add nothing to the span
            theta = dictionary.columns[:, sorted(set(chosen))]
            cand = project_out_updated_modes(cand, theta)
        idx = legalize_indices(cand, dictionary)
        legal = dictionary.columns[:, idx]
        x = _sound(legal, received, noise_var, rng, n_rf)
        uses += math.ceil(legal.shape[1] / n_rf)
        # a repeated beam would make W rank deficient; it stays sounded but unselectable
        repeat = np.isin(idx, chosen)
        if repeat.all():
            spare = next(i for i in range(dictionary.size) if i not in chosen)
            log.debug("mode %d: every candidate repeats a committed beam; falling back to column %d", l, spare)
            chosen.append(spare)
            continue
        chosen.append(int(idx[select_best(np.where(repeat, 0.0, x)) - 1]))
    return AnalogMatrix.from_indices(dictionary, chosen, sounding_uses=uses)


def update_analog_combiner(
    state: TrackerState,
    channel_next: np.ndarray,
    rotations: RotationCodebook,
    dictionary: CandidateDictionary,
    cfg: HybridConfig,
    rng: np.random.Generator,
) -> AnalogMatrix:
    """Downlink sounding: refresh ``W`` mode by mode around the previous ``W``."""
    received = channel_next @ (state.F @ (state.digital_precoder @ cfg.training_vector))
    w_prev = state.W
    return _update_modes(
        lambda l: generate_mode_candidates(w_prev[:, l], rotations),
        dictionary, received, cfg.noise_var, cfg.n_rf, rng,
    )


def reverse_link(channel: np.ndarray) -> np.ndarray:
    """Uplink channel seen by the BS when both ends reuse their weights.

    With TDD reciprocity the uplink matrix is ``H^T``; transmitting through
    ``conj(W U)`` and combining with ``conj(f)`` makes every uplink
    measurement the complex conjugate of one taken through ``H^H``. Using
    ``H^H`` directly keeps the BS beams pointing at the same departure angles.
    """
    return channel.conj().T


def update_analog_precoder(
    state: TrackerState,
    channel_next: np.ndarray,
    rotations_tx: RotationCodebook,
    dictionary_tx: CandidateDictionary,
    cfg: HybridConfig,
    rng: np.random.Generator,
    combiner: AnalogMatrix | None = None,
) -> AnalogMatrix:
    """Uplink sounding: refresh ``F`` with the MS transmitting through ``W_{n+1} U_n``.

    ``combiner`` is the freshly updated ``W_{n+1}``; it defaults to the one
    held in ``state``.
    """
    w = state.W if combiner is None else combiner.entries
    received = reverse_link(channel_next) @ (w @ (state.digital_combiner @ cfg.training_vector))
    f_prev = state.F
    return _update_modes(
        lambda l: generate_mode_candidates(f_prev[:, l], rotations_tx),
        dictionary_tx, received, cfg.noise_var, cfg.n_rf, rng,
    )


def static_subset(n_can: int, count: int) -> np.ndarray:
    """Evenly spaced dictionary indices ``round(j n_can / count)``, deduplicated."""
    if count < 1:
        raise ValueError(f"independent sounding needs at least one candidate per mode, got {count}")
    j = np.arange(count)
    # round half up so the subset does not depend on numpy's banker's rounding
    idx = np.floor(j * n_can / count + 0.5).astype(np.int64) % n_can
    _, first = np.unique(idx, return_index=True)
    return idx[np.sort(first)]


def independent_sounding_update(
    state: TrackerState,
    channel_next: np.ndarray,
    dictionary_rx: CandidateDictionary,
    dictionary_tx: CandidateDictionary,
    cfg: HybridConfig,
    budget: SoundingBudget,
    rng: np.random.Generator,
) -> tuple[AnalogMatrix, AnalogMatrix]:
    """Benchmark update: sweep a fixed beam subset for every mode, both ends.

    The combiner is sounded through the precoder held in ``state``; the
    precoder is then sounded through the new combiner and the old digital
    combiner, in the same order as the tracking scheme.
    """
    subset_rx = static_subset(dictionary_rx.size, budget.codebook_size)
    subset_tx = static_subset(dictionary_tx.size, budget.codebook_size)
    fixed_rx = dictionary_rx.columns[:, subset_rx]
    fixed_tx = dictionary_tx.columns[:, subset_tx]

    received = channel_next @ (state.F @ (state.digital_precoder @ cfg.training_vector))
    combiner = _update_modes(lambda l: fixed_rx, dictionary_rx, received, cfg.noise_var, cfg.n_rf, rng)

    received_ul = reverse_link(channel_next) @ (combiner.entries @ (state.digital_combiner @ cfg.training_vector))
    precoder = _update_modes(lambda l: fixed_tx, dictionary_tx, received_ul, cfg.noise_var, cfg.n_rf, rng)
    return combiner, precoder

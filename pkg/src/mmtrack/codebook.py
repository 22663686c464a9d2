"""Rotation codebooks and the quantized steering dictionary.

A basis codebook is the power sequence ``R, R^2, ..., R^N`` of one diagonal
generator whose phases live on an ``M``-point grid (``M`` prime, ``M > Nr``).
The generator is chosen to maximize the minimum chordal distance between
codewords. Adapting it to a block correlation ``rho`` pulls every codeword
towards the identity, ``G_i = eps I + sqrt(1 - eps^2) R_i`` with
``eps = gamma * rho``.

All diagonal matrices are stored as their diagonals, shape ``(N, Nr)``.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from mmtrack.channel_model import steering_matrix

log = logging.getLogger(__name__)


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    return all(n % p for p in range(2, math.isqrt(n) + 1))


def smallest_prime_above(n: int) -> int:
    m = n + 1
    while not is_prime(m):
        m += 1
    return m


# ---------------------------------------------------------------------------
# phase quantization

def phase_indices(phase, bits: int) -> np.ndarray:
    """Index ``k`` of the nearest point ``2 pi k / 2^bits``.

    Exact ties go to the smaller index.
    """
    if bits < 1:
        raise ValueError(f"bits must be >= 1, got {bits}")
    levels = 2**bits
    x = np.mod(np.asarray(phase, dtype=float), 2 * np.pi) * (levels / (2 * np.pi))
    return np.mod(np.ceil(x - 0.5), levels).astype(np.int64)


def quantize_phase(phase, bits: int):
    """Snap ``phase`` to the nearest point of the ``bits``-bit phase grid."""
    q = phase_indices(phase, bits) * (2 * np.pi / 2**bits)
    return float(q) if np.ndim(q) == 0 else q


def unit_phasor(indices, levels: int) -> np.ndarray:
    """``exp(j 2 pi k / levels)`` evaluated from integer indices."""
    return np.exp(1j * 2 * np.pi * (np.asarray(indices) % levels) / levels)


# ---------------------------------------------------------------------------
# basis codebook design

def chordal_distance(r_i, r_j) -> float:
    """Chordal distance between two diagonal unitary codewords.

    Accepts either the diagonals or full diagonal matrices. The inner product
    is divided by ``Nr`` so that identical codewords sit at distance zero.
    """
    a = _as_diagonal(r_i)
    b = _as_diagonal(r_j)
    if a.shape != b.shape:
        raise ValueError(f"codeword dimensions differ: {a.shape} vs {b.shape}")
    n = a.size
    inner = np.vdot(a, b)
    return math.sqrt(max(n - abs(inner) ** 2 / n, 0.0))


def _as_diagonal(r) -> np.ndarray:
    r = np.asarray(r)
    if r.ndim == 2:
        if r.shape[0] != r.shape[1]:
            raise ValueError(f"expected a square diagonal matrix, got shape {r.shape}")
        return np.diag(r)
    return r.ravel()


@dataclass(frozen=True)
class BasisCodebook:
    """Power sequence of a diagonal generator with ``M``-ary phases."""

    generator: np.ndarray  # integer phase indices t_k, phase = 2 pi t_k / M
    phase_order: int
    size: int
    first_power: int = 1

    @property
    def n_rx(self) -> int:
        return len(self.generator)

    @property
    def exponents(self) -> np.ndarray:
        """``(N, Nr)`` integer phase indices of the codewords modulo ``M``.

        Codeword ``i`` is ``R^(first_power + i)``. Pairwise distances depend
        only on exponent differences, so ``first_power`` does not change the
        design objective; ``first_power=0`` puts the identity in the codebook.
        """
        powers = np.arange(self.first_power, self.first_power + self.size)[:, None]
        return (powers * self.generator[None, :]) % self.phase_order

    @property
    def codewords(self) -> np.ndarray:
        return unit_phasor(self.exponents, self.phase_order)

    def matrices(self) -> np.ndarray:
        return np.stack([np.diag(c) for c in self.codewords])

    def min_distance(self) -> float:
        return min_chordal_distance(self.codewords)


def min_chordal_distance(diagonals: np.ndarray) -> float:
    """Minimum pairwise chordal distance; ``+inf`` for fewer than two codewords."""
    diagonals = np.asarray(diagonals)
    n_words, n = diagonals.shape
    if n_words < 2:
        return math.inf
    gram = np.abs(diagonals.conj() @ diagonals.T) ** 2 / n
    iu = np.triu_indices(n_words, k=1)
    return math.sqrt(max(n - gram[iu].max(), 0.0))


def _power_sums(generators: np.ndarray, size: int, phase_order: int) -> np.ndarray:
    """``S(d) = sum_k exp(j 2 pi d t_k / M)`` for ``d = 1 .. size-1``.

    The inner product between ``R^i`` and ``R^j`` depends only on ``j - i``,
    so these sums are all the search needs. Shape ``(batch, size - 1)``.
    """
    d = np.arange(1, size)
    phases = (generators[:, None, :] * d[None, :, None]) % phase_order
    return unit_phasor(phases, phase_order).sum(axis=2)


def _score(generators: np.ndarray, size: int, phase_order: int) -> np.ndarray:
    """Min chordal distance of each generator's power codebook."""
    n = generators.shape[1]
    if size < 2:
        return np.full(len(generators), math.inf)
    worst = (np.abs(_power_sums(generators, size, phase_order)) ** 2).max(axis=1)
    return np.sqrt(np.maximum(n - worst / n, 0.0))


def _refine(generator: np.ndarray, size: int, phase_order: int, max_sweeps: int = 20) -> np.ndarray:
    """Coordinate-wise ascent on the min-distance objective."""
    t = generator.copy()
    d = np.arange(1, size)
    table = unit_phasor(np.outer(np.arange(phase_order), d), phase_order)  # (M, size-1)
    sums = _power_sums(t[None, :], size, phase_order)[0]
    best = np.abs(sums).max()
    for _ in range(max_sweeps):
        improved = False
        for k in range(len(t)):
            trial = sums[None, :] - table[t[k]][None, :] + table
            worst = np.abs(trial).max(axis=1)
            v = int(np.argmin(worst))
            if worst[v] < best - 1e-12:
                t[k] = v
                sums = trial[v]
                best = worst[v]
                improved = True
        if not improved:
            break
    return t


def design_basis_codebook(
    n_rx: int,
    size: int,
    phase_order: int | None = None,
    search_budget: int = 10_000,
    rng: np.random.Generator | None = None,
    exhaustive: bool | None = None,
    refine_top: int = 8,
    first_power: int = 1,
) -> BasisCodebook:
    """Search for the generator maximizing the minimum chordal distance.

    With ``exhaustive`` (the default whenever ``M**n_rx <= search_budget``)
    every generator on the grid is scored and the first maximizer in
    lexicographic order wins. Otherwise ``search_budget`` random generators
    are scored and the best ``refine_top`` of them are polished by
    coordinate ascent.
    """
    if phase_order is None:
        phase_order = smallest_prime_above(n_rx)
    if not is_prime(phase_order) or phase_order <= n_rx:
        raise ValueError(f"phase_order must be a prime larger than n_rx={n_rx}, got {phase_order}")
    if size < 1:
        raise ValueError(f"codebook size must be >= 1, got {size}")
    if search_budget < 1:
        raise ValueError(f"search_budget must be >= 1, got {search_budget}")

    total = phase_order**n_rx if n_rx * math.log(phase_order) < 60 else math.inf
    if exhaustive is None:
        exhaustive = total <= search_budget
    if exhaustive:
        if total > 50_000_000:
            raise ValueError(f"exhaustive search over {phase_order}^{n_rx} generators is infeasible")
        best_t, best_score = None, -math.inf
        grid = itertools.product(range(phase_order), repeat=n_rx)
        while batch := list(itertools.islice(grid, 65536)):
            gens = np.array(batch, dtype=np.int64)
            scores = _score(gens, size, phase_order)
            i = int(np.argmax(scores))
            if scores[i] > best_score + 1e-12:
                best_t, best_score = gens[i], scores[i]
        return BasisCodebook(generator=best_t, phase_order=phase_order, size=size, first_power=first_power)

    rng = np.random.default_rng() if rng is None else rng
    chunk = max(1, 2**20 // max(1, n_rx * size))
    kept_t = np.zeros((0, n_rx), dtype=np.int64)
    kept_s = np.zeros(0)
    drawn = 0
    while drawn < search_budget:
        count = min(chunk, search_budget - drawn)
        gens = rng.integers(0, phase_order, size=(count, n_rx))
        drawn += count
        kept_t = np.concatenate([kept_t, gens])
        kept_s = np.concatenate([kept_s, _score(gens, size, phase_order)])
        order = np.argsort(-kept_s, kind="stable")[:refine_top]
        kept_t, kept_s = kept_t[order], kept_s[order]

    best_t, best_score = kept_t[0], kept_s[0]
    if size >= 2:
        for t in kept_t:
            polished = _refine(t, size, phase_order)
            s = _score(polished[None, :], size, phase_order)[0]
            if s > best_score + 1e-12:
                best_t, best_score = polished, s
    log.debug("basis codebook search: min chordal distance %.6f", best_score)
    return BasisCodebook(
        generator=np.asarray(best_t, dtype=np.int64), phase_order=phase_order, size=size, first_power=first_power
    )


# ---------------------------------------------------------------------------
# correlation adaptation

@dataclass(frozen=True)
class RotationCodebook:
    codewords: np.ndarray  # (N, Nr) diagonals of C_1 .. C_N
    epsilon: float

    @property
    def size(self) -> int:
        return self.codewords.shape[0]

    @property
    def n_rx(self) -> int:
        return self.codewords.shape[1]

    def matrices(self) -> np.ndarray:
        return np.stack([np.diag(c) for c in self.codewords])


def adapt_codebook(
    basis: BasisCodebook, rho: float, gamma: float = 0.9, projection: str = "norm"
) -> RotationCodebook:
    """Shrink the basis codebook towards the identity by ``eps = gamma * rho``.

    ``projection="norm"`` divides each ``G_i`` by the 2-norm of its diagonal.
    ``projection="phase"`` keeps only the phase of every diagonal entry, which
    lands exactly on the set of diagonal unitary matrices.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    eps = gamma * rho
    g = eps + math.sqrt(max(1.0 - eps**2, 0.0)) * basis.codewords
    if projection == "norm":
        c = g / np.linalg.norm(g, axis=1, keepdims=True)
    elif projection == "phase":
        mag = np.abs(g)
        # eps = 1/sqrt(2) with opposite phase gives an exact zero; keep it at 1
        c = np.where(mag > 1e-15, g / np.where(mag > 1e-15, mag, 1.0), 1.0)
    else:
        raise ValueError(f"unknown projection {projection!r}; use 'norm' or 'phase'")
    return RotationCodebook(codewords=c, epsilon=eps)


# ---------------------------------------------------------------------------
# steering dictionary

@dataclass(frozen=True)
class CandidateDictionary:
    columns: np.ndarray  # (n_antennas, n_can)
    grid_angles: np.ndarray
    phase_bits: int
    phase_codes: np.ndarray  # integer phase indices of every entry

    @property
    def n_antennas(self) -> int:
        return self.columns.shape[0]

    @property
    def size(self) -> int:
        return self.columns.shape[1]


def grid_angles(n_can: int) -> np.ndarray:
    i = np.arange(n_can)
    return -np.pi + (2 * i + 1) * np.pi / n_can


def build_candidate_dictionary(
    n_rx: int, n_can: int = 200, bits: int = 4, spacing_ratio: float = 0.5
) -> CandidateDictionary:
    """Quantized overcomplete ULA dictionary on a uniform angle grid."""
    if n_can < n_rx:
        raise ValueError(f"n_can must be >= n_antennas ({n_rx}), got {n_can}")
    angles = grid_angles(n_can)
    raw = steering_matrix(angles, n_rx, spacing_ratio)
    codes = phase_indices(np.angle(raw), bits)
    cols = unit_phasor(codes, 2**bits) / math.sqrt(n_rx)
    cols.setflags(write=False)
    codes.setflags(write=False)
    return CandidateDictionary(columns=cols, grid_angles=angles, phase_bits=bits, phase_codes=codes)


def nearest_candidates(vectors: np.ndarray, dictionary: CandidateDictionary) -> np.ndarray:
    """Column-wise :func:`nearest_candidate` for an ``(n, k)`` matrix."""
    vectors = np.asarray(vectors)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    if vectors.shape[0] != dictionary.n_antennas:
        raise ValueError(f"vector length {vectors.shape[0]} != dictionary dimension {dictionary.n_antennas}")
    corr = np.abs(dictionary.columns.conj().T @ vectors) ** 2
    return np.argmax(corr, axis=0)


def nearest_candidate(w: np.ndarray, dictionary: CandidateDictionary) -> int:
    """Index of the dictionary column closest in chordal distance to ``w``."""
    w = np.asarray(w).ravel()
    if not np.any(w):
        raise ValueError("cannot match the zero vector to a dictionary column")
    return int(nearest_candidates(w / np.linalg.norm(w), dictionary)[0])


# ---------------------------------------------------------------------------
# plain-text export

def _write_blocks(fh, blocks):
    for block in blocks:
        for row in np.atleast_2d(block):
            fh.write(" ".join(f"{z.real:.17g},{z.imag:.17g}" for z in row) + "\n")
        fh.write("\n")


def save_codebook(obj, path) -> None:
    """Write a basis codebook or a dictionary in the plain-text matrix format.

    Header ``kind n_antennas count order_or_n_can bits``; a basis codebook
    stores its first exponent in the ``bits`` slot. A basis codebook
    writes one ``Nr x Nr`` block per codeword; a dictionary writes a single
    ``n x n_can`` block. Entries are ``re,im`` pairs separated by spaces.
    """
    path = Path(path)
    with path.open("w", newline="\n") as fh:
        if isinstance(obj, BasisCodebook):
            fh.write(f"basis {obj.n_rx} {obj.size} {obj.phase_order} {obj.first_power}\n")
            fh.write("generator " + " ".join(str(int(t)) for t in obj.generator) + "\n")
            _write_blocks(fh, obj.matrices())
        elif isinstance(obj, CandidateDictionary):
            fh.write(f"dictionary {obj.n_antennas} 1 {obj.size} {obj.phase_bits}\n")
            fh.write("angles " + " ".join(f"{a:.17g}" for a in obj.grid_angles) + "\n")
            _write_blocks(fh, [obj.columns])
        else:
            raise TypeError(f"cannot export {type(obj).__name__}")


def _read_blocks(lines):
    blocks, current = [], []
    for line in lines:
        if not line.strip():
            if current:
                blocks.append(np.array(current))
                current = []
            continue
        current.append([complex(*map(float, pair.split(","))) for pair in line.split()])
    if current:
        blocks.append(np.array(current))
    return blocks


def load_codebook(path):
    lines = Path(path).read_text().splitlines()
    kind, n, count, order, bits = lines[0].split()
    n, count, order, bits = int(n), int(count), int(order), int(bits)
    blocks = _read_blocks(lines[2:])
    if kind == "basis":
        generator = np.array([int(t) for t in lines[1].split()[1:]], dtype=np.int64)
        basis = BasisCodebook(generator=generator, phase_order=order, size=count, first_power=bits)
        if len(blocks) != count or not np.allclose(np.stack(blocks), basis.matrices(), atol=1e-12):
            raise ValueError(f"{path}: codeword blocks disagree with the stored generator")
        return basis
    if kind == "dictionary":
        angles = np.array([float(a) for a in lines[1].split()[1:]])
        cols = blocks[0]
        if cols.shape != (n, order):
            raise ValueError(f"{path}: expected a {n}x{order} block, got {cols.shape}")
        codes = phase_indices(np.angle(cols), bits)
        return CandidateDictionary(columns=cols, grid_angles=angles, phase_bits=bits, phase_codes=codes)
    raise ValueError(f"{path}: unknown codebook kind {kind!r}")

"""Digital stage: effective channel, LS estimation, SVD and throughput."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DegenerateInputError(ValueError):
    """Raised when a matrix that must be invertible or nonzero is not."""


@dataclass(frozen=True)
class PilotMatrix:
    entries: np.ndarray  # (N_rf, N_P)

    @property
    def length(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class SvdResult:
    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singular_values[None, :]) @ self.right.conj().T


def effective_channel(combiner: np.ndarray, channel: np.ndarray, precoder: np.ndarray) -> np.ndarray:
    """``W^H H F``."""
    if combiner.shape[0] != channel.shape[0] or channel.shape[1] != precoder.shape[0]:
        raise ValueError(
            f"cannot form W^H H F with W {combiner.shape}, H {channel.shape}, F {precoder.shape}"
        )
    return combiner.conj().T @ channel @ precoder


def make_pilot(n_rf: int, n_p: int) -> PilotMatrix:
    """First ``n_rf`` rows of the unitary ``n_p``-point DFT matrix."""
    if n_p < n_rf:
        raise ValueError(f"pilot length n_p={n_p} must be >= n_rf={n_rf}")
    r = np.arange(n_rf)[:, None]
    c = np.arange(n_p)[None, :]
    return PilotMatrix(np.exp(-2j * np.pi * r * c / n_p) / math.sqrt(n_p))


def ls_estimate(received: np.ndarray, pilot: PilotMatrix) -> np.ndarray:
    """LS estimate ``Q P^H``; exact when ``P P^H = I`` and the noise is zero."""
    if received.shape[1] != pilot.length:
        raise ValueError(f"received block has {received.shape[1]} columns, pilot has {pilot.length}")
    return received @ pilot.entries.conj().T


def svd(matrix: np.ndarray, tol: float = 1e-15, max_sweeps: int = 60) -> SvdResult:
    """SVD of a small square complex matrix by one-sided Jacobi rotations.

    Columns of a working copy of ``A`` are orthogonalized pairwise while the
    same rotations accumulate into ``V``; at convergence ``A V = U diag(s)``.
    """
    a = np.array(matrix, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"svd expects a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("svd input contains non-finite entries")
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    scale = np.linalg.norm(a)
    if scale == 0:
        return SvdResult(np.eye(n, dtype=complex), np.zeros(n), v)

    for _ in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = np.vdot(a[:, p], a[:, p]).real
                beta = np.vdot(a[:, q], a[:, q]).real
                gamma = np.vdot(a[:, p], a[:, q])
                g = abs(gamma)
                if g == 0.0 or g <= tol * math.sqrt(alpha * beta):
                    continue
                off = max(off, g / math.sqrt(alpha * beta))
                # rotate so that the (p, q) Gram entry vanishes
                phase = gamma / g
                zeta = (beta - alpha) / (2.0 * g)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                ap, aq = a[:, p].copy(), a[:, q]
                a[:, p] = c * ap - s * np.conj(phase) * aq
                a[:, q] = s * phase * ap + c * aq
                vp, vq = v[:, p].copy(), v[:, q]
                v[:, p] = c * vp - s * np.conj(phase) * vq
                v[:, q] = s * phase * vp + c * vq
        if off <= tol:
            break

    sigma = np.linalg.norm(a, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, a, v = sigma[order], a[:, order], v[:, order]
    u = np.zeros((n, n), dtype=complex)
    rank_tol = n * np.finfo(float).eps * scale
    keep = sigma > rank_tol
    u[:, keep] = a[:, keep] / sigma[keep]
    sigma = np.where(keep, sigma, 0.0)
    if not keep.all():
        u = _complete_basis(u, keep)
    return SvdResult(u, sigma, v)


def _complete_basis(u: np.ndarray, keep: np.ndarray) -> np.ndarray:
    """Fill the columns of ``u`` not in ``keep`` with an orthonormal complement."""
    n = u.shape[0]
    basis = u[:, keep]
    for j in np.flatnonzero(~keep):
        for e in np.eye(n, dtype=complex):
            r = e - basis @ (basis.conj().T @ e)
            norm = np.linalg.norm(r)
            if norm > 1e-8:
                r = r / norm
                # one more pass keeps orthogonality near machine precision
                r = r - basis @ (basis.conj().T @ r)
                r /= np.linalg.norm(r)
                u[:, j] = r
                basis = np.column_stack([basis, r])
                break
    return u


def digital_update(estimate: np.ndarray, n_streams: int) -> np.ndarray:
    """Leading ``n_streams`` left singular vectors of the effective channel estimate."""
    if n_streams > estimate.shape[0]:
        raise ValueError(f"n_streams={n_streams} exceeds the RF chain count {estimate.shape[0]}")
    return svd(estimate).left[:, :n_streams]


def normalize_power(analog: np.ndarray, digital: np.ndarray, n_streams: int) -> np.ndarray:
    """Rescale ``digital`` so that ``||analog @ digital||_F^2 == n_streams``."""
    norm = np.linalg.norm(analog @ digital)
    if norm == 0 or not math.isfinite(norm):
        raise DegenerateInputError("analog @ digital is zero; cannot normalize its power")
    return digital * (math.sqrt(n_streams) / norm)


def throughput(
    channel: np.ndarray,
    combiner_analog: np.ndarray,
    combiner_digital: np.ndarray,
    precoder_analog: np.ndarray,
    precoder_digital: np.ndarray,
    noise_var: float,
    n_streams: int | None = None,
) -> float:
    """Achievable rate in bits/s/Hz with noise whitened through ``W U``.

    ``log2 det(I + (U^H W^H W U)^{-1} U^H W^H H F V V^H F^H H^H W U / (sigma^2 Ns))``
    """
    wu = combiner_analog @ combiner_digital
    fv = precoder_analog @ precoder_digital
    n_streams = wu.shape[1] if n_streams is None else n_streams
    gram = wu.conj().T @ wu
    if np.linalg.cond(gram) > 1e12:
        raise DegenerateInputError("combiner Gram matrix U^H W^H W U is singular")
    g = wu.conj().T @ channel @ fv
    signal = g @ g.conj().T / (noise_var * n_streams)
    m = np.eye(gram.shape[0]) + np.linalg.solve(gram, signal)
    sign, logdet = np.linalg.slogdet(m)
    return max(float(logdet.real) / math.log(2), 0.0)

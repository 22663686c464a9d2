import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import crandn
from mmtrack.baseband import (
    DegenerateInputError,
    digital_update,
    effective_channel,
    ls_estimate,
    make_pilot,
    normalize_power,
    svd,
    throughput,
)

seeds = st.integers(0, 2**32 - 1)


@pytest.mark.parametrize("n_rf, n_p", [(1, 1), (4, 4), (4, 6), (3, 10)])
def test_pilot_rows_are_orthonormal(n_rf, n_p):
    p = make_pilot(n_rf, n_p).entries
    np.testing.assert_allclose(p @ p.conj().T, np.eye(n_rf), atol=1e-14)


def test_short_pilot_rejected():
    with pytest.raises(ValueError):
        make_pilot(4, 3)


@given(seeds)
def test_noiseless_ls_is_exact(seed):
    h = crandn(np.random.default_rng(seed), (4, 4))
    pilot = make_pilot(4, 6)
    np.testing.assert_allclose(ls_estimate(h @ pilot.entries, pilot), h, atol=1e-12)


def test_ls_noise_variance_is_preserved():
    # with orthonormal pilot rows, LS noise stays white with the same variance
    rng = np.random.default_rng(0)
    pilot = make_pilot(4, 6)
    est = np.stack([ls_estimate(crandn(rng, (4, 6)), pilot) for _ in range(5000)])
    assert np.mean(np.abs(est) ** 2) == pytest.approx(1.0, rel=0.03)


def test_effective_channel_shape_check(rng):
    w, h, f = crandn(rng, (8, 2)), crandn(rng, (8, 6)), crandn(rng, (6, 2))
    np.testing.assert_allclose(effective_channel(w, h, f), w.conj().T @ h @ f)
    with pytest.raises(ValueError):
        effective_channel(w, h.T, f)


# --- SVD ------------------------------------------------------------------------

@given(seeds, st.integers(1, 6))
def test_svd_reconstructs_and_is_unitary(seed, n):
    a = crandn(np.random.default_rng(seed), (n, n))
    r = svd(a)
    assert np.linalg.norm(r.reconstruct() - a) <= 1e-9 * np.linalg.norm(a)
    np.testing.assert_allclose(r.left.conj().T @ r.left, np.eye(n), atol=1e-10)
    np.testing.assert_allclose(r.right.conj().T @ r.right, np.eye(n), atol=1e-10)
    assert np.all(np.diff(r.singular_values) <= 1e-12)


@given(seeds)
def test_singular_values_match_eigenvalue_oracle(seed):
    a = crandn(np.random.default_rng(seed), (4, 4))
    eig = np.sqrt(np.clip(np.linalg.eigvalsh(a.conj().T @ a)[::-1], 0, None))
    np.testing.assert_allclose(svd(a).singular_values, eig, atol=1e-9 * eig[0])


@given(seeds, st.integers(0, 3))
def test_svd_rank_deficient_input(seed, rank):
    rng = np.random.default_rng(seed)
    a = crandn(rng, (4, rank)) @ crandn(rng, (rank, 4)) if rank else np.zeros((4, 4), complex)
    r = svd(a)
    np.testing.assert_allclose(r.reconstruct(), a, atol=1e-9 * max(1.0, np.linalg.norm(a)))
    np.testing.assert_allclose(r.left.conj().T @ r.left, np.eye(4), atol=1e-9)
    assert np.all(r.singular_values[rank:] <= 1e-9 * max(1.0, np.linalg.norm(a)))


def test_svd_rejects_bad_input():
    with pytest.raises(ValueError):
        svd(np.ones((2, 3)))
    with pytest.raises(ValueError):
        svd(np.array([[1.0, np.nan], [0.0, 1.0]]))


def test_digital_update_returns_leading_left_vectors(rng):
    a = crandn(rng, (4, 4))
    u = digital_update(a, 2)
    ref = np.linalg.svd(a)[0][:, :2]
    # same subspace, column phases may differ
    np.testing.assert_allclose(np.abs(np.sum(u.conj() * ref, axis=0)), 1.0, atol=1e-10)
    with pytest.raises(ValueError):
        digital_update(a, 5)


@given(seeds, st.integers(1, 4))
def test_normalize_power(seed, ns):
    rng = np.random.default_rng(seed)
    analog, digital = crandn(rng, (16, 4)), crandn(rng, (4, ns))
    out = normalize_power(analog, digital, ns)
    assert np.linalg.norm(analog @ out) ** 2 == pytest.approx(ns, rel=1e-12)


def test_normalize_power_rejects_zero():
    with pytest.raises(DegenerateInputError):
        normalize_power(np.zeros((4, 2)), np.ones((2, 2)), 2)


# --- throughput -------------------------------------------------------------------

def _rate_oracle(h, w, u, f, v, s2, ns):
    wu, fv = w @ u, f @ v
    g = wu.conj().T @ h @ fv
    m = np.eye(wu.shape[1]) + np.linalg.inv(wu.conj().T @ wu) @ g @ g.conj().T / (s2 * ns)
    return math.log2(abs(np.linalg.det(m)))


@given(seeds, st.floats(0.01, 100))
def test_throughput_matches_determinant_oracle(seed, s2):
    rng = np.random.default_rng(seed)
    h = crandn(rng, (12, 10))
    w, u, f, v = crandn(rng, (12, 4)), crandn(rng, (4, 3)), crandn(rng, (10, 4)), crandn(rng, (4, 3))
    ours = throughput(h, w, u, f, v, s2, 3)
    assert ours == pytest.approx(_rate_oracle(h, w, u, f, v, s2, 3), rel=1e-9, abs=1e-12)


def test_throughput_single_stream_closed_form():
    h = np.array([[2.0]])
    one = np.ones((1, 1))
    assert throughput(h, one, one, one, one, 1.0, 1) == pytest.approx(math.log2(5.0))


def test_throughput_is_nonnegative_and_grows_with_snr(rng):
    h = crandn(rng, (8, 8))
    w, u, f, v = crandn(rng, (8, 2)), crandn(rng, (2, 2)), crandn(rng, (8, 2)), crandn(rng, (2, 2))
    rates = [throughput(h, w, u, f, v, s2, 2) for s2 in (100.0, 1.0, 0.01)]
    assert rates[0] >= 0
    assert rates[0] < rates[1] < rates[2]


def test_throughput_invariant_to_combiner_mixing(rng):
    # the rate whitens noise through W U, so any invertible remix of U cancels
    h = crandn(rng, (8, 8))
    w, u, f, v = crandn(rng, (8, 3)), crandn(rng, (3, 3)), crandn(rng, (8, 3)), crandn(rng, (3, 3))
    mix = crandn(rng, (3, 3))
    assert throughput(h, w, u @ mix, f, v, 1.0, 3) == pytest.approx(throughput(h, w, u, f, v, 1.0, 3), rel=1e-9)


def test_throughput_rejects_singular_combiner():
    w = np.ones((4, 2))
    with pytest.raises(DegenerateInputError):
        throughput(np.eye(4), w, np.eye(2), np.eye(4)[:, :2], np.eye(2), 1.0, 2)

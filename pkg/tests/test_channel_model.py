import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import j0 as scipy_j0

from conftest import crandn
from mmtrack.channel_model import (
    ChannelParams,
    EvolutionParams,
    PathState,
    array_response,
    assemble_channel,
    bessel_j0,
    correlation_from_velocity,
    doppler_frequency,
    evolve_state,
    sample_initial_state,
    steering_matrix,
    wrap_angle,
)

angles = st.floats(-math.pi, math.pi, allow_nan=False)


# --- Jakes correlation -------------------------------------------------------

def test_doppler_anchor_is_exactly_200_hz():
    assert doppler_frequency(72e9, 3.0) == 200.0


@pytest.mark.parametrize("velocity, expected", [(1.0, 0.98906), (3.0, 0.90371), (4.4, 0.79870)])
def test_jakes_correlation_at_reference_speeds(velocity, expected):
    assert correlation_from_velocity(72e9, velocity, 5e-4) == pytest.approx(expected, abs=1e-5)


def test_zero_velocity_gives_full_correlation():
    assert correlation_from_velocity(72e9, 0.0, 5e-4) == 1.0


def test_first_zero_of_j0_is_clamped(caplog):
    # 2 pi f_D T just past 2.4048 makes J0 slightly negative
    v = 2.45 / (2 * math.pi * 5e-4) * 3.6 * 3e8 / 72e9
    assert correlation_from_velocity(72e9, v, 5e-4) == 0.0
    assert "clamping" in caplog.text


@pytest.mark.parametrize("bad", [(-1.0, 3.0, 5e-4), (72e9, -3.0, 5e-4), (72e9, 3.0, -1e-3)])
def test_negative_physical_inputs_rejected(bad):
    with pytest.raises(ValueError):
        correlation_from_velocity(*bad)


@given(st.floats(0, 60))
def test_bessel_j0_matches_scipy(x):
    assert abs(bessel_j0(x) - scipy_j0(x)) <= 1e-10


def test_bessel_j0_is_even_and_rejects_inf():
    assert bessel_j0(-3.7) == bessel_j0(3.7)
    with pytest.raises(ValueError):
        bessel_j0(math.inf)


# --- geometry ----------------------------------------------------------------

@given(st.floats(-100, 100, allow_nan=False))
def test_wrap_angle_lands_in_half_open_interval(a):
    w = wrap_angle(a)
    assert -math.pi <= w < math.pi
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)


@given(angles, st.integers(1, 128))
def test_array_response_is_unit_modulus(theta, n):
    a = array_response(theta, n)
    assert a.shape == (n,)
    np.testing.assert_allclose(np.abs(a), 1.0, atol=1e-12)
    assert a[0] == 1


def test_steering_matrix_columns_have_unit_norm():
    a = steering_matrix(np.linspace(-3, 3, 7), 32)
    np.testing.assert_allclose(np.linalg.norm(a, axis=0), 1.0, atol=1e-12)


def test_broadside_response_is_all_ones():
    np.testing.assert_allclose(array_response(0.0, 8), np.ones(8))


# --- assembly ----------------------------------------------------------------

def test_channel_equals_sum_of_rank_one_paths(rng):
    params = ChannelParams(12, 10, 3)
    state = sample_initial_state(rng, params)
    h = assemble_channel(state, params)
    oracle = sum(
        state.gains[l]
        * np.outer(array_response(state.aoa[l], 10), array_response(state.aod[l], 12).conj())
        for l in range(3)
    ) * math.sqrt(12 * 10 / 3) / math.sqrt(12 * 10)
    np.testing.assert_allclose(h, oracle, atol=1e-12)
    assert np.linalg.matrix_rank(h) == 3


def test_assemble_rejects_path_count_mismatch(rng):
    state = sample_initial_state(rng, ChannelParams(8, 8, 2))
    with pytest.raises(ValueError):
        assemble_channel(state, ChannelParams(8, 8, 3))


def test_channel_params_validation():
    with pytest.raises(ValueError):
        ChannelParams(4, 4, 5)
    with pytest.raises(ValueError):
        ChannelParams(4, 4, 1, spacing_ratio=0.0)


def test_channel_power_is_normalized_on_average():
    rng = np.random.default_rng(3)
    params = ChannelParams(16, 16, 4)
    power = np.mean([np.linalg.norm(assemble_channel(sample_initial_state(rng, params), params)) ** 2
                     for _ in range(4000)])
    # E||H||_F^2 = Nt Nr: each path contributes Nt Nr / L on average
    assert power == pytest.approx(256, rel=0.05)


# --- evolution ---------------------------------------------------------------

def test_static_evolution_is_identity(rng):
    state = sample_initial_state(rng, ChannelParams())
    nxt = evolve_state(state, EvolutionParams(1.0, 0.0), rng)
    np.testing.assert_array_equal(nxt.gains, state.gains)
    np.testing.assert_array_equal(nxt.aod, state.aod)
    np.testing.assert_array_equal(nxt.aoa, state.aoa)


@given(st.floats(0, 1), st.floats(0, 0.5))
def test_angle_kicks_stay_within_delta(rho, delta):
    rng = np.random.default_rng(0)
    state = PathState(np.zeros(4), np.full(4, 1.0), np.ones(4, dtype=complex))
    nxt = evolve_state(state, EvolutionParams(rho, delta), rng)
    assert np.all(np.abs(nxt.aod) <= delta + 1e-15)
    assert np.all(np.abs(nxt.aoa - 1.0) <= delta + 1e-15)


def test_gain_autocorrelation_matches_rho():
    rng = np.random.default_rng(1)
    rho, n = 0.9, 40000
    state = PathState(np.zeros(n), np.zeros(n), crandn(rng, n))
    nxt = evolve_state(state, EvolutionParams(rho, 0.0), rng)
    corr = np.mean(nxt.gains * state.gains.conj())
    assert abs(corr - rho) < 0.02
    assert np.mean(np.abs(nxt.gains) ** 2) == pytest.approx(1.0, abs=0.03)


def test_evolution_is_reproducible_from_seed():
    params = ChannelParams()
    runs = []
    for _ in range(2):
        r = np.random.default_rng(99)
        s = sample_initial_state(r, params)
        for _ in range(5):
            s = evolve_state(s, EvolutionParams(0.9, 0.1), r)
        runs.append(assemble_channel(s, params))
    np.testing.assert_array_equal(runs[0], runs[1])


def test_evolution_params_validation():
    with pytest.raises(ValueError):
        EvolutionParams(1.1, 0.0)
    with pytest.raises(ValueError):
        EvolutionParams(0.5, -0.1)

import math

import numpy as np
import pytest

from transcoder.channel import (L_MAX, awgn, bpsk_map, channel_llr, make_rng, measure_average_power, q_function,
                                sigma_from_ebn0)


def test_bpsk_map_convention():
    assert bpsk_map(np.array([0, 1])).tolist() == [-1.0, 1.0]


def test_sigma_from_ebn0_closed_form():
    assert sigma_from_ebn0(0.0, 0.5) == pytest.approx(1.0)
    assert sigma_from_ebn0(10 * math.log10(2), 1.0) == pytest.approx(0.5)


def test_sigma_rejects_bad_rate():
    with pytest.raises(ValueError):
        sigma_from_ebn0(1.0, 0.0)


def test_awgn_variance_and_zero_sigma():
    rng = make_rng(0)
    y = awgn(np.zeros(200_000), 0.7, rng)
    assert abs(y.var() - 0.49) < 0.01
    with pytest.raises(ValueError):
        awgn(np.zeros(3), 0.0, rng)


def test_awgn_deterministic_per_key():
    a = awgn(np.zeros(10), 1.0, make_rng(5, 1, 2))
    b = awgn(np.zeros(10), 1.0, make_rng(5, 1, 2))
    c = awgn(np.zeros(10), 1.0, make_rng(5, 1, 3))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_llr_two_gaussian_oracle():
    rng = make_rng(1)
    sigma = 0.8
    y = rng.normal(0, 1.5, 1000)
    p0 = np.exp(-((y + 1) ** 2) / (2 * sigma**2))
    p1 = np.exp(-((y - 1) ** 2) / (2 * sigma**2))
    ref = np.clip(np.log(p0 / p1), -L_MAX, L_MAX)
    assert np.max(np.abs(channel_llr(y, sigma) - ref)) < 1e-12


def test_llr_clamped():
    assert channel_llr(np.array([-100.0, 100.0]), 0.1).tolist() == [L_MAX, -L_MAX]


def test_noiseless_llr_decodes_codeword():
    c = np.array([0, 1, 1, 0])
    llr = channel_llr(bpsk_map(c), 0.5)
    assert ((llr < 0).astype(int) == c).all()


def test_average_power():
    assert measure_average_power(bpsk_map(np.array([[0, 1, 0], [1, 1, 1]]))) == 1.0
    with pytest.raises(ValueError):
        measure_average_power(np.zeros((0, 4)))


def test_uncoded_ber_matches_q():
    sigma = 0.7
    rng = make_rng(2)
    c = rng.integers(0, 2, 100_000)
    y = awgn(bpsk_map(c), sigma, rng)
    ber = np.mean((channel_llr(y, sigma) < 0) != c)
    p = q_function(1 / sigma)
    assert abs(ber - p) < 3 * math.sqrt(p * (1 - p) / c.size)

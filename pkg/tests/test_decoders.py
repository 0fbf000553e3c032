import numpy as np
import pytest

from transcoder import autodiff as ad
from transcoder.channel import awgn, bpsk_map, channel_llr, make_rng, sigma_from_ebn0
from transcoder.codes import PolarCode, brute_force_codebook, load_code
from transcoder.decoders import (BpConfig, DecoderError, SclConfig, bp_decode, hard_decision, sc_decode,
                                 scl_decode, soft_sc_decode, stage_targets)


def bitwise_map(codebook, y, sigma):
    """Exact bit LLRs log P(c_i=0|y)/P(c_i=1|y) by enumerating the codebook."""
    s = bpsk_map(codebook)
    logp = -((y[:, None, :] - s[None]) ** 2).sum(-1) / (2 * sigma**2)
    logp -= logp.max(axis=1, keepdims=True)
    w = np.exp(logp)
    p0 = w @ (codebook == 0)
    p1 = w @ (codebook == 1)
    return np.log(p0) - np.log(p1)


def noisy_frames(code, sigma, frames, seed):
    rng = make_rng(seed)
    b = rng.integers(0, 2, (frames, code.k), dtype=np.uint8)
    c = code.encode(b)
    y = awgn(bpsk_map(c), sigma, rng)
    return b, c, y


@pytest.mark.parametrize("name", ["spc_3_2", "rep_2_1"])
def test_bp_equals_map_on_cycle_free(name):
    code = load_code(name)
    sigma = 0.8
    _, _, y = noisy_frames(code, sigma, 1000, 1)
    post = bp_decode(code, channel_llr(y, sigma), BpConfig(1))
    ref = bitwise_map(brute_force_codebook(code), y, sigma)
    ok = np.abs(ref) < 19  # away from the output clamp
    assert np.max(np.abs(post - ref)[ok]) < 1e-9


def test_bp_saturated_consistent_input():
    code = load_code("hamming_7_4")
    c = code.encode(np.array([1, 0, 1, 1], dtype=np.uint8))
    llr = 19.0 * (1 - 2.0 * c)
    post = bp_decode(code, llr, BpConfig(1))
    assert np.array_equal(hard_decision(post), c)
    assert not code.syndrome(hard_decision(post)).any()


def test_bp_zero_input_zero_output():
    code = load_code("ldpc_49_24")
    assert not bp_decode(code, np.zeros(49), BpConfig(5)).any()


def test_bp_sign_equivariance_even_rows():
    # all-ones is a codeword when every check has even weight, so negating inputs negates outputs
    code = load_code("hamming_7_4")
    rng = make_rng(3)
    llr = rng.normal(0, 3, (200, 7))
    a = bp_decode(code, llr, BpConfig(5))
    b = bp_decode(code, -llr, BpConfig(5))
    assert np.allclose(a, -b, atol=1e-12)


def test_bp_dimension_mismatch():
    with pytest.raises(DecoderError):
        bp_decode(load_code("hamming_7_4"), np.zeros(6))


def test_bp_config_validation():
    with pytest.raises(DecoderError):
        BpConfig(0)
    with pytest.raises(DecoderError):
        BpConfig(3, variant="bogus")


def test_bp_tensor_path_matches_numpy():
    code = load_code("ldpc_49_24")
    sigma = sigma_from_ebn0(2.0, code.rate)
    _, _, y = noisy_frames(code, sigma, 32, 4)
    llr = channel_llr(y, sigma)
    fast = bp_decode(code, llr, BpConfig(5))
    slow = bp_decode(code, ad.Tensor(llr), BpConfig(5))
    assert np.max(np.abs(fast - slow.data)) < 1e-9


def test_bp_trace_has_one_entry_per_iteration():
    code = load_code("hamming_7_4")
    out, trace = bp_decode(code, np.linspace(-2, 2, 7), BpConfig(4), trace=True)
    assert len(trace) == 4
    assert np.allclose(np.clip(trace[-1], -20, 20), out)


def test_early_stop_same_decisions():
    code = load_code("ldpc_49_24")
    sigma = sigma_from_ebn0(3.0, code.rate)
    _, _, y = noisy_frames(code, sigma, 10_000, 5)
    llr = channel_llr(y, sigma)
    full = bp_decode(code, llr, BpConfig(20))
    early = bp_decode(code, llr, BpConfig(20, early_stop=True))
    assert np.array_equal(hard_decision(full), hard_decision(early))


def test_minsum_single_check_hand_value():
    code = load_code("spc_3_2")
    post = bp_decode(code, np.array([2.0, -3.0, 5.0]), BpConfig(1, variant="min-sum"))
    # extrinsic: sign product times min of the other magnitudes
    assert np.allclose(post, [2 - 3, -3 + 2, 5 - 2])


def test_hard_decision_examples():
    assert hard_decision(np.array([2.0, -3.0])).tolist() == [0, 1]
    assert hard_decision(np.array([0.0])).tolist() == [0]
    code = load_code("bch_31_16")
    c = code.encode(make_rng(0).integers(0, 2, (20, 16), dtype=np.uint8))
    assert np.array_equal(hard_decision(channel_llr(bpsk_map(c), 0.7)), c)


# ------------------------------------------------------------------ polar


def test_sc_noiseless_zero():
    code = load_code("polar_128_64")
    u, _ = sc_decode(code, channel_llr(bpsk_map(np.zeros(128)), 0.5))
    assert not u.any()


def test_sc_n2_hand_example():
    code = PolarCode(2, np.array([0]))
    # f(3, -1) = -1 decides frozen u1 = 0; g = -1 + (1 - 0) * 3 = 2 -> u2 = 0
    u, _ = sc_decode(code, np.array([3.0, -1.0]))
    assert u.tolist() == [0, 0]
    # L = [-3, -1]: g = -1 + (-3) = -4 -> u2 = 1, codeword [1, 1]
    u, _ = sc_decode(code, np.array([-3.0, -1.0]))
    assert u.tolist() == [0, 1]


def test_sc_wrong_length():
    with pytest.raises(DecoderError):
        sc_decode(load_code("polar_16_8"), np.zeros(15))


def test_scl_list_one_equals_sc():
    code = load_code("polar_128_64")
    sigma = sigma_from_ebn0(1.5, code.rate)
    _, c, y = noisy_frames(code, sigma, 10_000, 6)
    llr = channel_llr(y, sigma)
    u_sc, _ = sc_decode(code, llr)
    u_l1, _ = scl_decode(code, llr, SclConfig(1))
    assert np.array_equal(u_sc, u_l1)


def test_scl_full_list_is_ml():
    code = load_code("polar_8_3")
    sigma = 0.9
    _, _, y = noisy_frames(code, sigma, 1000, 7)
    llr = channel_llr(y, sigma)
    u, _ = scl_decode(code, llr, SclConfig(8))
    cb = brute_force_codebook(code)
    ml = cb[np.argmax(y @ bpsk_map(cb).T, axis=1)]
    assert np.array_equal(code.encode(code.extract_message(u)), ml)


def test_scl_metric_nonnegative_and_list_helps():
    code = load_code("polar_16_8")
    sigma = 0.8
    _, _, y = noisy_frames(code, sigma, 300, 8)
    llr = channel_llr(y, sigma)
    u1, m1 = scl_decode(code, llr, SclConfig(1))
    u8, m8 = scl_decode(code, llr, SclConfig(8))
    assert (m1 >= 0).all() and (m8 >= 0).all()
    assert (m8 <= m1 + 1e-12).all()


def test_soft_sc_sign_agreement():
    code = load_code("polar_128_64")
    sigma = sigma_from_ebn0(4.0, code.rate)
    _, _, y = noisy_frames(code, sigma, 10_000, 9)
    llr = channel_llr(y, sigma)
    u, _ = sc_decode(code, llr)
    with ad.no_grad():
        info, _ = soft_sc_decode(code, llr)
    agree = hard_decision(info.data) == u[:, code.info_set]
    assert agree.mean() >= 0.99


def test_soft_sc_zero_in_zero_out():
    code = load_code("polar_16_8")
    info, stages = soft_sc_decode(code, np.zeros((2, 16)))
    assert not info.data.any()


def test_soft_sc_gradient():
    code = load_code("polar_8_4")
    rng = np.random.default_rng(0)
    llr = ad.parameter(rng.normal(0, 2, (3, 8)))
    w = rng.normal(size=(3, 4))

    def f():
        info, stages = soft_sc_decode(code, llr)
        return ad.sum_(info * w) + ad.sum_(stages[0] * 0.3)

    for analytic, numeric in ad.gradcheck(f, [llr]):
        np.testing.assert_allclose(analytic, numeric, rtol=1e-3, atol=1e-6)


def test_stage_targets_noiseless():
    code = load_code("polar_16_8")
    rng = np.random.default_rng(1)
    b = rng.integers(0, 2, (5, 8), dtype=np.uint8)
    u = np.zeros((5, 16), dtype=np.uint8)
    u[:, code.info_set] = b
    c = code.encode(b)
    assert np.array_equal(stage_targets(code, u, 0), c)
    assert np.array_equal(stage_targets(code, u, 4), u)
    _, stages = soft_sc_decode(code, channel_llr(bpsk_map(c), 0.3))
    for d, st in enumerate(stages, start=1):
        assert np.array_equal(hard_decision(st.data), stage_targets(code, u, d))

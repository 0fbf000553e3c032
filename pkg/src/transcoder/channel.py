"""BPSK over AWGN: mapping, noise, Eb/N0 bookkeeping and channel LLRs.

LLR convention everywhere in the package: L = log P(bit=0) / P(bit=1), so a
positive value favours bit 0.  BPSK maps bit c to the symbol 2c - 1.
"""
from __future__ import annotations

import math

import numpy as np

L_MAX = 20.0
RNG_NAME = "numpy.random.Philox"


def bpsk_map(c: np.ndarray) -> np.ndarray:
    """Bit 0 -> -1, bit 1 -> +1."""
    return 2.0 * np.asarray(c, dtype=np.float64) - 1.0


def awgn(s: np.ndarray, sigma: float | np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Add zero-mean Gaussian noise of standard deviation ``sigma`` (scalar or per-frame column)."""
    sigma_arr = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma_arr <= 0):
        raise ValueError(f"noise standard deviation must be positive, got {sigma}")
    s = np.asarray(s, dtype=np.float64)
    return s + sigma_arr * rng.standard_normal(s.shape)


def sigma_from_ebn0(ebn0_db: float | np.ndarray, rate: float) -> float | np.ndarray:
    """Noise std for unit-power real BPSK: sigma^2 = 1 / (2 R 10^(Eb/N0 / 10))."""
    if not 0 < rate <= 1:
        raise ValueError(f"code rate must lie in (0, 1], got {rate}")
    return np.sqrt(1.0 / (2.0 * rate * 10.0 ** (np.asarray(ebn0_db, dtype=np.float64) / 10.0)))[()]


def channel_llr(y: np.ndarray, sigma: float | np.ndarray, clamp: float = L_MAX) -> np.ndarray:
    """Exact bit LLR -2 y / sigma^2 under the 2c - 1 mapping, clamped to +-clamp."""
    sigma = np.asarray(sigma, dtype=np.float64)
    return np.clip(-2.0 * np.asarray(y, dtype=np.float64) / sigma**2, -clamp, clamp)


def measure_average_power(frames: np.ndarray) -> float:
    """Mean over frames of (1/n) <s, s>."""
    frames = np.atleast_2d(np.asarray(frames, dtype=np.float64))
    if frames.shape[0] == 0:
        raise ValueError("empty batch")
    return float(np.mean(np.sum(frames * frames, axis=-1) / frames.shape[-1]))


def q_function(x: float | np.ndarray) -> float | np.ndarray:
    """Gaussian tail probability P(N(0,1) > x)."""
    from scipy.special import erfc

    return 0.5 * erfc(np.asarray(x) / math.sqrt(2.0))


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for the stream identified by (seed, *key)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))

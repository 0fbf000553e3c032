"""Normalised pairwise Euclidean distances between mapped codewords.

Distances are divided by 2 sqrt(n), the largest distance two BPSK frames can
have, so a BPSK pair at Hamming distance w lands exactly on sqrt(w / n).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..channel import bpsk_map
from ..codes import CodeError, all_messages

EXHAUSTIVE_MAX_K = 10


@dataclass
class DistanceHistogram:
    edges: np.ndarray
    counts: np.ndarray
    distances: np.ndarray
    exhaustive: bool

    def support(self, decimals: int = 12) -> np.ndarray:
        return np.unique(np.round(self.distances, decimals))


def _pairs(code, pairs: int, rng: np.random.Generator):
    if code.k <= EXHAUSTIVE_MAX_K:
        msgs = all_messages(code.k)
        i, j = np.triu_indices(len(msgs), k=1)
        return msgs[i], msgs[j], True
    a = rng.integers(0, 2, (pairs, code.k), dtype=np.uint8)
    b = rng.integers(0, 2, (pairs, code.k), dtype=np.uint8)
    same = (a == b).all(axis=1)
    while same.any():
        b[same] = rng.integers(0, 2, (int(same.sum()), code.k), dtype=np.uint8)
        same = (a == b).all(axis=1)
    return a, b, False


def pair_distances(code, mapper: str = "bpsk", pairs: int = 100_000, rng=None, model=None,
                   sigma: float | None = None, chunk: int = 50_000) -> tuple[np.ndarray, bool]:
    """Normalised distances of distinct codeword pairs (all pairs when 2^k is small)."""
    if code.k < 1:
        raise CodeError("need at least two codewords")
    rng = rng if rng is not None else np.random.default_rng(0)
    ma, mb, exhaustive = _pairs(code, pairs, rng)
    scale = 1.0 / (2.0 * np.sqrt(code.n))
    out = []
    for start in range(0, len(ma), chunk):
        ca = code.encode(ma[start:start + chunk])
        cb = code.encode(mb[start:start + chunk])
        if mapper == "bpsk":
            sa, sb = bpsk_map(ca), bpsk_map(cb)
        elif mapper == "transcoder":
            if model is None or sigma is None:
                raise ValueError("the transcoder mapper needs a calibrated model and sigma")
            with ad.no_grad():
                sa = model.encode(ca, sigma).data.astype(np.float64)
                sb = model.encode(cb, sigma).data.astype(np.float64)
        else:
            raise ValueError(f"unknown mapper {mapper!r}")
        out.append(np.sqrt(np.sum((sa - sb) ** 2, axis=1)) * scale)
    return np.concatenate(out), exhaustive


def distance_histogram(code, mapper: str = "bpsk", pairs: int = 100_000, bins: int = 50, rng=None,
                       model=None, sigma: float | None = None, value_range=(0.0, 1.0)) -> DistanceHistogram:
    d, exhaustive = pair_distances(code, mapper, pairs, rng, model, sigma)
    hi = max(value_range[1], float(d.max()))
    counts, edges = np.histogram(d, bins=bins, range=(value_range[0], hi))
    return DistanceHistogram(edges, counts, d, exhaustive)

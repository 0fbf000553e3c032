"""Successive-cancellation decoding of polar codes (plain, list and soft).

Codewords are x = u F^{(x)t} in bit-natural order.  Splitting u = [u1, u2]
gives x = [(u1 ^ u2) F', u2 F'], so a node of size M decodes its left child
from f(a, b) and its right child from g(a, b, s) = b + (1 - 2s) a, where a
and b are the left/right halves of the node LLRs and s the left child's
re-encoded bits.

All decoders are vectorised over a batch of frames; SCL additionally
carries a path axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..channel import L_MAX
from ..codes import PolarCode, polar_transform
from .bp import ATANH_EPS, DecoderError, hard_decision


@dataclass(frozen=True)
class SclConfig:
    list_size: int = 8

    def __post_init__(self):
        if self.list_size < 1:
            raise DecoderError(f"list size must be >= 1, got {self.list_size}")


def f_minsum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """sign(a) sign(b) min(|a|, |b|), with sign(0) taken as +1."""
    s = np.where((a < 0) ^ (b < 0), -1.0, 1.0)
    return s * np.minimum(np.abs(a), np.abs(b))


def _check_llr(code: PolarCode, llr) -> None:
    if llr.shape[-1] != code.N:
        raise DecoderError(f"LLR length {llr.shape[-1]} does not match N={code.N}")


# ------------------------------------------------------------------ SC


def _sc_node(L: np.ndarray, frozen: np.ndarray) -> np.ndarray:
    M = L.shape[-1]
    if frozen.all():
        return np.zeros(L.shape, dtype=np.uint8)
    if M == 1:
        return hard_decision(L)
    h = M // 2
    a, b = L[:, :h], L[:, h:]
    x1 = _sc_node(f_minsum(a, b), frozen[:h])
    x2 = _sc_node(b + (1.0 - 2.0 * x1) * a, frozen[h:])
    return np.concatenate([x1 ^ x2, x2], axis=1)


def sc_decode(code: PolarCode, llr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Min-sum SC.  Returns (u_hat, info-bit LLR signs as +-1 soft values)."""
    llr = np.asarray(llr, dtype=np.float64)
    _check_llr(code, llr)
    single = llr.ndim == 1
    L = np.atleast_2d(np.clip(llr, -L_MAX, L_MAX))
    x = _sc_node(L, code.frozen_mask)
    u = polar_transform(x)
    soft = np.where(u[:, code.info_set] == 1, -1.0, 1.0)
    return (u[0], soft[0]) if single else (u, soft)


# ------------------------------------------------------------------ SCL


def _gather_paths(arr: np.ndarray, perm: np.ndarray) -> np.ndarray:
    return np.take_along_axis(arr, perm[..., None], axis=1)


def _scl_node(L: np.ndarray, frozen: np.ndarray, pm: np.ndarray):
    """L: (B, P, M).  Returns (x (B, P, M), pm, perm (B, P)) where perm maps new paths to input paths."""
    B, P, M = L.shape
    ident = np.broadcast_to(np.arange(P), (B, P))
    if frozen.all():
        pm = pm + np.where(L < 0, np.abs(L), 0.0).sum(axis=-1)
        return np.zeros(L.shape, dtype=np.uint8), pm, ident
    if M == 1:
        l = L[..., 0]
        cand = np.concatenate([pm + np.where(l < 0, -l, 0.0), pm + np.where(l >= 0, l, 0.0)], axis=1)
        sel = np.argsort(cand, axis=1, kind="stable")[:, :P]
        pm = np.take_along_axis(cand, sel, axis=1)
        bits = (sel // P).astype(np.uint8)
        return bits[..., None], pm, sel % P
    h = M // 2
    a, b = L[..., :h], L[..., h:]
    x1, pm, p1 = _scl_node(f_minsum(a, b), frozen[:h], pm)
    a, b = _gather_paths(a, p1), _gather_paths(b, p1)
    x2, pm, p2 = _scl_node(b + (1.0 - 2.0 * x1) * a, frozen[h:], pm)
    x1 = _gather_paths(x1, p2)
    perm = np.take_along_axis(p1, p2, axis=1)
    return np.concatenate([x1 ^ x2, x2], axis=-1), pm, perm


def scl_decode(code: PolarCode, llr: np.ndarray, cfg: SclConfig = SclConfig()):
    """Min-sum SC list decoding.  Returns (u_hat of the best path, its path metric).

    The metric of a path grows by |L| whenever a decision disagrees with the
    sign of its leaf LLR.  Paths 1..L-1 start at +inf so that L=1 and L>1
    share the same code path.
    """
    llr = np.asarray(llr, dtype=np.float64)
    _check_llr(code, llr)
    single = llr.ndim == 1
    L = np.atleast_2d(np.clip(llr, -L_MAX, L_MAX))
    B, P = L.shape[0], cfg.list_size
    pm = np.full((B, P), np.inf)
    pm[:, 0] = 0.0
    Lp = np.repeat(L[:, None, :], P, axis=1)
    x, pm, _ = _scl_node(Lp, code.frozen_mask, pm)
    best = np.argmin(pm, axis=1)
    xb = x[np.arange(B), best]
    u = polar_transform(xb)
    metric = pm[np.arange(B), best]
    return (u[0], metric[0]) if single else (u, metric)


def scl_path_metrics(code: PolarCode, llr: np.ndarray, list_size: int) -> np.ndarray:
    """All final path metrics (B, L), sorted ascending; useful for inspection."""
    L = np.atleast_2d(np.clip(np.asarray(llr, dtype=np.float64), -L_MAX, L_MAX))
    pm = np.full((L.shape[0], list_size), np.inf)
    pm[:, 0] = 0.0
    _, pm, _ = _scl_node(np.repeat(L[:, None, :], list_size, axis=1), code.frozen_mask, pm)
    return np.sort(pm, axis=1)


# ------------------------------------------------------------------ soft SC


def f_exact(a, b):
    """2 atanh(tanh(a/2) tanh(b/2)) on Tensors with a clipped atanh argument."""
    eps = max(ATANH_EPS, 8 * float(np.finfo(ad.get_dtype()).eps))
    p = ad.tanh(a * 0.5) * ad.tanh(b * 0.5)
    return ad.atanh(ad.clip(p, -1.0 + eps, 1.0 - eps)) * 2.0


def soft_sc_decode(code: PolarCode, llr):
    """Differentiable SC with the exact sum-product f.

    Info leaves pass on the soft bit tanh(L/2) (the expected value of the
    +-1 symbol 1 - 2u), frozen leaves pass +1; soft XOR is a product.

    Returns (info LLRs (B, k), stages) where ``stages[d-1]`` holds the LLRs of
    all nodes at depth d (d = 1..t) concatenated left to right; their targets
    are given by ``stage_targets``.
    """
    llr = ad.as_tensor(llr)
    _check_llr(code, llr)
    if llr.ndim == 1:
        llr = ad.reshape(llr, (1, -1))
    t = int(np.log2(code.N))
    stages: list[list] = [[] for _ in range(t)]
    leaves: list = []
    frozen = code.frozen_mask

    def node(L, lo: int, M: int, depth: int):
        if depth > 0:
            stages[depth - 1].append(L)
        if M == 1:
            if frozen[lo]:
                return ad.Tensor(np.ones((L.shape[0], 1)))
            leaves.append(L)
            return ad.tanh(L * 0.5)
        h = M // 2
        a, b = L[:, :h], L[:, h:]
        s1 = node(f_exact(a, b), lo, h, depth + 1)
        s2 = node(b + s1 * a, lo + h, h, depth + 1)
        return ad.concat([s1 * s2, s2], axis=1)

    node(ad.clip(llr, -L_MAX, L_MAX), 0, code.N, 0)
    info = ad.concat(leaves, axis=1)
    return info, [ad.concat(s, axis=1) for s in stages]


def stage_targets(code: PolarCode, u: np.ndarray, depth: int) -> np.ndarray:
    """Bits whose LLRs appear at ``depth``: each length-N/2^depth chunk of u re-encoded."""
    u = np.atleast_2d(np.asarray(u, dtype=np.uint8))
    size = code.N >> depth
    chunks = u.reshape(u.shape[0], -1, size)
    return polar_transform(chunks).reshape(u.shape)

"""Flooding-schedule belief propagation on a Tanner graph.

Messages live on edges numbered check-major (see ``TannerGraph``).  One
message-passing routine, ``_bp_core``, is written against a tiny backend
namespace so the same arithmetic runs on numpy arrays (Monte Carlo fast
path) and on autodiff Tensors (training path).

Modes for the sum-product check update:
  exact   inputs clipped to +-L_MAX, atanh argument clipped to +-(1 - 1e-12),
          outputs clipped to +-L_MAX
  smooth  saturation L_MAX * tanh(x / L_MAX) instead of hard clips and a
          shrunk atanh argument; differentiable everywhere (training default)
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..channel import L_MAX
from ..codes import LinearCode, TannerGraph

ATANH_EPS = 1e-12
SMOOTH_EPS = 1e-6


class DecoderError(ValueError):
    pass


@dataclass(frozen=True)
class BpConfig:
    iterations: int = 20
    variant: str = "sum-product"  # or "min-sum"
    early_stop: bool = False
    mode: str = "exact"  # or "smooth"

    def __post_init__(self):
        if self.iterations < 1:
            raise DecoderError(f"iterations must be >= 1, got {self.iterations}")
        if self.variant not in ("sum-product", "min-sum"):
            raise DecoderError(f"unknown BP variant {self.variant!r}")
        if self.mode not in ("exact", "smooth"):
            raise DecoderError(f"unknown BP mode {self.mode!r}")


def hard_decision(x) -> np.ndarray:
    """LLR -> bit: x > 0 -> 0, x < 0 -> 1, and the tie x = 0 -> 0."""
    data = x.data if isinstance(x, ad.Tensor) else np.asarray(x)
    return (data < 0).astype(np.uint8)


class _NumpyOps:
    tanh = staticmethod(np.tanh)
    atanh = staticmethod(np.arctanh)

    @staticmethod
    def clip(x, lo, hi):
        return np.clip(x, lo, hi)

    @staticmethod
    def take(x, idx):
        return x[..., idx]

    @staticmethod
    def pad_one(x):
        return np.concatenate([x, np.ones(x.shape[:-1] + (1,), dtype=x.dtype)], axis=-1)

    @staticmethod
    def reshape(x, shape):
        return x.reshape(shape)

    @staticmethod
    def prod_except(x):
        return ad._prod_except_np(x)


class _TensorOps:
    tanh = staticmethod(ad.tanh)
    atanh = staticmethod(ad.atanh)

    @staticmethod
    def clip(x, lo, hi):
        return ad.clip(x, lo, hi)

    @staticmethod
    def take(x, idx):
        return ad.take(x, idx, axis=-1)

    @staticmethod
    def pad_one(x):
        return ad.concat([x, np.ones(x.shape[:-1] + (1,))], axis=-1)

    @staticmethod
    def reshape(x, shape):
        return ad.reshape(x, shape)

    @staticmethod
    def prod_except(x):
        return ad.prod_except(x, axis=-1)


def _atanh_eps(dtype) -> float:
    return max(ATANH_EPS, 8 * float(np.finfo(dtype).eps))


def _bp_core(ops, graph: TannerGraph, lch, iterations: int, mode: str, trace: list | None = None):
    """Run ``iterations`` flooding iterations; returns the clipped posterior."""
    inc = graph.var_incidence.astype(ad.get_dtype() if ops is _TensorOps else lch.dtype)
    slots = graph.check_slots
    n_chk, width = slots.shape
    lead = tuple(lch.shape[:-1])
    dtype = lch.data.dtype if ops is _TensorOps else lch.dtype
    eps = _atanh_eps(dtype) if mode == "exact" else SMOOTH_EPS
    m_cv = None
    for _ in range(iterations):
        post = lch if m_cv is None else lch + m_cv @ inc
        m_vc = ops.take(post, graph.edge_var)
        if m_cv is not None:
            m_vc = m_vc - m_cv
        if mode == "exact":
            t = ops.tanh(ops.clip(m_vc, -L_MAX, L_MAX) * 0.5)
        else:
            t = ops.tanh(ops.tanh(m_vc * (1.0 / L_MAX)) * (0.5 * L_MAX))
        t_slots = ops.reshape(ops.take(ops.pad_one(t), slots.ravel()), lead + (n_chk, width))
        loo = ops.reshape(ops.prod_except(t_slots), lead + (n_chk * width,))
        p = ops.take(loo, graph.slot_of_edge)
        if mode == "exact":
            m_cv = ops.clip(ops.atanh(ops.clip(p, -1.0 + eps, 1.0 - eps)) * 2.0, -L_MAX, L_MAX)
        else:
            m_cv = ops.atanh(p * (1.0 - eps)) * 2.0
        if trace is not None:
            trace.append(lch + m_cv @ inc)
    out = lch + m_cv @ inc
    if mode == "exact":
        return ops.clip(out, -L_MAX, L_MAX)
    return ops.tanh(out * (1.0 / L_MAX)) * L_MAX


def _minsum_check(m_vc: np.ndarray, graph: TannerGraph) -> np.ndarray:
    slots = graph.check_slots
    B = m_vc.shape[0]
    padded = np.concatenate([m_vc, np.full((B, 1), np.inf)], axis=1)
    v = padded[:, slots]  # (B, C, W)
    mag = np.abs(v)
    neg = v < 0
    parity = np.logical_xor.reduce(neg, axis=-1, keepdims=True)
    order = np.argsort(mag, axis=-1)
    min1 = np.take_along_axis(mag, order[..., :1], axis=-1)
    min2 = np.take_along_axis(mag, order[..., 1:2], axis=-1)
    is_min = np.arange(slots.shape[1]) == order[..., :1]
    out_mag = np.where(is_min, min2, min1)
    out = np.where(parity ^ neg, -out_mag, out_mag).reshape(B, -1)
    return np.clip(out[:, graph.slot_of_edge], -L_MAX, L_MAX)


def _minsum(graph: TannerGraph, lch: np.ndarray, iterations: int) -> np.ndarray:
    inc = graph.var_incidence
    m_cv = np.zeros((lch.shape[0], graph.n_edges))
    for _ in range(iterations):
        post = lch + m_cv @ inc
        m_vc = np.clip(post[:, graph.edge_var] - m_cv, -L_MAX, L_MAX)
        m_cv = _minsum_check(m_vc, graph)
    return np.clip(lch + m_cv @ inc, -L_MAX, L_MAX)


def bp_decode(code: LinearCode | TannerGraph, llr, cfg: BpConfig = BpConfig(), trace: bool = False):
    """Decode channel LLRs (length n, or batch x n); returns the full posterior.

    ``llr`` may be a numpy array (fast path) or an autodiff Tensor (training
    path).  With ``trace=True`` a list of per-iteration posteriors is
    returned alongside the result.
    """
    graph = code.graph if isinstance(code, LinearCode) else code
    is_tensor = isinstance(llr, ad.Tensor)
    shape = llr.shape
    if shape[-1] != graph.n_vars:
        raise DecoderError(f"LLR length {shape[-1]} does not match n={graph.n_vars}")
    if is_tensor:
        if cfg.variant != "sum-product":
            raise DecoderError("only the sum-product variant is differentiable")
        lch = llr if cfg.mode == "smooth" else ad.clip(llr, -L_MAX, L_MAX)
        steps: list | None = [] if trace else None
        out = _bp_core(_TensorOps, graph, lch, cfg.iterations, cfg.mode, steps)
        return (out, steps) if trace else out

    lch = np.clip(np.asarray(llr, dtype=np.float64), -L_MAX, L_MAX)
    single = lch.ndim == 1
    lch = np.atleast_2d(lch)
    steps = [] if trace else None
    if cfg.early_stop and not trace:
        out = _early_stop(graph, lch, cfg)
    elif cfg.variant == "min-sum":
        out = _minsum(graph, lch, cfg.iterations)
    else:
        out = _bp_core(_NumpyOps, graph, lch, cfg.iterations, cfg.mode, steps)
    if single:
        out = out[0]
        steps = None if steps is None else [s[0] for s in steps]
    return (out, steps) if trace else out


def _early_stop(graph: TannerGraph, lch: np.ndarray, cfg: BpConfig) -> np.ndarray:
    """Iterate one flooding step at a time, freezing frames whose syndrome is zero."""
    H = graph.to_matrix().T.astype(np.int64)
    inc = graph.var_incidence
    B = lch.shape[0]
    out = np.empty_like(lch)
    m_cv = np.zeros((B, graph.n_edges))
    active = np.arange(B)
    eps = _atanh_eps(lch.dtype) if cfg.mode == "exact" else SMOOTH_EPS
    for it in range(cfg.iterations):
        la, ma = lch[active], m_cv[active]
        post = la + ma @ inc
        m_vc = post[:, graph.edge_var] - ma
        if cfg.variant == "min-sum":
            ma = _minsum_check(np.clip(m_vc, -L_MAX, L_MAX), graph)
        else:
            t = np.tanh(np.clip(m_vc, -L_MAX, L_MAX) * 0.5)
            t = np.concatenate([t, np.ones((t.shape[0], 1))], axis=1)[:, graph.check_slots]
            p = ad._prod_except_np(t).reshape(t.shape[0], -1)[:, graph.slot_of_edge]
            ma = np.clip(2.0 * np.arctanh(np.clip(p, -1 + eps, 1 - eps)), -L_MAX, L_MAX)
        m_cv[active] = ma
        post = np.clip(la + ma @ inc, -L_MAX, L_MAX)
        done = ~((hard_decision(post) @ H) & 1).any(axis=1)
        if it == cfg.iterations - 1:
            done[:] = True
        out[active[done]] = post[done]
        active = active[~done]
        if active.size == 0:
            break
    return out

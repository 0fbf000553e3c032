"""Block-attention TransCoder modules built on the autodiff engine.

A module takes a length-n real vector per frame, cuts it into n_b = ceil(n/m)
blocks of m symbols (padding with +1), lifts each block to d_model features,
adds a fixed sinusoidal position code, runs post-norm transformer layers
whose input is gated by a sigma-conditioned sigmoid mask, and maps each
block either to m real symbols (encoder) or to a softmax over the 2^m bit
words of the block (decoder and refiner).

Shapes: frames are (B, n); block sequences are (B, n_b, width).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .channel import L_MAX, bpsk_map, measure_average_power

PAD_VALUE = 1.0
PE_BASE = 1000.0
PE_LENGTH = 200.0
NORM_EPS = 1e-8
MOMENTUM = 0.1


class ModelError(ValueError):
    pass


@dataclass
class ModelConfig:
    m: int = 3
    d_model: int = 16
    n_heads: int = 1
    d_khead: int = 16
    enc_layers: int = 2
    dec_layers: int = 3
    refine_iters: int = 1
    modules: list = field(default_factory=lambda: ["decoder", "refiner"])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


# ---------------------------------------------------------------- blocks


def n_blocks(n: int, m: int) -> int:
    return -(-n // m)


def partition_pad(v, m: int):
    """(B, n) -> (B, n_b, m), padding the tail with +1.  Accepts arrays or Tensors."""
    if m < 1:
        raise ModelError(f"block width must be >= 1, got {m}")
    B, n = v.shape
    nb = n_blocks(n, m)
    pad = nb * m - n
    if isinstance(v, ad.Tensor):
        if pad:
            v = ad.concat([v, np.full((B, pad), PAD_VALUE)], axis=1)
        return ad.reshape(v, (B, nb, m))
    v = np.asarray(v)
    if pad:
        v = np.concatenate([v, np.full((B, pad), PAD_VALUE, dtype=v.dtype)], axis=1)
    return v.reshape(B, nb, m)


def strip_pad(blocks, n: int):
    """(B, n_b, w) -> (B, n): flatten and drop the trailing pad positions."""
    B = blocks.shape[0]
    flat = ad.reshape(blocks, (B, -1)) if isinstance(blocks, ad.Tensor) else blocks.reshape(B, -1)
    return flat[:, :n]


def bit_word_table(m: int) -> np.ndarray:
    """(2^m, m) table; row j is j in binary, most significant bit first."""
    j = np.arange(1 << m)[:, None]
    return ((j >> np.arange(m - 1, -1, -1)) & 1).astype(np.float64)


def positional_encoding(n_b: int, d_model: int) -> np.ndarray:
    """pe[i, c] = sin(i / 1000^(c/200)) for even c, cos(...) for odd c."""
    i = np.arange(n_b)[:, None]
    c = np.arange(d_model)[None, :]
    angle = i / PE_BASE ** (c / PE_LENGTH)
    return np.where(c % 2 == 0, np.sin(angle), np.cos(angle))


# ---------------------------------------------------------------- domain conversion


def f_m2d(P, m: int, n: int):
    """Block word probabilities (B, n_b, 2^m) -> bit LLRs (B, n) in [-L_MAX, L_MAX]."""
    Q = bit_word_table(m)
    floor = math.exp(-L_MAX) / (1.0 + math.exp(-L_MAX))
    if isinstance(P, ad.Tensor):
        p1 = strip_pad(P @ Q, n)
        p0 = strip_pad(P @ (1.0 - Q), n)
        l = ad.log(ad.clip(p0, floor, 1.0)) - ad.log(ad.clip(p1, floor, 1.0))
        return ad.clip(l, -L_MAX, L_MAX)
    P = np.asarray(P, dtype=np.float64)
    if np.any(P < -1e-12) or np.any(np.abs(P.sum(axis=-1) - 1.0) > 1e-6):
        raise ModelError("rows must be probability distributions")
    p1 = strip_pad(P @ Q, n)
    p0 = strip_pad(P @ (1.0 - Q), n)
    l = np.log(np.maximum(p0, floor)) - np.log(np.maximum(p1, floor))
    return np.clip(l, -L_MAX, L_MAX)


def bit_marginals(P, m: int, n: int):
    """Per-bit probability of a 1 from block word probabilities."""
    return strip_pad(P @ bit_word_table(m), n)


def f_d2m(x):
    """LLR -> expected BPSK symbol E[2c - 1] = -tanh(x / 2)."""
    if isinstance(x, ad.Tensor):
        return -ad.tanh(x * 0.5)
    return -np.tanh(np.asarray(x) * 0.5)


# ---------------------------------------------------------------- layers


class Module:
    """Parameter container; ``params()`` yields (dotted name, Tensor) in a fixed order."""

    def children(self):
        return [(k, v) for k, v in vars(self).items() if isinstance(v, (Module, ad.Tensor, list))]

    def params(self, prefix: str = ""):
        for name, obj in self.children():
            if isinstance(obj, ad.Tensor):
                if obj.requires_grad:
                    yield prefix + name, obj
            elif isinstance(obj, Module):
                yield from obj.params(prefix + name + ".")
            else:
                for i, item in enumerate(obj):
                    if isinstance(item, Module):
                        yield from item.params(f"{prefix}{name}.{i}.")


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        bound = 1.0 / math.sqrt(n_in)
        self.W = ad.parameter(rng.uniform(-bound, bound, (n_in, n_out)))
        self.b = ad.parameter(rng.uniform(-bound, bound, n_out))
        self.n_in = n_in

    def __call__(self, x):
        if x.shape[-1] != self.n_in:
            raise ModelError(f"expected input width {self.n_in}, got {x.shape[-1]}")
        return x @ self.W + self.b


class LayerNorm(Module):
    def __init__(self, d: int):
        self.gain = ad.parameter(np.ones(d))
        self.bias = ad.parameter(np.zeros(d))

    def __call__(self, x):
        return ad.layernorm(x, self.gain, self.bias)


class FeatureExtractor(Module):
    """Three affine layers with ReLU: width -> d -> d -> d."""

    def __init__(self, width: int, d: int, rng):
        self.layers = [Linear(width, d, rng), Linear(d, d, rng), Linear(d, d, rng)]

    def __call__(self, x):
        for layer in self.layers:
            x = ad.relu(layer(x))
        return x


def _sigma_column(sigma, B: int, nb: int) -> np.ndarray:
    s = np.broadcast_to(np.asarray(sigma, dtype=np.float64).reshape(-1), (B,))
    return np.broadcast_to(s[:, None, None], (B, nb, 1))


class AttentionFeature(Module):
    """Gate x by sigmoid(W2 (W1 [x, sigma] + b1) + b2)."""

    def __init__(self, d: int, rng):
        self.l1 = Linear(d + 1, d, rng)
        self.l2 = Linear(d, d, rng)

    def __call__(self, x, sigma):
        B, nb, _ = x.shape
        h = ad.concat([x, _sigma_column(sigma, B, nb)], axis=-1)
        return x * ad.sigmoid(self.l2(self.l1(h)))


class SelfAttention(Module):
    def __init__(self, d: int, n_heads: int, d_k: int, rng):
        self.q = [Linear(d, d_k, rng) for _ in range(n_heads)]
        self.k = [Linear(d, d_k, rng) for _ in range(n_heads)]
        self.v = [Linear(d, d_k, rng) for _ in range(n_heads)]
        self.out = Linear(n_heads * d_k, d, rng)
        self.scale = 1.0 / math.sqrt(d_k)

    def __call__(self, x):
        heads = []
        for q, k, v in zip(self.q, self.k, self.v):
            scores = (q(x) @ ad.swapaxes(k(x), -1, -2)) * self.scale
            heads.append(ad.softmax(scores, axis=-1) @ v(x))
        return self.out(heads[0] if len(heads) == 1 else ad.concat(heads, axis=-1))


class S2SLayer(Module):
    """AF gate, self-attention, add & norm, FFN (4x), add & norm."""

    def __init__(self, d: int, n_heads: int, d_k: int, rng):
        self.af = AttentionFeature(d, rng)
        self.attn = SelfAttention(d, n_heads, d_k, rng)
        self.norm1 = LayerNorm(d)
        self.ff1 = Linear(d, 4 * d, rng)
        self.ff2 = Linear(4 * d, d, rng)
        self.norm2 = LayerNorm(d)

    def __call__(self, x, sigma):
        x = self.af(x, sigma)
        x = self.norm1(x + self.attn(x))
        return self.norm2(x + self.ff2(ad.relu(self.ff1(x))))


class BlockNet(Module):
    """partition -> FE -> +PE -> S2S layers -> per-block affine map to ``out_width``."""

    def __init__(self, n: int, in_width: int, out_width: int, n_layers: int, cfg: ModelConfig, rng):
        self.n, self.in_width = n, in_width
        self.nb = n_blocks(n, cfg.m)
        self.fe = FeatureExtractor(in_width, cfg.d_model, rng)
        self.layers = [S2SLayer(cfg.d_model, cfg.n_heads, cfg.d_khead, rng) for _ in range(n_layers)]
        self.fmap = Linear(cfg.d_model, out_width, rng)
        self.pe = positional_encoding(self.nb, cfg.d_model)

    def __call__(self, blocks, sigma):
        if blocks.shape[-1] != self.in_width:
            raise ModelError(f"expected block width {self.in_width}, got {blocks.shape[-1]}")
        h = self.fe(blocks) + self.pe
        for layer in self.layers:
            h = layer(h, sigma)
        return self.fmap(h)


# ---------------------------------------------------------------- power control


class PowerControl(Module):
    """Index-wise standardisation followed by a learnable reallocation vector rho."""

    def __init__(self, n: int):
        self.n = n
        self.rho = ad.parameter(np.ones(n))
        self.running_mu = np.zeros(n)
        self.running_sd = np.ones(n)
        self.calibration: dict[float, tuple[np.ndarray, np.ndarray]] = {}

    def normalize(self, s, mode: str, sigma=None):
        if mode == "batch":
            if s.shape[0] < 2:
                raise ModelError("batch statistics need at least 2 frames")
            mu = ad.mean(s, axis=0, keepdims=True)
            c = s - mu
            var = ad.mean(c * c, axis=0, keepdims=True)
            sd = ad.sqrt(var + NORM_EPS)
            self.running_mu = (1 - MOMENTUM) * self.running_mu + MOMENTUM * mu.data[0]
            self.running_sd = (1 - MOMENTUM) * self.running_sd + MOMENTUM * sd.data[0]
            return c / sd
        if mode == "frozen":
            mu, sd = self.frozen_stats(sigma)
            return (s - mu) / sd
        if mode == "running":
            return (s - self.running_mu) / self.running_sd
        raise ModelError(f"unknown statistics mode {mode!r}")

    def frozen_stats(self, sigma):
        key = _sigma_key(sigma)
        if key not in self.calibration:
            raise ModelError(f"no frozen power statistics for sigma={key}; run calibration first")
        return self.calibration[key]

    def realloc(self, s):
        err = abs(float(np.sum(self.rho.data ** 2)) - self.n)
        if err > 1e-6 * self.n:
            raise ModelError(f"reallocation constraint violated: sum(rho^2) off by {err:.3g}")
        return s * self.rho

    def renormalize(self):
        r = self.rho.data
        r *= math.sqrt(self.n / float(np.sum(r * r)))


def _sigma_key(sigma) -> float:
    s = np.unique(np.asarray(sigma, dtype=np.float64).ravel())
    if s.size != 1:
        raise ModelError("frozen statistics need one sigma per batch")
    return round(float(s[0]), 10)


# ---------------------------------------------------------------- full model


class TransCoderModel(Module):
    """E_T (optional), D_T and D_T^rf for a code of length n."""

    def __init__(self, n: int, cfg: ModelConfig | None = None, seed: int = 0):
        self.cfg = cfg = cfg or ModelConfig()
        self.n = n
        rng = np.random.default_rng(seed)
        m, words = cfg.m, 1 << cfg.m
        self.encoder = BlockNet(n, m, m, cfg.enc_layers, cfg, rng) if "encoder" in cfg.modules else None
        self.power = PowerControl(n) if self.encoder is not None else None
        self.decoder = BlockNet(n, m, words, cfg.dec_layers, cfg, rng) if "decoder" in cfg.modules else None
        self.refiner = BlockNet(n, 2 * m, words, cfg.dec_layers, cfg, rng) if "refiner" in cfg.modules else None

    def children(self):
        out = [(k, getattr(self, k)) for k in ("encoder", "power", "decoder", "refiner")]
        return [(k, v) for k, v in out if v is not None]

    def param_dict(self) -> dict[str, ad.Tensor]:
        return dict(self.params())

    # -- transmitter
    def encode(self, c: np.ndarray, sigma, stats: str = "frozen"):
        """Codewords (B, n) -> unit-power real frames (B, n) as a Tensor."""
        if self.encoder is None:
            raise ModelError("model has no encoder module")
        s_bar = bpsk_map(c)
        raw = strip_pad(self.encoder(partition_pad(ad.Tensor(s_bar), self.cfg.m), sigma), self.n)
        return self.power.realloc(self.power.normalize(raw, stats, sigma))

    # -- receiver
    def decode(self, y, sigma):
        """Channel output (B, n) -> block word probabilities (B, n_b, 2^m)."""
        if self.decoder is None:
            raise ModelError("model has no decoder module")
        return ad.softmax(self.decoder(partition_pad(ad.as_tensor(y), self.cfg.m), sigma), axis=-1)

    def refine(self, y, x, sigma):
        """Channel output and decoder LLRs x -> refined block word probabilities."""
        if self.refiner is None:
            raise ModelError("model has no refinement module")
        m = self.cfg.m
        blocks = ad.concat([partition_pad(ad.as_tensor(y), m), partition_pad(f_d2m(ad.as_tensor(x)), m)], axis=-1)
        return ad.softmax(self.refiner(blocks, sigma), axis=-1)

    def llr_from_probs(self, P):
        return f_m2d(P, self.cfg.m, self.n)

    # -- calibration
    def calibrate(self, code, sigmas, frames: int = 10_000, seed: int = 0, chunk: int = 2000):
        """Freeze per-index encoder output statistics at each sigma from fresh codewords."""
        if self.encoder is None:
            return
        from .channel import make_rng

        for i, sigma in enumerate(np.atleast_1d(sigmas)):
            rng = make_rng(seed, 7919, i)
            total = np.zeros(self.n)
            total_sq = np.zeros(self.n)
            with ad.no_grad():
                for start in range(0, frames, chunk):
                    B = min(chunk, frames - start)
                    c = code.encode(rng.integers(0, 2, (B, code.k), dtype=np.uint8))
                    raw = strip_pad(self.encoder(partition_pad(ad.Tensor(bpsk_map(c)), self.cfg.m), sigma),
                                    self.n).data.astype(np.float64)
                    total += raw.sum(axis=0)
                    total_sq += (raw * raw).sum(axis=0)
            mu = total / frames
            var = np.maximum(total_sq / frames - mu * mu, 0.0)
            self.power.calibration[_sigma_key(sigma)] = (mu, np.sqrt(var + NORM_EPS))

    # -- checkpoint arrays
    def state_arrays(self) -> dict[str, np.ndarray]:
        arrays = {k: v.data for k, v in self.params()}
        if self.power is not None:
            arrays["power.running_mu"] = self.power.running_mu
            arrays["power.running_sd"] = self.power.running_sd
            for i, (key, (mu, sd)) in enumerate(sorted(self.power.calibration.items())):
                arrays[f"power.calib.{i}.mu"] = mu
                arrays[f"power.calib.{i}.sd"] = sd
        return arrays

    def meta(self) -> dict:
        calib = sorted(self.power.calibration) if self.power is not None else []
        return {"n": self.n, "config": self.cfg.to_dict(), "calibration_sigmas": calib}

    def load_state_arrays(self, arrays: dict[str, np.ndarray], meta: dict) -> None:
        for name, p in self.params():
            p.data[...] = arrays[name]
        if self.power is not None:
            self.power.running_mu = arrays["power.running_mu"].astype(np.float64)
            self.power.running_sd = arrays["power.running_sd"].astype(np.float64)
            self.power.calibration = {
                float(s): (arrays[f"power.calib.{i}.mu"].astype(np.float64),
                           arrays[f"power.calib.{i}.sd"].astype(np.float64))
                for i, s in enumerate(meta.get("calibration_sigmas", []))
            }

    def expected_shapes(self, meta: dict) -> dict[str, tuple]:
        shapes = {k: v.shape for k, v in self.params()}
        if self.power is not None:
            shapes["power.running_mu"] = (self.n,)
            shapes["power.running_sd"] = (self.n,)
            for i in range(len(meta.get("calibration_sigmas", []))):
                shapes[f"power.calib.{i}.mu"] = (self.n,)
                shapes[f"power.calib.{i}.sd"] = (self.n,)
        return shapes


def encoder_output_power(model: TransCoderModel, code, sigma, frames: int, rng) -> float:
    """Average power of encoder frames on fresh codewords, frozen statistics."""
    with ad.no_grad():
        c = code.encode(rng.integers(0, 2, (frames, code.k), dtype=np.uint8))
        return measure_average_power(model.encode(c, sigma).data)

"""Losses and the end-to-end training loop for TransCoder modules.

Every loss is a per-frame sum over bits (or a mean over parity rows for the
soft-parity loss) averaged over the batch.  With r decoder runs the training
loss is the mean of the r per-run losses.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .channel import L_MAX, bpsk_map, make_rng, sigma_from_ebn0
from .codes import LinearCode, PolarCode
from .decoders import BpConfig, bp_decode, soft_sc_decode, stage_targets
from .nn import ModelConfig, TransCoderModel, bit_marginals, f_d2m

P_FLOOR = math.exp(-L_MAX) / (1.0 + math.exp(-L_MAX))


class TrainingError(ValueError):
    pass


# ---------------------------------------------------------------- losses


def loss_tc(p, c: np.ndarray):
    """Binary cross-entropy of bit-1 probabilities ``p`` (B, n) against codewords c."""
    p = ad.clip(ad.as_tensor(p), P_FLOOR, 1.0 - P_FLOOR)
    c = np.asarray(c, dtype=np.float64)
    nll = -(ad.log(p) * c + ad.log(1.0 - p) * (1.0 - c))
    return ad.mean(ad.sum_(nll, axis=-1))


def loss_cd(x, c: np.ndarray):
    """Cross-entropy of LLR estimates x (B, n), bit-1 probability sigmoid(-x)."""
    x = ad.as_tensor(x)
    c = np.asarray(c, dtype=np.float64)
    nll = ad.softplus(x) * c + ad.softplus(-x) * (1.0 - c)
    return ad.mean(ad.sum_(nll, axis=-1))


def build_soft_parity_alphabet(H: np.ndarray) -> np.ndarray:
    """Even values 0, 2, ..., 2 floor(w_max / 2) attainable by <c, h_i> on codewords."""
    H = getattr(H, "bits", H)
    w_max = int(np.asarray(H).sum(axis=1).max())
    return np.arange(0, 2 * (w_max // 2) + 1, 2, dtype=np.float64)


def project_estimate(x):
    """LLRs -> relaxed bits in [0, 1]: symbol estimate -tanh(x/2), clipped to [-1, 1], shifted to [0, 1]."""
    return (ad.clip(f_d2m(ad.as_tensor(x)), -1.0, 1.0) + 1.0) * 0.5


def loss_h(x, c: np.ndarray, H, alphabet: np.ndarray):
    """Soft parity-check classification loss averaged over parity rows and frames."""
    H = np.asarray(getattr(H, "bits", H), dtype=np.float64)
    c = np.asarray(c)
    true = np.atleast_2d(c).astype(np.int64) @ H.T.astype(np.int64)  # (B, R) integer weights
    lookup = {int(v): i for i, v in enumerate(alphabet)}
    try:
        target = np.vectorize(lookup.__getitem__)(true)
    except KeyError as e:
        raise TrainingError(f"codeword parity value {e.args[0]} not in the alphabet") from None
    xbar = project_estimate(x)
    sp = xbar @ H.T  # (B, R)
    B, R = sp.shape
    dist = ad.abs_(ad.reshape(sp, (B, R, 1)) - alphabet)
    logp = ad.log_softmax(-dist, axis=-1)
    onehot = np.zeros((B, R, len(alphabet)))
    np.put_along_axis(onehot, target[..., None], 1.0, axis=-1)
    return -ad.sum_(logp * onehot) * (1.0 / (B * R))


def loss_bp(x, c: np.ndarray, H, alphabet: np.ndarray):
    return (loss_cd(x, c) + loss_h(x, c, H, alphabet)) * 0.5


# ---------------------------------------------------------------- configuration


@dataclass
class TrainConfig:
    epochs: int = 10_000
    batches_per_epoch: int = 1
    batch_size: int = 1000
    lr: float = 1e-3
    snr_range_db: tuple = (2.0, 8.0)
    runs: int = 1
    iters_per_run: int = 10
    loss: str = "bp"
    decoder: str = "bp"
    bp_mode: str = "smooth"
    seed: int = 0
    val_frames: int = 1000
    val_every: int = 0
    precision: str = "float32"

    def __post_init__(self):
        if min(self.epochs, self.batches_per_epoch, self.batch_size, self.runs, self.iters_per_run) < 1:
            raise TrainingError("counts must be positive")
        lo, hi = self.snr_range_db
        if not lo <= hi:
            raise TrainingError(f"empty SNR interval {self.snr_range_db}")
        if self.loss not in ("tc", "cd", "bp"):
            raise TrainingError(f"unknown loss {self.loss!r}")
        if self.decoder not in ("bp", "sc"):
            raise TrainingError(f"decoder {self.decoder!r} has no differentiable path")


@dataclass
class TraceRow:
    epoch: int
    lr: float
    run_losses: list
    loss: float
    val_loss: float | None = None


@dataclass
class TrainResult:
    model: TransCoderModel
    trace: list = field(default_factory=list)
    initial_val_loss: float | None = None
    final_val_loss: float | None = None
    wall_time_s: float = 0.0


# ---------------------------------------------------------------- forward pass


def _soft_decode(code, llr, cfg: TrainConfig):
    if cfg.decoder == "sc":
        info, stages = soft_sc_decode(code, llr)
        return info, stages
    return bp_decode(code, llr, BpConfig(cfg.iters_per_run, mode=cfg.bp_mode)), None


def _run_loss(kind: str, code, x, stages, P, c, u, alphabet, model):
    if kind == "tc":
        return loss_tc(bit_marginals(P, model.cfg.m, model.n), c)
    if stages is not None:
        t = len(stages)
        per = [loss_cd(stages[d - 1], stage_targets(code, u, d)) for d in range(1, t + 1)]
        return ad.sum_(ad.concat([ad.reshape(p, (1,)) for p in per], axis=0)) * (1.0 / t)
    if kind == "cd":
        return loss_cd(x, c)
    return loss_bp(x, c, code.H, alphabet)


def pipeline_losses(model: TransCoderModel, code, b: np.ndarray, ebn0_db: np.ndarray, noise: np.ndarray,
                    cfg: TrainConfig, alphabet=None, stats: str = "batch"):
    """Forward pass of one batch; returns the list of per-run losses (Tensors)."""
    if cfg.runs > 1 and model.refiner is None:
        raise TrainingError("more than one decoder run needs the refinement module")
    c = code.encode(b)
    u = None
    if isinstance(code, PolarCode):
        u = np.zeros(c.shape, dtype=np.uint8)
        u[:, code.info_set] = b
    sigma = sigma_from_ebn0(ebn0_db, code.rate)
    sig_col = np.reshape(sigma, (-1, 1))
    if model.encoder is not None:
        s = model.encode(c, sigma, stats)
    else:
        s = ad.Tensor(bpsk_map(c))
    y = s + noise * sig_col
    if model.decoder is not None:
        P = model.decode(y, sigma)
        llr = model.llr_from_probs(P)
    else:
        P = None
        llr = ad.clip(y * (-2.0 / sig_col**2), -L_MAX, L_MAX)
    losses = []
    x = None
    for j in range(cfg.runs):
        if j > 0:
            P = model.refine(y, x, sigma)
            llr = model.llr_from_probs(P)
        if cfg.loss == "tc":
            if P is None:
                raise TrainingError("the tc loss needs a decoder module")
            losses.append(_run_loss("tc", code, None, None, P, c, u, alphabet, model))
            if j + 1 < cfg.runs:
                x, _ = _soft_decode(code, llr, cfg)
            continue
        x, stages = _soft_decode(code, llr, cfg)
        losses.append(_run_loss(cfg.loss, code, x, stages, P, c, u, alphabet, model))
        if stages is not None and j + 1 < cfg.runs:
            raise TrainingError("refinement with the SC decoder is not supported")
    return losses


def _batch(code, rng, B: int, snr_range) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    b = rng.integers(0, 2, (B, code.k), dtype=np.uint8)
    ebn0 = rng.uniform(snr_range[0], snr_range[1], B)
    noise = rng.standard_normal((B, code.n))
    return b, ebn0, noise


def validation_loss(model, code, cfg: TrainConfig, alphabet=None) -> float:
    """Mean multi-run loss on a fixed held-out batch (running power statistics)."""
    rng = make_rng(cfg.seed, 2, 0)
    b, ebn0, noise = _batch(code, rng, cfg.val_frames, cfg.snr_range_db)
    with ad.no_grad():
        losses = pipeline_losses(model, code, b, ebn0, noise, cfg, alphabet,
                                 stats="running" if model.encoder is not None else "batch")
    return float(np.mean([l.item() for l in losses]))


# ---------------------------------------------------------------- loop


def train(model: TransCoderModel, code: LinearCode | PolarCode, cfg: TrainConfig, log=None) -> TrainResult:
    """Adam on the mean per-run loss, one fresh batch per step, linear learning-rate decay."""
    alphabet = build_soft_parity_alphabet(code.H) if isinstance(code, LinearCode) else None
    if cfg.decoder == "sc" and not isinstance(code, PolarCode):
        raise TrainingError("the SC decoder needs a polar code")
    if cfg.loss == "bp" and alphabet is None:
        raise TrainingError("the bp loss needs a parity-check matrix")
    t0 = time.perf_counter()
    with ad.precision(cfg.precision):
        for _, p in model.params():
            p.data = p.data.astype(ad.get_dtype())
        params = [p for _, p in model.params()]
        opt = ad.Adam(params, lr=cfg.lr)
        result = TrainResult(model)
        result.initial_val_loss = validation_loss(model, code, cfg, alphabet)
        for epoch in range(cfg.epochs):
            lr = ad.lr_schedule(epoch, cfg.epochs, cfg.lr)
            run_sums = np.zeros(cfg.runs)
            for step in range(cfg.batches_per_epoch):
                rng = make_rng(cfg.seed, 1, epoch, step)
                b, ebn0, noise = _batch(code, rng, cfg.batch_size, cfg.snr_range_db)
                losses = pipeline_losses(model, code, b, ebn0, noise, cfg, alphabet)
                total = ad.sum_(ad.concat([ad.reshape(l, (1,)) for l in losses], axis=0)) * (1.0 / cfg.runs)
                opt.zero_grad()
                total.backward()
                opt.lr = lr
                opt.step()
                if model.power is not None:
                    model.power.renormalize()
                run_sums += [l.item() for l in losses]
            run_losses = (run_sums / cfg.batches_per_epoch).tolist()
            row = TraceRow(epoch, lr, run_losses, float(np.mean(run_losses)))
            if cfg.val_every and (epoch + 1) % cfg.val_every == 0:
                row.val_loss = validation_loss(model, code, cfg, alphabet)
            result.trace.append(row)
            if log is not None:
                log(row)
        result.final_val_loss = validation_loss(model, code, cfg, alphabet)
    result.wall_time_s = time.perf_counter() - t0
    return result


def write_trace(trace: list, path: str | Path) -> None:
    """CSV columns: epoch, lr, run_1 .. run_r, mean_loss, val_loss."""
    runs = len(trace[0].run_losses) if trace else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "lr"] + [f"run_{j + 1}" for j in range(runs)] + ["mean_loss", "val_loss"])
        for row in trace:
            w.writerow([row.epoch, repr(row.lr)] + [repr(v) for v in row.run_losses]
                       + [repr(row.loss), "" if row.val_loss is None else repr(row.val_loss)])


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(model: TransCoderModel, path: str | Path, extra: dict | None = None) -> None:
    meta = model.meta()
    if extra:
        meta["extra"] = extra
    ad.save_arrays(path, model.state_arrays(), meta)


def load_checkpoint(path: str | Path, model: TransCoderModel | None = None) -> TransCoderModel:
    """Load into ``model`` (shapes checked) or build a model from the stored config."""
    arrays, meta = ad.load_arrays(path)
    if model is None:
        model = TransCoderModel(meta["n"], ModelConfig.from_dict(meta["config"]))
    elif meta.get("n") != model.n or meta.get("config") != model.cfg.to_dict():
        stored = meta.get("config", {})
        diff = {k: (stored.get(k), v) for k, v in model.cfg.to_dict().items() if stored.get(k) != v}
        if meta.get("n") != model.n:
            diff["n"] = (meta.get("n"), model.n)
        raise ad.CheckpointError(f"checkpoint config differs from model (stored, model): {diff}")
    arrays, meta = ad.load_arrays(path, model.expected_shapes(meta))
    model.load_state_arrays(arrays, meta)
    return model


__all__ = [
    "TrainConfig", "TrainResult", "TrainingError", "build_soft_parity_alphabet", "load_checkpoint",
    "loss_bp", "loss_cd", "loss_h", "loss_tc", "pipeline_losses", "project_estimate",
    "save_checkpoint", "train", "validation_loss", "write_trace",
]

"""Monte Carlo BER/BLER measurement over BPSK/AWGN or a TransCoder pipeline.

Frames are simulated in fixed-size chunks.  Chunk c of Eb/N0 point p draws
all its randomness from make_rng(seed, key(p), c), and the stopping rule is
evaluated chunk by chunk in order, so the recorded counts depend only on
(seed, configuration, chunk size) and never on how many workers ran.
"""
from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .. import autodiff as ad
from ..channel import bpsk_map, channel_llr, make_rng, sigma_from_ebn0
from ..codes import LinearCode, PolarCode
from ..decoders import BpConfig, SclConfig, bp_decode, hard_decision, sc_decode, scl_decode

MODULE_SETS = ("none", "E_T", "D_T", "E_T+D_T", "D_T+D_T^rf", "full")
THREADS_ENV = "TRANSCODER_THREADS"


class EvaluationError(ValueError):
    pass


@dataclass
class PipelineConfig:
    code: str
    modules: str = "none"
    decoder: str = "bp"  # bp | minsum | sc | scl
    runs: int = 1
    iters: int = 20
    list_size: int = 8
    early_stop: bool = True
    checkpoint: str | None = None
    calibration_frames: int = 10_000

    def __post_init__(self):
        if self.modules not in MODULE_SETS:
            raise EvaluationError(f"unknown module set {self.modules!r}; choose from {MODULE_SETS}")
        if self.decoder not in ("bp", "minsum", "sc", "scl"):
            raise EvaluationError(f"unknown decoder {self.decoder!r}")
        if self.runs < 1 or self.iters < 1:
            raise EvaluationError("runs and iterations must be positive")
        if self.uses_refiner and self.runs < 2:
            raise EvaluationError("refinement modules need at least two decoder runs")
        if self.runs > 1 and not self.uses_refiner:
            raise EvaluationError("more than one decoder run needs the refinement module")
        if self.modules != "none" and self.checkpoint is None:
            raise EvaluationError("neural modules need a checkpoint")

    @property
    def uses_encoder(self) -> bool:
        return self.modules in ("E_T", "E_T+D_T", "full")

    @property
    def uses_decoder(self) -> bool:
        return self.modules in ("D_T", "E_T+D_T", "D_T+D_T^rf", "full")

    @property
    def uses_refiner(self) -> bool:
        return self.modules in ("D_T+D_T^rf", "full")

    def pipeline_id(self) -> str:
        dec = {"bp": f"BP-{self.iters}", "minsum": f"MS-{self.iters}", "sc": "SC",
               "scl": f"SCL-{self.list_size}"}[self.decoder]
        sched = f"{self.runs}x{dec}" if self.runs > 1 else dec
        return sched if self.modules == "none" else f"{self.modules}/{sched}"


@dataclass
class StopRule:
    min_errors: int = 100
    min_frames: int = 10_000
    max_frames: int = 10_000_000
    chunk: int = 2000

    @classmethod
    def paper(cls) -> "StopRule":
        return cls(min_errors=100, min_frames=1_000_000, max_frames=100_000_000)


@dataclass
class EvalRecord:
    pipeline: str
    code: str
    ebn0_db: float
    frames: int
    bit_errors: int
    block_errors: int
    seed: int
    wall_time_s: float = 0.0
    k: int = 1

    @property
    def ber(self) -> float:
        return self.bit_errors / (self.frames * self.k)

    @property
    def bler(self) -> float:
        return self.block_errors / self.frames

    @property
    def minus_ln_bler(self) -> float:
        return -math.log(self.bler) if self.block_errors else math.inf

    @property
    def bler_se(self) -> float:
        p = self.bler
        return math.sqrt(p * (1 - p) / self.frames)


def _point_key(ebn0_db: float) -> int:
    return int(round(ebn0_db * 1000)) & 0xFFFFFFFF


def _decode_runs(code, pipe: PipelineConfig, llr, y, sigma, model):
    """All decoder runs (with refinement in between); returns decoded message bits."""
    if isinstance(code, PolarCode):
        if pipe.decoder == "sc":
            u, _ = sc_decode(code, llr)
        elif pipe.decoder == "scl":
            u, _ = scl_decode(code, llr, SclConfig(pipe.list_size))
        else:
            raise EvaluationError("polar codes use the sc or scl decoder")
        return code.extract_message(u)
    if pipe.decoder not in ("bp", "minsum"):
        raise EvaluationError("linear codes use the bp or minsum decoder")
    variant = "sum-product" if pipe.decoder == "bp" else "min-sum"
    x = None
    for j in range(pipe.runs):
        if j > 0:
            with ad.no_grad():
                llr = model.llr_from_probs(model.refine(y, x, sigma)).data.astype(np.float64)
        # the refiner reads x, so only the last run may stop early
        es = pipe.early_stop and j == pipe.runs - 1
        x = bp_decode(code, llr, BpConfig(pipe.iters, variant=variant, early_stop=es))
    return code.extract_message(hard_decision(x))


def simulate_chunk(code, pipe: PipelineConfig, ebn0_db: float, seed: int, chunk_index: int, frames: int,
                   model=None, noiseless: bool = False) -> tuple[int, int]:
    """Simulate one chunk; returns (bit errors, block errors)."""
    rng = make_rng(seed, _point_key(ebn0_db), chunk_index)
    sigma = float(sigma_from_ebn0(ebn0_db, code.rate))
    b = rng.integers(0, 2, (frames, code.k), dtype=np.uint8)
    noise = rng.standard_normal((frames, code.n))
    c = code.encode(b)
    with ad.precision("float32"), ad.no_grad():
        s = model.encode(c, sigma).data.astype(np.float64) if pipe.uses_encoder else bpsk_map(c)
        y = s if noiseless else s + sigma * noise
        if pipe.uses_decoder:
            llr = model.llr_from_probs(model.decode(y, sigma)).data.astype(np.float64)
        else:
            llr = channel_llr(y, sigma)
        b_hat = _decode_runs(code, pipe, llr, y, sigma, model)
    err = b_hat != b
    return int(err.sum()), int(err.any(axis=1).sum())


_WORKER_STATE: dict = {}


def _worker_init(code, pipe, model):
    _WORKER_STATE.update(code=code, pipe=pipe, model=model)


def _worker_chunk(args):
    ebn0, seed, idx, frames, noiseless = args
    st = _WORKER_STATE
    return simulate_chunk(st["code"], st["pipe"], ebn0, seed, idx, frames, st["model"], noiseless)


def default_workers() -> int:
    return max(1, int(os.environ.get(THREADS_ENV, "1")))


def monte_carlo(code: LinearCode | PolarCode, pipe: PipelineConfig, ebn0_list, stop: StopRule = StopRule(),
                seed: int = 0, workers: int | None = None, model=None, noiseless: bool = False,
                progress=None) -> list[EvalRecord]:
    """Measure BER/BLER at each Eb/N0 until the stopping rule is met."""
    ebn0_list = list(ebn0_list)
    if not ebn0_list:
        raise EvaluationError("empty Eb/N0 list")
    if pipe.modules != "none" and model is None:
        raise EvaluationError("pipeline with neural modules needs a model")
    if pipe.uses_encoder:
        for e in ebn0_list:
            try:
                model.power.frozen_stats(sigma_from_ebn0(e, code.rate))
            except ValueError as err:
                raise EvaluationError(f"uncalibrated model: {err}") from None
    workers = workers or default_workers()
    if noiseless:
        # nothing random reaches the receiver, so extra frames add no information
        stop = StopRule(stop.min_errors, stop.min_frames, stop.min_frames, stop.chunk)
    records = []
    pool = ProcessPoolExecutor(workers, initializer=_worker_init, initargs=(code, pipe, model)) if workers > 1 else None
    try:
        for ebn0 in ebn0_list:
            t0 = time.perf_counter()
            frames = bits = blocks = 0
            idx = 0
            done = False
            while not done:
                batch = [(ebn0, seed, idx + i, stop.chunk, noiseless) for i in range(workers)]
                if pool is None:
                    results = [simulate_chunk(code, pipe, ebn0, seed, idx, stop.chunk, model, noiseless)]
                    batch = batch[:1]
                else:
                    results = list(pool.map(_worker_chunk, batch))
                for be, ble in results:
                    frames += stop.chunk
                    bits += be
                    blocks += ble
                    idx += 1
                    if (blocks >= stop.min_errors and frames >= stop.min_frames) or frames >= stop.max_frames:
                        done = True
                        break
            rec = EvalRecord(pipe.pipeline_id(), code.name, float(ebn0), frames, bits, blocks, seed,
                             time.perf_counter() - t0, code.k)
            records.append(rec)
            if progress is not None:
                progress(rec)
    finally:
        if pool is not None:
            pool.shutdown()
    return records


def bler_point(code, pipe, ebn0_db: float, frames: int, seed: int = 0, workers: int = 1, model=None,
               chunk: int = 2000) -> EvalRecord:
    """Fixed-budget measurement: exactly ``frames`` frames (a multiple of ``chunk``)."""
    stop = StopRule(min_errors=10**12, min_frames=frames, max_frames=frames, chunk=chunk)
    return monte_carlo(code, pipe, [ebn0_db], stop, seed, workers, model)[0]


def record_dict(rec: EvalRecord) -> dict:
    d = asdict(rec)
    d.update(ber=rec.ber, bler=rec.bler, minus_ln_bler=rec.minus_ln_bler, bler_se=rec.bler_se)
    return d

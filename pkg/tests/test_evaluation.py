import itertools
import math

import numpy as np
import pytest

from transcoder import cli
from transcoder.codes import brute_force_codebook, load_code
from transcoder.evaluation import (EvalRecord, EvaluationError, PipelineConfig, StopRule, distance_histogram,
                                   monte_carlo, read_results, write_results)
from transcoder.evaluation import flops
from transcoder.evaluation.montecarlo import bler_point, simulate_chunk
from transcoder.evaluation.results import ResultsError
from transcoder.nn import ModelConfig, TransCoderModel


# ------------------------------------------------------------------ flops


def test_flops_examples():
    assert flops.bp_flops(726, 50) == 36300
    assert flops.matches_display(flops.transcoder_module(121, 3, 16, 2), "444k")
    assert flops.matches_display(flops.transcoder_module(121, 3, 16, 3), "600k")
    assert flops.matches_display(flops.ecct_decoder(121, 66), "278M")


def test_display_matcher():
    assert flops.parse_display("1.2M") == (1.2e6, 1e5)
    assert flops.parse_display("36k") == (36000.0, 1000.0)
    assert flops.matches_display(36300, "36k")
    assert flops.matches_display(22627, "22k")
    assert not flops.matches_display(37100, "36k")
    with pytest.raises(ValueError):
        flops.parse_display("lots")


def test_flops_are_integers():
    table = flops.flop_table(121, 66, 726, 3)
    assert all(isinstance(v, int) for v in table.values())


def test_format_count():
    assert flops.format_count(726) == "726"
    assert flops.format_count(36300) == "36.3k"


# ------------------------------------------------------------------ histogram


def test_bpsk_histogram_discrete_support():
    code = load_code("hamming_7_4")
    h = distance_histogram(code, "bpsk")
    assert h.exhaustive and len(h.distances) == 120
    w = (h.distances * math.sqrt(7)) ** 2
    assert np.allclose(w, np.round(w), atol=1e-9)
    assert set(np.round(w).astype(int)) == {3, 4, 7}


def test_histogram_sampled_distinct_pairs():
    code = load_code("bch_31_16")
    h = distance_histogram(code, "bpsk", pairs=5000, rng=np.random.default_rng(0))
    assert not h.exhaustive
    assert h.distances.min() >= math.sqrt(7 / 31) - 1e-12
    assert h.counts.sum() == 5000


def test_histogram_transcoder_mapper_needs_model():
    with pytest.raises(ValueError):
        distance_histogram(load_code("hamming_7_4"), "transcoder")


def test_histogram_transcoder_mapper_runs():
    code = load_code("hamming_7_4")
    cfg = ModelConfig(m=3, d_model=8, d_khead=8, enc_layers=1, dec_layers=1, modules=["encoder", "decoder"])
    model = TransCoderModel(7, cfg, seed=0)
    model.calibrate(code, [0.7], frames=2000)
    h = distance_histogram(code, "transcoder", model=model, sigma=0.7)
    assert (h.distances > 0).all()


# ------------------------------------------------------------------ Monte Carlo


def test_pipeline_validation():
    with pytest.raises(EvaluationError):
        PipelineConfig("x", modules="bogus")
    with pytest.raises(EvaluationError):
        PipelineConfig("x", modules="D_T+D_T^rf", runs=1, checkpoint="c")
    with pytest.raises(EvaluationError):
        PipelineConfig("x", modules="D_T")
    assert PipelineConfig("x", decoder="scl", list_size=8).pipeline_id() == "SCL-8"


def test_empty_ebn0_list():
    with pytest.raises(EvaluationError):
        monte_carlo(load_code("hamming_7_4"), PipelineConfig("hamming_7_4"), [])


def test_uncalibrated_model_rejected():
    code = load_code("hamming_7_4")
    cfg = ModelConfig(m=3, d_model=8, d_khead=8, enc_layers=1, dec_layers=1, modules=["encoder", "decoder"])
    model = TransCoderModel(7, cfg)
    with pytest.raises(EvaluationError):
        monte_carlo(code, PipelineConfig("hamming_7_4", "E_T", checkpoint="c"), [3.0], model=model)


def test_noiseless_zero_errors_stops_at_min_frames():
    code = load_code("ldpc_49_24")
    rec = monte_carlo(code, PipelineConfig(code.name), [1.0], StopRule(100, 4000, 10**6, 2000), noiseless=True)[0]
    assert rec.block_errors == 0 and rec.frames == 4000


def test_chunk_seeding_reproducible():
    code = load_code("hamming_7_4")
    pipe = PipelineConfig(code.name, iters=5)
    assert simulate_chunk(code, pipe, 2.0, 3, 1, 500) == simulate_chunk(code, pipe, 2.0, 3, 1, 500)
    assert simulate_chunk(code, pipe, 2.0, 3, 1, 500) != simulate_chunk(code, pipe, 2.0, 3, 2, 500)


def test_worker_count_independent():
    code = load_code("hamming_7_4")
    pipe = PipelineConfig(code.name, iters=5)
    stop = StopRule(min_errors=50, min_frames=2000, max_frames=40_000, chunk=1000)
    a = monte_carlo(code, pipe, [2.0, 3.0], stop, seed=5, workers=1)
    b = monte_carlo(code, pipe, [2.0, 3.0], stop, seed=5, workers=3)
    assert [(r.frames, r.bit_errors, r.block_errors) for r in a] == [(r.frames, r.bit_errors, r.block_errors) for r in b]


def test_prefix_property():
    code = load_code("hamming_7_4")
    pipe = PipelineConfig(code.name, iters=5)
    short = monte_carlo(code, pipe, [4.0], StopRule(5, 500, 10**6, 500), seed=2)[0]
    long = bler_point(code, pipe, 4.0, short.frames, seed=2, chunk=500)
    assert (long.bit_errors, long.block_errors) == (short.bit_errors, short.block_errors)


def test_record_statistics():
    r = EvalRecord("BP-20", "c", 3.0, 1000, 50, 10, 0, k=10)
    assert r.ber == 0.005 and r.bler == 0.01
    assert r.minus_ln_bler == pytest.approx(-math.log(0.01))
    assert r.bler_se == pytest.approx(math.sqrt(0.01 * 0.99 / 1000))
    assert EvalRecord("x", "c", 1.0, 10, 0, 0, 0).minus_ln_bler == math.inf


def test_uncoded_like_repetition_matches_closed_form():
    # rep(2,1) with BP decides on the sum of two LLRs, so BLER = Q(sqrt(2)/sigma)
    code = load_code("rep_2_1")
    pipe = PipelineConfig(code.name, iters=1, early_stop=False)
    rec = bler_point(code, pipe, 2.0, 200_000, seed=1, chunk=20_000)
    sigma = 1 / math.sqrt(2 * code.rate * 10 ** 0.2)
    p = 0.5 * math.erfc(math.sqrt(2) / sigma / math.sqrt(2))
    assert abs(rec.bler - p) < 4 * math.sqrt(p * (1 - p) / rec.frames)


# ------------------------------------------------------------------ results I/O


def test_results_round_trip(tmp_path):
    recs = [EvalRecord("BP-20", "ldpc_49_24", 3.5, 2000, 17, 4, 9, 1.25, 24),
            EvalRecord("SC", "polar_128_64", 4.0, 10_000, 0, 0, 9, 0.5, 64)]
    path = tmp_path / "r.csv"
    write_results(recs, path, {"note": "x"})
    back = read_results(path)
    assert [(r.pipeline, r.code, r.ebn0_db, r.frames, r.bit_errors, r.block_errors, r.seed, r.k) for r in back] == \
        [(r.pipeline, r.code, r.ebn0_db, r.frames, r.bit_errors, r.block_errors, r.seed, r.k) for r in recs]
    assert (tmp_path / "r.csv.json").exists()


def test_results_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("pipeline,code\nBP,x\n")
    with pytest.raises(ResultsError):
        read_results(path)


def test_results_inconsistent_minus_ln_bler(tmp_path):
    path = tmp_path / "r.csv"
    write_results([EvalRecord("BP", "c", 1.0, 100, 3, 2, 0)], path)
    text = path.read_text().splitlines()
    fields = text[1].split(",")
    fields[8] = "1.0"
    path.write_text("\n".join([text[0], ",".join(fields)]) + "\n")
    with pytest.raises(ResultsError):
        read_results(path)


# ------------------------------------------------------------------ CLI


def test_cli_no_args(capsys):
    assert cli.main([]) == 2
    assert "usage" in capsys.readouterr().err


def test_cli_unknown_flag():
    with pytest.raises(SystemExit) as e:
        cli.main(["flops", "--bogus"])
    assert e.value.code == 2


def test_cli_flops_bp(capsys):
    assert cli.main(["flops", "--target", "bp", "--code", "ldpc_121_60", "--iters", "50"]) == 0
    assert capsys.readouterr().out.strip() == "36300"


def test_cli_bad_code_one_line_error(capsys):
    assert cli.main(["codeinfo", "--code", "no_such_code"]) == 1
    err = capsys.readouterr().err.strip()
    assert len(err.splitlines()) == 1 and "error" in err


def test_cli_simulate_writes_csv(tmp_path, capsys):
    out = tmp_path / "sim.csv"
    assert cli.main(["simulate", "--code", "hamming_7_4", "--iters", "5", "--ebn0", "3", "--min-frames", "2000",
                     "--chunk", "1000", "--seed", "4", "--out", str(out)]) == 0
    rec = read_results(out)[0]
    assert rec.frames >= 2000 and rec.seed == 4


def test_cli_histogram(tmp_path, capsys):
    assert cli.main(["histogram", "--code", "hamming_7_4", "--bins", "7"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "bin_lo,bin_hi,count"
    assert sum(int(l.split(",")[2]) for l in lines[1:]) == 120


def test_cli_train_and_eval(tmp_path, capsys):
    ck = tmp_path / "ck"
    assert cli.main(["train", "--code", "hamming_7_4", "--epochs", "3", "--batch", "16", "--d-model", "8",
                     "--iters-per-run", "2", "--out", str(ck)]) == 0
    assert (ck / "trace.csv").exists()
    assert cli.main(["eval", "--code", "hamming_7_4", "--checkpoint", str(ck), "--iters", "2", "--ebn0", "3",
                     "--min-frames", "1000", "--chunk", "500", "--min-errors", "1"]) == 0
    assert "D_T+D_T^rf/2xBP-2" in capsys.readouterr().out


def test_hamming_exhaustive_pair_count():
    cb = brute_force_codebook(load_code("hamming_7_4"))
    assert len(list(itertools.combinations(range(len(cb)), 2))) == 120

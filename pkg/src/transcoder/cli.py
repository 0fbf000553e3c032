"""Command-line entry point: ``transcoder <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .codes import PolarCode, load_code


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="master random seed (default 0)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker processes (default $TRANSCODER_THREADS or 1)")
    p.add_argument("--out", default=None, help="output path")
    return p


def _add_stop(p):
    p.add_argument("--ebn0", type=float, nargs="+", required=True, help="Eb/N0 points in dB")
    p.add_argument("--min-errors", type=int, default=100)
    p.add_argument("--min-frames", type=int, default=10_000)
    p.add_argument("--max-frames", type=int, default=10_000_000)
    p.add_argument("--chunk", type=int, default=2000, help="frames per seeded chunk")
    p.add_argument("--preset", choices=["desk", "paper"], default="desk",
                   help="'paper' raises min-frames to 1e6")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="transcoder", description="Channel-coding lab with TransCoder modules.")
    sub = ap.add_subparsers(dest="cmd", metavar="{codeinfo,simulate,train,eval,histogram,flops}")

    p = sub.add_parser("codeinfo", parents=[common], help="describe a bundled code")
    p.add_argument("--code", help="code name or .alist path; omit to list bundled codes")

    p = sub.add_parser("simulate", parents=[common], help="BPSK + classical decoder Monte Carlo")
    p.add_argument("--code", required=True)
    p.add_argument("--decoder", choices=["bp", "minsum", "sc", "scl"], default="bp")
    p.add_argument("--iters", type=int, default=20)
    p.add_argument("--list-size", type=int, default=8)
    p.add_argument("--no-early-stop", action="store_true")
    p.add_argument("--noiseless", action="store_true", help="zero-noise override (LLRs still use sigma)")
    _add_stop(p)

    p = sub.add_parser("train", parents=[common], help="train TransCoder modules")
    p.add_argument("--code", required=True)
    p.add_argument("--decoder", choices=["bp", "sc"], default="bp")
    p.add_argument("--modules", default="decoder,refiner", help="comma list of encoder,decoder,refiner")
    p.add_argument("--runs", type=int, default=2, help="channel decoder runs r")
    p.add_argument("--iters-per-run", type=int, default=10)
    p.add_argument("--loss", choices=["tc", "cd", "bp"], default="bp")
    p.add_argument("--epochs", type=int, default=10_000)
    p.add_argument("--batch", type=int, default=1000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--d-model", type=int, default=16)
    p.add_argument("--trace", default=None, help="loss trace CSV (default <out>/trace.csv)")
    p.add_argument("--val-every", type=int, default=0)

    p = sub.add_parser("eval", parents=[common], help="Monte Carlo of a TransCoder pipeline")
    p.add_argument("--code", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--modules", default="D_T+D_T^rf",
                   choices=["none", "E_T", "D_T", "E_T+D_T", "D_T+D_T^rf", "full"])
    p.add_argument("--decoder", choices=["bp", "minsum", "sc", "scl"], default="bp")
    p.add_argument("--runs", type=int, default=2)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--list-size", type=int, default=8)
    p.add_argument("--calibration-frames", type=int, default=10_000)
    _add_stop(p)

    p = sub.add_parser("histogram", parents=[common], help="normalised pairwise distance histogram")
    p.add_argument("--code", required=True)
    p.add_argument("--mapper", choices=["bpsk", "transcoder"], default="bpsk")
    p.add_argument("--pairs", type=int, default=100_000)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--ebn0", type=float, default=4.0, help="operating point for the neural mapper")

    p = sub.add_parser("flops", parents=[common], help="analytic operation counts")
    p.add_argument("--target", required=True,
                   choices=["bp", "transcoder-encoder", "transcoder-decoder", "ecct", "crossmpt", "table"])
    p.add_argument("--code", required=True)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--m", type=int, default=None, help="block size (default 3, or 4 when n > 256)")
    p.add_argument("--d-model", type=int, default=16)
    p.add_argument("--d-cm", type=int, default=128)
    p.add_argument("--heads", type=int, default=8)
    return ap


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _stop(args):
    from .evaluation import StopRule

    if args.preset == "paper":
        rule = StopRule.paper()
        rule.chunk = args.chunk
        return rule
    return StopRule(args.min_errors, args.min_frames, args.max_frames, args.chunk)


def _print_records(records):
    from .evaluation.montecarlo import record_dict

    for r in records:
        d = record_dict(r)
        print(f"{d['pipeline']:>16s} {d['code']:>14s} {d['ebn0_db']:5.2f} dB  frames={d['frames']:<9d} "
              f"block_err={d['block_errors']:<6d} BLER={d['bler']:.4e} -lnBLER={d['minus_ln_bler']:.3f} "
              f"BER={d['ber']:.4e}")


def cmd_codeinfo(args):
    from .codes import available_codes

    if not args.code:
        _emit(json.dumps(available_codes(), indent=2), args.out)
        return 0
    code = load_code(args.code)
    _emit(json.dumps(code.info(), indent=2), args.out)
    return 0


def cmd_simulate(args):
    from .evaluation import PipelineConfig, monte_carlo, write_results

    code = load_code(args.code)
    pipe = PipelineConfig(args.code, "none", args.decoder, 1, args.iters, args.list_size, not args.no_early_stop)
    records = monte_carlo(code, pipe, args.ebn0, _stop(args), args.seed, args.threads,
                          noiseless=args.noiseless)
    _print_records(records)
    if args.out:
        write_results(records, args.out, {"command": "simulate", **vars(args)})
    return 0


def cmd_train(args):
    from .nn import ModelConfig, TransCoderModel
    from .training import TrainConfig, save_checkpoint, train, write_trace

    code = load_code(args.code)
    modules = [m.strip() for m in args.modules.split(",") if m.strip()]
    mcfg = ModelConfig(m=args.m, d_model=args.d_model, modules=modules, refine_iters=max(0, args.runs - 1))
    model = TransCoderModel(code.n, mcfg, seed=args.seed)
    tcfg = TrainConfig(epochs=args.epochs, batch_size=args.batch, lr=args.lr, runs=args.runs,
                       iters_per_run=args.iters_per_run, loss=args.loss, decoder=args.decoder,
                       seed=args.seed, val_every=args.val_every)
    every = max(1, args.epochs // 20)
    res = train(model, code, tcfg, log=lambda r: print(f"epoch {r.epoch:6d} lr {r.lr:.2e} loss {r.loss:.4f}")
                if r.epoch % every == 0 else None)
    print(f"validation loss {res.initial_val_loss:.4f} -> {res.final_val_loss:.4f} in {res.wall_time_s:.1f}s")
    if args.out:
        save_checkpoint(model, args.out, {"code": args.code, "train": vars(tcfg) | {"snr_range_db": list(tcfg.snr_range_db)}})
        write_trace(res.trace, args.trace or Path(args.out) / "trace.csv")
    return 0


def cmd_eval(args):
    from .channel import sigma_from_ebn0
    from .evaluation import PipelineConfig, monte_carlo, write_results
    from .training import load_checkpoint

    code = load_code(args.code)
    model = load_checkpoint(args.checkpoint)
    pipe = PipelineConfig(args.code, args.modules, args.decoder, args.runs, args.iters, args.list_size,
                          True, args.checkpoint, args.calibration_frames)
    if pipe.uses_encoder:
        model.calibrate(code, [sigma_from_ebn0(e, code.rate) for e in args.ebn0], args.calibration_frames, args.seed)
    records = monte_carlo(code, pipe, args.ebn0, _stop(args), args.seed, args.threads, model=model)
    _print_records(records)
    if args.out:
        write_results(records, args.out, {"command": "eval", **vars(args)})
    return 0


def cmd_histogram(args):
    from .channel import make_rng, sigma_from_ebn0
    from .evaluation import distance_histogram

    code = load_code(args.code)
    model = sigma = None
    if args.mapper == "transcoder":
        if not args.checkpoint:
            raise ValueError("--mapper transcoder needs --checkpoint")
        from .training import load_checkpoint

        model = load_checkpoint(args.checkpoint)
        sigma = float(sigma_from_ebn0(args.ebn0, code.rate))
        model.calibrate(code, [sigma], seed=args.seed)
    h = distance_histogram(code, args.mapper, args.pairs, args.bins, make_rng(args.seed, 3), model, sigma)
    lines = ["bin_lo,bin_hi,count"] + [f"{lo:.6f},{hi:.6f},{c}" for lo, hi, c in
                                       zip(h.edges[:-1], h.edges[1:], h.counts)]
    _emit("\n".join(lines), args.out)
    print(f"# {len(h.distances)} pairs ({'exhaustive' if h.exhaustive else 'sampled'}), "
          f"{len(h.support())} distinct distances", file=sys.stderr)
    return 0


def cmd_flops(args):
    from .evaluation import flops

    code = load_code(args.code)
    if isinstance(code, PolarCode):
        code = code.as_linear_code()
    n, n_pc, edges = code.n, code.H.rows, code.graph.n_edges
    m = args.m or (4 if n > 256 else 3)
    if args.target == "bp":
        value = flops.bp_flops(edges, args.iters)
    elif args.target == "transcoder-encoder":
        value = flops.transcoder_module(n, m, args.d_model, 2)
    elif args.target == "transcoder-decoder":
        value = flops.transcoder_module(n, m, args.d_model, 3)
    elif args.target == "ecct":
        value = flops.ecct_decoder(n, n_pc, args.d_cm, args.heads)
    elif args.target == "crossmpt":
        value = flops.crossmpt_decoder(n, n_pc, args.d_cm, args.heads)
    else:
        table = flops.flop_table(n, n_pc, edges, m, args.iters, args.d_model, args.d_cm, args.heads)
        _emit("\n".join(f"{k},{v},{flops.format_count(v)}" for k, v in table.items()), args.out)
        return 0
    _emit(str(value), args.out)
    return 0


COMMANDS = {"codeinfo": cmd_codeinfo, "simulate": cmd_simulate, "train": cmd_train, "eval": cmd_eval,
            "histogram": cmd_histogram, "flops": cmd_flops}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    args = parser.parse_args(argv)
    if args.cmd is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        return COMMANDS[args.cmd](args)
    except (ValueError, OSError, KeyError) as e:
        print(f"transcoder {args.cmd}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

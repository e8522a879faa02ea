"""Command-line interface.

Subcommands: synth, process, select, assemble, report, check.
Exit codes: 0 success, 2 format error, 3 config error, 4 numeric error.
"""

import argparse
import os
import sys

from .assembly import assemble, save_llm_input
from .config import RunConfig, load_config
from .dfs import (dfs_select, format_selection_report, parse_selection_centers,
                  pool_tokens, uniform_select)
from .errors import EngineError
from .memory import (DiskFeatureBuffer, accounting_report, load_bank)
from .params import init_model_params
from .pipeline import run_pipeline
from .stream import FrameTokenStream, encode_instruction, save_stream, synth_stream
from .verify import self_check


def _add_instruction_args(parser):
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--instruction", help="instruction text")
    group.add_argument("--instruction-file",
                       help="UTF-8 file holding the instruction text")


def _read_instruction(args) -> str:
    if args.instruction is not None:
        return args.instruction
    with open(args.instruction_file, "r", encoding="utf-8") as fh:
        return fh.read()


def _load_config_arg(path) -> RunConfig:
    if path is None:
        return RunConfig()
    return load_config(path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streammem",
        description="Streaming memory engine over per-frame token streams")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic RWFS stream")
    p.add_argument("--frames", type=int, required=True)
    p.add_argument("--tokens-per-frame", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("process", help="run both stages and write artifacts")
    p.add_argument("--stream", required=True)
    _add_instruction_args(p)
    p.add_argument("--config")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--select", choices=("dfs", "uniform"), default="dfs")
    p.add_argument("--breakpoint", type=int, default=None,
                   help="process only frames before this index")

    p = sub.add_parser("select", help="run Stage-2 selection on artifacts")
    p.add_argument("--bank", required=True)
    p.add_argument("--buffer-manifest", required=True)
    p.add_argument("--buffer-data", default=None,
                   help="spill data file (default: manifest dir /buffer.bin)")
    _add_instruction_args(p)
    p.add_argument("--config")
    p.add_argument("--strategy", choices=("dfs", "uniform"), default="dfs")
    p.add_argument("--out", required=True,
                   help="report path; pooled tokens go to <out>.pooled.rwfs")

    p = sub.add_parser("assemble", help="build the LLM-input sequence")
    p.add_argument("--bank", required=True)
    p.add_argument("--selection", required=True,
                   help="selection report written by `select`")
    p.add_argument("--config")
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="print accounting for an output dir")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("check", help="run a self-verification suite")
    p.add_argument("--suite", choices=("grads", "oracle", "linearity"),
                   required=True)

    return parser


def _cmd_synth(args) -> int:
    stream = synth_stream(args.seed, args.frames, args.tokens_per_frame,
                          args.dim)
    save_stream(stream, args.out)
    print(f"wrote {args.out}: T={stream.T} P={stream.P} d={stream.d}")
    return 0


def _cmd_process(args) -> int:
    config = _load_config_arg(args.config)
    result = run_pipeline(config, args.stream, _read_instruction(args),
                          args.out_dir, select_strategy=args.select,
                          breakpoint_frame=args.breakpoint)
    print(result.report.render_text(), end="")
    print(f"artifacts in {result.out_dir}")
    return 0


def _open_disk_buffer(args) -> DiskFeatureBuffer:
    data = args.buffer_data
    if data is None:
        data = os.path.join(os.path.dirname(args.buffer_manifest), "buffer.bin")
    return DiskFeatureBuffer(data, args.buffer_manifest)


def _cmd_select(args) -> int:
    config = _load_config_arg(args.config)
    bank = load_bank(args.bank)
    buffer = _open_disk_buffer(args)
    p = config.pool_tokens
    if buffer.frame_indices():
        p = min(p, buffer.get(buffer.frame_indices()[0]).shape[0])
    if args.strategy == "uniform":
        selection = uniform_select(bank, buffer, config.Kc, p)
    else:
        instruction = encode_instruction(_read_instruction(args), config.d)
        selection = dfs_select(bank, buffer, instruction, config.L,
                               config.knn_k, config.Kc, p,
                               z_repr=config.z_repr)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(format_selection_report(selection))
    save_stream(FrameTokenStream(len(selection.pooled), p, config.d,
                                 list(selection.pooled)),
                args.out + ".pooled.rwfs")
    print(f"selected centers: {' '.join(str(c) for c in selection.centers)}")
    return 0


def _cmd_assemble(args) -> int:
    from .dfs import ClusterDiagnostics, CandidateSet, SelectionResult
    import numpy as np
    from .stream import load_stream

    config = _load_config_arg(args.config)
    bank = load_bank(args.bank)
    with open(args.selection, "r", encoding="utf-8") as fh:
        centers = parse_selection_centers(fh.read())
    pooled_stream = load_stream(args.selection + ".pooled.rwfs")
    n = len(centers)
    selection = SelectionResult(
        centers=centers, pooled=list(pooled_stream.frames),
        diagnostics=ClusterDiagnostics(sigma=np.zeros(n), rho=np.zeros(n),
                                       weighted=np.zeros(n), centers=centers),
        candidates=CandidateSet(frames=centers, vectors=np.zeros((n, bank.d)),
                                relevance=np.zeros(n), L=n))
    params = init_model_params(config)
    sequence = assemble(bank, selection, params.tau)
    save_llm_input(sequence, args.out)
    print(f"wrote {args.out}: rows={sequence.total_rows} "
          f"(memory={sequence.memory_rows}, selected={sequence.selected_rows})")
    return 0


def _cmd_report(args) -> int:
    config = load_config(os.path.join(args.out_dir, "config.txt"))
    bank = load_bank(os.path.join(args.out_dir, "memory.rwmb"))
    buffer = DiskFeatureBuffer(os.path.join(args.out_dir, "buffer.bin"),
                               os.path.join(args.out_dir, "buffer.manifest"))
    print(accounting_report(bank, buffer, config).render_text(), end="")
    return 0


def _cmd_check(args) -> int:
    ok, lines = self_check(args.suite)
    for line in lines:
        print(line)
    return 0 if ok else 1


_COMMANDS = {
    "synth": _cmd_synth,
    "process": _cmd_process,
    "select": _cmd_select,
    "assemble": _cmd_assemble,
    "report": _cmd_report,
    "check": _cmd_check,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

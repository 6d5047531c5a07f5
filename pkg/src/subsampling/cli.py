"""Command-line entry point: ``subsampling <command> [flags]``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench, model, toy, verify
from .align import write_matrix_csv
from .train import TrainConfig, TrainingFault, coerce, evaluate_detailed, read_config, train

logger = logging.getLogger("subsampling")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key=value file of TrainConfig overrides")
    for f in dataclasses.fields(TrainConfig):
        names = [f"--{f.name}"]
        if "_" in f.name:
            names.append(f"--{f.name.replace('_', '-')}")
        p.add_argument(*names, dest=f.name, default=None,
                       type=lambda v, k=f.name: coerce(k, v),
                       help=f"default {f.default}")


def _config_from(args) -> TrainConfig:
    values = read_config(args.config) if args.config else {}
    for f in dataclasses.fields(TrainConfig):
        flag = getattr(args, f.name)
        if flag is not None:
            values[f.name] = flag
    return TrainConfig(**values)


def cmd_gen_data(args) -> int:
    pairs = toy.gen_batch(args.T, args.count, args.seed)
    toy.write_pairs(args.out, pairs)
    mean_len = float(np.mean([len(p.target) for p in pairs]))
    print(f"wrote {len(pairs)} pairs to {args.out}; mean target length {mean_len:.4f}")
    return 0


def cmd_train(args) -> int:
    config = _config_from(args)
    try:
        _, log = train(config, out_dir=args.out)
    except TrainingFault as exc:
        if exc.log is not None:
            Path(args.out).mkdir(parents=True, exist_ok=True)
            exc.log.write_csv(Path(args.out) / "train_log.csv")
        print(f"training diverged: {exc}", file=sys.stderr)
        return 1
    last = log.records[-1] if log.records else None
    if last is None:
        print(f"no minibatches run; initial checkpoint written to {args.out}")
    else:
        print(f"minibatch {last.minibatch}: held-out accuracy {last.accuracy:.4f} "
              f"(exact match {last.exact_match:.4f}); outputs in {args.out}")
    return 0


def cmd_eval(args) -> int:
    params, meta = model.load_checkpoint(args.checkpoint)
    for key in ("T", "emission_index_offset"):
        if getattr(args, key) is None and key in meta:
            setattr(args, key, int(meta[key]))
    config = _config_from(args)
    if args.data:
        pairs = toy.read_pairs(args.data)
    else:
        pairs = toy.gen_batch(config.T, config.eval_set_size, config.streams()["eval"])
    acc, exact = evaluate_detailed(params, pairs, config.emission_index_offset)
    print(f"sequences {len(pairs)}")
    print(f"accuracy {acc:.6f}")
    print(f"exact_match {exact:.6f}")
    return 0


def cmd_align(args) -> int:
    params, meta = model.load_checkpoint(args.checkpoint)
    offset = args.emission_index_offset
    if offset is None:
        offset = int(meta.get("emission_index_offset", 1))
    text = args.input if args.input is not None else Path(args.input_file).read_text()
    inputs = toy.check_symbols(int(v) for v in text.replace(",", " ").split())
    trace = model.forward(params, toy.one_hot(inputs), offset)
    write_matrix_csv(args.out, trace.alignment)
    symbols, mass = model.readout(trace)
    symbols_out = args.symbols_out or Path(str(args.out) + ".symbols.csv")
    rows = ["position,symbol,row_mass"]
    rows += [f"{t},{v},{m:.17g}" for t, (v, m) in enumerate(zip(symbols, mass))]
    Path(symbols_out).write_text("\n".join(rows) + "\n", encoding="utf-8")
    print("symbols " + " ".join(map(str, symbols)))
    print(f"expected_length {float(trace.emissions.sum()):.4f}")
    return 0


def cmd_verify(args) -> int:
    dp = verify.faulty_alignment_dp if args.inject_fault else None
    kwargs = {"dp": dp} if dp else {}
    report = verify.run_verification(args.max_T, args.trials, args.seed, **kwargs)
    print("\n".join(report.lines()))
    return 0 if report.ok else 1


def cmd_bench(args) -> int:
    rows = bench.run_bench(args.T, repeats=args.repeats, naive=not args.no_naive,
                           naive_repeats=args.naive_repeats)
    text = bench.format_csv(rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subsampling", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write random toy pairs")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the model on the toy task")
    _add_config_flags(p)
    p.add_argument("--out", type=Path, default=Path("run"))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="held-out accuracy of a checkpoint")
    _add_config_flags(p)
    p.add_argument("--checkpoint", type=Path, required=True)
    p.add_argument("--data", type=Path, help="dataset file instead of the seeded held-out set")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("align", help="export the alignment matrix for one input")
    p.add_argument("--checkpoint", type=Path, required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", help="symbols, space or comma separated")
    src.add_argument("--input-file", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--symbols-out", type=Path)
    p.add_argument("--emission_index_offset", "--emission-index-offset", type=int, choices=(0, 1))
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("verify", help="cross-check DP, naive, enumeration, Monte Carlo, gradients")
    p.add_argument("--max-T", dest="max_T", type=int, default=12)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="time the alignment routes")
    p.add_argument("--T", type=int, nargs="+", default=[1024, 2048])
    p.add_argument("--repeats", type=int, default=7)
    p.add_argument("--naive-repeats", type=int, default=3)
    p.add_argument("--no-naive", action="store_true")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

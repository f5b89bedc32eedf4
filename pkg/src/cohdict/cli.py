"""Command-line entry point.

Exit codes: 0 on success, 2 on validation errors, 3 on I/O errors.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from cohdict.coherence import gram_summary
from cohdict.experiments import (
    ExperimentConfig,
    export_report,
    ingest_wav,
    make_synthetic,
    run_config,
)
from cohdict.matrix_io import load_matrix, save_matrix
from cohdict.trainer import make_method, train
from cohdict.types import DataMatrix, Dictionary, TrainConfig, ValidationError

EXIT_VALIDATION = 2
EXIT_IO = 3


def _emit(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_ingest(args) -> None:
    if bool(args.wav) == bool(args.csv):
        raise ValidationError("give exactly one of --wav or --csv")
    if args.wav:
        data = ingest_wav(args.wav, args.frame_len, args.num_frames, args.seed)
    else:
        m = load_matrix(args.csv, "csv")
        if args.frame_len is not None and m.shape[0] != args.frame_len:
            raise ValidationError(f"CSV rows ({m.shape[0]}) differ from --frame-len {args.frame_len}")
        if args.num_frames is not None:
            if args.num_frames > m.shape[1]:
                raise ValidationError(f"--num-frames {args.num_frames} exceeds the {m.shape[1]} columns available")
            pick = np.sort(np.random.default_rng(args.seed).choice(m.shape[1], args.num_frames, replace=False))
            m = m[:, pick]
        data = DataMatrix(m)
    save_matrix(data.columns, args.out)
    _emit({"out": args.out, "dim": data.dim, "n": data.n}, None)


def cmd_synth(args) -> None:
    data, planted = make_synthetic(args.dim, args.size, args.sparsity, args.n, args.noise, args.seed)
    save_matrix(data.columns, args.out)
    if args.planted_out:
        save_matrix(planted.atoms, args.planted_out)
    _emit({"out": args.out, "planted_out": args.planted_out, "dim": data.dim, "n": data.n}, None)


def cmd_train(args) -> None:
    data = DataMatrix(load_matrix(args.data))
    param = args.gamma if args.method == "idl" else args.mu_t
    method = make_method(args.method, param, args.max_pair_updates)
    coder_param = args.coder_param
    if coder_param is None:
        coder_param = 0.2 if args.coder == "larc" else 3
    config = TrainConfig(
        gamma=args.gamma,
        iterations=args.iters,
        coder=args.coder,
        coder_param=coder_param,
        lbfgs_inner_iters=args.lbfgs_iters,
        lbfgs_memory=args.lbfgs_memory,
        seed=args.seed,
    )
    size = args.size if args.size else int(round(2.5 * data.dim))
    d, coding, history = train(data, config, method, size=size)
    save_matrix(d.atoms, args.out)
    if args.history:
        with open(args.history, "w") as fh:
            fh.write(history.to_csv() if args.history.endswith(".csv") else history.to_jsonl())
    _emit(
        {
            "dictionary": args.out,
            "method": args.method,
            "param": param,
            "gram": gram_summary(d, args.bins).to_json(),
            "final_approx_error": history[-1].approx_error,
            "final_penalized_objective": history[-1].penalized_objective,
            "mean_cardinality": float(coding.cardinalities().mean()),
        },
        args.report,
    )


def cmd_metrics(args) -> None:
    d = Dictionary(load_matrix(args.dict))
    _emit(gram_summary(d, args.bins).to_json(), args.out)


def _cmd_experiment(kind):
    def run(args) -> None:
        cfg = ExperimentConfig.from_file(args.config)
        report = run_config(cfg, kind)
        if args.out:
            export_report(report, args.out, args.format)
        else:
            sys.stdout.write(report.dumps())

    return run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cohdict", description="Dictionary learning with bounded self-coherence.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="frame a WAV file or import a CSV matrix")
    s.add_argument("--wav")
    s.add_argument("--csv")
    s.add_argument("--frame-len", type=int)
    s.add_argument("--num-frames", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("synth", help="generate data from a planted dictionary")
    s.add_argument("--dim", type=int, default=16)
    s.add_argument("--size", type=int, default=40)
    s.add_argument("--sparsity", type=int, default=3)
    s.add_argument("--n", type=int, default=2000)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--planted-out")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train a dictionary")
    s.add_argument("--data", required=True)
    s.add_argument("--method", choices=("idl", "ksvd", "inksvd"), default="idl")
    s.add_argument("--gamma", type=float, default=0.0)
    s.add_argument("--mu-t", type=float, default=1.0)
    s.add_argument("--max-pair-updates", type=int, default=10**5)
    s.add_argument("--iters", type=int, default=25)
    s.add_argument("--coder", choices=("larc", "omp"), default="larc")
    s.add_argument("--coder-param", type=float)
    s.add_argument("--size", type=int, help="number of atoms (default 2.5 x dimension)")
    s.add_argument("--lbfgs-iters", type=int, default=10)
    s.add_argument("--lbfgs-memory", type=int, default=7)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--bins", type=int, default=20)
    s.add_argument("--out", required=True, help="dictionary output file")
    s.add_argument("--history", help="per-iteration history (.jsonl or .csv)")
    s.add_argument("--report", help="JSON summary file (default stdout)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("metrics", help="frame statistics of a dictionary")
    s.add_argument("--dict", required=True)
    s.add_argument("--bins", type=int, default=20)
    s.add_argument("--out")
    s.set_defaults(func=cmd_metrics)

    for name, kind, text in (
        ("spectrum-exp", "spectrum", "singular spectra across coherence settings"),
        ("gen-exp", "generalization", "held-out residual versus cardinality"),
    ):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True, help="key=value config file")
        s.add_argument("--out", help="report path (directory for --format csv; default stdout)")
        s.add_argument("--format", choices=("json", "csv"), default="json")
        s.set_defaults(func=_cmd_experiment(kind))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line interface: dataset generation, training, evaluation, sweeps."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ._io import atomic_write_text
from .experiments import SWEEP_KINDS, run_raw_config
from .homodyne import ROLES, LoScan, generate_dataset, load_dataset, save_dataset
from .limits import limits_table
from .nn import load_network, save_network
from .receiver import CnnConfig, GnnConfig, evaluate, train_cnn, train_gnn


def _cmd_limits(args) -> int:
    rows = limits_table(args.min_db, args.max_db, args.step_db)
    lines = ["alpha_db,alpha_linear,p_hd,p_hel,relative_hd"]
    for r in rows:
        lines.append(
            ",".join(
                f"{r[k]:.17g}" for k in ("alpha_db", "alpha_linear", "p_hd", "p_hel", "relative_hd")
            )
        )
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    print(f"wrote {len(rows)} rows to {args.out}")
    if args.plot:
        from .plots import plot_limits

        plot_limits(rows, args.plot)
        print(f"wrote figure to {args.plot}")
    return 0


def _cmd_gen(args) -> int:
    scan = LoScan.for_width(args.width)
    ds = generate_dataset(args.alpha_db, args.per_key, scan, args.seed, role=args.role)
    save_dataset(ds, args.out)
    print(
        f"wrote {len(ds.entries)} images ({args.per_key}/key, {args.width}x{args.width}, "
        f"{args.alpha_db:+.2f} dB) to {args.out}"
    )
    return 0


def _cmd_train_gnn(args) -> int:
    noisy = load_dataset(args.train)
    targets = load_dataset(args.target)
    cfg = GnnConfig(input_width=noisy.width, epochs=args.epochs, seed=args.seed)
    net, history = train_gnn(noisy, targets, cfg)
    save_network(net, args.model_out)
    first = history[0] if history else float("nan")
    last = history[-1] if history else float("nan")
    print(f"trained denoiser: {args.epochs} epochs, loss {first:.6g} -> {last:.6g}")
    print(f"wrote model to {args.model_out}")
    return 0


def _cmd_train_cnn(args) -> int:
    labeled = load_dataset(args.train)
    cfg = CnnConfig(input_width=labeled.width, epochs=args.epochs, seed=args.seed)
    net, report = train_cnn(labeled, cfg)
    save_network(net, args.model_out)
    print(
        f"trained classifier: {report.n_train} train / {report.n_test} held out, "
        f"accuracy {report.accuracy:.4f}"
    )
    print(f"wrote model to {args.model_out}")
    return 0


def _cmd_eval(args) -> int:
    if args.gnn_model and args.no_gnn:
        print("--gnn-model and --no-gnn are mutually exclusive", file=sys.stderr)
        return 2
    test = load_dataset(args.test)
    cnn = load_network(args.model_in)
    gnn = load_network(args.gnn_model) if args.gnn_model else None
    report = evaluate(test, cnn, gnn)
    variant = "hd-gnn-cnn" if gnn is not None else "hd-cnn"
    print(
        f"{variant}: p_network={report.p_network:.6g} p_err={report.p_err:.6g} "
        f"p_relative={report.p_relative:.6g} (relative HD limit {report.p_relative_hd:.6g})"
    )
    if args.report:
        path = Path(args.report)
        if path.suffix.lower() == ".csv":
            fields = [
                "n_total",
                "n_wrong",
                "p_network",
                "p_hd",
                "p_hel",
                "p_err",
                "p_relative",
                "p_relative_hd",
                "signal_db",
            ]
            d = report.to_dict()
            lines = [
                ",".join(fields),
                ",".join(f"{d[f]:.17g}" if isinstance(d[f], float) else str(d[f]) for f in fields),
            ]
            atomic_write_text(path, "\n".join(lines) + "\n")
        else:
            atomic_write_text(path, json.dumps(report.to_dict(), indent=2) + "\n")
        print(f"wrote report to {path}")
    return 0


def _cmd_sweep(args) -> int:
    if args.config:
        raw = json.loads(Path(args.config).read_text())
        if args.plot:
            raw["plot"] = True
        if args.out_dir:
            raw["out_dir"] = args.out_dir
    else:
        if not args.kind:
            print("either --config or --kind is required", file=sys.stderr)
            return 2
        raw = {"sweep": args.kind, "plot": bool(args.plot)}
        if args.message_db:
            raw["message_db"] = args.message_db
        if args.target_db is not None:
            raw["target_db"] = args.target_db
        if args.widths:
            raw["widths"] = args.widths
        if args.gnn_epochs is not None:
            raw["gnn_epochs"] = args.gnn_epochs
        if args.cnn_epochs is not None:
            raw["cnn_epochs"] = args.cnn_epochs
        if args.seed is not None:
            raw["base_seed"] = args.seed
        if args.replicates is not None:
            raw["replicates"] = args.replicates
        if args.test_per_key is not None:
            raw["test_per_key"] = args.test_per_key
        if args.out_dir:
            raw["out_dir"] = args.out_dir

    def progress(i, n, job):
        print(f"[{i + 1}/{n}] {job}", file=sys.stderr)

    run_dir = run_raw_config(raw, progress=progress, jobs=args.jobs)
    print(f"sweep complete; artifacts under {run_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hodyne",
        description="QPSK homodyne receiver simulation, training, and benchmarks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("limits", help="emit the analytic error-bound table as CSV")
    p.add_argument("--min-db", type=float, default=-15.0)
    p.add_argument("--max-db", type=float, default=9.0)
    p.add_argument("--step-db", type=float, default=0.25)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--plot", help="optional figure path (PNG)")
    p.set_defaults(func=_cmd_limits)

    p = sub.add_parser("gen", help="simulate a labeled homodyne image dataset")
    p.add_argument("--alpha-db", type=float, required=True, help="signal strength in dB")
    p.add_argument("--per-key", type=int, default=200)
    p.add_argument("--width", type=int, default=30)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--role", choices=ROLES, default="test")
    p.add_argument("--out", required=True, help="output .qhd path")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("train-gnn", help="train the denoising autoencoder")
    p.add_argument("--train", required=True, help="noisy input dataset (.qhd)")
    p.add_argument("--target", required=True, help="clean target dataset (.qhd)")
    p.add_argument("--model-out", required=True, help="output model (.qnn)")
    p.add_argument("--epochs", type=int, default=150)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train_gnn)

    p = sub.add_parser("train-cnn", help="train the classifier (200/key, split 170/30)")
    p.add_argument("--train", required=True, help="labeled dataset (.qhd)")
    p.add_argument("--model-out", required=True, help="output model (.qnn)")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train_cnn)

    p = sub.add_parser("eval", help="score a test set with or without the denoiser")
    p.add_argument("--test", required=True, help="test dataset (.qhd)")
    p.add_argument("--model-in", required=True, help="classifier model (.qnn)")
    p.add_argument("--gnn-model", help="denoiser model (.qnn); omit for the raw variant")
    p.add_argument("--no-gnn", action="store_true", help="classify raw images (explicit)")
    p.add_argument("--report", help="write the evaluation report (.json or .csv)")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep", help="run a full experiment sweep")
    p.add_argument("--config", help="JSON config file (see README for the schema)")
    p.add_argument("--kind", choices=SWEEP_KINDS, help="sweep kind (shorthand mode)")
    p.add_argument("--message-db", type=float, nargs="+", help="message levels in dB")
    p.add_argument("--target-db", type=float, help="denoiser target level in dB")
    p.add_argument("--widths", type=int, nargs="+", help="image widths (scan-range)")
    p.add_argument("--gnn-epochs", type=int)
    p.add_argument("--cnn-epochs", type=int)
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--replicates", type=int)
    p.add_argument("--test-per-key", type=int)
    p.add_argument("--out-dir", help="root directory for run artifacts")
    p.add_argument("--plot", action="store_true", help="render figures next to the CSVs")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface: variance scans, group-spectrum scans, the digit
training grid, and a gradient cross-check.

Exit codes: 0 success, 1 check or run failure, 2 usage/input error.
"""

from __future__ import annotations

import argparse
import re
import sys

import numpy as np

from . import reporting
from .errors import LcqnnError, TrainingError
from .experiments import (
    BlockSpectrum,
    group_block_variance,
    run_variance_point,
    scan_variance_vs_L,
    select_blocks,
    su2_block_dims,
)
from .gradients import TWO_PI, finite_diff_grad, num_params, param_shift_grad
from .mnist import (
    data_files_present,
    default_data_dir,
    fetch_instructions,
    load_dataset,
    run_accuracy_grid,
)
from .model import make_model
from .sim import PauliZSum

GRAD_CHECK_TOLERANCE = 1e-5


def _progress(message: str) -> None:
    print(message, file=sys.stderr)


# ---------------------------------------------------------------------------
# flag parsing


def _int_list(text: str) -> tuple[int, ...]:
    try:
        items = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated integers, got {text!r}"
        )
    if not items:
        raise argparse.ArgumentTypeError("need at least one value")
    return items


def _dims_spec(text: str) -> tuple[tuple[int, int], ...]:
    blocks = []
    for part in text.split(","):
        match = re.fullmatch(r"\s*(\d+):(\d+)\s*", part)
        if match is None:
            raise argparse.ArgumentTypeError(
                f"expected d:mult pairs like 16:1,16:1, got {text!r}"
            )
        blocks.append((int(match.group(1)), int(match.group(2))))
    return tuple(blocks)


def _observable_for(spec: str, num_working: int) -> PauliZSum:
    match = re.fullmatch(r"[Zz](\d+)", spec.strip())
    if match is None:
        raise LcqnnError(f"unsupported observable {spec!r}; use Z<qubit>, e.g. Z0")
    qubit = int(match.group(1))
    if qubit >= num_working:
        raise LcqnnError(
            f"observable qubit {qubit} is outside the {num_working}-qubit register"
        )
    return PauliZSum([(1.0, (qubit,))], num_qubits=num_working)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise LcqnnError(message)


def _check_common(args) -> None:
    _require(args.samples >= 2, "--samples must be >= 2")
    _require(args.threads >= 1, "--threads must be >= 1")


# ---------------------------------------------------------------------------
# subcommands


def cmd_variance_scan(args) -> int:
    _check_common(args)
    # validate the observable shape up front against the smallest register
    obs_name = _observable_for(args.obs, min(args.n_list)).describe()
    config = {
        "m": args.m,
        "L": args.L,
        "k_list": list(args.k_list),
        "n_list": list(args.n_list),
        "depth": args.depth,
        "samples": args.samples,
        "seed": args.seed,
        "obs": obs_name,
        "param_id": args.param_id,
        "format": args.format,
        "threads": args.threads,
    }
    command = reporting.build_command("variance-scan", config)
    records = []
    for k in args.k_list:
        for n in args.n_list:
            obs = _observable_for(args.obs, n)
            _progress(f"variance-scan: k={k} n={n} ({args.samples} samples)")
            records.append(
                run_variance_point(
                    args.m,
                    n,
                    args.L,
                    k,
                    args.depth,
                    args.samples,
                    args.seed,
                    obs=obs,
                    param_id=args.param_id,
                    threads=args.threads,
                )
            )
    _emit_scan(command, config, records, args)
    return 0


def cmd_variance_layers(args) -> int:
    _check_common(args)
    obs = _observable_for(args.obs, args.n)
    config = {
        "m": args.m,
        "n": args.n,
        "k": args.k,
        "depth": args.depth,
        "L_list": list(args.L_list),
        "samples": args.samples,
        "seed": args.seed,
        "obs": obs.describe(),
        "param_id": args.param_id,
        "format": args.format,
        "threads": args.threads,
    }
    command = reporting.build_command("variance-layers", config)
    _progress(
        f"variance-layers: L in {list(args.L_list)} ({args.samples} samples each)"
    )
    records = scan_variance_vs_L(
        args.m,
        args.n,
        args.k,
        args.depth,
        args.L_list,
        args.samples,
        args.seed,
        obs=obs,
        param_id=args.param_id,
        threads=args.threads,
    )
    summary = reporting.layers_summary(records)
    _progress(f"variance-layers: slope {summary['log2_slope_vs_log2_L']:+.4f}")
    _emit_scan(command, config, records, args, summary=summary)
    return 0


def _emit_scan(command, config, records, args, summary=None) -> None:
    if args.format == "csv":
        text = reporting.render_csv(
            command, config, reporting.SCAN_COLUMNS,
            [reporting.scan_row(r) for r in records],
        )
    else:
        text = reporting.render_json(
            command, config, [reporting.scan_dict(r) for r in records], summary
        )
    reporting.write_output(text, args.out)


def cmd_group_scan(args) -> int:
    _check_common(args)
    _require(args.depth >= 1, "--depth must be >= 1")
    if args.dims and (args.su2_N is not None or args.select_j is not None):
        raise LcqnnError("pass either --dims or --su2-N/--select-j, not both")
    if args.dims:
        spectra = [BlockSpectrum(blocks) for blocks in args.dims]
    elif args.su2_N is not None:
        spectrum = su2_block_dims(args.su2_N)
        if args.select_j is not None:
            spectrum = select_blocks(spectrum, args.select_j)
        spectra = [spectrum]
    else:
        raise LcqnnError("one of --dims or --su2-N is required")
    config = {
        "dims": (
            [",".join(f"{d}:{mult}" for d, mult in s.blocks) for s in spectra]
            if args.dims
            else None
        ),
        "su2_N": args.su2_N,
        "select_j": list(args.select_j) if args.select_j is not None else None,
        "mode": args.mode,
        "depth": args.depth,
        "samples": args.samples,
        "seed": args.seed,
        "format": args.format,
        "threads": args.threads,
    }
    command = reporting.build_command("group-scan", config)
    results = []
    for spectrum in spectra:
        _progress(
            f"group-scan: dims {reporting.spectrum_label(spectrum)} "
            f"mode {args.mode} ({args.samples} samples)"
        )
        results.append(
            group_block_variance(
                spectrum,
                args.samples,
                args.mode,
                args.seed,
                args.depth,
                threads=args.threads,
            )
        )
    summary = reporting.group_summary(results)
    for ratio in summary["ratios"]:
        line = f"group-scan: spectrum {ratio['pair'][1]} / spectrum " \
            f"{ratio['pair'][0]} theta-variance ratio {ratio['theta']:.4f}"
        if "alpha" in ratio:
            line += f", alpha ratio {ratio['alpha']:.4f}"
        _progress(line)
    if args.format == "csv":
        rows = [row for res in results for row in reporting.group_rows(res)]
        text = reporting.render_csv(command, config, reporting.GROUP_COLUMNS, rows)
    else:
        records = [rec for res in results for rec in reporting.group_dicts(res)]
        text = reporting.render_json(command, config, records, summary)
    reporting.write_output(text, args.out)
    return 0


def cmd_mnist(args) -> int:
    _require(args.threads >= 1, "--threads must be >= 1")
    _require(args.epochs >= 1, "--epochs must be >= 1")
    _require(args.runs >= 1, "--runs must be >= 1")
    _require(args.batch >= 1, "--batch must be >= 1")
    _require(
        args.train_limit >= 4 and args.test_limit >= 4,
        "--train-limit and --test-limit must be >= 4 (one example per class)",
    )
    data_dir = args.data_dir if args.data_dir is not None else default_data_dir()
    if not data_files_present(data_dir):
        print(fetch_instructions(data_dir), file=sys.stderr)
        return 2
    config = {
        "data_dir": str(data_dir),
        "L_list": list(args.L_list),
        "D_list": list(args.D_list),
        "runs": args.runs,
        "epochs": args.epochs,
        "lr": args.lr,
        "batch": args.batch,
        "train_limit": args.train_limit,
        "test_limit": args.test_limit,
        "seed": args.seed,
        "optimizer": args.optimizer,
        "format": args.format,
    }
    command = reporting.build_command("mnist", config)
    _progress(
        f"mnist: loading up to {args.train_limit}/{args.test_limit} examples "
        f"from {data_dir}"
    )
    train_set, test_set = load_dataset(data_dir, args.train_limit, args.test_limit)
    _progress(f"mnist: {len(train_set)} train / {len(test_set)} test examples")
    cells = run_accuracy_grid(
        train_set,
        test_set,
        args.L_list,
        args.D_list,
        args.runs,
        args.seed,
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch,
        optimizer=args.optimizer,
        progress=_progress,
    )
    summary = reporting.mnist_summary(cells)
    for cell in summary["cells"]:
        _progress(
            f"mnist: L={cell['L']} D={cell['D']} "
            f"accuracy {cell['mean_accuracy']:.4f} +/- {cell['std_accuracy']:.4f}"
        )
    if args.format == "csv":
        text = reporting.render_csv(
            command, config, reporting.mnist_columns(args.epochs),
            reporting.mnist_rows(cells),
        )
    else:
        text = reporting.render_json(
            command, config, reporting.mnist_dicts(cells), summary
        )
    reporting.write_output(text, args.out)
    return 0


def cmd_grad_check(args) -> int:
    _require(args.probes >= 1, "--probes must be >= 1")
    rng = np.random.default_rng(args.seed)
    worst_rel = -1.0
    worst_detail = ""
    failures = 0
    for probe in range(args.probes):
        m = int(rng.integers(0, 4))
        n = int(rng.integers(1, 7))
        k = int(rng.integers(1, n + 1))
        D = int(rng.integers(1, 4))
        L = 1 << int(rng.integers(0, m + 1))
        model = make_model(m, n, L, k, D)
        flat = rng.uniform(0.0, TWO_PI, num_params(model))
        param_id = int(rng.integers(0, num_params(model)))
        obs = _observable_for("Z0", n)
        shift = param_shift_grad(
            model, flat, obs, param_id, shift_scale=args.shift_scale
        )
        fd = finite_diff_grad(model, flat, obs, param_id)
        # the error scale floors at 1e-3: parameters outside the observable's
        # block have exactly zero gradient, where a pure ratio would divide
        # finite-difference rounding noise (~1e-10) by itself
        rel = abs(shift - fd) / max(abs(shift), abs(fd), 1e-3)
        detail = (
            f"probe {probe} (m={m} n={n} L={L} k={k} D={D}, param {param_id}): "
            f"shift={shift!r} fd={fd!r} rel={rel:.3e}"
        )
        if rel > worst_rel:
            worst_rel, worst_detail = rel, detail
        if rel > GRAD_CHECK_TOLERANCE:
            failures += 1
    if failures:
        print(
            f"grad-check: {failures}/{args.probes} probes exceeded "
            f"{GRAD_CHECK_TOLERANCE:g} relative error"
        )
        print(f"worst offender: {worst_detail}")
        return 1
    print(
        f"grad-check: {args.probes}/{args.probes} probes within "
        f"{GRAD_CHECK_TOLERANCE:g} relative error"
    )
    print(f"worst: {worst_detail}")
    return 0


# ---------------------------------------------------------------------------
# parser assembly


def _add_output_flags(parser) -> None:
    parser.add_argument("--seed", type=int, default=42, help="root random seed")
    parser.add_argument("--out", default=None, help="output path (default: stdout)")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument(
        "--threads",
        type=int,
        default=1,
        help="worker threads for sample loops; output is identical at any count",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lcqnn",
        description="Trainability experiments and a digit classifier for "
        "linear combinations of quantum neural networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    scan = sub.add_parser(
        "variance-scan", help="gradient variance vs working-register size"
    )
    scan.add_argument("--m", type=int, default=3, help="control qubits")
    scan.add_argument("--L", type=int, default=8, help="branch count (power of two)")
    scan.add_argument("--k-list", type=_int_list, default=(3, 5), help="block localities")
    scan.add_argument(
        "--n-list", type=_int_list, default=(3, 4, 6, 8), help="working-register sizes"
    )
    scan.add_argument("--depth", type=int, default=3, help="entangling layers per block")
    scan.add_argument("--samples", type=int, default=500)
    scan.add_argument("--obs", default="Z0", help="observable, Z<qubit>")
    scan.add_argument(
        "--param-id", type=int, default=None,
        help="flat probe-parameter index (default: branch 0's first rotation)",
    )
    _add_output_flags(scan)
    scan.set_defaults(handler=cmd_variance_scan)

    layers = sub.add_parser(
        "variance-layers", help="gradient variance vs branch count"
    )
    layers.add_argument("--m", type=int, default=3)
    layers.add_argument("--n", type=int, default=6)
    layers.add_argument("--k", type=int, default=5)
    layers.add_argument("--depth", type=int, default=3)
    layers.add_argument("--L-list", type=_int_list, default=(1, 2, 4, 8))
    layers.add_argument("--samples", type=int, default=500)
    layers.add_argument("--obs", default="Z0")
    layers.add_argument("--param-id", type=int, default=None)
    _add_output_flags(layers)
    layers.set_defaults(handler=cmd_variance_layers)

    group = sub.add_parser(
        "group-scan", help="gradient variance of block-structured mixtures"
    )
    group.add_argument(
        "--dims",
        type=_dims_spec,
        action="append",
        default=None,
        help="spectrum as d:mult pairs, e.g. 16:1,16:1 (repeatable)",
    )
    group.add_argument("--su2-N", type=int, default=None, help="qubit count for the SU(2) spectrum")
    group.add_argument(
        "--select-j", type=_int_list, default=None, help="block indices kept from --su2-N"
    )
    group.add_argument("--mode", choices=("haar", "ansatz"), default="haar")
    group.add_argument("--depth", type=int, default=8, help="ansatz-mode circuit depth")
    group.add_argument("--samples", type=int, default=500)
    _add_output_flags(group)
    group.set_defaults(handler=cmd_group_scan)

    mnist = sub.add_parser("mnist", help="train the digit classifier grid")
    mnist.add_argument(
        "--data-dir", default=None,
        help="IDX file directory (default: $LCQNN_DATA_DIR or ./data)",
    )
    mnist.add_argument("--L-list", type=_int_list, default=(1, 2, 4))
    mnist.add_argument("--D-list", type=_int_list, default=(1, 2, 4, 8))
    mnist.add_argument("--runs", type=int, default=5)
    mnist.add_argument("--epochs", type=int, default=2)
    mnist.add_argument("--lr", type=float, default=0.008)
    mnist.add_argument("--batch", type=int, default=32)
    mnist.add_argument("--train-limit", type=int, default=4000)
    mnist.add_argument("--test-limit", type=int, default=1000)
    mnist.add_argument("--optimizer", choices=("adam", "sgd"), default="adam")
    _add_output_flags(mnist)
    mnist.set_defaults(handler=cmd_mnist)

    check = sub.add_parser(
        "grad-check", help="parameter-shift vs finite-difference cross-check"
    )
    check.add_argument("--probes", type=int, default=50)
    check.add_argument("--seed", type=int, default=42)
    check.add_argument(
        "--shift-scale", type=float, default=1.0, help=argparse.SUPPRESS
    )
    check.set_defaults(handler=cmd_grad_check)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (LcqnnError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

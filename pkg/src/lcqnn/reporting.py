"""CSV and JSON emission with reproducibility headers.

Every artifact begins with the tool version, the exact command that produced
it, and the resolved configuration, so re-running the header's command
regenerates the data rows byte for byte.  Floats are rendered with ``repr``
(shortest round-trip form), which keeps rows bit-identical across re-runs and
thread counts.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import GroupScanResult, ScanRecord, fit_log2_slope

SCAN_COLUMNS = (
    "m",
    "n",
    "L",
    "k",
    "D",
    "observable",
    "param_id",
    "samples",
    "seed",
    "mean",
    "variance",
    "stderr",
)

GROUP_COLUMNS = (
    "dims",
    "mode",
    "depth",
    "d_max",
    "L",
    "probe",
    "samples",
    "seed",
    "mean",
    "variance",
    "stderr",
)


def format_value(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def build_command(subcommand: str, config: dict) -> str:
    """Reconstruct the invocation that reproduces an output's data rows."""
    parts = ["lcqnn", subcommand]
    for key, value in config.items():
        if value is None or value is False:
            continue
        flag = "--" + key.replace("_", "-")
        if value is True:
            parts.append(flag)
        elif isinstance(value, (list, tuple)):
            if value and isinstance(value[0], str):
                for item in value:  # repeatable flags (e.g. --dims)
                    parts += [flag, str(item)]
            else:
                parts += [flag, ",".join(str(x) for x in value)]
        else:
            parts += [flag, str(value)]
    return " ".join(parts)


def header_lines(command: str, config: dict) -> list[str]:
    return [
        f"# lcqnn {__version__}",
        f"# command: {command}",
        f"# config: {json.dumps(config, sort_keys=True)}",
    ]


def render_csv(command: str, config: dict, columns, rows) -> str:
    lines = header_lines(command, config)
    lines.append(",".join(columns))
    lines += [",".join(format_value(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def render_json(command: str, config: dict, records, summary=None) -> str:
    payload = {
        "version": __version__,
        "command": command,
        "config": config,
        "records": records,
    }
    if summary is not None:
        payload["summary"] = summary
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_output(text: str, path=None) -> None:
    """Write to the path, or to standard output when no path is given."""
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# ---------------------------------------------------------------------------
# variance scans


def scan_row(record: ScanRecord) -> list:
    return [getattr(record, column) for column in SCAN_COLUMNS]


def scan_dict(record: ScanRecord) -> dict:
    return {column: getattr(record, column) for column in SCAN_COLUMNS}


def layers_summary(records) -> dict:
    """Least-squares slope of log2 variance against log2 branch count."""
    xs = [float(np.log2(r.L)) for r in records]
    return {
        "L_values": [r.L for r in records],
        "variances": [r.variance for r in records],
        "log2_slope_vs_log2_L": fit_log2_slope(xs, [r.variance for r in records]),
    }


# ---------------------------------------------------------------------------
# group-spectrum scans


def spectrum_label(spectrum) -> str:
    return ";".join(f"{d}:{mult}" for d, mult in spectrum.blocks)


def group_dicts(result: GroupScanResult) -> list[dict]:
    """One record per probe: theta always, alpha when the tree has a node."""
    base = {
        "dims": spectrum_label(result.spectrum),
        "mode": result.mode,
        "depth": result.depth,
        "d_max": result.spectrum.d_max,
        "L": result.spectrum.num_blocks,
        "samples": result.samples,
        "seed": result.seed,
    }
    records = [
        dict(
            base,
            probe="theta",
            mean=result.theta_stats.mean,
            variance=result.theta_stats.variance,
            stderr=result.theta_stats.stderr,
        )
    ]
    if result.alpha_stats is not None:
        records.append(
            dict(
                base,
                probe="alpha",
                mean=result.alpha_stats.mean,
                variance=result.alpha_stats.variance,
                stderr=result.alpha_stats.stderr,
            )
        )
    return records


def group_rows(result: GroupScanResult) -> list[list]:
    return [[rec[c] for c in GROUP_COLUMNS] for rec in group_dicts(result)]


def group_summary(results) -> dict:
    """Per-spectrum variances plus consecutive-pair scaling ratios."""
    spectra = []
    for res in results:
        spectra.append(
            {
                "dims": spectrum_label(res.spectrum),
                "d_max": res.spectrum.d_max,
                "L": res.spectrum.num_blocks,
                "theta_variance": res.theta_stats.variance,
                "alpha_variance": (
                    None if res.alpha_stats is None else res.alpha_stats.variance
                ),
            }
        )
    ratios = []
    for i in range(len(results) - 1):
        a, b = results[i], results[i + 1]
        entry = {
            "pair": [i, i + 1],
            "theta": b.theta_stats.variance / a.theta_stats.variance,
        }
        if a.alpha_stats is not None and b.alpha_stats is not None:
            entry["alpha"] = b.alpha_stats.variance / a.alpha_stats.variance
        ratios.append(entry)
    return {"spectra": spectra, "ratios": ratios}


# ---------------------------------------------------------------------------
# digit-classification grids


def mnist_columns(epochs: int) -> tuple[str, ...]:
    return (
        "L",
        "D",
        "run",
        "seed",
        *(f"epoch_loss_{e + 1}" for e in range(epochs)),
        "test_accuracy",
    )


def mnist_rows(cells) -> list[list]:
    rows = []
    for cell in cells:
        for metrics in cell.metrics:
            rows.append(
                [
                    cell.L,
                    cell.D,
                    metrics.run_index,
                    metrics.run_seed,
                    *metrics.epoch_losses,
                    metrics.test_accuracy,
                ]
            )
    return rows


def mnist_dicts(cells) -> list[dict]:
    records = []
    for cell in cells:
        for metrics in cell.metrics:
            records.append(
                {
                    "L": cell.L,
                    "D": cell.D,
                    "run": metrics.run_index,
                    "seed": metrics.run_seed,
                    "epoch_losses": list(metrics.epoch_losses),
                    "test_accuracy": metrics.test_accuracy,
                }
            )
    return records


def mnist_summary(cells) -> dict:
    """Mean/std accuracy per cell plus cross-cell trend comparisons."""
    table = [
        {
            "L": cell.L,
            "D": cell.D,
            "mean_accuracy": cell.mean_accuracy,
            "std_accuracy": cell.std_accuracy,
        }
        for cell in cells
    ]
    by_key = {(cell.L, cell.D): cell.mean_accuracy for cell in cells}
    L_values = sorted({cell.L for cell in cells})
    D_values = sorted({cell.D for cell in cells})
    comparisons = {}
    if len(L_values) > 1:
        lo, hi = L_values[0], L_values[-1]
        for D in D_values:
            comparisons[f"acc(L={hi},D={D}) > acc(L={lo},D={D})"] = bool(
                by_key[(hi, D)] > by_key[(lo, D)]
            )
    if len(D_values) > 1:
        lo, hi = D_values[0], D_values[-1]
        for L in L_values:
            comparisons[f"acc(L={L},D={hi}) > acc(L={L},D={lo})"] = bool(
                by_key[(L, hi)] > by_key[(L, lo)]
            )
    return {"cells": table, "comparisons": comparisons}

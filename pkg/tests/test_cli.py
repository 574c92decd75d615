"""CLI contract tests: flags, exit codes, emission formats, and headers."""

import gzip
import json
import shlex
import struct
from importlib import resources

import numpy as np
import pytest

from lcqnn import GridCell, RunMetrics, __version__
from lcqnn.cli import main
from lcqnn.reporting import (
    GROUP_COLUMNS,
    SCAN_COLUMNS,
    build_command,
    format_value,
    mnist_columns,
    mnist_summary,
)


def run_cli(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def data_rows(text: str) -> list[str]:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    return lines[1:]  # drop the column header


def load_schema(name: str) -> dict:
    path = resources.files("lcqnn") / "schemas" / name
    return json.loads(path.read_text())


# ---------------------------------------------------------------------------
# reporting helpers


def test_format_value_round_trips_floats():
    assert format_value(0.1) == "0.1"
    assert format_value(np.float64(1.0) / 3.0) == repr(1.0 / 3.0)
    assert format_value(7) == "7"
    assert format_value("Z0") == "Z0"


def test_build_command_handles_lists_and_repeats():
    cmd = build_command(
        "variance-scan",
        {"m": 3, "k_list": [3, 5], "param_id": None, "format": "csv"},
    )
    assert cmd == "lcqnn variance-scan --m 3 --k-list 3,5 --format csv"
    cmd = build_command("group-scan", {"dims": ["16:1,16:1", "32:1,32:1"]})
    assert cmd == "lcqnn group-scan --dims 16:1,16:1 --dims 32:1,32:1"


def test_mnist_summary_comparisons():
    def cell(L, D, acc):
        return GridCell(L=L, D=D, metrics=[RunMetrics(0, 0, [1.0], acc)])

    cells = [cell(1, 1, 0.3), cell(1, 8, 0.35), cell(4, 1, 0.5), cell(4, 8, 0.7)]
    summary = mnist_summary(cells)
    assert summary["comparisons"]["acc(L=4,D=1) > acc(L=1,D=1)"] is True
    assert summary["comparisons"]["acc(L=4,D=8) > acc(L=1,D=8)"] is True
    assert summary["comparisons"]["acc(L=4,D=8) > acc(L=4,D=1)"] is True
    assert summary["comparisons"]["acc(L=1,D=8) > acc(L=1,D=1)"] is True
    assert len(summary["cells"]) == 4
    assert mnist_columns(2) == ("L", "D", "run", "seed", "epoch_loss_1", "epoch_loss_2", "test_accuracy")


# ---------------------------------------------------------------------------
# variance-scan


def test_variance_scan_smoke_to_stdout(capsys):
    code, out, err = run_cli(
        capsys, ["variance-scan", "--n-list", "3", "--samples", "2", "--seed", "7"]
    )
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == f"# lcqnn {__version__}"
    assert lines[1].startswith("# command: lcqnn variance-scan --m 3 --L 8")
    assert lines[2].startswith("# config: ")
    assert lines[3] == ",".join(SCAN_COLUMNS)
    assert len(data_rows(out)) == 2  # k in {3,5}, one n
    assert "variance-scan: k=3 n=3" in err


def test_variance_scan_out_file_matches_stdout(tmp_path, capsys):
    argv = ["variance-scan", "--n-list", "3", "--samples", "5", "--seed", "1"]
    code, out, _ = run_cli(capsys, argv)
    assert code == 0
    out_path = tmp_path / "scan.csv"
    assert main(argv + ["--out", str(out_path)]) == 0
    capsys.readouterr()
    assert out_path.read_text() == out


def test_variance_scan_json_validates(capsys):
    code, out, _ = run_cli(
        capsys,
        ["variance-scan", "--n-list", "3,4", "--k-list", "2", "--samples", "3",
         "--format", "json"],
    )
    assert code == 0
    jsonschema = pytest.importorskip("jsonschema")
    payload = json.loads(out)
    jsonschema.validate(payload, load_schema("variance_scan.schema.json"))
    assert len(payload["records"]) == 2
    assert payload["records"][0]["observable"] == "Z0"
    assert payload["config"]["seed"] == 42


def test_variance_scan_flag_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["variance-scan", "--k-list", "three"])
    assert exc.value.code == 2
    capsys.readouterr()
    assert run_cli(capsys, ["variance-scan", "--samples", "1"])[0] == 2
    assert run_cli(capsys, ["variance-scan", "--obs", "X0"])[0] == 2
    assert run_cli(capsys, ["variance-scan", "--obs", "Z5", "--n-list", "3"])[0] == 2
    assert run_cli(capsys, ["variance-scan", "--L", "3", "--samples", "2"])[0] == 2


# ---------------------------------------------------------------------------
# variance-layers


def test_variance_layers_records_and_slope(capsys):
    code, out, err = run_cli(
        capsys,
        ["variance-layers", "--L-list", "1,2", "--n", "3", "--k", "3",
         "--samples", "40", "--format", "json"],
    )
    assert code == 0
    payload = json.loads(out)
    assert [r["L"] for r in payload["records"]] == [1, 2]
    summary = payload["summary"]
    assert summary["L_values"] == [1, 2]
    assert "log2_slope_vs_log2_L" in summary
    assert "slope" in err


def test_variance_layers_bad_branch_count(capsys):
    code, _, err = run_cli(
        capsys, ["variance-layers", "--L-list", "3", "--samples", "2"]
    )
    assert code == 2
    assert "power" in err


# ---------------------------------------------------------------------------
# group-scan


def test_group_scan_csv_rows_and_ratio_report(capsys):
    code, out, err = run_cli(
        capsys,
        ["group-scan", "--dims", "4:1,4:1", "--dims", "8:1,8:1",
         "--samples", "20", "--seed", "3"],
    )
    assert code == 0
    lines = out.splitlines()
    assert lines[3] == ",".join(GROUP_COLUMNS)
    rows = data_rows(out)
    assert len(rows) == 4  # theta + alpha per spectrum
    assert rows[0].startswith("4:1;4:1,haar,")
    assert rows[2].startswith("8:1;8:1,haar,")
    assert "theta-variance ratio" in err
    assert "--dims 4:1,4:1 --dims 8:1,8:1" in lines[1]


def test_group_scan_su2_selection(capsys):
    code, out, _ = run_cli(
        capsys,
        ["group-scan", "--su2-N", "6", "--select-j", "0,1", "--mode", "ansatz",
         "--depth", "2", "--samples", "4", "--format", "json"],
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["records"][0]["dims"] == "7:1;5:5"
    assert payload["records"][0]["d_max"] == 25
    assert {r["probe"] for r in payload["records"]} == {"theta", "alpha"}
    jsonschema = pytest.importorskip("jsonschema")
    jsonschema.validate(payload, load_schema("group_scan.schema.json"))


def test_group_scan_single_block_has_no_alpha_row(capsys):
    code, out, _ = run_cli(
        capsys, ["group-scan", "--dims", "4:1", "--samples", "8"]
    )
    assert code == 0
    rows = data_rows(out)
    assert len(rows) == 1
    assert ",theta," in rows[0]


def test_group_scan_usage_errors(capsys):
    assert run_cli(capsys, ["group-scan", "--samples", "4"])[0] == 2
    assert (
        run_cli(
            capsys,
            ["group-scan", "--dims", "4:1", "--su2-N", "4", "--samples", "4"],
        )[0]
        == 2
    )
    assert run_cli(capsys, ["group-scan", "--select-j", "0", "--samples", "4"])[0] == 2
    # haar mode caps the dense block dimension
    assert (
        run_cli(capsys, ["group-scan", "--dims", "512:1", "--samples", "4"])[0] == 2
    )
    with pytest.raises(SystemExit) as exc:
        main(["group-scan", "--dims", "16,1"])
    assert exc.value.code == 2
    capsys.readouterr()


# ---------------------------------------------------------------------------
# mnist


def pack_images(images: np.ndarray) -> bytes:
    count, rows, cols = images.shape
    return struct.pack(">IIII", 0x803, count, rows, cols) + images.astype(
        np.uint8
    ).tobytes()


def pack_labels(labels) -> bytes:
    labels = np.asarray(labels, dtype=np.uint8)
    return struct.pack(">II", 0x801, labels.size) + labels.tobytes()


def write_synthetic_idx(directory, per_digit_train=6, per_digit_test=3, seed=0):
    rng = np.random.default_rng(seed)

    def split(per_digit):
        images, labels = [], []
        for digit in range(4):
            for _ in range(per_digit):
                images.append(rng.integers(1, 256, size=(28, 28), dtype=np.uint8))
                labels.append(digit)
        return np.stack(images), np.asarray(labels, dtype=np.uint8)

    train_images, train_labels = split(per_digit_train)
    test_images, test_labels = split(per_digit_test)
    (directory / "train-images-idx3-ubyte").write_bytes(pack_images(train_images))
    (directory / "train-labels-idx1-ubyte").write_bytes(pack_labels(train_labels))
    (directory / "t10k-images-idx3-ubyte.gz").write_bytes(
        gzip.compress(pack_images(test_images))
    )
    (directory / "t10k-labels-idx1-ubyte.gz").write_bytes(
        gzip.compress(pack_labels(test_labels))
    )


def test_mnist_missing_data_prints_fetch_instructions(tmp_path, capsys):
    code, _, err = run_cli(capsys, ["mnist", "--data-dir", str(tmp_path)])
    assert code == 2
    assert "train-images-idx3-ubyte" in err
    assert "https://" in err
    assert str(tmp_path) in err


def test_mnist_env_var_sets_data_dir(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("LCQNN_DATA_DIR", str(tmp_path / "nowhere"))
    code, _, err = run_cli(capsys, ["mnist"])
    assert code == 2
    assert str(tmp_path / "nowhere") in err


def test_mnist_malformed_idx_exits_2(tmp_path, capsys):
    for stem in (
        "train-images-idx3-ubyte",
        "train-labels-idx1-ubyte",
        "t10k-images-idx3-ubyte",
        "t10k-labels-idx1-ubyte",
    ):
        (tmp_path / stem).write_bytes(struct.pack(">II", 0xDEAD, 1))
    code, _, err = run_cli(capsys, ["mnist", "--data-dir", str(tmp_path)])
    assert code == 2
    assert "magic" in err


def test_mnist_smoke_grid(tmp_path, capsys):
    write_synthetic_idx(tmp_path)
    out_path = tmp_path / "grid.csv"
    code, _, err = run_cli(
        capsys,
        ["mnist", "--data-dir", str(tmp_path), "--L-list", "1", "--D-list", "1",
         "--runs", "1", "--epochs", "1", "--batch", "8",
         "--train-limit", "16", "--test-limit", "8", "--out", str(out_path)],
    )
    assert code == 0
    text = out_path.read_text()
    lines = text.splitlines()
    assert lines[3] == "L,D,run,seed,epoch_loss_1,test_accuracy"
    rows = data_rows(text)
    assert len(rows) == 1
    assert rows[0].startswith("1,1,0,42,")
    assert "accuracy" in err


def test_mnist_json_validates_and_reruns_identically(tmp_path, capsys):
    write_synthetic_idx(tmp_path)
    argv = [
        "mnist", "--data-dir", str(tmp_path), "--L-list", "1,2", "--D-list", "1",
        "--runs", "2", "--epochs", "1", "--batch", "8",
        "--train-limit", "8", "--test-limit", "4", "--format", "json",
    ]
    code, first, _ = run_cli(capsys, argv)
    assert code == 0
    code, second, _ = run_cli(capsys, argv)
    assert code == 0
    assert first == second
    payload = json.loads(first)
    assert len(payload["records"]) == 4  # 2 cells x 2 runs
    jsonschema = pytest.importorskip("jsonschema")
    jsonschema.validate(payload, load_schema("mnist.schema.json"))
    assert len(payload["summary"]["cells"]) == 2
    assert payload["summary"]["comparisons"]  # L trend comparison present


# ---------------------------------------------------------------------------
# grad-check


def test_grad_check_passes(capsys):
    code, out, _ = run_cli(capsys, ["grad-check", "--probes", "5", "--seed", "3"])
    assert code == 0
    assert "5/5 probes within" in out
    assert "worst:" in out


def test_grad_check_negative_control(capsys):
    code, out, _ = run_cli(
        capsys,
        ["grad-check", "--probes", "5", "--seed", "3", "--shift-scale", "1.25"],
    )
    assert code == 1
    assert "worst offender" in out


def test_grad_check_zero_probes(capsys):
    assert run_cli(capsys, ["grad-check", "--probes", "0"])[0] == 2


# ---------------------------------------------------------------------------
# cross-cutting invariants


def test_thread_count_does_not_change_output(tmp_path, capsys):
    base = ["variance-scan", "--n-list", "3", "--k-list", "2", "--samples", "50",
            "--seed", "11"]
    one = tmp_path / "t1.csv"
    four = tmp_path / "t4.csv"
    assert main(base + ["--threads", "1", "--out", str(one)]) == 0
    assert main(base + ["--threads", "4", "--out", str(four)]) == 0
    capsys.readouterr()
    # identical data rows; headers differ only in the --threads flag they echo
    assert data_rows(one.read_text()) == data_rows(four.read_text())


def test_header_command_reproduces_output(tmp_path, capsys):
    argv = ["variance-layers", "--L-list", "1,2", "--n", "3", "--k", "2",
            "--samples", "25", "--seed", "9"]
    code, out, _ = run_cli(capsys, argv)
    assert code == 0
    command_line = next(
        ln for ln in out.splitlines() if ln.startswith("# command: ")
    )
    replay_argv = shlex.split(command_line.removeprefix("# command: "))[1:]
    code, replay, _ = run_cli(capsys, replay_argv)
    assert code == 0
    assert replay == out

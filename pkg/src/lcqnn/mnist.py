"""Digit-classification pipeline: IDX ingestion, 4x4 average-pool
preprocessing, amplitude encoding, and the accuracy grid over branch count
and depth.

The classifier is the combination model with m=2 control and n=4 working
qubits; the four class logits are the Pauli-Z expectations of the working
qubits and training minimizes softmax cross-entropy with minibatch Adam.
"""

from __future__ import annotations

import gzip
import math
import os
import struct
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .errors import EncodingError, IdxFormatError, TrainingError
from .gradients import grad_full, num_params
from .model import LcqnnModel, branch_gates, coeff_probabilities, make_model
from .sim import (
    PauliZSum,
    RngStream,
    StateVector,
    _apply_matrix,
    amplitude_encode,
    gate_matrix,
)

# ---------------------------------------------------------------------------
# IDX ingestion

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

#: canonical file stems; a trailing ".gz" is also accepted on disk
DATA_FILE_STEMS = (
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
)

_DOWNLOAD_BASE = "https://ossci-datasets.s3.amazonaws.com/mnist"

DATA_DIR_ENV = "LCQNN_DATA_DIR"


def default_data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, "data"))


def parse_idx(source) -> np.ndarray:
    """Decode an IDX payload (path or raw bytes; gzip detected by magic).

    Images (magic``0x803``) come back as a (count, rows, cols) uint8 array,
    labels (magic ``0x801``) as a (count,) uint8 array.
    """
    if isinstance(source, (str, Path)):
        data = Path(source).read_bytes()
    else:
        data = bytes(source)
    if data[:2] == b"\x1f\x8b":
        data = gzip.decompress(data)
    if len(data) < 4:
        raise IdxFormatError(f"file too short for an IDX header ({len(data)} bytes)")
    (magic,) = struct.unpack(">I", data[:4])
    if magic == IMAGES_MAGIC:
        ndim = 3
    elif magic == LABELS_MAGIC:
        ndim = 1
    else:
        raise IdxFormatError(f"unrecognized IDX magic 0x{magic:08x}")
    header_end = 4 + 4 * ndim
    if len(data) < header_end:
        raise IdxFormatError("truncated IDX dimension header")
    dims = struct.unpack(f">{ndim}I", data[4:header_end])
    expected = math.prod(dims)
    payload = data[header_end:]
    if len(payload) != expected:
        raise IdxFormatError(
            f"IDX payload holds {len(payload)} bytes, header promises {expected}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def preprocess(image) -> np.ndarray:
    """28x28 bytes -> unit-norm 16-vector.

    Average-pool over the sixteen aligned 7x7 blocks, scale into [0, 1],
    flatten row-major, and l2-normalize.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.shape != (28, 28):
        raise EncodingError(f"expected a 28x28 image, got shape {img.shape}")
    pooled = img.reshape(4, 7, 4, 7).mean(axis=(1, 3)) / 255.0
    flat = pooled.reshape(16)
    norm = float(np.linalg.norm(flat))
    if norm <= 1e-12:
        raise EncodingError("blank image cannot be amplitude encoded")
    return flat / norm


@dataclass(frozen=True, eq=False)
class MnistExample:
    pixels: np.ndarray  # 16 entries, unit norm
    label: int  # 0..3


def load_examples(images: np.ndarray, labels: np.ndarray, limit: int) -> list[MnistExample]:
    """Filter to digits 0-3 and keep the first ``limit // 4`` of each class.

    Blank images are dropped with a warning rather than aborting the load.
    """
    if images.ndim != 3 or images.shape[1:] != (28, 28):
        raise IdxFormatError(f"expected (count, 28, 28) images, got {images.shape}")
    if images.shape[0] != labels.shape[0]:
        raise IdxFormatError(
            f"{images.shape[0]} images but {labels.shape[0]} labels"
        )
    per_class = limit // 4
    counts = [0, 0, 0, 0]
    out: list[MnistExample] = []
    for i in range(images.shape[0]):
        label = int(labels[i])
        if label > 3 or counts[label] >= per_class:
            continue
        try:
            pixels = preprocess(images[i])
        except EncodingError:
            warnings.warn(f"dropping blank image at index {i}")
            continue
        out.append(MnistExample(pixels, label))
        counts[label] += 1
        if len(out) == 4 * per_class:
            break
    if not out:
        raise TrainingError("no usable examples after filtering to digits 0-3")
    return out


def find_data_file(data_dir, stem: str) -> Path:
    base = Path(data_dir)
    for name in (stem, stem + ".gz"):
        candidate = base / name
        if candidate.is_file():
            return candidate
    raise FileNotFoundError(f"{stem}[.gz] not found under {base}")


def data_files_present(data_dir) -> bool:
    try:
        for stem in DATA_FILE_STEMS:
            find_data_file(data_dir, stem)
    except FileNotFoundError:
        return False
    return True


def fetch_instructions(data_dir) -> str:
    lines = [
        f"MNIST IDX files were not found under '{data_dir}'.",
        "Download the four files into that directory:",
    ]
    lines += [f"  {_DOWNLOAD_BASE}/{stem}.gz" for stem in DATA_FILE_STEMS]
    lines += [
        "For example:",
        f"  mkdir -p '{data_dir}' && cd '{data_dir}'",
        f"  for f in {' '.join(DATA_FILE_STEMS)}; do curl -fsSLO {_DOWNLOAD_BASE}/$f.gz; done",
        "Gzipped files are read directly; gunzip is optional.",
        f"Set ${DATA_DIR_ENV} or pass --data-dir to use another location.",
    ]
    return "\n".join(lines)


def load_dataset(
    data_dir, train_limit: int = 4000, test_limit: int = 1000
) -> tuple[list[MnistExample], list[MnistExample]]:
    """Load and preprocess both splits, stratified to digits 0-3."""
    train = load_examples(
        parse_idx(find_data_file(data_dir, DATA_FILE_STEMS[0])),
        parse_idx(find_data_file(data_dir, DATA_FILE_STEMS[1])),
        train_limit,
    )
    test = load_examples(
        parse_idx(find_data_file(data_dir, DATA_FILE_STEMS[2])),
        parse_idx(find_data_file(data_dir, DATA_FILE_STEMS[3])),
        test_limit,
    )
    return train, test


# ---------------------------------------------------------------------------
# classifier


@lru_cache(maxsize=None)
def _z_diagonals(num_qubits: int) -> np.ndarray:
    """Rows: the diagonal of Z on each working qubit."""
    return np.stack(
        [
            PauliZSum([(1.0, (q,))], num_qubits=num_qubits).diagonal()
            for q in range(num_qubits)
        ]
    )


def working_z_expectations(
    model: LcqnnModel, alpha, theta, input_state: StateVector
) -> np.ndarray:
    """Per-working-qubit <Z> of the forward state, via the branch mixture."""
    n = model.num_working
    theta = np.asarray(theta, dtype=np.float64).ravel()
    probs = coeff_probabilities(model.coefficient_layer(alpha))
    gates = branch_gates(model)
    stride = model.branch_param_count
    diags = _z_diagonals(n)
    out = np.zeros(n)
    for j in range(model.branch_count):
        psi = input_state.amps.reshape((2,) * n)
        for g in gates:
            psi = _apply_matrix(
                psi, gate_matrix(g, theta[j * stride : (j + 1) * stride]), g.qubits
            )
        out += probs[j] * (diags @ (np.abs(psi.reshape(-1)) ** 2))
    return out


def classify_logits(model: LcqnnModel, alpha, theta, pixels) -> np.ndarray:
    """Amplitude-encode the pixels and return the four working-qubit <Z>."""
    return working_z_expectations(model, alpha, theta, amplitude_encode(pixels))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = np.exp(logits - np.max(logits))
    return shifted / shifted.sum()


def cross_entropy(logits: np.ndarray, label: int) -> float:
    shifted = logits - np.max(logits)
    return float(np.log(np.exp(shifted).sum()) - shifted[label])


def example_loss_and_grad(
    model: LcqnnModel, flat_params: np.ndarray, example: MnistExample
) -> tuple[float, np.ndarray]:
    """Cross-entropy loss and its full parameter gradient for one example.

    The chain rule folds the softmax residuals into one effective observable
    sum_c (softmax_c - onehot_c) Z_c, so a single analytic gradient pass
    covers all four logits.
    """
    state = amplitude_encode(example.pixels)
    alpha = flat_params[: model.num_alpha]
    theta = flat_params[model.num_alpha :]
    logits = working_z_expectations(model, alpha, theta, state)
    probs = softmax(logits)
    loss = cross_entropy(logits, example.label)
    residual = probs.copy()
    residual[example.label] -= 1.0
    effective = PauliZSum(
        [(float(residual[c]), (c,)) for c in range(model.num_working)],
        num_qubits=model.num_working,
    )
    grad = grad_full(model, flat_params, effective, input_state=state)
    return loss, grad


def evaluate_accuracy(
    model: LcqnnModel, flat_params: np.ndarray, examples
) -> float:
    alpha = flat_params[: model.num_alpha]
    theta = flat_params[model.num_alpha :]
    correct = 0
    for ex in examples:
        logits = working_z_expectations(
            model, alpha, theta, amplitude_encode(ex.pixels)
        )
        correct += int(np.argmax(logits)) == ex.label
    return correct / len(examples)


# ---------------------------------------------------------------------------
# training


@dataclass(frozen=True)
class TrainConfig:
    L: int
    D: int
    m: int = 2
    n: int = 4
    k: int = 2
    learning_rate: float = 0.008
    epochs: int = 2
    batch_size: int = 32
    runs: int = 5
    train_limit: int = 4000
    test_limit: int = 1000
    root_seed: int = 42
    optimizer: str = "adam"

    def make_model(self) -> LcqnnModel:
        return make_model(self.m, self.n, self.L, self.k, self.D)


@dataclass
class RunMetrics:
    run_index: int
    run_seed: int
    epoch_losses: list[float]
    test_accuracy: float


class AdamOptimizer:
    """Standard Adam with bias correction, minimizing the loss."""

    def __init__(self, size: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class SgdOptimizer:
    """Plain minibatch gradient descent (available behind a flag)."""

    def __init__(self, size: int, lr: float):
        self.lr = lr

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return params - self.lr * grad


def _make_optimizer(name: str, size: int, lr: float):
    if name == "adam":
        return AdamOptimizer(size, lr)
    if name == "sgd":
        return SgdOptimizer(size, lr)
    raise TrainingError(f"unknown optimizer {name!r} (expected 'adam' or 'sgd')")


def train_single_run(
    config: TrainConfig, train_set, test_set, run_index: int
) -> RunMetrics:
    """One training run: init from the run's seed stream, minibatch descent,
    then held-out accuracy.  Batch gradients accumulate in example order, so
    a rerun reproduces the loss curve bit for bit."""
    if not train_set or not test_set:
        raise TrainingError("empty training or test set")
    model = config.make_model()
    stream = RngStream(config.root_seed, run_index)
    params = stream.component_generator(0).uniform(
        0.0, 2.0 * math.pi, num_params(model)
    )
    shuffle = stream.component_generator(1)
    optimizer = _make_optimizer(
        config.optimizer, num_params(model), config.learning_rate
    )
    if config.batch_size < 1 or config.epochs < 1:
        raise TrainingError("batch_size and epochs must be >= 1")

    epoch_losses = []
    for epoch in range(config.epochs):
        order = shuffle.permutation(len(train_set))
        loss_sum = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            grad_sum = np.zeros(num_params(model))
            for idx in batch:
                loss, grad = example_loss_and_grad(model, params, train_set[idx])
                loss_sum += loss
                grad_sum += grad
            if not math.isfinite(loss_sum):
                raise TrainingError(
                    f"non-finite loss in run {run_index}, epoch {epoch}, "
                    f"batch starting at {start}"
                )
            params = optimizer.step(params, grad_sum / len(batch))
            if not np.all(np.isfinite(params)):
                raise TrainingError(
                    f"non-finite parameters after the update in run {run_index}, "
                    f"epoch {epoch}, batch starting at {start}"
                )
        epoch_losses.append(loss_sum / len(order))
    accuracy = evaluate_accuracy(model, params, test_set)
    return RunMetrics(
        run_index=run_index,
        run_seed=config.root_seed,
        epoch_losses=epoch_losses,
        test_accuracy=accuracy,
    )


def train(config: TrainConfig, train_set, test_set) -> list[RunMetrics]:
    """All runs of one configuration, seeded independently per run."""
    return [
        train_single_run(config, train_set, test_set, run)
        for run in range(config.runs)
    ]


# ---------------------------------------------------------------------------
# accuracy grid


@dataclass
class GridCell:
    L: int
    D: int
    metrics: list[RunMetrics] = field(default_factory=list)

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean([m.test_accuracy for m in self.metrics]))

    @property
    def std_accuracy(self) -> float:
        accs = [m.test_accuracy for m in self.metrics]
        return float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0


def run_accuracy_grid(
    train_set,
    test_set,
    L_list=(1, 2, 4),
    D_list=(1, 2, 4, 8),
    runs: int = 5,
    root_seed: int = 42,
    *,
    learning_rate: float = 0.008,
    epochs: int = 2,
    batch_size: int = 32,
    optimizer: str = "adam",
    progress=None,
) -> list[GridCell]:
    """Train every (L, D) cell and collect per-run metrics."""
    cells = []
    for L in L_list:
        for D in D_list:
            config = TrainConfig(
                L=L,
                D=D,
                learning_rate=learning_rate,
                epochs=epochs,
                batch_size=batch_size,
                runs=runs,
                root_seed=root_seed,
                optimizer=optimizer,
            )
            if progress is not None:
                progress(f"training L={L} D={D} ({runs} run(s))")
            cells.append(GridCell(L=L, D=D, metrics=train(config, train_set, test_set)))
    return cells

"""Statevector simulation and trainability experiments for linear-combination QNNs."""

__version__ = "0.1.0"

from .errors import (
    ArchitectureError,
    CapacityError,
    EncodingError,
    IdxFormatError,
    LcqnnError,
    TrainingError,
)
from .sim import (
    BlockDiagonal,
    GateOp,
    Observable,
    PauliZSum,
    RngStream,
    StateVector,
    amplitude_encode,
    apply_controlled_subcircuit,
    apply_gate,
    cnot,
    expectation,
    haar_unitary,
    init_zero,
    ry,
    ry_matrix,
    u3,
    u3_matrix,
)
from .gradients import (
    GradStats,
    alpha_probe_param,
    cost_flat,
    default_probe_param,
    estimate_grad_stats,
    finite_diff_grad,
    grad_full,
    join_params,
    num_params,
    param_shift_grad,
    sample_param_draw,
    split_params,
)
from .model import (
    CoefficientLayer,
    ControlledBlock,
    LcqnnModel,
    LocalBlockSpec,
    apply_coefficient_layer,
    branch_block_probabilities,
    branch_expectations,
    branch_gates,
    build_coefficient_circuit,
    coeff_probabilities,
    coeff_probability_gradients,
    cost,
    default_groups,
    entangling_gates,
    lcqnn_forward,
    make_model,
    model_from_dict,
    model_to_dict,
    theta_index,
    theta_layout_size,
)
from .experiments import (
    BlockSpectrum,
    GroupScanResult,
    ScanRecord,
    balanced_z_diag,
    fit_log2_slope,
    group_block_variance,
    run_variance_point,
    scan_variance_global,
    scan_variance_vs_L,
    scan_variance_vs_n,
    select_blocks,
    su2_block_dims,
    z0_observable,
)
from .mnist import (
    GridCell,
    MnistExample,
    RunMetrics,
    TrainConfig,
    classify_logits,
    evaluate_accuracy,
    example_loss_and_grad,
    fetch_instructions,
    load_dataset,
    parse_idx,
    preprocess,
    run_accuracy_grid,
    train,
    train_single_run,
)

__all__ = [name for name in dir() if not name.startswith("_")]

"""Texture anomaly detection with complex-wavelet structural similarity."""

from ._texanom import (
    CalibrationError,
    ConfigError,
    ContractError,
    DegenerateInputError,
    DomainError,
    EvaluationError,
    FormatError,
    IoError,
    Model,
    TrainingError,
    adjoint,
    anomaly_map,
    auc,
    binarize_and_erode,
    calibrate_threshold,
    connected_components,
    cwssim_loss,
    cwssim_loss_grad,
    cwssim_window,
    decompose,
    default_param_count,
    defect_coverage,
    empirical_fpr,
    init_model,
    load_image,
    load_mask,
    load_model,
    mse_loss,
    partial_auc_normalized,
    reconstruct_full,
    roc_curve,
    save_image,
    ssim_index,
    subband_count,
    train,
)

__version__ = "0.1.0"

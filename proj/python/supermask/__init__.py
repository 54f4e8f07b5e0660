"""Score-based subnetworks of frozen random networks.

Thin wrapper over the C++ core. Arrays are numpy; masks are uint8 0/1
vectors in flat weight order.
"""

from ._core import (
    ConfigError,
    Error,
    FormatError,
    InvalidArgument,
    ShapeError,
    compare_checkpoints,
    compute_mask,
    frobenius_split,
    kept_count,
    kept_params,
    load_checkpoint,
    mask_similarity,
    norm_report,
    normalize_config,
    parameter_count,
    random_mask_ji_baseline,
    random_mask_ji_exact,
    recycle_weights,
    sha256_hex,
    synth_blobs,
    train,
)

__all__ = [
    "ConfigError",
    "Error",
    "FormatError",
    "InvalidArgument",
    "ShapeError",
    "compare_checkpoints",
    "compute_mask",
    "frobenius_split",
    "kept_count",
    "kept_params",
    "load_checkpoint",
    "mask_similarity",
    "norm_report",
    "normalize_config",
    "parameter_count",
    "random_mask_ji_baseline",
    "random_mask_ji_exact",
    "recycle_weights",
    "sha256_hex",
    "synth_blobs",
    "train",
]

"""Python bindings for the mrfault fault-injection engine."""

from ._core import (
    Accelerator,
    ConfigError,
    ContractError,
    Dataset,
    DomainError,
    FormatError,
    Model,
    attacked_accuracy,
    fault_free_accuracy,
    load_idx,
    load_model,
    recovery,
    reference_forward,
    resonant_wavelength_nm,
    run_campaign,
    select_actuation_targets,
    snap_to_channel,
    thermal_shift_nm,
    validate_config,
)

__all__ = [
    "Accelerator",
    "ConfigError",
    "ContractError",
    "Dataset",
    "DomainError",
    "FormatError",
    "Model",
    "attacked_accuracy",
    "fault_free_accuracy",
    "load_idx",
    "load_model",
    "recovery",
    "reference_forward",
    "resonant_wavelength_nm",
    "run_campaign",
    "select_actuation_targets",
    "snap_to_channel",
    "thermal_shift_nm",
    "validate_config",
]

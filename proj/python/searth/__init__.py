"""Earth-topology windowed-attention forecasting toolkit."""

from _searth import (
    ConfigError,
    IoError,
    Model,
    NumericError,
    attention_mask,
    gen_synthetic,
    grid_latitudes,
    latitude_weights,
    normalized_diff,
    regrid_quarter_to_one,
    skillful_lead_time,
    weighted_mae,
)

__all__ = [
    "ConfigError",
    "IoError",
    "Model",
    "NumericError",
    "attention_mask",
    "gen_synthetic",
    "grid_latitudes",
    "latitude_weights",
    "normalized_diff",
    "regrid_quarter_to_one",
    "skillful_lead_time",
    "weighted_mae",
]

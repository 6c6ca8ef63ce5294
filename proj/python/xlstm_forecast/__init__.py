"""Time series forecasting with sLSTM / mLSTM recurrent cells."""

from ._core import (
    Forecaster,
    decompose,
    gradcheck,
    instance_denormalize,
    instance_normalize,
    select_backend,
    sigmoid,
    synth_sine_trend,
)

__all__ = [
    "Forecaster",
    "decompose",
    "gradcheck",
    "instance_denormalize",
    "instance_normalize",
    "select_backend",
    "sigmoid",
    "synth_sine_trend",
]

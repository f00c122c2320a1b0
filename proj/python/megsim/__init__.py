"""Mobile edge generation simulator."""

from ._core import (
    Config,
    ConfigError,
    FrameError,
    decode_frame,
    encode_frame,
    evaluate,
    fading_trace,
    frechet_distance,
    power,
    psnr,
    sweep,
    table,
    train,
)

__all__ = [
    "Config",
    "ConfigError",
    "FrameError",
    "decode_frame",
    "encode_frame",
    "evaluate",
    "fading_trace",
    "frechet_distance",
    "power",
    "psnr",
    "sweep",
    "table",
    "train",
]

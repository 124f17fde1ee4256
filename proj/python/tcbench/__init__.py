"""Task-aware raster compression bench.

Images are numpy arrays of shape (H, W, C), float32 in [0, 1]; masks are
(H, W) uint8 arrays of 0/1 labels; bitstreams are TCB1 ``bytes``.
"""

from ._tcbench import (
    ConfigError,
    DivergenceError,
    Error,
    FormatError,
    LearnedCodec,
    bits_per_pixel,
    build_cdf,
    decode,
    discretized_gaussian_pmf,
    encode_classic,
    f1_scores,
    mixture_pmf,
    normalize_global_max,
    payload_bits,
    psnr,
    rc_decode,
    rc_encode,
    rd_sweep,
    read_dataset,
    synth,
    train_compressor,
    write_dataset,
)

__all__ = [
    "ConfigError",
    "DivergenceError",
    "Error",
    "FormatError",
    "LearnedCodec",
    "bits_per_pixel",
    "build_cdf",
    "decode",
    "discretized_gaussian_pmf",
    "encode_classic",
    "f1_scores",
    "mixture_pmf",
    "normalize_global_max",
    "payload_bits",
    "psnr",
    "rc_decode",
    "rc_encode",
    "rd_sweep",
    "read_dataset",
    "synth",
    "train_compressor",
    "write_dataset",
]

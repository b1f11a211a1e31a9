"""Decoupled momentum optimization: DCT compaction, sync payloads and a training harness."""

from ._core import (
    Components,
    ConfigError,
    Error,
    GeometryMismatch,
    InvalidK,
    KMismatch,
    MalformedPayload,
    NonDivisible,
    ShapeMismatch,
    TransportError,
    UsageError,
    bench_compaction,
    build_basis,
    bytes_per_step,
    clamp_chunk_shape,
    dct_forward,
    dct_inverse,
    deserialize,
    extract_fast_components,
    merge_and_reconstruct,
    run_experiment,
    serialize,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"

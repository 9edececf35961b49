"""Uniform symmetric quantization primitives.

A value ``v`` lands in bin ``clamp(round(v / scale), -2**(b-1), 2**(b-1)-1)``.
Default rounding is half away from zero; ``rounding="half-even"`` switches to
banker's rounding for bit-compatibility with frameworks that round that way
(ties at exact .5 quotients are measure-zero for real checkpoints).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllZeroTensor, NonPositiveScale

SUPPORTED_BITS = (2, 4, 8)
ROUND_HALF_AWAY = "half-away"
ROUND_HALF_EVEN = "half-even"


def bin_range(bits: int) -> tuple[int, int]:
    """Inclusive [min, max] bin for a signed b-bit code."""
    return -(2 ** (bits - 1)), 2 ** (bits - 1) - 1


@dataclass(eq=False)
class QuantizedTensor:
    bins: np.ndarray  # int64 codes
    precision: int

    @property
    def bin_range(self) -> tuple[int, int]:
        return bin_range(self.precision)

    def __len__(self) -> int:
        return len(self.bins)


def _check_bits(bits: int) -> None:
    if bits not in SUPPORTED_BITS:
        raise ValueError(f"unsupported precision {bits}; expected one of {SUPPORTED_BITS}")


def quantize_tensor(values, scale: float, bits: int, rounding: str = ROUND_HALF_AWAY) -> QuantizedTensor:
    """Map real values onto the signed b-bit code lattice with step ``scale``."""
    _check_bits(bits)
    if not scale > 0:
        raise NonPositiveScale(f"scale must be > 0, got {scale}")
    if rounding not in (ROUND_HALF_AWAY, ROUND_HALF_EVEN):
        raise ValueError(f"unknown rounding mode {rounding!r}")
    q = np.asarray(values, dtype=np.float64) / float(scale)
    if rounding == ROUND_HALF_AWAY:
        r = np.copysign(np.floor(np.abs(q) + 0.5), q)
    else:
        r = np.rint(q)
    lo, hi = bin_range(bits)
    bins = np.clip(r, lo, hi).astype(np.int64)
    return QuantizedTensor(bins=bins, precision=bits)


def dequantize(qt: QuantizedTensor, scale: float) -> np.ndarray:
    if not scale > 0:
        raise NonPositiveScale(f"scale must be > 0, got {scale}")
    return qt.bins.astype(np.float64) * float(scale)


def rescale_step(step: float) -> float:
    """Step size for a layer dropped from 4-bit to 2-bit: 4x the learned step."""
    if not step > 0:
        raise NonPositiveScale(f"step must be > 0, got {step}")
    return 4.0 * step


def hawq_init_step(values, bits: int) -> float:
    """Initial step size from the symmetrized weight range: the range
    +-max(|min(W)|, |max(W)|) spread over the signed b-bit code lattice."""
    _check_bits(bits)
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise AllZeroTensor("cannot derive a step size from an empty tensor")
    extent = max(abs(float(arr.min())), abs(float(arr.max())))
    if extent == 0.0:
        raise AllZeroTensor("cannot derive a step size from an all-zero tensor")
    return extent / 2 ** (bits - 1)

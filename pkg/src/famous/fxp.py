"""Deterministic fixed-point arithmetic for the 8-bit accelerator datapath.

All tensors on the datapath use a uniform signed Q0.7 format (raw int8,
real value = raw * 2^-7, range [-1, 1)).  Dot products accumulate in a
signed 32-bit register with 14 fractional bits (the exact format of an
8x8 product), and are narrowed back to 8 bits exactly once per output
element.  Rounding is round-half-to-even everywhere; overflow saturates,
it never wraps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np


class FxpError(Exception):
    """Base class for fixed-point arithmetic errors."""


class NotANumber(FxpError):
    """Raised when a NaN reaches the quantizer."""


class FormatMismatch(FxpError):
    """Raised when operand formats are inconsistent."""


@dataclass(frozen=True)
class QFormat:
    """Fixed-point format: `word_bits` total (incl. sign), `frac_bits` fractional."""

    word_bits: int
    frac_bits: int
    signed: bool = True

    def __post_init__(self) -> None:
        if self.word_bits not in (8, 16, 32):
            raise ValueError(f"word_bits must be 8, 16 or 32, got {self.word_bits}")
        max_frac = self.word_bits - (1 if self.signed else 0)
        if not 0 <= self.frac_bits <= max_frac:
            raise ValueError(
                f"frac_bits must be in [0, {max_frac}] for this format, got {self.frac_bits}"
            )

    @property
    def min_raw(self) -> int:
        return -(1 << (self.word_bits - 1)) if self.signed else 0

    @property
    def max_raw(self) -> int:
        return (1 << (self.word_bits - 1)) - 1 if self.signed else (1 << self.word_bits) - 1

    @property
    def lsb(self) -> Fraction:
        """Value of one raw step."""
        return Fraction(1, 1 << self.frac_bits)

    def contains_raw(self, raw: int) -> bool:
        return self.min_raw <= raw <= self.max_raw


# Datapath formats: 8-bit Q0.7 operands, 32-bit Q17.14 accumulator.
DATA_FMT = QFormat(word_bits=8, frac_bits=7, signed=True)
ACC_FMT = QFormat(word_bits=32, frac_bits=14, signed=True)


def acc_format_for(fmt: QFormat) -> QFormat:
    """Accumulator format for products of two `fmt` operands."""
    return QFormat(word_bits=32, frac_bits=2 * fmt.frac_bits, signed=True)


@dataclass(frozen=True)
class FxpValue:
    """A single fixed-point scalar: raw integer code plus its format."""

    raw: int
    fmt: QFormat

    def __post_init__(self) -> None:
        if not self.fmt.contains_raw(self.raw):
            raise ValueError(f"raw {self.raw} outside {self.fmt}")

    @property
    def value(self) -> float:
        return self.raw * 2.0 ** (-self.fmt.frac_bits)

    @property
    def exact(self) -> Fraction:
        return Fraction(self.raw, 1 << self.fmt.frac_bits)


def rhe_div(num: int, den: int) -> int:
    """Round num/den to the nearest integer, ties to even.  den must be positive.

    Works for negative numerators: Python's divmod keeps 0 <= remainder < den,
    so the nearest/tie logic is sign independent.
    """
    if den <= 0:
        raise ValueError("denominator must be positive")
    q, r = divmod(num, den)
    twice = 2 * r
    if twice > den or (twice == den and q & 1):
        return q + 1
    return q


def saturate(raw: int, fmt: QFormat) -> int:
    if raw > fmt.max_raw:
        return fmt.max_raw
    if raw < fmt.min_raw:
        return fmt.min_raw
    return raw


def quantize(x: float | int | Fraction, fmt: QFormat) -> FxpValue:
    """Quantize a real number: round-half-to-even to the raw grid, then saturate."""
    if isinstance(x, float):
        if math.isnan(x):
            raise NotANumber("cannot quantize NaN")
        if math.isinf(x):
            return FxpValue(fmt.max_raw if x > 0 else fmt.min_raw, fmt)
        raw = round(x * (1 << fmt.frac_bits))
    elif isinstance(x, Fraction):
        raw = round(x * (1 << fmt.frac_bits))
    else:
        raw = int(x) << fmt.frac_bits
    return FxpValue(saturate(raw, fmt), fmt)


def dequantize(v: FxpValue) -> float:
    return v.value


def requantize(v: FxpValue, out_fmt: QFormat) -> FxpValue:
    """Narrow (or widen) to `out_fmt`: arithmetic shift with round-half-to-even,
    then saturate."""
    shift = v.fmt.frac_bits - out_fmt.frac_bits
    if shift >= 0:
        raw = rhe_div(v.raw, 1 << shift) if shift else v.raw
    else:
        raw = v.raw << -shift
    return FxpValue(saturate(raw, out_fmt), out_fmt)


def mac(acc: FxpValue, a: FxpValue, b: FxpValue) -> FxpValue:
    """One multiply-accumulate step: acc + a*b, exact in the accumulator format.

    The product of two values with f fractional bits has exactly 2f fractional
    bits, so the add is a plain integer add.  Overflow saturates; tensor-level
    callers track the sticky saturation flag (see engine.matmul_wide).
    """
    if a.fmt != b.fmt:
        raise FormatMismatch(f"operand formats differ: {a.fmt} vs {b.fmt}")
    if acc.fmt.word_bits != 32 or acc.fmt.frac_bits != 2 * a.fmt.frac_bits:
        raise FormatMismatch(
            f"accumulator format {acc.fmt} does not match operands with "
            f"{a.fmt.frac_bits} fractional bits"
        )
    return FxpValue(saturate(acc.raw + a.raw * b.raw, acc.fmt), acc.fmt)


_DTYPES = {
    (8, True): "<i1",
    (8, False): "<u1",
    (16, True): "<i2",
    (16, False): "<u2",
    (32, True): "<i4",
    (32, False): "<u4",
}


def storage_dtype(fmt: QFormat) -> str:
    """Little-endian numpy dtype string used when serializing raw codes."""
    return _DTYPES[(fmt.word_bits, fmt.signed)]


@dataclass(eq=False)
class QTensor:
    """2-D matrix of raw fixed-point codes.

    `data` is a read-only (rows, cols) int64 array of raw codes; int64 keeps
    slicing and concatenation free of numpy overflow traps regardless of the
    declared word width.
    """

    rows: int
    cols: int
    data: np.ndarray
    fmt: QFormat

    def __post_init__(self) -> None:
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError("QTensor dimensions must be positive")
        arr = np.asarray(self.data, dtype=np.int64)
        if arr.shape != (self.rows, self.cols):
            raise ValueError(f"data shape {arr.shape} != ({self.rows}, {self.cols})")
        if arr.size and (arr.max() > self.fmt.max_raw or arr.min() < self.fmt.min_raw):
            raise ValueError("raw codes outside the declared format range")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def zeros(cls, rows: int, cols: int, fmt: QFormat = DATA_FMT) -> "QTensor":
        return cls(rows, cols, np.zeros((rows, cols), dtype=np.int64), fmt)

    @classmethod
    def from_raw(cls, raw, fmt: QFormat = DATA_FMT) -> "QTensor":
        arr = np.asarray(raw, dtype=np.int64)
        if arr.ndim != 2:
            raise ValueError("expected a 2-D array of raw codes")
        return cls(arr.shape[0], arr.shape[1], arr, fmt)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QTensor):
            return NotImplemented
        return self.fmt == other.fmt and self.data.shape == other.data.shape and bool(
            np.array_equal(self.data, other.data)
        )

    def __repr__(self) -> str:
        return f"QTensor({self.rows}x{self.cols}, Q.{self.fmt.frac_bits}/{self.fmt.word_bits}b)"

    def column_block(self, lo: int, hi: int) -> "QTensor":
        if not (0 <= lo < hi <= self.cols):
            raise ValueError(f"column block [{lo}, {hi}) outside 0..{self.cols}")
        return QTensor(self.rows, hi - lo, self.data[:, lo:hi], self.fmt)

    def dequantize(self) -> np.ndarray:
        """Exact float64 real values (raw magnitudes here are far below 2^53)."""
        return self.data.astype(np.float64) * 2.0 ** (-self.fmt.frac_bits)


def hstack(tensors: list[QTensor] | tuple[QTensor, ...]) -> QTensor:
    if not tensors:
        raise ValueError("nothing to concatenate")
    fmt = tensors[0].fmt
    rows = tensors[0].rows
    if any(t.fmt != fmt or t.rows != rows for t in tensors):
        raise FormatMismatch("tensors disagree in format or row count")
    data = np.hstack([t.data for t in tensors])
    return QTensor(rows, data.shape[1], data, fmt)


def quantize_tensor(real: np.ndarray, fmt: QFormat = DATA_FMT) -> QTensor:
    """Vectorized quantize: numpy's round is round-half-to-even, matching
    the scalar path."""
    real = np.asarray(real, dtype=np.float64)
    if real.ndim != 2:
        raise ValueError("expected a 2-D real matrix")
    if np.isnan(real).any():
        raise NotANumber("cannot quantize NaN")
    raw = np.round(real * (1 << fmt.frac_bits))
    raw = np.clip(raw, fmt.min_raw, fmt.max_raw).astype(np.int64)
    return QTensor(real.shape[0], real.shape[1], raw, fmt)

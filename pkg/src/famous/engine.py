"""Functional simulation of one multi-head attention layer, bit-faithful to
the fixed-point datapath, plus a double-precision reference oracle.

Per head: the QKV projection streams column tiles and accumulates in the
wide format without intermediate narrowing (so the result is independent of
the tile size), scores are scaled by 1/sqrt(d_k) inside the accumulator and
narrowed once, softmax runs off a 256-entry exponential table with exact
integer normalization, and the probability-value product narrows once per
output element.  Heads are independent and may be evaluated concurrently;
serial and parallel evaluation are bit-identical.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import (
    DesignParams,
    InvalidConfiguration,
    RunParams,
    validate_run_params,
)
from .fxp import (
    ACC_FMT,
    DATA_FMT,
    FormatMismatch,
    QTensor,
    hstack,
    quantize,
)
from .tiling import TileSchedule, build_tile_schedule, slice_input_tile, slice_weight_tile


class EngineError(Exception):
    """Base class for simulation errors."""


class ShapeMismatch(EngineError):
    """Operand shapes are inconsistent."""


class DegenerateRow(EngineError):
    """A softmax row contained no live (unmasked) entry."""


# exp(-k/128) for every representable 8-bit difference code k, in Q16.
# Entry 0 is exactly 2^16; masked scores never index the table.
EXP_TABLE = np.array(
    [round(math.exp(-k / 128.0) * 65536) for k in range(256)], dtype=np.int64
)


@dataclass(frozen=True)
class HeadWeights:
    """Per-head projection weights (d_k x d_model, applied transposed) and
    biases (1 x d_k), all in the 8-bit data format."""

    w_q: QTensor
    w_k: QTensor
    w_v: QTensor
    b_q: QTensor
    b_k: QTensor
    b_v: QTensor

    def __post_init__(self) -> None:
        mats = (self.w_q, self.w_k, self.w_v, self.b_q, self.b_k, self.b_v)
        fmt = self.w_q.fmt
        if any(t.fmt != fmt for t in mats):
            raise FormatMismatch("head tensors disagree in format")
        d_k, d_model = self.w_q.rows, self.w_q.cols
        for w in (self.w_k, self.w_v):
            if (w.rows, w.cols) != (d_k, d_model):
                raise ShapeMismatch("weight matrices disagree in shape")
        for b in (self.b_q, self.b_k, self.b_v):
            if (b.rows, b.cols) != (1, d_k):
                raise ShapeMismatch(f"bias must be 1 x {d_k}, got {b.rows} x {b.cols}")

    @property
    def d_k(self) -> int:
        return self.w_q.rows

    @property
    def d_model(self) -> int:
        return self.w_q.cols

    def to_real(self) -> "RealHeadWeights":
        return RealHeadWeights(
            w_q=self.w_q.dequantize(),
            w_k=self.w_k.dequantize(),
            w_v=self.w_v.dequantize(),
            b_q=self.b_q.dequantize(),
            b_k=self.b_k.dequantize(),
            b_v=self.b_v.dequantize(),
        )


@dataclass(frozen=True)
class RealHeadWeights:
    """Double-precision mirror of HeadWeights, for the reference oracle."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    b_q: np.ndarray
    b_k: np.ndarray
    b_v: np.ndarray


@dataclass(frozen=True)
class AttentionState:
    """All intermediate tensors of one head's forward pass."""

    q: QTensor
    k: QTensor
    v: QTensor
    s_raw: QTensor
    p: QTensor
    out: QTensor
    accumulator_saturated: bool = False


@dataclass(frozen=True)
class MhaOutput:
    heads: tuple[QTensor, ...]
    concat: QTensor
    accumulator_saturated: bool = False


def _prod_bound(fmt) -> int:
    # largest |a*b| for two fmt operands: min_raw^2 for signed inputs
    return (1 << (fmt.word_bits - 1)) ** 2 if fmt.signed else (fmt.max_raw) ** 2


def _wide_matmul(a: np.ndarray, b: np.ndarray, prod_bound: int) -> tuple[np.ndarray, bool]:
    """a (r,k) @ b (k,c) under 32-bit saturating accumulation.

    If no partial sum can leave the accumulator range (k * prod_bound within
    it), a plain int64 matmul is bit-identical to the sequential saturating
    MAC chain and saturation is impossible.  Otherwise fall back to the
    explicit sequential chain and report the sticky flag.
    """
    k = a.shape[1]
    if k * prod_bound <= ACC_FMT.max_raw:
        return a @ b, False
    acc = np.empty((a.shape[0], b.shape[1]), dtype=np.int64)
    saturated = False
    lo, hi = ACC_FMT.min_raw, ACC_FMT.max_raw
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0
            for m in range(k):
                s += int(a[i, m]) * int(b[m, j])
                if s > hi:
                    s = hi
                    saturated = True
                elif s < lo:
                    s = lo
                    saturated = True
            acc[i, j] = s
    return acc, saturated


def _rhe_shift(num: np.ndarray, shift: int) -> np.ndarray:
    """Arithmetic right shift with round-half-to-even, elementwise."""
    if shift == 0:
        return num.copy()
    den = np.int64(1) << shift
    q = num >> shift  # floors, matching divmod
    r = num - (q << shift)
    twice = r << 1
    return q + ((twice > den) | ((twice == den) & ((q & 1) == 1)))


def _narrow(acc: np.ndarray, acc_frac: int, out_fmt) -> np.ndarray:
    """One requantization: wide accumulator codes to out_fmt raw codes."""
    raw = _rhe_shift(acc, acc_frac - out_fmt.frac_bits)
    return np.clip(raw, out_fmt.min_raw, out_fmt.max_raw)


def _project_qkv_sat(
    x: QTensor, w: HeadWeights, sched: TileSchedule
) -> tuple[QTensor, QTensor, QTensor, bool]:
    if x.fmt != w.w_q.fmt:
        raise FormatMismatch(f"input format {x.fmt} differs from weights {w.w_q.fmt}")
    if x.cols != w.d_model or sched.d_model != x.cols:
        raise ShapeMismatch(
            f"x has {x.cols} columns, weights expect {w.d_model}, "
            f"schedule covers {sched.d_model}"
        )
    f = x.fmt.frac_bits
    bound = _prod_bound(x.fmt)
    # bias enters the accumulator as one more bounded add
    fast = (x.cols + 1) * bound <= ACC_FMT.max_raw
    outs = []
    saturated = False
    for w_mat, bias in ((w.w_q, w.b_q), (w.w_k, w.b_k), (w.w_v, w.b_v)):
        if fast:
            acc = np.zeros((x.rows, w.d_k), dtype=np.int64)
            for step in sched:
                x_tile = slice_input_tile(x, step)
                w_tile = slice_weight_tile(w_mat, step)
                acc += x_tile.data @ w_tile.data.T
            sat = False
        else:
            # sequential column order equals ascending tile order
            acc, sat = _wide_matmul(x.data, w_mat.data.T, bound)
        acc = acc + (bias.data << f)  # bias raw aligned to 2f fractional bits
        clipped = np.clip(acc, ACC_FMT.min_raw, ACC_FMT.max_raw)
        sat = sat or bool((clipped != acc).any())
        outs.append(QTensor.from_raw(_narrow(clipped, 2 * f, x.fmt), x.fmt))
        saturated = saturated or sat
    return outs[0], outs[1], outs[2], saturated


def project_qkv(x: QTensor, w: HeadWeights, sched: TileSchedule):
    """Tile-streamed projection q, k, v = x @ w_*^T + b_*, one narrowing per
    output element."""
    q, k, v, _ = _project_qkv_sat(x, w, sched)
    return q, k, v


def _scores_sat(
    q: QTensor, k: QTensor, d_k: int, causal_mask: bool
) -> tuple[QTensor, bool]:
    if q.fmt != k.fmt:
        raise FormatMismatch(f"q format {q.fmt} differs from k format {k.fmt}")
    if q.data.shape != k.data.shape or q.cols != d_k:
        raise ShapeMismatch(
            f"q {q.data.shape} and k {k.data.shape} must both be SL x {d_k}"
        )
    f = q.fmt.frac_bits
    acc, saturated = _wide_matmul(q.data, k.data.T, _prod_bound(q.fmt))
    scale_raw = quantize(1.0 / math.sqrt(d_k), ACC_FMT).raw
    # fused scale and narrow: (2f + 14) fractional bits down to f in one rounding
    raw = _rhe_shift(acc * scale_raw, f + ACC_FMT.frac_bits)
    raw = np.clip(raw, q.fmt.min_raw, q.fmt.max_raw)
    if causal_mask:
        sl = q.rows
        raw = np.where(np.triu(np.ones((sl, sl), dtype=bool), k=1), q.fmt.min_raw, raw)
    return QTensor.from_raw(raw, q.fmt), saturated


def scores(q: QTensor, k: QTensor, d_k: int, causal_mask: bool) -> QTensor:
    """Scaled attention scores s = q @ k^T / sqrt(d_k); masked positions
    (column > row) are forced to the most negative code."""
    s, _ = _scores_sat(q, k, d_k, causal_mask)
    return s


def softmax_rows(s: QTensor) -> QTensor:
    """Row softmax over the exponential table with exact integer
    normalization.  Entries at the most negative code are treated as masked
    and map to probability 0 exactly."""
    fmt = s.fmt
    min_raw, max_raw = fmt.min_raw, fmt.max_raw
    out = np.zeros_like(s.data)
    for i in range(s.rows):
        row = s.data[i]
        live = row != min_raw
        if not live.any():
            raise DegenerateRow(f"softmax row {i} has no live entries")
        m = row[live].max()
        entries = np.zeros(row.shape, dtype=np.int64)
        entries[live] = EXP_TABLE[m - row[live]]
        total = int(entries.sum())
        num = entries << fmt.frac_bits
        q = num // total
        r = num - q * total
        twice = r << 1
        q = q + ((twice > total) | ((twice == total) & ((q & 1) == 1)))
        out[i] = np.minimum(q, max_raw)
    return QTensor.from_raw(out, fmt)


def _attend_sat(p: QTensor, v: QTensor) -> tuple[QTensor, bool]:
    if p.fmt != v.fmt:
        raise FormatMismatch(f"p format {p.fmt} differs from v format {v.fmt}")
    if p.cols != v.rows:
        raise ShapeMismatch(f"p has {p.cols} columns, v has {v.rows} rows")
    f = p.fmt.frac_bits
    acc, saturated = _wide_matmul(p.data, v.data, _prod_bound(p.fmt))
    raw = _narrow(acc, 2 * f, p.fmt)
    return QTensor.from_raw(raw, p.fmt), saturated


def attend(p: QTensor, v: QTensor) -> QTensor:
    """Probability-value product out = p @ v, one narrowing per element."""
    out, _ = _attend_sat(p, v)
    return out


def attention_head(
    x: QTensor, w: HeadWeights, sched: TileSchedule, causal_mask: bool
) -> AttentionState:
    """One head end to end: projection, scores, softmax, value product."""
    q, k, v, sat_qkv = _project_qkv_sat(x, w, sched)
    s, sat_s = _scores_sat(q, k, w.d_k, causal_mask)
    p = softmax_rows(s)
    out, sat_o = _attend_sat(p, v)
    return AttentionState(
        q=q, k=k, v=v, s_raw=s, p=p, out=out,
        accumulator_saturated=sat_qkv or sat_s or sat_o,
    )


def mha_forward(
    run: RunParams,
    design: DesignParams,
    x: QTensor,
    weights: list[HeadWeights] | tuple[HeadWeights, ...],
    parallel: bool = False,
) -> MhaOutput:
    """Full multi-head forward pass; heads column-concatenated in order.

    Heads share no state, so the parallel path is bit-identical to the
    serial one.  The output linear projection is out of scope.
    """
    result = validate_run_params(design, run)
    if not result.ok:
        raise InvalidConfiguration(list(result.violations))
    if len(weights) != run.h:
        raise ShapeMismatch(f"expected {run.h} head weight sets, got {len(weights)}")
    if (x.rows, x.cols) != (run.seq_len, run.d_model):
        raise ShapeMismatch(
            f"x must be {run.seq_len} x {run.d_model}, got {x.rows} x {x.cols}"
        )
    d_k = run.d_k
    for i, w in enumerate(weights):
        if (w.d_k, w.d_model) != (d_k, run.d_model):
            raise ShapeMismatch(
                f"head {i} weights are {w.d_k} x {w.d_model}, "
                f"expected {d_k} x {run.d_model}"
            )
    sched = build_tile_schedule(run, design)

    def one(w: HeadWeights) -> AttentionState:
        return attention_head(x, w, sched, run.causal_mask)

    if parallel and run.h > 1:
        with ThreadPoolExecutor(max_workers=run.h) as pool:
            states = list(pool.map(one, weights))
    else:
        states = [one(w) for w in weights]
    heads = tuple(st.out for st in states)
    return MhaOutput(
        heads=heads,
        concat=hstack(list(heads)),
        accumulator_saturated=any(st.accumulator_saturated for st in states),
    )


def mha_reference(
    run: RunParams,
    x_real: np.ndarray,
    weights_real: list[RealHeadWeights] | tuple[RealHeadWeights, ...],
) -> np.ndarray:
    """Double-precision mirror of mha_forward, for error measurement only."""
    if len(weights_real) != run.h:
        raise ShapeMismatch(f"expected {run.h} head weight sets, got {len(weights_real)}")
    x_real = np.asarray(x_real, dtype=np.float64)
    outs = []
    for w in weights_real:
        q = x_real @ w.w_q.T + w.b_q
        k = x_real @ w.w_k.T + w.b_k
        v = x_real @ w.w_v.T + w.b_v
        s = (q @ k.T) / math.sqrt(run.d_k)
        if run.causal_mask:
            sl = s.shape[0]
            s = np.where(np.triu(np.ones((sl, sl), dtype=bool), k=1), -np.inf, s)
        s = s - s.max(axis=1, keepdims=True)
        e = np.exp(s)
        p = e / e.sum(axis=1, keepdims=True)
        outs.append(p @ v)
    return np.hstack(outs)

"""Column tiling of weight and input matrices.

Weights (d_k x d_model per head) and the input buffer (SL x d_model) are
partitioned along columns into contiguous TS-wide tiles and streamed tile
by tile, d_model/TS times.  Rows are never tiled: the weight row count is
already reduced to d_k by the head split.
"""

from __future__ import annotations

from dataclasses import dataclass

from .config import DesignParams, RunParams
from .fxp import QTensor


class OutOfRange(Exception):
    """Tile step does not fit inside the tensor it is applied to."""


@dataclass(frozen=True)
class TileStep:
    """One TS-wide column range [col_lo, col_hi), in schedule order."""

    index: int
    col_lo: int
    col_hi: int

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError("index must be non-negative")
        if self.col_lo < 0 or self.col_hi <= self.col_lo:
            raise ValueError(f"bad column range [{self.col_lo}, {self.col_hi})")

    @property
    def width(self) -> int:
        return self.col_hi - self.col_lo


@dataclass(frozen=True)
class TileSchedule:
    """Ordered TS-wide steps partitioning [0, d_model) exactly."""

    steps: tuple[TileStep, ...]
    ts: int

    def __post_init__(self) -> None:
        if not self.steps:
            raise ValueError("schedule must contain at least one step")
        for i, step in enumerate(self.steps):
            if step.index != i or step.width != self.ts or step.col_lo != i * self.ts:
                raise ValueError(f"step {i} breaks the contiguous partition: {step}")

    @property
    def d_model(self) -> int:
        return len(self.steps) * self.ts

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)


def build_tile_schedule(run: RunParams, design: DesignParams) -> TileSchedule:
    """The unique ascending schedule of d_model/TS column tiles."""
    ts = design.tile_size
    steps = tuple(
        TileStep(index=i, col_lo=i * ts, col_hi=(i + 1) * ts)
        for i in range(run.d_model // ts)
    )
    return TileSchedule(steps=steps, ts=ts)


def slice_weight_tile(w_head: QTensor, step: TileStep) -> QTensor:
    """Column block [col_lo, col_hi) of a d_k x d_model weight matrix."""
    if step.col_hi > w_head.cols:
        raise OutOfRange(
            f"tile [{step.col_lo}, {step.col_hi}) exceeds {w_head.cols} columns"
        )
    return w_head.column_block(step.col_lo, step.col_hi)


def slice_input_tile(x: QTensor, step: TileStep) -> QTensor:
    """Column block [col_lo, col_hi) of the SL x d_model input buffer."""
    if step.col_hi > x.cols:
        raise OutOfRange(f"tile [{step.col_lo}, {step.col_hi}) exceeds {x.cols} columns")
    return x.column_block(step.col_lo, step.col_hi)

#!/usr/bin/env python3
"""Re-derive the packaged cycle-model calibration from the measured rows.

The model has three constants: memory bytes per cycle (B), pipeline fill
depth (D), and softmax cycles per row (c_sm).  They are not all
identifiable from the published latencies:

* D shifts the anchor total by ~0.1%, far below measurement resolution,
  so it is fixed by prior to 32 (a deep MAC-reduce + rounding pipeline at
  400 MHz), not fitted.
* B is constrained to power-of-two bus widths of at least one 32-bit word
  (4, 8, 16 bytes/cycle) and selected by the fidelity band: every
  non-excluded measured row must sit within 25% of the model, and among
  the survivors the smallest worst-case deviation wins.
* c_sm is then solved exactly from the anchor row (test 1: 64 x 768 x 8
  heads, TS 64 -> 0.94 ms at 400 MHz = 376,000 cycles); only candidates
  for which the solution is a positive integer are admissible.

The script prints the candidate table, applies the rule, and exits
nonzero if the winner disagrees with data/default_calibration.txt, so it
doubles as a consistency check.
"""

import dataclasses
import sys
from fractions import Fraction

from famous.perf import (
    DEFAULT_CALIBRATION,
    REFERENCE_POINTS,
    Calibration,
    default_design,
    estimate_cycles,
    latency_ms,
    load_calibration,
    packaged_calibration_path,
)

PIPELINE_DEPTH_PRIOR = 32
BUS_WIDTHS = (4, 8, 16)
BAND = 0.25

ANCHOR = next(p for p in REFERENCE_POINTS if p.test_no == 1)
ANCHOR_CYCLES = int(ANCHOR.latency_ms * Fraction(400) * 1000)  # 376,000


def solve_softmax_constant(bytes_per_cycle: int, depth: int) -> int | None:
    """c_sm such that the anchor row comes out exact, or None if that is
    not a positive integer."""
    probe = Calibration(bytes_per_cycle, depth, softmax_cycles_per_row=1)
    design = default_design(probe)
    bd = estimate_cycles(design, ANCHOR.run)
    without_softmax = bd.total_cycles - bd.softmax_cycles
    residual = ANCHOR_CYCLES - without_softmax
    if residual <= 0 or residual % ANCHOR.run.seq_len:
        return None
    return residual // ANCHOR.run.seq_len


def worst_band_deviation(cal: Calibration) -> float:
    design = default_design(cal)
    worst = 0.0
    for point in REFERENCE_POINTS:
        if point.excluded:
            continue
        predicted = latency_ms(design, estimate_cycles(design, point.run))
        worst = max(worst, abs(float(predicted / point.latency_ms) - 1.0))
    return worst


def main() -> int:
    candidates = []
    print(f"anchor: test {ANCHOR.test_no} -> {ANCHOR_CYCLES} cycles exactly")
    print(f"{'B':>3} {'D':>3} {'c_sm':>6} {'worst dev':>10}  in band")
    for bpc in BUS_WIDTHS:
        c_sm = solve_softmax_constant(bpc, PIPELINE_DEPTH_PRIOR)
        if c_sm is None:
            print(f"{bpc:>3} {PIPELINE_DEPTH_PRIOR:>3} {'-':>6} {'-':>10}  anchor unsolvable")
            continue
        cal = Calibration(bpc, PIPELINE_DEPTH_PRIOR, c_sm)
        worst = worst_band_deviation(cal)
        ok = worst <= BAND
        candidates.append((worst, bpc, cal, ok))
        print(f"{bpc:>3} {PIPELINE_DEPTH_PRIOR:>3} {c_sm:>6} {worst:>9.2%}  {'yes' if ok else 'NO'}")

    in_band = [(w, b, c) for w, b, c, ok in candidates if ok]
    if not in_band:
        print("no candidate keeps every measured row within the band", file=sys.stderr)
        return 1
    in_band.sort(key=lambda t: (t[0], t[1]))
    _, _, chosen = in_band[0]
    print(f"\nchosen: mem_bytes_per_cycle={chosen.mem_bytes_per_cycle} "
          f"pipeline_depth={chosen.pipeline_depth} "
          f"softmax_cycles_per_row={chosen.softmax_cycles_per_row}")

    packaged = load_calibration(packaged_calibration_path())
    for name, value in dataclasses.asdict(chosen).items():
        print(f"{name} = {value}")
    if chosen != packaged or chosen != DEFAULT_CALIBRATION:
        print(f"MISMATCH: packaged calibration is {packaged}", file=sys.stderr)
        return 1
    print("matches data/default_calibration.txt")
    return 0


if __name__ == "__main__":
    sys.exit(main())

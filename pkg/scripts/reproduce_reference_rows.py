#!/usr/bin/env python3
"""Print the measured benchmark rows next to the model's predictions.

One line per measured configuration: shape, measured latency and
throughput, predicted latency, deviation, and whether the row counts
toward the fidelity band or is a documented exclusion.
"""

import sys

from famous.perf import (
    REFERENCE_POINTS,
    default_design,
    estimate_cycles,
    latency_ms,
    op_count,
)


def main() -> int:
    design = default_design()
    print(f"{'test':>4} {'SL':>4} {'d_model':>7} {'h':>2} {'meas ms':>8} "
          f"{'meas GOPS':>9} {'model ms':>9} {'dev':>7}  status")
    worst = 0.0
    for p in REFERENCE_POINTS:
        predicted = latency_ms(design, estimate_cycles(design, p.run))
        dev = float(predicted / p.latency_ms) - 1.0
        if p.excluded:
            status = f"excluded: {p.note}"
        else:
            status = "in band" + (f" ({p.note})" if p.note else "")
            worst = max(worst, abs(dev))
        print(f"{p.test_no:>4} {p.seq_len:>4} {p.d_model:>7} {p.heads:>2} "
              f"{float(p.latency_ms):>8.3f} {p.gops:>9} {float(predicted):>9.4f} "
              f"{dev:>+7.1%}  {status}")
        gop = op_count(p.run)
        implied = float(gop * 1000 / p.latency_ms)
        print(f"{'':>4} {'':>4} {'':>7} {'':>2} work {float(gop):.4f} GOP -> "
              f"{implied:.1f} GOPS at the measured latency")
    print(f"\nworst deviation over the non-excluded rows: {worst:.2%}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

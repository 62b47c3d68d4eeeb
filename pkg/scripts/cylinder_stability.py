#!/usr/bin/env python3
"""Reach / blow-up table for the channel flow past a cylinder."""
import argparse
import csv
import dataclasses
from pathlib import Path

from tsefem.cli import parse_stab
from tsefem.series import StabilizationPlan
from tsefem.validation import cylinder_stability_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--resolutions", default="35")
    ap.add_argument("--taus", default="0.02,0.002")
    ap.add_argument("--stab-taus", default="0.04")
    ap.add_argument("--stab", default="m=2")
    ap.add_argument("--rank", type=int, default=5)
    ap.add_argument("--out", default="runs/cylinder-stability")
    a = ap.parse_args()
    res = [int(v) for v in a.resolutions.split(",")]
    rows = cylinder_stability_table(res, [float(v) for v in a.taus.split(",")],
                                    [StabilizationPlan.off()], N=a.rank)
    rows += cylinder_stability_table(res, [float(v) for v in a.stab_taus.split(",")],
                                     [parse_stab(a.stab)], N=a.rank)
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    fields = [f.name for f in dataclasses.fields(rows[0])]
    with open(out / "stability.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fields)
        w.writeheader()
        for r in rows:
            w.writerow(dataclasses.asdict(r))
    for r in rows:
        state = "reached" if r.reached else f"blow-up at step {r.failed_step}"
        print(f"res={r.resolution} tau={r.tau:g} {r.plan}: {state} t={r.final_time:.4g} "
              f"residual mean {r.residual_mean:.4g} C_D {r.drag_mean:.4g}")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Stokes time self-convergence over (tau, rank) at a fixed mesh."""
import argparse
from pathlib import Path

from tsefem.cli import parse_stab
from tsefem.series import StabilizationPlan
from tsefem.validation import stokes_time_sweep, stokes_verdicts


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--taus", default="0.01,0.002,0.0004")
    ap.add_argument("--ranks", default="2,3,4")
    ap.add_argument("--stab", default="m=3,c=3")
    ap.add_argument("--out", default="runs/stokes-sweep")
    a = ap.parse_args()
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    taus = [float(v) for v in a.taus.split(",")]
    ranks = [int(v) for v in a.ranks.split(",")]
    for tag, plan in (("unstabilized", StabilizationPlan.off()), ("stabilized", parse_stab(a.stab))):
        rep = stokes_time_sweep(a.n, taus, ranks, plan)
        (out / f"{tag}.csv").write_text(rep.to_csv())
        print(rep.summary(stokes_verdicts(rep, plan.enabled)))


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Taylor-Green mode errors e_{k,h} with and without stabilization."""
import argparse
from pathlib import Path

from tsefem.cli import parse_stab
from tsefem.series import StabilizationPlan
from tsefem.validation import tg_mode_sweep, tg_mode_verdicts


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--re", type=float, default=100.0)
    ap.add_argument("--meshes", default="16,32,64", help="cells per side, ascending")
    ap.add_argument("--rank", type=int, default=4)
    ap.add_argument("--stab", default="m=3,c=3", help="stabilized plan (C_h = c^m)")
    ap.add_argument("--out", default="runs/tg-modes")
    a = ap.parse_args()
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    meshes = [int(v) for v in a.meshes.split(",")]
    for tag, plan in (("unstabilized", StabilizationPlan.off()), ("stabilized", parse_stab(a.stab))):
        rep = tg_mode_sweep(a.re, meshes, a.rank, plan)
        (out / f"{tag}.csv").write_text(rep.to_csv())
        print(rep.summary(tg_mode_verdicts(rep) if tag == "unstabilized" else None))


if __name__ == "__main__":
    main()

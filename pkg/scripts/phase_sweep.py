"""Win-frequency tables over the (beta1, gamma) or (beta1, beta2) plane.

Cells along the second axis share their random stream (coupled runs), rows
and replicates use independent streams. Writes sweep.csv and critical.csv
(midpoint of the steepest jump of the species-1 win frequency per row,
with half the grid gap as uncertainty).

    python scripts/phase_sweep.py --plane beta1-gamma --fixed 3 \
        --rows 2,2.5,3,3.5 --axis 0,0.5,1,2,4,8 --L 60 --T 100 --reps 10
"""
import argparse
import json
from pathlib import Path

from allelopathy.engine import Outcome
from allelopathy.harness import phase_sweep
from allelopathy.lattice import ModelParams
from allelopathy.parallel import default_workers


def floats(text):
    return [float(v) for v in text.split(",")]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--plane", choices=("beta1-gamma", "beta1-beta2"), default="beta1-gamma")
    ap.add_argument("--fixed", type=float, default=3.0, help="beta2 (beta1-gamma plane) or gamma")
    ap.add_argument("--rows", type=floats, default=floats("2,3,4"))
    ap.add_argument("--axis", type=floats, default=floats("0,0.5,1,2,4"))
    ap.add_argument("--L", type=int, default=40)
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--T", type=float, default=60.0)
    ap.add_argument("--reps", type=int, default=8)
    ap.add_argument("--p1", type=float, default=0.5)
    ap.add_argument("--p2", type=float, default=0.5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=default_workers())
    ap.add_argument("--out", default="runs/phase_sweep")
    args = ap.parse_args()

    fixed = {"beta2": args.fixed} if args.plane == "beta1-gamma" else {"gamma": args.fixed}
    base = ModelParams(**{"beta1": 1.0, "beta2": 1.0, "gamma": 0.0, **fixed}, d=args.d, L=args.L)
    res = phase_sweep(args.plane, base, args.rows, args.axis, args.reps, args.T, args.seed,
                      args.p1, args.p2, args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    res.to_csv(out / "sweep.csv")
    res.critical_csv(out / "critical.csv")
    (out / "args.json").write_text(json.dumps(vars(args), indent=2) + "\n")
    f1 = res.frequency(Outcome.SPECIES1_WINS)
    print(f"species-1 win frequency (rows {res.row_name}, columns {res.axis_name}):")
    for rv, row in zip(res.row_values, f1):
        print(f"  {rv:6g}: " + " ".join(f"{v:4.2f}" for v in row))
    for e in res.critical_estimates():
        print(f"  {res.row_name}={e['row']:g}: {res.axis_name}_hat = {e['estimate']:.3g} "
              f"+/- {e['half_width']:.3g} (jump {e['jump']:+.2f})")


if __name__ == "__main__":
    main()

"""Snapshot panels of the 2-D process (species 1 black, species 2 gray, empty white).

Defaults: 300x300 torus, beta2 = 3, pictures at t = 200. The per-panel
(beta1, gamma) pairs are a choice made here; pass --panel to use others.

    python scripts/snapshots.py --out runs/snapshots
    python scripts/snapshots.py --L 100 --t 50 --panel 3,0 --panel 2.5,4
"""
import argparse
import json
from pathlib import Path

from allelopathy.harness import snapshot_figure
from allelopathy.lattice import ModelParams

DEFAULT_PANELS = ((3.0, 0.0), (3.0, 1.0), (2.5, 4.0), (4.0, 1.0))


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--L", type=int, default=300)
    ap.add_argument("--t", type=float, default=200.0)
    ap.add_argument("--beta2", type=float, default=3.0)
    ap.add_argument("--panel", action="append", help="beta1,gamma (repeatable)")
    ap.add_argument("--times", default="", help="extra snapshot times, comma separated")
    ap.add_argument("--seed", type=int, default=2)
    ap.add_argument("--out", default="runs/snapshots")
    args = ap.parse_args()

    panels = [tuple(float(v) for v in p.split(",")) for p in args.panel] if args.panel else DEFAULT_PANELS
    times = sorted({args.t, *(float(v) for v in args.times.split(",") if v.strip())})
    index = []
    for b1, g in panels:
        params = ModelParams(b1, args.beta2, g, d=2, L=args.L)
        out = Path(args.out) / f"beta1_{b1:g}_gamma_{g:g}"
        paths = snapshot_figure(params, args.t, times, args.seed, out)
        index.append({"beta1": b1, "beta2": args.beta2, "gamma": g, "files": [str(p) for p in paths]})
        print(f"beta1={b1:g} gamma={g:g}: {', '.join(p.name for p in paths)}")
    Path(args.out, "index.json").write_text(json.dumps(index, indent=2) + "\n")


if __name__ == "__main__":
    main()

"""Mean-field basins of attraction on the simplex grid for several gamma.

For each gamma writes basin_gamma_<g>.csv and a PPM picture (p1 black,
p2 gray, p0/p12/undecided white; row 0 is u2 = 1), and prints the
area fractions of the interior grid points.

    python scripts/basin_maps.py --gammas 1,2,4,8 --n 200
"""
import argparse
import json
from pathlib import Path

import numpy as np

from allelopathy.meanfield import Rates, basin_map, fixed_points
from allelopathy.parallel import default_workers

SHADE = {"p1": 0, "p2": 128}


def write_picture(bm, path):
    n = bm.n
    img = np.full((n + 1, n + 1), 255, dtype=np.uint8)
    for a, b, lab in zip(bm.u1, bm.u2, bm.labels):
        img[n - int(round(b * n)), int(round(a * n))] = SHADE.get(lab, 255)
    rgb = np.repeat(img[:, :, None], 3, axis=2)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{n + 1} {n + 1}\n255\n".encode())
        fh.write(rgb.tobytes())


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--beta1", type=float, default=2.0)
    ap.add_argument("--beta2", type=float, default=2.5)
    ap.add_argument("--gammas", default="2,4,8")
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--t-max", type=float, default=2000.0)
    ap.add_argument("--workers", type=int, default=default_workers())
    ap.add_argument("--out", default="runs/basins")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    for g in (float(v) for v in args.gammas.split(",")):
        r = Rates(args.beta1, args.beta2, g)
        bm = basin_map(r, args.n, args.t_max, workers=args.workers)
        bm.to_csv(out / f"basin_gamma_{g:g}.csv")
        write_picture(bm, out / f"basin_gamma_{g:g}.ppm")
        summary[g] = {"predicted": fixed_points(r).predicted, **bm.summary()}
        print(f"gamma={g:g} ({summary[g]['predicted']}): "
              + ", ".join(f"{k} {v:.4f}" for k, v in bm.summary().items()))
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")


if __name__ == "__main__":
    main()

"""Emit similarity partition maps for a shared 3-point set.

One CSV per similarity kind over the unit square, plus a second dot map
with point 0 doubled, which visualizes how magnitude (not direction)
grows a point's winning region under the dot product.

Usage: python3 scripts/partition_maps.py [--outdir DIR] [--grid-size N]
"""

import argparse
from pathlib import Path

import numpy as np

from divsum.attention import GridSpec, SIMILARITY_KINDS, partition_map_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--outdir", default="partition_maps")
    ap.add_argument("--grid-size", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    points = rng.uniform(0.1, 0.9, size=(3, 2))
    grid = GridSpec(nx=args.grid_size, ny=args.grid_size)
    print("points: " + "; ".join(f"({x:.4f}, {y:.4f})" for x, y in points))

    for kind in SIMILARITY_KINDS:
        path = outdir / f"partition_{kind}.csv"
        path.write_text(partition_map_csv(points, kind, grid))
        print(f"{kind}: {path}")

    doubled = points.copy()
    doubled[0] *= 2.0
    path = outdir / "partition_dot_doubled.csv"
    path.write_text(partition_map_csv(doubled, "dot", grid))
    print(f"dot with point 0 doubled: {path}")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Sweep the escape speed theta(g) over a log grid and plot it.

Reproduces the speed-vs-coupling curve: a warm-started nu_c sweep on
the chosen grid, the standard CSV written next to an optional log-log
plot with a g^{1/3} guide line through the smallest-g point.

    python3 scripts/speed_sweep.py --g-min 1e-3 --g-max 10 --n 40 \
        --out sweep.csv --plot sweep.png
"""

import argparse
import sys

import numpy as np

from wsaw1d.criticality import sweep, sweep_csv
from wsaw1d.discretize import build_grid, default_grid, figure1_grid


def parse_args(argv):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--g-min", type=float, default=1e-3)
    ap.add_argument("--g-max", type=float, default=10.0)
    ap.add_argument("--n", type=int, default=40, help="number of g points")
    ap.add_argument(
        "--grid-preset", choices=("default", "figure1"), default="default"
    )
    ap.add_argument("--s-max", type=float, default=None,
                    help="override the truncation radius of the default grid")
    ap.add_argument("--out", default="speed_sweep.csv")
    ap.add_argument("--plot", default=None, help="optional PNG path")
    return ap.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    if args.grid_preset == "figure1":
        grid = figure1_grid()
    elif args.s_max is not None:
        grid = build_grid(args.s_max, int(round(args.s_max)), 10)
    else:
        grid = default_grid()

    gs = np.geomspace(args.g_min, args.g_max, args.n)
    out = sweep(gs, grid=grid)
    with open(args.out, "w") as fh:
        fh.write(sweep_csv(out.points))
    print(f"{len(out.points)} points -> {args.out}")
    for fail in out.failures:
        print(f"  failed at g={fail.g:.3e}: {fail.error}", file=sys.stderr)

    if args.plot is not None:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        g = np.array([p.g for p in out.points])
        theta = np.array([p.theta for p in out.points])
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        ax.loglog(g, theta, "o-", ms=3.5, lw=1.0, label=r"$\theta(g)$")
        guide = theta[0] * (g / g[0]) ** (1.0 / 3.0)
        ax.loglog(g, guide, "--", lw=0.8, color="gray", label=r"$\propto g^{1/3}$")
        ax.set_xlabel("g")
        ax.set_ylabel("escape speed")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(args.plot, dpi=160)
        print(f"plot -> {args.plot}")

    return 1 if out.failures else 0


if __name__ == "__main__":
    sys.exit(main())

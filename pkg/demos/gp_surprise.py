"""Surprise and learnability on a one-dimensional Gaussian process.

Ten noisy observations of a smooth function sit on [-1, 1]. Two probes share
the target 1: one at x=0, inside the data, and one at x=1.5, outside it.
Both are surprising, but only the outside probe can be absorbed without
contradicting its neighbours, so it is the more learnable one.

    python3 demos/gp_surprise.py [curves.csv]
"""

import sys

import numpy as np

from infosel.evaluate import GpToyConfig, gp_toy, write_gp_curves


def main(curves=None):
    config = GpToyConfig()
    res = gp_toy(config)
    for p, (x, y) in enumerate(config.probes):
        print(f"probe ({x:g}, {y:g}): surprise {res.surprise[:, p].mean():6.2f}   "
              f"learnability {res.learnability[:, p].mean():6.2f}")
    print(f"median surprise of the grid points: {np.mean(res.grid_surprise_median):6.2f}")
    print(f"\noutside probe more learnable in {res.learnability_win_rate:.0%} of "
          f"{config.n_draws} draws")
    print(f"both probes above the median grid surprise in {res.surprise_exceeds_rate:.0%}")
    if curves:
        write_gp_curves(curves, config, res.memory_targets[0])
        print(f"predictive curves for the first draw written to {curves}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else None)

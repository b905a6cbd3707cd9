"""Choose InfoRS parameters per imbalance level on validation data only.

Eight validation mixtures (seeds 100-107) are drawn independently of the
acceptance dataset (seed 0). Each is paired with one run seed and the starred
task rotates with the pair index. For every (eta, gamma_i) on a small grid
we print the mean relearn accuracy and class-count variance relative to
plain reservoir sampling, then pick the best-accuracy setting per r.

    python3 demos/validate_infors.py
"""

import itertools

import numpy as np

from infosel.experiment import RunSpec, run_once
from infosel.selectors import SelectorParams
from infosel.streams import StreamConfig, synth_gaussian_mixture

PAIRS = range(8)
GRID = [SelectorParams(eta=e, gamma_i=g) for e, g in itertools.product((0, 1, 3), (-0.3, 0, 0.3))]


def mean_row(datasets, selector, r, params=None):
    rows = [run_once(datasets[i], RunSpec(selector=selector, budget=100,
                                          params=params or SelectorParams(),
                                          stream=StreamConfig(imbalance=r, starred_task=i % 5)),
                     i).row
            for i in PAIRS]
    return np.mean([x.relearn_accuracy for x in rows]), np.mean([x.class_variance for x in rows])


def main():
    datasets = [synth_gaussian_mixture(10, 16, 500, 10.0, 0.0, seed=100 + i) for i in PAIRS]
    for r in (1, 10):
        rs_acc, rs_var = mean_row(datasets, "rs", r)
        print(f"r={r}: reservoir sampling accuracy {rs_acc:.4f}, class variance {rs_var:.1f}")
        scored = []
        for p in GRID:
            acc, var = mean_row(datasets, "infors", r, p)
            scored.append((acc, p))
            print(f"  eta={p.eta:<3g} gamma_i={p.gamma_i:<5g} accuracy {acc - rs_acc:+.4f} "
                  f"vs RS, class variance {var:.1f}")
        best = max(scored, key=lambda t: t[0])[1]
        print(f"  -> chosen for r={r}: eta={best.eta:g}, gamma_i={best.gamma_i:g}\n")


if __name__ == "__main__":
    main()

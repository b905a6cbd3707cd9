import numpy as np

from infosel import bayes
from infosel.memory import Memory, make_item
from infosel.selectors import make_selector
from infosel.streams import Batch


def batches(features, labels, batch_size):
    """Chunk an ordered stream into batches whose ids are stream positions."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    for step, start in enumerate(range(0, len(labels), batch_size)):
        ids = np.arange(start, min(start + batch_size, len(labels)))
        yield Batch(features[ids], labels[ids], ids, ids, 0, 0, step)


def run_selector(kind, features, labels, n_classes, budget, seed, params=None, batch_size=10):
    d0 = np.asarray(features).shape[1]
    mem = Memory(budget, bayes.init_posterior(d0, n_classes, 0.3, jitter=0.1))
    sel = make_selector(kind, mem, n_classes, np.random.default_rng(seed), params)
    for b in batches(features, labels, batch_size):
        sel.observe_batch(b)
    return sel


def plain_items(n, n_classes=1, labels=None):
    labels = np.zeros(n, dtype=int) if labels is None else labels
    return [make_item(i, [0.0], int(labels[i]), n_classes, feature=np.zeros(2)) for i in range(n)]

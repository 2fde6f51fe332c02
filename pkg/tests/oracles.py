"""Independent scalar oracles used by the objective and acceptance tests.

Pure Python arithmetic over lists: no tensor library, no numpy math, so
these stay independent of the implementation paths they check.
"""

import math


def _norm(v):
    n = math.sqrt(sum(x * x for x in v))
    return [x / n for x in v]


def sim(a, b, tau):
    an, bn = _norm(a), _norm(b)
    return sum(x * y for x, y in zip(an, bn)) / tau


def oracle_z2s(z_rows, s_rows, labels, tau):
    """Sample-anchored contrastive loss: positives are each sample's own
    class prototype, denominator over all prototypes."""
    total = 0.0
    c = len(s_rows)
    for i, z in enumerate(z_rows):
        num = math.exp(sim(z, s_rows[labels[i]], tau))
        den = sum(math.exp(sim(z, s_rows[a], tau)) for a in range(c))
        total += -math.log(num / den)
    return total


def oracle_s2z(s_rows, z_rows, labels, tau):
    """Prototype-anchored contrastive loss: positives are the batch
    samples of the prototype's class, denominator over the whole batch;
    absent classes contribute nothing."""
    total = 0.0
    n = len(z_rows)
    for j in range(len(s_rows)):
        members = [p for p in range(n) if labels[p] == j]
        if not members:
            continue
        inner = 0.0
        for p in members:
            num = math.exp(sim(s_rows[j], z_rows[p], tau))
            den = sum(math.exp(sim(s_rows[j], z_rows[a], tau)) for a in range(n))
            inner += math.log(num / den)
        total += -inner / len(members)
    return total


def random_instance(rng, n_max=6, c_max=4, d_max=8):
    n = int(rng.integers(1, n_max + 1))
    c = int(rng.integers(2, c_max + 1))
    d = int(rng.integers(2, d_max + 1))
    z = rng.normal(0, 1, size=(n, d))
    s = rng.normal(0, 1, size=(c, d))
    labels = rng.integers(0, c, size=n)
    return z, s, labels

"""Point-set resampling: farthest point sampling, random subsampling, and
equal-size conditioning for the assignment-based metric.

All samplers return multiset subsets of their input, in selection order.
"""

import numpy as np

from .core import RandomSource, validate
from .errors import EmptySet, KOutOfRange


def _check_k(n, k):
    if n == 0:
        raise EmptySet()
    if not 1 <= k <= n:
        raise KOutOfRange(k, n)


def farthest_point_sample(ps, k, seed=0, start_index=None):
    """Greedy max-min subsample of k points.

    The first point is drawn uniformly from the seeded stream unless
    start_index pins it. Each subsequent point maximizes the minimum distance
    to everything already selected; ties go to the lowest index. Selection
    compares squared distances, which yields the same argmax as Euclidean.
    O(N k) time.
    """
    pts = validate(ps)
    n = len(pts)
    _check_k(n, int(k))
    k = int(k)
    if start_index is None:
        start = int(RandomSource(seed).integers(n))
    else:
        if not 0 <= start_index < n:
            raise KOutOfRange(start_index, n)
        start = int(start_index)
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = start
    min_d2 = ((pts - pts[start]) ** 2).sum(axis=1)
    for i in range(1, k):
        nxt = int(np.argmax(min_d2))  # argmax takes the first, so lowest index wins ties
        chosen[i] = nxt
        d2 = ((pts - pts[nxt]) ** 2).sum(axis=1)
        np.minimum(min_d2, d2, out=min_d2)
    return pts[chosen]


def random_subsample(ps, k, seed=0):
    """k distinct points via a seeded Fisher-Yates prefix, in draw order."""
    pts = validate(ps)
    n = len(pts)
    _check_k(n, int(k))
    k = int(k)
    gen = RandomSource(seed).gen
    idx = np.arange(n)
    for i in range(k):
        j = i + int(gen.integers(n - i))
        idx[i], idx[j] = idx[j], idx[i]
    return pts[idx[:k]]


def equalize(a, b, method="fps", seed=0):
    """Downsample the larger set to the smaller's cardinality.

    The smaller set passes through untouched. method is 'fps' or 'random'.
    """
    a = validate(a)
    b = validate(b)
    if len(a) == 0 or len(b) == 0:
        raise EmptySet()
    if method not in ("fps", "random"):
        raise ValueError(f"unknown method {method!r}; expected 'fps' or 'random'")
    sampler = farthest_point_sample if method == "fps" else random_subsample
    if len(a) > len(b):
        return sampler(a, len(b), seed), b
    if len(b) > len(a):
        return a, sampler(b, len(a), seed)
    return a, b

"""Chamfer distance between point sets, with analytic gradients.

d(a, b) = sum_i min_j ||a_i - b_j||^2  +  sum_j min_i ||b_j - a_i||^2

Terms are squared Euclidean distances, deliberately not square-rooted, and
the two directed sums are unnormalized by default. Note this is not a true
metric: the triangle inequality can fail. Nearest-neighbor ties break to the
lowest index in the other set, which makes gradients deterministic.

Two backends compute the same nearest neighbors: a chunked brute-force scan
and a KD-tree. Both evaluate per-pair squared distances through the same
primitive (cdist), so their values agree bit for bit, not merely to
tolerance. Per-point searches are independent; the value is reduced by
pairwise summation in index order, so results do not depend on how the work
is split.
"""

import numpy as np
from scipy.spatial.distance import cdist

from .core import DistanceResult, validate
from .errors import EmptySet

_NO_INDEX = np.iinfo(np.int64).max


class KdTree:
    """Static 3-d tree over a point set, exact nearest-neighbor queries.

    Median split on the widest-extent axis, leaf size 16 by default; robust
    on degenerate (planar, collinear, duplicated) clouds. Nodes live in flat
    arrays; leaves hold contiguous ranges of a permuted copy of the points.
    """

    def __init__(self, points, leaf_size=16):
        pts = validate(points)
        if len(pts) == 0:
            raise EmptySet()
        if leaf_size < 1:
            raise ValueError("leaf_size must be >= 1")
        self.leaf_size = int(leaf_size)
        n = len(pts)
        perm = np.arange(n)
        axis, split, left, right, start, end = [], [], [], [], [], []

        def build(lo, hi):
            node = len(axis)
            axis.append(-1)
            split.append(0.0)
            left.append(-1)
            right.append(-1)
            start.append(lo)
            end.append(hi)
            if hi - lo <= self.leaf_size:
                return node
            sub = pts[perm[lo:hi]]
            ext = sub.max(axis=0) - sub.min(axis=0)
            ax = int(np.argmax(ext))
            k = (hi - lo) // 2
            sel = np.argpartition(sub[:, ax], k)
            perm[lo:hi] = perm[lo:hi][sel]
            axis[node] = ax
            split[node] = pts[perm[lo + k], ax]
            left[node] = build(lo, lo + k)
            right[node] = build(lo + k, hi)
            return node

        build(0, n)
        self.n = n
        self.perm = perm
        self.pts_sorted = pts[perm]
        self.axis = np.asarray(axis, dtype=np.int64)
        self.split = np.asarray(split)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.start = np.asarray(start, dtype=np.int64)
        self.end = np.asarray(end, dtype=np.int64)

    def _scan_leaves(self, q, rows, nodes, best_d2, best_i):
        # group query rows by leaf so each distinct leaf costs one cdist call
        order = np.argsort(nodes, kind="stable")
        srows = rows[order]
        snodes = nodes[order]
        uniq, first = np.unique(snodes, return_index=True)
        bounds = np.append(first, len(snodes))
        for k in range(len(uniq)):
            lo, hi = self.start[uniq[k]], self.end[uniq[k]]
            rg = srows[bounds[k]:bounds[k + 1]]
            d2 = cdist(q[rg], self.pts_sorted[lo:hi], "sqeuclidean")
            orig = self.perm[lo:hi]
            rd2 = d2.min(axis=1)
            # among equidistant leaf points, keep the lowest original index
            cand = np.where(d2 == rd2[:, None], orig[None, :], _NO_INDEX).min(axis=1)
            better = (rd2 < best_d2[rg]) | ((rd2 == best_d2[rg]) & (cand < best_i[rg]))
            upd = rg[better]
            best_d2[upd] = rd2[better]
            best_i[upd] = cand[better]

    def _descend(self, q, rows, nodes, best_d2, best_i, pend):
        # walk each row to its near-side leaf, deferring the far subtrees
        ax = self.axis[nodes]
        while True:
            at_leaf = ax < 0
            if at_leaf.any():
                self._scan_leaves(q, rows[at_leaf], nodes[at_leaf], best_d2, best_i)
                inner = ~at_leaf
                if not inner.any():
                    return
                rows = rows[inner]
                nodes = nodes[inner]
                ax = ax[inner]
            qa = q[rows, ax]
            sv = self.split[nodes]
            go_left = qa <= sv
            lch = self.left[nodes]
            rch = self.right[nodes]
            pend.append((np.where(go_left, rch, lch), rows, (qa - sv) ** 2))
            nodes = np.where(go_left, lch, rch)
            ax = self.axis[nodes]

    def query(self, points):
        """Exact nearest neighbors: (indices, squared distances).

        Deferred far subtrees are revisited in rounds; a subtree is pruned
        only when its splitting-plane gap strictly exceeds the current best,
        so equidistant candidates are still scanned and the lowest-index tie
        rule holds exactly.
        """
        q = validate(points)
        m = len(q)
        best_d2 = np.full(m, np.inf)
        best_i = np.full(m, _NO_INDEX)
        if m == 0:
            return best_i, best_d2
        pend = []
        self._descend(q, np.arange(m), np.zeros(m, dtype=np.int64), best_d2, best_i, pend)
        while pend:
            fnode = np.concatenate([p[0] for p in pend])
            frow = np.concatenate([p[1] for p in pend])
            fgap = np.concatenate([p[2] for p in pend])
            pend = []
            keep = fgap <= best_d2[frow]
            if keep.any():
                self._descend(q, frow[keep], fnode[keep], best_d2, best_i, pend)
        return best_i, best_d2

    def nearest_neighbor(self, point):
        """Single-point convenience wrapper: (index, squared distance)."""
        idx, d2 = self.query(np.asarray(point, dtype=np.float64).reshape(1, 3))
        return int(idx[0]), float(d2[0])


def build_kdtree(ps, leaf_size=16):
    return KdTree(ps, leaf_size)


def _nn_brute(q, pts, chunk=512):
    """Chunked linear scan. Lowest index wins ties (argmin takes the first)."""
    m = len(q)
    idx = np.empty(m, dtype=np.int64)
    d2min = np.empty(m)
    for lo in range(0, m, chunk):
        d2 = cdist(q[lo:lo + chunk], pts, "sqeuclidean")
        i = np.argmin(d2, axis=1)
        idx[lo:lo + chunk] = i
        d2min[lo:lo + chunk] = d2[np.arange(len(i)), i]
    return idx, d2min


def _nn(q, pts, backend, tree=None):
    if backend == "brute":
        return _nn_brute(q, pts)
    if backend == "kdtree":
        if tree is None:
            tree = KdTree(pts)
        return tree.query(q)
    raise ValueError(f"unknown backend {backend!r}; expected 'brute' or 'kdtree'")


def chamfer_distance(a, b, want_grad=False, backend="kdtree", normalize=False):
    """Chamfer distance, optionally with gradients for both arguments.

    normalize=False reproduces the plain double sum. normalize=True divides
    each directed sum by its source set's cardinality, an extension for
    comparing across sizes; gradients scale consistently.

    The gradient of a_i collects two terms: the forward term
    2 (a_i - nn_b(a_i)) and one backward term 2 (a_i - b_j) for every b_j
    whose nearest neighbor in a is a_i.
    """
    a = validate(a)
    b = validate(b)
    if len(a) == 0 or len(b) == 0:
        raise EmptySet()
    nn_ab, d2_ab = _nn(a, b, backend)
    nn_ba, d2_ba = _nn(b, a, backend)
    wa = 1.0 / len(a) if normalize else 1.0
    wb = 1.0 / len(b) if normalize else 1.0
    value = wa * float(np.sum(d2_ab)) + wb * float(np.sum(d2_ba))
    if not want_grad:
        return DistanceResult(value, backend=backend)
    grad_a = 2.0 * wa * (a - b[nn_ab])
    np.add.at(grad_a, nn_ba, 2.0 * wb * (a[nn_ba] - b))
    grad_b = 2.0 * wb * (b - a[nn_ba])
    np.add.at(grad_b, nn_ab, 2.0 * wa * (b[nn_ab] - a))
    return DistanceResult(value, grad_a, grad_b, backend=backend)

"""Static weighted k-means and the restricted/augmented reductions.

The static solver is seeding by squared-distance sampling plus bounded
single-swap local search; it stands in for the almost-linear static
algorithm the epoch controller treats as a black box. Restricted k-means
shrinks the decision to a sketch built from the importance ordering and
approximate nearest neighbors; augmented k-means repeatedly adds batches of
distance-squared samples.
"""

from __future__ import annotations

import numpy as np

from .assignment import AssignmentStructure
from .errors import NoMassError, UsageError
from .params import Params
from .range_query import CenterIndex

_EXHAUSTIVE_LIMIT = 128   # below this support size, scan all swap candidates


def _pairwise_d2(pts: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return ((pts[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def weighted_kmeanspp(pts: np.ndarray, w: np.ndarray, k: int, rng) -> list:
    """Seeding: first center by weight, then by weight times squared distance."""
    n = pts.shape[0]
    probs = w / w.sum() if w.sum() > 0 else np.full(n, 1.0 / n)
    first = _draw(probs, rng)
    chosen = [first]
    d2 = ((pts - pts[first]) ** 2).sum(axis=1)
    while len(chosen) < k:
        mass = w * d2
        tot = mass.sum()
        if tot <= 0:
            # remaining mass is zero: pick distinct leftover points
            for i in range(n):
                if i not in chosen:
                    chosen.append(i)
                    if len(chosen) == k:
                        break
            break
        idx = _draw(mass / tot, rng)
        chosen.append(idx)
        d2 = np.minimum(d2, ((pts - pts[idx]) ** 2).sum(axis=1))
    return chosen[:k]


def _draw(probs: np.ndarray, rng) -> int:
    u = rng.random()
    acc = 0.0
    for i, p in enumerate(probs):
        acc += p
        if u <= acc:
            return i
    return len(probs) - 1


def static_weighted_kmeans(points, weights, k: int, rng, max_swaps=None):
    """k centers chosen from the support of (points, weights).

    Returns a list of k point tuples. Local search runs single swaps until a
    local optimum or the swap budget (default 50*k) is exhausted.
    """
    support = []
    seen = {}
    agg = []
    for p, w in zip(points, weights):
        p = tuple(p)
        if p in seen:
            agg[seen[p]] += w
        else:
            seen[p] = len(support)
            support.append(p)
            agg.append(float(w))
    n = len(support)
    if not (1 <= k <= n):
        raise UsageError("k out of range")
    if k == n:
        return list(support)
    pts = np.asarray(support, dtype=np.float64)
    w = np.asarray(agg, dtype=np.float64)
    if max_swaps is None:
        max_swaps = 50 * k

    chosen = weighted_kmeanspp(pts, w, k, rng)
    d2 = _pairwise_d2(pts, pts[chosen])

    def refresh():
        assign = d2.argmin(axis=1)
        best1 = d2[np.arange(n), assign]
        if k > 1:
            part = np.partition(d2, 1, axis=1)
            best2 = part[:, 1]
        else:
            best2 = np.full(n, np.inf)
        return assign, best1, best2

    assign, best1, best2 = refresh()
    cur = float(np.dot(w, best1))
    swaps = 0
    misses = 0
    exhaustive = n <= _EXHAUSTIVE_LIMIT
    miss_budget = n if exhaustive else 3 * k
    order = list(range(n))
    while swaps < max_swaps and cur > 0:
        if exhaustive:
            cand_iter = order
        else:
            mass = w * best1
            tot = mass.sum()
            if tot <= 0:
                break
            cand_iter = [_draw(mass / tot, rng)]
        improved = False
        for cand in cand_iter:
            if cand in chosen:
                continue
            dnew = ((pts - pts[cand]) ** 2).sum(axis=1)
            t1 = w * np.minimum(best1, dnew)
            t2 = w * np.minimum(best2, dnew)
            base = t1.sum()
            delta = np.bincount(assign, weights=t2 - t1, minlength=k)
            costs = base + delta
            j = int(costs.argmin())
            new_cost = float(costs[j])
            if new_cost < cur * (1 - 1e-12):
                chosen[j] = cand
                d2[:, j] = dnew
                assign, best1, best2 = refresh()
                cur = float(np.dot(w, best1))
                swaps += 1
                improved = True
                misses = 0
                break
            misses += 1
        if not improved:
            if exhaustive or misses >= miss_budget:
                break
    return [support[i] for i in chosen]


class ClusterContext:
    """Static (X, S) wrapper exposing the structure surface the restricted
    and augmented subroutines need; the dynamic controller exposes the same
    surface against its live structures."""

    def __init__(self, params: Params, seed_tag="ctx"):
        self.params = params
        self.assign = AssignmentStructure(params, seed_tag=(seed_tag, "as"))
        self.ann = CenterIndex(params, (seed_tag, "ann"))
        self.nbr = CenterIndex(params, (seed_tag, "nbr"), track_dist=True)
        self._next = 0

    @classmethod
    def from_instance(cls, params, points_weights, centers, seed_tag="ctx"):
        ctx = cls(params, seed_tag)
        for s in centers:
            ctx.center_add(tuple(s))
        for p, w in points_weights:
            ctx.point_add(tuple(p), w)
        return ctx

    def point_add(self, p, w):
        key = self._next
        self._next += 1
        self.assign.point_insert(key, p, w)
        return key

    def center_add(self, s):
        self.assign.center_insert(s)
        self.ann.insert(s)
        self.nbr.insert(s)

    def center_remove(self, s):
        self.assign.center_delete(s)
        self.ann.delete(s)
        self.nbr.delete(s)

    # surface used by the subroutines
    def centers(self):
        return list(self.assign.centers)

    def weight(self, s):
        return self.assign.weight(s)

    def ordering(self):
        return self.assign.ordering(self.nbr.dhat)

    def ann_query(self, x):
        return self.ann.ann_query(x)

    def ann_temp_delete(self, batch):
        for s in batch:
            self.ann.delete(s)

    def ann_restore(self, batch):
        for s in batch:
            self.ann.insert(s)

    def d2_sample(self, rng):
        return self.assign.d2_sample(rng)[1]

    scratch_center_add = center_add
    scratch_center_remove = center_remove


def restricted_kmeans(ctx, r: int, rng):
    """Choose r centers to delete; cost(X, S - R) stays within the configured
    factor of the best removal."""
    S = ctx.centers()
    if not (1 <= r <= len(S) - 1):
        raise UsageError("r out of range")
    ordering = ctx.ordering()
    t1 = ordering[:min(6 * r, len(S))]
    t1_set = set(t1)
    t2 = []
    if len(S) > len(t1):
        ctx.ann_temp_delete(t1)
        try:
            for c in t1:
                s = ctx.ann_query(c)
                if s is not None:
                    t2.append(s)
        finally:
            ctx.ann_restore(t1)
    sketch = list(t1)
    for s in t2:
        if s not in t1_set and s not in sketch[len(t1):]:
            sketch.append(s)
    weights = [ctx.weight(s) for s in sketch]
    keep = len(sketch) - r
    survivors = static_weighted_kmeans(sketch, weights, keep, rng)
    removed = set(sketch) - set(survivors)
    # static solver picks survivors from the support; exactness of |R| = r
    # is restored by dropping the cheapest extras if support collapsed
    removed = set(sorted(removed)[:r])
    while len(removed) < r:
        for s in sorted(sketch):
            if s not in removed:
                removed.add(s)
                break
    return removed


def augmented_kmeans(ctx, a: int, t: int, rng, keep: bool = False):
    """(a + 1) rounds of t distance-squared draws, feeding each round's batch
    back into the sampled center set. Returns the list of distinct sampled
    points (at most (a + 1) * t)."""
    if a < 1:
        raise UsageError("a must be >= 1")
    added = []
    added_set = set()
    base = set(ctx.centers())
    try:
        for _ in range(a + 1):
            batch = []
            for _ in range(t):
                try:
                    p = ctx.d2_sample(rng)
                except NoMassError:
                    p = None
                if p is None:
                    break
                batch.append(p)
            if not batch:
                break
            fresh = []
            for p in batch:
                if p not in base and p not in added_set:
                    fresh.append(p)
                    added_set.add(p)
            for p in fresh:
                ctx.scratch_center_add(p)
                added.append(p)
    finally:
        if not keep:
            for p in reversed(added):
                ctx.scratch_center_remove(p)
    return added

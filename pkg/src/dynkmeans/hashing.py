"""Consistent hashing from randomly shifted grids with color boosting.

A weak hash drops a shifted grid of cell side rho/sqrt(d) over the space;
cells have diameter <= rho. The full hash runs C independent weak hashes
("colors") and tags each point with the first color whose local cell count
stays under a cap, which upgrades the expected consistency of one shifted
grid into a worst-case cap.

Cell distances are measured to the grid points of a cell (clamped to
[1, delta]); cells holding no grid point are unreachable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import NoColorError
from .params import Params
from .rng import make_rng

# Sentinel returned by the capped DFS when the cell count exceeds the cap.
OVER_CAP = object()

_CACHE_LIMIT = 400_000


@dataclass(frozen=True)
class WeakHash:
    rho: float
    cell: float            # rho / sqrt(d)
    shift: tuple           # random offset, each coordinate in [0, cell)
    delta: int

    @staticmethod
    def sample(rho: float, d: int, delta: int, rng) -> "WeakHash":
        cell = rho / math.sqrt(d)
        shift = tuple(rng.random() * cell for _ in range(d))
        return WeakHash(rho=rho, cell=cell, shift=shift, delta=delta)

    def eval(self, x) -> tuple:
        cell = self.cell
        shift = self.shift
        return tuple(math.floor((x[j] + shift[j]) / cell)
                     for j in range(len(x)))

    def cell_ranges(self, z):
        """Per-coordinate grid-integer range [lo, hi] of cell z, clamped to
        [1, delta]; None when the cell holds no grid point."""
        out = []
        cell = self.cell
        delta = self.delta
        for zj, vj in zip(z, self.shift):
            lo = math.ceil(zj * cell - vj)
            hi = math.ceil((zj + 1) * cell - vj) - 1
            if lo < 1:
                lo = 1
            if hi > delta:
                hi = delta
            if lo > hi:
                return None
            out.append((lo, hi))
        return out

    def cell_dist2(self, x, z) -> float:
        """Squared distance from x to the grid points of cell z (inf if empty)."""
        v = self._dist2_capped(x, z, math.inf)
        return math.inf if v is None else v

    def _dist2_capped(self, x, z, r2):
        """cell_dist2 with early exit; None when empty or above r2."""
        cell = self.cell
        shift = self.shift
        delta = self.delta
        ceil = math.ceil
        s = 0.0
        for j in range(len(x)):
            zc = z[j] * cell - shift[j]
            lo = ceil(zc)
            hi = ceil(zc + cell) - 1
            if lo < 1:
                lo = 1
            if hi > delta:
                hi = delta
            if lo > hi:
                return None
            xi = x[j]
            if xi < lo:
                t = lo - xi
            elif xi > hi:
                t = xi - hi
            else:
                continue
            s += t * t
            if s > r2:
                return None
        return s

    def _axis_table(self, x, r: float):
        """Per-axis maps cell-index -> squared per-coordinate distance to the
        clamped grid range (inf for axis-empty cells), covering every index
        within r of x along that axis."""
        cell = self.cell
        delta = self.delta
        ceil = math.ceil
        span = int(r / cell) + 2
        tables = []
        for j in range(len(x)):
            xj = x[j]
            vj = self.shift[j]
            zx = math.floor((xj + vj) / cell)
            row = {}
            for zj in range(zx - span, zx + span + 1):
                zc = zj * cell - vj
                lo = ceil(zc)
                hi = ceil(zc + cell) - 1
                if lo < 1:
                    lo = 1
                if hi > delta:
                    hi = delta
                if lo > hi:
                    row[zj] = math.inf
                elif xj < lo:
                    row[zj] = (lo - xj) ** 2
                elif xj > hi:
                    row[zj] = (xj - hi) ** 2
                else:
                    row[zj] = 0.0
            tables.append(row)
        return tables

    def ball_cells(self, x, r: float, cap: int):
        """Cells whose grid preimage meets ball(x, r), by DFS over +-1
        neighbors; OVER_CAP once more than `cap` cells are collected.

        Neighbors are explored per coordinate ascending, -1 before +1.
        """
        if cap < 1:
            return OVER_CAP
        r2 = r * r
        start = self.eval(x)
        if self._dist2_capped(x, start, r2) is None:
            return set()
        tables = self._axis_table(x, r)
        d = len(x)
        found = {start}
        seen = {start}
        start_axes = [tables[j].get(start[j], math.inf) for j in range(d)]
        stack = [(start, sum(start_axes), start_axes)]
        inf = math.inf
        while stack:
            z, s, axes = stack.pop()
            for j in range(d):
                zj = z[j]
                vj = axes[j]
                row = tables[j]
                for step in (-1, 1):
                    nv = row.get(zj + step, inf)
                    ns = s - vj + nv
                    if ns > r2:
                        continue
                    nz = z[:j] + (zj + step,) + z[j + 1:]
                    if nz in seen:
                        continue
                    seen.add(nz)
                    found.add(nz)
                    if len(found) > cap:
                        return OVER_CAP
                    naxes = list(axes)
                    naxes[j] = nv
                    stack.append((nz, ns, naxes))
        return found


class ConsistentHash:
    """Efficient (gamma, lambda_cap, rho)-hash built from `colors` weak hashes.

    Hash values are (color, cell_id) pairs. Evaluation picks the smallest
    color whose 2*rho/gamma ball spans at most lambda_cap/colors cells.
    Evaluations and bucket enumerations are memoized until a resample.
    """

    def __init__(self, params: Params, rho: float, seed_tag):
        self.params = params
        self.rho = rho
        self.seed_tag = seed_tag
        self._sample(0)

    def _sample(self, attempt: int):
        p = self.params
        self.attempt = attempt
        self.weak = [
            WeakHash.sample(self.rho, p.d, p.delta,
                            make_rng(p.seed, "weak", self.seed_tag, attempt, c))
            for c in range(p.colors)
        ]
        self._eval_cache = {}
        self._bucket_cache = {}

    def resample(self):
        """Fresh hash family after a NoColor event; owner must rebuild."""
        self._sample(self.attempt + 1)

    @property
    def per_color_cap(self) -> int:
        return self.params.per_color_cap

    def eval(self, x) -> tuple:
        """Hash value (color, cell_id); NoColorError if every color overflows."""
        hit = self._eval_cache.get(x)
        if hit is not None:
            return hit
        r = 2.0 * self.rho / self.params.gamma
        cap = self.per_color_cap
        for c, wh in enumerate(self.weak):
            cells = wh.ball_cells(x, r, cap)
            if cells is not OVER_CAP:
                out = (c, wh.eval(x))
                if len(self._eval_cache) >= _CACHE_LIMIT:
                    self._eval_cache.clear()
                self._eval_cache[x] = out
                return out
        raise NoColorError(f"no color admits point {x} under cap {cap}")

    def ball_buckets(self, x, radius: float | None = None) -> set:
        """Size-(<= lambda_cap) value set sandwiched between the hash image
        of ball(x, radius) and of ball(x, radius + rho).

        radius defaults to rho/gamma and must not exceed it.
        """
        if radius is None:
            radius = self.rho / self.params.gamma
        key = (x, radius)
        hit = self._bucket_cache.get(key)
        if hit is not None:
            return hit
        cap = self.per_color_cap
        out = set()
        for c, wh in enumerate(self.weak):
            cells = wh.ball_cells(x, radius, cap)
            if cells is OVER_CAP:
                continue
            for z in cells:
                out.add((c, z))
        if len(self._bucket_cache) >= _CACHE_LIMIT:
            self._bucket_cache.clear()
        self._bucket_cache[key] = out
        return out

import itertools

import pytest

from dynkmeans.errors import NoColorError
from dynkmeans.geometry import dist
from dynkmeans.hashing import OVER_CAP, ConsistentHash, WeakHash
from dynkmeans.params import Params
from dynkmeans.rng import make_rng


def wh_1d(shift=0.0, cell=2.0, delta=8):
    return WeakHash(rho=cell, cell=cell, shift=(shift,), delta=delta)


def test_weak_eval_floor():
    wh = wh_1d()
    assert wh.eval((3,)) == (1,)
    assert wh.eval((4,)) == (2,)


def test_weak_eval_shift_boundary():
    eps = 1e-9
    wh = wh_1d(shift=2.0 - eps)
    assert wh.eval((1,)) == (1,)


def test_ball_cells_r0():
    wh = wh_1d()
    assert wh.ball_cells((5,), 0.0, 10) == {wh.eval((5,))}


def test_ball_cells_enumeration():
    # cells [2,4), [4,6), [6,8) hold grid points within distance 2 of x=4;
    # cell [0,2) holds only the grid point 1, at distance 3
    wh = wh_1d()
    assert wh.ball_cells((4,), 2.0, 100) == {(1,), (2,), (3,)}


def test_ball_cells_brute_force_agreement():
    rng = make_rng(3, "cells")
    for _ in range(40):
        shift = rng.random() * 2.0
        wh = wh_1d(shift=shift, cell=2.0, delta=16)
        x = (rng.randint(1, 16),)
        r = rng.random() * 6
        got = wh.ball_cells(x, r, 1000)
        want = {wh.eval((g,)) for g in range(1, 17)
                if abs(g - x[0]) <= r}
        # DFS may also include cells whose nearest grid point is within r
        # but not an exact multiple; recompute via cell_dist2
        lo = wh.eval((1,))[0]
        hi = wh.eval((16,))[0]
        want2 = {(z,) for z in range(lo - 2, hi + 3)
                 if wh.cell_dist2(x, (z,)) <= r * r}
        assert got == want2
        assert want <= got


def test_ball_cells_cap():
    wh = wh_1d()
    assert wh.ball_cells((4,), 2.0, 1) is OVER_CAP


def test_hash_eval_first_color_when_cap_huge():
    p = Params(epsilon=0.5, d=1, delta=8, colors=1, lambda_cap=1000, seed=4)
    h = ConsistentHash(p, rho=2.0, seed_tag="t")
    for x in range(1, 9):
        assert h.eval((x,))[0] == 0


def test_hash_eval_same_cell_same_value():
    p = Params(epsilon=0.5, d=2, delta=16, seed=5)
    h = ConsistentHash(p, rho=8.0, seed_tag="t")
    groups = {}
    for x in itertools.product(range(1, 17), repeat=2):
        groups.setdefault(h.eval(x), []).append(x)
    for v, members in groups.items():
        for a in members:
            assert h.eval(a) == v


def test_hash_eval_forced_no_color():
    # per-color cap of 1 cell cannot fit a ball spanning two cells
    p = Params(epsilon=0.5, d=1, delta=64, colors=1, lambda_cap=1, seed=6)
    h = ConsistentHash(p, rho=6.0, seed_tag="t")
    with pytest.raises(NoColorError):
        for x in range(1, 65):
            h.eval((x,))


def test_ball_buckets_contains_own_value():
    p = Params(epsilon=0.5, d=2, delta=16, seed=7)
    h = ConsistentHash(p, rho=4.0, seed_tag="t")
    for x in itertools.product(range(1, 17, 3), repeat=2):
        assert h.eval(x) in h.ball_buckets(x)


def test_ball_buckets_inner_inclusion_pairs():
    p = Params(epsilon=0.5, d=2, delta=16, seed=8)
    rho = 8.0
    h = ConsistentHash(p, rho=rho, seed_tag="t")
    rng = make_rng(8, "pairs")
    for _ in range(200):
        x = (rng.randint(1, 16), rng.randint(1, 16))
        y = (rng.randint(1, 16), rng.randint(1, 16))
        if dist(x, y) <= rho / p.gamma:
            assert h.eval(y) in h.ball_buckets(x)


def test_full_grid_sandwich_small():
    p = Params(epsilon=0.5, d=2, delta=16, seed=9)
    rho = 8.0
    h = ConsistentHash(p, rho=rho, seed_tag="t")
    grid = list(itertools.product(range(1, 17), repeat=2))
    value = {x: h.eval(x) for x in grid}
    realized = {}
    for x, v in value.items():
        realized.setdefault(v, []).append(x)
    for x in grid:
        phi = h.ball_buckets(x)
        assert len(phi) <= p.lambda_cap
        for y in grid:
            if dist(x, y) <= rho / p.gamma:
                assert value[y] in phi
        for v in phi:
            pts = realized.get(v)
            if pts:
                assert min(dist(x, q) for q in pts) <= 2 * rho + 1e-9


def test_diameter_exhaustive():
    for d, rho in ((1, 2.0), (2, 4.0)):
        p = Params(epsilon=0.5, d=d, delta=16, seed=10)
        h = ConsistentHash(p, rho=rho, seed_tag="t")
        groups = {}
        for x in itertools.product(range(1, 17), repeat=d):
            groups.setdefault(h.eval(x), []).append(x)
        for members in groups.values():
            for a in members:
                for b in members:
                    assert dist(a, b) <= rho + 1e-9


def test_determinism_same_seed():
    p = Params(epsilon=0.5, d=2, delta=16, seed=11)
    h1 = ConsistentHash(p, rho=4.0, seed_tag="same")
    h2 = ConsistentHash(p, rho=4.0, seed_tag="same")
    for x in itertools.product(range(1, 17, 2), repeat=2):
        assert h1.eval(x) == h2.eval(x)
        assert h1.ball_buckets(x) == h2.ball_buckets(x)

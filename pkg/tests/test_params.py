import math

import pytest

from dynkmeans.errors import UsageError
from dynkmeans.params import GAMMA_FLOOR, Params, schedule_for


def test_defaults_practical():
    p = Params(epsilon=0.5, d=2, delta=256)
    assert p.gamma >= GAMMA_FLOOR
    assert p.lam >= 3 * p.gamma  # robustness balls nest inside the next scale
    assert p.colors >= 2
    assert p.per_color_cap >= 1
    assert p.lambda_cap >= p.colors * p.per_color_cap


def test_defaults_paper_faithful():
    p = Params(epsilon=0.5, d=2, delta=256, preset="paper_faithful")
    assert math.isclose(p.lam, p.theta ** 2)
    assert p.theta == (3 * p.gamma) ** 2


def test_paper_faithful_rejects_inconsistent_lam():
    with pytest.raises(UsageError):
        Params(epsilon=0.5, d=2, delta=256, preset="paper_faithful",
               theta=9.0, lam=80.0)


def test_gamma_floor_enforced():
    with pytest.raises(UsageError):
        Params(epsilon=0.5, d=2, delta=256, gamma=2.0)


def test_basic_range_checks():
    for kw in ({"epsilon": 0.0}, {"epsilon": 1.0}, {"d": 0}, {"delta": 1},
               {"preset": "bogus"}, {"theta": 0.5}, {"colors": -1}):
        with pytest.raises(UsageError):
            Params(**{"epsilon": 0.5, "d": 2, "delta": 256, **kw})


def test_schedule_structure():
    p = Params(epsilon=0.5, d=2, delta=256)
    s = schedule_for(p)
    assert s.makerobust_div <= s.robust_div  # re-certify above the check level
    assert s.t_cap >= 1
    assert s.radius(1) == s.lam ** 3
    assert s.contamination_radius(0) == s.lam ** 1.5
    assert s.keep_threshold(1) == s.lam ** 4 / s.theta
    assert s.indicator_gammas[0] == 1.0
    assert s.lam ** (3 * s.t_cap) >= p.aspect


def test_schedule_paper_faithful_exponents():
    p = Params(epsilon=0.5, d=2, delta=64, preset="paper_faithful")
    s = schedule_for(p)
    lam, th = p.lam, p.theta
    assert math.isclose(s.ell_stop_factor, th ** 8 * lam ** 44)
    assert math.isclose(s.ell_shrink, 36 * lam ** 51)
    assert math.isclose(s.augment_per_update, lam ** 52)
    assert math.isclose(s.makerobust_div, lam ** 7)
    assert math.isclose(s.robust_div, lam ** 10)
    assert s.d2_samples >= p.epsilon ** -6 * p.d


def test_aspect_and_levels():
    p = Params(epsilon=0.5, d=4, delta=128)
    assert math.isclose(p.aspect, 2 * 128)
    assert 2 ** p.dyadic_levels >= p.aspect

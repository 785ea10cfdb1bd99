import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blowup_lab import odi


def test_critical_exponent():
    assert odi.critical_exponent(3) == 2
    assert odi.critical_exponent(2) == 3
    assert odi.critical_exponent(1) == math.inf
    with pytest.raises(odi.DomainError):
        odi.critical_exponent(0)


def test_unit_ball_volume():
    assert odi.unit_ball_volume(1) == pytest.approx(2)
    assert odi.unit_ball_volume(2) == pytest.approx(math.pi)
    assert odi.unit_ball_volume(3) == pytest.approx(4 * math.pi / 3)


def test_sharp_constants_p2():
    # hand evaluation at p = 2: ratio (p-1)^3/max(p, 2(p-1)) = 1/2
    c_crit = 0.5 * 0.5 * 2.0 ** -3
    sc = odi.sharp_constants(2, 2.0)
    assert sc.c_tilde_crit == pytest.approx(c_crit, rel=1e-14)
    assert c_crit == 1 / 32
    assert sc.remark_crit_bound == pytest.approx(32, rel=1e-14)
    assert sc.b0 == pytest.approx(1.25)
    assert sc.b1 == pytest.approx(0.75)
    assert sc.c_tilde_sub == pytest.approx(1 / 480, rel=1e-14)
    assert sc.remark_sub_bound == pytest.approx(230400, rel=1e-12)
    assert sc.p_prime * (sc.p - 1) == pytest.approx(sc.p)


def test_subcritical_fields_invalid_at_critical_power():
    sc = odi.sharp_constants(3, 2.0)
    assert not sc.subcritical_valid
    assert sc.c_tilde_sub is None
    with pytest.raises(odi.DomainError):
        odi.sharp_constants(2, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.floats(1.1, 4.0))  # C_crit underflows doubles as p -> 1
def test_consistency_identities(n, p):
    sc = odi.sharp_constants(n, p)
    if not (math.isfinite(sc.remark_crit_bound) and sc.c_tilde_crit > 0):
        return
    assert sc.remark_crit_bound * sc.c_tilde_crit ** (p - 1) == pytest.approx(1, rel=1e-12)
    if sc.subcritical_valid and math.isfinite(sc.remark_sub_bound) and sc.c_tilde_sub > 0:
        e = 2 * (p - 1) / (2 - (n - 1) * (p - 1))
        assert sc.remark_sub_bound * sc.c_tilde_sub**e == pytest.approx(1, rel=1e-12)
        assert sc.b0 >= sc.b1 > 0


def test_critical_ladder_p2():
    lad = odi.critical_ladder(odi.CriticalOdiParams(1.0, 2.0, 0.125), 5)
    assert [lad[k].q for k in (1, 2, 3)] == [1, 2, 4]
    assert lad[1].lnT == pytest.approx(2.0)
    assert math.exp(lad[2].lnC) == pytest.approx(1 / 32, rel=1e-12)
    assert lad.tilde_T is None


def test_subcritical_ladder_n2_p2():
    lad = odi.subcritical_ladder(odi.SubcriticalOdiParams(1.0, 2.0, 2, 0.125), 5)
    assert lad[1].q == 2
    assert lad[2].q == pytest.approx(2.5)
    assert math.exp(lad[2].lnC) == pytest.approx(1 / 960, rel=1e-12)
    assert math.isfinite(lad.tilde_T)
    assert all(e.lnT <= lad.tilde_T + 1e-12 for e in lad.entries)


@pytest.mark.parametrize("p", [1.2, 2.0, 3.0])
def test_critical_closed_forms(p):
    prm = odi.CriticalOdiParams(0.7, p, 0.125)
    lad = odi.critical_ladder(prm, 25)
    for e in lad.entries:
        c = odi.critical_closed_form(prm, e.k)
        assert e.q == pytest.approx((p ** (e.k - 1) + p - 2) / (p - 1), rel=1e-10)
        assert e.lnT == pytest.approx(c.lnT, rel=1e-10)
        assert e.lnC == pytest.approx(c.lnC, rel=1e-8)


@pytest.mark.parametrize("n,p", [(2, 2.0), (3, 1.5), (4, 1.2), (1, 3.0)])
def test_subcritical_closed_forms_and_ratio_bounds(n, p):
    prm = odi.SubcriticalOdiParams(0.3, p, n, 0.125)
    lad = odi.subcritical_ladder(prm, 25)
    b0, b1 = odi.sharp_constants(n, p).b0, odi.sharp_constants(n, p).b1
    for e in lad.entries:
        c = odi.subcritical_closed_form(prm, e.k)
        assert e.q == pytest.approx(c.q, rel=1e-10)
        assert e.lnC == pytest.approx(c.lnC, rel=1e-8)
        assert e.lnT == pytest.approx(c.lnT, rel=1e-10)
        if e.k >= 2:
            j = e.k - 1
            assert e.q / p**j <= b0 * (1 + 1e-12)
            assert (e.q - 1) / p**j <= b1 * (1 + 1e-12)


def test_ladders_strictly_increasing():
    for lad in (
        odi.critical_ladder(odi.CriticalOdiParams(1.0, 1.5, 0.5), 30),
        odi.subcritical_ladder(odi.SubcriticalOdiParams(1.0, 1.5, 3, 0.5), 30),
    ):
        qs = [e.q for e in lad.entries]
        ts = [e.lnT for e in lad.entries]
        assert all(b > a for a, b in zip(qs, qs[1:]))
        assert all(b > a for a, b in zip(ts, ts[1:]))


def test_ladder_cap_and_domain():
    with pytest.raises(odi.ParameterError):
        odi.critical_ladder(odi.CriticalOdiParams(1.0, 2.0, 0.1), 61)
    with pytest.raises(odi.DomainError):
        odi.SubcriticalOdiParams(1.0, 3.0, 2, 0.1)
    with pytest.raises(odi.DomainError):
        odi.CriticalOdiParams(-1.0, 2.0, 0.1)


def test_predictors():
    assert odi.predict_lifespan_critical(1.0, 2.0) == pytest.approx(32)
    assert odi.predict_lifespan_critical(0.5, 2.0) == pytest.approx(64)
    assert odi.predict_lifespan_subcritical(1.0, 2, 2.0) == pytest.approx(230400)
    assert odi.predict_lifespan_subcritical(0.5, 2, 2.0) == pytest.approx(4 * 230400)
    # exponent -1 at n = 3, p = 1.5
    r = odi.predict_lifespan_subcritical(0.1, 3, 1.5) / odi.predict_lifespan_subcritical(0.2, 3, 1.5)
    assert r == pytest.approx(2.0)
    with pytest.raises(odi.DomainError):
        odi.predict_lifespan_subcritical(1.0, 3, 2.0)
    # beyond double range near p_c: reported as inf, not an exception
    assert odi.predict_lifespan_subcritical(1e-3, 2, 2.99) == math.inf


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 10), st.floats(1.2, 2.5))
def test_predictors_decreasing_in_A(A, p):
    assert odi.predict_lifespan_critical(A, p) > odi.predict_lifespan_critical(A * 1.1, p)
    assert odi.predict_lifespan_subcritical(A, 2, p) > odi.predict_lifespan_subcritical(A * 1.1, 2, p)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.floats(0.02, 0.98))
def test_tilde_T_finite(n, frac):
    pc = odi.critical_exponent(n)
    p = 1 + frac * (min(pc, 4.0) - 1)
    if p - 1 < 2e-6 or pc - p < 2e-6:
        return
    lad = odi.subcritical_ladder(odi.SubcriticalOdiParams(1.0, p, n, 0.2), 3)
    assert math.isfinite(lad.tilde_T)


def test_theorem_constants():
    # hand evaluation: 4^-2 * 1 * 4 * 4^3 * 2^-1 * pi^(1/2)
    crit = odi.theorem_constants(3, 2.0, 1.0, 1.0).crit
    assert crit == pytest.approx(8 * math.sqrt(math.pi), rel=1e-12)
    # n = 2, p = 2 with alpha_1 = 2: 32 * 0.9375^2 * 256 * (2/3)^2
    sub = odi.theorem_constants(2, 2.0, 1.0, 1.0).sub
    assert sub == pytest.approx(32 * 0.9375**2 * 256 * (2 / 3) ** 2, rel=1e-12)
    assert sub == pytest.approx(3200, rel=1e-12)
    with pytest.raises(odi.DomainError):
        odi.theorem_constants(2, 2.0, 1.0, 1.0, field="crit")
    with pytest.raises(odi.DomainError):
        odi.theorem_constants(3, 2.0, 1.0, 1.0, field="sub")

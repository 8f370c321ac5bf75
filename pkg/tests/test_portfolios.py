import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stressscore.errors import ValidationError
from stressscore.marketdata import Factor
from stressscore.portfolios import bond_duration, build_universe, involved_factors, write_universe_csv

CURVES = ["AAA", "ALL"]
PILLARS = ["6M", "1Y", "2Y", "3Y", "4Y", "5Y"]


def durations(value=lambda f: 1.0 + PILLARS.index(f.pillar)):
    return {Factor(c, p): value(Factor(c, p)) for c in CURVES for p in PILLARS}


def cash_flow_duration(T, y, c, f):
    # every coupon date listed explicitly, discounted one by one
    n = round(T * f)
    t = [T - k / f for k in range(n)][::-1]
    cf = [100 * c / f] * n
    cf[-1] += 100
    pv = [x / (1 + y / f) ** (f * ti) for x, ti in zip(cf, t)]
    return sum(ti * p for ti, p in zip(t, pv)) / sum(pv)


@pytest.mark.parametrize("T, y, c", [(5.0, 0.03, 0.03), (2.0, 0.05, 0.01), (0.5, 0.01, 0.02), (4.0, -0.004, 0.0001)])
def test_duration_against_cash_flows(T, y, c):
    assert bond_duration(T, y, c) == pytest.approx(cash_flow_duration(T, y, c, 2), rel=1e-13)


def test_zero_coupon_duration_is_maturity():
    assert bond_duration(3.0, 0.02, 0.0) == 3.0


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([1.0, 2.0, 3.0, 5.0]), st.floats(-0.01, 0.1), st.floats(0.001, 0.1), st.floats(0.001, 0.05))
def test_duration_decreases_with_coupon(T, y, c, dc):
    assert bond_duration(T, y, c + dc) < bond_duration(T, y, c) <= T


def test_universe_size_and_names():
    u = build_universe(CURVES, PILLARS, durations())
    assert len(u) == 4 * math.comb(12, 2) == 264
    assert len({p.name for p in u}) == 264
    assert {p.beta_kind for p in u} == {"unit", "duration"}
    assert "L.AAA.3Y_S.ALL.3Y_b1" in {p.name for p in u}


def test_duration_beta_is_duration_neutral():
    u = build_universe(CURVES, PILLARS, durations())
    for p in u:
        assert len(involved_factors(p)) == 2
        if p.beta_kind == "duration":
            assert p.exposure.sum() == pytest.approx(0.0, abs=1e-12)
        (bl, wl), (bs, ws) = p.legs
        assert wl == 1.0 and ws < 0


def test_pnl_sign_conventions():
    direct = {p.name: p for p in build_universe(CURVES, PILLARS, durations(), pnl_sign="direct")}
    std = {p.name: p for p in build_universe(CURVES, PILLARS, durations(), pnl_sign="price")}
    for name, p in direct.items():
        np.testing.assert_array_equal(p.exposure, -std[name].exposure)
    p = direct["L.AAA.2Y_S.AAA.6M_b1"]
    assert p.exposure[PILLARS.index("2Y")] == 3.0 and p.exposure[0] == -1.0
    with pytest.raises(ValidationError):
        build_universe(CURVES, PILLARS, durations(), pnl_sign="other")


def test_missing_duration():
    d = durations()
    d.pop(Factor("ALL", "5Y"))
    with pytest.raises(ValidationError, match="missing duration"):
        build_universe(CURVES, PILLARS, d)


def test_universe_csv(tmp_path):
    u = build_universe(CURVES, PILLARS[:2], durations())
    write_universe_csv(u, tmp_path / "u.csv", ["config_hash=abc"])
    lines = (tmp_path / "u.csv").read_text().splitlines()
    assert lines[0] == "# config_hash=abc"
    assert len(lines) == 2 + len(u)

"""Sharpe, wealth, drawdown, and the report fields against brute-force oracles."""

import math

import numpy as np
import pytest

from bwsl.errors import DataError, RuinError, ZeroVolatilityError
from bwsl.metrics import (
    cumulative_wealth,
    degenerate_report,
    max_drawdown,
    report,
    report_or_degenerate,
    sharpe,
)


def brute_force_mdd(wealth):
    worst = 0.0
    for i in range(len(wealth)):
        for j in range(i, len(wealth)):
            worst = max(worst, (wealth[i] - wealth[j]) / wealth[i])
    return worst


def test_sharpe_two_point_example():
    assert sharpe([0.0, 0.2]) == pytest.approx(1.0, abs=1e-15)


def test_sharpe_zero_volatility_errors():
    with pytest.raises(ZeroVolatilityError):
        sharpe([0.05, 0.05, 0.05])


def test_sharpe_centering_at_theta():
    r = [0.0, 0.2]
    assert sharpe(r, theta=0.1) == pytest.approx(0.0, abs=1e-15)


def test_sharpe_applies_tc_to_mean_only():
    r = np.array([0.0, 0.2])
    assert sharpe(r, tc=0.05) == pytest.approx((0.1 - 0.05) / 0.1, abs=1e-15)


def test_sharpe_needs_two_returns():
    with pytest.raises(DataError):
        sharpe([0.1])


def test_cumulative_wealth_identity():
    np.testing.assert_array_equal(cumulative_wealth([0.0, 0.0, 0.0]), np.ones(4))


def test_cumulative_wealth_product():
    w = cumulative_wealth([0.1, -0.1])
    assert w[-1] == pytest.approx(0.99, abs=1e-15)


def test_cumulative_wealth_with_tc():
    w = cumulative_wealth([0.01] * 12, tc=0.001)
    assert w[-1] == pytest.approx(1.009**12, rel=1e-12)


def test_cumulative_wealth_ruin():
    with pytest.raises(RuinError):
        cumulative_wealth([0.5, -1.0])


def test_mdd_monotone_series_is_zero():
    assert max_drawdown([1.0, 1.1, 1.2, 1.3]) == 0.0


def test_mdd_known_case():
    assert max_drawdown([1.0, 1.2, 0.9, 1.5]) == pytest.approx(0.25, abs=1e-15)


def test_mdd_single_element():
    assert max_drawdown([1.0]) == 0.0


def test_mdd_matches_brute_force_on_random_series():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(1, 40))
        wealth = np.exp(np.cumsum(rng.normal(0, 0.1, size=n)))
        assert max_drawdown(wealth) == brute_force_mdd(wealth)


def test_mdd_invariant_under_positive_scaling():
    rng = np.random.default_rng(1)
    wealth = np.exp(np.cumsum(rng.normal(0, 0.2, size=30)))
    assert max_drawdown(wealth) == pytest.approx(max_drawdown(wealth * 7.3), abs=1e-15)


def test_report_apr_and_ddr_example():
    rep = report([0.2, -0.1], theta=0.0, tc=0.0, periods_per_year=12)
    assert rep.apr == pytest.approx(0.6, abs=1e-15)
    downside = math.sqrt(0.01 / 2)
    assert downside == pytest.approx(0.07071067811865475, abs=1e-15)
    assert rep.ddr == pytest.approx(0.6 / downside, rel=1e-12)
    assert rep.ddr == pytest.approx(8.485281374238571, rel=1e-9)


def test_report_flags_no_downside():
    rep = report([0.1, 0.2, 0.3], tc=0.0)
    assert math.isinf(rep.ddr)
    assert "no_downside" in rep.flags


def test_report_asr_equals_sharpe_scaled():
    rng = np.random.default_rng(2)
    r = rng.normal(0.01, 0.05, size=36)
    rep = report(r, theta=0.0, tc=0.0, periods_per_year=12)
    assert rep.asr == pytest.approx(sharpe(r) * math.sqrt(12), rel=1e-12)
    assert rep.sharpe == pytest.approx(sharpe(r), rel=1e-12)


def test_report_scaling_property():
    rng = np.random.default_rng(3)
    r = rng.normal(0.0, 0.03, size=24)
    lam = 2.5
    base = report(r, tc=0.0)
    scaled = report(lam * r, tc=0.0)
    assert scaled.apr == pytest.approx(lam * base.apr, rel=1e-12)
    assert scaled.avol == pytest.approx(lam * base.avol, rel=1e-12)
    assert scaled.asr == pytest.approx(base.asr, rel=1e-12)


def test_report_zero_volatility_raises():
    with pytest.raises(ZeroVolatilityError):
        report([0.01, 0.01])


def test_report_wealth_invariants():
    r = np.array([0.05, -0.02, 0.01])
    rep = report(r, tc=0.001)
    assert rep.wealth[0] == 1.0
    assert rep.wealth.size == r.size + 1
    np.testing.assert_allclose(rep.wealth, cumulative_wealth(r, 0.001))


def test_degenerate_report_is_flagged_not_thrown():
    rep = report_or_degenerate([0.02, 0.02], tc=0.0)
    assert "zero_volatility" in rep.flags
    assert math.isnan(rep.asr)
    rep1 = report_or_degenerate([0.02], tc=0.0)
    assert "short_series" in rep1.flags


def test_kv_and_csv_serialization_roundtrip_values():
    rep = report([0.0, 0.2], tc=0.0)
    kv = rep.to_kv()
    assert "sharpe=1.0" in kv
    assert "apr=" in kv and "flags=" in kv
    row = rep.to_csv_row()
    fields = row.split(",")
    assert fields[0] == "2"
    assert float(fields[4]) == pytest.approx(1.0, abs=1e-15)


def test_degenerate_report_keeps_wealth():
    rep = degenerate_report([0.01, 0.01], tc=0.0)
    assert rep.final_wealth == pytest.approx(1.01**2, rel=1e-12)

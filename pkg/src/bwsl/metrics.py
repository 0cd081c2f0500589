"""Sharpe objective and the evaluation suite.

Conventions: per-period returns R_t; A = mean(R_t - tc) (flat per-period
transaction cost), V = population std of R_t, sharpe H = (A - theta)/V.
Annualization over N_Y periods per year: APR = A*N_Y, AVOL = V*sqrt(N_Y),
ASR = APR/AVOL. Max drawdown is computed on the cumulative-wealth series
with a running peak. Downside deviation is the root mean square of
min(R_t, 0) over all periods (MAR = 0).

Degenerate denominators in a report are flagged rather than thrown:
MDD = 0 makes CR +inf with flag ``no_drawdown``; no negative returns make
DDR +inf with flag ``no_downside``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, RuinError, ZeroVolatilityError

CSV_COLUMNS = (
    "n_periods",
    "apr",
    "avol",
    "asr",
    "sharpe",
    "mdd",
    "cr",
    "ddr",
    "final_wealth",
    "theta",
    "tc",
    "periods_per_year",
    "flags",
)


def sharpe(returns, theta: float = 0.0, tc: float = 0.0) -> float:
    """Mean excess return (net of tc) per unit of return volatility."""
    r = np.asarray(returns, dtype=float)
    if r.ndim != 1 or r.size < 2:
        raise DataError("sharpe: need at least 2 returns")
    a = float(np.mean(r - tc))
    v = float(np.std(r))
    if v == 0.0 or np.ptp(r) == 0.0:
        raise ZeroVolatilityError("sharpe: returns have zero volatility")
    return (a - theta) / v


def cumulative_wealth(returns, tc: float = 0.0) -> np.ndarray:
    """Wealth series of length T+1 starting at 1: prod of (R_t + 1 - tc)."""
    r = np.asarray(returns, dtype=float)
    factors = r + 1.0 - tc
    if np.any(factors <= 0):
        t = int(np.argmax(factors <= 0))
        raise RuinError(f"cumulative wealth ruined at period index {t}")
    wealth = np.empty(r.size + 1)
    wealth[0] = 1.0
    np.cumprod(factors, out=wealth[1:])
    return wealth


def max_drawdown(wealth) -> float:
    """Largest peak-to-trough fraction lost, via a running-peak pass."""
    w = np.asarray(wealth, dtype=float)
    if np.any(w <= 0):
        raise DataError("max_drawdown: wealth must be positive")
    if w.size < 2:
        return 0.0
    peaks = np.maximum.accumulate(w)
    return float(np.max((peaks - w) / peaks))


@dataclass(frozen=True)
class PerformanceReport:
    """Return series plus the derived risk/return measures."""

    returns: np.ndarray
    wealth: np.ndarray
    apr: float
    avol: float
    asr: float
    mdd: float
    cr: float
    ddr: float
    theta: float
    tc: float
    periods_per_year: int
    flags: tuple[str, ...] = field(default=())

    @property
    def sharpe(self) -> float:
        """Per-period (A - theta)/V implied by the annualized fields."""
        if self.avol == 0.0 or math.isnan(self.avol):
            return math.nan
        ny = self.periods_per_year
        return (self.apr / ny - self.theta) / (self.avol / math.sqrt(ny))

    @property
    def final_wealth(self) -> float:
        return float(self.wealth[-1])

    def to_kv(self) -> str:
        """Flat key=value text block."""
        lines = []
        for key in CSV_COLUMNS:
            lines.append(f"{key}={self._format(key)}")
        return "\n".join(lines) + "\n"

    def to_csv_row(self) -> str:
        """One CSV row in CSV_COLUMNS order (flags joined by ';')."""
        return ",".join(self._format(key) for key in CSV_COLUMNS)

    def _format(self, key: str) -> str:
        if key == "n_periods":
            return str(int(self.returns.size))
        if key == "flags":
            return ";".join(self.flags)
        if key == "periods_per_year":
            return str(int(self.periods_per_year))
        value = {
            "apr": self.apr,
            "avol": self.avol,
            "asr": self.asr,
            "sharpe": self.sharpe,
            "mdd": self.mdd,
            "cr": self.cr,
            "ddr": self.ddr,
            "final_wealth": self.final_wealth,
            "theta": self.theta,
            "tc": self.tc,
        }[key]
        return repr(float(value))


def report(
    returns,
    theta: float = 0.0,
    tc: float = 0.001,
    periods_per_year: int = 12,
) -> PerformanceReport:
    """Full evaluation of a return series (raises on zero volatility)."""
    r = np.asarray(returns, dtype=float)
    if r.ndim != 1 or r.size < 2:
        raise DataError("report: need at least 2 returns")
    a = float(np.mean(r - tc))
    v = float(np.std(r))
    if v == 0.0 or np.ptp(r) == 0.0:
        raise ZeroVolatilityError("report: returns have zero volatility")
    ny = int(periods_per_year)
    apr = a * ny
    avol = v * math.sqrt(ny)
    asr = apr / avol
    wealth = cumulative_wealth(r, tc)
    mdd = max_drawdown(wealth)
    flags: list[str] = []
    if mdd == 0.0:
        cr = math.inf
        flags.append("no_drawdown")
    else:
        cr = apr / mdd
    downside = float(np.sqrt(np.mean(np.minimum(r, 0.0) ** 2)))
    if downside == 0.0:
        ddr = math.inf
        flags.append("no_downside")
    else:
        ddr = apr / downside
    return PerformanceReport(
        returns=r.copy(),
        wealth=wealth,
        apr=apr,
        avol=avol,
        asr=asr,
        mdd=mdd,
        cr=cr,
        ddr=ddr,
        theta=float(theta),
        tc=float(tc),
        periods_per_year=ny,
        flags=tuple(flags),
    )


def degenerate_report(
    returns,
    theta: float = 0.0,
    tc: float = 0.001,
    periods_per_year: int = 12,
    reason: str = "zero_volatility",
) -> PerformanceReport:
    """Report for series where volatility-based ratios are undefined."""
    r = np.asarray(returns, dtype=float)
    ny = int(periods_per_year)
    wealth = cumulative_wealth(r, tc) if r.size else np.ones(1)
    apr = float(np.mean(r - tc)) * ny if r.size else math.nan
    mdd = max_drawdown(wealth)
    return PerformanceReport(
        returns=r.copy(),
        wealth=wealth,
        apr=apr,
        avol=0.0,
        asr=math.nan,
        mdd=mdd,
        cr=math.inf if mdd == 0.0 else apr / mdd,
        ddr=math.nan,
        theta=float(theta),
        tc=float(tc),
        periods_per_year=ny,
        flags=(reason,),
    )


def report_or_degenerate(returns, theta=0.0, tc=0.001, periods_per_year=12):
    """Prefer a full report; fall back to a flagged degenerate one."""
    r = np.asarray(returns, dtype=float)
    try:
        return report(r, theta=theta, tc=tc, periods_per_year=periods_per_year)
    except ZeroVolatilityError:
        return degenerate_report(r, theta, tc, periods_per_year, "zero_volatility")
    except DataError:
        return degenerate_report(r, theta, tc, periods_per_year, "short_series")

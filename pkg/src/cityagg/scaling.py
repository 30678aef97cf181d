"""Urban scaling fits: ``Y = Y0 * N**beta`` by OLS in natural-log space."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import special

from .ingest import CityMeta


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class ScalingPoint:
    city_id: str
    n_pop: float
    y_value: float


@dataclass(frozen=True)
class FitResult:
    beta: float
    ln_y0: float
    se_beta: float
    ci_low: float
    ci_high: float
    r2: float
    n_obs: int
    n_excluded: int = 0
    excluded: tuple[str, ...] = field(default=(), repr=False)

    @property
    def y0(self) -> float:
        return math.exp(self.ln_y0)

    @property
    def regime(self) -> str:
        return classify_regime(self)

    def to_dict(self) -> dict:
        return {"beta": self.beta, "ln_y0": self.ln_y0, "se_beta": self.se_beta,
                "ci_low": self.ci_low, "ci_high": self.ci_high, "r2": self.r2,
                "n_obs": self.n_obs, "n_excluded": self.n_excluded, "regime": self.regime}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def t_quantile(p: float, df: float) -> float:
    """Student-t quantile for ``p`` in (0.5, 1) via the inverse regularized incomplete beta.

    With ``x = I^{-1}_{2(1-p)}(df/2, 1/2)`` the quantile is ``sqrt(df (1-x) / x)``.
    """
    if not 0.5 < p < 1:
        raise ValueError("p must lie in (0.5, 1)")
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    x = special.betaincinv(df / 2, 0.5, 2 * (1 - p))
    return math.sqrt(df * (1 - x) / x)


@dataclass(frozen=True)
class _Ols:
    slope: float
    intercept: float
    se_slope: float
    r2: float
    n: int


def _ols(x: np.ndarray, y: np.ndarray) -> _Ols:
    n = x.size
    if n < 3:
        raise FitError(f"need at least 3 usable points, got {n}")
    xbar = x.mean()
    ybar = y.mean()
    dx = x - xbar
    dy = y - ybar
    sxx = float(dx @ dx)
    if sxx <= 0 or sxx <= 1e-24 * max(1.0, float(x @ x)):
        raise FitError("degenerate abscissa: all x values are equal")
    slope = float(dx @ dy) / sxx
    intercept = ybar - slope * xbar
    resid = dy - slope * dx
    ss_res = float(resid @ resid)
    ss_tot = float(dy @ dy)
    r2 = 0.0 if ss_tot == 0 else min(1.0, max(0.0, 1 - ss_res / ss_tot))
    se = math.sqrt(ss_res / (n - 2) / sxx)
    return _Ols(slope, float(intercept), se, r2, n)


def _split_usable(points: Iterable[ScalingPoint]):
    usable, excluded = [], []
    for p in points:
        if p.n_pop > 0 and p.y_value > 0 and math.isfinite(p.n_pop) and math.isfinite(p.y_value):
            usable.append(p)
        else:
            excluded.append(p.city_id)
    return usable, excluded


def fit_power_law(points: Sequence[ScalingPoint], confidence: float = 0.95) -> FitResult:
    """Fit ``ln Y = ln Y0 + beta ln N``; non-positive cities are excluded and counted."""
    usable, excluded = _split_usable(points)
    if len(usable) < 3:
        raise FitError(f"need at least 3 usable cities, got {len(usable)}")
    ln_n = np.log(np.array([p.n_pop for p in usable], dtype=np.float64))
    ln_y = np.log(np.array([p.y_value for p in usable], dtype=np.float64))
    ols = _ols(ln_n, ln_y)
    half = t_quantile(0.5 + confidence / 2, ols.n - 2) * ols.se_slope
    return FitResult(beta=ols.slope, ln_y0=ols.intercept, se_beta=ols.se_slope,
                     ci_low=ols.slope - half, ci_high=ols.slope + half, r2=ols.r2,
                     n_obs=ols.n, n_excluded=len(excluded), excluded=tuple(excluded))


def classify_regime(fit: FitResult) -> str:
    if fit.ci_low <= 1 <= fit.ci_high:
        return "linear"
    return "sublinear" if fit.beta < 1 else "superlinear"


def scatter_rows(points: Sequence[ScalingPoint], fit: FitResult) -> list[tuple[str, float, float, float]]:
    usable, _ = _split_usable(points)
    rows = []
    for p in usable:
        ln_n = math.log(p.n_pop)
        rows.append((p.city_id, ln_n, math.log(p.y_value), fit.ln_y0 + fit.beta * ln_n))
    return rows


def scatter_csv(points: Sequence[ScalingPoint], fit: FitResult) -> str:
    lines = ["city_id,ln_n,ln_y,fitted_ln_y"]
    lines += [f"{c},{a!r},{b!r},{f!r}" for c, a, b, f in scatter_rows(points, fit)]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Cohorts


def _meta_by_id(catalog: Iterable[CityMeta]) -> dict[str, CityMeta]:
    return {c.id: c for c in catalog}


def filter_by_gdp(points: Sequence[ScalingPoint], catalog: Iterable[CityMeta],
                  threshold_usd: float, gdp_by_country: Mapping[str, float] | None = None):
    """Split into ``(kept, removed)``; ``removed`` holds ``(point, reason)`` pairs.

    GDP per capita comes from the city record, else from ``gdp_by_country``.
    """
    meta = _meta_by_id(catalog)
    gdp_by_country = gdp_by_country or {}
    kept, removed = [], []
    for p in points:
        m = meta.get(p.city_id)
        gdp = None
        if m is not None:
            gdp = m.gdp_per_capita
            if gdp is None and m.country is not None:
                gdp = gdp_by_country.get(m.country)
        if gdp is None:
            removed.append((p, "unknown gdp"))
        elif gdp >= threshold_usd:
            kept.append(p)
        else:
            removed.append((p, "below threshold"))
    return kept, removed


def filter_by_country(points: Sequence[ScalingPoint], catalog: Iterable[CityMeta],
                      country_code: str) -> list[ScalingPoint]:
    meta = _meta_by_id(catalog)
    return [p for p in points
            if p.city_id in meta and meta[p.city_id].country == country_code]


@dataclass(frozen=True)
class Correlation:
    coefficient: float
    r2: float
    n: int


def correlate_loglog(x: Mapping[str, float], y: Mapping[str, float]) -> Correlation:
    """Slope and R^2 of ln y on ln x over cities present and positive in both."""
    ids = [k for k in x if k in y and x[k] > 0 and y[k] > 0]
    if len(ids) < 3:
        raise FitError(f"need at least 3 paired positive values, got {len(ids)}")
    lx = np.log(np.array([x[k] for k in ids], dtype=np.float64))
    ly = np.log(np.array([y[k] for k in ids], dtype=np.float64))
    ols = _ols(lx, ly)
    return Correlation(ols.slope, ols.r2, ols.n)


def per_capita(points: Iterable[ScalingPoint]) -> dict[str, float]:
    return {p.city_id: p.y_value / p.n_pop for p in points if p.n_pop > 0}


def bottom_k(values: Mapping[str, float], k: int) -> list[tuple[str, float]]:
    if k < 1:
        raise ValueError("k must be >= 1")
    return sorted(values.items(), key=lambda kv: (kv[1], kv[0]))[:k]


def country_histogram(cities: Iterable[tuple[str, str]]) -> list[tuple[str, int]]:
    counts = Counter(country for _, country in cities)
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))

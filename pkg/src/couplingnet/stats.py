"""Statistical battery: quantile bins, rank-sum tests, scale choice and OLS tables."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats as sps

DEFAULT_BIN_SIZE = 400
DEFAULT_QUANTILES = (0.5, 0.7, 0.9)
P_FLOOR = 1e-300
EXACT_MAX_N = 20


@dataclass
class QuantileBin:
    lo: float
    hi: float
    count: int
    quantiles: dict[float, float]


@dataclass
class QuantileBinTable:
    covariate_name: str
    response_name: str
    bin_size: int
    quantile_levels: tuple[float, ...]
    bins: list[QuantileBin]
    dropped: int

    def column(self, q: float) -> np.ndarray:
        return np.array([b.quantiles[q] for b in self.bins])

    def rows(self) -> list[dict]:
        out = []
        for i, b in enumerate(self.bins):
            row = {"bin": i, "covariate_lo": b.lo, "covariate_hi": b.hi, "count": b.count}
            row.update({f"q{round(q * 100):d}": v for q, v in b.quantiles.items()})
            out.append(row)
        return out

    def to_json(self) -> dict:
        return {
            "covariate": self.covariate_name,
            "response": self.response_name,
            "bin_size": self.bin_size,
            "quantiles": list(self.quantile_levels),
            "dropped": self.dropped,
            "bins": self.rows(),
        }


def _sorted_by_covariate(covariate, response):
    x = np.asarray(covariate, dtype=np.float64)
    y = np.asarray(response, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("covariate and response must be 1-d vectors of equal length")
    order = np.argsort(x, kind="stable")
    return x[order], y[order]


def quantile_bins(
    covariate,
    response,
    bin_size: int = DEFAULT_BIN_SIZE,
    quantiles: Sequence[float] = DEFAULT_QUANTILES,
    covariate_name: str = "covariate",
    response_name: str = "response",
) -> QuantileBinTable:
    """Sort by covariate, cut into consecutive bins of ``bin_size`` and take response quantiles.

    The trailing remainder that does not fill a bin is dropped (and reported).
    Quantiles interpolate linearly between order statistics.
    """
    x, y = _sorted_by_covariate(covariate, response)
    if bin_size < 1 or bin_size > len(x):
        raise ValueError(f"bin_size {bin_size} must be between 1 and the sample size {len(x)}")
    n_bins = len(x) // bin_size
    levels = tuple(sorted(quantiles))
    bins = []
    for b in range(n_bins):
        sl = slice(b * bin_size, (b + 1) * bin_size)
        qs = np.quantile(y[sl], levels, method="linear")
        bins.append(QuantileBin(float(x[sl][0]), float(x[sl][-1]), bin_size, dict(zip(levels, map(float, qs)))))
    return QuantileBinTable(covariate_name, response_name, bin_size, levels, bins, len(x) - n_bins * bin_size)


def extreme_bins(covariate, response, bin_size: int = DEFAULT_BIN_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """Responses of the ``bin_size`` smallest and the ``bin_size`` largest covariate values."""
    x, y = _sorted_by_covariate(covariate, response)
    if 2 * bin_size > len(x):
        raise ValueError("sample too small for two disjoint extreme bins")
    return y[:bin_size], y[-bin_size:]


def bin_trend(table: QuantileBinTable, q: float = 0.5, confidence: float = 0.95) -> dict:
    """Least-squares slope of a quantile column against bin index, with a t confidence interval."""
    ys = table.column(q)
    if len(ys) < 3:
        raise ValueError("need at least three bins for a trend")
    fit = sps.linregress(np.arange(len(ys)), ys)
    half = sps.t.ppf(0.5 + confidence / 2, len(ys) - 2) * fit.stderr
    slope, stderr, half = float(fit.slope), float(fit.stderr), float(half)
    return {"slope": slope, "stderr": stderr, "ci_low": slope - half, "ci_high": slope + half}


@dataclass
class WilcoxonResult:
    median_a: float
    median_b: float
    rank_sum_statistic: float
    z_value: float
    p_value: float
    method: str
    n_a: int = 0
    n_b: int = 0


def _exact_rank_sum_p(ranks_a_total: float, ranks: np.ndarray, n_a: int) -> float:
    """Two-sided exact p: share of all ``C(N, n_a)`` rank subsets at least as far from the mean."""
    # midranks are multiples of 1/2, so doubled ranks are integers
    doubled = np.rint(2 * ranks).astype(np.int64)
    total = int(doubled.sum())
    # counts[j][s]: number of j-subsets of the ranks seen so far with doubled sum s
    counts = np.zeros((n_a + 1, total + 1), dtype=np.int64)
    counts[0, 0] = 1
    for r in doubled:
        for j in range(min(n_a, len(doubled)), 0, -1):
            counts[j, r:] += counts[j - 1, : total + 1 - r]
    dist = counts[n_a]
    n = len(doubled)
    mean2 = n_a * (n + 1)  # doubled expected rank sum
    obs = abs(int(round(2 * ranks_a_total)) - mean2)
    sums = np.arange(total + 1)
    extreme = np.abs(sums - mean2) >= obs
    return float(dist[extreme].sum() / dist.sum())


def wilcoxon_rank_sum(sample_a, sample_b, mode: str = "auto") -> WilcoxonResult:
    """Two-sided Wilcoxon rank-sum test for equal medians.

    ``mode`` is ``"normal"`` (tie-corrected variance, continuity correction),
    ``"exact"`` (full enumeration of rank placements, combined n <= 20) or
    ``"auto"`` (exact when small enough).
    """
    a = np.asarray(sample_a, dtype=np.float64).ravel()
    b = np.asarray(sample_b, dtype=np.float64).ravel()
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    n_a, n_b = a.size, b.size
    n = n_a + n_b
    if mode == "auto":
        mode = "exact" if n <= EXACT_MAX_N else "normal"
    if mode not in ("normal", "exact"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "exact" and n > EXACT_MAX_N:
        raise ValueError(f"exact mode supports combined n <= {EXACT_MAX_N}, got {n}")

    ranks = sps.rankdata(np.concatenate([a, b]))
    w = float(ranks[:n_a].sum())
    mean = n_a * (n + 1) / 2.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = float(np.sum(tie_counts**3 - tie_counts))
    var = n_a * n_b / 12.0 * ((n + 1) - tie_term / (n * (n - 1))) if n > 1 else 0.0
    sd = math.sqrt(var) if var > 0 else 0.0
    if sd > 0:
        z = math.copysign(max(abs(w - mean) - 0.5, 0.0), w - mean) / sd
    else:
        z = 0.0

    if mode == "exact":
        p = _exact_rank_sum_p(w, ranks, n_a)
        method = "exact"
    else:
        p = 2.0 * sps.norm.sf(abs(z)) if sd > 0 else 1.0
        method = "normal_approx"
    p = min(max(p, P_FLOOR), 1.0)
    return WilcoxonResult(float(np.median(a)), float(np.median(b)), w, z, p, method, n_a, n_b)


def log_transform(values) -> np.ndarray:
    return np.log10(np.asarray(values, dtype=np.float64) + 1.0)


def _ks_to_normal(values: np.ndarray) -> float:
    sd = values.std(ddof=1) if values.size > 1 else 0.0
    if not np.isfinite(sd) or sd == 0:
        return math.inf
    z = (values - values.mean()) / sd
    return float(sps.kstest(z, "norm").statistic)


def scale_select(values) -> str:
    """``"log"`` if log10(x+1) looks more normal (smaller KS statistic) than x, else ``"linear"``."""
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty vector")
    if np.any(x <= -1):
        return "linear"
    lin = _ks_to_normal(x)
    log = _ks_to_normal(log_transform(x))
    return "log" if log < lin else "linear"


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need two equal-length vectors with at least two entries")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise ValueError("zero-variance input")
    return float(dx @ dy / math.sqrt(sxx * syy))


def standardize(x: np.ndarray) -> np.ndarray:
    sd = x.std(ddof=1)
    if sd == 0:
        raise ValueError("cannot standardise a constant vector")
    return (x - x.mean()) / sd


@dataclass
class RegressionRow:
    predictor: str
    model: str
    coefficient: float
    coefficient_sd: float
    p_value: float
    n: int
    scales: dict[str, str] = field(default_factory=dict)


@dataclass
class RegressionTable:
    response_name: str
    rows: list[RegressionRow]

    def to_json(self) -> dict:
        return {"response": self.response_name, "rows": [asdict(r) for r in self.rows]}

    def get(self, predictor: str, model: str = "bivariate") -> RegressionRow:
        for r in self.rows:
            if r.predictor == predictor and r.model == model:
                return r
        raise KeyError((predictor, model))


def fit_ols(y: np.ndarray, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, int]:
    """Least squares with an intercept column prepended; returns (coef, se, residual dof)."""
    n = len(y)
    design = np.column_stack([np.ones(n), X])
    rank = np.linalg.matrix_rank(design)
    if rank < design.shape[1]:
        raise np.linalg.LinAlgError("rank-deficient design matrix (collinear predictors)")
    dof = n - design.shape[1]
    if dof <= 0:
        raise ValueError("not enough observations for the number of predictors")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(design.T @ design)
    return coef, np.sqrt(np.clip(np.diag(cov), 0, None)), dof


def _t_p_value(coef: float, se: float, dof: int) -> float:
    if se == 0:
        return P_FLOOR if coef != 0 else 1.0
    p = 2.0 * sps.t.sf(abs(coef / se), dof)
    return float(min(max(p, P_FLOOR), 1.0))


def ols_regress(
    response,
    predictors: Mapping[str, Sequence],
    adjusters: Mapping[str, Sequence] | None = None,
    response_name: str = "response",
    scales: Mapping[str, str] | None = None,
) -> RegressionTable:
    """Standardised bivariate and adjusted OLS for each focal predictor.

    Every variable is put on its scale (chosen by ``scale_select`` unless given
    in ``scales``) and z-standardised. Records with a missing value (``None`` or
    NaN) in any variable of a given model are dropped for that model only.
    Each adjuster produces one extra model per predictor, labelled
    ``"<adjuster>_adjusted"``; an adjuster is never used to adjust itself.
    """
    adjusters = dict(adjusters or {})
    scales = dict(scales or {})

    def as_array(v):
        return np.array([np.nan if x is None else x for x in v], dtype=np.float64)

    variables = {response_name: as_array(response)}
    variables.update({k: as_array(v) for k, v in predictors.items()})
    variables.update({k: as_array(v) for k, v in adjusters.items()})
    lengths = {len(v) for v in variables.values()}
    if len(lengths) != 1:
        raise ValueError("all vectors must have the same length")

    def scaled(name):
        x = variables[name]
        ok = ~np.isnan(x)
        if name not in scales:
            scales[name] = scale_select(x[ok])
        return log_transform(x) if scales[name] == "log" else x

    transformed = {name: scaled(name) for name in variables}

    def fit(names: list[str]):
        cols = [transformed[response_name]] + [transformed[n] for n in names]
        mask = np.all([~np.isnan(c) for c in cols], axis=0)
        y = standardize(cols[0][mask])
        X = np.column_stack([standardize(c[mask]) for c in cols[1:]])
        coef, se, dof = fit_ols(y, X)
        return float(coef[1]), float(se[1]), _t_p_value(coef[1], se[1], dof), int(mask.sum())

    rows = []
    for name in predictors:
        used = {response_name: scales[response_name], name: scales[name]}
        rows.append(RegressionRow(name, "bivariate", *fit([name]), scales=used))
        for adj in adjusters:
            if adj == name:
                continue
            c, s, p, n = fit([name, adj])
            rows.append(RegressionRow(name, f"{adj}_adjusted", c, s, p, n, dict(used, **{adj: scales[adj]})))
    return RegressionTable(response_name, rows)


def regression_csv_rows(table: RegressionTable) -> list[dict]:
    out = []
    for r in table.rows:
        out.append(
            {
                "response": table.response_name,
                "predictor": r.predictor,
                "model": r.model,
                "coefficient": r.coefficient,
                "coefficient_sd": r.coefficient_sd,
                "p_value": r.p_value,
                "n": r.n,
                "log_scaled": ";".join(k for k, v in sorted(r.scales.items()) if v == "log"),
            }
        )
    return out

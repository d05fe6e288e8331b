"""ROC/AUC, paired bootstrap AUC, and one-way ANOVA with F-distribution p-values."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .seqdata import LabeledDataset, bootstrap_indices


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # thresholds[0] is +inf, giving the (0, 0) point

    def to_csv(self) -> str:
        rows = ["threshold,fpr,tpr"]
        rows += [f"{t!r},{f!r},{p!r}" for t, f, p in zip(self.thresholds.tolist(), self.fpr.tolist(), self.tpr.tolist())]
        return "\n".join(rows) + "\n"


def _check_binary(labels) -> np.ndarray:
    y = np.asarray(labels).astype(np.int64).reshape(-1)
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    if y.sum() == 0 or y.sum() == len(y):
        raise ValueError("ROC/AUC needs both classes present")
    return y


def roc_auc(scores, labels) -> tuple[RocCurve, float]:
    """ROC over every distinct score threshold and its trapezoidal area.

    The area is accumulated in integer counts, so it equals the
    Mann-Whitney pair statistic (ties credited 0.5) exactly.
    """
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = _check_binary(labels)
    if len(s) != len(y):
        raise ValueError("scores and labels differ in length")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last_of_run = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.r_[0, np.cumsum(y)[last_of_run]]
    fp = np.r_[0, np.cumsum(1 - y)[last_of_run]]
    P, N = int(tp[-1]), int(fp[-1])
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    curve = RocCurve(fp / N, tp / P, np.r_[np.inf, s[last_of_run]])
    return curve, twice_area / (2 * P * N)


def auc_score(scores, labels) -> float:
    return roc_auc(scores, labels)[1]


def pair_count_auc(scores, labels) -> float:
    """Exhaustive positive/negative pair count; ties score 0.5."""
    s = np.asarray(scores, dtype=np.float64)
    y = _check_binary(labels)
    pos, neg = s[y == 1][:, None], s[y == 0][None, :]
    twice = 2 * int((pos > neg).sum()) + int((pos == neg).sum())
    return twice / (2 * pos.size * neg.size)


# --- F and t distributions -------------------------------------------------

def _betacf(a: float, b: float, x: float, tol: float = 1e-16, max_iter: int = 10000) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > tiny else tiny)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > tiny else tiny)
        c = 1.0 + aa / c
        c = c if abs(c) > tiny else tiny
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b) + a * math.log(x) + b * math.log1p(-x)
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_cdf(x: float, d1: float, d2: float) -> float:
    if d1 <= 0 or d2 <= 0:
        raise ValueError("degrees of freedom must be positive")
    if x <= 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    return betainc(d1 / 2.0, d2 / 2.0, d1 * x / (d1 * x + d2))


def f_sf(x: float, d1: float, d2: float) -> float:
    """Upper tail 1 - F_cdf, computed from the complementary beta for accuracy."""
    if x <= 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    return betainc(d2 / 2.0, d1 / 2.0, d2 / (d1 * x + d2))


def t_cdf(t: float, df: float) -> float:
    """Student t CDF via T^2 ~ F(1, df)."""
    half = 0.5 * f_cdf(t * t, 1, df)
    return 0.5 + half if t >= 0 else 0.5 - half


def t_ppf(q: float, df: float, tol: float = 1e-13) -> float:
    """Student t quantile by bisection on :func:`t_cdf`."""
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")
    if q < 0.5:
        return -t_ppf(1.0 - q, df, tol)
    if q == 0.5:
        return 0.0
    lo, hi = 0.0, 1.0
    while t_cdf(hi, df) < q:
        hi *= 2.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if t_cdf(mid, df) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --- ANOVA -----------------------------------------------------------------

@dataclass(frozen=True)
class GroupSummary:
    n: int
    mean: float
    std: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class AnovaResult:
    f_stat: float
    p_value: float
    df_between: int
    df_within: int
    groups: tuple
    degenerate: bool = False
    ci_method: str = "per-group t-interval, 95%"

    @property
    def significant(self) -> bool:
        return self.p_value < 0.05


def group_summary(values, level: float = 0.95) -> GroupSummary:
    v = np.asarray(values, dtype=np.float64)
    n = len(v)
    mean = float(v.mean())
    std = float(v.std(ddof=1)) if n > 1 else 0.0
    half = t_ppf(0.5 + level / 2.0, n - 1) * std / math.sqrt(n) if n > 1 else 0.0
    return GroupSummary(n, mean, std, mean - half, mean + half)


def one_way_anova(groups) -> AnovaResult:
    groups = [np.asarray(g, dtype=np.float64) for g in groups]
    k = len(groups)
    if k < 2:
        raise ValueError("ANOVA needs at least two groups")
    if any(len(g) < 2 for g in groups):
        raise ValueError("every group needs at least two values")
    N = sum(len(g) for g in groups)
    grand = np.concatenate(groups).mean()
    means = [g.mean() for g in groups]
    ss_between = float(sum(len(g) * (m - grand) ** 2 for g, m in zip(groups, means)))
    ss_within = float(sum(((g - m) ** 2).sum() for g, m in zip(groups, means)))
    df_b, df_w = k - 1, N - k
    summaries = tuple(group_summary(g) for g in groups)
    if ss_within == 0.0:
        if all(m == means[0] for m in means):
            return AnovaResult(0.0, 1.0, df_b, df_w, summaries, degenerate=True)
        return AnovaResult(math.inf, 0.0, df_b, df_w, summaries, degenerate=True)
    F = (ss_between / df_b) / (ss_within / df_w)
    return AnovaResult(F, f_sf(F, df_b, df_w), df_b, df_w, summaries)


# --- bootstrap -------------------------------------------------------------

@dataclass(frozen=True)
class BootstrapResult:
    model: str
    aucs: tuple = field(default_factory=tuple)

    @property
    def mean(self) -> float:
        return float(np.mean(self.aucs))

    @property
    def std(self) -> float:
        return float(np.std(self.aucs, ddof=1))


def model_scores(model, x) -> np.ndarray:
    if hasattr(model, "predict_proba"):
        return np.asarray(model.predict_proba(x), dtype=np.float64)
    return np.asarray(model(x), dtype=np.float64)


def bootstrap_auc(models, testset: LabeledDataset, trials: int = 30, seed: int = 0, names=None, scores=None):
    """Paired bootstrap: trial t draws one resample (seed + t) scored by every model.

    Models are anything with ``predict_proba`` or a plain callable on the
    (n, L, 4) array. Each model scores the test set once; resamples index
    those scores.
    """
    if trials < 2:
        raise ValueError("need at least two bootstrap trials")
    models = list(models)
    names = list(names) if names is not None else [getattr(m, "name", f"model{i}") for i, m in enumerate(models)]
    if scores is None:
        scores = [model_scores(m, testset.onehot) for m in models]
    y = testset.labels
    per_model = [[] for _ in models]
    for t in range(trials):
        idx = bootstrap_indices(y, seed + t)
        for i, s in enumerate(scores):
            per_model[i].append(auc_score(s[idx], y[idx]))
    return [BootstrapResult(n, tuple(a)) for n, a in zip(names, per_model)]


def evaluation_report(results, anova: AnovaResult | None = None, seed=None, trials=None) -> dict:
    models = []
    for r in results:
        g = group_summary(r.aucs)
        models.append({
            "name": r.model, "aucs": list(r.aucs), "mean": g.mean, "std": g.std,
            "ci95": [g.ci_low, g.ci_high],
        })
    report = {"schema_version": 1, "ci_method": "per-group t-interval, 95%", "seed": seed, "trials": trials,
              "models": models}
    if anova is not None:
        report["anova"] = anova_to_dict(anova)
    return report


def anova_to_dict(res: AnovaResult) -> dict:
    return {
        "F": res.f_stat if math.isfinite(res.f_stat) else "inf",
        "p_value": res.p_value,
        "df_between": res.df_between,
        "df_within": res.df_within,
        "significant": res.significant,
        "degenerate": res.degenerate,
        "ci_method": res.ci_method,
    }

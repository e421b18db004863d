"""Correlation metrics between predicted and subjective scores.

PLCC, SRCC, and KRCC are implemented from their definitions on raw pairs:
Pearson on the values, Pearson on average ranks, and tau-b with tie
corrections. No logistic remapping is applied by default; `fit_logistic`
is available for evaluation protocols that want the remapped PLCC.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import DegenerateSeries

__all__ = ["plcc", "srcc", "krcc", "average_ranks", "fit_logistic"]


def _paired(predicted, subjective) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(predicted, dtype=np.float64)
    s = np.asarray(subjective, dtype=np.float64)
    if p.ndim != 1 or s.ndim != 1:
        raise ValueError("score series must be one-dimensional")
    if p.shape != s.shape:
        raise ValueError(f"length mismatch: {p.shape[0]} vs {s.shape[0]}")
    if p.shape[0] < 2:
        raise ValueError("need at least two score pairs")
    if not (np.isfinite(p).all() and np.isfinite(s).all()):
        raise ValueError("scores must be finite")
    return p, s


def plcc(predicted, subjective) -> float:
    """Pearson linear correlation of the raw pairs, in [-1, 1]."""
    p, s = _paired(predicted, subjective)
    pc = p - p.mean()
    sc = s - s.mean()
    vp = float(np.dot(pc, pc))
    vs = float(np.dot(sc, sc))
    if vp == 0.0 or vs == 0.0:
        raise DegenerateSeries("PLCC undefined: a series has zero variance")
    r = float(np.dot(pc, sc)) / (np.sqrt(vp) * np.sqrt(vs))
    return float(min(1.0, max(-1.0, r)))


def average_ranks(values) -> np.ndarray:
    """1-based ranks with tied values sharing their average rank."""
    v = np.asarray(values, dtype=np.float64)
    n = v.shape[0]
    sorter = np.argsort(v, kind="mergesort")
    inverse = np.empty(n, dtype=np.intp)
    inverse[sorter] = np.arange(n)
    sv = v[sorter]
    run_start = np.r_[True, sv[1:] != sv[:-1]]
    run_id = np.cumsum(run_start) - 1
    starts = np.flatnonzero(run_start)
    ends = np.r_[starts[1:], n]
    # average of the 1-based positions covered by each tied run
    run_rank = (starts + ends - 1) / 2.0 + 1.0
    return run_rank[run_id][inverse]


def srcc(predicted, subjective) -> float:
    """Spearman rank correlation: Pearson over average ranks."""
    p, s = _paired(predicted, subjective)
    try:
        return plcc(average_ranks(p), average_ranks(s))
    except DegenerateSeries:
        raise DegenerateSeries("SRCC undefined: all values tied in a series") from None


def krcc(predicted, subjective) -> float:
    """Kendall tau-b: (C - D) / sqrt((n0 - n1) * (n0 - n2))."""
    p, s = _paired(predicted, subjective)
    n = p.shape[0]
    cd = 0  # concordant minus discordant
    for i in range(n - 1):
        dp = np.sign(p[i + 1:] - p[i]).astype(np.int64)
        ds = np.sign(s[i + 1:] - s[i]).astype(np.int64)
        cd += int(np.dot(dp, ds))
    n0 = n * (n - 1) // 2
    n1 = _tie_pair_count(p)
    n2 = _tie_pair_count(s)
    if n0 == n1 or n0 == n2:
        raise DegenerateSeries("KRCC undefined: all values tied in a series")
    tau = cd / np.sqrt(float(n0 - n1) * float(n0 - n2))
    return float(min(1.0, max(-1.0, tau)))


def _tie_pair_count(v: np.ndarray) -> int:
    _, counts = np.unique(v, return_counts=True)
    return int(np.sum(counts * (counts - 1) // 2))


def fit_logistic(predicted, subjective, max_iter: int = 10000) -> np.ndarray:
    """Remap predictions through a fitted 4-parameter logistic.

    Used by IQA protocols that report PLCC after a monotone nonlinear fit.
    Falls back to the raw predictions if the fit does not converge.
    """
    from scipy.optimize import curve_fit

    p, s = _paired(predicted, subjective)

    def curve(x, b1, b2, b3, b4):
        return (b1 - b2) / (1.0 + np.exp(-(x - b3) / (abs(b4) + 1e-12))) + b2

    span = p.max() - p.min()
    init = [s.max(), s.min(), float(np.mean(p)), span / 4.0 if span > 0 else 1.0]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            params, _ = curve_fit(curve, p, s, p0=init, maxfev=max_iter)
        return curve(p, *params)
    except (RuntimeError, TypeError, ValueError):
        warnings.warn("logistic fit did not converge; using raw predictions")
        return p

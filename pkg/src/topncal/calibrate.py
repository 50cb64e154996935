"""Calibration models mapping raw recommender scores to calibrated predictions.

Six fitters (histogram, isotonic, platt, beta, gaussian, gamma) all accept
per-sample weights. Fitted calibrators are immutable, monotone non-decreasing
maps; queries outside the fitted domain are clamped to the nearest boundary.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logit

from .errors import ConfigError, FitError

EPS = 1e-6

PRE_NONE = "none"
PRE_LOGIT = "logit"    # for [0,1]-bounded scores fed to gaussian/gamma
PRE_SIGMOID = "sigmoid"  # for unbounded scores fed to beta


def _as_samples(scores, labels, weights):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if weights is None:
        w = np.ones_like(s)
    else:
        w = np.asarray(weights, dtype=np.float64)
    if not (len(s) == len(y) == len(w)):
        raise ConfigError("scores, labels, weights must have equal length")
    if np.any(w <= 0):
        raise ConfigError("weights must be positive")
    return s, y, w


def _apply_pre(pre: str, s: np.ndarray) -> np.ndarray:
    if pre == PRE_NONE:
        return s
    if pre == PRE_LOGIT:
        return logit(np.clip(s, EPS, 1.0 - EPS))
    if pre == PRE_SIGMOID:
        return expit(s)
    raise ConfigError(f"unknown pre-transform {pre!r}")


# ---------------------------------------------------------------------------
# non-parametric calibrators

@dataclass(frozen=True)
class HistogramCalibrator:
    kind = "histogram"
    edges: np.ndarray   # len M-1, thresholds between bins
    values: np.ndarray  # len M, weighted mean label per bin
    output_range: tuple

    def calibrate(self, s):
        s = np.asarray(s, dtype=np.float64)
        return self.values[np.searchsorted(self.edges, s, side="right")]


def fit_histogram(scores, labels, weights=None, n_bins: int = 15,
                  output_range=(0.0, 1.0)) -> HistogramCalibrator:
    """Equal-count histogram binning; bin value is the weighted mean label."""
    s, y, w = _as_samples(scores, labels, weights)
    if len(s) == 0:
        raise FitError("no samples")
    if n_bins < 1:
        raise ConfigError("n_bins must be >= 1")
    if len(s) < n_bins:
        warnings.warn(f"only {len(s)} samples for {n_bins} bins; reducing bin count")
        n_bins = len(s)
    order = np.lexsort((np.arange(len(s)), s))
    s, y, w = s[order], y[order], w[order]
    bounds = [len(s) * b // n_bins for b in range(n_bins + 1)]
    values = np.array([np.sum(w[a:b] * y[a:b]) / np.sum(w[a:b])
                       for a, b in zip(bounds[:-1], bounds[1:])])
    edges = np.array([(s[b - 1] + s[b]) / 2.0 for b in bounds[1:-1]])
    return HistogramCalibrator(edges=edges, values=values, output_range=tuple(output_range))


@dataclass(frozen=True)
class IsotonicCalibrator:
    kind = "isotonic"
    x: np.ndarray  # unique sorted scores
    v: np.ndarray  # fitted non-decreasing values
    output_range: tuple

    def calibrate(self, s):
        s = np.asarray(s, dtype=np.float64)
        return np.interp(s, self.x, self.v)


def pava(values, weights):
    """Weighted pool-adjacent-violators: the non-decreasing sequence minimizing
    the weighted squared distance to ``values``."""
    y = np.asarray(values, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    # (level, weight, count) blocks maintained on a stack
    levels, wsum, counts = [], [], []
    for yi, wi in zip(y, w):
        levels.append(yi); wsum.append(wi); counts.append(1)
        while len(levels) > 1 and levels[-2] > levels[-1]:
            v2, w2, c2 = levels.pop(), wsum.pop(), counts.pop()
            levels[-1] = (levels[-1] * wsum[-1] + v2 * w2) / (wsum[-1] + w2)
            wsum[-1] += w2
            counts[-1] += c2
    return np.repeat(levels, counts)


def fit_isotonic(scores, labels, weights=None, output_range=(0.0, 1.0)) -> IsotonicCalibrator:
    """Weighted isotonic regression; linear interpolation between breakpoints."""
    s, y, w = _as_samples(scores, labels, weights)
    if len(s) < 2:
        raise FitError("need at least 2 samples for isotonic regression")
    order = np.lexsort((np.arange(len(s)), s))
    s, y, w = s[order], y[order], w[order]
    # pool tied scores first so the fit is a function of the score
    ux, start = np.unique(s, return_index=True)
    bounds = np.append(start, len(s))
    yy = np.array([np.sum(w[a:b] * y[a:b]) / np.sum(w[a:b])
                   for a, b in zip(bounds[:-1], bounds[1:])])
    ww = np.array([np.sum(w[a:b]) for a, b in zip(bounds[:-1], bounds[1:])])
    v = pava(yy, ww)
    return IsotonicCalibrator(x=ux, v=v, output_range=tuple(output_range))


# ---------------------------------------------------------------------------
# parametric calibrators (sigmoid of a monotone feature combination)

@dataclass(frozen=True)
class ParametricCalibrator:
    kind: str               # platt | beta | gaussian | gamma
    coef: np.ndarray
    pre: str = PRE_NONE
    clip: tuple | None = None   # input clamp applied after pre-transform
    shift: float = 0.0          # gamma: s -> s - shift before log
    output_range: tuple = (0.0, 1.0)

    def _features(self, s):
        if self.kind == "platt":
            return np.column_stack([s, np.ones_like(s)])
        if self.kind == "beta":
            sc = np.clip(s, EPS, 1.0 - EPS)
            return np.column_stack([np.log(sc), -np.log(1.0 - sc), np.ones_like(s)])
        if self.kind == "gaussian":
            return np.column_stack([s ** 2, s, np.ones_like(s)])
        if self.kind == "gamma":
            sp = np.maximum(s - self.shift, EPS)
            return np.column_stack([np.log(sp), sp, np.ones_like(s)])
        raise ConfigError(f"unknown parametric kind {self.kind!r}")

    def calibrate(self, s):
        s = _apply_pre(self.pre, np.asarray(s, dtype=np.float64))
        if self.clip is not None:
            s = np.clip(s, self.clip[0], self.clip[1])
        return expit(self._features(s) @ self.coef)


def nll_weighted(theta, x, y, w):
    """Weighted negative log-likelihood of a logistic model and its gradient."""
    z = x @ theta
    loss = np.sum(w * (np.logaddexp(0.0, z) - y * z))
    grad = x.T @ (w * (expit(z) - y))
    return loss, grad


def _check_binary(y):
    if not np.isin(y, (0.0, 1.0)).all():
        raise FitError("parametric calibrators need binary labels")
    if y.min() == y.max():
        raise FitError("degenerate labels: only one class present")


def _minimize_nll(x, y, w, x0, bounds=None, constraints=()):
    res = minimize(lambda t: nll_weighted(t, x, y, w), x0, jac=True,
                   method="SLSQP", bounds=bounds, constraints=list(constraints),
                   options={"maxiter": 200, "ftol": 1e-14})
    if not np.isfinite(res.x).all():
        raise FitError(f"calibrator fit failed: {res.message}")
    return res.x


def fit_platt(scores, labels, weights=None, pre: str = PRE_NONE) -> ParametricCalibrator:
    """Sigmoid of an affine score map, slope constrained non-negative."""
    s, y, w = _as_samples(scores, labels, weights)
    _check_binary(y)
    s = _apply_pre(pre, s)
    x = np.column_stack([s, np.ones_like(s)])
    coef = _minimize_nll(x, y, w, np.array([1.0, 0.0]),
                         bounds=[(0.0, None), (None, None)])
    return ParametricCalibrator(kind="platt", coef=coef, pre=pre)


def fit_beta(scores, labels, weights=None, pre: str = PRE_NONE) -> ParametricCalibrator:
    """Logistic fit on (log s, -log(1-s)) features with non-negative slopes;
    scores must live in [0, 1] after the pre-transform."""
    s, y, w = _as_samples(scores, labels, weights)
    _check_binary(y)
    s = np.clip(_apply_pre(pre, s), EPS, 1.0 - EPS)
    x = np.column_stack([np.log(s), -np.log(1.0 - s), np.ones_like(s)])
    coef = _minimize_nll(x, y, w, np.array([1.0, 1.0, 0.0]),
                         bounds=[(0.0, None), (0.0, None), (None, None)])
    return ParametricCalibrator(kind="beta", coef=coef, pre=pre)


def fit_gaussian(scores, labels, weights=None, pre: str = PRE_NONE,
                 pin_quadratic: bool = False) -> ParametricCalibrator:
    """Sigmoid of a quadratic in the (unbounded) score, constrained to be
    non-decreasing on the observed score range."""
    s, y, w = _as_samples(scores, labels, weights)
    _check_binary(y)
    s = _apply_pre(pre, s)
    s_min, s_max = float(s.min()), float(s.max())
    x = np.column_stack([s ** 2, s, np.ones_like(s)])
    constraints = [
        {"type": "ineq", "fun": lambda t: 2.0 * t[0] * s_min + t[1],
         "jac": lambda t: np.array([2.0 * s_min, 1.0, 0.0])},
        {"type": "ineq", "fun": lambda t: 2.0 * t[0] * s_max + t[1],
         "jac": lambda t: np.array([2.0 * s_max, 1.0, 0.0])},
    ]
    bounds = [(0.0, 0.0), (0.0, None), (None, None)] if pin_quadratic else None
    coef = _minimize_nll(x, y, w, np.array([0.0, 1.0, 0.0]),
                         bounds=bounds, constraints=constraints)
    return ParametricCalibrator(kind="gaussian", coef=coef, pre=pre,
                                clip=(s_min, s_max))


def fit_gamma(scores, labels, weights=None, pre: str = PRE_NONE,
              pin_log: bool = False) -> ParametricCalibrator:
    """Sigmoid of a*log(s') + b*s' + c on shifted-positive scores s', with
    non-negative a, b."""
    s, y, w = _as_samples(scores, labels, weights)
    _check_binary(y)
    s = _apply_pre(pre, s)
    shift = float(s.min()) - EPS
    sp = s - shift
    x = np.column_stack([np.log(sp), sp, np.ones_like(s)])
    a_hi = 0.0 if pin_log else None
    x0 = np.array([0.0 if pin_log else 0.1, 1.0, 0.0])
    coef = _minimize_nll(x, y, w, x0,
                         bounds=[(0.0, a_hi), (0.0, None), (None, None)])
    return ParametricCalibrator(kind="gamma", coef=coef, pre=pre, shift=shift)


# ---------------------------------------------------------------------------

def vanilla(score_range: str, s):
    """Uncalibrated prediction: identity for bounded scores, sigmoid otherwise."""
    s = np.asarray(s, dtype=np.float64)
    if score_range == "unbounded":
        return expit(s)
    return s


FITTERS = {
    "histogram": fit_histogram,
    "isotonic": fit_isotonic,
    "platt": fit_platt,
    "beta": fit_beta,
    "gaussian": fit_gaussian,
    "gamma": fit_gamma,
}

PARAMETRIC_KINDS = ("platt", "beta", "gaussian", "gamma")
NONPARAMETRIC_KINDS = ("histogram", "isotonic")


def pre_transform_for(kind: str, score_range: str) -> str:
    """Input transform needed so each calibrator sees its expected domain."""
    if kind in ("gaussian", "gamma") and score_range == "bounded01":
        return PRE_LOGIT
    if kind == "beta" and score_range != "bounded01":
        return PRE_SIGMOID
    return PRE_NONE


def fit_calibrator(kind: str, scores, labels, weights=None, *,
                   score_range: str = "bounded01", output_range=(0.0, 1.0),
                   n_bins: int = 15):
    """Dispatch to the requested fitter with the right pre-transform."""
    if kind == "histogram":
        return fit_histogram(scores, labels, weights, n_bins=n_bins,
                             output_range=output_range)
    if kind == "isotonic":
        return fit_isotonic(scores, labels, weights, output_range=output_range)
    if kind not in FITTERS:
        raise ConfigError(f"unknown calibrator kind {kind!r}")
    pre = pre_transform_for(kind, score_range)
    return FITTERS[kind](scores, labels, weights, pre=pre)


def clamp_output(calibrator, yhat):
    lo, hi = calibrator.output_range
    return np.clip(yhat, lo, hi)


# ---------------------------------------------------------------------------
# serialization (shares the versioned .npz bundle idiom with the recommenders)

_CAL_FORMAT_VERSION = 1


def save_calibrator(cal, path):
    arrays = {"format_version": np.array(_CAL_FORMAT_VERSION),
              "kind": np.array(cal.kind),
              "output_range": np.array(cal.output_range, dtype=np.float64)}
    if isinstance(cal, HistogramCalibrator):
        arrays.update(edges=cal.edges, values=cal.values)
    elif isinstance(cal, IsotonicCalibrator):
        arrays.update(x=cal.x, v=cal.v)
    elif isinstance(cal, ParametricCalibrator):
        arrays.update(coef=cal.coef, pre=np.array(cal.pre),
                      shift=np.array(cal.shift),
                      clip=np.array([np.nan, np.nan] if cal.clip is None else cal.clip))
    else:
        raise ConfigError(f"cannot serialize calibrator of type {type(cal).__name__}")
    np.savez(path, **arrays)


def load_calibrator(path):
    with np.load(path) as d:
        if int(d["format_version"]) != _CAL_FORMAT_VERSION:
            raise ConfigError("unsupported calibrator format version")
        kind = str(d["kind"])
        out = tuple(d["output_range"])
        if kind == "histogram":
            return HistogramCalibrator(edges=d["edges"], values=d["values"], output_range=out)
        if kind == "isotonic":
            return IsotonicCalibrator(x=d["x"], v=d["v"], output_range=out)
        clip = None if np.isnan(d["clip"]).any() else tuple(d["clip"])
        return ParametricCalibrator(kind=kind, coef=d["coef"], pre=str(d["pre"]),
                                    clip=clip, shift=float(d["shift"]), output_range=out)

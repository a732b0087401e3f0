"""Tweedie exponential-dispersion family on the log-link scale.

The variance power is restricted to the open interval (1, 2), the compound
Poisson-Gamma regime with a point mass at zero.  All likelihood quantities
are the dispersion-free kernel of the weighted negative log-likelihood

    sum_i w_i * ( y_i * exp(-(power-1)*eta_i) / (power-1)
                  + exp((2-power)*eta_i) / (2-power) )

where eta is the linear predictor and mu = exp(eta).  The dispersion only
rescales this kernel, so fitting ignores it; a method-of-moments estimate
is provided for reporting.
"""

from dataclasses import dataclass

import numpy as np

from .errors import PowerOutOfRange

# Grid clamp: the kernel is singular at power 1 and 2, so estimation never
# evaluates outside this closed range.
POWER_MIN = 1.01
POWER_MAX = 1.99


def _check_power(power: float) -> None:
    if not 1.0 < power < 2.0:
        raise PowerOutOfRange(f"variance power must lie in (1, 2), got {power}")


@dataclass(frozen=True)
class TweedieSpec:
    """Variance power and dispersion of a Tweedie family member (log link)."""

    power: float
    dispersion: float = 1.0

    def __post_init__(self):
        _check_power(self.power)
        if self.dispersion <= 0:
            raise PowerOutOfRange(f"dispersion must be > 0, got {self.dispersion}")


def _y_term(y, factor):
    # y * exp(...) with the 0 * inf corner pinned to 0 (zero responses
    # contribute nothing to the y-side term regardless of eta).
    with np.errstate(invalid="ignore"):
        prod = y * factor
    return np.where(y > 0, prod, 0.0)


def nll(spec: TweedieSpec, eta, y, w) -> float:
    """Weighted negative log-likelihood kernel at linear predictor eta."""
    _check_power(spec.power)
    p = spec.power
    eta = np.asarray(eta, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    with np.errstate(over="ignore"):
        terms = _y_term(y, np.exp(-(p - 1.0) * eta)) / (p - 1.0) + np.exp(
            (2.0 - p) * eta
        ) / (2.0 - p)
    return float(np.dot(w, terms))


def nll_grad(spec: TweedieSpec, eta, y, w) -> np.ndarray:
    """Per-row derivative of the kernel with respect to eta.

    d/deta_i = w_i * ( -y_i * exp(-(power-1)*eta_i) + exp((2-power)*eta_i) );
    zero exactly where mu = exp(eta) matches y.
    """
    _check_power(spec.power)
    p = spec.power
    eta = np.asarray(eta, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    with np.errstate(over="ignore"):
        return w * (-_y_term(y, np.exp(-(p - 1.0) * eta)) + np.exp((2.0 - p) * eta))


def nll_hess(spec: TweedieSpec, eta, y, w) -> np.ndarray:
    """Per-row second derivative of the kernel with respect to eta.

    Nonnegative for y >= 0 and power in (1, 2), so the kernel is convex in
    each coordinate of eta.
    """
    _check_power(spec.power)
    p = spec.power
    eta = np.asarray(eta, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    with np.errstate(over="ignore"):
        return w * (
            (p - 1.0) * _y_term(y, np.exp(-(p - 1.0) * eta))
            + (2.0 - p) * np.exp((2.0 - p) * eta)
        )


def unit_deviance(spec: TweedieSpec, mu, y) -> np.ndarray:
    """Per-row unit deviance d(y, mu), zero at mu = y and positive elsewhere."""
    _check_power(spec.power)
    p = spec.power
    mu = np.asarray(mu, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(mu <= 0):
        raise ValueError("unit deviance requires mu > 0")
    # y^(2-p) with y = 0 is 0 for p in (1,2); np.power handles it directly.
    term_y = np.power(y, 2.0 - p) / ((1.0 - p) * (2.0 - p))
    term_cross = y * np.power(mu, 1.0 - p) / (1.0 - p)
    term_mu = np.power(mu, 2.0 - p) / (2.0 - p)
    return 2.0 * (term_y - term_cross + term_mu)


def estimate_dispersion(spec: TweedieSpec, mu, y, w) -> float:
    """Method-of-moments dispersion: weighted mean of squared Pearson residuals.

    Reporting only; the kernel never uses it.
    """
    mu = np.asarray(mu, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    pearson_sq = (y - mu) ** 2 / np.power(mu, spec.power)
    return float(np.dot(w, pearson_sq) / np.sum(w))


def profile_criterion(power: float, mu, y, w, zero_shift: float = 1.0 / 6.0) -> float:
    """Deviance-based model-selection score for one candidate power.

    Mean held-out unit deviance alone is not comparable across powers (its
    scale moves with the power), so the score normalizes it the way the
    extended quasi-likelihood does: profile out the dispersion and keep the
    variance-function Jacobian, giving

        log(mean deviance) + power * mean(log(y + zero_shift))

    up to an additive constant.  ``zero_shift`` keeps exact zeros finite.
    Lower is better.
    """
    spec = TweedieSpec(power)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    dev = unit_deviance(spec, mu, y)
    mean_dev = float(np.dot(w, dev) / np.sum(w))
    mean_log_y = float(np.dot(w, np.log(y + zero_shift)) / np.sum(w))
    return np.log(mean_dev) + power * mean_log_y


def estimate_power(X, y, w, candidate_powers, holdout_fraction: float = 0.3,
                   seed: int = 0):
    """Pick the variance power from a grid by held-out deviance score.

    Fits an unpenalized GLM (intercept-only when X has no columns) at each
    candidate power on a train part and scores the held-out part with
    :func:`profile_criterion`.  Ties break toward the smaller power.  Grid
    values are clamped to [POWER_MIN, POWER_MAX].

    Returns (best_power, per-candidate scores).
    """
    from .glm import refit_unpenalized, predict

    candidates = [min(max(float(p), POWER_MIN), POWER_MAX) for p in candidate_powers]
    if not candidates:
        raise ValueError("candidate power grid is empty")

    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    n = y.shape[0]
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_hold = max(1, int(round(holdout_fraction * n)))
    hold = order[:n_hold]
    train = order[n_hold:]
    if train.size == 0:
        train = hold

    scores = []
    for p in sorted(set(candidates)):
        model = refit_unpenalized(X[train], y[train], w[train], p)
        mu_hold = predict(model, X[hold])
        scores.append((p, profile_criterion(p, mu_hold, y[hold], w[hold])))
    best = min(scores, key=lambda ps: (ps[1], ps[0]))
    return best[0], scores

"""Synthetic portfolio generator with retained ground truth.

Responses are drawn from the compound Poisson-Gamma construction: a claim
count N ~ Poisson(exposure * rate) and i.i.d. Gamma severities, so the
per-exposure loss cost is exactly Tweedie distributed with

    rate  = exposure * mu^(2-power) / (dispersion * (2-power))
    shape = (2-power) / (power-1)           (per claim)
    scale = dispersion * (power-1) * mu^(power-1)

and log mu linear in the generated features.  The table keeps sidecar
arrays with the true conditional mean, the in-house-block conditional mean,
and the conditional variance, which oracle tests consume directly.

Per-coverage dispersion can either be given or solved so the realized
zero-claim share hits a target (the zero probability is monotone in the
dispersion).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig
from .tabular import COVERAGES, FeatureSpec, PortfolioTable


@dataclass
class GenFeature:
    """One generated column and its multiplicative effect on the mean.

    ``dist`` forms:
      ("normal", mu, sigma) | ("lognormal", mu, sigma) | ("uniform", a, b)
      ("randint", a, b)     – integer scores a..b inclusive, uniform
      ("bernoulli", p)      – binary feature
      ("choice", weights)   – categorical, one weight per category
      ("product", f1, f2)   – recorded product of two earlier features

    ``rate_coef`` adds coef * value to log mu (categoricals instead use
    ``category_effects``, one additive term per level).
    """

    name: str
    block: str
    kind: str = "numeric"
    dist: tuple = ("normal", 0.0, 1.0)
    rate_coef: float = 0.0
    categories: tuple = ()
    category_effects: tuple = ()
    fill_rate: float = 1.0

    def __post_init__(self):
        if self.block not in ("in-house", "insurtech"):
            raise InvalidConfig(f"feature {self.name!r}: block must be in-house or insurtech")
        if self.kind == "categorical":
            if not self.categories:
                raise InvalidConfig(f"categorical feature {self.name!r} needs categories")
            if self.category_effects and len(self.category_effects) != len(self.categories):
                raise InvalidConfig(f"category_effects length mismatch for {self.name!r}")
        if not 0.0 <= self.fill_rate <= 1.0:
            raise InvalidConfig(f"fill_rate of {self.name!r} outside [0, 1]")


@dataclass
class CoverageSettings:
    base_loss_cost: float = 100.0
    power: float = 1.5
    dispersion: float = None     # solved from zero_share when None
    zero_share: float = None

    def __post_init__(self):
        if self.base_loss_cost <= 0:
            raise InvalidConfig("base_loss_cost must be > 0")
        if not 1.0 < self.power < 2.0:
            raise InvalidConfig("generator power must lie in (1, 2)")
        if self.dispersion is not None and self.dispersion <= 0:
            raise InvalidConfig("dispersion must be > 0")
        if self.zero_share is not None and not 0.0 <= self.zero_share < 1.0:
            raise InvalidConfig("zero_share must lie in [0, 1)")
        if self.dispersion is None and self.zero_share is None:
            raise InvalidConfig("give either dispersion or zero_share")


@dataclass
class GeneratorConfig:
    rows: int
    coverage_mix: dict = field(default_factory=lambda: {"BG": 1.0})
    coverages: dict = field(default_factory=dict)
    features: list = field(default_factory=list)
    exposure_range: tuple = (0.25, 1.0)

    def __post_init__(self):
        if self.rows <= 0:
            raise InvalidConfig("rows must be positive")
        if not self.coverage_mix:
            raise InvalidConfig("coverage_mix is empty")
        for tag, share in self.coverage_mix.items():
            if tag not in COVERAGES:
                raise InvalidConfig(f"unknown coverage tag {tag!r}")
            if share < 0:
                raise InvalidConfig("coverage shares must be >= 0")
        total = sum(self.coverage_mix.values())
        if total <= 0:
            raise InvalidConfig("coverage shares sum to zero")
        self.coverage_mix = {t: s / total for t, s in self.coverage_mix.items()}
        for tag in self.coverage_mix:
            self.coverages.setdefault(tag, CoverageSettings())
        lo, hi = self.exposure_range
        if not 0 < lo <= hi:
            raise InvalidConfig("exposure_range must satisfy 0 < low <= high")


def _draw_feature(rng, dist, n, drawn):
    name = dist[0]
    if name == "normal":
        return rng.normal(dist[1], dist[2], n)
    if name == "lognormal":
        return rng.lognormal(dist[1], dist[2], n)
    if name == "uniform":
        return rng.uniform(dist[1], dist[2], n)
    if name == "randint":
        return rng.integers(int(dist[1]), int(dist[2]) + 1, n).astype(float)
    if name == "bernoulli":
        return (rng.random(n) < dist[1]).astype(float)
    if name == "product":
        f1, f2 = dist[1], dist[2]
        if f1 not in drawn or f2 not in drawn:
            raise InvalidConfig(f"product parents {f1!r}, {f2!r} must be declared earlier")
        return drawn[f1] * drawn[f2]
    raise InvalidConfig(f"unknown distribution {name!r}")


def _solve_dispersion(mu, exposure, power, target_zero_share):
    """Bisection on log dispersion so mean exp(-exposure*rate) hits target."""
    kernel = exposure * np.power(mu, 2.0 - power) / (2.0 - power)

    def zero_share(log_phi):
        return float(np.mean(np.exp(-kernel * np.exp(-log_phi))))

    lo, hi = -30.0, 30.0
    if zero_share(lo) > target_zero_share or zero_share(hi) < target_zero_share:
        raise InvalidConfig("zero_share target unreachable for this mean structure")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if zero_share(mid) < target_zero_share:
            lo = mid
        else:
            hi = mid
    return float(np.exp(0.5 * (lo + hi)))


def _inhouse_measurable(feat, by_name):
    """A column is in-house-measurable if the in-house block determines it."""
    if feat.dist[0] == "product":
        return all(_inhouse_measurable(by_name[p], by_name) for p in feat.dist[1:3])
    return feat.block == "in-house"


def synthesize_portfolio(config: GeneratorConfig, seed: int) -> PortfolioTable:
    """Draw a portfolio table plus ground-truth sidecar arrays.

    Same seed, same config: byte-identical output.  Missingness masks are
    applied after the truth is computed, so the sidecars stay exact.
    """
    rng = np.random.default_rng(seed)
    n = config.rows
    by_name = {f.name: f for f in config.features}
    for f in config.features:
        if f.dist[0] == "product":
            parents = [by_name[p] for p in f.dist[1:3]]
            classes = {_inhouse_measurable(p, by_name) for p in parents}
            if len(classes) > 1:
                raise InvalidConfig(
                    f"product feature {f.name!r} mixes in-house and insurtech parents"
                )

    tags = sorted(config.coverage_mix)
    shares = np.array([config.coverage_mix[t] for t in tags])
    coverage = np.array(tags, dtype=object)[rng.choice(len(tags), size=n, p=shares)]
    exposure = rng.uniform(config.exposure_range[0], config.exposure_range[1], n)

    drawn = {}
    log_mu_ih = np.zeros(n)
    log_mu_it = np.zeros(n)
    for f in config.features:
        if f.kind == "categorical":
            weights = np.asarray(f.dist[1], dtype=float) if f.dist[0] == "choice" else np.ones(
                len(f.categories)
            )
            weights = weights / weights.sum()
            codes = rng.choice(len(f.categories), size=n, p=weights).astype(float)
            drawn[f.name] = codes
            effects = np.asarray(f.category_effects or np.zeros(len(f.categories)), dtype=float)
            contribution = effects[codes.astype(int)]
        else:
            values = _draw_feature(rng, f.dist, n, drawn)
            drawn[f.name] = values
            contribution = f.rate_coef * values
        if _inhouse_measurable(f, by_name):
            log_mu_ih = log_mu_ih + contribution
        else:
            log_mu_it = log_mu_it + contribution

    base = np.empty(n)
    power = np.empty(n)
    dispersion = np.empty(n)
    for tag in tags:
        cov = config.coverages[tag]
        mask = coverage == tag
        base[mask] = np.log(cov.base_loss_cost)
        power[mask] = cov.power

    mu = np.exp(base + log_mu_ih + log_mu_it)
    for tag in tags:
        cov = config.coverages[tag]
        mask = coverage == tag
        if cov.dispersion is not None:
            dispersion[mask] = cov.dispersion
        else:
            dispersion[mask] = _solve_dispersion(
                mu[mask], exposure[mask], cov.power, cov.zero_share
            )

    rate = exposure * np.power(mu, 2.0 - power) / (dispersion * (2.0 - power))
    shape = (2.0 - power) / (power - 1.0)
    scale = dispersion * (power - 1.0) * np.power(mu, power - 1.0)
    counts = rng.poisson(rate)
    total = np.zeros(n)
    positive = counts > 0
    if positive.any():
        total[positive] = rng.gamma(counts[positive] * shape[positive], scale[positive])
    response = total / exposure

    # E[Y | in-house block]: keep in-house-measurable contributions, replace
    # the independent remainder by its (empirical) mean factor.
    mu_inhouse = np.exp(base + log_mu_ih) * float(np.mean(np.exp(log_mu_it)))
    var_cond = dispersion * np.power(mu, power) / exposure

    features = []
    columns = {}
    for f in config.features:
        col = drawn[f.name].copy()
        if f.fill_rate < 1.0:
            missing = rng.random(n) >= f.fill_rate
            col[missing] = np.nan
        realized_rate = float(np.count_nonzero(~np.isnan(col)) / n)
        columns[f.name] = col
        features.append(
            FeatureSpec(
                name=f.name,
                kind=f.kind,
                categories=f.categories if f.kind == "categorical" else (),
                fill_rate=realized_rate,
                block=f.block,
            )
        )

    ids = np.array([f"P{i:07d}" for i in range(n)], dtype=object)
    return PortfolioTable(
        features=features,
        columns=columns,
        response=response,
        exposure=exposure,
        coverage=coverage,
        ids=ids,
        truth={"mu": mu, "mu_inhouse": mu_inhouse, "var_cond": var_cond},
    )

"""Synthetic two-period panels with known effects, plus brute-force oracles.

Three families, each built from a structural function phi and a regressor
process with a point mass of stayers (units whose regressor is exactly equal
across periods):

* ``additive-linear``:  Y_t = theta*X_t + A + V_t, where the unobserved
  A = rho*(X1+X2)/2 + eta correlates with the regressors when rho != 0
  (an endogeneity device the panel identification strategy is immune to and
  a cross-sectional fit is not).  Every effect equals theta.
* ``random-coefficient``:  Y_t = B1 + B2*X_t + V_t with unit-specific B2 =
  b0 + b1*(X1+X2)/2 + s*eta, so the mean effect among stayers at x is
  b0 + b1*x.  No closed form is used for oracles: they are brute force.
* ``location-scale``:  Y_t = mu_t(X_t) + sigma_t(X_t) * phi(X_t, U_t) with
  polynomial mu_t, sigma_t and an additive-linear phi.  The period-specific
  scale/shift and the time-averaged effects have closed forms used by the
  acceptance tests.

Oracles report a subsampling standard error next to every value; comparisons
should use the value +/- a few standard errors, never the value alone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional, Tuple

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.stats import ks_2samp, norm

from ._rng import DOMAIN_ORACLE, DOMAIN_SIMULATE, substream
from ._util import order_quantile
from .errors import ConfigError, DataError
from .panel import PanelDataset

MIN_RETAINED = 500
SE_FLOOR = 1e-12  # oracles never report an exactly-zero uncertainty


def _draw_centered(law: str, sd: float, n: int, rng) -> np.ndarray:
    """Centered draw with the given standard deviation."""
    if law == "normal":
        return sd * rng.standard_normal(n)
    if law == "uniform":
        return sd * math.sqrt(12.0) * (rng.random(n) - 0.5)
    if law == "laplace":
        return rng.laplace(0.0, sd / math.sqrt(2.0), n)
    raise ConfigError(f"unknown noise law {law!r}")


@dataclass(frozen=True)
class RegressorLaw:
    """Gaussian regressor process with an exact-stayer atom.

    X1 ~ N(mean, sd^2); with probability ``stayer_prob`` a unit keeps
    X2 = X1 exactly, otherwise X2 is Gaussian with correlation ``corr``
    to X1 and the same marginal.
    """

    mean: float = 0.0
    sd: float = 1.0
    corr: float = 0.0
    stayer_prob: float = 0.15

    def __post_init__(self):
        if self.sd <= 0:
            raise ConfigError("regressor sd must be positive")
        if not 0.0 <= self.stayer_prob < 1.0:
            raise ConfigError("stayer_prob must lie in [0, 1)")
        if not -1.0 < self.corr < 1.0:
            raise ConfigError("mover correlation must lie in (-1, 1)")

    def draw(self, n: int, rng) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        x1 = self.mean + self.sd * rng.standard_normal(n)
        stay = rng.random(n) < self.stayer_prob
        eps = rng.standard_normal(n)
        x2_move = self.mean + self.corr * (x1 - self.mean) + self.sd * math.sqrt(1.0 - self.corr ** 2) * eps
        x2 = np.where(stay, x1, x2_move)
        return x1, x2, stay


@dataclass(frozen=True)
class AdditiveLinearDgp:
    """Y_t = theta*X_t + A + V_t with A = rho*mean(X) + het_sd*eta."""

    theta: float = 1.0
    rho: float = 0.0
    het_sd: float = 1.0
    noise_sd: float = 1.0
    het_law: str = "normal"
    noise_law: str = "normal"
    regressors: RegressorLaw = field(default_factory=RegressorLaw)

    family = "additive-linear"

    def structural(self, x, a, v):
        return self.theta * x + a + v


@dataclass(frozen=True)
class RandomCoefficientDgp:
    """Y_t = B1 + B2*X_t + V_t with a regressor-dependent random slope."""

    intercept_mean: float = 0.0
    intercept_sd: float = 1.0
    slope_mean: float = 1.0
    slope_x_loading: float = 0.0
    slope_sd: float = 0.5
    noise_sd: float = 1.0
    noise_law: str = "normal"
    regressors: RegressorLaw = field(default_factory=RegressorLaw)

    family = "random-coefficient"


@dataclass(frozen=True)
class LocationScaleDgp:
    """Y_t = mu_t(X_t) + sigma_t(X_t) * phi(X_t, U_t), polynomial mu/sigma.

    Coefficient tuples are in increasing-power order; ``core`` is the
    additive-linear inner model supplying phi and the regressor process.
    """

    mu1: Tuple[float, ...] = (0.0,)
    mu2: Tuple[float, ...] = (0.0,)
    sigma1: Tuple[float, ...] = (1.0,)
    sigma2: Tuple[float, ...] = (1.0,)
    core: AdditiveLinearDgp = field(default_factory=AdditiveLinearDgp)

    family = "location-scale"

    @property
    def regressors(self) -> RegressorLaw:
        return self.core.regressors

    def mu(self, t: int, x):
        return npoly.polyval(x, self.mu1 if t == 1 else self.mu2)

    def sigma(self, t: int, x):
        return npoly.polyval(x, self.sigma1 if t == 1 else self.sigma2)

    def dmu(self, t: int, x):
        return npoly.polyval(x, npoly.polyder(self.mu1 if t == 1 else self.mu2))

    def dsigma(self, t: int, x):
        return npoly.polyval(x, npoly.polyder(self.sigma1 if t == 1 else self.sigma2))


FAMILIES = {
    "additive-linear": AdditiveLinearDgp,
    "random-coefficient": RandomCoefficientDgp,
    "location-scale": LocationScaleDgp,
}


def dgp_to_dict(spec) -> dict:
    d = asdict(spec)
    d["family"] = spec.family
    return d


def dgp_from_dict(d: dict):
    d = dict(d)
    family = d.pop("family", None)
    if family not in FAMILIES:
        raise ConfigError(f"unknown DGP family {family!r}")
    if "regressors" in d and isinstance(d["regressors"], dict):
        d["regressors"] = RegressorLaw(**d["regressors"])
    if family == "location-scale":
        core = d.pop("core", {})
        if isinstance(core, dict):
            core.pop("family", None)
            if "regressors" in core and isinstance(core["regressors"], dict):
                core["regressors"] = RegressorLaw(**core["regressors"])
            core = AdditiveLinearDgp(**core)
        for key in ("mu1", "mu2", "sigma1", "sigma2"):
            if key in d:
                d[key] = tuple(float(v) for v in d[key])
        return LocationScaleDgp(core=core, **d)
    return FAMILIES[family](**d)


def _simulate_arrays(spec, n: int, rng):
    """Draw (x1, x2, y1, y2) plus the latent slope when one exists."""
    if spec.family == "additive-linear":
        x1, x2, _ = spec.regressors.draw(n, rng)
        eta = _draw_centered(spec.het_law, spec.het_sd, n, rng)
        a = spec.rho * 0.5 * (x1 + x2) + eta
        v1 = _draw_centered(spec.noise_law, spec.noise_sd, n, rng)
        v2 = _draw_centered(spec.noise_law, spec.noise_sd, n, rng)
        return x1, x2, spec.structural(x1, a, v1), spec.structural(x2, a, v2), None

    if spec.family == "random-coefficient":
        x1, x2, _ = spec.regressors.draw(n, rng)
        b1 = spec.intercept_mean + spec.intercept_sd * rng.standard_normal(n)
        b2 = spec.slope_mean + spec.slope_x_loading * 0.5 * (x1 + x2) + spec.slope_sd * rng.standard_normal(n)
        v1 = _draw_centered(spec.noise_law, spec.noise_sd, n, rng)
        v2 = _draw_centered(spec.noise_law, spec.noise_sd, n, rng)
        return x1, x2, b1 + b2 * x1 + v1, b1 + b2 * x2 + v2, b2

    if spec.family == "location-scale":
        core = spec.core
        x1, x2, _ = core.regressors.draw(n, rng)
        eta = _draw_centered(core.het_law, core.het_sd, n, rng)
        a = core.rho * 0.5 * (x1 + x2) + eta
        v1 = _draw_centered(core.noise_law, core.noise_sd, n, rng)
        v2 = _draw_centered(core.noise_law, core.noise_sd, n, rng)
        s1, s2 = spec.sigma(1, x1), spec.sigma(2, x2)
        if np.min(s1) <= 0 or np.min(s2) <= 0:
            raise ConfigError("scale polynomial is nonpositive on the sampled regressor range")
        y1 = spec.mu(1, x1) + s1 * core.structural(x1, a, v1)
        y2 = spec.mu(2, x2) + s2 * core.structural(x2, a, v2)
        return x1, x2, y1, y2, None

    raise ConfigError(f"unknown DGP family {spec.family!r}")


def simulate(spec, n: int, seed: int) -> PanelDataset:
    """Draw a balanced panel of ``n`` units from the family.

    The stayer count is binomial(n, stayer_prob); all randomness comes from
    the Philox stream keyed by ``(seed, 0)`` so simulated datasets are
    reproducible independent of call order.
    """
    if n < 2:
        raise ConfigError("need at least n=2 units")
    rng = substream(seed, DOMAIN_SIMULATE)
    x1, x2, y1, y2, _ = _simulate_arrays(spec, n, rng)
    return PanelDataset(unit_id=np.arange(n), y1=y1, y2=y2, x1=x1, x2=x2)


@dataclass(frozen=True)
class OracleResult:
    """A ground-truth effect value with its own uncertainty."""

    value: float
    standard_error: float
    config: dict = field(default_factory=dict)


def _noise_quantile(spec: AdditiveLinearDgp, tau: float, n_draws: int, seed: int) -> Tuple[float, float]:
    """tau-quantile of eta + V; exact for Gaussian laws, Monte Carlo otherwise."""
    if spec.het_law == "normal" and spec.noise_law == "normal":
        sd = math.hypot(spec.het_sd, spec.noise_sd)
        return float(sd * norm.ppf(tau)), 0.0
    rng = substream(seed, DOMAIN_ORACLE, 9)
    draws = _draw_centered(spec.het_law, spec.het_sd, n_draws, rng) + \
        _draw_centered(spec.noise_law, spec.noise_sd, n_draws, rng)
    q = order_quantile(draws, tau)
    # without-replacement half-samples: their spread around the full-sample
    # statistic already matches the full-sample standard error
    halves = []
    for s in range(20):
        sub = substream(seed, DOMAIN_ORACLE, 9, s).choice(draws, n_draws // 2, replace=False)
        halves.append(order_quantile(sub, tau))
    return q, float(np.std(halves, ddof=1))


def _rc_brute_force(spec: RandomCoefficientDgp, x: float, kind: str, tau: Optional[float],
                    n_oracle: int, seed: int, h: Optional[float],
                    quantile_bandwidth: Optional[float], n_subsamples: int) -> OracleResult:
    rng = substream(seed, DOMAIN_ORACLE, 0)
    x1, x2, _, _, b2 = _simulate_arrays(spec, n_oracle, rng)
    pooled_sd = float(np.concatenate([x1, x2]).std())
    if h is None:
        h = n_oracle ** (-0.2) * pooled_sd
    xbar = 0.5 * (x1 + x2)
    keep = (np.abs(x1 - x2) <= h) & (np.abs(xbar - x) <= h)
    m = int(keep.sum())
    if m < MIN_RETAINED:
        raise DataError(
            f"oracle retained only {m} near-stayers at x={x}; "
            f"increase n_oracle (got {n_oracle}) or the bandwidth h (got {h:.4g})"
        )
    b2k = b2[keep]

    if kind == "mean":
        phi = None
    else:
        # phi(x, U_1) for the retained units: intercept + slope*x + period-1 noise
        rng2 = substream(seed, DOMAIN_ORACLE, 1)
        v1 = _draw_centered(spec.noise_law, spec.noise_sd, m, rng2)
        b1k = spec.intercept_mean + spec.intercept_sd * rng2.standard_normal(m)
        phi = b1k + b2k * x + v1

    def value_on(idx: np.ndarray) -> float:
        if kind == "mean":
            return float(b2k[idx].mean())
        ph = phi[idx]
        q = order_quantile(ph, tau)
        hq = quantile_bandwidth
        if hq is None:
            hq = float(ph.std()) * idx.shape[0] ** (-0.2)
        local = np.abs(ph - q) <= hq
        if local.sum() < 30:
            raise DataError(
                f"oracle quantile localization kept only {int(local.sum())} units; "
                "increase n_oracle or quantile_bandwidth"
            )
        return float(b2k[idx][local].mean())

    all_idx = np.arange(m)
    value = value_on(all_idx)
    # without-replacement half-samples: their spread around the full-sample
    # statistic already matches the full-sample standard error
    halves = []
    for s in range(n_subsamples):
        sub = substream(seed, DOMAIN_ORACLE, 2, s).choice(m, m // 2, replace=False)
        halves.append(value_on(sub))
    se = float(np.std(halves, ddof=1))
    return OracleResult(
        value=value,
        standard_error=max(se, SE_FLOOR),
        config={"n_oracle": n_oracle, "h": h, "retained": m, "kind": kind,
                "tau": tau, "seed": seed, "n_subsamples": n_subsamples},
    )


def true_effect(spec, x: float, kind: str = "mean", tau: Optional[float] = None,
                n_oracle: int = 1_000_000, seed: int = 0, h: Optional[float] = None,
                quantile_bandwidth: Optional[float] = None, n_subsamples: int = 40) -> OracleResult:
    """Ground-truth effect at ``x``: closed form when the family permits,
    otherwise brute force on ``n_oracle`` simulated units.

    Parameters
    ----------
    kind : {"mean", "quantile", "time-averaged-mean", "time-averaged-quantile"}
        Which estimand.  Quantile kinds need ``tau``.  For the
        location-scale family only the time-averaged kinds are well defined
        (the per-period effect differs across periods); requesting a plain
        kind there is a configuration error.
    h : float, optional
        Near-stayer bandwidth for brute force; defaults to
        ``n_oracle**(-1/5) * SD(X)``.
    quantile_bandwidth : float, optional
        Half-width of the localization window around the conditional
        quantile (brute-force quantile kinds).

    Notes
    -----
    Brute force retains units with ``|X1-X2| <= h`` and ``|mean(X)-x| <= h``
    and errors when fewer than 500 remain.  The standard error comes from 40
    half-sample subsamples and is floored at a tiny positive value so exact
    families still report a usable uncertainty.
    """
    kinds = ("mean", "quantile", "time-averaged-mean", "time-averaged-quantile")
    if kind not in kinds:
        raise ConfigError(f"unknown effect kind {kind!r}; expected one of {kinds}")
    quantile_kind = kind.endswith("quantile")
    if quantile_kind and (tau is None or not 0.0 < tau < 1.0):
        raise ConfigError("quantile kinds require tau strictly inside (0, 1)")

    if spec.family == "additive-linear":
        return OracleResult(
            value=spec.theta, standard_error=SE_FLOOR,
            config={"closed_form": True, "kind": kind, "tau": tau},
        )

    if spec.family == "random-coefficient":
        base_kind = "quantile" if quantile_kind else "mean"
        return _rc_brute_force(spec, x, base_kind, tau, n_oracle, seed, h,
                               quantile_bandwidth, n_subsamples)

    if spec.family == "location-scale":
        if not kind.startswith("time-averaged"):
            raise ConfigError(
                "location-scale effects differ across periods; request a "
                "time-averaged kind"
            )
        core = spec.core
        mu_bar_d = 0.5 * (spec.dmu(1, x) + spec.dmu(2, x))
        sig_bar = 0.5 * (spec.sigma(1, x) + spec.sigma(2, x))
        sig_bar_d = 0.5 * (spec.dsigma(1, x) + spec.dsigma(2, x))
        if quantile_kind:
            c_tau, c_se = _noise_quantile(core, tau, n_oracle, seed)
            level = (core.theta + core.rho) * x + c_tau
            value = mu_bar_d + sig_bar_d * level + sig_bar * core.theta
            se = abs(sig_bar_d) * c_se
        else:
            level = (core.theta + core.rho) * x
            value = mu_bar_d + sig_bar_d * level + sig_bar * core.theta
            se = 0.0
        return OracleResult(
            value=float(value), standard_error=max(se, SE_FLOOR),
            config={"closed_form": True, "kind": kind, "tau": tau},
        )

    raise ConfigError(f"unknown DGP family {spec.family!r}")


def true_scale(spec, x):
    """Population scale function sigma(x) = sigma_2(x) / sigma_1(x)."""
    if spec.family == "location-scale":
        return np.asarray(spec.sigma(2, x) / spec.sigma(1, x), dtype=float)
    return np.ones_like(np.asarray(x, dtype=float))


def true_shift(spec, x):
    """Population location shift mu_2(x) - sigma(x) * mu_1(x)."""
    if spec.family == "location-scale":
        return np.asarray(spec.mu(2, x) - true_scale(spec, x) * spec.mu(1, x), dtype=float)
    return np.zeros_like(np.asarray(x, dtype=float))


def cross_section_slope_bias(spec) -> float:
    """Bias of the cross-sectional slope for the additive-linear family.

    E[A | X_t = x] is linear with slope rho/2 * (1 + p + (1-p)*corr), which a
    per-period regression absorbs into its regressor coefficient.
    """
    if spec.family != "additive-linear":
        raise ConfigError("closed-form cross-section bias exists only for additive-linear")
    law = spec.regressors
    return spec.rho * 0.5 * (1.0 + law.stayer_prob + (1.0 - law.stayer_prob) * law.corr)


def true_transform_effect(spec, transform: str, lam: float = 0.0, pi: float = 1.0) -> float:
    """d/dx2 of the conditional quantile of a transformed outcome
    (additive-linear family; the value is the same at every tau and grid
    point because the family is linear with additive noise)."""
    if spec.family != "additive-linear":
        raise ConfigError("closed-form transform effects exist only for additive-linear")
    if transform == "difference":
        return spec.theta
    if transform == "period2":
        return spec.theta + spec.rho / 2.0
    if transform == "linear-combo":
        return pi * spec.theta + (lam + pi) * spec.rho / 2.0
    raise ConfigError(f"unknown transform {transform!r}")


@dataclass(frozen=True)
class HomogeneityReport:
    """Per-bin two-sample KS comparison of the two periods among stayers."""

    n_bins: int
    n_stayers: int
    pass_fraction: float
    statistics: np.ndarray
    critical_values: np.ndarray
    bin_edges: np.ndarray
    alpha: float

    def to_dict(self) -> dict:
        return {
            "n_bins": self.n_bins,
            "n_stayers": self.n_stayers,
            "pass_fraction": self.pass_fraction,
            "statistics": [float(v) for v in self.statistics],
            "critical_values": [float(v) for v in self.critical_values],
            "bin_edges": [float(v) for v in self.bin_edges],
            "alpha": self.alpha,
        }


def time_homogeneity_check(data: PanelDataset, n_bins: Optional[int] = None,
                           alpha: float = 0.01, correction=None) -> HomogeneityReport:
    """KS-compare Y1 and Y2 within stayer bins.

    Under time homogeneity the two periods' outcome distributions agree
    conditional on the (common) regressor value, so each bin's two-sample KS
    statistic should fall below the level-``alpha`` critical value in all but
    a small fraction of bins.  ``correction`` optionally maps ``(y, x) ->
    standardized value`` per period -- a pair of callables -- for families
    where homogeneity holds only after a known affine adjustment.
    """
    stay = data.stayer_mask
    xs = data.x1[stay]
    y1 = data.y1[stay]
    y2 = data.y2[stay]
    n_stay = int(stay.sum())
    if n_stay < 100:
        raise DataError(f"only {n_stay} stayers; need at least 100 for the homogeneity check")
    if correction is not None:
        f1, f2 = correction
        y1 = np.asarray(f1(y1, xs), dtype=float)
        y2 = np.asarray(f2(y2, xs), dtype=float)
    if n_bins is None:
        n_bins = max(2, min(10, n_stay // 50))
    edges = np.quantile(xs, np.linspace(0, 1, n_bins + 1))
    edges[0] -= 1e-12
    which = np.searchsorted(edges, xs, side="right") - 1
    which = np.clip(which, 0, n_bins - 1)
    c_alpha = math.sqrt(-math.log(alpha / 2.0) / 2.0)
    stats, crits = [], []
    for b in range(n_bins):
        sel = which == b
        n1 = int(sel.sum())
        if n1 < 5:
            continue
        stat = ks_2samp(y1[sel], y2[sel], method="asymp").statistic
        stats.append(float(stat))
        crits.append(c_alpha * math.sqrt(2.0 / n1))
    stats = np.asarray(stats)
    crits = np.asarray(crits)
    if stats.size == 0:
        raise DataError("no stayer bin had enough observations for the KS check")
    return HomogeneityReport(
        n_bins=int(stats.size),
        n_stayers=n_stay,
        pass_fraction=float(np.mean(stats < crits)),
        statistics=stats,
        critical_values=crits,
        bin_edges=edges,
        alpha=alpha,
    )

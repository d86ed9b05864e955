"""Weighted bootstrap and sup-t uniform confidence bands.

One bootstrap draw reweights every unit by an i.i.d. nonnegative weight with
mean 1 and variance 1 (exponential by default) and reruns the entire
estimation pipeline -- both periods, every quantile level, every derived
function -- under that single weight vector, so all dependence between
ingredients is preserved.  With theta-hat the unweighted estimate and
theta*_b the b-th reweighted one, the stored draw is

    Z*_b = sqrt(n) * (theta*_b - theta-hat).

A band at level 1 - alpha is theta-hat +/- t * sigma-hat / sqrt(n), where
sigma-hat is a per-point scale taken from the draws (standard deviation, or
IQR/1.349) and t is the ceil((1-alpha)*B)-th order statistic of the sup-t
statistics  max_points |Z*_b| / sigma-hat.

Randomness is counter-based: attempt r of draw slot b reads the Philox
stream keyed by (seed, 1, b, r), so serial and parallel schedules produce
bit-identical results and failed draws can be retried deterministically.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from ._rng import DOMAIN_BOOTSTRAP, DOMAIN_MC, child_seed, substream
from ._util import order_quantile
from .effects import EffectCurve, EffectPipeline
from .errors import ConfigError, NumericalError

IQR_SCALE = 1.349  # Gaussian IQR in sd units
SIGMA_FLOOR_REL = 1e-12
MAX_ATTEMPTS_PER_DRAW = 5  # total attempts across slots stay below 5*B


def _exponential(n: int, rng) -> np.ndarray:
    return rng.standard_exponential(n)


def _multinomial(n: int, rng) -> np.ndarray:
    return rng.multinomial(n, np.full(n, 1.0 / n)).astype(float)


def _degenerate(n: int, rng) -> np.ndarray:
    return np.ones(n)


WEIGHT_LAWS: Dict[str, Callable[[int, object], np.ndarray]] = {
    "exponential": _exponential,
    "multinomial": _multinomial,
    "degenerate": _degenerate,
}


def register_weight_law(name: str, sampler: Callable[[int, object], np.ndarray],
                        mean: float, variance: float) -> None:
    """Register a custom weight law; the declared moments must be (1, 1)."""
    if not (math.isclose(mean, 1.0) and math.isclose(variance, 1.0)):
        raise ConfigError(
            f"bootstrap weight laws need mean 1 and variance 1, got ({mean}, {variance})"
        )
    WEIGHT_LAWS[name] = sampler


def draw_weights(n: int, law: str, rng) -> np.ndarray:
    """One weight vector of length n from a registered law."""
    if law not in WEIGHT_LAWS:
        raise ConfigError(f"unknown weight law {law!r}; known: {sorted(WEIGHT_LAWS)}")
    w = np.asarray(WEIGHT_LAWS[law](n, rng), dtype=float)
    if w.shape != (n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ConfigError(f"weight law {law!r} returned an invalid vector")
    return w


@dataclass
class BootstrapRun:
    """Archive of one bootstrap: the point curve, all draws, provenance.

    ``draws`` holds Z*_b rows; ``point`` is the full point-estimate curve so
    bands can be re-derived later without touching the data.
    """

    point: EffectCurve
    draws: np.ndarray            # (B, m)
    n: int
    seed: int
    law: str
    failures: Tuple[Tuple[int, int, str], ...] = ()
    meta: dict = field(default_factory=dict)

    @property
    def B(self) -> int:
        return int(self.draws.shape[0])

    def save(self, path) -> None:
        blob = {
            "point": self.point.to_dict(),
            "n": self.n,
            "seed": self.seed,
            "law": self.law,
            "failures": [list(f) for f in self.failures],
            "meta": self.meta,
        }
        np.savez_compressed(path, draws=self.draws, header=json.dumps(blob, sort_keys=True))

    @classmethod
    def load(cls, path) -> "BootstrapRun":
        with np.load(path, allow_pickle=False) as archive:
            draws = archive["draws"]
            blob = json.loads(str(archive["header"]))
        return cls(
            point=EffectCurve.from_dict(blob["point"]),
            draws=draws,
            n=int(blob["n"]),
            seed=int(blob["seed"]),
            law=blob["law"],
            failures=tuple((int(a), int(b), str(c)) for a, b, c in blob["failures"]),
            meta=blob.get("meta", {}),
        )


def _one_draw(pipeline: EffectPipeline, theta: np.ndarray, finite: np.ndarray,
              n: int, seed: int, law: str, slot: int):
    """Compute Z* for one slot, retrying with fresh weights on failure."""
    local_failures = []
    for attempt in range(MAX_ATTEMPTS_PER_DRAW):
        rng = substream(seed, DOMAIN_BOOTSTRAP, slot, attempt)
        w = draw_weights(n, law, rng)
        try:
            curve = pipeline.compute(w)
        except NumericalError as exc:
            local_failures.append((slot, attempt, str(exc)))
            continue
        z = math.sqrt(n) * (curve.estimate - theta)
        if not np.all(np.isfinite(z[finite])):
            local_failures.append((slot, attempt, "non-finite estimate at a finite grid point"))
            continue
        return z, local_failures
    raise NumericalError(
        f"bootstrap draw {slot} failed {MAX_ATTEMPTS_PER_DRAW} times; "
        f"last error: {local_failures[-1][2]}"
    )


def bootstrap_curves(pipeline: EffectPipeline, B: int, seed: int,
                     law: str = "exponential", n_jobs: int = 1) -> BootstrapRun:
    """Run the weighted bootstrap for a configured pipeline.

    Parameters
    ----------
    pipeline : EffectPipeline
        The estimand; its ``compute`` is rerun under each weight vector.
    B : int
        Number of stored draws (>= 2).
    seed : int
        Base seed of the counter-based streams.
    law : str
        Registered weight law name.
    n_jobs : int
        joblib parallelism; results are identical for any value.
    """
    if B < 2:
        raise ConfigError("the bootstrap needs at least B=2 draws")
    if law not in WEIGHT_LAWS:
        raise ConfigError(f"unknown weight law {law!r}; known: {sorted(WEIGHT_LAWS)}")
    point = pipeline.point()
    theta = point.estimate
    finite = np.isfinite(theta)
    n = pipeline.data.n

    if n_jobs == 1:
        results = [_one_draw(pipeline, theta, finite, n, seed, law, b) for b in range(B)]
    else:
        results = Parallel(n_jobs=n_jobs)(
            delayed(_one_draw)(pipeline, theta, finite, n, seed, law, b) for b in range(B)
        )
    draws = np.stack([z for z, _ in results])
    failures = tuple(f for _, fs in results for f in fs)
    return BootstrapRun(
        point=point, draws=draws, n=n, seed=seed, law=law, failures=failures,
        meta={"kind": pipeline.kind, "B": B},
    )


@dataclass(frozen=True)
class UniformBand:
    """A sup-t band: per-point scale, critical value, and the band itself."""

    alpha: float
    se_method: str
    t_crit: float
    sigma: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    flags: Dict[str, np.ndarray]

    def apply(self, curve: EffectCurve) -> EffectCurve:
        banded = curve.with_band(self.lower, self.upper)
        for k, v in self.flags.items():
            banded.flags.setdefault(k, v)
        banded.meta = dict(banded.meta)
        banded.meta.update({
            "band_alpha": self.alpha,
            "band_t_crit": self.t_crit,
            "band_se_method": self.se_method,
        })
        return banded


def _sigma_from_draws(draws: np.ndarray, se_method: str) -> np.ndarray:
    if se_method == "sd":
        return np.std(draws, axis=0, ddof=1)
    if se_method == "iqr":
        hi = np.array([order_quantile(col, 0.75) for col in draws.T])
        lo = np.array([order_quantile(col, 0.25) for col in draws.T])
        return (hi - lo) / IQR_SCALE
    raise ConfigError(f"unknown se_method {se_method!r}; expected 'sd' or 'iqr'")


def uniform_band(run: BootstrapRun, alpha: float = 0.10, se_method: str = "sd",
                 min_draws: int = 20) -> UniformBand:
    """Sup-t uniform band over the run's grid at level 1 - alpha.

    The per-point scale is floored at a tiny multiple of the estimate's
    median magnitude so degenerate (zero-variance) runs collapse to a
    zero-width band around the estimate, flagged, instead of dividing by
    zero.  Grid points where the point estimate itself is missing are
    excluded from the sup and carry no band.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie strictly in (0, 1)")
    if run.B < min_draws:
        raise ConfigError(
            f"B={run.B} draws is below the quantile-step guard min_draws={min_draws}"
        )
    theta = run.point.estimate
    finite = np.isfinite(theta)
    if not np.any(finite):
        raise ConfigError("no finite grid point to band")
    Z = run.draws[:, finite]

    sigma_f = _sigma_from_draws(Z, se_method)
    med = float(np.median(np.abs(theta[finite])))
    floor = SIGMA_FLOOR_REL * med if med > 0 else np.finfo(float).tiny
    floored_f = sigma_f < floor
    sigma_f = np.maximum(sigma_f, floor)

    with np.errstate(invalid="ignore"):
        t_stats = np.max(np.abs(Z) / sigma_f[None, :], axis=1)
    t_crit = order_quantile(t_stats, 1.0 - alpha)

    m = theta.shape[0]
    sigma = np.full(m, np.nan)
    sigma[finite] = sigma_f
    half = np.full(m, np.nan)
    half[finite] = t_crit * sigma_f / math.sqrt(run.n)
    floored = np.zeros(m, dtype=bool)
    floored[finite] = floored_f
    return UniformBand(
        alpha=alpha, se_method=se_method, t_crit=float(t_crit), sigma=sigma,
        lower=theta - half, upper=theta + half,
        flags={"sigma_floored": floored, "point_missing": ~finite},
    )


def pointwise_tcrits(run: BootstrapRun, alpha: float = 0.10,
                     se_method: str = "sd", min_draws: int = 20) -> np.ndarray:
    """Per-point critical values (same convention as the uniform one).

    The uniform critical value dominates every entry here; useful as a
    diagnostic of how much uniformity costs.
    """
    if run.B < min_draws:
        raise ConfigError(
            f"B={run.B} draws is below the quantile-step guard min_draws={min_draws}"
        )
    theta = run.point.estimate
    finite = np.isfinite(theta)
    Z = run.draws[:, finite]
    sigma_f = _sigma_from_draws(Z, se_method)
    med = float(np.median(np.abs(theta[finite])))
    floor = SIGMA_FLOOR_REL * med if med > 0 else np.finfo(float).tiny
    sigma_f = np.maximum(sigma_f, floor)
    crits_f = np.array([order_quantile(np.abs(Z[:, j]) / sigma_f[j], 1.0 - alpha)
                        for j in range(Z.shape[1])])
    crits = np.full(theta.shape[0], np.nan)
    crits[finite] = crits_f
    return crits


def banded_curve(run: BootstrapRun, alpha: float = 0.10, se_method: str = "sd",
                 min_draws: int = 20) -> EffectCurve:
    """Convenience: the run's point curve with a uniform band attached."""
    return uniform_band(run, alpha, se_method, min_draws).apply(run.point)


# ---------------------------------------------------------------------------
# Monte Carlo coverage harness


@dataclass(frozen=True)
class CoverageReport:
    """Aggregate of a repeated-simulation band-coverage experiment."""

    R: int
    coverage: float              # fraction of reps whose band covers truth everywhere
    mean_width: float
    mean_abs_error: float
    rep_covered: np.ndarray
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "R": self.R,
            "coverage": self.coverage,
            "mean_width": self.mean_width,
            "mean_abs_error": self.mean_abs_error,
            "rep_covered": [bool(v) for v in self.rep_covered],
            "config": self.config,
        }


def _one_rep(simulate_fn, make_pipeline, truth_fn, B, alpha, law, se_method, seed, rep):
    data = simulate_fn(child_seed(seed, DOMAIN_MC, rep, 0))
    pipeline = make_pipeline(data)
    run = bootstrap_curves(pipeline, B, seed=child_seed(seed, DOMAIN_MC, rep, 1), law=law)
    band = uniform_band(run, alpha=alpha, se_method=se_method)
    curve = run.point
    truth = np.asarray(truth_fn(curve), dtype=float)
    ok = np.isfinite(curve.estimate)
    covered = bool(np.all((band.lower[ok] <= truth[ok]) & (truth[ok] <= band.upper[ok])))
    width = float(np.mean(band.upper[ok] - band.lower[ok]))
    err = float(np.mean(np.abs(curve.estimate[ok] - truth[ok])))
    return covered, width, err


def coverage_study(simulate_fn: Callable[[int], object],
                   make_pipeline: Callable[[object], EffectPipeline],
                   truth_fn: Callable[[EffectCurve], np.ndarray],
                   R: int, B: int, seed: int, alpha: float = 0.10,
                   law: str = "exponential", se_method: str = "sd",
                   n_jobs: int = 1, config: Optional[dict] = None) -> CoverageReport:
    """Repeat simulate -> fit -> band R times; report uniform coverage.

    ``truth_fn`` receives each rep's point curve and returns the true value
    at every grid point (so tau- or x-dependent truths are supported).
    """
    if R < 1:
        raise ConfigError("need at least one repetition")
    if n_jobs == 1:
        rows = [_one_rep(simulate_fn, make_pipeline, truth_fn, B, alpha, law,
                         se_method, seed, r) for r in range(R)]
    else:
        rows = Parallel(n_jobs=n_jobs)(
            delayed(_one_rep)(simulate_fn, make_pipeline, truth_fn, B, alpha, law,
                              se_method, seed, r) for r in range(R)
        )
    covered = np.array([r[0] for r in rows], dtype=bool)
    return CoverageReport(
        R=R,
        coverage=float(covered.mean()),
        mean_width=float(np.mean([r[1] for r in rows])),
        mean_abs_error=float(np.mean([r[2] for r in rows])),
        rep_covered=covered,
        config=config or {},
    )

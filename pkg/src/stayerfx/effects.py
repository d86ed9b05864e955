"""Effect curves for stayers: point estimates on evaluation grids.

A unit is a "stayer" at x when its regressor equals x in both periods.  With
two periods and time-homogeneous unobservables, derivatives of the
conditional mean / quantile surfaces along one period's regressor, contrasted
across periods and evaluated on the diagonal (x, x), identify the structural
effect among stayers:

* mean effect:        d2 M2(x,x) - d2 M1(x,x)
* quantile effect:    d2 Q2(tau|x,x) - d2 Q1(tau|x,x)

where ``d_t`` denotes the partial derivative in period-t's regressor.  The
symmetric route through period-1 derivatives identifies the same object, so
the difference of the two routes is reported as an overidentification
diagnostic next to every estimate.

When the two periods differ by an unknown location shift and scale, the pair
(scale(x), shift(x)) is first recovered -- from second moments or from
quantile spreads -- and the effect formulas average the two appropriately
deflated routes ("time-adjusted" curves).

Every curve records, per grid point, boundary clamping, variance flooring,
quantile crossing and missing-scale flags, and carries an assumption-regime
tag in its metadata.  Curves conditioned on stayers at x trace a different
subpopulation at each x; that caveat rides along in the metadata too.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from .basis import BasisEval, BasisSpec, eval_basis, spec_digest, univariate_design
from .errors import ConfigError, DataError
from .panel import PanelDataset
from .regress import LinearFit, QuantileFit, predict, qr_fit, variance_fit, wls_fit

STAYER_CAVEAT = (
    "each grid point conditions on the stayers at that x; the curve compares "
    "different subpopulations as x varies"
)
CROSSING_TOL = 1e-10
DEFAULT_TE_TAUS = (0.9, 0.1, 0.5)


# ---------------------------------------------------------------------------
# evaluation grids


@dataclass(frozen=True)
class EvalGrid:
    """Grid of regressor points (and quantile levels) for reporting."""

    xs: np.ndarray
    taus: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "xs", np.asarray(self.xs, dtype=float))
        object.__setattr__(self, "taus", np.asarray(self.taus, dtype=float))
        if self.xs.size == 0:
            raise ConfigError("evaluation grid needs at least one x point")
        if np.any(np.diff(self.xs) < 0):
            raise ConfigError("grid x points must be nondecreasing")
        if self.taus.size and (np.any(self.taus <= 0) or np.any(self.taus >= 1)):
            raise ConfigError("quantile levels must lie strictly inside (0, 1)")

    def to_dict(self) -> dict:
        return {
            "xs": [float(v) for v in self.xs],
            "taus": [float(v) for v in self.taus],
            "provenance": self.provenance,
        }


def default_grid(data: PanelDataset, n_x: int = 101,
                 x_quantiles: Tuple[float, float] = (0.10, 0.90),
                 taus: Optional[Sequence[float]] = None) -> EvalGrid:
    """Equally spaced x grid between pooled sample quantiles.

    With ``n_x=101`` between the 0.10 and 0.90 pooled quantiles the spacing
    is 1% of the evaluated range.  The default quantile levels are 17 points
    on [0.1, 0.9].
    """
    pooled = data.pooled_x()
    lo, hi = np.quantile(pooled, x_quantiles)
    if not lo < hi:
        raise DataError("regressor quantile range is degenerate")
    if taus is None:
        taus = np.linspace(0.1, 0.9, 17)
    return EvalGrid(
        xs=np.linspace(lo, hi, n_x),
        taus=np.asarray(list(taus), dtype=float),
        provenance=f"pooled x quantiles {x_quantiles[0]:.2f}-{x_quantiles[1]:.2f}, {n_x} points",
    )


# ---------------------------------------------------------------------------
# curve container


def _opt(arr) -> Optional[np.ndarray]:
    return None if arr is None else np.asarray(arr, dtype=float)


@dataclass
class EffectCurve:
    """An effect estimate over an index of grid points.

    ``x``/``tau``/``x2`` are aligned per-point index columns (``tau`` and
    ``x2`` may be None for purely x-indexed curves).  ``diagnostic`` holds
    the overidentification contrast where one exists.  ``flags`` maps a flag
    name to a boolean per-point array.
    """

    kind: str
    estimate: np.ndarray
    x: Optional[np.ndarray] = None
    tau: Optional[np.ndarray] = None
    x2: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    diagnostic: Optional[np.ndarray] = None
    flags: Dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.estimate = np.asarray(self.estimate, dtype=float)
        for name in ("x", "tau", "x2", "lower", "upper", "diagnostic"):
            setattr(self, name, _opt(getattr(self, name)))
        m = self.estimate.shape[0]
        for name in ("x", "tau", "x2", "lower", "upper", "diagnostic"):
            arr = getattr(self, name)
            if arr is not None and arr.shape != (m,):
                raise ConfigError(f"curve column {name!r} must have shape ({m},)")
        self.flags = {k: np.asarray(v, dtype=bool) for k, v in self.flags.items()}
        for k, v in self.flags.items():
            if v.shape != (m,):
                raise ConfigError(f"flag {k!r} must have shape ({m},)")

    @property
    def n_points(self) -> int:
        return int(self.estimate.shape[0])

    def flag_any(self) -> np.ndarray:
        out = np.zeros(self.n_points, dtype=bool)
        for v in self.flags.values():
            out |= v
        return out

    def with_band(self, lower: np.ndarray, upper: np.ndarray) -> "EffectCurve":
        return EffectCurve(
            kind=self.kind, estimate=self.estimate, x=self.x, tau=self.tau,
            x2=self.x2, lower=lower, upper=upper, diagnostic=self.diagnostic,
            flags=dict(self.flags), meta=dict(self.meta),
        )

    def to_dict(self) -> dict:
        def col(arr):
            if arr is None:
                return None
            return [None if not math.isfinite(v) else float(v) for v in arr]

        return {
            "kind": self.kind,
            "x": col(self.x),
            "x2": col(self.x2),
            "tau": col(self.tau),
            "estimate": col(self.estimate),
            "lower": col(self.lower),
            "upper": col(self.upper),
            "diagnostic": col(self.diagnostic),
            "flags": {k: [bool(b) for b in v] for k, v in self.flags.items()},
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EffectCurve":
        def arr(col):
            if col is None:
                return None
            return np.asarray([np.nan if v is None else v for v in col], dtype=float)

        return cls(
            kind=d["kind"], estimate=arr(d["estimate"]), x=arr(d.get("x")),
            tau=arr(d.get("tau")), x2=arr(d.get("x2")), lower=arr(d.get("lower")),
            upper=arr(d.get("upper")), diagnostic=arr(d.get("diagnostic")),
            flags={k: np.asarray(v, dtype=bool) for k, v in d.get("flags", {}).items()},
            meta=d.get("meta", {}),
        )

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EffectCurve":
        return cls.from_dict(json.loads(text))

    def write_csv(self, path) -> None:
        """Plot-ready CSV with columns x, x2, tau, estimate, lower, upper,
        diagnostic, flags (active flag names joined by '|')."""
        names = sorted(self.flags)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x", "x2", "tau", "estimate", "lower", "upper",
                             "diagnostic", "flags"])
            for i in range(self.n_points):
                def cell(arr):
                    if arr is None or not math.isfinite(arr[i]):
                        return ""
                    return repr(float(arr[i]))
                active = "|".join(n for n in names if self.flags[n][i])
                writer.writerow([cell(self.x), cell(self.x2), cell(self.tau),
                                 cell(self.estimate), cell(self.lower),
                                 cell(self.upper), cell(self.diagnostic), active])


@dataclass
class TimeEffectFns:
    """Scale and location-shift functions linking the two periods.

    ``scale`` is NaN (and flagged) at grid points where the route's
    precondition failed; downstream curves skip those points.
    """

    x: np.ndarray
    scale: np.ndarray
    shift: np.ndarray
    route: str                    # "moments" | "quantiles"
    flags: Dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def missing(self) -> np.ndarray:
        return ~np.isfinite(self.scale)

    def as_curves(self) -> Tuple[EffectCurve, EffectCurve]:
        meta = dict(self.meta)
        meta.setdefault("route", self.route)
        scale = EffectCurve(kind="scale", estimate=self.scale, x=self.x,
                            flags=dict(self.flags), meta=meta)
        shift = EffectCurve(kind="location-shift", estimate=self.shift, x=self.x,
                            flags=dict(self.flags), meta=dict(meta))
        return scale, shift

    def to_dict(self) -> dict:
        return {
            "x": [float(v) for v in self.x],
            "scale": [None if not math.isfinite(v) else float(v) for v in self.scale],
            "shift": [None if not math.isfinite(v) else float(v) for v in self.shift],
            "route": self.route,
            "flags": {k: [bool(b) for b in v] for k, v in self.flags.items()},
            "meta": self.meta,
        }


# ---------------------------------------------------------------------------
# provenance checks and shared evaluation helpers


def _check_provenance(spec: BasisSpec, *fits) -> None:
    sid = spec_digest(spec)
    digests = set()
    for f in fits:
        if f.spec_id and f.spec_id != sid:
            raise ConfigError("fit was produced under a different basis spec")
        if f.w_digest:
            digests.add(f.w_digest)
    if len(digests) > 1:
        raise ConfigError("fits were produced under different weight vectors")


def _stayer_eval(spec: BasisSpec, xs: np.ndarray) -> BasisEval:
    return eval_basis(spec, xs, xs)


def _quantile_surfaces(qfit: QuantileFit, ev: BasisEval, taus: np.ndarray):
    """Level and both partial-derivative surfaces, shape (n_x, n_tau)."""
    betas = np.stack([qfit.beta_for(t) for t in taus], axis=1)  # (K, n_tau)
    return ev.values @ betas, ev.d_x1 @ betas, ev.d_x2 @ betas


def _crossing_flags(levels: Sequence[np.ndarray]) -> np.ndarray:
    """True at (x, tau_j) when any period's fitted levels decrease into j."""
    flags = np.zeros(levels[0].shape, dtype=bool)
    for lvl in levels:
        if lvl.shape[1] < 2:
            continue
        drop = np.diff(lvl, axis=1) < -CROSSING_TOL
        flags[:, 1:] |= drop
    return flags


def _xmajor(xs: np.ndarray, taus: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return np.repeat(xs, taus.size), np.tile(taus, xs.size)


def _base_meta(regime: str, **extra) -> dict:
    meta = {"assumption_regime": regime, "caveat": STAYER_CAVEAT}
    meta.update(extra)
    return meta


# ---------------------------------------------------------------------------
# homogeneous-time estimands


def mean_effect(fit1: LinearFit, fit2: LinearFit, spec: BasisSpec, grid: EvalGrid) -> EffectCurve:
    """Mean effect for stayers: d2 M2(x,x) - d2 M1(x,x).

    The diagnostic column holds the gap between this and the symmetric
    period-1 route d1 M1(x,x) - d1 M2(x,x); it converges to zero under the
    maintained assumptions and should hover near zero in practice.
    """
    _check_provenance(spec, fit1, fit2)
    ev = _stayer_eval(spec, grid.xs)
    p1 = predict(fit1, ev)
    p2 = predict(fit2, ev)
    est = p2.d_x2 - p1.d_x2
    alt = p1.d_x1 - p2.d_x1
    return EffectCurve(
        kind="mean-homogeneous", estimate=est, x=grid.xs, diagnostic=est - alt,
        flags={"boundary_clamp": ev.clamped},
        meta=_base_meta("time-homogeneity"),
    )


def quantile_effect(qfit1: QuantileFit, qfit2: QuantileFit, spec: BasisSpec,
                    grid: EvalGrid) -> EffectCurve:
    """Quantile effect for stayers: d2 Q2(tau|x,x) - d2 Q1(tau|x,x).

    Indexed x-major over (grid.xs, grid.taus).  Crossing of fitted quantile
    levels across tau is flagged, never repaired.
    """
    _check_provenance(spec, qfit1, qfit2)
    ev = _stayer_eval(spec, grid.xs)
    q1, d1_1, d2_1 = _quantile_surfaces(qfit1, ev, grid.taus)
    q2, d1_2, d2_2 = _quantile_surfaces(qfit2, ev, grid.taus)
    est = d2_2 - d2_1
    alt = d1_1 - d1_2
    crossing = _crossing_flags([q1, q2])
    xcol, taucol = _xmajor(grid.xs, grid.taus)
    clamp = np.repeat(ev.clamped, grid.taus.size)
    return EffectCurve(
        kind="quantile-homogeneous", estimate=est.ravel(), x=xcol, tau=taucol,
        diagnostic=(est - alt).ravel(),
        flags={"boundary_clamp": clamp, "quantile_crossing": crossing.ravel()},
        meta=_base_meta("time-homogeneity", n_x=int(grid.xs.size), n_tau=int(grid.taus.size)),
    )


# ---------------------------------------------------------------------------
# time effects: scale / shift recovery and adjusted estimands


def scale_location_from_moments(mean1: LinearFit, mean2: LinearFit,
                                var1: LinearFit, var2: LinearFit,
                                spec: BasisSpec, grid: EvalGrid,
                                floors: Tuple[float, float] = (0.0, 0.0)) -> TimeEffectFns:
    """Recover scale(x) = sqrt(V2/V1) and shift(x) = M2 - scale*M1 on (x,x).

    Variance predictions are floored (flagged where binding); the positive
    square root is taken, consistent with a positive scale link.
    """
    _check_provenance(spec, mean1, mean2, var1, var2)
    ev = _stayer_eval(spec, grid.xs)
    m1 = predict(mean1, ev)
    m2 = predict(mean2, ev)
    v1 = predict(var1, ev, floor=floors[0])
    v2 = predict(var2, ev, floor=floors[1])
    scale = np.sqrt(v2.value / v1.value)
    shift = m2.value - scale * m1.value
    return TimeEffectFns(
        x=grid.xs, scale=scale, shift=shift, route="moments",
        flags={"floored_variance": v1.floored | v2.floored,
               "boundary_clamp": ev.clamped},
        meta=_base_meta("time-effects", floors=[float(floors[0]), float(floors[1])]),
    )


def scale_location_from_quantiles(qfit1: QuantileFit, qfit2: QuantileFit,
                                  spec: BasisSpec, grid: EvalGrid,
                                  taus: Tuple[float, float, float] = DEFAULT_TE_TAUS) -> TimeEffectFns:
    """Recover scale and shift from quantile spreads on the diagonal.

    scale(x) is the ratio of the (tau1 - tau2) interquantile spreads of the
    two periods and shift(x) = Q2(tau3) - scale(x) * Q1(tau3).  Grid points
    where the period-1 spread is not strictly positive are excluded: scale
    is NaN there and flagged.
    """
    tau1, tau2, tau3 = (float(t) for t in taus)
    if tau1 <= tau2:
        raise ConfigError(f"need tau1 > tau2 for a positive spread, got ({tau1}, {tau2})")
    _check_provenance(spec, qfit1, qfit2)
    ev = _stayer_eval(spec, grid.xs)
    lev = np.asarray([tau1, tau2, tau3])
    q1, _, _ = _quantile_surfaces(qfit1, ev, lev)
    q2, _, _ = _quantile_surfaces(qfit2, ev, lev)
    spread1 = q1[:, 0] - q1[:, 1]
    spread2 = q2[:, 0] - q2[:, 1]
    bad = spread1 <= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(bad, np.nan, spread2 / spread1)
    shift = q2[:, 2] - scale * q1[:, 2]
    return TimeEffectFns(
        x=grid.xs, scale=scale, shift=shift, route="quantiles",
        flags={"nonpositive_spread": bad, "boundary_clamp": ev.clamped},
        meta=_base_meta("time-effects", taus=[tau1, tau2, tau3]),
    )


def mean_effect_time_adjusted(fit1: LinearFit, fit2: LinearFit, te: TimeEffectFns,
                              spec: BasisSpec, grid: EvalGrid) -> EffectCurve:
    """Time-averaged mean effect when periods differ by scale and shift:

        [d1 M1 - d1 M2 / scale] / 2 + [d2 M2 - scale * d2 M1] / 2

    evaluated at (x, x).  Points with missing scale are NaN and flagged.
    The diagnostic is the gap between the two deflated routes.
    """
    _check_provenance(spec, fit1, fit2)
    if te.x.shape != grid.xs.shape or not np.allclose(te.x, grid.xs):
        raise ConfigError("time-effect functions were computed on a different grid")
    ev = _stayer_eval(spec, grid.xs)
    p1 = predict(fit1, ev)
    p2 = predict(fit2, ev)
    missing = te.missing()
    with np.errstate(invalid="ignore", divide="ignore"):
        route1 = p1.d_x1 - p2.d_x1 / te.scale
        route2 = p2.d_x2 - te.scale * p1.d_x2
    est = 0.5 * (route1 + route2)
    est = np.where(missing, np.nan, est)
    flags = {"boundary_clamp": ev.clamped, "scale_missing": missing}
    for k, v in te.flags.items():
        if k != "boundary_clamp":
            flags.setdefault(k, v)
    return EffectCurve(
        kind="mean-time-adjusted", estimate=est, x=grid.xs,
        diagnostic=np.where(missing, np.nan, route2 - route1),
        flags=flags, meta=_base_meta("time-effects", scale_route=te.route),
    )


def quantile_effect_time_adjusted(qfit1: QuantileFit, qfit2: QuantileFit,
                                  te: TimeEffectFns, spec: BasisSpec,
                                  grid: EvalGrid) -> EffectCurve:
    """Time-averaged quantile effect under scale/shift time effects:

        [d1 Q1 - d1 Q2 / scale] / 2 + [d2 Q2 - scale * d2 Q1] / 2

    per (x, tau), with scale(x) from either recovery route.
    """
    _check_provenance(spec, qfit1, qfit2)
    if te.x.shape != grid.xs.shape or not np.allclose(te.x, grid.xs):
        raise ConfigError("time-effect functions were computed on a different grid")
    ev = _stayer_eval(spec, grid.xs)
    q1, d1_1, d2_1 = _quantile_surfaces(qfit1, ev, grid.taus)
    q2, d1_2, d2_2 = _quantile_surfaces(qfit2, ev, grid.taus)
    scale = te.scale[:, None]
    missing = np.repeat(te.missing(), grid.taus.size)
    with np.errstate(invalid="ignore", divide="ignore"):
        route1 = d1_1 - d1_2 / scale
        route2 = d2_2 - scale * d2_1
    est = (0.5 * (route1 + route2)).ravel()
    est = np.where(missing, np.nan, est)
    crossing = _crossing_flags([q1, q2])
    xcol, taucol = _xmajor(grid.xs, grid.taus)
    flags = {
        "boundary_clamp": np.repeat(ev.clamped, grid.taus.size),
        "scale_missing": missing,
        "quantile_crossing": crossing.ravel(),
    }
    for k, v in te.flags.items():
        if k not in ("boundary_clamp",):
            flags.setdefault(k, np.repeat(v, grid.taus.size))
    return EffectCurve(
        kind="quantile-time-adjusted", estimate=est, x=xcol, tau=taucol,
        diagnostic=np.where(missing, np.nan, (route2 - route1).ravel()),
        flags=flags,
        meta=_base_meta("time-effects", scale_route=te.route,
                        n_x=int(grid.xs.size), n_tau=int(grid.taus.size)),
    )


# ---------------------------------------------------------------------------
# averaging, transformed outcomes, cross-section comparator


def averaged_quantile_effect(curve: EffectCurve, x_sample: np.ndarray) -> EffectCurve:
    """Average an (x, tau)-indexed curve over an empirical x measure.

    Each sample point is assigned to its nearest grid x; points outside the
    grid range are dropped (count recorded in the metadata).  The result is
    indexed by tau alone.
    """
    if curve.tau is None or curve.x is None:
        raise ConfigError("averaging requires an (x, tau)-indexed curve")
    n_x = curve.meta.get("n_x")
    n_tau = curve.meta.get("n_tau")
    if not n_x or not n_tau:
        raise ConfigError("curve metadata lacks the grid shape (n_x, n_tau)")
    xs = curve.x.reshape(n_x, n_tau)[:, 0]
    taus = curve.tau.reshape(n_x, n_tau)[0]
    sample = np.asarray(x_sample, dtype=float)
    inside = (sample >= xs.min()) & (sample <= xs.max())
    dropped = int(sample.size - inside.sum())
    sample = sample[inside]
    if sample.size == 0:
        raise DataError("no measure points fall inside the evaluation grid")
    idx = np.argmin(np.abs(sample[:, None] - xs[None, :]), axis=1)
    weights = np.bincount(idx, minlength=n_x).astype(float)
    weights /= weights.sum()

    est = curve.estimate.reshape(n_x, n_tau)
    avg = weights @ est
    diag = None
    if curve.diagnostic is not None:
        diag = weights @ curve.diagnostic.reshape(n_x, n_tau)
    flags = {}
    support = weights > 0
    for k, v in curve.flags.items():
        grid_flags = v.reshape(n_x, n_tau)
        flags[k] = np.any(grid_flags[support], axis=0)
    meta = dict(curve.meta)
    meta.update({
        "averaged_over": int(sample.size),
        "dropped_measure_points": dropped,
        "source_kind": curve.kind,
    })
    meta.pop("n_x", None)
    meta.pop("n_tau", None)
    return EffectCurve(
        kind="averaged-quantile", estimate=avg, tau=taus, diagnostic=diag,
        flags=flags, meta=meta,
    )


def transformed_outcome_effect(data: PanelDataset, spec: BasisSpec, grid: EvalGrid,
                               transform: str = "difference", lam: float = 0.0,
                               pi: float = 1.0, w=None, design: Optional[np.ndarray] = None) -> EffectCurve:
    """Quantile effect of a scalar transform of the outcome pair.

    The transformed outcome ``psi(Y1, Y2)`` (difference, period-2 level, or
    lam*Y1 + pi*Y2) is quantile-regressed on the bivariate basis in
    ``(x1, x2)`` and the estimate is d/dx2 of the fitted conditional
    quantile, reported on the full Cartesian (x1, x2) grid.  Interpreting it
    structurally requires conditional independence of the unobservables from
    the regressor path, a strictly stronger regime than time homogeneity;
    the metadata carries that requirement.
    """
    if transform == "difference":
        lam_eff, pi_eff = -1.0, 1.0
    elif transform == "period2":
        lam_eff, pi_eff = 0.0, 1.0
    elif transform == "linear-combo":
        lam_eff, pi_eff = float(lam), float(pi)
    else:
        raise ConfigError(f"unknown transform {transform!r}")
    y = lam_eff * data.y1 + pi_eff * data.y2
    if design is None:
        design = eval_basis(spec, data.x1, data.x2).values
    qfit = qr_fit(design, y, grid.taus, w, spec_id=spec_digest(spec))

    xs = grid.xs
    n_x, n_tau = xs.size, grid.taus.size
    x1g = np.repeat(xs, n_x)
    x2g = np.tile(xs, n_x)
    ev = eval_basis(spec, x1g, x2g)
    levels, _, d2 = _quantile_surfaces(qfit, ev, grid.taus)
    crossing = _crossing_flags([levels])
    return EffectCurve(
        kind="transformed-outcome",
        estimate=d2.ravel(),
        x=np.repeat(x1g, n_tau),
        x2=np.repeat(x2g, n_tau),
        tau=np.tile(grid.taus, n_x * n_x),
        flags={
            "boundary_clamp": np.repeat(ev.clamped, n_tau),
            "quantile_crossing": crossing.ravel(),
        },
        meta={
            "assumption_regime": "conditional-independence",
            "requires": "conditional-independence assumptions",
            "transform": transform,
            "lam": lam_eff,
            "pi": pi_eff,
            "n_x": n_x,
            "n_tau": n_tau,
        },
    )


def cross_section_effect(data: PanelDataset, spec: BasisSpec, grid: EvalGrid,
                         taus: Optional[Sequence[float]] = None, w=None) -> EffectCurve:
    """Per-period cross-sectional comparator (averaged over the two periods).

    Each period's outcome is regressed on functions of that period's
    regressor alone, ignoring the panel structure; the reported effect is
    the average of the two derivative curves.  Under endogeneity this is
    biased -- it exists to quantify what the panel identification buys.
    """
    vals_g, der_g = univariate_design(spec, grid.xs)
    lo, hi = spec.domain
    clamp = ((grid.xs < lo) | (grid.xs > hi)) if spec.kind == "bspline" else \
        np.zeros(grid.xs.size, dtype=bool)
    sid = spec_digest(spec)
    designs = [univariate_design(spec, data.x1)[0], univariate_design(spec, data.x2)[0]]
    ys = [data.y1, data.y2]

    if taus is None:
        ders = []
        for t in (0, 1):
            fit = wls_fit(designs[t], ys[t], w, target=f"mean-period-{t + 1}", spec_id=sid)
            ders.append(der_g @ fit.beta)
        est = 0.5 * (ders[0] + ders[1])
        return EffectCurve(
            kind="cross-section-mean", estimate=est, x=grid.xs,
            flags={"boundary_clamp": clamp},
            meta={"assumption_regime": "cross-section (no panel identification)",
                  "caveat": "ignores unit heterogeneity; biased under endogeneity"},
        )

    taus = np.asarray(list(taus), dtype=float)
    surfaces = []
    levels = []
    for t in (0, 1):
        qf = qr_fit(designs[t], ys[t], taus, w, period=t + 1, spec_id=sid)
        betas = np.stack([qf.beta_for(tv) for tv in taus], axis=1)
        surfaces.append(der_g @ betas)
        levels.append(vals_g @ betas)
    est = 0.5 * (surfaces[0] + surfaces[1])
    xcol, taucol = _xmajor(grid.xs, taus)
    return EffectCurve(
        kind="cross-section-quantile", estimate=est.ravel(), x=xcol, tau=taucol,
        flags={"boundary_clamp": np.repeat(clamp, taus.size),
               "quantile_crossing": _crossing_flags(levels).ravel()},
        meta={"assumption_regime": "cross-section (no panel identification)",
              "caveat": "ignores unit heterogeneity; biased under endogeneity",
              "n_x": int(grid.xs.size), "n_tau": int(taus.size)},
    )


# ---------------------------------------------------------------------------
# pipeline: one configured estimand, recomputable under bootstrap weights


PIPELINE_KINDS = (
    "mean", "quantile", "mean-te", "quantile-te", "avg-quantile",
    "transformed", "cross-section-mean", "cross-section-quantile",
    "scale", "shift",
)


@dataclass
class EffectPipeline:
    """A fully configured estimand: data + basis + grid + effect kind.

    ``compute(weights)`` reruns every underlying fit under the given unit
    weights and rebuilds the curve; ``point()`` is the unweighted estimate.
    The same pipeline object is what the bootstrap perturbs, so the weighted
    and unweighted paths are literally the same code.
    """

    data: PanelDataset
    spec: BasisSpec
    grid: EvalGrid
    kind: str = "mean"
    te_route: str = "moments"
    te_taus: Tuple[float, float, float] = DEFAULT_TE_TAUS
    transform: str = "difference"
    lam: float = 0.0
    pi: float = 1.0
    measure: str = "pooled"
    avg_source: str = "quantile-te"   # what avg-quantile averages
    var_floor_rel: float = 1e-8

    def __post_init__(self):
        if self.kind not in PIPELINE_KINDS:
            raise ConfigError(f"unknown pipeline kind {self.kind!r}; expected one of {PIPELINE_KINDS}")
        if self.te_route not in ("moments", "quantiles"):
            raise ConfigError(f"unknown time-effect route {self.te_route!r}")
        if self.avg_source not in ("quantile", "quantile-te"):
            raise ConfigError(f"avg_source must be 'quantile' or 'quantile-te', got {self.avg_source!r}")
        if self.kind in ("quantile", "quantile-te", "avg-quantile",
                         "cross-section-quantile", "transformed") and self.grid.taus.size == 0:
            raise ConfigError(f"kind {self.kind!r} needs quantile levels on the grid")
        self._design = eval_basis(self.spec, self.data.x1, self.data.x2).values
        self._sid = spec_digest(self.spec)
        self._floors = (
            self.var_floor_rel * float(np.var(self.data.y1)),
            self.var_floor_rel * float(np.var(self.data.y2)),
        )

    # -- fit helpers -------------------------------------------------------

    def _mean_fits(self, w):
        f1 = wls_fit(self._design, self.data.y1, w, target="mean-period-1", spec_id=self._sid)
        f2 = wls_fit(self._design, self.data.y2, w, target="mean-period-2", spec_id=self._sid)
        return f1, f2

    def _var_fits(self, w, mean1, mean2):
        v1 = variance_fit(self._design, self.data.y1, mean1, w,
                          target="variance-period-1", spec_id=self._sid)
        v2 = variance_fit(self._design, self.data.y2, mean2, w,
                          target="variance-period-2", spec_id=self._sid)
        return v1, v2

    def _q_fits(self, w, taus):
        q1 = qr_fit(self._design, self.data.y1, taus, w, period=1, spec_id=self._sid)
        q2 = qr_fit(self._design, self.data.y2, taus, w, period=2, spec_id=self._sid)
        return q1, q2

    def _tau_union(self):
        return tuple(sorted(set(float(t) for t in self.grid.taus) | set(self.te_taus)))

    def _time_effects(self, w) -> TimeEffectFns:
        if self.te_route == "moments":
            m1, m2 = self._mean_fits(w)
            v1, v2 = self._var_fits(w, m1, m2)
            return scale_location_from_moments(m1, m2, v1, v2, self.spec, self.grid,
                                               floors=self._floors)
        q1, q2 = self._q_fits(w, self.te_taus)
        return scale_location_from_quantiles(q1, q2, self.spec, self.grid, self.te_taus)

    def _measure_sample(self) -> np.ndarray:
        if self.measure == "pooled":
            return self.data.pooled_x()
        if self.measure == "period1":
            return np.asarray(self.data.x1)
        if self.measure == "period2":
            return np.asarray(self.data.x2)
        raise ConfigError(f"unknown measure {self.measure!r}")

    # -- public API ---------------------------------------------------------

    def point(self) -> EffectCurve:
        """Unweighted point estimate."""
        return self.compute(None)

    def _quantile_curve(self, weights, time_adjusted: bool) -> EffectCurve:
        if not time_adjusted:
            q1, q2 = self._q_fits(weights, tuple(float(t) for t in self.grid.taus))
            return quantile_effect(q1, q2, self.spec, self.grid)
        if self.te_route == "quantiles":
            q1, q2 = self._q_fits(weights, self._tau_union())
            te = scale_location_from_quantiles(q1, q2, self.spec, self.grid, self.te_taus)
        else:
            q1, q2 = self._q_fits(weights, tuple(float(t) for t in self.grid.taus))
            te = self._time_effects(weights)
        return quantile_effect_time_adjusted(q1, q2, te, self.spec, self.grid)

    def compute(self, weights) -> EffectCurve:
        """Recompute the configured estimand under unit weights."""
        kind = self.kind
        if kind == "mean":
            f1, f2 = self._mean_fits(weights)
            return mean_effect(f1, f2, self.spec, self.grid)
        if kind == "quantile":
            return self._quantile_curve(weights, time_adjusted=False)
        if kind == "mean-te":
            te = self._time_effects(weights)
            f1, f2 = self._mean_fits(weights)
            return mean_effect_time_adjusted(f1, f2, te, self.spec, self.grid)
        if kind == "quantile-te":
            return self._quantile_curve(weights, time_adjusted=True)
        if kind == "avg-quantile":
            base = self._quantile_curve(weights, self.avg_source == "quantile-te")
            return averaged_quantile_effect(base, self._measure_sample())
        if kind == "transformed":
            return transformed_outcome_effect(self.data, self.spec, self.grid,
                                              self.transform, self.lam, self.pi, weights,
                                              design=self._design)
        if kind == "cross-section-mean":
            return cross_section_effect(self.data, self.spec, self.grid, None, weights)
        if kind == "cross-section-quantile":
            return cross_section_effect(self.data, self.spec, self.grid,
                                        tuple(float(t) for t in self.grid.taus), weights)
        if kind in ("scale", "shift"):
            te = self._time_effects(weights)
            scale_curve, shift_curve = te.as_curves()
            return scale_curve if kind == "scale" else shift_curve
        raise ConfigError(f"unknown pipeline kind {kind!r}")

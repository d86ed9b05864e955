"""Bivariate series bases with analytic derivatives.

Two univariate families, assembled into bivariate designs in the two period
regressors (x1, x2):

* cubic B-splines with boundary knots of multiplicity 4 at the reference
  sample's min and max and a single interior knot at its median (5 basis
  functions per argument);
* polynomials of a chosen degree, optionally orthonormalized against the
  empirical reference measure via a QR factorization of the Vandermonde
  matrix.

Structures: ``additive`` (intercept + one block per argument) or ``tensor``
(all products of the per-argument functions).  Because a B-spline block sums
to one everywhere, keeping every spline column alongside an intercept would
be rank deficient; the constant is absorbed by dropping the first spline
column of each block, which leaves the span unchanged.

Every evaluation returns values together with the analytic partial
derivatives in x1 and x2; the derivative of an additive basis column in the
"other" argument is identically zero by construction.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from scipy.interpolate import BSpline

from .errors import ConfigError, DataError

SPLINE_DEGREE = 3
SPLINE_COLUMNS = SPLINE_DEGREE + 2  # one interior knot


@dataclass(frozen=True, eq=False)
class BasisSpec:
    """Frozen description of a bivariate series basis.

    Built by :func:`make_spec`; carries everything needed to evaluate the
    basis reproducibly, including the orthogonalization map fitted on the
    reference sample.
    """

    kind: str                      # "bspline" | "polynomial"
    structure: str                 # "additive" | "tensor"
    intercept: bool
    degree: int
    domain: Tuple[float, float]    # reference sample range
    knots: Optional[Tuple[float, ...]] = None     # full knot vector (bspline)
    coef_map: Optional[np.ndarray] = None         # (degree+1, degree+1), poly

    @property
    def block_size(self) -> int:
        """Columns contributed by one argument's block (constant excluded)."""
        if self.kind == "bspline":
            return SPLINE_COLUMNS - 1
        return self.degree

    @property
    def n_columns(self) -> int:
        kb = self.block_size
        if self.structure == "additive":
            return kb + kb + (1 if self.intercept else 0)
        k1 = kb + 1
        return k1 * k1 - (0 if self.intercept else 1)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "structure": self.structure,
            "intercept": self.intercept,
            "degree": self.degree,
            "domain": [float(self.domain[0]), float(self.domain[1])],
            "knots": None if self.knots is None else [float(t) for t in self.knots],
            "coef_map": None if self.coef_map is None else [[float(v) for v in row] for row in self.coef_map],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSpec":
        return cls(
            kind=d["kind"],
            structure=d["structure"],
            intercept=bool(d["intercept"]),
            degree=int(d["degree"]),
            domain=(float(d["domain"][0]), float(d["domain"][1])),
            knots=None if d.get("knots") is None else tuple(float(t) for t in d["knots"]),
            coef_map=None if d.get("coef_map") is None else np.asarray(d["coef_map"], dtype=float),
        )

    @classmethod
    def from_json(cls, text: str) -> "BasisSpec":
        return cls.from_dict(json.loads(text))


def spec_digest(spec: BasisSpec) -> str:
    """Short stable identifier of a basis specification."""
    return hashlib.sha256(spec.to_json().encode()).hexdigest()[:12]


@dataclass(frozen=True)
class BasisEval:
    """Basis values and partial derivatives at one or more points."""

    values: np.ndarray   # (m, K)
    d_x1: np.ndarray     # (m, K)
    d_x2: np.ndarray     # (m, K)
    clamped: np.ndarray  # (m,) bool, True where an argument left the knot span

    @property
    def n_columns(self) -> int:
        return int(self.values.shape[1])


def make_spec(
    kind: str,
    reference: np.ndarray,
    structure: str = "additive",
    degree: int = 2,
    intercept: bool = True,
    orthogonalize: bool = True,
) -> BasisSpec:
    """Fit a basis specification to a reference sample.

    Parameters
    ----------
    kind : {"bspline", "polynomial"}
        Univariate family.  B-splines are cubic with knots at the reference
        min / median / max; polynomials use ``degree``.
    reference : ndarray
        Sample of regressor values defining knots, the orthogonalization
        measure, and the evaluation domain.
    structure : {"additive", "tensor"}
    degree : int
        Polynomial degree (ignored for B-splines).
    intercept : bool
        Include a constant column.
    orthogonalize : bool
        For polynomials, orthonormalize against the empirical distribution of
        ``reference``; ``False`` keeps raw powers.

    Raises
    ------
    ConfigError
        Unknown kind/structure or infeasible degree.
    DataError
        Degenerate reference sample (constant, or too few distinct values).
    """
    if kind not in ("bspline", "polynomial"):
        raise ConfigError(f"unknown basis kind {kind!r}")
    if structure not in ("additive", "tensor"):
        raise ConfigError(f"unknown structure {structure!r}")
    ref = np.asarray(reference, dtype=float).ravel()
    if ref.size < 2 or not np.all(np.isfinite(ref)):
        raise DataError("reference sample must hold at least 2 finite values")
    lo, hi = float(ref.min()), float(ref.max())
    if lo == hi:
        raise DataError("reference sample is constant; no basis can be built")

    if kind == "bspline":
        med = float(np.median(ref))
        if not (lo < med < hi):
            raise DataError(
                "reference median coincides with an endpoint; "
                "interior knot would not be strictly inside the range"
            )
        knots = (lo,) * (SPLINE_DEGREE + 1) + (med,) + (hi,) * (SPLINE_DEGREE + 1)
        return BasisSpec(
            kind=kind, structure=structure, intercept=intercept,
            degree=SPLINE_DEGREE, domain=(lo, hi), knots=knots,
        )

    if degree < 1:
        raise ConfigError("polynomial degree must be at least 1")
    n_distinct = np.unique(ref).size
    if n_distinct <= degree:
        raise DataError(
            f"degree {degree} needs more than {degree} distinct reference values, got {n_distinct}"
        )
    coef_map = None
    if orthogonalize:
        vander = np.vander(ref, degree + 1, increasing=True)
        _, r = np.linalg.qr(vander, mode="reduced")
        signs = np.sign(np.diag(r))
        signs[signs == 0] = 1.0
        coef_map = np.sqrt(ref.size) * np.linalg.inv(r) * signs[np.newaxis, :]
    return BasisSpec(
        kind=kind, structure=structure, intercept=intercept,
        degree=degree, domain=(lo, hi), coef_map=coef_map,
    )


def _as_1d(x) -> Tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    return np.atleast_1d(arr), scalar


def spline_block(spec: BasisSpec, x) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full 5-column cubic B-spline block, its derivative, and clamp flags.

    The columns form a partition of unity on the knot span.  Arguments
    outside the span are clamped to the nearest endpoint and flagged.
    """
    if spec.kind != "bspline":
        raise ConfigError("spline_block requires a bspline spec")
    xv, _ = _as_1d(x)
    lo, hi = spec.domain
    clamped = (xv < lo) | (xv > hi)
    xc = np.clip(xv, lo, hi)
    t = np.asarray(spec.knots)
    spl = BSpline(t, np.eye(SPLINE_COLUMNS), SPLINE_DEGREE, extrapolate=True)
    vals = spl(xc)
    ders = spl.derivative()(xc)
    return vals, ders, clamped


def _poly_powers(spec: BasisSpec, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    d = spec.degree
    vander = np.vander(x, d + 1, increasing=True)
    dvander = np.zeros_like(vander)
    for j in range(1, d + 1):
        dvander[:, j] = j * x ** (j - 1)
    if spec.coef_map is not None:
        vander = vander @ spec.coef_map
        dvander = dvander @ spec.coef_map
    return vander, dvander


def _block(spec: BasisSpec, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-argument block with the constant absorbed (dropped first column)."""
    if spec.kind == "bspline":
        vals, ders, clamped = spline_block(spec, x)
        return vals[:, 1:], ders[:, 1:], clamped
    vals, ders = _poly_powers(spec, x)
    return vals[:, 1:], ders[:, 1:], np.zeros(x.shape[0], dtype=bool)


def eval_basis(spec: BasisSpec, x1, x2) -> BasisEval:
    """Evaluate the bivariate basis and its partial derivatives.

    ``x1`` and ``x2`` may be scalars or equal-length arrays.  Returns stacked
    ``(m, K)`` arrays; derivative columns belonging to the other argument's
    additive block are exactly zero.
    """
    x1v, s1 = _as_1d(x1)
    x2v, s2 = _as_1d(x2)
    if x1v.shape != x2v.shape:
        raise ConfigError("x1 and x2 must have the same shape")
    m = x1v.shape[0]
    b1, db1, c1 = _block(spec, x1v)
    b2, db2, c2 = _block(spec, x2v)
    kb = spec.block_size
    zeros = np.zeros((m, kb))

    if spec.structure == "additive":
        parts_v, parts_1, parts_2 = [], [], []
        if spec.intercept:
            ones = np.ones((m, 1))
            parts_v.append(ones)
            parts_1.append(np.zeros((m, 1)))
            parts_2.append(np.zeros((m, 1)))
        parts_v += [b1, b2]
        parts_1 += [db1, zeros]
        parts_2 += [zeros, db2]
        values = np.hstack(parts_v)
        d_x1 = np.hstack(parts_1)
        d_x2 = np.hstack(parts_2)
    else:
        u1 = np.hstack([np.ones((m, 1)), b1])
        u2 = np.hstack([np.ones((m, 1)), b2])
        du1 = np.hstack([np.zeros((m, 1)), db1])
        du2 = np.hstack([np.zeros((m, 1)), db2])
        values = np.einsum("mi,mj->mij", u1, u2).reshape(m, -1)
        d_x1 = np.einsum("mi,mj->mij", du1, u2).reshape(m, -1)
        d_x2 = np.einsum("mi,mj->mij", u1, du2).reshape(m, -1)
        if not spec.intercept:
            values, d_x1, d_x2 = values[:, 1:], d_x1[:, 1:], d_x2[:, 1:]

    return BasisEval(values=values, d_x1=d_x1, d_x2=d_x2, clamped=c1 | c2)


def univariate_design(spec: BasisSpec, x) -> Tuple[np.ndarray, np.ndarray]:
    """Design ``[1, block(x)]`` and its derivative, for per-period fits.

    Used by the cross-sectional comparator, which regresses each period's
    outcome on functions of that period's regressor alone.
    """
    xv, _ = _as_1d(x)
    b, db, _ = _block(spec, xv)
    m = xv.shape[0]
    values = np.hstack([np.ones((m, 1)), b])
    deriv = np.hstack([np.zeros((m, 1)), db])
    return values, deriv


def design_matrix(spec: BasisSpec, data) -> np.ndarray:
    """Stack basis rows at every unit's observed pair ``(x1_i, x2_i)``."""
    return eval_basis(spec, data.x1, data.x2).values

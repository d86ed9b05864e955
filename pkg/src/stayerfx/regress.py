"""Weighted series regression: least squares, variance targets, quantiles.

Least-squares fits use the minimum-norm solution of the square-root-weighted
system (relative rank tolerance 1e-10), so duplicated or collinear columns
degrade gracefully instead of failing.

Quantile fits minimize the weighted check loss

    L(b) = sum_i w_i * rho_tau(y_i - x_i'b),   rho_tau(u) = u * (tau - 1{u<0}).

Because rho_tau is positively homogeneous, scaling row i of (y, X) by w_i >= 0
turns the weighted problem into an unweighted one; the unweighted problem is
solved by a Mehrotra predictor-corrector interior-point method on its bounded
dual

    max y'a   s.t.  X'a = (1 - tau) X'1,   a in [0, 1]^n,

whose dual multiplier on the equality constraint is minus the coefficient
vector.  A final polishing step refits on the p smallest-residual rows and
keeps whichever candidate has the lower check loss.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigError, NumericalError

RANK_TOL = 1e-10
STEP_FACTOR = 0.99995


def weights_digest(w: Optional[np.ndarray], n: int) -> str:
    """Short digest identifying a weight vector (ones when ``w`` is None)."""
    if w is None:
        w = np.ones(n)
    return hashlib.sha256(np.ascontiguousarray(w, dtype=float).tobytes()).hexdigest()[:12]


def _check_weights(w, n: int) -> np.ndarray:
    if w is None:
        return np.ones(n)
    w = np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise ConfigError(f"weights must have shape ({n},), got {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ConfigError("weights must be finite and nonnegative")
    if w.sum() <= 0:
        raise ConfigError("weights must not be identically zero")
    return w


@dataclass(frozen=True)
class LinearFit:
    """Coefficients of one weighted least-squares fit.

    ``target`` records what was regressed (mean or squared-residual variance,
    by period) so prediction knows when to apply the variance floor;
    ``spec_id`` and ``w_digest`` tie the fit to the basis and weights that
    produced it.
    """

    beta: np.ndarray
    target: str
    spec_id: str = ""
    w_digest: str = ""

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        self.beta.flags.writeable = False

    def to_dict(self) -> dict:
        return {
            "beta": [float(b) for b in self.beta],
            "target": self.target,
            "spec_id": self.spec_id,
            "w_digest": self.w_digest,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearFit":
        return cls(
            beta=np.asarray(d["beta"], dtype=float),
            target=d["target"],
            spec_id=d.get("spec_id", ""),
            w_digest=d.get("w_digest", ""),
        )


@dataclass(frozen=True)
class QuantileFit:
    """Check-loss coefficients on a grid of quantile levels."""

    taus: Tuple[float, ...]
    betas: np.ndarray            # (len(taus), K)
    period: int = 0
    spec_id: str = ""
    w_digest: str = ""
    iterations: Tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "betas", np.asarray(self.betas, dtype=float))
        self.betas.flags.writeable = False

    def beta_for(self, tau: float) -> np.ndarray:
        """Coefficients at level ``tau`` (must be one of the fitted levels)."""
        idx = np.where(np.isclose(self.taus, tau, rtol=0, atol=1e-12))[0]
        if idx.size == 0:
            raise ConfigError(f"tau={tau} was not fitted; available: {self.taus}")
        return self.betas[idx[0]]

    def to_dict(self) -> dict:
        return {
            "taus": [float(t) for t in self.taus],
            "betas": [[float(b) for b in row] for row in self.betas],
            "period": self.period,
            "spec_id": self.spec_id,
            "w_digest": self.w_digest,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuantileFit":
        return cls(
            taus=tuple(float(t) for t in d["taus"]),
            betas=np.asarray(d["betas"], dtype=float),
            period=int(d.get("period", 0)),
            spec_id=d.get("spec_id", ""),
            w_digest=d.get("w_digest", ""),
        )


@dataclass(frozen=True)
class Prediction:
    """Predicted level and partial derivatives on an evaluation set."""

    value: np.ndarray
    d_x1: np.ndarray
    d_x2: np.ndarray
    floored: np.ndarray  # bool, True where the variance floor was binding


def wls_fit(design, y, w=None, *, target: str = "mean", spec_id: str = "") -> LinearFit:
    """Minimum-norm weighted least squares.

    Rows are scaled by sqrt(w) and the scaled system is solved with a
    rank-revealing least-squares (relative tolerance 1e-10), i.e. the
    Moore-Penrose solution of the weighted normal equations.
    """
    X = np.asarray(design, dtype=float)
    yv = np.asarray(y, dtype=float)
    n = X.shape[0]
    if yv.shape != (n,):
        raise ConfigError(f"y must have shape ({n},), got {yv.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(yv))):
        raise ConfigError("design and response must be finite")
    wv = _check_weights(w, n)
    sw = np.sqrt(wv)
    beta, *_ = np.linalg.lstsq(X * sw[:, None], yv * sw, rcond=RANK_TOL)
    return LinearFit(beta=beta, target=target, spec_id=spec_id,
                     w_digest=weights_digest(w, n))


def variance_fit(design, y, mean_fit: LinearFit, w=None, *, target: str = "variance",
                 spec_id: str = "") -> LinearFit:
    """Regress squared residuals from ``mean_fit`` on the same design.

    The mean fit must come from the same design and weight vector; mismatched
    provenance digests are rejected.
    """
    X = np.asarray(design, dtype=float)
    n = X.shape[0]
    wd = weights_digest(w, n)
    if mean_fit.w_digest and mean_fit.w_digest != wd:
        raise ConfigError("variance_fit: weights differ from the mean fit's weights")
    if spec_id and mean_fit.spec_id and mean_fit.spec_id != spec_id:
        raise ConfigError("variance_fit: basis spec differs from the mean fit's spec")
    resid = np.asarray(y, dtype=float) - X @ mean_fit.beta
    return wls_fit(X, resid ** 2, w, target=target, spec_id=spec_id or mean_fit.spec_id)


def predict(fit: LinearFit, basis_eval, floor: float = 0.0) -> Prediction:
    """Evaluate a linear fit and its derivatives on a :class:`BasisEval`.

    For variance targets the predicted level is floored at ``floor`` and the
    binding points are flagged; derivatives are left untouched (the floor is
    a reporting guard, not part of the fitted function).
    """
    value = basis_eval.values @ fit.beta
    d1 = basis_eval.d_x1 @ fit.beta
    d2 = basis_eval.d_x2 @ fit.beta
    floored = np.zeros(value.shape, dtype=bool)
    if fit.target.startswith("variance"):
        floored = value < floor
        value = np.maximum(value, floor)
    return Prediction(value=value, d_x1=d1, d_x2=d2, floored=floored)


def check_loss(design, y, beta, tau: float, w=None) -> float:
    """Weighted check loss of ``beta``: sum_i w_i rho_tau(y_i - x_i'beta)."""
    X = np.asarray(design, dtype=float)
    u = np.asarray(y, dtype=float) - X @ beta
    wv = _check_weights(w, X.shape[0])
    return float(np.sum(wv * u * (tau - (u < 0))))


def _step_length(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, STEP_FACTOR * np.min(-v[neg] / dv[neg]))


def _qr_interior_point(X: np.ndarray, y: np.ndarray, tau: float,
                       tol: float = 1e-10, max_iter: int = 100):
    """Mehrotra predictor-corrector on the bounded dual of the check-loss LP.

    Returns ``(beta, info)`` where ``info`` carries iteration diagnostics.
    The primal variable ``a`` starts at (1-tau)*1, which satisfies the
    equality constraints exactly; the coefficient vector is recovered as
    minus the equality multiplier at the solution.
    """
    n, p = X.shape
    c = -y
    b = (1.0 - tau) * X.sum(axis=0)

    a = np.full(n, 1.0 - tau)
    s = 1.0 - a
    v = np.linalg.lstsq(X, -y, rcond=None)[0]
    r = c - X @ v
    shift = max(1e-3, 1e-3 * np.abs(r).max()) if r.size else 1e-3
    z = np.maximum(r, 0.0) + shift
    w = z - r  # keeps z - w = c - X v, i.e. exact dual feasibility

    gap = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        mu = (a @ z + s @ w) / (2 * n)
        primal_obj = c @ a
        dual_obj = b @ v - w.sum()
        gap = primal_obj - dual_obj
        if abs(gap) / (1.0 + abs(primal_obj)) < tol:
            break

        rp = b - X.T @ a
        rho = c - X @ v          # = rd + z - w by construction
        dinv = z / a + w / s
        d = 1.0 / dinv

        # predictor (affine) direction
        M = (X.T * d) @ X
        try:
            chol = cho_factor(M)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded by rank check
            raise NumericalError(f"quantile solver: singular normal equations ({exc})")
        dv_a = cho_solve(chol, rp + X.T @ (d * rho))
        da_a = d * (X @ dv_a - rho)
        dz_a = -z - (z / a) * da_a
        dw_a = -w + (w / s) * da_a  # ds = -da

        ap = min(_step_length(a, da_a), _step_length(s, -da_a))
        ad = min(_step_length(z, dz_a), _step_length(w, dw_a))
        mu_aff = ((a + ap * da_a) @ (z + ad * dz_a) + (s - ap * da_a) @ (w + ad * dw_a)) / (2 * n)
        gamma = (mu_aff / mu) ** 3 if mu > 0 else 0.0

        # corrector direction, reusing the factorization
        rhs_d = rho - gamma * mu * (1.0 / a - 1.0 / s) + (da_a * dz_a) / a + (da_a * dw_a) / s
        dv = cho_solve(chol, rp + X.T @ (d * rhs_d))
        da = d * (X @ dv - rhs_d)
        dz = gamma * mu / a - z - (da_a * dz_a) / a - (z / a) * da
        dw = gamma * mu / s - w + (da_a * dw_a) / s + (w / s) * da

        ap = min(_step_length(a, da), _step_length(s, -da))
        ad = min(_step_length(z, dz), _step_length(w, dw))
        a = a + ap * da
        s = s - ap * da
        v = v + ad * dv
        z = z + ad * dz
        w = w + ad * dw

    info = {"iterations": it, "gap": float(gap), "tau": tau,
            "converged": bool(abs(gap) / (1.0 + abs(c @ a)) < tol)}
    return -v, info


def _polish(X: np.ndarray, y: np.ndarray, beta: np.ndarray, tau: float) -> np.ndarray:
    """Refit through the p smallest-|residual| rows; keep the better loss.

    An optimal basic solution interpolates p observations, so when the
    interior-point iterate is close this recovers the exact vertex.
    """
    n, p = X.shape
    if n < p:
        return beta
    resid = np.abs(y - X @ beta)
    idx = np.argsort(resid, kind="stable")[:p]
    cand, *_ = np.linalg.lstsq(X[idx], y[idx], rcond=None)
    loss_cand = check_loss(X, y, cand, tau)
    loss_beta = check_loss(X, y, beta, tau)
    return cand if loss_cand < loss_beta else beta


def qr_fit(design, y, taus: Sequence[float], w=None, *, period: int = 0,
           spec_id: str = "", tol: float = 1e-10, max_iter: int = 100) -> QuantileFit:
    """Quantile regression on a grid of levels by interior point.

    Parameters
    ----------
    design, y : array_like
        Series design (n, K) and response (n,).
    taus : sequence of float
        Quantile levels, each strictly inside (0, 1).
    w : array_like, optional
        Nonnegative weights; zero-weight rows are dropped before solving.
    period : int
        Bookkeeping tag carried on the returned fit.

    Raises
    ------
    ConfigError
        Bad levels or weights.
    NumericalError
        Rank-deficient design, or non-convergence (reported with the
        iteration diagnostics of the failing level).

    Notes
    -----
    No monotonicity repair is applied across levels; quantile crossing is
    surfaced downstream as a diagnostic flag.
    """
    X = np.asarray(design, dtype=float)
    yv = np.asarray(y, dtype=float)
    n, p = X.shape
    if yv.shape != (n,):
        raise ConfigError(f"y must have shape ({n},), got {yv.shape}")
    taus = tuple(float(t) for t in taus)
    if len(taus) == 0:
        raise ConfigError("at least one quantile level is required")
    for t in taus:
        if not 0.0 < t < 1.0:
            raise ConfigError(f"quantile level must lie strictly in (0, 1), got {t}")
    wv = _check_weights(w, n)

    keep = wv > 0
    Xw = X[keep] * wv[keep, None]
    yw = yv[keep] * wv[keep]
    if np.linalg.matrix_rank(Xw, tol=None) < p:
        raise NumericalError(
            f"quantile solver: design is rank deficient ({Xw.shape[0]} rows, {p} columns)"
        )

    betas = np.empty((len(taus), p))
    iters = []
    for i, tau in enumerate(taus):
        beta, info = _qr_interior_point(Xw, yw, tau, tol=tol, max_iter=max_iter)
        beta = _polish(Xw, yw, beta, tau)
        if not info["converged"]:
            loss = check_loss(Xw, yw, beta, tau)
            raise NumericalError(
                f"quantile solver did not converge at tau={tau}: "
                f"iterations={info['iterations']}, relative gap={info['gap']:.3e}, "
                f"last check loss={loss:.6e}"
            )
        betas[i] = beta
        iters.append(info["iterations"])

    return QuantileFit(
        taus=taus, betas=betas, period=period, spec_id=spec_id,
        w_digest=weights_digest(w, n), iterations=tuple(iters),
    )

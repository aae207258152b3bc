"""Per-arm Cox model: partial likelihood, Breslow baseline, residuals.

Everything downstream consumes three artifacts per arm: the fitted
coefficients with their Breslow cumulative baseline hazard, per-subject
score residuals, and per-subject martingale increments on the event
grid. Ties use the Breslow convention (tied events share a risk set).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .data_model import TrialDataset
from .errors import NonConvergence, SingularInformation, ValidationError

__all__ = [
    "StepFunction",
    "RiskStats",
    "CoxFit",
    "ResidualIngredients",
    "fit_cox",
    "conditional_survival",
    "residual_ingredients",
]

_GRADIENT_TOL = 1e-8
_MAX_ITER = 50
_MAX_ABS_BETA = 50.0
_MAX_HALVINGS = 30


@dataclass(frozen=True)
class StepFunction:
    """Piecewise-constant function on a sorted knot grid.

    ``values[j]`` is the value on ``[knots[j], knots[j+1])`` in the
    stored (right-continuous) representation; ``value_before_first``
    applies below ``knots[0]``. With ``left_continuous=True`` pointwise
    evaluation returns the limit from the left instead, so the stored
    value applies on ``(knots[j], knots[j+1]]``; survival curves built
    from sample proportions use this to encode the >= convention
    S(t) = P(T >= t). Integration is unaffected by the flag (the two
    conventions differ on a measure-zero set).

    Parameters
    ----------
    knots : ndarray
        Strictly increasing times.
    values : ndarray
        Function values, one per knot.
    value_before_first : float
        Value for arguments below the first knot.
    left_continuous : bool
        Pointwise evaluation convention, see above.
    """

    knots: NDArray[np.float64]
    values: NDArray[np.float64]
    value_before_first: float
    left_continuous: bool = False
    _lefts: NDArray[np.float64] = field(init=False, repr=False, compare=False)
    _vals: NDArray[np.float64] = field(init=False, repr=False, compare=False)
    _prefix: NDArray[np.float64] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        knots = np.asarray(self.knots, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "values", values)
        if knots.ndim != 1 or knots.size == 0:
            msg = "knots must be a nonempty 1-d array"
            raise ValidationError(msg)
        if values.shape != knots.shape:
            msg = "values must match knots in shape"
            raise ValidationError(msg)
        if knots.size > 1 and not np.all(np.diff(knots) > 0):
            msg = "knots must be strictly increasing"
            raise ValidationError(msg)
        if not (np.all(np.isfinite(values)) and np.isfinite(self.value_before_first)):
            msg = "step-function values must be finite"
            raise ValidationError(msg)
        # Integration setup on [0, inf): segment left ends and prefix integrals.
        pos = knots > 0.0
        lefts = np.concatenate(([0.0], knots[pos]))
        value_at_zero = self._eval_side(np.array([0.0]), side="right")[0]
        vals = np.concatenate(([value_at_zero], values[pos]))
        widths = np.diff(lefts)
        prefix = np.concatenate(([0.0], np.cumsum(vals[:-1] * widths)))
        object.__setattr__(self, "_lefts", lefts)
        object.__setattr__(self, "_vals", vals)
        object.__setattr__(self, "_prefix", prefix)

    def _eval_side(self, t: NDArray[np.float64], side: str) -> NDArray[np.float64]:
        idx = np.searchsorted(self.knots, t, side=side) - 1
        out = np.where(idx >= 0, self.values[np.clip(idx, 0, None)], self.value_before_first)
        return out

    def __call__(self, t):
        """Evaluate pointwise under the curve's continuity convention."""
        arr = np.asarray(t, dtype=np.float64)
        side = "left" if self.left_continuous else "right"
        out = self._eval_side(np.atleast_1d(arr), side)
        return out[0] if arr.ndim == 0 else out.reshape(arr.shape)

    def eval_right(self, t):
        """Right-continuous evaluation regardless of the stored convention."""
        arr = np.asarray(t, dtype=np.float64)
        out = self._eval_side(np.atleast_1d(arr), "right")
        return out[0] if arr.ndim == 0 else out.reshape(arr.shape)

    def eval_left(self, t):
        """Limit from the left regardless of the stored convention."""
        arr = np.asarray(t, dtype=np.float64)
        out = self._eval_side(np.atleast_1d(arr), "left")
        return out[0] if arr.ndim == 0 else out.reshape(arr.shape)

    def integral(self, upper):
        """Exact integral over [0, upper] (elementwise for array upper).

        Negative uppers integrate to 0; the function is treated as its
        interval values, so the result is a continuous, piecewise-linear
        function of ``upper``.
        """
        arr = np.asarray(upper, dtype=np.float64)
        u = np.clip(np.atleast_1d(arr), 0.0, None)
        j = np.searchsorted(self._lefts, u, side="right") - 1
        out = self._prefix[j] + self._vals[j] * (u - self._lefts[j])
        return out[0] if arr.ndim == 0 else out.reshape(arr.shape)


@dataclass(frozen=True)
class RiskStats:
    """Risk-set statistics on the event grid, normalized by arm size.

    ``u0[k]`` and ``u1[k]`` are the zeroth and first risk-set moments
    n_a^{-1} sum_i 1(A_i=a) e^{beta'x_i} x_i^{(l)} Y_i(u_k) at beta_hat,
    and ``e = u1/u0`` is the risk-set covariate mean.
    """

    times: NDArray[np.float64]
    u0: NDArray[np.float64]
    u1: NDArray[np.float64]
    e: NDArray[np.float64]


@dataclass(frozen=True)
class CoxFit:
    """Fitted per-arm Cox model with Breslow baseline."""

    arm: int
    beta_hat: NDArray[np.float64]
    cum_hazard: StepFunction
    info_matrix: NDArray[np.float64]
    event_grid: NDArray[np.float64]
    risk_stats: RiskStats
    converged: bool
    iterations: int
    n_arm: int


@dataclass(frozen=True)
class ResidualIngredients:
    """Per-subject score residuals and martingale increments for one arm.

    Rows follow ``subject_indices`` (the arm's rows of the dataset, in
    record order); ``dm[i, k]`` is the martingale increment of subject i
    at ``event_grid[k]``, i.e. dN_i(u_k) - e^{beta'x_i} Y_i(u_k) dLambda(u_k).
    """

    arm: int
    subject_indices: NDArray[np.int64]
    score_residuals: NDArray[np.float64]
    dm: NDArray[np.float64]
    event_grid: NDArray[np.float64]


def _arm_arrays(dataset: TrialDataset, arm: int):
    idx = dataset.arm_indices(arm)
    return idx, dataset.times[idx], dataset.events[idx], dataset.covariates[idx]


def _risk_moments(
    ts: NDArray[np.float64],
    xs: NDArray[np.float64],
    beta: NDArray[np.float64],
    grid: NDArray[np.float64],
):
    """Suffix risk-set sums S0, S1, S2 at each grid time, for sorted ts."""
    w = np.exp(xs @ beta)
    wx = w[:, None] * xs
    suffix_w = np.cumsum(w[::-1])[::-1]
    suffix_wx = np.cumsum(wx[::-1], axis=0)[::-1]
    outer = wx[:, :, None] * xs[:, None, :]
    suffix_wxx = np.cumsum(outer[::-1], axis=0)[::-1]
    first = np.searchsorted(ts, grid, side="left")
    return suffix_w[first], suffix_wx[first], suffix_wxx[first]


def _objective_terms(
    ts: NDArray[np.float64],
    ds: NDArray[np.int64],
    xs: NDArray[np.float64],
    beta: NDArray[np.float64],
    grid: NDArray[np.float64],
    d_count: NDArray[np.float64],
):
    """Log partial likelihood, score and observed information at beta."""
    s0, s1, s2 = _risk_moments(ts, xs, beta, grid)
    x_events = xs[ds == 1]
    lpl = float((x_events @ beta).sum()) - float(d_count @ np.log(s0))
    e = s1 / s0[:, None]
    score = x_events.sum(axis=0) - d_count @ e
    v = s2 / s0[:, None, None] - e[:, :, None] * e[:, None, :]
    info = np.einsum("k,kij->ij", d_count, v)
    return lpl, score, info


def fit_cox(dataset: TrialDataset, arm: int) -> CoxFit:
    """Maximize the Breslow-tie log partial likelihood for one arm.

    Newton-Raphson from beta = 0 with step halving; convergence when the
    score max-norm drops to 1e-8. Diverging coefficients (any component
    beyond 50 in magnitude, the monotone-likelihood signature) raise
    NonConvergence, as does hitting the iteration cap.

    Returns
    -------
    CoxFit
        With the Breslow cumulative baseline hazard on the event grid
        and risk-set statistics evaluated at beta_hat.
    """
    _, times, events, covs = _arm_arrays(dataset, arm)
    n_arm = times.size
    if not (events == 1).any():
        msg = f"arm {arm} has no observed events"
        raise ValidationError(msg)
    order = np.argsort(times, kind="stable")
    ts, ds, xs = times[order], events[order], covs[order]
    p = xs.shape[1]
    grid, d_count = np.unique(ts[ds == 1], return_counts=True)
    d_count = d_count.astype(np.float64)

    beta = np.zeros(p)
    iterations = 0
    if p == 0:
        converged = True
        info = np.zeros((0, 0))
    else:
        lpl, score, info = _objective_terms(ts, ds, xs, beta, grid, d_count)
        converged = bool(np.max(np.abs(score)) <= _GRADIENT_TOL)
        while not converged:
            if iterations >= _MAX_ITER:
                msg = f"arm {arm}: no convergence in {_MAX_ITER} iterations"
                raise NonConvergence(msg)
            try:
                step = np.linalg.solve(info, score)
            except np.linalg.LinAlgError as exc:
                msg = f"arm {arm}: singular information at iteration {iterations}"
                raise SingularInformation(msg) from exc
            scale = 1.0
            for _ in range(_MAX_HALVINGS):
                cand = beta + scale * step
                cand_lpl, cand_score, cand_info = _objective_terms(
                    ts, ds, xs, cand, grid, d_count
                )
                if cand_lpl >= lpl:
                    break
                scale *= 0.5
            else:
                msg = f"arm {arm}: step halving failed to improve the objective"
                raise NonConvergence(msg)
            assert cand_lpl >= lpl, "Newton objective must be nondecreasing"
            beta, lpl, score, info = cand, cand_lpl, cand_score, cand_info
            iterations += 1
            if np.max(np.abs(beta)) > _MAX_ABS_BETA:
                msg = (
                    f"arm {arm}: |beta| exceeded {_MAX_ABS_BETA} "
                    "(monotone likelihood)"
                )
                raise NonConvergence(msg)
            converged = bool(np.max(np.abs(score)) <= _GRADIENT_TOL)
        eigvals = np.linalg.eigvalsh((info + info.T) / 2.0)
        if np.min(eigvals) <= 0:
            msg = f"arm {arm}: information not positive definite at optimum"
            raise SingularInformation(msg)

    s0, s1, _ = _risk_moments(ts, xs, beta, grid)
    increments = d_count / s0
    cum_hazard = StepFunction(
        knots=grid, values=np.cumsum(increments), value_before_first=0.0
    )
    risk = RiskStats(
        times=grid,
        u0=s0 / n_arm,
        u1=s1 / n_arm,
        e=s1 / s0[:, None],
    )
    return CoxFit(
        arm=arm,
        beta_hat=beta,
        cum_hazard=cum_hazard,
        info_matrix=info / n_arm,
        event_grid=grid,
        risk_stats=risk,
        converged=True,
        iterations=iterations,
        n_arm=n_arm,
    )


def conditional_survival(fit: CoxFit, x: NDArray[np.float64]) -> StepFunction:
    """Fitted survival curve t -> exp(-Lambda(t) e^{beta'x})."""
    if not fit.converged:
        msg = "conditional_survival requires a converged fit"
        raise ValidationError(msg)
    relrisk = float(np.exp(np.asarray(x, dtype=np.float64) @ fit.beta_hat))
    values = np.exp(-fit.cum_hazard.values * relrisk)
    return StepFunction(knots=fit.event_grid, values=values, value_before_first=1.0)


def residual_ingredients(fit: CoxFit, dataset: TrialDataset) -> ResidualIngredients:
    """Score residuals H_i and martingale increments for the fit's arm.

    H_i sums {x_i - E(u)} dM_i(u) over the full event grid; both
    identities sum_i H_i = 0 and sum_i dM_i(u) = 0 hold exactly at the
    Breslow solution and are asserted loosely here.
    """
    if not fit.converged:
        msg = "residual_ingredients requires a converged fit"
        raise ValidationError(msg)
    idx, times, events, covs = _arm_arrays(dataset, fit.arm)
    grid = fit.event_grid
    increments = np.diff(np.concatenate(([0.0], fit.cum_hazard.values)))
    w = np.exp(covs @ fit.beta_hat)
    at_risk = times[:, None] >= grid[None, :]
    dn = (events[:, None] == 1) & (times[:, None] == grid[None, :])
    dm = dn.astype(np.float64) - w[:, None] * at_risk * increments[None, :]
    centered = covs[:, None, :] - fit.risk_stats.e[None, :, :]
    h = np.einsum("ikp,ik->ip", centered, dm)
    return ResidualIngredients(
        arm=fit.arm,
        subject_indices=idx,
        score_residuals=h,
        dm=dm,
        event_grid=grid,
    )

"""Survival-curve calculus: the five functionals and their weights.

A treatment effect is a functional of the two arm survival curves,
evaluated at truncation time tau. Each functional carries linearization
weights per arm (a density part plus point masses) that drive both the
within-imputation variance and the martingale series downstream.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .cox_core import StepFunction
from .errors import (
    DensityZero,
    QuantileUndefined,
    ValidationError,
    ZeroDenominator,
)

__all__ = [
    "EstimandKind",
    "EstimandSpec",
    "PsiWeights",
    "SurvCurvePair",
    "InfluenceValues",
    "empirical_survival",
    "estimand_value",
    "component_values",
    "combine_components",
    "psi_weights",
    "component_psi",
    "influence_values",
    "integrate_product",
]

_FD_EPS = 0.01
_DENOM_FLOOR = 1e-12


class EstimandKind(str, enum.Enum):
    """The five supported treatment-effect functionals."""

    SURV_DIFF_AT = "surv-diff"
    RMST_DIFF = "rmst-diff"
    WEIGHTED_RMST_DIFF = "wrmst-diff"
    RMTL_RATIO = "rmtl-ratio"
    QUANTILE_DIFF = "quantile-diff"


@dataclass(frozen=True)
class EstimandSpec:
    """Which functional to estimate and at what truncation.

    Parameters
    ----------
    kind : EstimandKind
    tau : float
        Truncation time for kinds a-d; the survival level in (0, 1) for
        the quantile difference.
    weight_fn : StepFunction, optional
        Nonnegative weight for the weighted RMST difference.
    bandwidth : float, optional
        Override for the symmetric-difference derivative bandwidth used
        by the quantile difference.
    """

    kind: EstimandKind
    tau: float
    weight_fn: StepFunction | None = None
    bandwidth: float | None = None

    def __post_init__(self) -> None:
        if self.kind is EstimandKind.QUANTILE_DIFF:
            if not 0.0 < self.tau < 1.0:
                msg = f"quantile-diff needs tau in (0, 1), got {self.tau}"
                raise ValidationError(msg)
        elif self.tau <= 0:
            msg = f"tau must be positive, got {self.tau}"
            raise ValidationError(msg)
        if self.kind is EstimandKind.WEIGHTED_RMST_DIFF and self.weight_fn is None:
            msg = "wrmst-diff needs a tabulated weight_fn"
            raise ValidationError(msg)
        if self.bandwidth is not None and self.bandwidth <= 0:
            msg = f"bandwidth must be positive, got {self.bandwidth}"
            raise ValidationError(msg)

    def validate_tau(self, t_tilde_max: float) -> None:
        """Enforce tau < t_tilde_max for the time-truncated kinds."""
        if self.kind is not EstimandKind.QUANTILE_DIFF and self.tau >= t_tilde_max:
            msg = (
                f"tau={self.tau} must be smaller than the minimum of the "
                f"largest observed event times (t_tilde_max={t_tilde_max})"
            )
            raise ValidationError(msg)


@dataclass(frozen=True)
class SurvCurvePair:
    """Arm survival curves from one completed dataset (or pooled).

    n1/n0 are the per-arm subject counts behind the curves; they feed
    the default quantile bandwidth and are optional otherwise.
    """

    s1: StepFunction
    s0: StepFunction
    n1: int | None = None
    n0: int | None = None

    def arm(self, arm: int) -> StepFunction:
        return self.s1 if arm == 1 else self.s0

    def arm_n(self, arm: int) -> int | None:
        return self.n1 if arm == 1 else self.n0


@dataclass(frozen=True)
class PsiWeights:
    """Per-arm linearization weights: density on [0, tau] plus atoms."""

    density1: StepFunction
    density0: StepFunction
    atoms1: tuple[tuple[float, float], ...] = ()
    atoms0: tuple[tuple[float, float], ...] = ()

    def density(self, arm: int) -> StepFunction:
        return self.density1 if arm == 1 else self.density0

    def atoms(self, arm: int) -> tuple[tuple[float, float], ...]:
        return self.atoms1 if arm == 1 else self.atoms0


@dataclass(frozen=True)
class InfluenceValues:
    """Per-subject influence values and the plug-in variance."""

    phi1: NDArray[np.float64]
    phi0: NDArray[np.float64]
    variance: float


def _const_step(value: float) -> StepFunction:
    return StepFunction(
        knots=np.array([0.0]), values=np.array([value]), value_before_first=value
    )


_ZERO_STEP = _const_step(0.0)


def _negate(f: StepFunction) -> StepFunction:
    return StepFunction(
        knots=f.knots,
        values=-f.values,
        value_before_first=-f.value_before_first,
        left_continuous=f.left_continuous,
    )


def _scale(f: StepFunction, factor: float) -> StepFunction:
    return StepFunction(
        knots=f.knots,
        values=f.values * factor,
        value_before_first=f.value_before_first * factor,
        left_continuous=f.left_continuous,
    )


def empirical_survival(times: NDArray[np.float64]) -> StepFunction:
    """Sample-proportion survival curve t -> (1/n) #{T_i >= t}.

    Left-continuous by the >= convention, so that the exact identity
    integral over [0, tau] = mean(min(T_i, tau)) holds.
    """
    arr = np.asarray(times, dtype=np.float64)
    if arr.size == 0:
        msg = "empirical_survival needs at least one time"
        raise ValidationError(msg)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        msg = "times must be finite and nonnegative"
        raise ValidationError(msg)
    knots, counts = np.unique(arr, return_counts=True)
    tail = arr.size - np.cumsum(counts)
    return StepFunction(
        knots=knots,
        values=tail / arr.size,
        value_before_first=1.0,
        left_continuous=True,
    )


def integrate_product(f: StepFunction, g: StepFunction, upper: float) -> float:
    """Exact integral of f*g over [0, upper] for two step functions."""
    if upper <= 0:
        return 0.0
    knots = np.concatenate(
        (
            [0.0, upper],
            f.knots[(f.knots > 0) & (f.knots < upper)],
            g.knots[(g.knots > 0) & (g.knots < upper)],
        )
    )
    grid = np.unique(knots)
    lefts = grid[:-1]
    widths = np.diff(grid)
    return float(np.sum(f.eval_right(lefts) * g.eval_right(lefts) * widths))


def _quantile(curve: StepFunction, level: float) -> float:
    """inf{q : S(q) <= level}; the first knot whose post-drop value qualifies."""
    hits = np.flatnonzero(curve.values <= level)
    if curve.value_before_first <= level:
        return 0.0
    if hits.size == 0:
        msg = f"survival never drops to level {level}"
        raise QuantileUndefined(msg)
    return float(curve.knots[hits[0]])


def _curve_std(curve: StepFunction) -> float:
    """Standard deviation of the distribution behind an empirical curve."""
    top = float(curve.knots[-1])
    mean = float(curve.integral(top))
    lefts = np.concatenate(([0.0], curve.knots[curve.knots > 0]))
    rights = np.concatenate((lefts[1:], [top]))
    vals = curve.eval_right(lefts)
    second = 2.0 * float(np.sum(vals * (rights**2 - lefts**2) / 2.0))
    return float(np.sqrt(max(second - mean**2, 0.0)))


def _survival_derivative(
    curve: StepFunction, q: float, n: int | None, bandwidth: float | None
) -> float:
    if bandwidth is None:
        if n is None:
            msg = "quantile bandwidth needs the arm sample size; set spec.bandwidth"
            raise ValidationError(msg)
        bandwidth = 1.06 * _curve_std(curve) * n ** (-1 / 5)
        if bandwidth <= 0:
            msg = "degenerate times give a zero default bandwidth; set spec.bandwidth"
            raise DensityZero(msg)
    deriv = (float(curve(q + bandwidth)) - float(curve(q - bandwidth))) / (2 * bandwidth)
    if abs(deriv) < _DENOM_FLOOR:
        msg = f"estimated survival derivative at q={q} is zero"
        raise DensityZero(msg)
    return deriv


def component_values(curves: SurvCurvePair, spec: EstimandSpec) -> tuple[float, float]:
    """Per-arm components whose combination is the estimand value.

    Survival probabilities for kind a, RMSTs for b, weighted RMSTs for
    c, restricted mean times lost for d, quantiles for e.
    """
    kind, tau = spec.kind, spec.tau
    if kind is EstimandKind.SURV_DIFF_AT:
        return float(curves.s1(tau)), float(curves.s0(tau))
    if kind is EstimandKind.RMST_DIFF:
        return float(curves.s1.integral(tau)), float(curves.s0.integral(tau))
    if kind is EstimandKind.WEIGHTED_RMST_DIFF:
        w = spec.weight_fn
        return (
            integrate_product(w, curves.s1, tau),
            integrate_product(w, curves.s0, tau),
        )
    if kind is EstimandKind.RMTL_RATIO:
        return (
            tau - float(curves.s1.integral(tau)),
            tau - float(curves.s0.integral(tau)),
        )
    return _quantile(curves.s1, tau), _quantile(curves.s0, tau)


def combine_components(v1: float, v0: float, kind: EstimandKind) -> float:
    """Difference of components, or their ratio for the RMTL kind."""
    if kind is EstimandKind.RMTL_RATIO:
        if abs(v0) < _DENOM_FLOOR:
            msg = "control-arm restricted mean time lost is zero"
            raise ZeroDenominator(msg)
        return v1 / v0
    return v1 - v0


def estimand_value(curves: SurvCurvePair, spec: EstimandSpec) -> float:
    """Evaluate the functional on a pair of survival curves."""
    v1, v0 = component_values(curves, spec)
    return combine_components(v1, v0, spec.kind)


def _linear_prediction(
    density: StepFunction | None,
    atoms: tuple[tuple[float, float], ...],
    base: StepFunction,
    perturbed: StepFunction,
    tau: float,
) -> float:
    """Predicted first-order change sum_a int psi (S' - S) for one arm."""
    out = 0.0
    if density is not None:
        out += integrate_product(density, perturbed, tau) - integrate_product(
            density, base, tau
        )
    for loc, mass in atoms:
        out += mass * (float(perturbed(loc)) - float(base(loc)))
    return out


def _fd_calibrated_sign(
    curves: SurvCurvePair,
    spec: EstimandSpec,
    arm: int,
    density_mag: StepFunction | None,
    atoms_mag: tuple[tuple[float, float], ...],
    taylor_sign: float,
) -> float:
    """Pick the weight sign that best matches a finite-difference probe.

    Scales the arm's curve by (1 - eps) and compares the actual change
    in the functional against the two signed linear predictions; the
    analytic (Taylor) sign is kept on ties or a zero probe.
    """
    base_value = estimand_value(curves, spec)
    base = curves.arm(arm)
    perturbed = _scale(base, 1.0 - _FD_EPS)
    if arm == 1:
        pair = SurvCurvePair(perturbed, curves.s0, curves.n1, curves.n0)
    else:
        pair = SurvCurvePair(curves.s1, perturbed, curves.n1, curves.n0)
    try:
        actual = estimand_value(pair, spec) - base_value
    except (ZeroDenominator, QuantileUndefined):
        return taylor_sign
    tau = spec.tau if spec.kind is not EstimandKind.QUANTILE_DIFF else float("inf")
    pred = _linear_prediction(density_mag, atoms_mag, base, perturbed, tau)
    if actual == 0.0 or pred == 0.0:
        return taylor_sign
    err_plus = abs(actual - pred)
    err_minus = abs(actual + pred)
    if err_plus == err_minus:
        return taylor_sign
    return 1.0 if err_plus < err_minus else -1.0


def psi_weights(curves: SurvCurvePair, spec: EstimandSpec) -> PsiWeights:
    """Linearization weights of the functional at the given curves.

    Kinds a-c have fixed weights. The ratio and quantile kinds derive
    magnitudes from the curves and have their signs fixed by a cheap
    finite-difference calibration (the analytic signs serve as the
    default when the probe is uninformative).
    """
    kind, tau = spec.kind, spec.tau
    if kind is EstimandKind.SURV_DIFF_AT:
        return PsiWeights(
            density1=_ZERO_STEP,
            density0=_ZERO_STEP,
            atoms1=((tau, 1.0),),
            atoms0=((tau, -1.0),),
        )
    if kind is EstimandKind.RMST_DIFF:
        return PsiWeights(density1=_const_step(1.0), density0=_const_step(-1.0))
    if kind is EstimandKind.WEIGHTED_RMST_DIFF:
        return PsiWeights(density1=spec.weight_fn, density0=_negate(spec.weight_fn))
    if kind is EstimandKind.RMTL_RATIO:
        v1, v0 = component_values(curves, spec)
        ratio = combine_components(v1, v0, kind)
        mag1, mag0 = 1.0 / v0, abs(ratio) / v0
        sign1 = _fd_calibrated_sign(curves, spec, 1, _const_step(mag1), (), -1.0)
        sign0 = _fd_calibrated_sign(
            curves, spec, 0, _const_step(mag0), (), np.sign(ratio) or 1.0
        )
        return PsiWeights(
            density1=_const_step(sign1 * mag1), density0=_const_step(sign0 * mag0)
        )
    q1, q0 = component_values(curves, spec)
    d1 = _survival_derivative(curves.s1, q1, curves.n1, spec.bandwidth)
    d0 = _survival_derivative(curves.s0, q0, curves.n0, spec.bandwidth)
    mag1, mag0 = 1.0 / abs(d1), 1.0 / abs(d0)
    sign1 = _fd_calibrated_sign(curves, spec, 1, None, ((q1, mag1),), 1.0)
    sign0 = _fd_calibrated_sign(curves, spec, 0, None, ((q0, mag0),), -1.0)
    return PsiWeights(
        density1=_ZERO_STEP,
        density0=_ZERO_STEP,
        atoms1=((q1, sign1 * mag1),),
        atoms0=((q0, sign0 * mag0),),
    )


def component_psi(curves: SurvCurvePair, spec: EstimandSpec, arm: int) -> PsiWeights:
    """Weights for one arm's component functional (other arm zero).

    Used for the per-arm summary rows of a report: the component is the
    arm's survival probability, (weighted) RMST, RMTL, or quantile.
    """
    kind, tau = spec.kind, spec.tau
    density: StepFunction = _ZERO_STEP
    atoms: tuple[tuple[float, float], ...] = ()
    if kind is EstimandKind.SURV_DIFF_AT:
        atoms = ((tau, 1.0),)
    elif kind is EstimandKind.RMST_DIFF:
        density = _const_step(1.0)
    elif kind is EstimandKind.WEIGHTED_RMST_DIFF:
        density = spec.weight_fn
    elif kind is EstimandKind.RMTL_RATIO:
        density = _const_step(-1.0)
    else:
        q = _quantile(curves.arm(arm), tau)
        deriv = _survival_derivative(curves.arm(arm), q, curves.arm_n(arm), spec.bandwidth)
        atoms = ((q, 1.0 / abs(deriv)),)
    if arm == 1:
        return PsiWeights(density1=density, density0=_ZERO_STEP, atoms1=atoms)
    return PsiWeights(density1=_ZERO_STEP, density0=density, atoms0=atoms)


def influence_values(
    completed_times: tuple[NDArray[np.float64], NDArray[np.float64]],
    spec: EstimandSpec,
    curves: SurvCurvePair,
) -> InfluenceValues:
    """Per-subject influence values phi_i and the plug-in variance.

    phi_i integrates psi_a against the subject's survival indicator
    minus the arm curve; the variance is sum_a n_a^{-2} sum_i phi_i^2.
    """
    times1, times0 = (np.asarray(t, dtype=np.float64) for t in completed_times)
    psi = psi_weights(curves, spec)
    tau = spec.tau if spec.kind is not EstimandKind.QUANTILE_DIFF else None
    out = {}
    for arm, times in ((1, times1), (0, times0)):
        density = psi.density(arm)
        curve = curves.arm(arm)
        upper = tau if tau is not None else float(max(curve.knots[-1], times.max()))
        phi = density.integral(np.minimum(times, upper)) - integrate_product(
            density, curve, upper
        )
        for loc, mass in psi.atoms(arm):
            phi = phi + mass * ((times >= loc).astype(np.float64) - float(curve(loc)))
        out[arm] = phi
    variance = sum(
        float(np.sum(out[a] ** 2)) / n**2
        for a, n in ((1, times1.size), (0, times0.size))
    )
    return InfluenceValues(phi1=out[1], phi0=out[0], variance=variance)

"""Multiple imputation of censored event times by inverse transform.

Administratively censored subjects are imputed from their own arm's
fitted survival (censoring at random). Dropouts are imputed under the
sensitivity model: their own arm's hazard scaled by delta, or, for
treated dropouts under the control-based model, the control arm's
fitted hazard. Draws solve S(t|x)^delta >= u over the grid of realized
times, working in log-survival space throughout.
"""

from __future__ import annotations

import csv
import enum
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from . import rng
from .cox_core import CoxFit, StepFunction
from .data_model import TrialDataset, tmax_info
from .errors import DegenerateSurvival, ValidationError

__all__ = [
    "Model",
    "SensitivityConfig",
    "ImputedDataset",
    "impute",
    "inverse_transform_draw",
    "dump_imputations",
]

_LOG_FLOOR = -745.0  # below this, exp underflows to exactly 0


class Model(str, enum.Enum):
    """Sensitivity model for dropout imputation."""

    DELTA_ADJUSTED = "delta"
    CONTROL_BASED = "control"


@dataclass(frozen=True)
class SensitivityConfig:
    """Imputation settings: model, hazard multipliers, count, seed.

    delta_treated scales the post-dropout hazard of treated dropouts
    (applied to the control arm's hazard under the control-based
    model); delta_control scales control dropouts, default 1.
    """

    model: Model
    delta_treated: float
    m: int
    seed: int
    delta_control: float = 1.0

    def __post_init__(self) -> None:
        if self.delta_treated <= 0 or self.delta_control <= 0:
            msg = "deltas must be positive"
            raise ValidationError(msg)
        if self.m < 2:
            msg = f"m must be at least 2, got {self.m}"
            raise ValidationError(msg)
        if self.seed < 0:
            msg = f"seed must be nonnegative, got {self.seed}"
            raise ValidationError(msg)
        if self.model is Model.CONTROL_BASED and self.delta_treated > 1:
            warnings.warn(
                "control-based model with delta_treated > 1 goes beyond the "
                "usual jump-to-reference range (delta <= 1)",
                stacklevel=2,
            )


@dataclass(frozen=True)
class ImputedDataset:
    """m completed datasets: observed times for events, draws otherwise."""

    base: TrialDataset
    imputed_times: NDArray[np.float64]
    truncated_flags: NDArray[np.bool_]
    t_tilde_max: float

    @property
    def m(self) -> int:
        return self.imputed_times.shape[1]

    def completed_times(self, j: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Completed times of imputation j, as (treated, control)."""
        col = self.imputed_times[:, j]
        return col[self.base.arms == 1], col[self.base.arms == 0]


def _subject_models(
    dataset: TrialDataset, fit1: CoxFit, fit0: CoxFit, config: SensitivityConfig
) -> tuple[list[CoxFit], NDArray[np.float64]]:
    """Per-subject imputation source fit and effective delta."""
    fits: list[CoxFit] = []
    deltas = np.ones(dataset.n)
    for i in range(dataset.n):
        arm = int(dataset.arms[i])
        own = fit1 if arm == 1 else fit0
        if dataset.events[i] == 1 or dataset.reasons[i] == 1:
            fits.append(own)
            continue
        if arm == 0:
            fits.append(fit0)
            deltas[i] = config.delta_control
        elif config.model is Model.DELTA_ADJUSTED:
            fits.append(fit1)
            deltas[i] = config.delta_treated
        else:
            fits.append(fit0)
            deltas[i] = config.delta_treated
    return fits, deltas


def impute(
    dataset: TrialDataset, fit1: CoxFit, fit0: CoxFit, config: SensitivityConfig
) -> ImputedDataset:
    """Draw m completed datasets under the configured sensitivity model.

    Each censored subject gets an independent Philox stream keyed by its
    record index, so results are bit-identical regardless of evaluation
    order or worker count. Draws solve, in cumulative-hazard space,
    Lambda(t) <= Lambda(U) - log(u)/(delta e^{beta'x}) for the largest
    grid t, which never underflows for large delta.
    """
    info = tmax_info(dataset)
    tmax = info.t_tilde_max
    grid = np.unique(np.concatenate((dataset.times[dataset.times <= tmax], [tmax])))
    n, m = dataset.n, config.m
    times = np.tile(dataset.times[:, None], (1, m))
    flags = np.zeros((n, m), dtype=bool)
    fits, deltas = _subject_models(dataset, fit1, fit0, config)
    last = grid.size - 1
    lam_grids = {
        id(fit): fit.cum_hazard.eval_right(grid) for fit in (fit1, fit0)
    }

    for i in np.flatnonzero(dataset.events == 0):
        fit, delta = fits[i], float(deltas[i])
        relrisk = float(np.exp(dataset.covariates[i] @ fit.beta_hat))
        lam_grid = lam_grids[id(fit)]
        lam_u = float(fit.cum_hazard.eval_right(dataset.times[i]))
        units = rng.stream(config.seed, rng.DOMAIN_IMPUTE, i).random(m)
        if -relrisk * lam_u <= _LOG_FLOOR:
            if delta == 1.0:
                msg = (
                    f"subject {dataset.records[i].id!r}: fitted survival is 0 "
                    "at the censoring time"
                )
                raise DegenerateSurvival(msg)
            first_after = int(np.searchsorted(grid, dataset.times[i], side="right"))
            times[i, :] = grid[min(first_after, last)]
            flags[i, :] = True
            continue
        with np.errstate(divide="ignore"):
            targets = lam_u - np.log(units) / (delta * relrisk)
        idx = np.searchsorted(lam_grid, targets, side="right") - 1
        times[i, :] = grid[idx]
        flags[i, :] = idx == last

    cens = dataset.events == 0
    assert np.all(times[cens, :] >= np.minimum(dataset.times[cens, None], tmax))
    return ImputedDataset(
        base=dataset, imputed_times=times, truncated_flags=flags, t_tilde_max=tmax
    )


def inverse_transform_draw(
    survival: StepFunction,
    u_time: float,
    delta: float,
    grid: NDArray[np.float64],
    rng_stream,
) -> float:
    """One imputation draw from a survival curve.

    Draws u ~ Unif[0, p] with p = survival(u_time)^delta (one uniform
    from ``rng_stream``) and returns the largest grid time t with
    survival(t)^delta >= u, clamped into [u_time, max(grid)]. When no
    grid point at or after u_time qualifies (p underflowed, or the curve
    collapses immediately), the first grid point after u_time is
    returned: the event is treated as effectively immediate.

    Raises
    ------
    DegenerateSurvival
        If survival(u_time) is exactly 0 at delta = 1.
    """
    if delta <= 0:
        msg = f"delta must be positive, got {delta}"
        raise ValidationError(msg)
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        msg = "grid must be nonempty"
        raise ValidationError(msg)
    unit = float(rng_stream.random())
    p = float(survival.eval_right(u_time))
    if p == 0.0:
        if delta == 1.0:
            msg = f"survival is 0 at the censoring time {u_time}"
            raise DegenerateSurvival(msg)
        first_after = int(np.searchsorted(grid, u_time, side="right"))
        return float(grid[min(first_after, grid.size - 1)])
    with np.errstate(divide="ignore"):
        log_vals = delta * np.log(survival.eval_right(grid))
        threshold = np.log(unit) + delta * np.log(p)
    idx = int(np.searchsorted(-log_vals, -threshold, side="right")) - 1
    if idx < 0 or grid[idx] < u_time:
        first_at = int(np.searchsorted(grid, u_time, side="left"))
        idx = min(max(idx, first_at), grid.size - 1)
    return float(grid[idx])


def dump_imputations(imputed: ImputedDataset, path: str) -> None:
    """Write censored subjects' draws as CSV rows (id, j, t_star, truncated)."""
    base = imputed.base
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "j", "t_star", "truncated"])
        for i in np.flatnonzero(base.events == 0):
            for j in range(imputed.m):
                writer.writerow(
                    [
                        base.records[i].id,
                        j + 1,
                        repr(float(imputed.imputed_times[i, j])),
                        int(imputed.truncated_flags[i, j]),
                    ]
                )

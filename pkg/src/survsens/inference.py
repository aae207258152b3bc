"""MI pooling, Rubin's rule, martingale series, and bootstrap variances.

The variance path that avoids re-imputation works by decomposing the MI
estimator into an ordered series of (1+m)*n zero-conditional-mean terms:
one parameter term per subject (carrying the estimation noise of the
arm fits through kernel functions contracted with score and martingale
residuals) and m imputation terms per subject (carrying the imputation
noise). The wild bootstrap then multiplies the empirical series by
independent mean-0 variance-1 weights and takes the sample variance of
the resulting sums; no refitting or re-imputation is involved.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, replace

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from . import rng
from .cox_core import (
    CoxFit,
    ResidualIngredients,
    StepFunction,
    fit_cox,
    residual_ingredients,
)
from .data_model import TrialDataset, tmax_info
from .errors import ComputationError, ValidationError
from .estimands import (
    EstimandKind,
    EstimandSpec,
    PsiWeights,
    SurvCurvePair,
    component_psi,
    component_values,
    empirical_survival,
    estimand_value,
    influence_values,
    integrate_product,
    psi_weights,
)
from .imputation import ImputedDataset, Model, SensitivityConfig, impute

__all__ = [
    "WeightDist",
    "MiEstimate",
    "MartingaleSeries",
    "ArmSummary",
    "AnalysisReport",
    "mi_estimate",
    "rubin_variance",
    "build_martingale_series",
    "wild_bootstrap",
    "analyze",
    "naive_bootstrap",
]

logger = logging.getLogger(__name__)

_MAMMEN_LOW = (1.0 - np.sqrt(5.0)) / 2.0
_MAMMEN_HIGH = (1.0 + np.sqrt(5.0)) / 2.0
_MAMMEN_P_LOW = (np.sqrt(5.0) + 1.0) / (2.0 * np.sqrt(5.0))


class WeightDist(str, enum.Enum):
    """Wild-bootstrap multiplier distribution (mean 0, variance 1)."""

    NORMAL = "normal"
    MAMMEN = "mammen"
    RADEMACHER = "rademacher"


@dataclass(frozen=True)
class MiEstimate:
    """Pooled MI estimate with per-imputation detail."""

    point: float
    per_imputation: NDArray[np.float64]
    within_vars: NDArray[np.float64]
    s1_mi: StepFunction
    s0_mi: StepFunction


@dataclass(frozen=True)
class MartingaleSeries:
    """Ordered empirical series feeding the wild bootstrap.

    Layout: n1 treated parameter terms, m*n1 treated imputation terms
    (subject-major), n0 control parameter terms, m*n0 control
    imputation terms. Length (1+m)*(n1+n0).
    """

    xi: NDArray[np.float64]
    n1: int
    n0: int
    m: int

    @property
    def n(self) -> int:
        return self.n1 + self.n0

    def __post_init__(self) -> None:
        expected = (1 + self.m) * (self.n1 + self.n0)
        if self.xi.size != expected:
            msg = f"series length {self.xi.size}, expected {expected}"
            raise ValidationError(msg)


@dataclass(frozen=True)
class ArmSummary:
    """One arm's component of the functional with both SEs."""

    estimate: float
    se_rubin: float
    se_wb: float


@dataclass(frozen=True)
class AnalysisReport:
    """Full analysis output for one sensitivity scenario."""

    spec: EstimandSpec
    config: SensitivityConfig
    treated: ArmSummary
    control: ArmSummary
    point: float
    se_rubin: float
    se_wb: float
    ci_rubin: tuple[float, float]
    ci_wb: tuple[float, float]
    p_rubin: float
    p_wb: float
    B: int
    alpha: float
    weight_dist: WeightDist

    def to_dict(self) -> dict:
        """JSON-ready representation (schema_version 1)."""
        spec_d = {
            "kind": self.spec.kind.value,
            "tau": self.spec.tau,
            "bandwidth": self.spec.bandwidth,
        }
        if self.spec.weight_fn is not None:
            spec_d["weight_fn"] = {
                "knots": self.spec.weight_fn.knots.tolist(),
                "values": self.spec.weight_fn.values.tolist(),
            }
        return {
            "schema_version": 1,
            "estimand": spec_d,
            "config": {
                "model": self.config.model.value,
                "delta_treated": self.config.delta_treated,
                "delta_control": self.config.delta_control,
                "m": self.config.m,
                "seed": self.config.seed,
            },
            "B": self.B,
            "alpha": self.alpha,
            "weights": self.weight_dist.value,
            "point": self.point,
            "se_rubin": self.se_rubin,
            "se_wb": self.se_wb,
            "ci_rubin": list(self.ci_rubin),
            "ci_wb": list(self.ci_wb),
            "p_rubin": self.p_rubin,
            "p_wb": self.p_wb,
            "per_arm": {
                "treated": vars(self.treated).copy(),
                "control": vars(self.control).copy(),
            },
        }


def _per_imputation_curves(imputed: ImputedDataset) -> list[SurvCurvePair]:
    base = imputed.base
    out = []
    for j in range(imputed.m):
        t1, t0 = imputed.completed_times(j)
        out.append(
            SurvCurvePair(
                s1=empirical_survival(t1),
                s0=empirical_survival(t0),
                n1=base.n1,
                n0=base.n0,
            )
        )
    return out


def mi_estimate(imputed: ImputedDataset, spec: EstimandSpec) -> MiEstimate:
    """Apply the plug-in estimator to each completed dataset and pool.

    The point estimate is the exact mean of the per-imputation values;
    the pooled curves stack all m imputations (and equal the pointwise
    average of the per-imputation curves).
    """
    base = imputed.base
    curves = _per_imputation_curves(imputed)
    per = np.empty(imputed.m)
    within = np.empty(imputed.m)
    for j, pair in enumerate(curves):
        t1, t0 = imputed.completed_times(j)
        per[j] = estimand_value(pair, spec)
        within[j] = influence_values((t1, t0), spec, pair).variance
    s1_mi = empirical_survival(imputed.imputed_times[base.arms == 1].ravel())
    s0_mi = empirical_survival(imputed.imputed_times[base.arms == 0].ravel())
    return MiEstimate(
        point=float(np.mean(per)),
        per_imputation=per,
        within_vars=within,
        s1_mi=s1_mi,
        s0_mi=s0_mi,
    )


def _rubin(per: NDArray[np.float64], within: NDArray[np.float64]) -> float:
    m = per.size
    between = float(np.sum((per - per.mean()) ** 2))
    return (m + 1) / ((m - 1) * m) * between + float(np.mean(within))


def rubin_variance(est: MiEstimate) -> float:
    """Rubin's combining rule: inflated between plus mean within."""
    if est.per_imputation.size < 2:
        msg = "Rubin's rule needs m >= 2"
        raise ValidationError(msg)
    return _rubin(est.per_imputation, est.within_vars)


# ---------------------------------------------------------------------------
# Martingale series construction.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _FitGrid:
    """One fit's quantities restricted to event times <= cap."""

    times: NDArray[np.float64]  # (K,)
    dlam: NDArray[np.float64]  # (K,)
    e: NDArray[np.float64]  # (K, p)
    u0: NDArray[np.float64]  # (K,)
    cum_e_dlam: NDArray[np.float64]  # (K, p) cumulative sum of e * dlam
    cum_hazard: StepFunction

    def lam_at(self, t) -> NDArray[np.float64]:
        return self.cum_hazard.eval_right(t)

    def cum_e_at(self, t) -> NDArray[np.float64]:
        """Cumulative integral of E dLambda at arbitrary times (rows)."""
        arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
        idx = np.searchsorted(self.times, arr, side="right")
        padded = np.vstack((np.zeros((1, self.e.shape[1])), self.cum_e_dlam))
        return padded[idx]


def _fit_grid(fit: CoxFit, cap: float) -> _FitGrid:
    keep = fit.event_grid <= cap
    times = fit.event_grid[keep]
    full_dlam = np.diff(np.concatenate(([0.0], fit.cum_hazard.values)))
    dlam = full_dlam[keep]
    e = fit.risk_stats.e[keep]
    u0 = fit.risk_stats.u0[keep]
    cum = np.cumsum(e * dlam[:, None], axis=0) if times.size else np.zeros((0, e.shape[1]))
    return _FitGrid(
        times=times,
        dlam=dlam,
        e=e,
        u0=u0,
        cum_e_dlam=cum,
        cum_hazard=fit.cum_hazard,
    )


@dataclass(frozen=True)
class _Pool:
    """A kernel pool: censored subjects whose imputed survival depends
    on one fit, with everything needed for the G and g kernel sums."""

    fitgrid: _FitGrid
    norm: int  # kernel averages divide by this arm size
    w: NDArray[np.float64]  # (c,) delta_eff * exp(beta'x)
    u: NDArray[np.float64]  # (c,) censoring times
    x: NDArray[np.float64]  # (c, p)
    lam_u: NDArray[np.float64]  # (c,)
    cum_e_u: NDArray[np.float64]  # (c, p)
    sm: NDArray[np.float64]  # (c, R) masked conditional-survival interval values


class _SeriesWorkspace:
    """Everything psi-independent for series assembly, built once.

    ``build_martingale_series`` constructs one per call; ``analyze``
    reuses a single workspace for the difference series and the two
    per-arm component series.
    """

    def __init__(
        self,
        dataset: TrialDataset,
        imputed: ImputedDataset,
        fit1: CoxFit,
        fit0: CoxFit,
        residuals1: ResidualIngredients,
        residuals0: ResidualIngredients,
        config: SensitivityConfig,
        spec: EstimandSpec,
        s1_mi: StepFunction,
        s0_mi: StepFunction,
    ) -> None:
        self.dataset = dataset
        self.imputed = imputed
        self.config = config
        self.m = config.m
        self.n1, self.n0 = dataset.n1, dataset.n0
        self.n = dataset.n
        if spec.kind is EstimandKind.QUANTILE_DIFF:
            self.cap = imputed.t_tilde_max
        else:
            self.cap = spec.tau
        extra = []
        if spec.weight_fn is not None:
            extra = list(spec.weight_fn.knots)
        times = dataset.times
        pts = np.concatenate(
            (
                [0.0, self.cap],
                times[(times > 0) & (times < self.cap)],
                [t for t in extra if 0 < t < self.cap],
            )
        )
        self.grid = np.unique(pts)
        self.lefts = self.grid[:-1]
        self.widths = np.diff(self.grid)

        self.fits = {1: fit1, 0: fit0}
        self.res = {1: residuals1, 0: residuals0}
        self.fitgrids = {1: _fit_grid(fit1, self.cap), 0: _fit_grid(fit0, self.cap)}
        self.mi_curves = {1: s1_mi, 0: s0_mi}

        # Per-censored-subject imputation-model quantities, global order.
        from .imputation import _subject_models

        fits_by_subject, deltas = _subject_models(dataset, fit1, fit0, config)
        self.cens_idx = np.flatnonzero(dataset.events == 0)
        c = self.cens_idx.size
        self.cens_arm = dataset.arms[self.cens_idx]
        self.cens_u = times[self.cens_idx]
        self.cens_x = dataset.covariates[self.cens_idx]
        self.cens_src = np.array(
            [1 if fits_by_subject[i] is fit1 else 0 for i in self.cens_idx],
            dtype=np.int64,
        )
        relrisk = np.array(
            [
                np.exp(dataset.covariates[i] @ fits_by_subject[i].beta_hat)
                for i in self.cens_idx
            ]
        )
        self.cens_w = deltas[self.cens_idx] * relrisk
        self.cens_lam_u = np.array(
            [
                fits_by_subject[i].cum_hazard.eval_right(times[i])
                for i in self.cens_idx
            ]
        )
        # Masked conditional-survival interval values (c x R).
        lam_lefts = {a: self.fitgrids[a].lam_at(self.lefts) for a in (1, 0)}
        lam_l = np.where(
            self.cens_src[:, None] == 1, lam_lefts[1][None, :], lam_lefts[0][None, :]
        )
        expo = -self.cens_w[:, None] * (lam_l - self.cens_lam_u[:, None])
        mask = self.lefts[None, :] >= self.cens_u[:, None]
        self.cens_sm = np.exp(np.where(mask, expo, -np.inf)) if c else np.zeros((0, self.lefts.size))

        # Kernel pools.
        reasons = dataset.reasons[self.cens_idx]
        in_arm1 = self.cens_arm == 1
        in_arm0 = ~in_arm1
        if config.model is Model.DELTA_ADJUSTED:
            p11 = np.flatnonzero(in_arm1)
            p10 = np.array([], dtype=np.int64)
        else:
            p11 = np.flatnonzero(in_arm1 & (reasons == 1))
            p10 = np.flatnonzero(in_arm1 & (reasons == 2))
        p00 = np.flatnonzero(in_arm0)
        self.pools = {
            "own1": self._pool(p11, 1, self.n1),
            "own0": self._pool(p00, 0, self.n0),
            "cross": self._pool(p10, 0, self.n1),
        }

        # Per-arm subject data in arm order (matching residual rows).
        self.arm_rows = {}
        for a in (1, 0):
            idx = dataset.arm_indices(a)
            events = dataset.events[idx] == 1
            u = times[idx]
            cens_pos = np.searchsorted(self.cens_idx, idx[~events])
            dm = self.res[a].dm[:, self.res[a].event_grid <= self.cap]
            self.arm_rows[a] = {
                "idx": idx,
                "u": u,
                "events": events,
                "cens_pos": cens_pos,
                "h": self.res[a].score_residuals,
                "dm": dm,
                "gamma": self.fits[a].info_matrix,
                "tstar": imputed.imputed_times[idx],
            }

    def _pool(self, pos: NDArray[np.int64], src_arm: int, norm: int) -> _Pool:
        fg = self.fitgrids[src_arm]
        return _Pool(
            fitgrid=fg,
            norm=norm,
            w=self.cens_w[pos],
            u=self.cens_u[pos],
            x=self.cens_x[pos],
            lam_u=self.cens_lam_u[pos],
            cum_e_u=fg.cum_e_at(self.cens_u[pos]),
            sm=self.cens_sm[pos],
        )

    # -- psi-dependent assembly ------------------------------------------------

    def _pool_kernels(
        self,
        pool: _Pool,
        pw: NDArray[np.float64],
        atoms: tuple[tuple[float, float], ...],
    ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Kernel reductions for one pool against one arm's psi part.

        Returns the information-channel vector A (psi-integrated G2-G1)
        and the martingale-channel vector kappa on the pool fit's event
        grid (the psi-integrated two-argument g kernel over U0).
        """
        fg = pool.fitgrid
        p = pool.x.shape[1]
        k = fg.times.size
        if pool.w.size == 0:
            return np.zeros(p), np.zeros(k)
        lam_l = fg.lam_at(self.lefts)
        cum_e_l = fg.cum_e_at(self.lefts)
        ws = pool.sm * pool.w[:, None]  # (c, R)
        t0 = ws.sum(axis=0)  # (R,)
        t1 = ws.T @ pool.cum_e_u  # (R, p)
        t2 = ws.T @ pool.x  # (R, p)
        t3 = ws.T @ (pool.x * pool.lam_u[:, None])  # (R, p)
        g21 = (
            cum_e_l * t0[:, None] - t1 - lam_l[:, None] * t2 + t3
        ) / pool.norm
        a_vec = pw @ g21

        # Suffix integrals Q_c(u) = int_u^cap psi * S_cond + atom part.
        suffix = np.concatenate(
            (np.cumsum((pool.sm * pw[None, :])[:, ::-1], axis=1)[:, ::-1],
             np.zeros((pool.w.size, 1))),
            axis=1,
        )
        r0 = np.searchsorted(self.lefts, fg.times, side="left")
        q = suffix[:, r0]  # (c, K)
        for loc, mass in atoms:
            lam_loc = float(fg.lam_at(loc))
            cum_e_loc = fg.cum_e_at(loc)[0]
            mask = pool.u < loc
            expo = -pool.w * (lam_loc - pool.lam_u)
            s_loc = np.exp(np.where(mask, expo, -np.inf))
            q = q + (mass * s_loc)[:, None] * (loc >= fg.times)[None, :]
            g21_loc = (
                np.sum(
                    (pool.w * s_loc)[:, None]
                    * (
                        cum_e_loc[None, :]
                        - pool.cum_e_u
                        - (lam_loc - pool.lam_u)[:, None] * pool.x
                    ),
                    axis=0,
                )
                / pool.norm
            )
            a_vec = a_vec + mass * g21_loc
        gate = pool.u[:, None] < fg.times[None, :]  # (c, K)
        g_star = np.sum((pool.w[:, None] * gate) * q, axis=0) / pool.norm
        kappa = np.where(fg.u0 > 0, g_star / fg.u0, 0.0)
        return a_vec, kappa

    def _cens_survival_at(self, pos: NDArray[np.int64], loc: float) -> NDArray[np.float64]:
        """Conditional survival at a single time for censored subjects."""
        lam_loc = {
            a: float(self.fitgrids[a].lam_at(loc)) for a in (1, 0)
        }
        lam = np.where(self.cens_src[pos] == 1, lam_loc[1], lam_loc[0])
        expo = -self.cens_w[pos] * np.maximum(lam - self.cens_lam_u[pos], 0.0)
        return np.exp(expo)

    def series(self, psi: PsiWeights) -> MartingaleSeries:
        """Assemble the ordered empirical series for the given weights."""
        blocks = []
        kernel_map = {
            1: (("own1", 1),),
            0: (("own0", 0), ("cross", 1)),
        }
        for a in (1, 0):
            rows = self.arm_rows[a]
            n_a = self.n1 if a == 1 else self.n0
            dens = psi.density(a)
            atoms = psi.atoms(a)
            psi_int = dens.eval_right(self.lefts)
            pw = psi_int * self.widths
            s_mi = self.mi_curves[a]
            s_mi_term = float(np.sum(pw * s_mi.eval_right(self.lefts)))

            u = rows["u"]
            events = rows["events"]
            core = dens.integral(np.minimum(u, self.cap)) - s_mi_term
            icond = self.cens_sm[rows["cens_pos"]] @ pw if rows["cens_pos"].size else np.zeros(0)
            cens_mask = ~events
            core[cens_mask] = core[cens_mask] + icond
            for loc, mass in atoms:
                bracket = (u >= loc).astype(np.float64) - float(s_mi(loc))
                s_at = self._cens_survival_at(rows["cens_pos"], loc)
                add = np.zeros(u.size)
                add[cens_mask] = (u[cens_mask] < loc) * s_at
                core = core + mass * (bracket + add)

            # Kernel (phi-hat) contribution through this arm's residuals.
            fg = self.fitgrids[a]
            a_total = np.zeros(self.dataset.n_covariates)
            kappa_total = np.zeros(fg.times.size)
            for pool_name, psi_arm in kernel_map[a]:
                pool = self.pools[pool_name]
                p_dens = psi.density(psi_arm)
                p_atoms = psi.atoms(psi_arm)
                p_pw = p_dens.eval_right(self.lefts) * self.widths
                a_vec, kappa = self._pool_kernels(pool, p_pw, p_atoms)
                a_total = a_total + a_vec
                kappa_total = kappa_total + kappa
            if self.dataset.n_covariates:
                ginv_a = np.linalg.solve(rows["gamma"], a_total)
                phi = rows["h"] @ ginv_a - rows["dm"] @ kappa_total
            else:
                phi = -rows["dm"] @ kappa_total
            param = np.sqrt(self.n) / n_a * (core + phi)

            # Imputation terms: zero for events and for U_i >= cap.
            imput = np.zeros((u.size, self.m))
            active = cens_mask & (u < self.cap)
            if active.any():
                tstar = rows["tstar"][active]
                base_cum = dens.integral(np.minimum(u[active], self.cap))
                cum = dens.integral(np.minimum(tstar, self.cap))
                icond_active = icond[np.flatnonzero(cens_mask[active])] if False else None
                # icond is indexed over this arm's censored subjects in order.
                icond_full = np.zeros(u.size)
                icond_full[cens_mask] = icond
                vals = cum - base_cum[:, None] - icond_full[active][:, None]
                for loc, mass in atoms:
                    s_at = self._cens_survival_at(rows["cens_pos"], loc)
                    s_at_full = np.zeros(u.size)
                    s_at_full[cens_mask] = s_at
                    gate = (u[active] < loc)[:, None]
                    vals = vals + mass * gate * (
                        (tstar >= loc).astype(np.float64) - s_at_full[active][:, None]
                    )
                imput[active] = vals
            imput *= np.sqrt(self.n) / (self.m * n_a)

            blocks.append(param)
            blocks.append(imput.ravel())
        xi = np.concatenate(blocks)
        return MartingaleSeries(xi=xi, n1=self.n1, n0=self.n0, m=self.m)


def build_martingale_series(
    dataset: TrialDataset,
    imputed: ImputedDataset,
    fit1: CoxFit,
    fit0: CoxFit,
    residuals1: ResidualIngredients,
    residuals0: ResidualIngredients,
    psi: PsiWeights,
    spec: EstimandSpec,
    config: SensitivityConfig,
) -> MartingaleSeries:
    """Empirical martingale series for the given linearization weights.

    psi should be computed from the pooled MI curves. Under the
    delta-adjusted model the treated curve depends only on the treated
    fit; under the control-based model the control fit also enters the
    treated curve through treated dropouts, and the corresponding
    cross-kernel rides on control-arm residuals with the treated-arm
    weights.
    """
    est = mi_estimate(imputed, spec)
    ws = _SeriesWorkspace(
        dataset,
        imputed,
        fit1,
        fit0,
        residuals1,
        residuals0,
        config,
        spec,
        est.s1_mi,
        est.s0_mi,
    )
    return ws.series(psi)


def _draw_weights(
    gen: np.random.Generator, dist: WeightDist, size: int
) -> NDArray[np.float64]:
    if dist is WeightDist.NORMAL:
        return gen.standard_normal(size)
    if dist is WeightDist.MAMMEN:
        return np.where(gen.random(size) < _MAMMEN_P_LOW, _MAMMEN_LOW, _MAMMEN_HIGH)
    return gen.integers(0, 2, size=size) * 2.0 - 1.0


def wild_bootstrap(
    series: MartingaleSeries,
    B: int,
    weight_dist: WeightDist = WeightDist.NORMAL,
    seed: int = 0,
) -> tuple[float, NDArray[np.float64]]:
    """Multiplier-bootstrap variance of the estimator from the series.

    Each replicate is n^{-1/2} sum_k xi_k u_k with independent weights;
    the returned variance is the ddof-1 sample variance of the B
    replicates, a direct estimate of Var(point estimate). Replicate b
    uses its own counter-based stream, so results do not depend on
    evaluation order.
    """
    if B < 2:
        msg = f"B must be at least 2, got {B}"
        raise ValidationError(msg)
    xi = series.xi
    root_n = np.sqrt(series.n)
    reps = np.empty(B)
    for b in range(B):
        gen = rng.stream(seed, rng.DOMAIN_BOOTSTRAP, b)
        reps[b] = float(xi @ _draw_weights(gen, weight_dist, xi.size)) / root_n
    return float(np.var(reps, ddof=1)), reps


def _phi_one_arm(times, curve, density, atoms, cap):
    phi = density.integral(np.minimum(times, cap)) - integrate_product(
        density, curve, cap
    )
    for loc, mass in atoms:
        phi = phi + mass * ((times >= loc).astype(np.float64) - float(curve(loc)))
    return phi


def _component_mi(imputed: ImputedDataset, spec: EstimandSpec):
    """Per-arm component estimates and within-variances across imputations."""
    base = imputed.base
    per = {1: np.empty(imputed.m), 0: np.empty(imputed.m)}
    within = {1: np.empty(imputed.m), 0: np.empty(imputed.m)}
    for j in range(imputed.m):
        t1, t0 = imputed.completed_times(j)
        pair = SurvCurvePair(
            s1=empirical_survival(t1),
            s0=empirical_survival(t0),
            n1=base.n1,
            n0=base.n0,
        )
        v1, v0 = component_values(pair, spec)
        per[1][j], per[0][j] = v1, v0
        for arm, times in ((1, t1), (0, t0)):
            psi_c = component_psi(pair, spec, arm)
            curve = pair.arm(arm)
            if spec.kind is EstimandKind.QUANTILE_DIFF:
                cap = float(max(curve.knots[-1], times.max()))
            else:
                cap = spec.tau
            phi = _phi_one_arm(
                times, curve, psi_c.density(arm), psi_c.atoms(arm), cap
            )
            within[arm][j] = float(np.sum(phi**2)) / times.size**2
    return per, within


def _two_sided_p(point: float, null: float, se: float) -> float:
    if se == 0.0:
        return 1.0 if point == null else 0.0
    return float(2.0 * stats.norm.sf(abs(point - null) / se))


def analyze(
    dataset: TrialDataset,
    spec: EstimandSpec,
    config: SensitivityConfig,
    B: int = 200,
    alpha: float = 0.05,
    weight_dist: WeightDist = WeightDist.NORMAL,
) -> AnalysisReport:
    """Full pipeline: fit, impute, pool, and both variance estimates.

    Runs the per-arm Cox fits, draws m completed datasets, pools the
    plug-in estimates, and computes Rubin's variance alongside the
    martingale wild bootstrap (for the treatment effect and for each
    arm's component, which reuse one workspace). Deterministic given
    config.seed.
    """
    if not 0 < alpha < 1:
        msg = f"alpha must be in (0, 1), got {alpha}"
        raise ValidationError(msg)
    info = tmax_info(dataset)
    spec.validate_tau(info.t_tilde_max)
    fit1 = fit_cox(dataset, 1)
    fit0 = fit_cox(dataset, 0)
    res1 = residual_ingredients(fit1, dataset)
    res0 = residual_ingredients(fit0, dataset)
    imputed = impute(dataset, fit1, fit0, config)
    est = mi_estimate(imputed, spec)
    v_rubin = rubin_variance(est)
    curves_mi = SurvCurvePair(
        s1=est.s1_mi, s0=est.s0_mi, n1=dataset.n1, n0=dataset.n0
    )
    psi = psi_weights(curves_mi, spec)
    ws = _SeriesWorkspace(
        dataset, imputed, fit1, fit0, res1, res0, config, spec, est.s1_mi, est.s0_mi
    )
    v_wb, _ = wild_bootstrap(ws.series(psi), B, weight_dist, config.seed)

    comp_per, comp_within = _component_mi(imputed, spec)
    summaries = {}
    for arm in (1, 0):
        psi_c = component_psi(curves_mi, spec, arm)
        comp_v_wb, _ = wild_bootstrap(
            ws.series(psi_c), B, weight_dist, config.seed
        )
        summaries[arm] = ArmSummary(
            estimate=float(np.mean(comp_per[arm])),
            se_rubin=float(np.sqrt(_rubin(comp_per[arm], comp_within[arm]))),
            se_wb=float(np.sqrt(max(comp_v_wb, 0.0))),
        )

    point = est.point
    se_rubin = float(np.sqrt(v_rubin))
    se_wb = float(np.sqrt(max(v_wb, 0.0)))
    z = float(stats.norm.ppf(1 - alpha / 2))
    null = 1.0 if spec.kind is EstimandKind.RMTL_RATIO else 0.0
    return AnalysisReport(
        spec=spec,
        config=config,
        treated=summaries[1],
        control=summaries[0],
        point=point,
        se_rubin=se_rubin,
        se_wb=se_wb,
        ci_rubin=(point - z * se_rubin, point + z * se_rubin),
        ci_wb=(point - z * se_wb, point + z * se_wb),
        p_rubin=_two_sided_p(point, null, se_rubin),
        p_wb=_two_sided_p(point, null, se_wb),
        B=B,
        alpha=alpha,
        weight_dist=weight_dist,
    )


def naive_bootstrap(
    dataset: TrialDataset,
    spec: EstimandSpec,
    config: SensitivityConfig,
    B: int,
    seed: int = 0,
) -> tuple[float, float]:
    """Nonparametric bootstrap baseline: refit and re-impute per replicate.

    Resamples subjects with replacement within each arm, reruns the full
    fit/impute/estimate pipeline, and returns the sample variance of the
    replicate points together with the elapsed wall time. Replicates
    whose fits fail are excluded (and counted in a log warning).
    """
    if B < 2:
        msg = f"B must be at least 2, got {B}"
        raise ValidationError(msg)
    start = time.perf_counter()
    idx1 = dataset.arm_indices(1)
    idx0 = dataset.arm_indices(0)
    points = []
    failures = 0
    for b in range(B):
        gen = rng.stream(seed, rng.DOMAIN_NAIVE, b)
        take = np.concatenate(
            (
                idx1[gen.integers(0, idx1.size, idx1.size)],
                idx0[gen.integers(0, idx0.size, idx0.size)],
            )
        )
        records = [dataset.records[int(k)] for k in take]
        rep_config = replace(
            config, seed=rng.derived_seed(seed, rng.DOMAIN_NAIVE, b, 1)
        )
        try:
            ds = TrialDataset(records=records, covariate_names=dataset.covariate_names)
            f1 = fit_cox(ds, 1)
            f0 = fit_cox(ds, 0)
            est = mi_estimate(impute(ds, f1, f0, rep_config), spec)
        except (ComputationError, ValidationError):
            failures += 1
            continue
        points.append(est.point)
    if failures:
        logger.warning("naive bootstrap: %d of %d replicates failed", failures, B)
    if len(points) < 2:
        msg = "naive bootstrap: fewer than 2 successful replicates"
        raise ComputationError(msg)
    wall = time.perf_counter() - start
    return float(np.var(np.asarray(points), ddof=1)), wall

"""Observed-data records, dataset container, and CSV ingestion.

Each subject contributes covariates, a binary arm, an observed time
(the minimum of event, dropout, and administrative-censoring times),
an event indicator, and, for censored subjects, a censoring reason:
administrative (planned study end) or premature dropout.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import BadValue, EmptyArm, MissingColumn, NoEventsInArm, ValidationError

__all__ = [
    "Reason",
    "SurvivalRecord",
    "TrialDataset",
    "TmaxInfo",
    "load_csv",
    "save_csv",
    "derive_reason",
    "tmax_info",
]

_REQUIRED_COLUMNS = ("id", "arm", "time", "event", "reason")


class Reason(enum.IntEnum):
    """Censoring reason; NOT_APPLICABLE if and only if the event was observed."""

    NOT_APPLICABLE = 0
    ADMINISTRATIVE = 1
    DROPOUT = 2


@dataclass(frozen=True)
class SurvivalRecord:
    """One subject's observed data.

    Parameters
    ----------
    id : str
        Opaque subject identifier.
    arm : int
        Treatment arm, 1 = treated, 0 = control.
    time : float
        Observed time (event or censoring), nonnegative and finite.
    event : int
        1 if the event was observed, 0 if censored.
    reason : Reason
        Censoring reason; NOT_APPLICABLE exactly when event = 1.
    covariates : tuple of float
        Fully observed covariate vector, same length for all records.
    """

    id: str
    arm: int
    time: float
    event: int
    reason: Reason
    covariates: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.arm not in (0, 1):
            msg = f"arm must be 0 or 1, got {self.arm!r}"
            raise ValidationError(msg)
        if not (math.isfinite(self.time) and self.time >= 0):
            msg = f"time must be finite and nonnegative, got {self.time!r}"
            raise ValidationError(msg)
        if self.event not in (0, 1):
            msg = f"event must be 0 or 1, got {self.event!r}"
            raise ValidationError(msg)
        if (self.reason is Reason.NOT_APPLICABLE) != (self.event == 1):
            msg = "reason must be NOT_APPLICABLE exactly for event records"
            raise ValidationError(msg)


@dataclass
class TrialDataset:
    """Validated two-arm dataset with cached columnar views.

    The record list is treated as immutable after construction; the
    columnar arrays are derived once and shared read-only.
    """

    records: list[SurvivalRecord]
    covariate_names: list[str]
    n1: int = field(init=False)
    n0: int = field(init=False)

    def __post_init__(self) -> None:
        arms = [r.arm for r in self.records]
        self.n1 = sum(arms)
        self.n0 = len(arms) - self.n1
        if self.n1 < 2 or self.n0 < 2:
            msg = f"each arm needs at least 2 subjects, got n1={self.n1}, n0={self.n0}"
            raise EmptyArm(msg)
        p = len(self.covariate_names)
        for r in self.records:
            if len(r.covariates) != p:
                msg = f"record {r.id!r} has {len(r.covariates)} covariates, expected {p}"
                raise ValidationError(msg)
        for a in (0, 1):
            if not any(r.event == 1 for r in self.records if r.arm == a):
                msg = f"arm {a} has no observed events"
                raise NoEventsInArm(msg)
        self.times = np.array([r.time for r in self.records], dtype=np.float64)
        self.events = np.array([r.event for r in self.records], dtype=np.int64)
        self.arms = np.array(arms, dtype=np.int64)
        self.reasons = np.array([int(r.reason) for r in self.records], dtype=np.int64)
        self.covariates = np.array(
            [r.covariates for r in self.records], dtype=np.float64
        ).reshape(len(self.records), p)

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def n_covariates(self) -> int:
        return len(self.covariate_names)

    def arm_indices(self, arm: int) -> NDArray[np.int64]:
        """Row indices of the given arm, in record order."""
        return np.flatnonzero(self.arms == arm)


@dataclass(frozen=True)
class TmaxInfo:
    """Largest observed event time per arm and their minimum."""

    t1_max: float
    t0_max: float
    t_tilde_max: float


def load_csv(path: str, covariate_names: list[str]) -> TrialDataset:
    """Read and validate a trial CSV.

    Expected header: ``id,arm,time,event,reason,<covariates...>``.
    ``reason`` must be 1 (administrative) or 2 (dropout) on censored
    rows and is ignored on event rows. Extra columns are ignored.

    Parameters
    ----------
    path : str
        CSV file path, UTF-8, comma-delimited, ``.`` decimal separator.
    covariate_names : list of str
        Covariate columns to load, in order.

    Returns
    -------
    TrialDataset

    Raises
    ------
    MissingColumn, BadValue, EmptyArm, NoEventsInArm
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (*_REQUIRED_COLUMNS, *covariate_names):
            if col not in header:
                msg = f"column {col!r} not found in header {header}"
                raise MissingColumn(msg)
        records = []
        for row_no, row in enumerate(reader, start=1):
            records.append(_parse_row(row_no, row, covariate_names))
    return TrialDataset(records=records, covariate_names=list(covariate_names))


def _parse_row(
    row_no: int, row: dict[str, str], covariate_names: list[str]
) -> SurvivalRecord:
    arm = _parse_int(row_no, "arm", row.get("arm"), allowed=(0, 1))
    event = _parse_int(row_no, "event", row.get("event"), allowed=(0, 1))
    time = _parse_float(row_no, "time", row.get("time"))
    if time < 0:
        raise BadValue(row_no, "time", f"negative time {time}")
    if event == 1:
        reason = Reason.NOT_APPLICABLE
    else:
        raw = (row.get("reason") or "").strip()
        if raw not in ("1", "2"):
            raise BadValue(row_no, "reason", f"censored row needs reason 1 or 2, got {raw!r}")
        reason = Reason(int(raw))
    covs = tuple(_parse_float(row_no, c, row.get(c)) for c in covariate_names)
    rec_id = (row.get("id") or "").strip()
    if not rec_id:
        raise BadValue(row_no, "id", "empty id")
    return SurvivalRecord(
        id=rec_id, arm=arm, time=time, event=event, reason=reason, covariates=covs
    )


def _parse_int(row_no: int, column: str, raw: str | None, allowed: tuple[int, ...]) -> int:
    try:
        value = int((raw or "").strip())
    except ValueError:
        raise BadValue(row_no, column, f"not an integer: {raw!r}") from None
    if value not in allowed:
        raise BadValue(row_no, column, f"must be one of {allowed}, got {value}")
    return value


def _parse_float(row_no: int, column: str, raw: str | None) -> float:
    try:
        value = float((raw or "").strip())
    except ValueError:
        raise BadValue(row_no, column, f"not a number: {raw!r}") from None
    if not math.isfinite(value):
        raise BadValue(row_no, column, f"not finite: {raw!r}")
    return value


def save_csv(dataset: TrialDataset, path: str) -> None:
    """Write a dataset back to the canonical CSV layout.

    Inverse of :func:`load_csv` up to float formatting; a load/save/load
    cycle reproduces the dataset exactly (floats written with repr).
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*_REQUIRED_COLUMNS, *dataset.covariate_names])
        for r in dataset.records:
            reason = "" if r.event == 1 else str(int(r.reason))
            writer.writerow(
                [r.id, r.arm, repr(r.time), r.event, reason, *map(repr, r.covariates)]
            )


def derive_reason(dataset: TrialDataset, admin_after: float) -> TrialDataset:
    """Reclassify censoring reasons by a time boundary.

    Censored records with time >= ``admin_after`` become administrative,
    the rest dropout; event records are untouched. Idempotent.
    """
    if not (math.isfinite(admin_after) and admin_after > 0):
        msg = f"admin_after must be a positive finite time, got {admin_after!r}"
        raise ValidationError(msg)
    records = []
    for r in dataset.records:
        if r.event == 1:
            records.append(r)
            continue
        reason = Reason.ADMINISTRATIVE if r.time >= admin_after else Reason.DROPOUT
        records.append(
            SurvivalRecord(
                id=r.id,
                arm=r.arm,
                time=r.time,
                event=r.event,
                reason=reason,
                covariates=r.covariates,
            )
        )
    return TrialDataset(records=records, covariate_names=list(dataset.covariate_names))


def tmax_info(dataset: TrialDataset) -> TmaxInfo:
    """Largest observed event time per arm; their minimum bounds imputation."""
    maxima = {}
    for a in (0, 1):
        mask = (dataset.arms == a) & (dataset.events == 1)
        if not mask.any():
            msg = f"arm {a} has no observed events"
            raise NoEventsInArm(msg)
        maxima[a] = float(dataset.times[mask].max())
    return TmaxInfo(
        t1_max=maxima[1], t0_max=maxima[0], t_tilde_max=min(maxima[1], maxima[0])
    )

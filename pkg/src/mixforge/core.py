"""Dataset container, funnel priors, and max-abs scaling.

The dataset is an immutable record of dated spend (T rows x P channels) and a
nonnegative target series on a uniform daily or weekly grid. All downstream
modules share these types and never mutate them.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CadenceError,
    DimensionError,
    DomainError,
    ParameterError,
    ScaleError,
    SchemaError,
)

DAILY = "daily"
WEEKLY = "weekly"

_CADENCE_DAYS = {DAILY: 1, WEEKLY: 7}


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Dataset:
    """Dated spend matrix plus target series on a uniform calendar grid."""

    dates: tuple[dt.date, ...]
    spend: np.ndarray  # (T, P), nonnegative
    target: np.ndarray  # (T,), finite nonnegative
    channel_names: tuple[str, ...]
    cadence: str

    def __post_init__(self):
        object.__setattr__(self, "spend", _frozen(self.spend))
        object.__setattr__(self, "target", _frozen(self.target))
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        self._validate()

    def _validate(self):
        T = len(self.dates)
        if T < 2:
            raise CadenceError(f"need at least 2 rows to establish a cadence, got {T}")
        if self.cadence not in _CADENCE_DAYS:
            raise CadenceError(f"unknown cadence {self.cadence!r}")
        step = _CADENCE_DAYS[self.cadence]
        for i in range(1, T):
            gap = (self.dates[i] - self.dates[i - 1]).days
            if gap != step:
                raise CadenceError(
                    f"dates are not uniform {self.cadence}: "
                    f"{self.dates[i - 1]} -> {self.dates[i]} ({gap} days)"
                )
        if self.spend.ndim != 2 or self.spend.shape[0] != T:
            raise DimensionError(f"spend must be (T, P) with T={T}, got {self.spend.shape}")
        P = self.spend.shape[1]
        if P < 1:
            raise DimensionError("need at least one spend channel")
        if len(self.channel_names) != P:
            raise DimensionError(
                f"{len(self.channel_names)} channel names for {P} spend columns"
            )
        if self.target.shape != (T,):
            raise DimensionError(f"target must have shape ({T},), got {self.target.shape}")
        if not np.all(np.isfinite(self.spend)):
            raise DomainError("spend contains non-finite values")
        if np.any(self.spend < 0):
            t, p = np.argwhere(self.spend < 0)[0]
            raise DomainError(
                f"negative spend in channel {self.channel_names[p]!r} at {self.dates[t]}"
            )
        if not np.all(np.isfinite(self.target)):
            raise DomainError("target contains non-finite values")
        if np.any(self.target < 0):
            raise DomainError("target contains negative values")

    @property
    def n_periods(self) -> int:
        return len(self.dates)

    @property
    def n_channels(self) -> int:
        return self.spend.shape[1]

    def channel_index(self, name: str) -> int:
        try:
            return self.channel_names.index(name)
        except ValueError:
            raise SchemaError(f"unknown channel {name!r}; have {self.channel_names}") from None

    def window(self, start: int, stop: int) -> "Dataset":
        """Contiguous row slice [start, stop) as a new Dataset."""
        if not (0 <= start < stop <= self.n_periods):
            raise DimensionError(f"window [{start}, {stop}) outside 0..{self.n_periods}")
        return Dataset(
            dates=self.dates[start:stop],
            spend=self.spend[start:stop].copy(),
            target=self.target[start:stop].copy(),
            channel_names=self.channel_names,
            cadence=self.cadence,
        )

    def next_dates(self, count: int) -> tuple[dt.date, ...]:
        """The `count` calendar dates continuing this dataset's grid."""
        step = dt.timedelta(days=_CADENCE_DAYS[self.cadence])
        last = self.dates[-1]
        return tuple(last + step * (i + 1) for i in range(count))


@dataclass(frozen=True)
class ScalePair:
    """Max-abs divisors recorded when a dataset was scaled (Eq. `v / max|v|`)."""

    spend_scales: np.ndarray  # (P,), strictly positive
    target_scale: float

    def __post_init__(self):
        object.__setattr__(self, "spend_scales", _frozen(self.spend_scales))
        if np.any(self.spend_scales <= 0) or self.target_scale <= 0:
            raise ScaleError("scales must be strictly positive")

    def scale_spend(self, spend: np.ndarray) -> np.ndarray:
        return np.asarray(spend, dtype=float) / self.spend_scales

    def rescale_target(self, scaled: np.ndarray) -> np.ndarray:
        return np.asarray(scaled, dtype=float) * self.target_scale


def max_abs_scale(d: Dataset) -> tuple[Dataset, ScalePair]:
    """Divide each spend column and the target by its max absolute value.

    Every scaled column then has max |v| exactly 1. Raises ScaleError for an
    all-zero column, naming it, since the divisor would be zero.
    """
    spend_scales = np.max(np.abs(d.spend), axis=0)
    for p, s in enumerate(spend_scales):
        if s == 0:
            raise ScaleError(f"channel {d.channel_names[p]!r} is all zero; cannot scale")
    target_scale = float(np.max(np.abs(d.target)))
    if target_scale == 0:
        raise ScaleError("target is all zero; cannot scale")
    scaled = Dataset(
        dates=d.dates,
        spend=d.spend / spend_scales,
        target=d.target / target_scale,
        channel_names=d.channel_names,
        cadence=d.cadence,
    )
    return scaled, ScalePair(spend_scales=spend_scales, target_scale=target_scale)


@dataclass(frozen=True)
class ColumnSchema:
    """Column mapping for CSV ingestion."""

    date: str
    target: str
    channels: tuple[str, ...]


def _parse_date(raw: str, row: int) -> dt.date:
    try:
        return dt.date.fromisoformat(raw.strip())
    except ValueError:
        raise SchemaError(f"row {row}: {raw!r} is not an ISO-8601 date") from None


def _parse_number(raw: str, column: str, row: int) -> float:
    try:
        return float(raw)
    except ValueError:
        raise SchemaError(f"row {row}, column {column!r}: {raw!r} is not a number") from None


def infer_cadence(dates: list[dt.date]) -> str:
    if len(dates) < 2:
        raise CadenceError("need at least 2 rows to infer a cadence")
    gaps = {(b - a).days for a, b in zip(dates, dates[1:])}
    if gaps == {1}:
        return DAILY
    if gaps == {7}:
        return WEEKLY
    if 0 in gaps:
        raise CadenceError("duplicate dates in input")
    raise CadenceError(f"dates are not uniformly daily or weekly (gaps in days: {sorted(gaps)})")


def load_dataset(path, schema: ColumnSchema) -> Dataset:
    """Read a headered CSV into a validated Dataset, sorting dates ascending."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, expected a header row")
        missing = [
            c for c in (schema.date, schema.target, *schema.channels)
            if c not in reader.fieldnames
        ]
        if missing:
            raise SchemaError(f"{path}: missing columns {missing}; header is {reader.fieldnames}")
        rows = []
        for i, record in enumerate(reader, start=2):
            date = _parse_date(record[schema.date], i)
            spend = [_parse_number(record[c], c, i) for c in schema.channels]
            target = _parse_number(record[schema.target], schema.target, i)
            rows.append((date, spend, target))
    if len(rows) < 2:
        raise CadenceError(f"{path}: {len(rows)} data row(s); need at least 2")
    rows.sort(key=lambda r: r[0])
    dates = [r[0] for r in rows]
    cadence = infer_cadence(dates)
    return Dataset(
        dates=tuple(dates),
        spend=np.array([r[1] for r in rows], dtype=float),
        target=np.array([r[2] for r in rows], dtype=float),
        channel_names=schema.channels,
        cadence=cadence,
    )


def save_dataset(d: Dataset, path) -> None:
    """Write a Dataset back out as CSV (date, channels..., target)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", *d.channel_names, "target"])
        for t in range(d.n_periods):
            writer.writerow(
                [
                    d.dates[t].isoformat(),
                    *(repr(float(v)) for v in d.spend[t]),
                    repr(float(d.target[t])),
                ]
            )


UPPER = "upper"
MID = "mid"
LOWER = "lower"

_DEFAULT_CARRYOVER_PRIORS = {UPPER: (6.0, 2.0), MID: (4.0, 4.0), LOWER: (2.0, 6.0)}
# Gamma (shape, scale) on the saturation parameter in scaled-spend units.
_DEFAULT_SATURATION_PRIORS = {UPPER: (2.0, 2.0), MID: (2.0, 1.5), LOWER: (2.0, 1.25)}


@dataclass(frozen=True)
class FunnelSegment:
    """Per-channel prior shapes keyed to the channel's place in the funnel.

    Upper-funnel channels (brand, TV) are believed to carry over longer than
    lower-funnel channels (search), so their carryover Beta prior sits higher.
    """

    label: str
    carryover_prior: tuple[float, float] = field(default=None)  # Beta (a, b) on alpha
    saturation_prior: tuple[float, float] = field(default=None)  # Gamma (shape, scale) on mu

    def __post_init__(self):
        if self.label not in (UPPER, MID, LOWER):
            raise ParameterError(
                f"funnel label must be one of {UPPER!r}, {MID!r}, {LOWER!r}; got {self.label!r}"
            )
        if self.carryover_prior is None:
            object.__setattr__(self, "carryover_prior", _DEFAULT_CARRYOVER_PRIORS[self.label])
        if self.saturation_prior is None:
            object.__setattr__(self, "saturation_prior", _DEFAULT_SATURATION_PRIORS[self.label])
        a, b = self.carryover_prior
        if a <= 0 or b <= 0:
            raise DomainError("Beta prior parameters must be positive")
        k, theta = self.saturation_prior
        if k <= 0 or theta <= 0:
            raise DomainError("Gamma prior parameters must be positive")

    @property
    def carryover_prior_mean(self) -> float:
        a, b = self.carryover_prior
        return a / (a + b)

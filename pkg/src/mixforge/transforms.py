"""Carryover and reach transforms applied to spend before regression.

Carryover spreads spend over subsequent periods with geometric decay; reach
maps (carried-over) spend onto a bounded concave effect curve. The combined
transform applies carryover first, then reach.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ParameterError


def carryover(series, alpha: float, max_lag: int | None = None) -> np.ndarray:
    """Normalized geometric-decay average of current and past values.

    out[t] = sum_{l=0}^{L} alpha^l * series[t-l] / sum_{l=0}^{L} alpha^l,
    where L = min(t, max_lag). The output at each t is a convex combination
    of the window's inputs, so a constant series is unchanged and alpha=0 is
    the identity.
    """
    if not 0 <= alpha < 1:
        raise ParameterError(f"carryover decay must be in [0, 1), got {alpha}")
    if max_lag is not None and max_lag < 1:
        raise ParameterError(f"max_lag must be a positive integer, got {max_lag}")
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ParameterError(f"series must be 1-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise DomainError("series values must be finite and nonnegative")
    T = x.shape[0]
    window = T if max_lag is None else min(max_lag + 1, T)
    weights = alpha ** np.arange(window)
    numerator = np.convolve(x, weights)[:T]
    # denominator at t is the weight mass actually inside the window
    denominator = np.cumsum(weights)
    if window < T:
        denominator = np.concatenate(
            [denominator, np.full(T - window, denominator[-1])]
        )
    return numerator / denominator


def reach(series, mu: float) -> np.ndarray:
    """Bounded concave response to spend: (1 - e^(-x/mu)) / (1 + e^(-x/mu)).

    Evaluated as tanh(x / (2 mu)), which is the same function in a form that
    cannot overflow for large x/mu. Maps [0, inf) into [0, 1), with reach(0)=0;
    smaller mu saturates sooner.
    """
    if mu <= 0:
        raise ParameterError(f"saturation scale must be positive, got {mu}")
    x = np.asarray(series, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise DomainError("series values must be finite and nonnegative")
    # tanh saturates to exactly 1.0 in float64 near x/(2 mu) ~ 19; keep the
    # documented open upper bound at representation precision
    return np.minimum(np.tanh(x / (2.0 * mu)), np.nextafter(1.0, 0.0))


def reach_derivative(series, mu: float) -> np.ndarray:
    """d reach / dx = sech^2(x / (2 mu)) / (2 mu); used by the allocator."""
    if mu <= 0:
        raise ParameterError(f"saturation scale must be positive, got {mu}")
    x = np.asarray(series, dtype=float)
    return (1.0 / np.cosh(x / (2.0 * mu))) ** 2 / (2.0 * mu)


@dataclass(frozen=True)
class AdstockParams:
    """Per-channel carryover decays and saturation scales."""

    carryover: np.ndarray  # (P,), each in [0, 1)
    saturation: np.ndarray  # (P,), each > 0
    max_lag: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "carryover", np.asarray(self.carryover, dtype=float))
        object.__setattr__(self, "saturation", np.asarray(self.saturation, dtype=float))
        if self.carryover.shape != self.saturation.shape:
            raise ParameterError("carryover and saturation must have matching shapes")
        if np.any(self.carryover < 0) or np.any(self.carryover >= 1):
            raise ParameterError("every carryover decay must lie in [0, 1)")
        if np.any(self.saturation <= 0):
            raise ParameterError("every saturation scale must be positive")
        if self.max_lag is not None and self.max_lag < 1:
            raise ParameterError(f"max_lag must be a positive integer, got {self.max_lag}")

    @property
    def n_channels(self) -> int:
        return self.carryover.shape[0]


def adstock(column, params: AdstockParams, channel: int) -> np.ndarray:
    """Combined transform for one channel: carryover first, then reach."""
    if not 0 <= channel < params.n_channels:
        raise ParameterError(f"channel {channel} outside 0..{params.n_channels - 1}")
    carried = carryover(column, params.carryover[channel], params.max_lag)
    return reach(carried, params.saturation[channel])


def adstock_matrix(spend, params: AdstockParams, history=None) -> np.ndarray:
    """Transform every column of a (T, P) spend matrix.

    `history` optionally prepends trailing pre-window spend (H0, P) so the
    carryover window at the first rows sees what actually preceded them; the
    returned matrix covers only the (T, P) block.
    """
    spend = np.asarray(spend, dtype=float)
    if spend.ndim != 2 or spend.shape[1] != params.n_channels:
        raise ParameterError(
            f"spend must be (T, {params.n_channels}), got {spend.shape}"
        )
    if history is not None:
        history = np.asarray(history, dtype=float)
        full = np.vstack([history, spend])
        offset = history.shape[0]
    else:
        full = spend
        offset = 0
    out = np.empty_like(spend)
    for p in range(params.n_channels):
        out[:, p] = adstock(full[:, p], params, p)[offset:]
    return out

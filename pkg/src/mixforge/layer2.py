"""Kernel time-varying coefficients fitted on adstock-transformed spend.

Coefficients beta[t, p] are kernel-weighted combinations of nonnegative knot
values: B = K b with K a row-stochastic Gaussian kernel over a time grid.
Knots are fitted by maximizing a penalized Gaussian log posterior (likelihood
plus a random-walk smoothness prior on consecutive coefficients and a
half-normal prior anchoring the level), with approximate posterior draws from
jittered optimizer restarts perturbed along the local curvature diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, max_abs_scale
from .decomposition import Decomposition, detrend
from .errors import DimensionError, FitError, ParameterError
from .layer1 import AdstockPosterior, BetaPrior, compute_beta_prior
from .transforms import AdstockParams, adstock_matrix


@dataclass(frozen=True)
class KnotGrid:
    """Equally spaced knot positions over [0, T-1] with a kernel bandwidth."""

    count: int
    positions: np.ndarray  # (J,), strictly increasing within [0, T-1]
    bandwidth: float  # rho, in time-index units

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        if self.count != pos.shape[0]:
            raise DimensionError("count must equal the number of positions")
        if self.count < 1:
            raise ParameterError("need at least one knot")
        if np.any(np.diff(pos) <= 0):
            raise ParameterError("knot positions must be strictly increasing")
        if self.bandwidth <= 0:
            raise ParameterError("bandwidth must be positive")

    @classmethod
    def default(
        cls,
        T: int,
        count: int | None = None,
        bandwidth: float | None = None,
        period: int = 52,
    ):
        """Season-spaced knots (endpoints included), rho = knot spacing.

        Knot spacing of about one seasonal period keeps the coefficient path
        describing slow effectiveness drift; denser grids let it masquerade
        as the seasonal cycle itself and destabilize the last-knot
        extrapolation the forecaster relies on.
        """
        if count is not None:
            J = count
        else:
            J = max(2, round((T - 1) / max(period, 1)) + 1)
        if J > T:
            raise ParameterError(f"more knots ({J}) than time points ({T})")
        if J == 1:
            positions = np.array([(T - 1) / 2.0])
            rho = bandwidth if bandwidth is not None else max(T / 2.0, 1.0)
        else:
            positions = np.linspace(0.0, T - 1, J)
            rho = bandwidth if bandwidth is not None else positions[1] - positions[0]
        return cls(count=J, positions=positions, bandwidth=rho)


def kernel_weights(times, grid: KnotGrid) -> np.ndarray:
    """Row-normalized Gaussian weights of each time against the knots.

    Computed with a per-row max shift so far extrapolations cannot underflow
    to an all-zero row; weights then concentrate on the nearest knot.
    """
    t = np.atleast_1d(np.asarray(times, dtype=float))
    log_w = -0.5 * ((t[:, None] - grid.positions[None, :]) / grid.bandwidth) ** 2
    log_w -= log_w.max(axis=1, keepdims=True)
    w = np.exp(log_w)
    return w / w.sum(axis=1, keepdims=True)


def build_kernel(T: int, grid: KnotGrid) -> np.ndarray:
    """The (T, J) row-stochastic kernel matrix for in-sample times."""
    return kernel_weights(np.arange(T), grid)


@dataclass(frozen=True)
class KtrModel:
    """Fitted kernel regression: grid, kernel, knot draws, and summaries."""

    grid: KnotGrid
    kernel: np.ndarray  # (T, J), rows sum to 1
    knot_draws: np.ndarray  # (N, J, P), nonnegative
    sigma_rw: np.ndarray  # (P,) random-walk scales used in the prior
    coefficient_mean: np.ndarray  # (T, P)
    coefficient_std: np.ndarray  # (T, P)

    def __post_init__(self):
        for name in ("kernel", "knot_draws", "sigma_rw", "coefficient_mean", "coefficient_std"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if np.any(np.abs(self.kernel.sum(axis=1) - 1.0) > 1e-12):
            raise ParameterError("kernel rows must sum to 1")
        if np.any(self.knot_draws < 0):
            raise ParameterError("knot draws must be nonnegative")

    @property
    def n_draws(self) -> int:
        return self.knot_draws.shape[0]

    @property
    def n_channels(self) -> int:
        return self.knot_draws.shape[2]

    def coefficients_at(self, times) -> np.ndarray:
        """Per-channel coefficient draws at arbitrary time indices.

        In-sample times reproduce rows of K @ b; future times use kernel
        weights at the extrapolated index, which approach the last knot's
        draws as the horizon recedes.

        Returns an array of shape (N, len(times), P).
        """
        W = kernel_weights(times, self.grid)  # (M, J)
        return np.einsum("mj,njp->nmp", W, self.knot_draws)

    def coefficient_draws(self) -> np.ndarray:
        """In-sample coefficient paths, shape (N, T, P)."""
        return np.einsum("tj,njp->ntp", self.kernel, self.knot_draws)


@dataclass(frozen=True)
class Layer2Config:
    draws: int = 1000
    restarts: int = 8
    max_iter: int = 4000
    tol: float = 1e-10
    jitter: float = 0.3
    seed: int = 0
    rw_step_fraction: float = 1.0  # multiplies the Eq-derived per-step scale

    def __post_init__(self):
        if self.draws < 1 or self.restarts < 1:
            raise ParameterError("draws and restarts must be positive")
        if self.rw_step_fraction <= 0:
            raise ParameterError("rw_step_fraction must be positive")


@dataclass
class _Objective:
    """Penalized log posterior over log-knot values u (b = exp(u)).

    The objective is a concave quadratic in b, so the b-space Hessian
    diagonal is a constant, computed once and used as a diagonal-Newton
    preconditioner for the ascent in u-space.
    """

    K: np.ndarray  # (T, J)
    F: np.ndarray  # (T, P) transformed spend
    target: np.ndarray  # (T,)
    sigma: float  # observation noise scale (from layer 1)
    anchor_loc: np.ndarray  # (P,) spend-share location the chain starts from
    anchor_scale: np.ndarray  # (P,) scale of the t=0 coefficient around it
    rw_scale: np.ndarray  # (P,) random-walk scale on consecutive beta

    def __post_init__(self):
        # the objective is a concave quadratic in b, so its b-space Hessian is
        # a constant (JP x JP) matrix, indexed by the row-major ravel of (J, P)
        J, P = self.K.shape[1], self.F.shape[1]
        inv_var = 1.0 / (self.sigma * self.sigma)
        G = np.einsum("tj,tp->tjp", self.K, self.F).reshape(self.K.shape[0], J * P)
        neg_hess = G.T @ G * inv_var
        eye_p = np.eye(P)
        init = np.einsum(
            "j,k,pq->jpkq", self.K[0], self.K[0], eye_p / self.anchor_scale**2
        ).reshape(J * P, J * P)
        dK = np.diff(self.K, axis=0)
        rw = np.einsum(
            "tj,tk,pq->jpkq", dK, dK, eye_p / self.rw_scale**2
        ).reshape(J * P, J * P)
        self._neg_hess_b = neg_hess + init + rw

    def value_and_grad(self, u: np.ndarray):
        b = np.exp(u)  # (J, P)
        B = self.K @ b  # (T, P)
        fit = np.einsum("tp,tp->t", B, self.F)
        resid = self.target - fit
        inv_var = 1.0 / (self.sigma * self.sigma)
        value = -0.5 * inv_var * float(resid @ resid)
        dB = inv_var * resid[:, None] * self.F  # dL/dB from the likelihood

        # the coefficient chain starts at the spend-share prior location
        dev0 = (B[0] - self.anchor_loc) / self.anchor_scale
        value += float(np.sum(-0.5 * dev0**2))
        dB[0] -= dev0 / self.anchor_scale

        # random-walk smoothness prior on consecutive coefficients
        diffs = np.diff(B, axis=0)  # (T-1, P)
        value += float(np.sum(-0.5 * (diffs / self.rw_scale) ** 2))
        scaled = diffs / self.rw_scale**2
        dB[:-1] += scaled
        dB[1:] -= scaled

        grad_u = (self.K.T @ dB) * b
        return value, grad_u

    def newton_direction(self, u: np.ndarray, grad_u: np.ndarray) -> np.ndarray:
        """Damped-Newton ascent direction in u-space.

        -d2V/du2 = diag(b) H_b diag(b) - diag(grad_u); Levenberg damping is
        raised until the matrix factorizes, which also guarantees the
        returned direction has positive slope along grad_u.
        """
        b = np.exp(u).ravel()
        g = grad_u.ravel()
        N = self._neg_hess_b * np.outer(b, b)
        N[np.diag_indices_from(N)] -= g
        scale = max(float(np.trace(N)) / N.shape[0], 1e-12)
        damping = 1e-9 * scale
        for _ in range(60):
            try:
                L = np.linalg.cholesky(N + damping * np.eye(N.shape[0]))
                d = np.linalg.solve(L.T, np.linalg.solve(L, g))
                return d.reshape(u.shape)
            except np.linalg.LinAlgError:
                damping = max(damping * 10.0, 1e-10 * scale)
        # pathological curvature: fall back to a scaled gradient step
        return (grad_u / scale).reshape(u.shape)


def _ascend(obj: _Objective, u0: np.ndarray, max_iter: int, tol: float):
    """Preconditioned backtracking ascent; accepted values never decrease.

    The preconditioned (quasi-Newton) step has natural scale 1, so each
    iteration's line search restarts from a unit step and halves on
    insufficient increase.
    """
    u = u0.copy()
    value, grad = obj.value_and_grad(u)
    for iteration in range(max_iter):
        direction = obj.newton_direction(u, grad)
        slope = float(np.sum(grad * direction))  # > 0 for an ascent direction
        if slope < 1e-18:
            return u, value, True, iteration
        accepted = False
        step = 1.0
        while step > 1e-14:
            # keep log-knots in a range where exp cannot overflow
            candidate = np.clip(u + step * direction, -40.0, 40.0)
            cand_value, cand_grad = obj.value_and_grad(candidate)
            if cand_value > value + 1e-4 * step * slope:
                accepted = True
                previous = value
                u, value, grad = candidate, cand_value, cand_grad
                break
            step *= 0.5
        if not accepted:
            # backtracked to nothing: no ascent possible, we are at an optimum
            return u, value, True, iteration
        if value - previous < tol * (abs(value) + 1.0):
            return u, value, True, iteration
    return u, value, False, max_iter


def _curvature_stds(obj: _Objective, u: np.ndarray) -> np.ndarray:
    """1/sqrt of the negated Hessian diagonal, via central differences."""
    flat = u.ravel()
    stds = np.empty(flat.shape)
    h = 1e-4
    for i in range(flat.size):
        bump = np.zeros_like(flat)
        bump[i] = h * max(1.0, abs(flat[i]))
        _, g_plus = obj.value_and_grad((flat + bump).reshape(u.shape))
        _, g_minus = obj.value_and_grad((flat - bump).reshape(u.shape))
        hii = (g_plus.ravel()[i] - g_minus.ravel()[i]) / (2 * bump[i])
        stds[i] = 1.0 / math.sqrt(max(-hii, 1e-8))
    return np.minimum(stds, 1.0).reshape(u.shape)


def fit_knots(
    F: np.ndarray,
    target: np.ndarray,
    grid: KnotGrid,
    sigma: float,
    beta_prior: BetaPrior,
    cfg: Layer2Config = Layer2Config(),
) -> KtrModel:
    """Fit nonnegative knot values against a transformed design matrix.

    Draws come from `cfg.restarts` independently initialized ascents; each
    restart's optimum is perturbed along its local curvature diagonal to
    produce `cfg.draws` approximate posterior samples (merged by restart
    index, deterministically).
    """
    T, P = F.shape
    if target.shape != (T,):
        raise DimensionError(f"target must be ({T},), got {target.shape}")
    K = build_kernel(T, grid)
    obj = _Objective(
        K=K,
        F=F,
        target=np.asarray(target, dtype=float),
        sigma=sigma,
        anchor_loc=beta_prior.location,
        anchor_scale=beta_prior.scale,
        rw_scale=beta_prior.scale * cfg.rw_step_fraction,
    )
    base = np.log(np.maximum(beta_prior.location, 1e-6))
    u0 = np.tile(base, (grid.count, 1))  # (J, P)

    optima = []
    for r in range(cfg.restarts):
        rng = np.random.default_rng([cfg.seed, r])
        start = u0 + (cfg.jitter * rng.standard_normal(u0.shape) if r > 0 else 0.0)
        u, value, converged, iters = _ascend(obj, start, cfg.max_iter, cfg.tol)
        if not converged:
            raise FitError(
                f"knot optimizer did not converge in {cfg.max_iter} iterations",
                diagnostics={"restart": r, "objective": value, "iterations": iters},
            )
        optima.append((u, value))

    stds = [_curvature_stds(obj, u) for u, _ in optima]
    draws = np.empty((cfg.draws, grid.count, P))
    for n in range(cfg.draws):
        r = n % cfg.restarts
        rng = np.random.default_rng([cfg.seed, cfg.restarts + n])
        u_n = optima[r][0] + stds[r] * rng.standard_normal(u0.shape)
        draws[n] = np.exp(u_n)

    coeff_draws = np.einsum("tj,njp->ntp", K, draws)
    return KtrModel(
        grid=grid,
        kernel=K,
        knot_draws=draws,
        sigma_rw=beta_prior.scale,
        coefficient_mean=coeff_draws.mean(axis=0),
        coefficient_std=coeff_draws.std(axis=0, ddof=1) if cfg.draws > 1 else np.zeros((T, P)),
    )


def fit_layer2(
    d: Dataset,
    dec: Decomposition,
    post: AdstockPosterior,
    grid: KnotGrid | None = None,
    cfg: Layer2Config = Layer2Config(),
    use_adstock: bool = True,
) -> KtrModel:
    """Fit time-varying coefficients on spend transformed at the layer-1
    posterior means.

    The regression target is the scaled residual minus the layer-1 mean
    intercept. With `use_adstock=False` the raw scaled spend is used instead
    of the transform (the no-adstock baseline in model comparisons).
    """
    scaled, scales = max_abs_scale(d)
    pm = post.posterior_means()
    if use_adstock:
        params = AdstockParams(carryover=pm.alpha, saturation=pm.mu)
        F = adstock_matrix(scaled.spend, params)
    else:
        F = scaled.spend
    target = detrend(d, dec) / scales.target_scale - pm.intercept
    if grid is None:
        grid = KnotGrid.default(d.n_periods, period=dec.period)
    beta_prior = compute_beta_prior(scaled)
    return fit_knots(F, target, grid, sigma=pm.sigma, beta_prior=beta_prior, cfg=cfg)

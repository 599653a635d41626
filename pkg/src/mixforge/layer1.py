"""Bayesian inference of carryover, saturation, and static channel effects.

An adaptive random-walk Metropolis sampler alternating two blocks — the
transform parameters (alpha, mu) and the regression parameters (beta,
intercept, sigma) — on an unconstrained reparameterization (logit/log) with
Jacobian terms. Proposal scales adapt toward ~30% acceptance during warmup.
The model:

    target_t ~ Normal(intercept + sum_p beta_p * f*(spend_t,p; mu_p, alpha_p), sigma)

where target is the scaled, detrended performance series and f* is the
carryover-then-reach transform of max-abs-scaled spend.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import MID, Dataset, FunnelSegment, max_abs_scale
from .decomposition import Decomposition, detrend
from .errors import (
    DimensionError,
    InitializationError,
    ParameterError,
    PriorError,
    SamplerError,
)
from .transforms import carryover, reach

HALF_NORMAL_STD_CORRECTION = 1.0 / math.sqrt(1.0 - 2.0 / math.pi)


@dataclass(frozen=True)
class BetaPrior:
    """Spend-share-derived per-channel prior location and scale."""

    location: np.ndarray  # (P,), > 0
    scale: np.ndarray  # (P,), > 0


def compute_beta_prior(d: Dataset) -> BetaPrior:
    """Per-channel prior from historical spend share times performance.

    For each channel, averages spend_share_t * y_t over time steps with any
    spend, then applies the half-normal std correction 1/sqrt(1 - 2/pi) and
    the max-abs data scalings. The scale uses the sample standard deviation
    of the same per-step terms in place of the mean. Expects the scaled
    dataset, whose max factors are 1, but computes them regardless so the
    construction is total.
    """
    spend, y = d.spend, d.target
    row_totals = spend.sum(axis=1)
    valid = row_totals > 0
    if valid.sum() < 2:
        raise PriorError(
            f"only {int(valid.sum())} time steps have nonzero total spend; "
            "need at least 2 to form the spend-share prior"
        )
    shares = spend[valid] / row_totals[valid, None]  # (T', P)
    terms = shares * y[valid, None]
    correction = (
        HALF_NORMAL_STD_CORRECTION
        / np.max(np.abs(y))
        / np.max(np.abs(spend), axis=0)
    )
    location = correction * terms.mean(axis=0)
    scale = correction * terms.std(axis=0, ddof=1)
    if np.any(location <= 0):
        raise PriorError("a channel's spend-share prior location is not positive")
    scale = np.maximum(scale, 1e-6 * location)  # degenerate-variance guard
    return BetaPrior(location=location, scale=scale)


@dataclass(frozen=True)
class Layer1Priors:
    """Everything the layer-1 log posterior needs beyond the data.

    The static coefficients get a deliberately wide half-normal prior: the
    data pin the per-channel gain beta/(2 mu), so any tight scale on beta
    would act as a sharp downward prior on mu through that ridge. The
    spend-share construction (BetaPrior) is carried along for the
    time-varying layer, whose coefficient chain it parameterizes.
    """

    segments: tuple[FunnelSegment, ...]  # one per channel
    beta: BetaPrior
    beta_sampling_scale: float = 2.0
    intercept_scale: float = 1.0
    sigma_scale: float = 1.0

    @property
    def n_channels(self) -> int:
        return len(self.segments)


def default_priors(
    scaled: Dataset, funnels: tuple[str, ...] | None = None
) -> Layer1Priors:
    P = scaled.n_channels
    if funnels is None:
        funnels = (MID,) * P
    if len(funnels) != P:
        raise ParameterError(f"{len(funnels)} funnel labels for {P} channels")
    segments = tuple(FunnelSegment(label) for label in funnels)
    return Layer1Priors(segments=segments, beta=compute_beta_prior(scaled))


@dataclass(frozen=True)
class Layer1Config:
    draws: int = 1500  # per chain
    warmup: int = 1500
    chains: int = 2
    seed: int = 0
    max_lag: int | None = None
    funnels: tuple[str, ...] | None = None
    step_scales: dict = field(default_factory=dict)  # group -> base scale
    adapt_window: int = 25
    rhat_warn: float = 1.05

    def __post_init__(self):
        if self.draws < 100:
            raise ParameterError(f"need draws >= 100 for usable posteriors, got {self.draws}")
        if self.chains < 2:
            raise ParameterError(f"need chains >= 2 for convergence diagnostics, got {self.chains}")
        if self.warmup < 0:
            raise ParameterError("warmup must be nonnegative")


_DEFAULT_STEPS = {"alpha": 0.35, "mu": 0.35, "beta": 0.15, "intercept": 0.08, "sigma": 0.2}


@dataclass(frozen=True)
class Layer1Params:
    """A constrained parameter point, for log-posterior queries."""

    alpha: np.ndarray
    mu: np.ndarray
    beta: np.ndarray
    intercept: float
    sigma: float


@dataclass(frozen=True)
class AdstockPosterior:
    """Joint posterior draws of the layer-1 parameters plus diagnostics."""

    alpha_draws: np.ndarray  # (N, P) in [0, 1)
    mu_draws: np.ndarray  # (N, P) > 0
    beta_draws: np.ndarray  # (N, P) >= 0
    intercept_draws: np.ndarray  # (N,)
    sigma_draws: np.ndarray  # (N,) > 0
    diagnostics: dict  # name -> {"rhat": float, "ess": float}
    chains: int = 2

    def __post_init__(self):
        for name in ("alpha_draws", "mu_draws", "beta_draws", "intercept_draws", "sigma_draws"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        N = self.alpha_draws.shape[0]
        if N % self.chains != 0:
            raise DimensionError("draw count must be chains * draws-per-chain")
        if np.any(self.alpha_draws < 0) or np.any(self.alpha_draws >= 1):
            raise ParameterError("alpha draw outside [0, 1)")
        if np.any(self.mu_draws <= 0) or np.any(self.beta_draws < 0):
            raise ParameterError("mu or beta draw outside support")
        if np.any(self.sigma_draws <= 0):
            raise ParameterError("sigma draw outside support")

    @property
    def n_draws(self) -> int:
        return self.alpha_draws.shape[0]

    @property
    def n_channels(self) -> int:
        return self.alpha_draws.shape[1]

    def posterior_means(self) -> Layer1Params:
        return Layer1Params(
            alpha=self.alpha_draws.mean(axis=0),
            mu=self.mu_draws.mean(axis=0),
            beta=self.beta_draws.mean(axis=0),
            intercept=float(self.intercept_draws.mean()),
            sigma=float(self.sigma_draws.mean()),
        )


class _Model:
    """Unconstrained-space log posterior with cached spend transforms.

    Sampling coordinates are [logit(alpha), log(mu), log(gain), intercept,
    log(sigma)] with gain g = beta / (2 mu). The data pin the gain (the
    near-linear slope of beta * reach) tightly while mu itself is mostly
    prior-driven; sampling the gain instead of beta turns the (mu, beta)
    likelihood ridge into an axis-aligned shape a random walk can traverse.
    The (log mu, log g) -> (mu, beta) change of variables has determinant
    mu * beta, so the Jacobian terms match the plain log transforms.
    """

    def __init__(self, scaled_spend, target, priors: Layer1Priors, max_lag):
        self.X = np.asarray(scaled_spend, dtype=float)
        self.y = np.asarray(target, dtype=float)
        self.T, self.P = self.X.shape
        self.priors = priors
        self.max_lag = max_lag
        ab = np.array([s.carryover_prior for s in priors.segments])
        kt = np.array([s.saturation_prior for s in priors.segments])
        self.beta_a, self.beta_b = ab[:, 0], ab[:, 1]
        self.gamma_k, self.gamma_theta = kt[:, 0], kt[:, 1]
        self.beta_scale = np.full(self.P, priors.beta_sampling_scale)
        self._lbeta = np.array(
            [
                math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
                for a, b in zip(self.beta_a, self.beta_b)
            ]
        )
        self._lgamma_k = np.array([math.lgamma(k) for k in self.gamma_k])

    # --- parameter packing -------------------------------------------------
    def pack(self, alpha, mu, beta, intercept, sigma):
        return np.concatenate(
            [
                np.log(alpha) - np.log1p(-alpha),
                np.log(mu),
                np.log(beta) - np.log(2.0 * np.asarray(mu, dtype=float)),
                [intercept],
                [np.log(sigma)],
            ]
        )

    def unpack(self, z):
        P = self.P
        alpha = 1.0 / (1.0 + np.exp(-z[:P]))
        mu = np.exp(z[P : 2 * P])
        beta = 2.0 * mu * np.exp(z[2 * P : 3 * P])
        intercept = z[3 * P]
        sigma = math.exp(z[3 * P + 1])
        return alpha, mu, beta, intercept, sigma

    @property
    def dim(self):
        return 3 * self.P + 2

    @property
    def block1(self):
        # transform parameters: changing (alpha, mu) moves F and, through the
        # gain parameterization, beta as well
        return slice(0, 2 * self.P)

    @property
    def block2(self):
        return slice(2 * self.P, self.dim)

    # --- densities ----------------------------------------------------------
    def transform(self, alpha, mu) -> np.ndarray:
        F = np.empty_like(self.X)
        for p in range(self.P):
            F[:, p] = reach(carryover(self.X[:, p], alpha[p], self.max_lag), mu[p])
        return F

    def loglik(self, F, beta, intercept, sigma) -> float:
        resid = self.y - intercept - F @ beta
        return float(
            -0.5 * self.T * math.log(2.0 * math.pi * sigma * sigma)
            - 0.5 * np.dot(resid, resid) / (sigma * sigma)
        )

    def logprior(self, alpha, mu, beta, intercept, sigma) -> float:
        """All priors plus the sampling-coordinate Jacobian terms."""
        log_alpha = np.log(alpha)
        log_1m = np.log1p(-alpha)
        lp = np.sum(
            (self.beta_a - 1) * log_alpha + (self.beta_b - 1) * log_1m - self._lbeta
            + log_alpha + log_1m  # Jacobian of logit
        )
        log_mu = np.log(mu)
        lp += np.sum(
            (self.gamma_k - 1) * log_mu
            - mu / self.gamma_theta
            - self.gamma_k * np.log(self.gamma_theta)
            - self._lgamma_k
            + log_mu  # Jacobian
        )
        scale = self.beta_scale
        lp += np.sum(
            -0.5 * (beta / scale) ** 2
            + 0.5 * math.log(2.0 / math.pi)
            - np.log(scale)
            + np.log(beta)  # Jacobian
        )
        ic_scale = self.priors.intercept_scale
        lp += -0.5 * (intercept / ic_scale) ** 2 - math.log(ic_scale) - 0.5 * math.log(2 * math.pi)
        sg_scale = self.priors.sigma_scale
        lp += (
            -0.5 * (sigma / sg_scale) ** 2
            + 0.5 * math.log(2.0 / math.pi)
            - math.log(sg_scale)
            + math.log(sigma)  # Jacobian
        )
        return float(lp)

    def log_posterior_unconstrained(self, z) -> float:
        alpha, mu, beta, intercept, sigma = self.unpack(z)
        F = self.transform(alpha, mu)
        return self.logprior(alpha, mu, beta, intercept, sigma) + self.loglik(
            F, beta, intercept, sigma
        )


def _prepare(d: Dataset, dec: Decomposition, priors=None, funnels=None, max_lag=None):
    scaled, scales = max_abs_scale(d)
    target = detrend(d, dec) / scales.target_scale
    if priors is None:
        priors = default_priors(scaled, funnels)
    if priors.n_channels != d.n_channels:
        raise ParameterError("priors channel count does not match the dataset")
    return _Model(scaled.spend, target, priors, max_lag)


def log_posterior(
    params: Layer1Params,
    d: Dataset,
    dec: Decomposition,
    priors: Layer1Priors | None = None,
    max_lag: int | None = None,
) -> float:
    """Joint log density at a constrained point; -inf outside the support."""
    alpha = np.asarray(params.alpha, dtype=float)
    mu = np.asarray(params.mu, dtype=float)
    beta = np.asarray(params.beta, dtype=float)
    if (
        np.any(alpha < 0)
        or np.any(alpha >= 1)
        or np.any(mu <= 0)
        or np.any(beta < 0)
        or params.sigma <= 0
    ):
        return -math.inf
    model = _prepare(d, dec, priors=priors, max_lag=max_lag)
    F = model.transform(alpha, mu)
    lp = _constrained_logprior(model, alpha, mu, beta, params.intercept, params.sigma)
    lp += model.loglik(F, beta, params.intercept, params.sigma)
    return float(lp)


def _constrained_logprior(model, alpha, mu, beta, intercept, sigma):
    with np.errstate(divide="ignore"):
        lp = np.sum(
            (model.beta_a - 1) * np.log(alpha)
            + (model.beta_b - 1) * np.log1p(-alpha)
            - model._lbeta
        )
    lp += np.sum(
        (model.gamma_k - 1) * np.log(mu)
        - mu / model.gamma_theta
        - model.gamma_k * np.log(model.gamma_theta)
        - model._lgamma_k
    )
    scale = model.beta_scale
    lp += np.sum(-0.5 * (beta / scale) ** 2 + 0.5 * math.log(2 / math.pi) - np.log(scale))
    ic = model.priors.intercept_scale
    lp += -0.5 * (intercept / ic) ** 2 - math.log(ic) - 0.5 * math.log(2 * math.pi)
    sg = model.priors.sigma_scale
    lp += -0.5 * (sigma / sg) ** 2 + 0.5 * math.log(2 / math.pi) - math.log(sg)
    return float(lp)


def _initial_point(model: _Model) -> np.ndarray:
    alpha0 = model.beta_a / (model.beta_a + model.beta_b)
    mu0 = model.gamma_k * model.gamma_theta
    beta0 = model.beta_scale * math.sqrt(2.0 / math.pi)
    # start sigma at the scale of what the regressors cannot explain, not the
    # raw target spread; a grossly inflated sigma flattens the likelihood and
    # lets chains settle into wrong-(mu, sigma) pseudo-modes
    design = np.column_stack([np.ones(model.T), model.X])
    coef, *_ = np.linalg.lstsq(design, model.y, rcond=None)
    resid = model.y - design @ coef
    sigma0 = float(np.clip(np.std(resid), 1e-4, None))
    return model.pack(alpha0, mu0, np.full(model.P, beta0), 0.0, sigma0)


class _BlockProposal:
    """Adaptive multivariate random-walk proposal for one Gibbs block.

    The proposal covariance is learned from the warmup trajectory (Haario
    adaptive Metropolis) and a scalar multiplier is tuned toward the target
    acceptance rate; both freeze when warmup ends.
    """

    TARGET = 0.30

    def __init__(self, base_scales: np.ndarray, adapt_window: int):
        self.d = base_scales.shape[0]
        self.chol = np.diag(base_scales)
        self.mult = 1.0
        self.adapt_window = adapt_window
        self.window_acc = 0
        self.window_n = 0
        self.total_acc = 0
        self._mean = np.zeros(self.d)
        self._m2 = np.zeros((self.d, self.d))
        self._count = 0

    def step(self, rng) -> np.ndarray:
        return self.mult * (self.chol @ rng.standard_normal(self.d))

    def reset_history(self):
        """Drop accumulated covariance; called mid-warmup so the frozen
        proposal reflects the equilibrated region, not the initial transient."""
        self._mean = np.zeros(self.d)
        self._m2 = np.zeros((self.d, self.d))
        self._count = 0

    def record(self, value: np.ndarray, accepted: bool, warm: bool):
        self.window_n += 1
        if accepted:
            self.window_acc += 1
            self.total_acc += 1
        if not warm:
            return
        self._count += 1
        delta = value - self._mean
        self._mean += delta / self._count
        self._m2 += np.outer(delta, value - self._mean)
        if self.window_n >= self.adapt_window:
            rate = self.window_acc / self.window_n
            self.mult = float(np.clip(self.mult * math.exp(1.2 * (rate - self.TARGET)), 1e-3, 1e3))
            self.window_acc = self.window_n = 0
            if self._count >= max(10 * self.d, 50):
                cov = self._m2 / (self._count - 1)
                cov = (2.38**2 / self.d) * cov + 1e-9 * np.eye(self.d)
                try:
                    self.chol = np.linalg.cholesky(cov)
                except np.linalg.LinAlgError:
                    pass  # keep the previous factor


def _run_chain(model: _Model, cfg: Layer1Config, chain: int):
    rng = np.random.default_rng([cfg.seed, chain])
    steps = dict(_DEFAULT_STEPS)
    steps.update(cfg.step_scales)
    base = np.concatenate(
        [
            np.full(model.P, steps["alpha"]),
            np.full(model.P, steps["mu"]),
            np.full(model.P, steps["beta"]),
            [steps["intercept"]],
            [steps["sigma"]],
        ]
    )
    z = _initial_point(model) + 0.05 * rng.standard_normal(model.dim)
    alpha, mu, beta, intercept, sigma = model.unpack(z)
    F = model.transform(alpha, mu)
    lp = model.logprior(alpha, mu, beta, intercept, sigma)
    ll = model.loglik(F, beta, intercept, sigma)
    if not np.isfinite(lp + ll):
        raise InitializationError(
            f"log posterior not finite at the chain-{chain} starting point"
        )

    b1, b2 = model.block1, model.block2
    prop1 = _BlockProposal(base[b1], cfg.adapt_window)
    prop2 = _BlockProposal(base[b2], cfg.adapt_window)
    out = {
        "alpha": np.empty((cfg.draws, model.P)),
        "mu": np.empty((cfg.draws, model.P)),
        "beta": np.empty((cfg.draws, model.P)),
        "intercept": np.empty(cfg.draws),
        "sigma": np.empty(cfg.draws),
    }

    history_reset_at = cfg.warmup // 2
    for it in range(cfg.warmup + cfg.draws):
        warm = it < cfg.warmup
        if it == history_reset_at and it > 0:
            prop1.reset_history()
            prop2.reset_history()
        # block 1: transform parameters; moving (alpha, mu) refreshes the
        # spend transform (and beta through the gain coordinate)
        prop = z.copy()
        prop[b1] += prop1.step(rng)
        p_alpha, p_mu, p_beta, _, _ = model.unpack(prop)
        F_prop = model.transform(p_alpha, p_mu)
        lp_prop = model.logprior(p_alpha, p_mu, p_beta, intercept, sigma)
        ll_prop = model.loglik(F_prop, p_beta, intercept, sigma)
        accepted = math.log(rng.random()) < (lp_prop + ll_prop) - (lp + ll)
        if accepted:
            z, lp, ll, F = prop, lp_prop, ll_prop, F_prop
            alpha, mu, beta = p_alpha, p_mu, p_beta
        prop1.record(z[b1], accepted, warm)

        # block 2: gain, intercept, sigma; transform unchanged, F reused
        prop = z.copy()
        prop[b2] += prop2.step(rng)
        _, _, p_beta, p_intercept, p_sigma = model.unpack(prop)
        lp_prop = model.logprior(alpha, mu, p_beta, p_intercept, p_sigma)
        ll_prop = model.loglik(F, p_beta, p_intercept, p_sigma)
        accepted = math.log(rng.random()) < (lp_prop + ll_prop) - (lp + ll)
        if accepted:
            z, lp, ll = prop, lp_prop, ll_prop
            beta, intercept, sigma = p_beta, p_intercept, p_sigma
        prop2.record(z[b2], accepted, warm)

        if not warm:
            i = it - cfg.warmup
            out["alpha"][i] = alpha
            out["mu"][i] = mu
            out["beta"][i] = beta
            out["intercept"][i] = intercept
            out["sigma"][i] = sigma

    if cfg.warmup > 0 and prop1.total_acc == 0 and prop2.total_acc == 0:
        raise SamplerError(
            f"chain {chain}: no proposal accepted in {cfg.warmup + cfg.draws} iterations"
        )
    return out


def fit_layer1(
    d: Dataset,
    dec: Decomposition,
    cfg: Layer1Config = Layer1Config(),
    priors: Layer1Priors | None = None,
) -> AdstockPosterior:
    """Sample the joint posterior of (alpha, mu, beta, intercept, sigma).

    Chains run independently from seed-derived RNG streams and are merged in
    chain order. Warns — does not fail — when any split R-hat exceeds the
    configured threshold.
    """
    model = _prepare(d, dec, priors=priors, funnels=cfg.funnels, max_lag=cfg.max_lag)
    results = [_run_chain(model, cfg, chain) for chain in range(cfg.chains)]

    def merge(key):
        return np.concatenate([r[key] for r in results], axis=0)

    names = {}
    per_chain = {k: np.stack([r[k] for r in results]) for k in results[0]}
    for p in range(model.P):
        names[f"alpha[{p}]"] = per_chain["alpha"][:, :, p]
        names[f"mu[{p}]"] = per_chain["mu"][:, :, p]
        names[f"beta[{p}]"] = per_chain["beta"][:, :, p]
    names["intercept"] = per_chain["intercept"]
    names["sigma"] = per_chain["sigma"]
    diagnostics = {
        name: {"rhat": split_rhat(chains), "ess": effective_sample_size(chains)}
        for name, chains in names.items()
    }
    worst = max(v["rhat"] for v in diagnostics.values())
    if worst > cfg.rhat_warn:
        warnings.warn(
            f"split R-hat up to {worst:.3f} exceeds {cfg.rhat_warn}; "
            "consider more warmup or draws",
            stacklevel=2,
        )
    return AdstockPosterior(
        alpha_draws=merge("alpha"),
        mu_draws=merge("mu"),
        beta_draws=merge("beta"),
        intercept_draws=merge("intercept"),
        sigma_draws=merge("sigma"),
        diagnostics=diagnostics,
        chains=cfg.chains,
    )


def split_rhat(chains: np.ndarray) -> float:
    """Gelman-Rubin statistic on half-split chains, (C, N) -> scalar."""
    C, N = chains.shape
    half = N // 2
    if half < 2:
        return math.nan
    splits = chains[:, : 2 * half].reshape(2 * C, half)
    within = splits.var(axis=1, ddof=1).mean()
    between = half * splits.mean(axis=1).var(ddof=1)
    if within == 0:
        return 1.0 if between == 0 else math.inf
    var_plus = (half - 1) / half * within + between / half
    return float(math.sqrt(var_plus / within))


def effective_sample_size(chains: np.ndarray) -> float:
    """Autocorrelation-based ESS with Geyer's initial positive sequence."""
    C, N = chains.shape
    centered = chains - chains.mean(axis=1, keepdims=True)
    variances = chains.var(axis=1, ddof=0)
    if np.all(variances == 0):
        return float("nan")
    # average autocorrelation across chains via FFT
    size = 2 * N
    f = np.fft.rfft(centered, n=size, axis=1)
    acov = np.fft.irfft(f * np.conj(f), n=size, axis=1)[:, :N].real / N
    rho = (acov / np.maximum(variances[:, None], 1e-300)).mean(axis=0)
    tau = 1.0
    for k in range(1, N - 1, 2):
        pair = rho[k] + rho[k + 1] if k + 1 < N else rho[k]
        if pair < 0:
            break
        tau += 2.0 * pair
    return float(C * N / tau)

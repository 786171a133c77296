"""Variational Gaussian inference for the preference model.

The posterior over latent function values at the distinct observed inputs is
approximated by N(mu, L L^T) with L lower-triangular. Fitting maximizes a
Monte-Carlo evidence lower bound: reparameterized samples f = mu + L eps feed
the exact observation log-likelihoods, and a closed-form Gaussian KL anchors
the approximation to the GP prior. Kernel hyperparameters and the
indifference threshold are learned jointly by stochastic gradient ascent
with adaptive-moment steps; every gradient here is analytic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.special import expit, logsumexp

from .gp import CandidatePool, KernelParams, NumericalError, chol_with_jitter, kernel_matrix
from .likelihood import (
    RANKING,
    TIE,
    WINNER,
    TIE_PROB_FLOOR,
    Observation,
    distinct_inputs,
)

PRIOR_JITTER = 1e-6  # relative to the signal variance


@dataclass
class VariationalPosterior:
    """Gaussian over function values at the observed inputs, stored as mean and Cholesky factor."""

    mean: np.ndarray
    chol_factor: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        L = np.atleast_2d(np.asarray(self.chol_factor, dtype=float))
        if L.shape != (self.mean.size, self.mean.size):
            raise ValueError("factor shape must match mean length")
        if np.any(np.triu(L, 1) != 0.0):
            raise ValueError("factor must be lower-triangular")
        if np.any(np.diag(L) <= 0.0):
            raise ValueError("factor diagonal must be strictly positive")
        self.chol_factor = L

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def covariance(self) -> np.ndarray:
        return self.chol_factor @ self.chol_factor.T


@dataclass(frozen=True)
class FitConfig:
    mc_samples_per_step: int = 64
    steps: int = 2000
    learning_rate: float = 0.01
    learn_delta: bool = False
    length_scale_penalty_weight: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.mc_samples_per_step < 1 or self.steps < 1 or self.learning_rate <= 0:
            raise ValueError("sample count, steps, and learning rate must be positive")
        if self.length_scale_penalty_weight < 0:
            raise ValueError("length-scale penalty weight must be >= 0")


@dataclass(frozen=True)
class FitResult:
    posterior: VariationalPosterior
    kernel: KernelParams
    delta: float
    observed_indices: tuple[int, ...]
    elbo_trace: np.ndarray
    initial_values: dict


def kl_gaussian(q: VariationalPosterior, prior_cov: np.ndarray) -> float:
    """KL( N(mu, LL^T) || N(0, K) ) in closed form; nonnegative."""
    K = np.atleast_2d(np.asarray(prior_cov, dtype=float))
    n = q.dim
    if K.shape != (n, n):
        raise ValueError("prior covariance shape must match the posterior")
    Lk, _ = chol_with_jitter(K, 0.0)
    A = linalg.solve_triangular(Lk, q.chol_factor, lower=True)
    b = linalg.solve_triangular(Lk, q.mean, lower=True)
    logdet_k = 2.0 * float(np.sum(np.log(np.diag(Lk))))
    logdet_q = 2.0 * float(np.sum(np.log(np.diag(q.chol_factor))))
    return 0.5 * (float(np.sum(A * A)) + float(b @ b) - n + logdet_k - logdet_q)


# -- parameter vector layout -------------------------------------------------

_SOFTPLUS_MIN_RHO = -700.0


def softplus(rho: float) -> float:
    return float(np.logaddexp(0.0, rho))


def softplus_inverse(x: float) -> float:
    if x <= 0:
        raise ValueError("softplus inverse needs a positive value")
    return float(x + np.log(-np.expm1(-x)))


@dataclass(frozen=True)
class ParamLayout:
    """Index bookkeeping for the flat unconstrained parameter vector.

    Order: mean (n), lower-triangular factor entries row-major with the
    diagonal stored in log (n(n+1)/2), log length-scales (d), log signal
    variance (1), and optionally the unconstrained threshold parameter.
    """

    n: int
    d: int
    learn_delta: bool

    @property
    def tril_rows(self) -> np.ndarray:
        return np.tril_indices(self.n)[0]

    @property
    def tril_cols(self) -> np.ndarray:
        return np.tril_indices(self.n)[1]

    @property
    def size(self) -> int:
        return self.n + self.n * (self.n + 1) // 2 + self.d + 1 + int(self.learn_delta)

    def slices(self):
        n, d = self.n, self.d
        ntri = n * (n + 1) // 2
        mu = slice(0, n)
        tri = slice(n, n + ntri)
        log_l = slice(n + ntri, n + ntri + d)
        log_s2 = n + ntri + d
        rho = n + ntri + d + 1 if self.learn_delta else None
        return mu, tri, log_l, log_s2, rho

    def pack(
        self,
        mean: np.ndarray,
        chol_factor: np.ndarray,
        kernel: KernelParams,
        delta: float | None,
    ) -> np.ndarray:
        rows, cols = self.tril_rows, self.tril_cols
        vals = chol_factor[rows, cols].copy()
        diag = rows == cols
        vals[diag] = np.log(vals[diag])
        parts = [np.asarray(mean, dtype=float), vals, np.log(kernel.length_scales),
                 [math.log(kernel.signal_variance)]]
        if self.learn_delta:
            parts.append([softplus_inverse(delta)])
        return np.concatenate([np.atleast_1d(np.asarray(p, dtype=float)) for p in parts])

    def unpack(self, theta: np.ndarray):
        mu_s, tri_s, logl_s, logs2_i, rho_i = self.slices()
        mean = theta[mu_s]
        rows, cols = self.tril_rows, self.tril_cols
        L = np.zeros((self.n, self.n))
        vals = theta[tri_s].copy()
        diag = rows == cols
        vals[diag] = np.exp(vals[diag])
        L[rows, cols] = vals
        kernel = KernelParams(math.exp(theta[logs2_i]), np.exp(theta[logl_s]))
        delta = softplus(theta[rho_i]) if self.learn_delta else 0.0
        return mean, L, kernel, delta


# -- vectorized dataset likelihood --------------------------------------------


@dataclass(frozen=True)
class _ObsGroup:
    kind: str
    k: int
    positions: np.ndarray  # (G, m) posterior positions, likelihood order
    scatter: np.ndarray  # (G*m, n) one-hot map back onto the posterior vector


def _group_observations(dataset: Sequence[Observation], pos_of: dict) -> list[_ObsGroup]:
    n = len(pos_of)
    buckets: dict[tuple, list[list[int]]] = {}
    for obs in dataset:
        pos = [pos_of[i] for i in obs.query]
        if obs.kind == RANKING:
            chosen = [pos_of[w] for w in obs.winners]
            rest = [p for p in pos if p not in set(chosen)]
            ordered = chosen + rest
            key = (RANKING, len(pos), len(chosen))
        elif obs.kind == WINNER:
            w = pos_of[obs.winners[0]]
            ordered = [w] + [p for p in pos if p != w]
            key = (WINNER, len(pos), 1)
        else:
            ordered = pos
            key = (TIE, len(pos), 1)
        buckets.setdefault(key, []).append(ordered)
    groups = []
    for (kind, m, k), rows in buckets.items():
        P = np.asarray(rows, dtype=int)
        onehot = np.zeros((P.size, n))
        onehot[np.arange(P.size), P.ravel()] = 1.0
        groups.append(_ObsGroup(kind, k, P, onehot))
    return groups


def _group_loglik(F: np.ndarray, group: _ObsGroup, delta: float):
    """Per-sample log-likelihood sum and gradients for one observation group.

    Returns (ll (S,), grad_F (S, n), dll_ddelta (S,)).
    """
    S = F.shape[0]
    G = F[:, group.positions]  # (S, nobs, m)
    local = np.zeros_like(G)
    ddelta = np.zeros(S)
    if group.kind == RANKING:
        ll = np.zeros(G.shape[:2])
        for i in range(group.k):
            sub = G[..., i:]
            lse = logsumexp(sub, axis=-1)
            ll += G[..., i] - lse
            local[..., i] += 1.0
            local[..., i:] -= np.exp(sub - lse[..., None])
    elif group.kind == WINNER:
        T = G + delta
        T[..., 0] = G[..., 0]
        lse = logsumexp(T, axis=-1)
        ll = G[..., 0] - lse
        w = np.exp(T - lse[..., None])
        local[..., 0] = 1.0 - w[..., 0]
        local[..., 1:] = -w[..., 1:]
        ddelta = -(1.0 - w[..., 0]).sum(axis=-1)
    else:  # tie
        m = G.shape[-1]
        T = np.repeat(G[..., None, :], m, axis=-2) + delta
        idx = np.arange(m)
        T[..., idx, idx] = G
        lse = logsumexp(T, axis=-1)  # (S, nobs, m)
        p = np.exp(G - lse)
        w = np.exp(T - lse[..., None])  # (S, nobs, m, m)
        complement = 1.0 - p.sum(axis=-1)
        open_region = complement > TIE_PROB_FLOOR
        ptie = np.clip(complement, TIE_PROB_FLOOR, 1.0)
        ll = np.log(ptie)
        dcomp = -(p - np.einsum("...o,...oj->...j", p, w))
        dcomp_delta = (p * (1.0 - p)).sum(axis=-1)
        gate = np.where(open_region, 1.0 / ptie, 0.0)
        local = dcomp * gate[..., None]
        ddelta = (dcomp_delta * gate).sum(axis=-1)
    grad_F = local.reshape(S, -1) @ group.scatter
    return ll.sum(axis=-1), grad_F, ddelta


def _dataset_loglik(F: np.ndarray, groups: Sequence[_ObsGroup], delta: float):
    S, n = F.shape
    ll = np.zeros(S)
    grad = np.zeros((S, n))
    ddelta = np.zeros(S)
    for group in groups:
        g_ll, g_grad, g_dd = _group_loglik(F, group, delta)
        ll += g_ll
        grad += g_grad
        ddelta += g_dd
    return ll, grad, ddelta


# -- reparameterized ELBO with analytic gradient -------------------------------


def _elbo_and_matrix_grads(
    mu: np.ndarray,
    L: np.ndarray,
    kernel: KernelParams,
    delta: float,
    groups: Sequence[_ObsGroup],
    sqdists: np.ndarray,
    eps: np.ndarray,
):
    """ELBO plus gradients in matrix form (before any reparameterization chain).

    Returns (elbo, d/dmu, d/dL as a full lower matrix, d/dlog_l, d/dlog_s2,
    d/ddelta).
    """
    n = mu.size
    S = eps.shape[0]
    ls2 = kernel.length_scales**2

    F = mu[None, :] + eps @ L.T
    ll, grad_F, ddelta = _dataset_loglik(F, groups, delta)
    mean_ll = float(ll.mean())

    # prior pieces; jitter scales with the signal variance so the gradient
    # w.r.t. log s2 stays exact
    R = np.exp(-0.5 * np.tensordot(1.0 / ls2, sqdists, axes=(0, 0)))
    Kj = kernel.signal_variance * (R + PRIOR_JITTER * np.eye(n))
    Lk, _ = chol_with_jitter(Kj, 0.0)
    A = linalg.solve_triangular(Lk, L, lower=True)
    b = linalg.solve_triangular(Lk, mu, lower=True)
    logdet_k = 2.0 * float(np.sum(np.log(np.diag(Lk))))
    logdet_q = 2.0 * float(np.sum(np.log(np.diag(L))))
    kl = 0.5 * (float(np.sum(A * A)) + float(b @ b) - n + logdet_k - logdet_q)
    elbo = mean_ll - kl

    K_inv = linalg.cho_solve((Lk, True), np.eye(n))
    U = K_inv @ L
    V = K_inv @ mu
    G_K = 0.5 * (K_inv - U @ U.T - np.outer(V, V))

    g_mu = grad_F.mean(axis=0) - V
    g_L = grad_F.T @ eps / S - (U - np.diag(1.0 / np.diag(L)))
    K_nojit = kernel.signal_variance * R
    g_logl = np.array(
        [-float(np.sum(G_K * (K_nojit * (sqdists[m] / ls2[m])))) for m in range(sqdists.shape[0])]
    )
    g_logs2 = -float(np.sum(G_K * Kj))
    g_delta = float(ddelta.mean())
    return elbo, g_mu, g_L, g_logl, g_logs2, g_delta


def _flatten_grads(layout, L, g_mu, g_L, g_logl, g_logs2, g_delta, rho):
    """Assemble the flat gradient with log-diagonal and softplus chains applied."""
    grad = np.zeros(layout.size)
    mu_s, tri_s, logl_s, logs2_i, rho_i = layout.slices()
    grad[mu_s] = g_mu
    rows, cols = layout.tril_rows, layout.tril_cols
    vals = g_L[rows, cols]
    diag = rows == cols
    vals = np.where(diag, vals * L[rows, cols], vals)
    grad[tri_s] = vals
    grad[logl_s] = g_logl
    grad[logs2_i] = g_logs2
    if layout.learn_delta:
        grad[rho_i] = g_delta * expit(rho)
    return grad


def elbo_value_and_grad(
    theta: np.ndarray,
    layout: ParamLayout,
    groups: Sequence[_ObsGroup],
    sqdists: np.ndarray,
    eps: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Monte-Carlo ELBO and its gradient in the flat parameterization.

    ``sqdists`` holds per-dimension squared distances between observed
    inputs, shape (d, n, n); ``eps`` is the fixed standard-normal draw
    (common random numbers), shape (S, n).
    """
    mu, L, kernel, delta = layout.unpack(theta)
    elbo, g_mu, g_L, g_logl, g_logs2, g_delta = _elbo_and_matrix_grads(
        mu, L, kernel, delta, groups, sqdists, eps
    )
    rho = theta[layout.slices()[4]] if layout.learn_delta else None
    return elbo, _flatten_grads(layout, L, g_mu, g_L, g_logl, g_logs2, g_delta, rho)


def _coords_and_groups(dataset: Sequence[Observation], pool_points: np.ndarray):
    if not dataset:
        raise ValueError("dataset must be nonempty")
    pool_points = np.atleast_2d(np.asarray(pool_points, dtype=float))
    idx = distinct_inputs(dataset)
    if min(idx) < 0 or max(idx) >= pool_points.shape[0]:
        raise ValueError("dataset references unknown pool indices")
    coords = pool_points[list(idx)]
    pos_of = {i: p for p, i in enumerate(idx)}
    groups = _group_observations(dataset, pos_of)
    return idx, coords, groups


def elbo_estimate(
    q: VariationalPosterior,
    dataset: Sequence[Observation],
    pool_points: np.ndarray,
    kernel: KernelParams,
    delta: float,
    n_mc: int,
    rng: np.random.Generator,
) -> float:
    """Monte-Carlo ELBO of ``q``: mean reparameterized log-likelihood minus the KL.

    ``q`` must cover exactly the distinct inputs of the dataset in
    first-appearance order; deterministic given the generator state.
    """
    idx, coords, groups = _coords_and_groups(dataset, pool_points)
    if q.dim != len(idx):
        raise ValueError("posterior must cover exactly the distinct observed inputs")
    eps = rng.standard_normal((int(n_mc), q.dim))
    F = q.mean[None, :] + eps @ q.chol_factor.T
    ll, _, _ = _dataset_loglik(F, groups, float(delta))
    Kj = kernel_matrix(kernel, coords) + PRIOR_JITTER * kernel.signal_variance * np.eye(q.dim)
    return float(ll.mean()) - kl_gaussian(q, Kj)


def fit(
    dataset: Sequence[Observation],
    pool: CandidatePool,
    config: FitConfig,
    rng: np.random.Generator | None = None,
) -> FitResult:
    """Fit posterior, kernel hyperparameters, and threshold by stochastic ascent.

    Initialization: zero mean, factor 0.1 times the prior Cholesky,
    length-scales 0.2 times the domain width per dimension, unit signal
    variance, threshold 0.1 when learned. The objective is the reparameterized
    ELBO minus a quadratic penalty on log length-scale movement.

    Internally the mean and factor are optimized in a prior-whitened
    parameterization (preconditioned by the initial prior Cholesky): nearby
    inputs make the raw prior covariance badly conditioned, which stalls
    coordinate-wise ascent, while the whitened objective is well conditioned.
    The reported ELBO and its gradient contract are unaffected.
    """
    idx, coords, groups = _coords_and_groups(dataset, pool.points)
    if any(o.kind == TIE for o in dataset) and not config.learn_delta:
        raise ValueError("tie observations require learn_delta (zero threshold is inconsistent)")
    n, d = coords.shape
    rng = np.random.default_rng(config.seed) if rng is None else rng

    widths = pool.widths
    widths = np.where(widths > 0, widths, 1.0)
    log_l0 = np.log(0.2 * widths)
    kernel0 = KernelParams(1.0, np.exp(log_l0))
    sqdists = (coords[:, None, :] - coords[None, :, :]) ** 2
    sqdists = np.moveaxis(sqdists, 2, 0)  # (d, n, n)
    Kj0 = kernel_matrix(kernel0, coords) + PRIOR_JITTER * np.eye(n)
    C, _ = chol_with_jitter(Kj0, 0.0)  # fixed preconditioner; mu = C m, L = C Lt

    layout = ParamLayout(n, d, config.learn_delta)
    theta = layout.pack(np.zeros(n), 0.1 * np.eye(n), kernel0, 0.1 if config.learn_delta else None)
    initial_values = {
        "mean": 0.0,
        "factor_scale": 0.1,
        "length_scales": np.exp(log_l0).tolist(),
        "signal_variance": 1.0,
        "delta": 0.1 if config.learn_delta else 0.0,
    }

    mu_s, tri_s, logl_s, logs2_i, rho_i = layout.slices()
    rows, cols = layout.tril_rows, layout.tril_cols
    diag_mask = rows == cols
    weight = config.length_scale_penalty_weight
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8
    trace = np.empty(config.steps)
    for step in range(config.steps):
        m_white, L_white, kernel, delta = layout.unpack(theta)
        mu = C @ m_white
        L = C @ L_white
        eps = rng.standard_normal((config.mc_samples_per_step, n))
        elbo, g_mu, g_L, g_logl, g_logs2, g_delta = _elbo_and_matrix_grads(
            mu, L, kernel, delta, groups, sqdists, eps
        )
        grad = np.zeros_like(theta)
        grad[mu_s] = C.T @ g_mu
        gLw = C.T @ g_L
        vals = gLw[rows, cols]
        vals = np.where(diag_mask, vals * L_white[rows, cols], vals)
        grad[tri_s] = vals
        grad[logl_s] = g_logl - 2.0 * weight * (theta[logl_s] - log_l0)
        grad[logs2_i] = g_logs2
        if config.learn_delta:
            grad[rho_i] = g_delta * expit(theta[rho_i])
        if not np.all(np.isfinite(grad)) or not math.isfinite(elbo):
            raise NumericalError(
                f"non-finite gradient at step {step} (elbo={elbo!r}); "
                "check observation values and learning rate"
            )
        trace[step] = elbo
        m1 = beta1 * m1 + (1 - beta1) * grad
        m2 = beta2 * m2 + (1 - beta2) * grad * grad
        hat1 = m1 / (1 - beta1 ** (step + 1))
        hat2 = m2 / (1 - beta2 ** (step + 1))
        theta = theta + config.learning_rate * hat1 / (np.sqrt(hat2) + adam_eps)

    m_white, L_white, kernel, delta = layout.unpack(theta)
    return FitResult(
        posterior=VariationalPosterior(C @ m_white, C @ L_white),
        kernel=kernel,
        delta=float(delta),
        observed_indices=idx,
        elbo_trace=trace,
        initial_values=initial_values,
    )

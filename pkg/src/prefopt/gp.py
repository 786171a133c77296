"""Squared-exponential GP prior, predictive updates, and joint sampling.

The latent objective is modeled by a zero-mean GP. Approximate inference
produces a Gaussian over function values at the observed inputs; this module
propagates that Gaussian to arbitrary target points and draws joint samples
from the result. Continuous domains are handled through a finite candidate
pool (grid or scrambled Sobol points).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.stats import qmc


class NumericalError(RuntimeError):
    """A matrix factorization failed beyond the jitter budget."""


@dataclass(frozen=True)
class KernelParams:
    """Squared-exponential hyperparameters: signal variance and per-dimension length-scales."""

    signal_variance: float
    length_scales: np.ndarray

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        object.__setattr__(self, "length_scales", ls)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        if self.signal_variance <= 0:
            raise ValueError("signal variance must be positive")
        if ls.ndim != 1 or np.any(ls <= 0):
            raise ValueError("length-scales must be a vector of positive values")

    @property
    def dim(self) -> int:
        return self.length_scales.size


@dataclass(frozen=True)
class CandidatePool:
    """Finite ordered discretization of the input box.

    Queries, maximizer sets, and best guesses all refer to points by their
    index in ``points``.
    """

    points: np.ndarray
    bounds: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        bounds = np.atleast_2d(np.asarray(self.bounds, dtype=float))
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "bounds", bounds)
        if pts.shape[0] < 2:
            raise ValueError("pool needs at least two points")
        if bounds.shape != (pts.shape[1], 2):
            raise ValueError("bounds must be (dim, 2)")
        if np.any(pts < bounds[:, 0]) or np.any(pts > bounds[:, 1]):
            raise ValueError("pool points must lie within bounds")
        if len(np.unique(pts, axis=0)) != pts.shape[0]:
            raise ValueError("pool points must be distinct")
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            object.__setattr__(self, "labels", labels)
            if len(labels) != pts.shape[0]:
                raise ValueError("labels must align with points")

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def widths(self) -> np.ndarray:
        return self.bounds[:, 1] - self.bounds[:, 0]

    @classmethod
    def grid(cls, bounds: Sequence[Sequence[float]], size: int) -> "CandidatePool":
        """Evenly spaced 1-D grid over the box (1-D domains only)."""
        bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
        if bounds.shape[0] != 1:
            raise ValueError("grid pools are 1-D; use sobol for higher dimensions")
        pts = np.linspace(bounds[0, 0], bounds[0, 1], size)[:, None]
        return cls(pts, bounds)

    @classmethod
    def sobol(cls, bounds: Sequence[Sequence[float]], size: int, seed: int = 0) -> "CandidatePool":
        """Scrambled Sobol discretization of the box (default M = 1000)."""
        bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
        sampler = qmc.Sobol(d=bounds.shape[0], scramble=True, seed=seed)
        with warnings.catch_warnings():
            # non power-of-two sizes lose the balance property, which a
            # candidate pool does not need
            warnings.simplefilter("ignore", UserWarning)
            unit = sampler.random(size)
        pts = qmc.scale(unit, bounds[:, 0], bounds[:, 1])
        return cls(pts, bounds)


@dataclass
class GaussianBelief:
    """Joint Gaussian over function values at a list of points."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape != (self.mean.size, self.mean.size):
            raise ValueError("covariance shape must match mean length")
        scale = np.max(np.abs(cov)) if cov.size else 0.0
        if scale > 0 and np.max(np.abs(cov - cov.T)) > 1e-10 * scale:
            raise ValueError("covariance must be symmetric")
        self.covariance = 0.5 * (cov + cov.T)

    @property
    def dim(self) -> int:
        return self.mean.size

    def marginal_variance(self) -> np.ndarray:
        return np.diag(self.covariance).copy()


def kernel_matrix(params: KernelParams, A: np.ndarray, B: np.ndarray | None = None) -> np.ndarray:
    """Squared-exponential Gram matrix between two input sets.

    Entry (i, j) is s2 * exp(-0.5 * sum_m ((a_im - b_jm) / l_m)^2).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = A if B is None else np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != params.dim or B.shape[1] != params.dim:
        raise ValueError("input dimension does not match kernel length-scales")
    As = A / params.length_scales
    Bs = B / params.length_scales
    sq = (
        np.sum(As * As, axis=1)[:, None]
        + np.sum(Bs * Bs, axis=1)[None, :]
        - 2.0 * As @ Bs.T
    )
    np.maximum(sq, 0.0, out=sq)
    return params.signal_variance * np.exp(-0.5 * sq)


def chol_with_jitter(
    K: np.ndarray, base_jitter: float, escalations: int = 3
) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of K + jitter*I, escalating jitter x10 on failure."""
    n = K.shape[0]
    if base_jitter > 0:
        schedule = [base_jitter * 10.0**i for i in range(escalations + 1)]
    else:
        scale = max(float(np.max(np.abs(K))), 1.0)
        schedule = [0.0] + [scale * 10.0 ** (i - 12) for i in range(escalations)]
    jitter = schedule[-1]
    for jitter in schedule:
        try:
            return linalg.cholesky(K + jitter * np.eye(n), lower=True), jitter
        except linalg.LinAlgError:
            continue
    raise NumericalError(f"Cholesky failed for {n}x{n} matrix after jitter {jitter:.1e}")


def posterior_predict(
    params: KernelParams,
    observed_inputs: np.ndarray,
    q,
    targets: np.ndarray,
) -> GaussianBelief:
    """Predictive Gaussian at ``targets`` given a Gaussian over observed inputs.

    ``q`` carries ``mean`` and ``covariance`` over function values at
    ``observed_inputs``. With K the (jittered) Gram matrix at the observed
    inputs, the output is

        mean = K_ts K^-1 mu
        cov  = K_tt - K_ts K^-1 (K - Sigma) K^-1 K_st

    which collapses to the prior when q is the prior and interpolates q at
    the observed inputs.
    """
    X = np.atleast_2d(np.asarray(observed_inputs, dtype=float))
    T = np.atleast_2d(np.asarray(targets, dtype=float))
    mu = np.asarray(q.mean, dtype=float)
    Sigma = np.asarray(q.covariance, dtype=float)
    if mu.size != X.shape[0]:
        raise ValueError("posterior dimension must match observed inputs")
    K = kernel_matrix(params, X)
    L, jitter = chol_with_jitter(K, 1e-6 * params.signal_variance)
    Kj = K + jitter * np.eye(K.shape[0])
    K_ts = kernel_matrix(params, T, X)
    K_tt = kernel_matrix(params, T)
    W = linalg.cho_solve((L, True), K_ts.T)  # K^-1 K_st, shape (n, t)
    mean = K_ts @ linalg.cho_solve((L, True), mu)
    cov = K_tt - W.T @ (Kj - Sigma) @ W
    cov = 0.5 * (cov + cov.T)
    diag = np.diag(cov)
    if np.min(diag) < -1e-8:
        raise NumericalError(f"negative predictive variance {np.min(diag):.3e}")
    np.fill_diagonal(cov, np.maximum(diag, 0.0))
    return GaussianBelief(mean, cov)


def sample_joint(belief: GaussianBelief, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` i.i.d. joint samples from the belief, rows of shape (dim,).

    Deterministic given the generator state. An all-zero covariance yields
    rows exactly equal to the mean.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    cov = belief.covariance
    scale = float(np.max(np.diag(cov))) if cov.size else 0.0
    z = rng.standard_normal((count, belief.dim))
    if scale <= 0.0:
        return np.tile(belief.mean, (count, 1))
    L, _ = chol_with_jitter(cov, 1e-9 * scale)
    return belief.mean + z @ L.T

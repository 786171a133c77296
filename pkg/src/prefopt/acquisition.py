"""Query selection for preference-based optimization.

The main selector scores a candidate query by the mutual information between
its (random) outcome and the location of the objective's maximizer, both
taken under the current posterior. The integral over maximizer locations is
discretized onto a finite maximizer set built from posterior argmax samples,
and all probabilities are Monte-Carlo estimates over joint function samples:

1. draw n joint samples of f over the query and the maximizer set;
2. estimate p(x_max) as argmax frequencies over the maximizer-set columns;
3. estimate p(outcome, x_max) by averaging outcome likelihoods over samples
   whose argmax lands on x_max;
4. marginalize for p(outcome);
5. condition for p(outcome | x_max).

Random-subset search over the candidate pool optimizes the score. Baselines:
uniform random queries and an expected-improvement pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.special import logsumexp, ndtr

from .gp import CandidatePool, GaussianBelief, sample_joint
from .likelihood import (
    enumerate_rankings,
    tie_log_prob_rows,
    topk_log_prob_rows,
    winner_log_probs_rows,
)

MAX_ENUMERATED_OUTCOMES = 10_000
POOL_SAMPLE_CHUNK = 2000
CANDIDATE_CHUNK = 256


@dataclass(frozen=True)
class MaximizerSet:
    """Candidate maximizer locations with their posterior argmax probabilities."""

    indices: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int)
        probs = np.asarray(self.probabilities, dtype=float)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "probabilities", probs)
        if idx.ndim != 1 or idx.size < 1 or probs.shape != idx.shape:
            raise ValueError("indices and probabilities must be aligned, nonempty vectors")
        if np.any(probs < 0) or abs(float(probs.sum()) - 1.0) > 1e-9:
            raise ValueError("probabilities must be nonnegative and sum to 1")


@dataclass(frozen=True)
class AcquisitionConfig:
    query_size: int = 2
    k: int = 1
    maximizer_set_size: int = 20
    mc_samples: int = 1000
    candidate_queries: int = 2000
    use_ties: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.query_size < 2 or not 1 <= self.k < self.query_size:
            raise ValueError("need query_size >= 2 and 1 <= k < query_size")
        if min(self.maximizer_set_size, self.mc_samples, self.candidate_queries) < 1:
            raise ValueError("sizes must be positive")

    def outcome_count(self) -> int:
        if self.use_ties:
            return self.query_size + 1
        return math.perm(self.query_size, self.k)


def build_maximizer_set(
    pool: CandidatePool,
    belief: GaussianBelief,
    size: int,
    n_samples: int,
    rng: np.random.Generator,
) -> MaximizerSet:
    """Most frequent argmax locations over joint posterior samples of the pool.

    Small pools are kept whole. Larger pools are sampled jointly; pools above
    the chunk bound are sampled block by block (cross-block correlation is
    dropped for tractability).
    """
    M = len(pool)
    if belief.dim != M:
        raise ValueError("belief must cover the whole pool")
    counts = np.zeros(M, dtype=int)
    if M <= POOL_SAMPLE_CHUNK:
        values = sample_joint(belief, n_samples, rng)
    else:
        blocks = []
        for start in range(0, M, POOL_SAMPLE_CHUNK):
            stop = min(start + POOL_SAMPLE_CHUNK, M)
            sub = GaussianBelief(
                belief.mean[start:stop], belief.covariance[start:stop, start:stop]
            )
            blocks.append(sample_joint(sub, n_samples, rng))
        values = np.concatenate(blocks, axis=1)
    labels = np.argmax(values, axis=1)
    counts = np.bincount(labels, minlength=M)
    if M <= size:
        return MaximizerSet(np.arange(M), counts / n_samples)
    order = np.lexsort((np.arange(M), -counts))
    keep = np.sort(order[:size])
    kept_counts = counts[keep]
    return MaximizerSet(keep, kept_counts / kept_counts.sum())


def _outcome_log_probs(F: np.ndarray, k: int, use_ties: bool, delta: float) -> np.ndarray:
    """Log-likelihood of every enumerable outcome, shape (..., n_outcomes).

    ``F`` holds latent values over the query, shape (..., m). Outcomes are
    each item winning plus a tie when ties are in play, otherwise every
    ordered top-k ranking.
    """
    m = F.shape[-1]
    if use_ties:
        if k != 1:
            raise ValueError("tie outcomes are only defined for k = 1")
        win = winner_log_probs_rows(F, delta)
        tie = tie_log_prob_rows(F, delta)
        return np.concatenate([win, tie[..., None]], axis=-1)
    if k == 1:
        return F - logsumexp(F, axis=-1, keepdims=True)
    n_out = math.perm(m, k)
    if n_out > MAX_ENUMERATED_OUTCOMES:
        raise ValueError(
            f"{n_out} outcomes exceed the enumeration bound; use the stochastic scorer"
        )
    cols = [topk_log_prob_rows(F, perm) for perm in enumerate_rankings(m, k)]
    return np.stack(cols, axis=-1)


def outcome_tables_from_samples(
    F_C: np.ndarray,
    F_star: np.ndarray,
    k: int,
    use_ties: bool,
    delta: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Estimate (p(x_max), joint p(outcome, x_max)) from one joint sample matrix.

    ``F_C``: (n, m) latent samples over the query. ``F_star``: (n, p) samples
    over the maximizer set. Rows of the joint table sum to the argmax
    frequencies.
    """
    n = F_C.shape[0]
    labels = np.argmax(F_star, axis=1)
    P = np.exp(_outcome_log_probs(F_C, k, use_ties, delta))
    p_star = np.bincount(labels, minlength=F_star.shape[1]) / n
    onehot = np.zeros((n, F_star.shape[1]))
    onehot[np.arange(n), labels] = 1.0
    joint = onehot.T @ P / n
    return p_star, joint


def mutual_information_from_tables(p_star: np.ndarray, joint: np.ndarray) -> float:
    """Sum of joint * log(conditional / marginal); zero-probability terms drop out."""
    p_o = joint.sum(axis=0)
    assert np.all(joint <= p_o[None, :] + 1e-15)
    keep = p_star > 0
    j = joint[keep]
    cond = j / p_star[keep][:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(j > 0, j * (np.log(cond) - np.log(p_o[None, :])), 0.0)
    return float(terms.sum())


def entropy_form_from_tables(p_star: np.ndarray, joint: np.ndarray) -> float:
    """Same information value as marginal entropy minus expected conditional entropy."""

    def entropy(p):
        with np.errstate(divide="ignore", invalid="ignore"):
            return -float(np.where(p > 0, p * np.log(p), 0.0).sum())

    p_o = joint.sum(axis=0)
    keep = p_star > 0
    cond = joint[keep] / p_star[keep][:, None]
    cond_entropies = np.array([entropy(row) for row in cond])
    return entropy(p_o) - float(p_star[keep] @ cond_entropies)


def _union_layout(query: Sequence[int], xstar: MaximizerSet) -> tuple[list[int], np.ndarray]:
    query = [int(i) for i in query]
    qset = set(query)
    union = query + [int(i) for i in xstar.indices if int(i) not in qset]
    pos = {idx: p for p, idx in enumerate(union)}
    star_pos = np.array([pos[int(i)] for i in xstar.indices], dtype=int)
    return union, star_pos


def mpes_score(
    query: Sequence[int],
    xstar: MaximizerSet,
    belief: GaussianBelief,
    config: AcquisitionConfig,
    delta: float,
    rng: np.random.Generator,
) -> float:
    """Information gained about the maximizer by observing this query's outcome.

    ``belief`` must cover the query-and-maximizer-set union, query positions
    first then the remaining maximizer points in their set order. Outcomes
    are enumerated, so the outcome count must stay within the enumeration
    bound; nonnegative up to Monte-Carlo noise.
    """
    union, star_pos = _union_layout(query, xstar)
    if belief.dim != len(union):
        raise ValueError("belief must cover the union of query and maximizer set")
    samples = sample_joint(belief, config.mc_samples, rng)
    F_C = samples[:, : len(query)]
    F_star = samples[:, star_pos]
    p_star, joint = outcome_tables_from_samples(F_C, F_star, config.k, config.use_ties, delta)
    return mutual_information_from_tables(p_star, joint)


def _sample_outcomes(
    F_C: np.ndarray, k: int, use_ties: bool, delta: float, rng: np.random.Generator
) -> list[tuple[int, ...]]:
    """Draw one outcome per sample row from its own likelihood (noisy-utility draw).

    With ties in play the outcome is a single winner position, or position m
    (one past the query) for a tie.
    """
    n, m = F_C.shape
    u = np.clip(rng.random((n, m)), np.finfo(float).tiny, None)
    util = F_C - np.log(-np.log(u))
    if use_ties:
        best = np.argmax(util, axis=1)
        top = util[np.arange(n), best]
        util[np.arange(n), best] = -np.inf
        runner = np.max(util, axis=1)
        winner_ok = top >= runner + delta
        return [(int(b),) if ok else (m,) for b, ok in zip(best, winner_ok)]
    order = np.argsort(-util, axis=1)
    return [tuple(int(j) for j in row[:k]) for row in order]


def mpes_score_stochastic(
    query: Sequence[int],
    xstar: MaximizerSet,
    belief: GaussianBelief,
    config: AcquisitionConfig,
    delta: float,
    rng: np.random.Generator,
) -> float:
    """Sampled-outcome variant of the information score for large outcome spaces.

    Instead of enumerating outcomes, each joint sample draws one outcome from
    its own likelihood; only the outcomes actually drawn are scored. Agrees
    with the enumerating scorer within Monte-Carlo noise where both apply.
    """
    union, star_pos = _union_layout(query, xstar)
    if belief.dim != len(union):
        raise ValueError("belief must cover the union of query and maximizer set")
    samples = sample_joint(belief, config.mc_samples, rng)
    n = config.mc_samples
    F_C = samples[:, : len(query)]
    F_star = samples[:, star_pos]
    labels = np.argmax(F_star, axis=1)
    drawn = _sample_outcomes(F_C, config.k, config.use_ties, delta, rng)

    m = len(query)
    distinct = sorted(set(drawn))
    col_of = {o: c for c, o in enumerate(distinct)}
    cols = np.array([col_of[o] for o in drawn], dtype=int)
    LP = np.empty((n, len(distinct)))
    for o, c in col_of.items():
        if config.use_ties:
            if o[0] == m:
                LP[:, c] = tie_log_prob_rows(F_C, delta)
            else:
                LP[:, c] = winner_log_probs_rows(F_C, delta)[:, o[0]]
        else:
            LP[:, c] = topk_log_prob_rows(F_C, list(o))
    P = np.exp(LP)
    p_star = np.bincount(labels, minlength=F_star.shape[1]) / n
    onehot = np.zeros((n, F_star.shape[1]))
    onehot[np.arange(n), labels] = 1.0
    joint = onehot.T @ P / n
    p_o = P.mean(axis=0)
    cond = joint[labels, cols] / p_star[labels]
    return float(np.mean(np.log(cond) - np.log(p_o[cols])))


def _score_candidates_shared(
    samples: np.ndarray,
    candidates: np.ndarray,
    star_indices: np.ndarray,
    config: AcquisitionConfig,
    delta: float,
) -> np.ndarray:
    """Score many candidate queries from one pool-wide sample matrix."""
    n = samples.shape[0]
    labels = np.argmax(samples[:, star_indices], axis=1)
    onehot = np.zeros((n, star_indices.size))
    onehot[np.arange(n), labels] = 1.0
    p_star = onehot.sum(axis=0) / n
    keep = p_star > 0
    scores = np.empty(candidates.shape[0])
    for start in range(0, candidates.shape[0], CANDIDATE_CHUNK):
        chunk = candidates[start : start + CANDIDATE_CHUNK]
        F = samples[:, chunk]  # (n, q, m)
        P = np.exp(_outcome_log_probs(F, config.k, config.use_ties, delta))
        joint = np.einsum("np,nqo->pqo", onehot, P) / n
        p_o = joint.sum(axis=0)  # (q, O)
        cond = joint[keep] / p_star[keep][:, None, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(
                joint[keep] > 0,
                joint[keep] * (np.log(cond) - np.log(p_o[None, :, :])),
                0.0,
            )
        scores[start : start + chunk.shape[0]] = terms.sum(axis=(0, 2))
    return scores


def select_query_mpes(
    pool: CandidatePool,
    belief: GaussianBelief,
    config: AcquisitionConfig,
    delta: float,
    rng: np.random.Generator,
) -> tuple[int, ...]:
    """Pick the query maximizing the information score over random pool subsets.

    One seeded candidate (the top query-size points by maximizer probability)
    is always scored alongside the random subsets; all candidates share one
    joint sample matrix so scores are directly comparable. Ties go to the
    earliest candidate.
    """
    M = len(pool)
    c = config.query_size
    if belief.dim != M:
        raise ValueError("belief must cover the whole pool")
    if M < c:
        raise ValueError("pool smaller than the query size")
    if M == c:
        return tuple(range(M))
    xstar = build_maximizer_set(pool, belief, config.maximizer_set_size, config.mc_samples, rng)
    by_prob = np.lexsort((xstar.indices, -xstar.probabilities))
    greedy = [int(xstar.indices[i]) for i in by_prob[:c]]
    if len(greedy) < c:  # maximizer set smaller than the query: pad by posterior mean
        by_mean = np.lexsort((np.arange(M), -belief.mean))
        greedy += [int(i) for i in by_mean if int(i) not in set(greedy)][: c - len(greedy)]
    greedy = tuple(greedy)

    seen = {tuple(sorted(greedy))}
    candidates = [greedy]
    total = math.comb(M, c)
    if total <= config.candidate_queries:
        for combo in combinations(range(M), c):
            if combo not in seen:
                candidates.append(combo)
                seen.add(combo)
    else:
        target = config.candidate_queries
        attempts = 0
        while len(candidates) < target and attempts < 50 * target:
            combo = tuple(sorted(int(i) for i in rng.choice(M, size=c, replace=False)))
            attempts += 1
            if combo not in seen:
                candidates.append(combo)
                seen.add(combo)

    samples = sample_joint(belief, config.mc_samples, rng)
    scores = _score_candidates_shared(
        samples, np.asarray(candidates, dtype=int), xstar.indices, config, delta
    )
    return tuple(int(i) for i in candidates[int(np.argmax(scores))])


def select_query_random(
    pool: CandidatePool, config: AcquisitionConfig, rng: np.random.Generator
) -> tuple[int, ...]:
    """Uniformly random query of distinct pool indices (control baseline)."""
    return tuple(int(i) for i in rng.choice(len(pool), size=config.query_size, replace=False))


def expected_improvement(mean: np.ndarray, variance: np.ndarray, incumbent: float) -> np.ndarray:
    """Closed-form Gaussian expected improvement over an incumbent value."""
    sd = np.sqrt(np.maximum(variance, 0.0))
    out = np.zeros_like(mean)
    pos = sd > 0
    z = (mean[pos] - incumbent) / sd[pos]
    out[pos] = sd[pos] * (z * ndtr(z) + np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi))
    return out


def select_query_ei_pair(
    pool: CandidatePool, belief: GaussianBelief, rng: np.random.Generator | None = None
) -> tuple[int, int]:
    """Pair baseline: the best expected-improvement point plus the posterior-mean argmax.

    The incumbent is the best posterior mean over the pool. If both picks
    coincide, the improvement point falls back to the runner-up. Deterministic;
    the generator argument exists for selector-interface uniformity.
    """
    if belief.dim != len(pool):
        raise ValueError("belief must cover the whole pool")
    mean = belief.mean
    variance = belief.marginal_variance()
    best_mean_idx = int(np.argmax(mean))
    ei = expected_improvement(mean, variance, float(mean[best_mean_idx]))
    order = np.lexsort((np.arange(len(pool)), -ei))
    ei_idx = int(order[0])
    if ei_idx == best_mean_idx:
        ei_idx = int(order[1])
    return ei_idx, best_mean_idx


def best_guess(pool: CandidatePool, belief: GaussianBelief) -> int:
    """Index of the maximal posterior mean; ties go to the lowest index."""
    if belief.dim != len(pool):
        raise ValueError("belief must cover the whole pool")
    return int(np.argmax(belief.mean))

"""Choice, ranking, and tie log-likelihoods for the latent-utility preference model.

A query is a finite set of candidate-pool indices shown to an oracle. The
oracle reports either a top-k ranking (strict preferences), a single winner
under an indifference threshold ``delta``, or a tie. All probabilities follow
the multinomial-logit family: an item wins against a set when its latent
value beats every competitor's value plus ``delta``, which yields
softmax-style closed forms. Everything here works in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

RANKING = "ranking"
WINNER = "winner"
TIE = "tie"

# Floor for the tie complement 1 - sum(win probs); keeps log finite when the
# threshold passes near zero during learning.
TIE_PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class Observation:
    """One recorded preference event: a query plus its outcome.

    ``query`` holds distinct candidate-pool indices (at least two). The
    outcome is one of:

    * ``kind="ranking"``: ``winners`` is an ordered top-k ranking,
      1 <= k < len(query), strict preferences (threshold zero).
    * ``kind="winner"``: ``winners`` is the single most-preferred index,
      recorded under a positive indifference threshold.
    * ``kind="tie"``: no item beat all others by the threshold; only defined
      for top-1 protocols.
    """

    query: tuple[int, ...]
    kind: str
    winners: tuple[int, ...] = ()

    def __post_init__(self):
        q = tuple(int(i) for i in self.query)
        w = tuple(int(i) for i in self.winners)
        object.__setattr__(self, "query", q)
        object.__setattr__(self, "winners", w)
        if len(q) < 2:
            raise ValueError("query needs at least two indices")
        if len(set(q)) != len(q):
            raise ValueError("query indices must be distinct")
        if self.kind == RANKING:
            if not 1 <= len(w) < len(q):
                raise ValueError("ranking length must satisfy 1 <= k < |query|")
            if len(set(w)) != len(w) or not set(w) <= set(q):
                raise ValueError("ranking must list distinct members of the query")
        elif self.kind == WINNER:
            if len(w) != 1 or w[0] not in q:
                raise ValueError("winner outcome needs exactly one query member")
        elif self.kind == TIE:
            if w:
                raise ValueError("tie outcome carries no winners")
        else:
            raise ValueError(f"unknown outcome kind {self.kind!r}")

    @classmethod
    def ranking(cls, query: Sequence[int], winners: Sequence[int]) -> "Observation":
        return cls(tuple(query), RANKING, tuple(winners))

    @classmethod
    def winner(cls, query: Sequence[int], winner: int) -> "Observation":
        return cls(tuple(query), WINNER, (winner,))

    @classmethod
    def tie(cls, query: Sequence[int]) -> "Observation":
        return cls(tuple(query), TIE)

    @property
    def k(self) -> int:
        return len(self.winners) if self.kind == RANKING else 1

    def to_dict(self) -> dict:
        return {"query": list(self.query), "kind": self.kind, "winners": list(self.winners)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Observation":
        return cls(tuple(d["query"]), str(d["kind"]), tuple(d.get("winners", ())))


def _check_values(f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or f.size < 2:
        raise ValueError("latent values must be a vector of length >= 2")
    if not np.all(np.isfinite(f)):
        raise ValueError("latent values must be finite")
    return f


def _check_delta(delta: float) -> float:
    delta = float(delta)
    if delta < 0 or not math.isfinite(delta):
        raise ValueError("indifference threshold must be a finite value >= 0")
    return delta


def choice_log_prob(f: Sequence[float], chosen: int, delta: float = 0.0) -> float:
    """Log-probability that item ``chosen`` beats every other item by ``delta``.

    ``f`` holds latent values over the query; ``chosen`` is a position within
    it. The winning probability is exp(f_c) / (exp(f_c) + sum_j exp(f_j + delta)),
    evaluated via a max-shifted log-sum-exp.
    """
    f = _check_values(f)
    delta = _check_delta(delta)
    chosen = int(chosen)
    if not 0 <= chosen < f.size:
        raise ValueError("chosen position out of range")
    return float(choice_log_prob_rows(f[None, :], chosen, delta)[0])


def choice_log_prob_rows(F: np.ndarray, chosen: int, delta: float) -> np.ndarray:
    """Vectorized ``choice_log_prob`` over the last axis of ``F``."""
    terms = F + delta
    terms[..., chosen] = F[..., chosen]
    return F[..., chosen] - logsumexp(terms, axis=-1)


def topk_log_prob(f: Sequence[float], ranking: Sequence[int]) -> float:
    """Log-probability of an ordered top-k ranking under strict preferences.

    Stage i picks ``ranking[i]`` out of the items not yet ranked, each stage
    a threshold-free choice; the log-probabilities add.
    """
    f = _check_values(f)
    ranking = tuple(int(r) for r in ranking)
    m = f.size
    if not 1 <= len(ranking) < m:
        raise ValueError("ranking length must satisfy 1 <= k < |query|")
    if len(set(ranking)) != len(ranking) or any(not 0 <= r < m for r in ranking):
        raise ValueError("ranking must be distinct positions within the query")
    return float(topk_log_prob_rows(f[None, :], ranking)[0])


def topk_log_prob_rows(F: np.ndarray, ranking: Sequence[int]) -> np.ndarray:
    """Vectorized ``topk_log_prob`` over the last axis of ``F``."""
    m = F.shape[-1]
    rest = [j for j in range(m) if j not in set(ranking)]
    G = F[..., list(ranking) + rest]
    total = 0.0
    for i in range(len(ranking)):
        total = total + G[..., i] - logsumexp(G[..., i:], axis=-1)
    return total


def winner_log_probs_rows(F: np.ndarray, delta: float) -> np.ndarray:
    """Log-probabilities of each item winning outright, over the last axis."""
    m = F.shape[-1]
    T = np.repeat(F[..., None, :], m, axis=-2) + delta
    diag = np.arange(m)
    T[..., diag, diag] = F
    return F - logsumexp(T, axis=-1)


def tie_log_prob(f: Sequence[float], delta: float) -> float:
    """Log-probability that no item beats all others by ``delta``.

    The complement of the summed winner probabilities, accumulated with
    compensated summation and clamped to [1e-300, 1]. At delta = 0 the winner
    probabilities sum to one and the clamp floor is returned.
    """
    f = _check_values(f)
    delta = _check_delta(delta)
    if delta == 0.0:
        # winner probabilities sum to one exactly; only the floor survives
        return math.log(TIE_PROB_FLOOR)
    win = np.exp(winner_log_probs_rows(f[None, :], delta)[0])
    complement = 1.0 - math.fsum(win.tolist())
    return math.log(min(max(complement, TIE_PROB_FLOOR), 1.0))


def tie_log_prob_rows(F: np.ndarray, delta: float) -> np.ndarray:
    """Vectorized ``tie_log_prob`` over the last axis of ``F``."""
    if delta == 0.0:
        return np.full(F.shape[:-1], math.log(TIE_PROB_FLOOR))
    win = np.exp(winner_log_probs_rows(F, delta))
    complement = np.clip(1.0 - win.sum(axis=-1), TIE_PROB_FLOOR, 1.0)
    return np.log(complement)


def observation_log_likelihood(
    obs: Observation, f_pool: Mapping[int, float] | np.ndarray, delta: float = 0.0
) -> float:
    """Log-likelihood of one observation given latent values keyed by pool index."""
    delta = _check_delta(delta)
    try:
        f = np.array([float(f_pool[i]) for i in obs.query])
    except (KeyError, IndexError) as exc:
        raise ValueError(f"latent value missing for query index {exc}") from exc
    pos = {idx: p for p, idx in enumerate(obs.query)}
    if obs.kind == RANKING:
        return topk_log_prob(f, [pos[w] for w in obs.winners])
    if obs.kind == WINNER:
        return choice_log_prob(f, pos[obs.winners[0]], delta)
    if delta == 0.0:
        raise ValueError("tie observation is inconsistent with a zero threshold")
    return tie_log_prob(f, delta)


def dataset_log_likelihood(
    observations: Iterable[Observation],
    f_pool: Mapping[int, float] | np.ndarray,
    delta: float = 0.0,
) -> float:
    """Sum of per-observation log-likelihoods (observations independent given f)."""
    return float(sum(observation_log_likelihood(o, f_pool, delta) for o in observations))


def enumerate_rankings(m: int, k: int) -> list[tuple[int, ...]]:
    """All ordered top-k rankings of positions 0..m-1 (m!/(m-k)! of them)."""
    return list(permutations(range(m), k))


def distinct_inputs(observations: Iterable[Observation]) -> tuple[int, ...]:
    """Distinct pool indices referenced by a dataset, in first-appearance order."""
    seen: dict[int, None] = {}
    for obs in observations:
        for i in obs.query:
            seen.setdefault(i, None)
    return tuple(seen)

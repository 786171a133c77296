"""Simulated preference oracles over synthetic and tabular objectives.

An oracle answers a query by drawing noisy utilities u = f + e with e drawn
i.i.d. from a standard Gumbel distribution, then reporting the outcome the
protocol asks for: a top-k ranking, or a single winner when one item beats
every other by the indifference threshold (a tie otherwise). Benchmark
objectives are negated so that optimization always maximizes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .gp import CandidatePool
from .likelihood import Observation

FORRESTER = "forrester"
SIX_HUMP_CAMEL = "six-hump-camel"
HARTMANN3 = "hartmann3"
TABULAR = "tabular"

# Hartmann 3-D constants from the standard published tables.
_HART3_A = np.array(
    [[3.0, 10.0, 30.0], [0.1, 10.0, 35.0], [3.0, 10.0, 30.0], [0.1, 10.0, 35.0]]
)
_HART3_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_HART3_P = np.array(
    [
        [0.3689, 0.1170, 0.2673],
        [0.4699, 0.4387, 0.7470],
        [0.1091, 0.8732, 0.5547],
        [0.0381, 0.5743, 0.8828],
    ]
)

_BOUNDS = {
    FORRESTER: [[0.0, 1.0]],
    SIX_HUMP_CAMEL: [[-1.5, 1.5], [-1.5, 1.5]],
    HARTMANN3: [[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]],
}


@dataclass(frozen=True)
class Objective:
    """A maximization target: a negated benchmark function or stored utilities."""

    kind: str
    bounds: np.ndarray
    points: np.ndarray | None = None
    utilities: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "bounds", np.atleast_2d(np.asarray(self.bounds, dtype=float)))
        if self.kind == TABULAR:
            if self.points is None or self.utilities is None:
                raise ValueError("tabular objective needs points and utilities")
            pts = np.atleast_2d(np.asarray(self.points, dtype=float))
            util = np.asarray(self.utilities, dtype=float)
            if util.ndim != 1 or util.size != pts.shape[0]:
                raise ValueError("utilities must align with points")
            object.__setattr__(self, "points", pts)
            object.__setattr__(self, "utilities", util)
        elif self.kind not in _BOUNDS:
            raise ValueError(f"unknown objective kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    @classmethod
    def forrester(cls) -> "Objective":
        return cls(FORRESTER, _BOUNDS[FORRESTER])

    @classmethod
    def six_hump_camel(cls) -> "Objective":
        return cls(SIX_HUMP_CAMEL, _BOUNDS[SIX_HUMP_CAMEL])

    @classmethod
    def hartmann3(cls) -> "Objective":
        return cls(HARTMANN3, _BOUNDS[HARTMANN3])

    @classmethod
    def tabular(cls, points, utilities) -> "Objective":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        bounds = np.stack([pts.min(axis=0), pts.max(axis=0)], axis=1)
        return cls(TABULAR, bounds, pts, np.asarray(utilities, dtype=float))

    def evaluate(self, x) -> float:
        """Objective value at one input (negated benchmarks, stored utility for tabular)."""
        return float(self.evaluate_many(np.atleast_2d(np.asarray(x, dtype=float)))[0])

    def evaluate_many(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise ValueError("input dimension mismatch")
        if np.any(X < self.bounds[:, 0]) or np.any(X > self.bounds[:, 1]):
            raise ValueError("input outside objective bounds")
        if self.kind == FORRESTER:
            x = X[:, 0]
            return -((6.0 * x - 2.0) ** 2 * np.sin(12.0 * x - 4.0))
        if self.kind == SIX_HUMP_CAMEL:
            x, y = X[:, 0], X[:, 1]
            return -(
                (4.0 - 2.1 * x**2 + x**4 / 3.0) * x**2
                + x * y
                + (-4.0 + 4.0 * y**2) * y**2
            )
        if self.kind == HARTMANN3:
            d = X[:, None, :] - _HART3_P[None, :, :]
            inner = np.einsum("ij,nij->ni", _HART3_A, d * d)
            return np.sum(_HART3_ALPHA * np.exp(-inner), axis=1)
        # tabular: exact row lookup
        out = np.empty(X.shape[0])
        for i, row in enumerate(X):
            hits = np.where(np.all(np.isclose(self.points, row, atol=1e-12), axis=1))[0]
            if hits.size == 0:
                raise ValueError("tabular objective evaluated off its stored points")
            out[i] = self.utilities[hits[0]]
        return out

    def pool_values(self, pool: CandidatePool) -> np.ndarray:
        """Objective values at every pool point (fast path for tabular pools)."""
        if self.kind == TABULAR and self.points.shape == pool.points.shape and np.array_equal(
            self.points, pool.points
        ):
            return self.utilities.copy()
        return self.evaluate_many(pool.points)


def default_pool(objective: Objective, size: int | None = None, seed: int = 0) -> CandidatePool:
    """Standard discretization: 1-D grid for the 1-D benchmark, Sobol otherwise."""
    if objective.kind == TABULAR:
        return CandidatePool(objective.points, objective.bounds)
    if objective.kind == FORRESTER:
        return CandidatePool.grid(objective.bounds, size or 200)
    default = {SIX_HUMP_CAMEL: 400, HARTMANN3: 600}[objective.kind]
    return CandidatePool.sobol(objective.bounds, size or default, seed=seed)


@dataclass(frozen=True)
class OracleConfig:
    """How observations are generated: threshold, ranking depth, query size."""

    delta_true: float = 0.0
    k: int = 1
    query_size: int = 2
    convert_ties: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.delta_true < 0:
            raise ValueError("generation threshold must be >= 0")
        if not 1 <= self.k < self.query_size:
            raise ValueError("need 1 <= k < query_size")
        if self.delta_true > 0 and self.k != 1:
            raise ValueError("thresholded outcomes are only defined for k = 1")
        if self.convert_ties and (self.k != 1 or self.query_size != 2):
            raise ValueError("tie conversion applies to pairwise top-1 protocols only")


def sample_gumbel_utilities(f_values: Sequence[float], rng: np.random.Generator) -> np.ndarray:
    """Noisy utilities u_i = f_i - log(-log U_i) with U_i uniform on (0, 1)."""
    f = np.asarray(f_values, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("latent values must be finite")
    u = np.clip(rng.random(f.shape), np.finfo(float).tiny, None)
    return f - np.log(-np.log(u))


def _batch_rankings(utilities: np.ndarray, k: int) -> np.ndarray:
    """Top-k positions by utility for each row, shape (n, k)."""
    return np.argsort(-utilities, axis=1, kind="stable")[:, :k]


def _batch_thresholded_winners(
    utilities: np.ndarray, delta: float
) -> tuple[np.ndarray, np.ndarray]:
    """Per row: the argmax position and whether it beats every other by delta."""
    n = utilities.shape[0]
    best = np.argmax(utilities, axis=1)
    top = utilities[np.arange(n), best]
    masked = utilities.copy()
    masked[np.arange(n), best] = -np.inf
    runner = masked.max(axis=1)
    return best, top >= runner + delta


def generate_observation(
    objective: Objective,
    pool: CandidatePool,
    query: Sequence[int],
    config: OracleConfig,
    rng: np.random.Generator,
) -> Observation:
    """Simulate one oracle answer for a query of pool indices.

    With a positive threshold (k = 1) the winner must beat every other item's
    utility by the threshold, otherwise the outcome is a tie; the tie can be
    converted to a uniformly random strict pairwise preference when the
    consuming model cannot represent ties. With a zero threshold the outcome
    is the top-k ranking by utility.
    """
    query = tuple(int(i) for i in query)
    f = objective.pool_values(pool)[list(query)]
    u = sample_gumbel_utilities(f, rng)[None, :]
    if config.delta_true > 0:
        best, strict = _batch_thresholded_winners(u, config.delta_true)
        if strict[0]:
            if config.convert_ties:
                return Observation.ranking(query, (query[int(best[0])],))
            return Observation.winner(query, query[int(best[0])])
        if config.convert_ties:
            pick = query[int(rng.integers(len(query)))]
            return Observation.ranking(query, (pick,))
        return Observation.tie(query)
    winners = _batch_rankings(u, config.k)[0]
    return Observation.ranking(query, tuple(query[int(j)] for j in winners))


def outcome_frequencies(
    f_values: Sequence[float],
    delta: float,
    k: int,
    n_sims: int,
    rng: np.random.Generator,
) -> dict[tuple[int, ...] | None, float]:
    """Empirical outcome frequencies over many noisy-utility simulations.

    Keys are ordered winner-position tuples, or None for a tie. Shares the
    decision rules of ``generate_observation``; this is the Monte-Carlo side
    of the oracle/likelihood equivalence.
    """
    f = np.asarray(f_values, dtype=float)
    u = sample_gumbel_utilities(np.broadcast_to(f, (int(n_sims), f.size)), rng)
    freq: dict[tuple[int, ...] | None, float] = {}
    if delta > 0:
        if k != 1:
            raise ValueError("thresholded outcomes are only defined for k = 1")
        best, strict = _batch_thresholded_winners(u, delta)
        freq[None] = float(np.mean(~strict))
        for pos in range(f.size):
            freq[(pos,)] = float(np.mean(strict & (best == pos)))
    else:
        winners = _batch_rankings(u, k)
        seen, counts = np.unique(winners, axis=0, return_counts=True)
        for row, count in zip(seen, counts):
            freq[tuple(int(j) for j in row)] = float(count / n_sims)
    return freq


def load_tabular(path) -> tuple[CandidatePool, Objective]:
    """Load a CSV with header ``x1,...,xd,utility[,label]`` into a pool and objective."""
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        has_label = bool(header) and header[-1] == "label"
        feature_cols = header[:-2] if has_label else header[:-1]
        util_col = header[-2] if has_label else header[-1]
        expected = [f"x{i + 1}" for i in range(len(feature_cols))]
        if feature_cols != expected or util_col != "utility":
            raise ValueError(
                f"{path}: header must be x1,...,xd,utility[,label], got {','.join(header)}"
            )
        d = len(feature_cols)
        points, utilities, labels = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}: line {lineno}: expected {len(header)} fields")
            try:
                points.append([float(c) for c in row[:d]])
                utilities.append(float(row[d]))
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: non-numeric value") from None
            if has_label:
                labels.append(row[d + 1].strip())
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] < 2:
        raise ValueError(f"{path}: need at least two data rows")
    if len(np.unique(pts, axis=0)) != pts.shape[0]:
        raise ValueError(f"{path}: duplicate input points")
    objective = Objective.tabular(pts, utilities)
    pool = CandidatePool(pts, objective.bounds, tuple(labels) if has_label else None)
    return pool, objective

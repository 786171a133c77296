"""Experiment harness: the optimization loop, regret accounting, and persistence.

A run repeats the loop ``select query -> observe preference -> refit`` from a
set of random initial observations, tracking the immediate regret of the
model's best guess. Every repetition gets its own seed (base seed plus the
repetition number) and writes observations (JSON lines), fitted parameters
(JSON lines), and regrets (CSV) incrementally, so runs replay and diff
byte-for-byte.
"""

from __future__ import annotations

import json
import time
import traceback
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .acquisition import (
    AcquisitionConfig,
    best_guess,
    select_query_ei_pair,
    select_query_mpes,
    select_query_random,
)
from .gp import CandidatePool, posterior_predict
from .inference import FitConfig, FitResult, fit
from .likelihood import Observation, dataset_log_likelihood
from .oracle import (
    Objective,
    OracleConfig,
    default_pool,
    generate_observation,
    load_tabular,
)

ACQUISITIONS = ("mpes", "random", "ei-pair")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    best_index: int
    regret: float
    wall_time: float


@dataclass
class RegretTrace:
    run: int
    seed: int
    records: list[IterationRecord] = field(default_factory=list)

    @property
    def regrets(self) -> np.ndarray:
        return np.array([r.regret for r in self.records])


@dataclass(frozen=True)
class ExperimentConfig:
    objective: str
    acquisition: str = "mpes"
    tabular_path: str | None = None
    pool_size: int | None = None
    acquisition_config: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    fit_config: FitConfig = field(default_factory=FitConfig)
    oracle_config: OracleConfig = field(default_factory=OracleConfig)
    initial_observations: int = 5
    iterations: int = 25
    repetitions: int = 10
    base_seed: int = 0
    output_dir: str = "runs/experiment"
    workers: int = 1

    def __post_init__(self):
        if self.acquisition not in ACQUISITIONS:
            raise ValueError(f"acquisition must be one of {ACQUISITIONS}")
        if self.initial_observations < 1 or self.repetitions < 1 or self.iterations < 0:
            raise ValueError("need >= 1 initial observation and repetition, >= 0 iterations")
        ac, oc = self.acquisition_config, self.oracle_config
        if self.acquisition == "ei-pair" and ac.query_size != 2:
            raise ValueError("the improvement-pair baseline is pairwise only")
        if (ac.query_size, ac.k) != (oc.query_size, oc.k):
            raise ValueError("acquisition and oracle must agree on query size and k")
        ties_possible = oc.delta_true > 0 and not oc.convert_ties
        if ties_possible and not self.fit_config.learn_delta:
            raise ValueError("tie-generating oracles need learn_delta in the fit config")
        if self.acquisition == "mpes" and ac.use_ties != ties_possible:
            raise ValueError("use_ties must match whether the oracle can produce ties")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["acquisition_config"] = asdict(self.acquisition_config)
        d["fit_config"] = asdict(self.fit_config)
        d["oracle_config"] = asdict(self.oracle_config)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        for key, typ in (
            ("acquisition_config", AcquisitionConfig),
            ("fit_config", FitConfig),
            ("oracle_config", OracleConfig),
        ):
            if key in d and isinstance(d[key], dict):
                d[key] = typ(**d[key])
        return cls(**d)


def build_objective(config: ExperimentConfig) -> tuple[Objective, CandidatePool]:
    if config.objective == "tabular":
        if not config.tabular_path:
            raise ValueError("tabular objective needs tabular_path")
        pool, objective = load_tabular(config.tabular_path)
        return objective, pool
    factory = {
        "forrester": Objective.forrester,
        "six-hump-camel": Objective.six_hump_camel,
        "hartmann3": Objective.hartmann3,
    }.get(config.objective)
    if factory is None:
        raise ValueError(f"unknown objective {config.objective!r}")
    objective = factory()
    return objective, default_pool(objective, config.pool_size, seed=config.base_seed)


def immediate_regret(
    objective: Objective,
    best_index: int,
    pool: CandidatePool,
    pool_values: np.ndarray | None = None,
) -> float:
    """Gap to the best pool point; rank distance from the top for tabular objectives."""
    values = objective.pool_values(pool) if pool_values is None else pool_values
    if not 0 <= best_index < len(pool):
        raise ValueError("best-guess index out of range")
    if objective.kind == "tabular":
        return float(np.sum(values > values[best_index]))
    return float(values.max() - values[best_index])


def _fit_and_belief(observations, pool, fit_config):
    result = fit(observations, pool, fit_config)
    coords = pool.points[list(result.observed_indices)]
    belief = posterior_predict(result.kernel, coords, result.posterior, pool.points)
    return result, belief


def _params_line(run: int, iteration: int, result: FitResult, loglik: float) -> dict:
    return {
        "run": run,
        "iteration": iteration,
        "observed_indices": list(result.observed_indices),
        "mean": result.posterior.mean.tolist(),
        "chol_factor": result.posterior.chol_factor.tolist(),
        "signal_variance": result.kernel.signal_variance,
        "length_scales": result.kernel.length_scales.tolist(),
        "delta": result.delta,
        "log_likelihood_at_mean": loglik,
    }


def _loglik_at_mean(observations, result: FitResult) -> float:
    f_map = dict(zip(result.observed_indices, result.posterior.mean))
    return dataset_log_likelihood(observations, f_map, result.delta)


def run_single_repetition(
    run: int,
    config: ExperimentConfig,
    objective: Objective,
    pool: CandidatePool,
    run_dir: Path,
) -> RegretTrace:
    """One seeded repetition; writes its own observation, parameter, and regret files."""
    seed = config.base_seed + run
    rng = np.random.default_rng(seed)
    fit_config = replace(config.fit_config, seed=seed)
    pool_values = objective.pool_values(pool)
    run_dir.mkdir(parents=True, exist_ok=True)

    trace = RegretTrace(run=run, seed=seed)
    started = time.perf_counter()
    with (
        open(run_dir / "observations.jsonl", "w", encoding="utf-8") as obs_file,
        open(run_dir / "params.jsonl", "w", encoding="utf-8") as params_file,
        open(run_dir / "regrets.csv", "w", encoding="utf-8") as regret_file,
    ):
        regret_file.write("run,iteration,regret,best_index,best_regret\n")

        def persist_observation(obs: Observation, iteration: int):
            line = {"run": run, "iteration": iteration, "seed": seed, **obs.to_dict()}
            obs_file.write(json.dumps(line) + "\n")
            obs_file.flush()

        def record(iteration: int, result: FitResult, belief, observations):
            guess = best_guess(pool, belief)
            regret = immediate_regret(objective, guess, pool, pool_values)
            trace.records.append(
                IterationRecord(iteration, guess, regret, time.perf_counter() - started)
            )
            params_file.write(
                json.dumps(_params_line(run, iteration, result, _loglik_at_mean(observations, result)))
                + "\n"
            )
            params_file.flush()
            best_so_far = min(r.regret for r in trace.records)
            regret_file.write(f"{run},{iteration},{regret!r},{guess},{best_so_far!r}\n")
            regret_file.flush()
            return guess

        observations: list[Observation] = []
        for _ in range(config.initial_observations):
            query = select_query_random(pool, config.acquisition_config, rng)
            obs = generate_observation(objective, pool, query, config.oracle_config, rng)
            observations.append(obs)
            persist_observation(obs, 0)
        result, belief = _fit_and_belief(observations, pool, fit_config)
        record(0, result, belief, observations)

        for iteration in range(1, config.iterations + 1):
            if config.acquisition == "mpes":
                query = select_query_mpes(
                    pool, belief, config.acquisition_config, result.delta, rng
                )
            elif config.acquisition == "random":
                query = select_query_random(pool, config.acquisition_config, rng)
            else:
                query = select_query_ei_pair(pool, belief, rng)
            obs = generate_observation(objective, pool, query, config.oracle_config, rng)
            observations.append(obs)
            persist_observation(obs, iteration)
            result, belief = _fit_and_belief(observations, pool, fit_config)
            record(iteration, result, belief, observations)
    return trace


def run_bo(config: ExperimentConfig) -> list[RegretTrace]:
    """Run every repetition, persist everything, and render the regret figure.

    Repetitions are independent (seed = base seed + repetition) and run in
    parallel when ``workers`` > 1; outputs are identical either way. A
    repetition that fails is recorded in the manifest and skipped; the rest
    proceed. Returns the traces of the successful repetitions in run order.
    """
    objective, pool = build_objective(config)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    def run_one(run: int):
        return run_single_repetition(run, config, objective, pool, out / f"run_{run:03d}")

    outcomes: dict[int, RegretTrace | Exception] = {}
    if config.workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=config.workers) as executor:
            futures = {
                run: executor.submit(
                    run_single_repetition, run, config, objective, pool, out / f"run_{run:03d}"
                )
                for run in range(config.repetitions)
            }
            for run, future in futures.items():
                try:
                    outcomes[run] = future.result()
                except Exception as exc:  # noqa: BLE001 - repetition isolation is the contract
                    outcomes[run] = exc
    else:
        for run in range(config.repetitions):
            try:
                outcomes[run] = run_one(run)
            except Exception as exc:  # noqa: BLE001 - repetition isolation is the contract
                outcomes[run] = exc

    traces: list[RegretTrace] = []
    run_reports = []
    for run in range(config.repetitions):
        outcome = outcomes[run]
        if isinstance(outcome, Exception):
            run_reports.append(
                {
                    "run": run,
                    "seed": config.base_seed + run,
                    "status": "failed",
                    "error": f"{type(outcome).__name__}: {outcome}",
                    "traceback": "".join(
                        traceback.format_exception(type(outcome), outcome, outcome.__traceback__)
                    ),
                }
            )
        else:
            traces.append(outcome)
            run_reports.append({"run": run, "seed": config.base_seed + run, "status": "ok"})

    merged = out / "regrets.csv"
    with open(merged, "w", encoding="utf-8") as handle:
        handle.write("run,iteration,regret,best_index,best_regret\n")
        for report in run_reports:
            if report["status"] != "ok":
                continue
            run_csv = out / f"run_{report['run']:03d}" / "regrets.csv"
            lines = run_csv.read_text(encoding="utf-8").splitlines()[1:]
            handle.write("".join(line + "\n" for line in lines))

    manifest = {
        "library_version": __version__,
        "config": config.to_dict(),
        "pool": {
            "size": len(pool),
            "dim": pool.dim,
            "bounds": pool.bounds.tolist(),
        },
        "runs": run_reports,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")

    if traces:
        from .plots import render_regret_curves

        render_regret_curves({config.acquisition: traces}, out / "regret_curve.png")
    return traces


def replay(output_dir) -> dict:
    """Integrity check: recompute each persisted log-likelihood from the logs.

    For every fitted-parameter line, the observations up to that iteration are
    rescored under the persisted posterior mean and threshold; the result must
    match the persisted value to 1e-9.
    """
    out = Path(output_dir)
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    checks = 0
    worst = 0.0
    failures = []
    for report in manifest["runs"]:
        if report["status"] != "ok":
            continue
        run_dir = out / f"run_{report['run']:03d}"
        observations = []
        with open(run_dir / "observations.jsonl", encoding="utf-8") as handle:
            for line in handle:
                rec = json.loads(line)
                observations.append((rec["iteration"], Observation.from_dict(rec)))
        with open(run_dir / "params.jsonl", encoding="utf-8") as handle:
            for line in handle:
                rec = json.loads(line)
                dataset = [o for it, o in observations if it <= rec["iteration"]]
                f_map = dict(zip(rec["observed_indices"], rec["mean"]))
                value = dataset_log_likelihood(dataset, f_map, rec["delta"])
                diff = abs(value - rec["log_likelihood_at_mean"])
                worst = max(worst, diff)
                checks += 1
                if diff > 1e-9:
                    failures.append(
                        {"run": report["run"], "iteration": rec["iteration"], "diff": diff}
                    )
    return {"checks": checks, "max_abs_diff": worst, "failures": failures, "ok": not failures}

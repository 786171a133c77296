"""Command-line interface: run experiments, replay logs, score pairs, serve sessions."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np


def _load_config(path: str):
    from .harness import ExperimentConfig

    with open(path, encoding="utf-8") as handle:
        data = json.load(handle)
    seed_override = os.environ.get("PREFOPT_SEED")
    if seed_override is not None:
        data["base_seed"] = int(seed_override)
    return ExperimentConfig.from_dict(data)


def _cmd_run(args) -> int:
    from .harness import run_bo

    config = _load_config(args.config)
    traces = run_bo(config)
    print(f"completed {len(traces)}/{config.repetitions} repetitions -> {config.output_dir}")
    for trace in traces:
        final = trace.records[-1]
        print(
            f"  run {trace.run} (seed {trace.seed}): "
            f"final regret {final.regret:.4f}, best index {final.best_index}"
        )
    return 0


def _cmd_replay(args) -> int:
    from .harness import replay

    report = replay(args.dir)
    status = "ok" if report["ok"] else "FAILED"
    print(
        f"replay {status}: {report['checks']} checks, "
        f"max |difference| {report['max_abs_diff']:.3e}"
    )
    for failure in report["failures"]:
        print(f"  mismatch run {failure['run']} iteration {failure['iteration']}")
    return 0 if report["ok"] else 1


def _fit_state(config):
    """Initial observations plus one fit, as the scoring context."""
    from .acquisition import build_maximizer_set, select_query_random
    from .gp import posterior_predict
    from .harness import build_objective
    from .inference import fit
    from .oracle import generate_observation

    objective, pool = build_objective(config)
    rng = np.random.default_rng(config.base_seed)
    observations = []
    for _ in range(config.initial_observations):
        query = select_query_random(pool, config.acquisition_config, rng)
        observations.append(generate_observation(objective, pool, query, config.oracle_config, rng))
    result = fit(observations, pool, config.fit_config)
    coords = pool.points[list(result.observed_indices)]
    belief = posterior_predict(result.kernel, coords, result.posterior, pool.points)
    xstar = build_maximizer_set(
        pool, belief, config.acquisition_config.maximizer_set_size,
        config.acquisition_config.mc_samples, rng,
    )
    return pool, result, belief, xstar, rng


def _cmd_score(args) -> int:
    from .acquisition import mpes_score

    config = _load_config(args.config)
    pool, result, belief, xstar, rng = _fit_state(config)

    if args.grid:
        from .acquisition import _score_candidates_shared
        from .gp import sample_joint
        from .plots import render_score_grid

        M = len(pool)
        pairs = [(i, j) for i in range(M) for j in range(i + 1, M)]
        samples = sample_joint(belief, config.acquisition_config.mc_samples, rng)
        scores = _score_candidates_shared(
            samples, np.asarray(pairs), xstar.indices, config.acquisition_config, result.delta
        )
        grid = np.zeros((M, M))
        for (i, j), s in zip(pairs, scores):
            grid[i, j] = grid[j, i] = s
        out = Path(args.grid)
        render_score_grid(grid, out, bounds=pool.bounds.tolist() if pool.dim == 1 else None)
        np.savetxt(out.with_suffix(".csv"), grid, delimiter=",")
        print(f"score grid -> {out} (+ .csv)")
        return 0

    i, j = args.pair
    union = [i, j] + [int(x) for x in xstar.indices if int(x) not in (i, j)]
    coords = pool.points[list(result.observed_indices)]
    from .gp import posterior_predict

    belief_union = posterior_predict(result.kernel, coords, result.posterior, pool.points[union])
    value = mpes_score(
        (i, j), xstar, belief_union, config.acquisition_config, result.delta, rng
    )
    print(f"{value:.6f}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(storage_dir=args.storage_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="prefopt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a JSON config")
    p_run.add_argument("--config", required=True)
    p_run.set_defaults(func=_cmd_run)

    p_replay = sub.add_parser("replay", help="integrity-check a finished experiment directory")
    p_replay.add_argument("--dir", required=True)
    p_replay.set_defaults(func=_cmd_replay)

    p_score = sub.add_parser("score", help="score one query pair (or a full pair grid)")
    p_score.add_argument("--config", required=True)
    p_score.add_argument("--pair", nargs=2, type=int, metavar=("I", "J"))
    p_score.add_argument("--grid", help="render the full pairwise score grid to this PNG path")
    p_score.set_defaults(func=_cmd_score)

    p_serve = sub.add_parser("serve", help="start the interactive session service")
    p_serve.add_argument("--port", type=int, default=8000)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--storage-dir", default=None)
    p_serve.set_defaults(func=_cmd_serve)

    args = parser.parse_args(argv)
    if args.command == "score" and not args.grid and args.pair is None:
        parser.error("score needs --pair I J or --grid PATH")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

"""HTTP session service for human-in-the-loop preference optimization.

Each session wraps one candidate pool and one engine configuration. The
service proposes a query, the client submits the human's ranking, winner, or
tie, and the posterior and best guess refresh synchronously. Observation logs
use the same JSON-lines format as the experiment harness, and the fit path is
the harness's fit path, so a session log replays to the identical best guess.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .acquisition import AcquisitionConfig, best_guess, select_query_mpes
from .gp import CandidatePool, GaussianBelief, KernelParams, kernel_matrix, posterior_predict
from .inference import FitConfig, fit
from .likelihood import RANKING, TIE, WINNER, Observation
from .oracle import load_tabular

AWAITING = "awaiting_response"
COMPUTING = "computing"
IDLE = "idle"


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class Session:
    id: str
    pool: CandidatePool
    utilities: np.ndarray | None
    acquisition: AcquisitionConfig
    fit_config: FitConfig
    rng: np.random.Generator
    log_path: Path | None
    observations: list[Observation] = field(default_factory=list)
    pending: tuple[int, ...] | None = None
    status: str = IDLE
    best_index: int | None = None
    posterior_mean: np.ndarray | None = None
    posterior_var: np.ndarray | None = None
    delta: float = 0.0
    lock: threading.Lock = field(default_factory=threading.Lock)

    def prior_belief(self) -> GaussianBelief:
        widths = np.where(self.pool.widths > 0, self.pool.widths, 1.0)
        kernel = KernelParams(1.0, 0.2 * widths)
        cov = kernel_matrix(kernel, self.pool.points)
        return GaussianBelief(np.zeros(len(self.pool)), cov)

    def refit(self):
        result = fit(self.observations, self.pool, self.fit_config)
        coords = self.pool.points[list(result.observed_indices)]
        belief = posterior_predict(result.kernel, coords, result.posterior, self.pool.points)
        self.best_index = best_guess(self.pool, belief)
        self.posterior_mean = belief.mean
        self.posterior_var = belief.marginal_variance()
        self.delta = result.delta
        return belief

    def current_belief(self) -> GaussianBelief:
        if not self.observations:
            return self.prior_belief()
        return self.refit()

    def item_payload(self, index: int) -> dict:
        label = self.pool.labels[index] if self.pool.labels else f"point {index}"
        return {
            "index": index,
            "label": label,
            "features": self.pool.points[index].tolist(),
            "image_uri": label if label.startswith(("http://", "https://")) else None,
        }

    def state_payload(self) -> dict:
        return {
            "id": self.id,
            "status": self.status,
            "pool_size": len(self.pool),
            "query_size": self.acquisition.query_size,
            "k": self.acquisition.k,
            "tie_allowed": self.acquisition.use_ties,
            "pending": list(self.pending) if self.pending else None,
            "best_guess": self.item_payload(self.best_index) if self.best_index is not None else None,
            "posterior": (
                {
                    "mean": self.posterior_mean.tolist(),
                    "variance": self.posterior_var.tolist(),
                }
                if self.posterior_mean is not None
                else None
            ),
            "history": [obs.to_dict() for obs in self.observations],
        }

    def persist(self, obs: Observation):
        if self.log_path is None:
            return
        line = {"session": self.id, "iteration": len(self.observations), **obs.to_dict()}
        with open(self.log_path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(line) + "\n")


def _pool_from_payload(payload: dict) -> tuple[CandidatePool, np.ndarray | None]:
    if "tabular_csv" in payload:
        try:
            import tempfile

            with tempfile.NamedTemporaryFile(
                "w", suffix=".csv", delete=False, encoding="utf-8"
            ) as handle:
                handle.write(payload["tabular_csv"])
                tmp = handle.name
            pool, objective = load_tabular(tmp)
        except ValueError as exc:
            raise ApiError(400, "invalid_csv", str(exc)) from exc
        return pool, objective.utilities
    spec = payload.get("pool")
    if not spec or "points" not in spec:
        raise ApiError(400, "invalid_pool", "provide pool.points or tabular_csv")
    try:
        points = np.asarray(spec["points"], dtype=float)
        if "bounds" in spec and spec["bounds"]:
            bounds = np.asarray(spec["bounds"], dtype=float)
        else:
            pts = np.atleast_2d(points)
            bounds = np.stack([pts.min(axis=0), pts.max(axis=0)], axis=1)
        labels = tuple(spec["labels"]) if spec.get("labels") else None
        pool = CandidatePool(points, bounds, labels)
    except (ValueError, TypeError) as exc:
        raise ApiError(400, "invalid_pool", str(exc)) from exc
    utilities = spec.get("utilities")
    return pool, (np.asarray(utilities, dtype=float) if utilities is not None else None)


def create_app(storage_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="prefopt sessions")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions: dict[str, Session] = {}
    storage = Path(storage_dir) if storage_dir else None
    if storage:
        storage.mkdir(parents=True, exist_ok=True)

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"code": exc.code, "message": exc.message})

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise ApiError(404, "unknown_session", f"no session {session_id}")
        return session

    @app.post("/sessions")
    def create_session(payload: dict):
        pool, utilities = _pool_from_payload(payload)
        cfg = payload.get("config", {})
        try:
            acquisition = AcquisitionConfig(
                query_size=int(cfg.get("query_size", 2)),
                k=int(cfg.get("k", 1)),
                maximizer_set_size=int(cfg.get("maximizer_set_size", 20)),
                mc_samples=int(cfg.get("mc_samples", 1000)),
                candidate_queries=int(cfg.get("candidate_queries", 500)),
                use_ties=bool(cfg.get("use_ties", False)),
                seed=int(cfg.get("seed", 0)),
            )
            fit_cfg = FitConfig(
                mc_samples_per_step=int(cfg.get("fit", {}).get("mc_samples_per_step", 32)),
                steps=int(cfg.get("fit", {}).get("steps", 600)),
                learning_rate=float(cfg.get("fit", {}).get("learning_rate", 0.02)),
                learn_delta=acquisition.use_ties,
                seed=int(cfg.get("seed", 0)),
            )
        except ValueError as exc:
            raise ApiError(400, "invalid_config", str(exc)) from exc
        if len(pool) < acquisition.query_size:
            raise ApiError(400, "invalid_config", "pool smaller than the query size")
        session_id = uuid.uuid4().hex[:12]
        session = Session(
            id=session_id,
            pool=pool,
            utilities=utilities,
            acquisition=acquisition,
            fit_config=fit_cfg,
            rng=np.random.default_rng(acquisition.seed),
            log_path=(storage / f"session_{session_id}.jsonl") if storage else None,
        )
        sessions[session_id] = session
        return {"id": session_id, "status": session.status, "pool_size": len(pool)}

    @app.get("/sessions/{session_id}/query")
    def next_query(session_id: str):
        session = get_session(session_id)
        with session.lock:
            if session.pending is not None:
                raise ApiError(409, "pending_query", "answer the current query first")
            session.status = COMPUTING
            try:
                belief = session.current_belief()
                query = select_query_mpes(
                    session.pool, belief, session.acquisition, session.delta, session.rng
                )
            finally:
                session.status = IDLE
            session.pending = tuple(int(i) for i in query)
            session.status = AWAITING
            return {
                "indices": list(session.pending),
                "items": [session.item_payload(i) for i in session.pending],
                "k": session.acquisition.k,
                "tie_allowed": session.acquisition.use_ties,
            }

    @app.post("/sessions/{session_id}/observation")
    def submit_observation(session_id: str, payload: dict):
        session = get_session(session_id)
        with session.lock:
            if session.pending is None:
                raise ApiError(409, "no_pending_query", "request a query before answering")
            kind = payload.get("kind")
            winners = payload.get("winners", [])
            query = session.pending
            if kind == TIE:
                if not session.acquisition.use_ties:
                    raise ApiError(400, "tie_not_allowed", "this session uses strict preferences")
                obs = Observation.tie(query)
            elif kind in (RANKING, WINNER):
                try:
                    winners = [int(w) for w in winners]
                except (TypeError, ValueError) as exc:
                    raise ApiError(400, "invalid_outcome", "winners must be indices") from exc
                if not set(winners) <= set(query):
                    raise ApiError(400, "invalid_outcome", "winners must come from the pending query")
                expected = 1 if kind == WINNER else session.acquisition.k
                if len(winners) != expected:
                    raise ApiError(
                        400, "invalid_outcome", f"expected {expected} ordered winners, got {len(winners)}"
                    )
                try:
                    if kind == WINNER and session.acquisition.use_ties:
                        obs = Observation.winner(query, winners[0])
                    else:
                        obs = Observation.ranking(query, winners)
                except ValueError as exc:
                    raise ApiError(400, "invalid_outcome", str(exc)) from exc
            else:
                raise ApiError(400, "invalid_outcome", "kind must be ranking, winner, or tie")
            session.observations.append(obs)
            session.pending = None
            session.status = COMPUTING
            try:
                session.refit()
            except Exception as exc:
                session.observations.pop()
                session.status = AWAITING
                session.pending = query
                raise ApiError(400, "refit_failed", str(exc)) from exc
            session.status = IDLE
            session.persist(obs)
            return {
                "ok": True,
                "observations": len(session.observations),
                "best_guess": session.item_payload(session.best_index),
            }

    @app.get("/sessions/{session_id}/state")
    def get_state(session_id: str):
        session = get_session(session_id)
        with session.lock:
            return session.state_payload()

    return app

// Dashboard state machine. Pure transitions so tests drive it without a DOM.

import type { Item, OutcomeRecord, PosteriorSummary, QueryView } from "./api.js";

export type DashboardState = {
  sessionId: string | null;
  poolSize: number;
  query: QueryView | null;
  selection: number[];
  tieSelected: boolean;
  history: OutcomeRecord[];
  bestGuess: Item | null;
  posterior: PosteriorSummary | null;
  error: string | null;
  phase: "idle" | "loading" | "awaiting_response" | "submitting";
  needsRefetch: boolean;
};

export function initialState(): DashboardState {
  return {
    sessionId: null,
    poolSize: 0,
    query: null,
    selection: [],
    tieSelected: false,
    history: [],
    bestGuess: null,
    posterior: null,
    error: null,
    phase: "idle",
    needsRefetch: false,
  };
}

export type Action =
  | { type: "session_created"; sessionId: string; poolSize: number }
  | { type: "query_requested" }
  | { type: "query_received"; query: QueryView }
  | { type: "item_toggled"; index: number }
  | { type: "tie_toggled" }
  | { type: "submit_started" }
  | { type: "submit_succeeded"; bestGuess: Item; record: OutcomeRecord }
  | { type: "submit_failed"; message: string; conflict: boolean }
  | { type: "state_refreshed"; posterior: PosteriorSummary | null; history: OutcomeRecord[] }
  | { type: "request_failed"; message: string }
  | { type: "error_dismissed" };

export function reduce(state: DashboardState, action: Action): DashboardState {
  switch (action.type) {
    case "session_created":
      return {
        ...initialState(),
        sessionId: action.sessionId,
        poolSize: action.poolSize,
      };
    case "query_requested":
      return { ...state, phase: "loading", error: null, needsRefetch: false };
    case "query_received":
      return {
        ...state,
        query: action.query,
        selection: [],
        tieSelected: false,
        phase: "awaiting_response",
        error: null,
      };
    case "item_toggled": {
      if (!state.query || state.phase !== "awaiting_response") return state;
      const present = state.selection.includes(action.index);
      const selection = present
        ? state.selection.filter((i) => i !== action.index)
        : state.selection.length < state.query.k
          ? [...state.selection, action.index]
          : state.selection;
      return { ...state, selection, tieSelected: false };
    }
    case "tie_toggled":
      if (!state.query?.tie_allowed) return state;
      return { ...state, tieSelected: !state.tieSelected, selection: [] };
    case "submit_started":
      return { ...state, phase: "submitting", error: null };
    case "submit_succeeded":
      return {
        ...state,
        query: null,
        selection: [],
        tieSelected: false,
        bestGuess: action.bestGuess,
        history: [...state.history, action.record],
        phase: "idle",
        error: null,
      };
    case "submit_failed":
      // a conflict means the pending query is stale: drop it and refetch; any
      // other failure keeps the user's ordering so nothing is lost
      if (action.conflict) {
        return {
          ...state,
          query: null,
          selection: [],
          tieSelected: false,
          phase: "idle",
          error: action.message,
          needsRefetch: true,
        };
      }
      return { ...state, phase: "awaiting_response", error: action.message };
    case "state_refreshed":
      return { ...state, posterior: action.posterior, history: [...action.history] };
    case "request_failed":
      return { ...state, phase: state.query ? "awaiting_response" : "idle", error: action.message };
    case "error_dismissed":
      return { ...state, error: null };
    default:
      return state;
  }
}

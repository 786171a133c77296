// DOM rendering and event wiring for the elicitation dashboard.

import { ApiError, SessionClient } from "./api.js";
import type { DashboardState } from "./state.js";
import { initialState, reduce, type Action } from "./state.js";
import { buildOutcomePayload, canSubmit } from "./validation.js";

export class Dashboard {
  private state: DashboardState = initialState();
  private client: SessionClient;

  constructor(
    private root: HTMLElement,
    baseUrl: string,
  ) {
    this.client = new SessionClient(baseUrl);
  }

  dispatch(action: Action) {
    this.state = reduce(this.state, action);
    this.render();
  }

  async createSession(csv: string, config: { query_size: number; use_ties: boolean }) {
    try {
      const created = await this.client.createSession({
        tabular_csv: csv,
        config: { ...config, k: 1 },
      });
      this.dispatch({
        type: "session_created",
        sessionId: created.id,
        poolSize: created.pool_size,
      });
      await this.fetchQuery();
    } catch (error) {
      this.dispatch({ type: "request_failed", message: describe(error) });
    }
  }

  async fetchQuery() {
    if (!this.state.sessionId) return;
    this.dispatch({ type: "query_requested" });
    try {
      const query = await this.client.nextQuery(this.state.sessionId);
      this.dispatch({ type: "query_received", query });
    } catch (error) {
      this.dispatch({ type: "request_failed", message: describe(error) });
    }
  }

  async submit() {
    const { query, selection, tieSelected, sessionId } = this.state;
    if (!query || !sessionId) return;
    const validated = buildOutcomePayload(query, selection, tieSelected);
    if (!validated.ok) {
      this.dispatch({ type: "submit_failed", message: validated.reason, conflict: false });
      return;
    }
    this.dispatch({ type: "submit_started" });
    try {
      const ack = await this.client.submitObservation(sessionId, validated.payload);
      this.dispatch({
        type: "submit_succeeded",
        bestGuess: ack.best_guess,
        record: { query: query.indices, ...validated.payload },
      });
      const snapshot = await this.client.getState(sessionId);
      this.dispatch({
        type: "state_refreshed",
        posterior: snapshot.posterior,
        history: snapshot.history,
      });
      await this.fetchQuery();
    } catch (error) {
      const conflict = error instanceof ApiError && error.status === 409;
      this.dispatch({ type: "submit_failed", message: describe(error), conflict });
      if (conflict) await this.fetchQuery();
    }
  }

  render() {
    const s = this.state;
    this.root.innerHTML = "";
    if (s.error) {
      const banner = el("div", "error-banner", s.error);
      const retry = el("button", "", "dismiss");
      retry.addEventListener("click", () => this.dispatch({ type: "error_dismissed" }));
      banner.appendChild(retry);
      this.root.appendChild(banner);
    }
    if (!s.sessionId) return;

    if (s.query) {
      const panel = el("section", "query-panel");
      panel.appendChild(
        el(
          "h2",
          "",
          s.query.k === 1 ? "Which do you prefer?" : `Order your top ${s.query.k}`,
        ),
      );
      const cards = el("div", "cards");
      for (const item of s.query.items) {
        const card = el("button", "card");
        const position = s.selection.indexOf(item.index);
        if (position >= 0) card.classList.add("selected");
        if (item.image_uri) {
          const img = document.createElement("img");
          img.src = item.image_uri;
          img.alt = item.label;
          card.appendChild(img);
        }
        card.appendChild(el("div", "card-label", item.label));
        card.appendChild(
          el("div", "card-features", item.features.map((x) => x.toPrecision(3)).join(", ")),
        );
        if (position >= 0) card.appendChild(el("div", "card-rank", `#${position + 1}`));
        card.addEventListener("click", () =>
          this.dispatch({ type: "item_toggled", index: item.index }),
        );
        cards.appendChild(card);
      }
      panel.appendChild(cards);
      if (s.query.tie_allowed) {
        const tie = el("button", "tie-button", s.tieSelected ? "Tie ✓" : "Too close to call");
        tie.addEventListener("click", () => this.dispatch({ type: "tie_toggled" }));
        panel.appendChild(tie);
      }
      const submit = el("button", "submit-button", "Submit") as HTMLButtonElement;
      submit.disabled = !canSubmit(s.query, s.selection, s.tieSelected) || s.phase === "submitting";
      submit.addEventListener("click", () => void this.submit());
      panel.appendChild(submit);
      this.root.appendChild(panel);
    } else if (s.needsRefetch || s.phase === "idle") {
      const next = el("button", "next-button", "Next question");
      next.addEventListener("click", () => void this.fetchQuery());
      this.root.appendChild(next);
    } else if (s.phase === "loading") {
      this.root.appendChild(el("div", "status", "choosing the next question..."));
    }

    const dash = el("section", "dashboard");
    if (s.bestGuess) {
      const best = el("div", "best-card");
      best.appendChild(el("h3", "", "Current best guess"));
      best.appendChild(el("div", "best-label", s.bestGuess.label));
      best.appendChild(
        el("div", "best-features", s.bestGuess.features.map((x) => x.toPrecision(3)).join(", ")),
      );
      dash.appendChild(best);
    }
    if (s.posterior && s.posterior.mean.length > 1) {
      dash.appendChild(sparkline(s.posterior.mean));
    }
    const history = el("div", "history");
    history.appendChild(el("h3", "", `Answers (${s.history.length})`));
    const list = el("ol", "history-list");
    for (const record of s.history) {
      const text =
        record.kind === "tie"
          ? `tie among [${record.query.join(", ")}]`
          : `[${record.query.join(", ")}] → ${record.winners.join(" ≻ ")}`;
      list.appendChild(el("li", "", text));
    }
    history.appendChild(list);
    dash.appendChild(history);
    this.root.appendChild(dash);
  }
}

function el(tag: string, className = "", text = ""): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function sparkline(values: number[]): HTMLElement {
  const canvas = document.createElement("canvas");
  canvas.width = 360;
  canvas.height = 64;
  canvas.className = "sparkline";
  const ctx = canvas.getContext("2d");
  if (ctx) {
    const lo = Math.min(...values);
    const hi = Math.max(...values);
    const span = hi - lo || 1;
    ctx.strokeStyle = "#2563eb";
    ctx.beginPath();
    values.forEach((v, i) => {
      const x = (i / (values.length - 1)) * (canvas.width - 8) + 4;
      const y = canvas.height - 6 - ((v - lo) / span) * (canvas.height - 12);
      if (i === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    });
    ctx.stroke();
  }
  return canvas;
}

function describe(error: unknown): string {
  if (error instanceof ApiError) return `${error.code}: ${error.message}`;
  if (error instanceof Error) return `network error: ${error.message} (retry below)`;
  return String(error);
}

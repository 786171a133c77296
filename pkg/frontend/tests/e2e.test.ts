// End-to-end smoke test against the live Python session service: a scripted
// client answers every query consistently with a known utility ordering and
// must land the dashboard best guess on the true argmax within 15 queries.

import { spawn, type ChildProcess } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiError, SessionClient } from "../src/api.js";
import { buildOutcomePayload } from "../src/validation.js";

const PORT = 8731;
const BASE = `http://127.0.0.1:${PORT}`;

const POOL_SIZE = 20;
const XS = Array.from({ length: POOL_SIZE }, (_, i) => i / (POOL_SIZE - 1));
const UTILITIES = XS.map((x) => -Math.pow(x - 0.684, 2) * 10 + 3);
const TRUE_ARGMAX = UTILITIES.indexOf(Math.max(...UTILITIES));
const CSV =
  ["x1,utility,label"]
    .concat(XS.map((x, i) => `${x},${UTILITIES[i]},item${i}`))
    .join("\n") + "\n";

let service: ChildProcess;

async function waitForService(): Promise<void> {
  for (let attempt = 0; attempt < 120; attempt++) {
    try {
      const response = await fetch(`${BASE}/sessions/none/state`);
      if (response.status === 404) return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 500));
  }
  throw new Error("session service did not come up");
}

beforeAll(async () => {
  service = spawn(
    "python3",
    ["-m", "uvicorn", "--factory", "prefopt.service:create_app", "--port", String(PORT)],
    { stdio: "ignore", cwd: ".." },
  );
  await waitForService();
}, 90_000);

afterAll(() => {
  service?.kill();
});

describe("scripted elicitation session", () => {
  it("finds the true argmax within 15 consistent answers", async () => {
    const client = new SessionClient(BASE);
    const created = await client.createSession({
      tabular_csv: CSV,
      config: {
        query_size: 2,
        k: 1,
        seed: 2,
        mc_samples: 500,
        candidate_queries: 150,
        fit: { steps: 300, mc_samples_per_step: 32 },
      },
    });
    expect(created.pool_size).toBe(POOL_SIZE);

    let matched = -1;
    for (let round = 0; round < 15; round++) {
      const query = await client.nextQuery(created.id);
      const winner = query.indices.reduce((a, b) =>
        (UTILITIES[a] ?? -Infinity) >= (UTILITIES[b] ?? -Infinity) ? a : b,
      );
      const validated = buildOutcomePayload(query, [winner], false);
      expect(validated.ok).toBe(true);
      if (!validated.ok) throw new Error(validated.reason);
      const ack = await client.submitObservation(created.id, validated.payload);
      if (ack.best_guess.index === TRUE_ARGMAX) {
        matched = round;
        break;
      }
    }
    expect(matched, "best guess never reached the true argmax").toBeGreaterThanOrEqual(0);

    const state = await client.getState(created.id);
    expect(state.best_guess?.index).toBe(TRUE_ARGMAX);
    expect(state.history.length).toBe(matched + 1);
  }, 240_000);

  it("surfaces structural errors inline without corrupting the session", async () => {
    const client = new SessionClient(BASE);
    const created = await client.createSession({
      tabular_csv: CSV,
      config: {
        query_size: 2,
        k: 1,
        seed: 3,
        mc_samples: 300,
        candidate_queries: 80,
        fit: { steps: 200, mc_samples_per_step: 24 },
      },
    });
    const query = await client.nextQuery(created.id);

    // the client-side validator refuses to build these payloads at all
    expect(buildOutcomePayload(query, [999], false).ok).toBe(false);
    expect(buildOutcomePayload(query, [], true).ok).toBe(false);

    // force the raw payloads through anyway: the service rejects each with a
    // coded error and the pending query survives untouched
    await expect(
      client.submitObservation(created.id, { kind: "ranking", winners: [999] }),
    ).rejects.toMatchObject({ status: 400, code: "invalid_outcome" });
    await expect(
      client.submitObservation(created.id, { kind: "tie", winners: [] }),
    ).rejects.toMatchObject({ status: 400, code: "tie_not_allowed" });

    const state = await client.getState(created.id);
    expect(state.pending).toEqual(query.indices);
    expect(state.history).toEqual([]);

    // a valid submission still goes through after the rejected attempts
    const winner = query.indices[0]!;
    const validated = buildOutcomePayload(query, [winner], false);
    if (!validated.ok) throw new Error(validated.reason);
    const ack = await client.submitObservation(created.id, validated.payload);
    expect(ack.ok).toBe(true);
    expect(ack.observations).toBe(1);

    // double-answering the same (now consumed) query conflicts
    await expect(
      client.submitObservation(created.id, validated.payload),
    ).rejects.toMatchObject({ status: 409 });
  }, 120_000);

  it("maps unknown sessions to a coded 404", async () => {
    const client = new SessionClient(BASE);
    try {
      await client.getState("missing");
      expect.unreachable("expected an ApiError");
    } catch (error) {
      expect(error).toBeInstanceOf(ApiError);
      expect((error as ApiError).status).toBe(404);
      expect((error as ApiError).code).toBe("unknown_session");
    }
  });
});

import { describe, expect, it } from "vitest";

import type { QueryView } from "../src/api.js";
import { buildOutcomePayload, canSubmit, toggleSelection } from "../src/validation.js";

function query(overrides: Partial<QueryView> = {}): QueryView {
  return {
    indices: [3, 7, 11, 14],
    items: [3, 7, 11, 14].map((index) => ({
      index,
      label: `item${index}`,
      features: [index / 14],
      image_uri: null,
    })),
    k: 1,
    tie_allowed: false,
    ...overrides,
  };
}

describe("buildOutcomePayload", () => {
  it("accepts a single pick for pairwise questions", () => {
    const result = buildOutcomePayload(query(), [7], false);
    expect(result).toEqual({ ok: true, payload: { kind: "ranking", winners: [7] } });
  });

  it("uses the winner kind when ties are in play", () => {
    const result = buildOutcomePayload(query({ tie_allowed: true }), [3], false);
    expect(result).toEqual({ ok: true, payload: { kind: "winner", winners: [3] } });
  });

  it("requires exactly k ordered items", () => {
    const q = query({ k: 2 });
    expect(buildOutcomePayload(q, [3], false).ok).toBe(false);
    expect(buildOutcomePayload(q, [3, 7, 11], false).ok).toBe(false);
    const result = buildOutcomePayload(q, [11, 3], false);
    expect(result).toEqual({ ok: true, payload: { kind: "ranking", winners: [11, 3] } });
  });

  it("rejects items outside the query", () => {
    const result = buildOutcomePayload(query(), [99], false);
    expect(result.ok).toBe(false);
    if (!result.ok) expect(result.reason).toContain("99");
  });

  it("rejects duplicated items", () => {
    expect(buildOutcomePayload(query({ k: 2 }), [3, 3], false).ok).toBe(false);
  });

  it("rejects ties when the session disallows them", () => {
    const result = buildOutcomePayload(query(), [], true);
    expect(result.ok).toBe(false);
  });

  it("accepts a tie when allowed and nothing is ordered", () => {
    const q = query({ tie_allowed: true });
    expect(buildOutcomePayload(q, [], true)).toEqual({
      ok: true,
      payload: { kind: "tie", winners: [] },
    });
    expect(buildOutcomePayload(q, [3], true).ok).toBe(false);
  });
});

describe("canSubmit", () => {
  it("is false without a query", () => {
    expect(canSubmit(null, [], false)).toBe(false);
  });

  it("tracks payload validity", () => {
    expect(canSubmit(query(), [], false)).toBe(false);
    expect(canSubmit(query(), [3], false)).toBe(true);
  });
});

describe("toggleSelection", () => {
  it("appends up to k and removes on second click", () => {
    let selection: number[] = [];
    selection = toggleSelection(selection, 3, 2);
    selection = toggleSelection(selection, 7, 2);
    expect(selection).toEqual([3, 7]);
    expect(toggleSelection(selection, 11, 2)).toEqual([3, 7]); // capped
    expect(toggleSelection(selection, 3, 2)).toEqual([7]);
  });
});

// Client-side mirror of the service's structural contracts. A payload built
// through buildOutcomePayload can never be rejected by the service for
// structural reasons (only for state conflicts).

import type { OutcomePayload, QueryView } from "./api.js";

export type ValidationResult =
  | { ok: true; payload: OutcomePayload }
  | { ok: false; reason: string };

export function buildOutcomePayload(
  query: QueryView,
  selection: number[],
  tieSelected: boolean,
): ValidationResult {
  if (tieSelected) {
    if (!query.tie_allowed) {
      return { ok: false, reason: "ties are not allowed in this session" };
    }
    if (selection.length > 0) {
      return { ok: false, reason: "clear the ordering before declaring a tie" };
    }
    return { ok: true, payload: { kind: "tie", winners: [] } };
  }
  if (selection.length !== query.k) {
    return {
      ok: false,
      reason: `order exactly ${query.k} item${query.k === 1 ? "" : "s"} (${selection.length} selected)`,
    };
  }
  if (new Set(selection).size !== selection.length) {
    return { ok: false, reason: "ordered items must be distinct" };
  }
  const members = new Set(query.indices);
  for (const index of selection) {
    if (!members.has(index)) {
      return { ok: false, reason: `item ${index} is not part of the current query` };
    }
  }
  const kind = query.tie_allowed && query.k === 1 ? "winner" : "ranking";
  return { ok: true, payload: { kind, winners: [...selection] } };
}

export function canSubmit(query: QueryView | null, selection: number[], tie: boolean): boolean {
  if (!query) return false;
  return buildOutcomePayload(query, selection, tie).ok;
}

// Toggle an item in the ordered selection: absent -> appended (capped at k),
// present -> removed, preserving the order of the rest.
export function toggleSelection(selection: number[], index: number, k: number): number[] {
  if (selection.includes(index)) {
    return selection.filter((i) => i !== index);
  }
  if (selection.length >= k) {
    return selection;
  }
  return [...selection, index];
}

/**
 * Scenario store: named what-if runs with their request and cached response,
 * persisted client-side so comparisons survive a reload. The service stays
 * stateless; the browser owns scenario history.
 */

import type { ForecastResponse, ScenarioRequest } from "./api.js";

export interface Scenario {
  name: string;
  request: ScenarioRequest;
  response: ForecastResponse;
  createdAt: string;
}

const STORAGE_KEY = "mixforge.scenarios.v1";

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export class ScenarioStore {
  private scenarios: Scenario[] = [];

  constructor(private readonly storage: StorageLike) {
    const raw = storage.getItem(STORAGE_KEY);
    if (raw) {
      try {
        const parsed = JSON.parse(raw);
        if (Array.isArray(parsed)) this.scenarios = parsed as Scenario[];
      } catch {
        this.scenarios = []; // corrupted storage: start fresh
      }
    }
  }

  list(): readonly Scenario[] {
    return this.scenarios;
  }

  get(name: string): Scenario | undefined {
    return this.scenarios.find((s) => s.name === name);
  }

  save(scenario: Scenario): void {
    const existing = this.scenarios.findIndex((s) => s.name === scenario.name);
    if (existing >= 0) this.scenarios[existing] = scenario;
    else this.scenarios.push(scenario);
    this.persist();
  }

  remove(name: string): void {
    this.scenarios = this.scenarios.filter((s) => s.name !== name);
    this.persist();
  }

  private persist(): void {
    this.storage.setItem(STORAGE_KEY, JSON.stringify(this.scenarios));
  }
}

/** Per-channel budget editor state; clamping happens here, not in the DOM. */
export interface BudgetState {
  channels: string[];
  reference: number[]; // per-channel totals the deviation lock is relative to
  current: number[];
  deviationLock: number | null; // e.g. 0.2 for +-20%, null = unlocked
}

export function makeBudgetState(channels: string[], reference: number[]): BudgetState {
  return {
    channels: [...channels],
    reference: [...reference],
    current: [...reference],
    deviationLock: null,
  };
}

export function channelBounds(state: BudgetState, index: number): [number, number] {
  const ref = state.reference[index] ?? 0;
  if (state.deviationLock === null) return [0, ref > 0 ? ref * 3 : 1];
  return [ref * (1 - state.deviationLock), ref * (1 + state.deviationLock)];
}

/** Set one channel's budget, clamped to the active bounds. */
export function setChannelBudget(state: BudgetState, index: number, value: number): BudgetState {
  const [lo, hi] = channelBounds(state, index);
  const clamped = Math.min(Math.max(value, lo), hi);
  const current = [...state.current];
  current[index] = clamped;
  return { ...state, current };
}

export function setDeviationLock(state: BudgetState, lock: number | null): BudgetState {
  const next = { ...state, deviationLock: lock };
  // re-clamp everything into the new bounds
  const current = next.current.map((v, i) => {
    const [lo, hi] = channelBounds(next, i);
    return Math.min(Math.max(v, lo), hi);
  });
  return { ...next, current };
}

export function resetToReference(state: BudgetState): BudgetState {
  return { ...state, current: [...state.reference] };
}

export function totalBudget(state: BudgetState): number {
  return state.current.reduce((acc, v) => acc + v, 0);
}

/** The service request this editor state describes (total + shares form). */
export function toScenarioRequest(
  state: BudgetState,
  start: string,
  end: string,
  draws = 300,
): ScenarioRequest {
  const total = totalBudget(state);
  if (total <= 0) return { start, end, total: 0, draws };
  return {
    start,
    end,
    total,
    shares: state.current.map((v) => v / total),
    draws,
  };
}

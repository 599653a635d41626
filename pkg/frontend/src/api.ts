/**
 * Typed client for the mixforge scenario service.
 *
 * Every payload is validated with zod before use, so the UI either renders
 * numbers that came from the service or surfaces a structured error — it
 * never invents model math locally.
 */

import { z } from "zod";

export const SummarySchema = z.object({
  version: z.string(),
  config_fingerprint: z.string(),
  channels: z.array(z.string()).min(1),
  cadence: z.enum(["daily", "weekly"]),
  training_range: z.tuple([z.string(), z.string()]),
  n_periods: z.number().int().positive(),
  posterior: z.object({
    carryover_mean: z.array(z.number()),
    saturation_mean: z.array(z.number()),
    coefficient_time_avg: z.array(z.number()),
    intercept_mean: z.number(),
    noise_scale_mean: z.number(),
  }),
  diagnostics: z.record(z.object({ rhat: z.number(), ess: z.number() })),
  reference: z.object({
    weekly_spend_mean: z.array(z.number()),
    historical_shares: z.array(z.number()),
  }),
});
export type ModelSummary = z.infer<typeof SummarySchema>;

export const ForecastResponseSchema = z.object({
  dates: z.array(z.string()),
  mean: z.array(z.number()),
  lo80: z.array(z.number()),
  hi80: z.array(z.number()),
  per_channel_mean: z.array(z.array(z.number())),
  total_budget: z.number().optional(),
});
export type ForecastResponse = z.infer<typeof ForecastResponseSchema>;

export const OptimizeResponseSchema = z.object({
  dates: z.array(z.string()),
  allocation: z.array(z.array(z.number())),
  total: z.number(),
  objective: z.number(),
  method: z.string(),
  iterations: z.number(),
  feasibility: z.object({
    budget_gap: z.number(),
    bounds_violation: z.number(),
    ok: z.boolean(),
  }),
  reference_allocation: z.array(z.array(z.number())).optional(),
});
export type OptimizeResponse = z.infer<typeof OptimizeResponseSchema>;

export interface ScenarioRequest {
  start: string;
  end: string;
  total?: number;
  shares?: number[];
  allocation?: number[][];
  draws?: number;
}

export interface OptimizeRequest {
  start: string;
  end: string;
  total: number;
  deviation_pct?: number;
  lower?: number[];
  upper?: number[];
  method?: "greedy" | "sqp";
}

/** Field-level messages from a 422, keyed for inline display. */
export class ValidationFailure extends Error {
  constructor(
    public readonly code: string,
    message: string,
    public readonly fields: { loc: string[]; message: string }[] = [],
    public readonly extra: Record<string, unknown> = {},
  ) {
    super(message);
  }
}

export class ServiceUnreachable extends Error {}

const ErrorBodySchema = z.object({
  code: z.string(),
  message: z.string(),
  fields: z.array(z.object({ loc: z.array(z.string()), message: z.string() })).optional(),
});

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, init);
    } catch (err) {
      throw new ServiceUnreachable(`service unreachable: ${String(err)}`);
    }
    const body = await response.json().catch(() => ({}));
    if (!response.ok) {
      // 422s carry {code, message, fields} either top-level or under detail
      const candidate = (body as { detail?: unknown }).detail ?? body;
      const parsed = ErrorBodySchema.safeParse(candidate);
      if (parsed.success) {
        throw new ValidationFailure(
          parsed.data.code,
          parsed.data.message,
          parsed.data.fields ?? [],
          candidate as Record<string, unknown>,
        );
      }
      throw new ValidationFailure("http_error", `service returned ${response.status}`);
    }
    return body;
  }

  async summary(): Promise<ModelSummary> {
    return SummarySchema.parse(await this.request("/model/summary"));
  }

  async forecast(req: ScenarioRequest): Promise<ForecastResponse> {
    return ForecastResponseSchema.parse(
      await this.request("/forecast", {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(req),
      }),
    );
  }

  async optimize(req: OptimizeRequest): Promise<OptimizeResponse> {
    return OptimizeResponseSchema.parse(
      await this.request("/optimize", {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(req),
      }),
    );
  }
}

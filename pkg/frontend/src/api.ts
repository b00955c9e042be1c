/** Thin client over the orchestrator HTTP API. */

import type { JobRecord, ReportDocument, ScenarioDocument, Violation } from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    public status: number,
    public violations: Violation[] = [],
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchFn: typeof fetch = fetch,
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  private async json<T>(path: string): Promise<T> {
    const response = await this.fetchFn(this.url(path));
    if (!response.ok) {
      throw new ApiError(`GET ${path} failed`, response.status);
    }
    return (await response.json()) as T;
  }

  getSchema(): Promise<unknown> {
    return this.json("/api/schema");
  }

  listJobs(status?: string): Promise<JobRecord[]> {
    const query = status ? `?status=${encodeURIComponent(status)}` : "";
    return this.json(`/api/jobs${query}`);
  }

  getJob(id: string): Promise<JobRecord> {
    return this.json(`/api/jobs/${encodeURIComponent(id)}`);
  }

  getResult(id: string): Promise<Record<string, unknown>> {
    return this.json(`/api/jobs/${encodeURIComponent(id)}/result`);
  }

  getReport(id: string): Promise<ReportDocument> {
    return this.json(`/api/jobs/${encodeURIComponent(id)}/report`);
  }

  eventsUrl(id: string): string {
    return this.url(`/api/jobs/${encodeURIComponent(id)}/events`);
  }

  async submitJob(document: ScenarioDocument, idempotencyKey?: string): Promise<JobRecord> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (idempotencyKey) headers["Idempotency-Key"] = idempotencyKey;
    const response = await this.fetchFn(this.url("/api/jobs"), {
      method: "POST",
      headers,
      body: JSON.stringify(document),
    });
    if (response.status === 422) {
      const body = await response.json();
      const violations: Violation[] = body?.detail?.violations ?? [];
      throw new ApiError("config rejected", 422, violations);
    }
    if (!response.ok) {
      throw new ApiError("job submission failed", response.status);
    }
    return (await response.json()) as JobRecord;
  }
}

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import type { ScenarioDocument } from "../src/types.js";

let client: ApiClient;
let close: () => Promise<void>;

beforeAll(async () => {
  const { startFixtureServer } = await import("./fixture-server.js");
  const server = await startFixtureServer();
  client = new ApiClient(`http://127.0.0.1:${server.port}`);
  close = server.close;
});

afterAll(async () => {
  await close();
});

const minimalDocument = (): ScenarioDocument => ({
  model: "scripted",
  config: {
    name: "console-submit",
    agents: [
      { name: "A", prompt: "You are A." },
      { name: "B", prompt: "You are B." },
    ],
    termination_condition: "STOP",
    output_variables: [],
  },
  num_runs: 1,
});

describe("API client", () => {
  it("fetches the config schema for the form builder", async () => {
    const schema = (await client.getSchema()) as any;
    expect(schema.properties.model.type).toBe("string");
    expect(schema.properties.config.properties.agents.minItems).toBe(2);
  });

  it("submits a job and sees it queued", async () => {
    const record = await client.submitJob(minimalDocument());
    expect(record.status).toBe("queued");
    expect(record.id).toBeTruthy();
  });

  it("surfaces server violations on 422", async () => {
    const bad = minimalDocument();
    bad.config.agents = [];
    await expect(client.submitJob(bad)).rejects.toMatchObject({
      status: 422,
      violations: [{ path: "agents", message: "agents list length < 2" }],
    });
  });

  it("reads job records, results, and reports", async () => {
    const record = await client.getJob("some-job");
    expect(record.total_episodes).toBe(3);
    const result = (await client.getResult("some-job")) as any;
    expect(result.runs).toHaveLength(3);
    const report = await client.getReport("exp1");
    expect(Object.keys(report.modes)).toHaveLength(4);
    await expect(client.getJob("missing-job")).rejects.toBeInstanceOf(ApiError);
  });
});

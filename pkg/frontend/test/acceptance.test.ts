/** Console acceptance: the full fixture suite with no backend present.
 *
 * - the example config round-trips through the schema-driven form,
 * - the monitor replays a recorded SSE log to completion,
 * - the results explorer gets 4 curves + 4 points + the frontier from a
 *   fixture report,
 * - no metric is recomputed client-side (chart data is the document's
 *   own arrays; the CSV download byte-matches the backend's).
 */

import { readFileSync } from "node:fs";
import { join, dirname } from "node:path";
import { fileURLToPath } from "node:url";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { cumulativeSeries, frontierPoints, scatterPoints } from "../src/charts.js";
import { reportToCsv } from "../src/csv.js";
import { applyEvent, initialMonitor, progressLabel } from "../src/monitor.js";
import {
  canonicalJson,
  documentToForm,
  formToDocument,
  validateDocument,
} from "../src/schema-form.js";
import { subscribe } from "../src/sse.js";
import type { ReportDocument, ScenarioDocument } from "../src/types.js";
import { startFixtureServer } from "./fixture-server.js";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

let base = "";
let client: ApiClient;
let close: () => Promise<void>;

beforeAll(async () => {
  const server = await startFixtureServer();
  base = `http://127.0.0.1:${server.port}`;
  client = new ApiClient(base);
  close = server.close;
});

afterAll(async () => {
  await close();
});

describe("console acceptance (fixture server only)", () => {
  it("form round-trips the example config", async () => {
    const schema = (await client.getSchema()) as any;
    expect(schema.properties).toBeTruthy(); // form is schema-driven
    const source: ScenarioDocument = JSON.parse(
      readFileSync(join(FIXTURES, "bike_negotiation.json"), "utf-8"),
    );
    expect(validateDocument(source)).toEqual([]);
    const roundTripped = formToDocument(documentToForm(source));
    const normalized = { ...source, config: { ...source.config, max_messages: 20 } };
    expect(canonicalJson(roundTripped)).toBe(canonicalJson(normalized));
  });

  it("monitor replays a recorded SSE log to completion", async () => {
    let state = initialMonitor(3);
    await subscribe(`${base}/api/jobs/fixture/events?close_after=4`, (message) => {
      state = applyEvent(state, message);
    }, { backoffMs: 5 });
    expect(state.status).toBe("done");
    expect(progressLabel(state)).toBe("3/3");
    expect(state.revisions).toHaveLength(3);
  });

  it("results explorer renders 4 curves + 4 points + frontier", async () => {
    const report: ReportDocument = await client.getReport("exp1");
    expect(cumulativeSeries(report, "buyer")).toHaveLength(4);
    expect(cumulativeSeries(report, "seller")).toHaveLength(4);
    expect(scatterPoints(report)).toHaveLength(4);
    expect(frontierPoints(report)).toHaveLength(101);
  });

  it("recomputes nothing client-side", async () => {
    const report: ReportDocument = await client.getReport("exp1");
    for (const line of cumulativeSeries(report, "buyer")) {
      expect(Object.is(line.values, report.modes[line.mode].cum_avg_buyer)).toBe(true);
    }
    expect(Object.is(frontierPoints(report), report.frontier)).toBe(true);
    const expectedCsv = readFileSync(join(FIXTURES, "report_fixture.csv"), "utf-8");
    expect(reportToCsv(report)).toBe(expectedCsv);
  });
});

/** Browser entry point: wires the API client, SSE monitor, schema-driven
 * config builder, and the results explorer onto the DOM. All numbers on
 * screen come from API documents; this file only renders them.
 */

import { ApiClient, ApiError } from "./api.js";
import { renderCumulativeChartSvg, renderSurplusScatterSvg, MODE_ORDER } from "./charts.js";
import { reportToCsv } from "./csv.js";
import {
  applyEvent,
  initialMonitor,
  progressFraction,
  progressLabel,
  type MonitorState,
} from "./monitor.js";
import {
  canonicalJson,
  documentToForm,
  fieldsFromSchema,
  formToDocument,
  validateDocument,
} from "./schema-form.js";
import { subscribe } from "./sse.js";
import type { JobRecord, ReportDocument, ScenarioDocument } from "./types.js";

const api = new ApiClient("");

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

function byId(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

// --- config builder ------------------------------------------------------

let builderDocument: ScenarioDocument | null = null;

async function initBuilder() {
  const schema = await api.getSchema();
  const host = byId("builder-fields");
  host.replaceChildren();
  const fields = fieldsFromSchema(schema).filter((field) =>
    ["model", "config.name", "config.termination_condition", "config.max_messages", "num_runs", "rng_seed"].includes(
      field.path,
    ),
  );
  for (const field of fields) {
    const row = el("label", { class: "field" });
    row.append(el("span", {}, field.title + (field.required ? " *" : "")));
    const input = el("input", {
      name: field.path,
      value: "",
      placeholder: field.description ?? "",
      type: field.type === "integer" || field.type === "number" ? "number" : "text",
    });
    row.append(input);
    host.append(row);
  }
  byId("builder-load-example").addEventListener("click", loadExample);
  byId("builder-validate").addEventListener("click", () => syncAndValidate());
  byId("builder-submit").addEventListener("click", submitFromBuilder);
  (byId("builder-json") as HTMLTextAreaElement).addEventListener("change", () => syncAndValidate());
}

async function loadExample() {
  const response = await fetch("./example-config.json");
  const doc = (await response.json()) as ScenarioDocument;
  setBuilderDocument(doc);
}

function setBuilderDocument(doc: ScenarioDocument) {
  builderDocument = doc;
  (byId("builder-json") as HTMLTextAreaElement).value = canonicalJson(doc);
  const form = documentToForm(doc);
  const values: Record<string, string> = {
    model: form.model,
    "config.name": form.name,
    "config.termination_condition": form.terminationCondition,
    "config.max_messages": String(form.maxMessages),
    num_runs: String(form.numRuns),
    rng_seed: form.rngSeed === undefined ? "" : String(form.rngSeed),
  };
  for (const input of byId("builder-fields").querySelectorAll("input")) {
    input.value = values[input.name] ?? "";
  }
  syncAndValidate();
}

function syncAndValidate(): ScenarioDocument | null {
  const textarea = byId("builder-json") as HTMLTextAreaElement;
  let doc: ScenarioDocument;
  try {
    doc = JSON.parse(textarea.value);
  } catch (error) {
    renderViolations([{ path: "", message: `not valid JSON: ${error}` }]);
    return null;
  }
  for (const input of byId("builder-fields").querySelectorAll("input")) {
    const value = input.value;
    if (value === "") continue;
    const numeric = input.type === "number" ? Number(value) : value;
    switch (input.name) {
      case "model":
        doc.model = String(numeric);
        break;
      case "config.name":
        doc.config.name = String(numeric);
        break;
      case "config.termination_condition":
        doc.config.termination_condition = String(numeric);
        break;
      case "config.max_messages":
        doc.config.max_messages = Number(numeric);
        break;
      case "num_runs":
        doc.num_runs = Number(numeric);
        break;
      case "rng_seed":
        doc.rng_seed = Number(numeric);
        break;
    }
  }
  textarea.value = canonicalJson(doc);
  builderDocument = doc;
  renderViolations(validateDocument(doc).map((v) => ({ path: v.path, message: v.message })));
  return doc;
}

function renderViolations(violations: { path: string; message: string }[]) {
  const list = byId("builder-violations");
  list.replaceChildren();
  if (violations.length === 0) {
    list.append(el("li", { class: "ok" }, "config is valid"));
    return;
  }
  for (const violation of violations) {
    list.append(el("li", { class: "violation" }, `${violation.path}: ${violation.message}`));
  }
}

async function submitFromBuilder() {
  const doc = syncAndValidate();
  if (!doc) return;
  if (validateDocument(doc).length > 0) return;
  try {
    const record = await api.submitJob(doc);
    byId("builder-submit-result").textContent = `queued as ${record.id}`;
    await refreshJobs();
    openMonitor(record.id);
  } catch (error) {
    if (error instanceof ApiError && error.violations.length > 0) {
      renderViolations(error.violations);
    } else {
      byId("builder-submit-result").textContent = String(error);
    }
  }
}

// --- jobs list -------------------------------------------------------------

async function refreshJobs() {
  const jobs = await api.listJobs();
  const tbody = byId("jobs-body");
  tbody.replaceChildren();
  for (const job of jobs) {
    const row = el("tr");
    const open = el("a", { href: "#" }, job.id.slice(0, 8));
    open.addEventListener("click", (event) => {
      event.preventDefault();
      openMonitor(job.id);
    });
    const idCell = el("td");
    idCell.append(open);
    row.append(
      idCell,
      el("td", {}, job.config?.config?.name ?? ""),
      el("td", { class: `status-${job.status}` }, job.status),
      el("td", {}, `${job.progress}${job.total_episodes ? "/" + job.total_episodes : ""}`),
    );
    tbody.append(row);
  }
}

// --- monitor ---------------------------------------------------------------

let monitorAbort: AbortController | null = null;

function renderMonitor(state: MonitorState) {
  byId("monitor-status").textContent = state.status;
  byId("monitor-progress").textContent = progressLabel(state);
  const fraction = progressFraction(state);
  (byId("monitor-bar") as HTMLProgressElement).value = fraction ?? 0;
  const list = byId("monitor-revisions");
  list.replaceChildren();
  for (const revision of state.revisions) {
    const item = el("li", { class: "revision" });
    item.append(
      el("span", { class: "agent" }, revision.agent),
      el("span", { class: "episode" }, ` after episode ${revision.episodeIndex + 1}: `),
      el("ins", {}, revision.sentence),
    );
    list.append(item);
  }
}

async function openMonitor(jobId: string) {
  monitorAbort?.abort();
  monitorAbort = new AbortController();
  byId("monitor-job").textContent = jobId;
  const record = await api.getJob(jobId);
  let state = initialMonitor(record.total_episodes);
  renderMonitor(state);
  try {
    await subscribe(
      api.eventsUrl(jobId),
      (message) => {
        state = applyEvent(state, message);
        renderMonitor(state);
      },
      { signal: monitorAbort.signal },
    );
  } catch {
    // stream aborted (another job opened) or server unreachable
  }
  await Promise.all([renderTranscripts(jobId), renderResults(jobId), refreshJobs()]);
}

async function renderTranscripts(jobId: string) {
  const host = byId("monitor-transcripts");
  host.replaceChildren();
  let result: Record<string, unknown>;
  try {
    result = await api.getResult(jobId);
  } catch {
    return;
  }
  const runs = (result.runs ?? []) as { index: number; transcript: [string, string][] }[];
  for (const run of runs) {
    const block = el("details", { class: "episode" });
    block.append(el("summary", {}, `Episode ${run.index + 1}`));
    for (const [author, content] of run.transcript) {
      block.append(el("p", { class: "line" }, `${author}: ${content}`));
    }
    host.append(block);
  }
}

// --- results explorer --------------------------------------------------------

let lastReport: ReportDocument | null = null;
const enabledModes = new Set(MODE_ORDER);

function filteredReport(report: ReportDocument): ReportDocument {
  const modes: ReportDocument["modes"] = {};
  for (const [mode, bundle] of Object.entries(report.modes)) {
    if (enabledModes.has(mode)) modes[mode] = bundle;
  }
  return { modes, frontier: report.frontier };
}

function renderCharts() {
  if (!lastReport) return;
  const visible = filteredReport(lastReport);
  const which = (byId("results-series") as HTMLSelectElement).value as "buyer" | "seller";
  byId("chart-cumulative").innerHTML = renderCumulativeChartSvg(visible, which);
  byId("chart-scatter").innerHTML = renderSurplusScatterSvg(visible);
}

async function renderResults(jobId: string) {
  let report: ReportDocument;
  try {
    report = await api.getReport(jobId);
  } catch {
    byId("results-note").textContent = "no metrics report for this job";
    return;
  }
  byId("results-note").textContent = "";
  lastReport = report;
  const toggles = byId("results-toggles");
  toggles.replaceChildren();
  for (const mode of Object.keys(report.modes)) {
    const label = el("label", { class: "toggle" });
    const box = el("input", { type: "checkbox" }) as HTMLInputElement;
    box.checked = enabledModes.has(mode);
    box.addEventListener("change", () => {
      box.checked ? enabledModes.add(mode) : enabledModes.delete(mode);
      renderCharts();
    });
    label.append(box, el("span", {}, mode));
    toggles.append(label);
  }
  renderCharts();
  byId("results-csv").onclick = () => {
    const blob = new Blob([reportToCsv(report)], { type: "text/csv" });
    const link = el("a", { href: URL.createObjectURL(blob), download: "report.csv" });
    link.click();
  };
}

// --- boot -----------------------------------------------------------------

async function boot() {
  (byId("results-series") as HTMLSelectElement).addEventListener("change", renderCharts);
  byId("jobs-refresh").addEventListener("click", refreshJobs);
  await initBuilder();
  await refreshJobs();
  setInterval(refreshJobs, 5000);
}

boot().catch((error) => {
  document.body.prepend(el("pre", { class: "boot-error" }, String(error)));
});

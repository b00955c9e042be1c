/** Schema-driven config builder model.
 *
 * The form is generated from GET /api/schema, edits into a structured
 * FormState, and serializes back to the exact document shape the server
 * and CLI accept (canonical key order; unknown keys pass through).
 * Client-side validation mirrors the server's Violation paths so inline
 * errors line up with 422 responses.
 */

import type {
  AgentDocument,
  OutputVariableDocument,
  ScenarioDocument,
  Violation,
} from "./types.js";

export interface FieldDescriptor {
  path: string;
  title: string;
  type: "string" | "integer" | "number" | "boolean" | "enum";
  required: boolean;
  description?: string;
  options?: string[];
  minimum?: number;
  default?: unknown;
}

/** Flatten the scenario schema into top-level and per-section fields. */
export function fieldsFromSchema(schema: any): FieldDescriptor[] {
  const fields: FieldDescriptor[] = [];
  const walk = (node: any, path: string, requiredSet: Set<string>) => {
    for (const [key, prop] of Object.entries<any>(node.properties ?? {})) {
      const fullPath = path ? `${path}.${key}` : key;
      if (prop.type === "object" && prop.properties) {
        walk(prop, fullPath, new Set(prop.required ?? []));
        continue;
      }
      if (prop.type === "array") continue; // arrays get dedicated editors
      fields.push({
        path: fullPath,
        title: prop.title ?? key,
        type: prop.enum ? "enum" : (prop.type ?? "string"),
        required: requiredSet.has(key),
        description: prop.description,
        options: prop.enum,
        minimum: prop.minimum,
        default: prop.default,
      });
    }
  };
  walk(schema, "", new Set(schema.required ?? []));
  return fields;
}

export interface FormState {
  model: string;
  name: string;
  agents: AgentDocument[];
  terminationCondition: string;
  outputVariables: OutputVariableDocument[];
  maxMessages: number;
  numRuns: number;
  optimizationPrompt?: string;
  simulationContext?: Record<string, unknown>;
  rngSeed?: number;
  configExtras: Record<string, unknown>;
  extras: Record<string, unknown>;
}

const TOP_LEVEL_KEYS = new Set([
  "model",
  "config",
  "num_runs",
  "optimization_prompt",
  "simulation_context",
  "rng_seed",
]);
const CONFIG_KEYS = new Set([
  "name",
  "agents",
  "termination_condition",
  "output_variables",
  "max_messages",
]);

export const DEFAULT_MAX_MESSAGES = 20;

export function documentToForm(doc: ScenarioDocument): FormState {
  const config = doc.config ?? ({} as ScenarioDocument["config"]);
  const configExtras: Record<string, unknown> = {};
  for (const [key, value] of Object.entries(config)) {
    if (!CONFIG_KEYS.has(key)) configExtras[key] = value;
  }
  const extras: Record<string, unknown> = {};
  for (const [key, value] of Object.entries(doc)) {
    if (!TOP_LEVEL_KEYS.has(key)) extras[key] = value;
  }
  return {
    model: doc.model ?? "",
    name: config.name ?? "",
    agents: (config.agents ?? []).map((agent) => ({ ...agent })),
    terminationCondition: config.termination_condition ?? "",
    outputVariables: (config.output_variables ?? []).map((variable) => ({ ...variable })),
    maxMessages: config.max_messages ?? DEFAULT_MAX_MESSAGES,
    numRuns: doc.num_runs ?? 1,
    optimizationPrompt: doc.optimization_prompt,
    simulationContext: doc.simulation_context,
    rngSeed: doc.rng_seed,
    configExtras,
    extras,
  };
}

function agentToDocument(agent: AgentDocument): AgentDocument {
  const out: AgentDocument = {
    name: agent.name,
    description: agent.description ?? "",
    prompt: agent.prompt,
  };
  if (agent.utility_class !== undefined) out.utility_class = agent.utility_class;
  if (agent.strategy && Object.keys(agent.strategy).length > 0) out.strategy = agent.strategy;
  out.self_improve = agent.self_improve ?? false;
  if (agent.optimization_target !== undefined) out.optimization_target = agent.optimization_target;
  return out;
}

export function formToDocument(state: FormState): ScenarioDocument {
  const config: ScenarioDocument["config"] = {
    name: state.name,
    agents: state.agents.map(agentToDocument),
    termination_condition: state.terminationCondition,
    output_variables: state.outputVariables.map((variable) => ({ ...variable })),
    max_messages: state.maxMessages,
    ...state.configExtras,
  };
  const doc: ScenarioDocument = {
    model: state.model,
    config,
    num_runs: state.numRuns,
  };
  if (state.optimizationPrompt !== undefined) doc.optimization_prompt = state.optimizationPrompt;
  if (state.simulationContext !== undefined) doc.simulation_context = state.simulationContext;
  if (state.rngSeed !== undefined) doc.rng_seed = state.rngSeed;
  Object.assign(doc, state.extras);
  return doc;
}

/** Stable stringify with sorted keys: byte-comparable after key-order normalization. */
export function canonicalJson(value: unknown): string {
  return JSON.stringify(sortKeys(value), null, 2);
}

function sortKeys(value: unknown): unknown {
  if (Array.isArray(value)) return value.map(sortKeys);
  if (value && typeof value === "object") {
    const out: Record<string, unknown> = {};
    for (const key of Object.keys(value as object).sort()) {
      out[key] = sortKeys((value as Record<string, unknown>)[key]);
    }
    return out;
  }
  return value;
}

const IDENTIFIER_RE = /^[A-Za-z_][A-Za-z0-9_]*$/;
const VARIABLE_TYPES = new Set(["Number", "Boolean", "String"]);

/** Mirror of the server-side validation; same paths, same messages. */
export function validateDocument(doc: ScenarioDocument): Violation[] {
  const violations: Violation[] = [];
  const config = doc.config ?? ({} as ScenarioDocument["config"]);
  const agents = config.agents ?? [];

  if (agents.length < 2) {
    violations.push({ path: "agents", message: "agents list length < 2" });
  }
  const seen = new Set<string>();
  agents.forEach((agent, index) => {
    const path = `agents[${index}]`;
    if (!agent.name) {
      violations.push({ path: `${path}.name`, message: "agent name must be non-empty" });
    } else if (seen.has(agent.name)) {
      violations.push({ path: `${path}.name`, message: `duplicate agent name '${agent.name}'` });
    }
    seen.add(agent.name);
    for (const [key, value] of Object.entries(agent.strategy ?? {})) {
      if (typeof value === "string") {
        if (!value) {
          violations.push({
            path: `${path}.strategy.${key}`,
            message: "strategy strings must be non-empty",
          });
        }
      } else if (typeof value === "number" && !Number.isFinite(value)) {
        violations.push({
          path: `${path}.strategy.${key}`,
          message: "strategy numbers must be finite",
        });
      }
    }
  });

  if (!Number.isInteger(doc.num_runs) || doc.num_runs < 1) {
    violations.push({ path: "num_runs", message: "num_runs must be >= 1" });
  }
  const maxMessages = config.max_messages ?? DEFAULT_MAX_MESSAGES;
  if (!Number.isInteger(maxMessages) || maxMessages < 2) {
    violations.push({ path: "max_messages", message: "max_messages must be >= 2" });
  }
  if (!config.termination_condition) {
    violations.push({
      path: "termination_condition",
      message: "termination marker must be non-empty",
    });
  }

  const seenVariables = new Set<string>();
  (config.output_variables ?? []).forEach((variable, index) => {
    const path = `output_variables[${index}]`;
    if (!IDENTIFIER_RE.test(variable.name ?? "")) {
      violations.push({ path: `${path}.name`, message: `invalid identifier '${variable.name}'` });
    }
    if (seenVariables.has(variable.name)) {
      violations.push({
        path: `${path}.name`,
        message: `duplicate output variable '${variable.name}'`,
      });
    }
    seenVariables.add(variable.name);
    if (!VARIABLE_TYPES.has(variable.type)) {
      violations.push({ path: `${path}.type`, message: "type must be Number|Boolean|String" });
    }
  });

  return violations;
}

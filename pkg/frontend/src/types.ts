/** Shapes of the documents served by the orchestrator API. */

export interface Violation {
  path: string;
  message: string;
}

export type JobStatus = "queued" | "running" | "done" | "failed";

export interface JobRecord {
  id: string;
  status: JobStatus;
  submitted_at: number;
  started_at: number | null;
  finished_at: number | null;
  progress: number;
  total_episodes: number | null;
  result_ref: string | null;
  error: string | null;
  attempts: number;
  requeues: number;
  lease_expires_at: number | null;
  user_tag: string | null;
  config: ScenarioDocument;
}

/** One bundle of per-mode metrics inside a report document. */
export interface ModeBundle {
  cum_avg_buyer: number[];
  cum_avg_seller: number[];
  avg_buyer_ss: number;
  avg_seller_ss: number;
  no_deal_count: number;
  unclaimed: number;
}

export interface ReportDocument {
  modes: Record<string, ModeBundle>;
  frontier: [number, number][];
}

export interface AgentDocument {
  name: string;
  description?: string;
  prompt: string;
  utility_class?: string;
  strategy?: Record<string, number | string | boolean>;
  self_improve?: boolean;
  optimization_target?: boolean;
  [key: string]: unknown;
}

export interface OutputVariableDocument {
  name: string;
  type: string;
  description?: string;
  optional?: boolean;
  [key: string]: unknown;
}

export interface ScenarioDocument {
  model: string;
  config: {
    name: string;
    agents: AgentDocument[];
    termination_condition: string;
    output_variables: OutputVariableDocument[];
    max_messages?: number;
    [key: string]: unknown;
  };
  num_runs: number;
  optimization_prompt?: string;
  simulation_context?: Record<string, unknown>;
  rng_seed?: number;
  [key: string]: unknown;
}

export interface RevisionNote {
  agent: string;
  episodeIndex: number;
  sentence: string;
}

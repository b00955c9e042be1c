/** Live job monitor state: a pure reducer over the SSE event stream.
 *
 * Everything shown in the monitor panel (status, episode counter,
 * revision list) is derived from server events alone.
 */

import type { SseMessage } from "./sse.js";
import type { JobStatus, RevisionNote } from "./types.js";

export interface MonitorState {
  status: JobStatus | "connecting";
  episodesDone: number;
  totalEpisodes: number | null;
  revisions: RevisionNote[];
  warnings: string[];
  lastSeq: number;
  terminal: boolean;
  error: string | null;
}

export function initialMonitor(totalEpisodes: number | null = null): MonitorState {
  return {
    status: "connecting",
    episodesDone: 0,
    totalEpisodes,
    revisions: [],
    warnings: [],
    lastSeq: 0,
    terminal: false,
    error: null,
  };
}

export function applyEvent(state: MonitorState, message: SseMessage): MonitorState {
  const next: MonitorState = {
    ...state,
    revisions: [...state.revisions],
    warnings: [...state.warnings],
  };
  if (message.id !== null) next.lastSeq = message.id;
  let data: any = {};
  try {
    data = JSON.parse(message.data);
  } catch {
    return next;
  }
  switch (message.event) {
    case "status":
      next.status = data.status;
      if (data.status === "done" || data.status === "failed") next.terminal = true;
      if (data.error) next.error = data.error;
      break;
    case "episode":
      next.episodesDone += 1;
      break;
    case "revision":
      next.revisions.push({
        agent: data.agent,
        episodeIndex: data.episode_index,
        sentence: data.sentence,
      });
      break;
    case "warning":
      next.warnings.push(data.message ?? message.data);
      break;
  }
  return next;
}

export function progressLabel(state: MonitorState): string {
  const total = state.totalEpisodes;
  return total === null ? String(state.episodesDone) : `${state.episodesDone}/${total}`;
}

export function progressFraction(state: MonitorState): number | null {
  if (state.totalEpisodes === null || state.totalEpisodes === 0) return null;
  return Math.min(1, state.episodesDone / state.totalEpisodes);
}

export function elapsedSeconds(
  submittedAt: number,
  finishedAt: number | null,
  now: number = Date.now() / 1000,
): number {
  return Math.max(0, (finishedAt ?? now) - submittedAt);
}

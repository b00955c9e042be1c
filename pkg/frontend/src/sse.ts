/** Server-sent-events client over fetch streaming.
 *
 * Works in the browser and under node (both expose fetch with readable
 * bodies), which keeps the monitor logic testable against a fixture
 * server. Reconnects resume from the last seen sequence number via the
 * Last-Event-ID header, so an interrupted stream never drops or repeats
 * events.
 */

export interface SseMessage {
  id: number | null;
  event: string;
  data: string;
}

/** Incremental parser for the id/event/data block format. */
export class SseParser {
  private buffer = "";

  push(chunk: string): SseMessage[] {
    this.buffer += chunk;
    const messages: SseMessage[] = [];
    let boundary = this.buffer.indexOf("\n\n");
    while (boundary >= 0) {
      const block = this.buffer.slice(0, boundary);
      this.buffer = this.buffer.slice(boundary + 2);
      const message = parseBlock(block);
      if (message) messages.push(message);
      boundary = this.buffer.indexOf("\n\n");
    }
    return messages;
  }

  end(): SseMessage[] {
    const rest = this.buffer;
    this.buffer = "";
    const message = parseBlock(rest);
    return message ? [message] : [];
  }
}

function parseBlock(block: string): SseMessage | null {
  let id: number | null = null;
  let event = "message";
  const data: string[] = [];
  for (const line of block.split("\n")) {
    if (!line || line.startsWith(":")) continue;
    const colon = line.indexOf(":");
    if (colon < 0) continue;
    const field = line.slice(0, colon);
    const value = line.slice(colon + 1).replace(/^ /, "");
    if (field === "id") {
      const parsed = Number.parseInt(value, 10);
      id = Number.isNaN(parsed) ? null : parsed;
    } else if (field === "event") {
      event = value;
    } else if (field === "data") {
      data.push(value);
    }
  }
  if (data.length === 0 && id === null) return null;
  return { id, event, data: data.join("\n") };
}

export interface SubscribeOptions {
  lastEventId?: number;
  fetchFn?: typeof fetch;
  /** Stop once this message arrives (defaults to terminal status events). */
  isTerminal?: (message: SseMessage) => boolean;
  maxReconnects?: number;
  backoffMs?: number;
  signal?: AbortSignal;
}

export function isTerminalStatus(message: SseMessage): boolean {
  if (message.event !== "status") return false;
  try {
    const status = JSON.parse(message.data).status;
    return status === "done" || status === "failed";
  } catch {
    return false;
  }
}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

/**
 * Consume an SSE endpoint until a terminal message or the reconnect
 * budget runs out. Resolves with the number of messages delivered.
 */
export async function subscribe(
  url: string,
  onMessage: (message: SseMessage) => void,
  options: SubscribeOptions = {},
): Promise<number> {
  const fetchFn = options.fetchFn ?? fetch;
  const isTerminal = options.isTerminal ?? isTerminalStatus;
  const maxReconnects = options.maxReconnects ?? 5;
  let lastEventId = options.lastEventId ?? 0;
  let delivered = 0;

  for (let attempt = 0; attempt <= maxReconnects; attempt++) {
    if (attempt > 0) await sleep((options.backoffMs ?? 200) * attempt);
    const headers: Record<string, string> = { Accept: "text/event-stream" };
    if (lastEventId > 0) headers["Last-Event-ID"] = String(lastEventId);
    const response = await fetchFn(url, { headers, signal: options.signal });
    if (!response.ok) {
      throw new Error(`event stream failed: HTTP ${response.status}`);
    }
    if (!response.body) {
      throw new Error("event stream has no body");
    }

    const parser = new SseParser();
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let sawTerminal = false;
    for (;;) {
      const { done, value } = await reader.read();
      const messages = done
        ? parser.end()
        : parser.push(decoder.decode(value, { stream: true }));
      for (const message of messages) {
        if (message.id !== null && message.id <= lastEventId) continue; // replayed duplicate
        if (message.id !== null) lastEventId = message.id;
        delivered += 1;
        onMessage(message);
        if (isTerminal(message)) sawTerminal = true;
      }
      if (done) break;
    }
    if (sawTerminal) return delivered;
  }
  throw new Error("event stream ended before a terminal event; reconnects exhausted");
}

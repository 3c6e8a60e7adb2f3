// Shared test scaffolding: a scripted fetch and payload builders.

import type { FetchLike, Transcript, TurnResult } from "../src/api.js";

export type FetchHandler = (url: string, init?: RequestInit) => Response | Promise<Response>;

export interface ScriptedFetch {
  fetch: FetchLike;
  /** "METHOD url" per request, in order. */
  calls: string[];
}

/** A fetch that answers requests from a queue and records every call. */
export function queueFetch(handlers: FetchHandler[]): ScriptedFetch {
  const queue = [...handlers];
  const calls: string[] = [];
  const fetchImpl: FetchLike = async (url, init) => {
    calls.push(`${init?.method ?? "GET"} ${url}`);
    const handler = queue.shift();
    if (handler === undefined) {
      throw new Error(`no scripted response left for ${url}`);
    }
    return handler(url, init);
  };
  return { fetch: fetchImpl, calls };
}

export function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

export function sessionCreated(id: string): FetchHandler {
  return () => json(201, { session_id: id });
}

/** A rejected fetch, as the browser reports an unreachable host. */
export const networkFailure: FetchHandler = () => {
  throw new TypeError("fetch failed");
};

export function turnResult(n: number, overrides: Partial<TurnResult> = {}): TurnResult {
  return {
    response_text: `You should watch Movie 0${n}. (Because reasons ${n}.)`,
    explanation: { text: `Because reasons ${n}.`, source: "fallback" },
    recommendations: [
      {
        entity_id: 100 + n,
        name: `Movie 0${n}`,
        score: 10 - n,
        path: ["Movie 00 —has_genre→ Crime", `Crime —has_genre⁻¹→ Movie 0${n}`],
      },
    ],
    turn_index: n,
    ...overrides,
  };
}

export interface AgentEntry {
  text: string;
  explanation?: string;
}

/**
 * Build a transcript payload the way the service renders one: agent lines
 * carry the explanation as a parenthesized suffix, turn records carry only
 * the bare utterance.
 */
export function transcriptOf(pairs: Array<[string, AgentEntry | null]>): Transcript {
  const turns: Transcript["turns"] = [];
  const lines: string[] = [];
  let index = 1;
  for (const [seekerText, agent] of pairs) {
    turns.push({ turn_index: index, speaker: "seeker", text: seekerText });
    lines.push(`SEEKER: ${seekerText}`);
    index += 1;
    if (agent !== null) {
      turns.push({ turn_index: index, speaker: "recommender", text: agent.text });
      lines.push(
        agent.explanation !== undefined
          ? `AGENT: ${agent.text} (${agent.explanation})`
          : `AGENT: ${agent.text}`,
      );
      index += 1;
    }
  }
  return { turns, rendered: lines.join("\n") };
}

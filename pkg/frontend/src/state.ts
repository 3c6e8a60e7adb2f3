// Client-side conversation state.
//
// A UiSession mirrors one server session: the id, an append-only message
// list, and a pending flag that is true while exactly one turn request is in
// flight. Messages are never removed; a failed send keeps its user bubble and
// records the error on it so the view can offer a retry.

import type { Transcript, TurnResult } from "./api.js";

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

export interface RecommendationView {
  name: string;
  score: number;
  /** Rendered hop strings, e.g. "Heat —has_genre→ Crime". */
  path: string[];
}

export interface ChatMessage {
  role: "user" | "agent";
  text: string;
  /** Agent bubbles carry the explanation text; absence is shown as a badge. */
  explanation?: string;
  /** Hop strings for the top recommendation. */
  path?: string[];
  recommendations?: RecommendationView[];
  /** Error description when this user turn never got an agent reply. */
  failed?: string;
}

export interface UiSession {
  sessionId: string;
  messages: ChatMessage[];
  pending: boolean;
}

// ---------------------------------------------------------------------------
// Constructors and transitions
// ---------------------------------------------------------------------------

export function newSession(sessionId: string): UiSession {
  return { sessionId, messages: [], pending: false };
}

export function appendUser(session: UiSession, text: string): ChatMessage {
  const message: ChatMessage = { role: "user", text };
  session.messages.push(message);
  return message;
}

export function appendAgent(session: UiSession, result: TurnResult): ChatMessage {
  const top = result.recommendations[0];
  // response_text repeats the explanation as a parenthesized suffix; the
  // bubble shows the bare utterance (matching the stored transcript turn)
  // and the explanation gets its own styled element.
  const suffix = ` ${parenthesized(result.explanation.text)}`;
  const text = result.response_text.endsWith(suffix)
    ? result.response_text.slice(0, -suffix.length)
    : result.response_text;
  const message: ChatMessage = {
    role: "agent",
    text,
    explanation: result.explanation.text,
    path: top ? top.path : undefined,
    recommendations: result.recommendations.map((r) => ({
      name: r.name,
      score: r.score,
      path: r.path,
    })),
  };
  session.messages.push(message);
  return message;
}

/** The copyable form of an explanation, as it appears in transcripts. */
export function parenthesized(explanation: string): string {
  return `(${explanation})`;
}

// ---------------------------------------------------------------------------
// Server transcript reconciliation
// ---------------------------------------------------------------------------

/**
 * Rebuild the message list from the server transcript, which is authoritative.
 *
 * The turn records carry speaker and raw text; explanations live only in the
 * rendered form, where each agent line reads "AGENT: {text} ({explanation})".
 * Knowing the raw text makes the explanation recoverable even when the text
 * itself contains parentheses.
 */
export function transcriptToMessages(transcript: Transcript): ChatMessage[] {
  const lines = transcript.rendered === "" ? [] : transcript.rendered.split("\n");
  return transcript.turns.map((turn, i) => {
    if (turn.speaker === "seeker") {
      return { role: "user" as const, text: turn.text };
    }
    const message: ChatMessage = { role: "agent", text: turn.text };
    const line = lines[i];
    const prefix = `AGENT: ${turn.text} (`;
    if (line !== undefined && line.startsWith(prefix) && line.endsWith(")")) {
      message.explanation = line.slice(prefix.length, -1);
    }
    return message;
  });
}

// DOM builders for the chat surface.
//
// Pure functions from state to elements; no module-level DOM lookups here so
// the same builders serve the page and the tests. Styling hooks are class
// names: bubbles get "bubble user" / "bubble agent", the explanation text
// gets the "explanation" token and the stylesheet decides what that looks
// like.

import type { ChatMessage, RecommendationView } from "./state.js";
import { parenthesized } from "./state.js";

export interface BubbleHandlers {
  /** Called when the retry affordance on a failed user turn is clicked. */
  onRetry?: (message: ChatMessage) => void;
}

// ---------------------------------------------------------------------------
// Message bubbles
// ---------------------------------------------------------------------------

export function messageBubble(
  message: ChatMessage,
  handlers: BubbleHandlers = {},
): HTMLElement {
  const bubble = document.createElement("article");
  bubble.className = `bubble ${message.role}`;

  const text = document.createElement("p");
  text.className = "bubble-text";
  text.textContent = message.text;
  bubble.appendChild(text);

  if (message.role === "agent") {
    bubble.appendChild(explanationBlock(message));
    if (message.recommendations && message.recommendations.length > 0) {
      bubble.appendChild(recommendationList(message.recommendations));
    }
  }

  if (message.role === "user" && message.failed !== undefined) {
    bubble.classList.add("failed");
    bubble.appendChild(turnError(message, handlers));
  }

  return bubble;
}

/**
 * The explanation line of an agent bubble.
 *
 * Always present: a missing explanation is shown as an explicit badge rather
 * than silently dropped. A real explanation also carries a copy button whose
 * payload is the parenthesized transcript form.
 */
function explanationBlock(message: ChatMessage): HTMLElement {
  const block = document.createElement("div");
  block.className = "explanation-block";

  if (message.explanation === undefined) {
    const badge = document.createElement("span");
    badge.className = "badge no-explanation";
    badge.textContent = "no explanation";
    block.appendChild(badge);
    return block;
  }

  const line = document.createElement("span");
  line.className = "explanation";
  line.textContent = message.explanation;
  block.appendChild(line);

  const copy = document.createElement("button");
  copy.type = "button";
  copy.className = "copy-explanation";
  copy.textContent = "copy";
  copy.title = "Copy explanation";
  copy.dataset.copyText = parenthesized(message.explanation);
  copy.addEventListener("click", () => {
    void navigator.clipboard?.writeText(copy.dataset.copyText ?? "");
  });
  block.appendChild(copy);

  return block;
}

function turnError(message: ChatMessage, handlers: BubbleHandlers): HTMLElement {
  const note = document.createElement("div");
  note.className = "turn-error";

  const label = document.createElement("span");
  label.className = "turn-error-text";
  label.textContent = message.failed ?? "send failed";
  note.appendChild(label);

  const retry = document.createElement("button");
  retry.type = "button";
  retry.className = "retry";
  retry.textContent = "Retry";
  retry.addEventListener("click", () => handlers.onRetry?.(message));
  note.appendChild(retry);

  return note;
}

// ---------------------------------------------------------------------------
// Recommendation chips
// ---------------------------------------------------------------------------

function recommendationList(recommendations: RecommendationView[]): HTMLElement {
  const list = document.createElement("div");
  list.className = "recommendations";
  for (const rec of recommendations) {
    list.appendChild(pathChip(rec));
  }
  return list;
}

/**
 * One recommendation as a chip; clicking it toggles the reasoning path open,
 * one line per hop.
 */
export function pathChip(rec: RecommendationView): HTMLElement {
  const wrap = document.createElement("div");
  wrap.className = "path-chip";

  const toggle = document.createElement("button");
  toggle.type = "button";
  toggle.className = "path-chip-toggle";
  toggle.setAttribute("aria-expanded", "false");
  toggle.textContent = `${rec.name} · ${rec.score.toFixed(2)}`;
  wrap.appendChild(toggle);

  const hops = document.createElement("ul");
  hops.className = "path-hops";
  hops.hidden = true;
  if (rec.path.length === 0) {
    const empty = document.createElement("li");
    empty.className = "path-hop path-hop-empty";
    empty.textContent = "no graph connection";
    hops.appendChild(empty);
  } else {
    for (const hop of rec.path) {
      const item = document.createElement("li");
      item.className = "path-hop";
      item.textContent = hop;
      hops.appendChild(item);
    }
  }
  wrap.appendChild(hops);

  toggle.addEventListener("click", () => {
    hops.hidden = !hops.hidden;
    toggle.setAttribute("aria-expanded", String(!hops.hidden));
  });

  return wrap;
}

// ---------------------------------------------------------------------------
// Chat log
// ---------------------------------------------------------------------------

/** Re-render every bubble, oldest first; an empty session gets a hint. */
export function renderMessages(
  container: HTMLElement,
  messages: ChatMessage[],
  handlers: BubbleHandlers = {},
): void {
  container.replaceChildren();
  if (messages.length === 0) {
    const hint = document.createElement("p");
    hint.className = "empty-state";
    hint.textContent = "No turns yet. Say what you feel like watching.";
    container.appendChild(hint);
    return;
  }
  for (const message of messages) {
    container.appendChild(messageBubble(message, handlers));
  }
}

export function errorBanner(text: string, onRetry: () => void): HTMLElement {
  const banner = document.createElement("div");
  banner.className = "banner-error";

  const label = document.createElement("span");
  label.textContent = text;
  banner.appendChild(label);

  const retry = document.createElement("button");
  retry.type = "button";
  retry.className = "retry";
  retry.textContent = "Retry";
  retry.addEventListener("click", onRetry);
  banner.appendChild(retry);

  return banner;
}

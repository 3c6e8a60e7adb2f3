// Chat widget controller.
//
// Owns one UiSession against one ServiceClient and keeps the mounted DOM in
// sync with it. Rules enforced here:
//   - at most one turn request in flight; the input locks while pending
//   - the send control stays disabled while the input is empty
//   - a user bubble appears optimistically and is never removed; when the
//     request fails the bubble keeps the error and offers an inline retry
//   - a fresh transcript fetch replaces the local view, the server wins

import { ApiError, ServiceClient } from "./api.js";
import type { ChatMessage, UiSession } from "./state.js";
import { appendAgent, appendUser, newSession, transcriptToMessages } from "./state.js";
import { errorBanner, renderMessages } from "./view.js";

export interface ChatApp {
  /** Start a server session; on failure shows a banner with a retry. */
  init(): Promise<void>;
  /** Post one seeker turn. No-ops while pending, unstarted or blank. */
  send(text: string): Promise<void>;
  /** Re-pull the server transcript and rebuild the message list from it. */
  refresh(): Promise<void>;
  session(): UiSession | null;
}

export function createChatApp(mount: HTMLElement, client: ServiceClient): ChatApp {
  // ---- scaffold -----------------------------------------------------------
  mount.classList.add("chat-app");

  const bannerSlot = document.createElement("div");
  bannerSlot.className = "banner-slot";
  mount.appendChild(bannerSlot);

  const log = document.createElement("div");
  log.className = "chat-log";
  mount.appendChild(log);

  const form = document.createElement("form");
  form.className = "chat-form";
  const input = document.createElement("input");
  input.type = "text";
  input.className = "chat-input";
  input.placeholder = "Describe what you are in the mood for";
  input.disabled = true;
  const sendButton = document.createElement("button");
  sendButton.type = "submit";
  sendButton.className = "chat-send";
  sendButton.textContent = "Send";
  sendButton.disabled = true;
  form.appendChild(input);
  form.appendChild(sendButton);
  mount.appendChild(form);

  // ---- state --------------------------------------------------------------
  let session: UiSession | null = null;

  function updateControls(): void {
    const locked = session === null || session.pending;
    input.disabled = locked;
    sendButton.disabled = locked || input.value.trim() === "";
  }

  function render(): void {
    if (session !== null) {
      renderMessages(log, session.messages, { onRetry: (m) => void retry(m) });
    }
    updateControls();
  }

  function describeFailure(error: unknown): string {
    if (error instanceof ApiError) {
      if (error.status === 503) {
        return `not ready: ${error.message}`;
      }
      return `rejected: ${error.message}`;
    }
    return "service unreachable";
  }

  // ---- actions ------------------------------------------------------------
  async function init(): Promise<void> {
    bannerSlot.replaceChildren();
    try {
      const id = await client.createSession();
      session = newSession(id);
      render();
    } catch {
      session = null;
      bannerSlot.appendChild(
        errorBanner("Cannot reach the recommendation service.", () => void init()),
      );
      updateControls();
    }
  }

  async function deliver(message: ChatMessage): Promise<void> {
    if (session === null) {
      return;
    }
    const active = session;
    active.pending = true;
    render();
    try {
      const result = await client.postTurn(active.sessionId, message.text);
      appendAgent(active, result);
    } catch (error) {
      message.failed = describeFailure(error);
    } finally {
      active.pending = false;
      render();
    }
  }

  async function send(text: string): Promise<void> {
    const trimmed = text.trim();
    if (session === null || session.pending || trimmed === "") {
      return;
    }
    await deliver(appendUser(session, trimmed));
  }

  async function retry(message: ChatMessage): Promise<void> {
    if (session === null || session.pending || message.failed === undefined) {
      return;
    }
    message.failed = undefined;
    await deliver(message);
  }

  async function refresh(): Promise<void> {
    if (session === null) {
      return;
    }
    const transcript = await client.fetchTranscript(session.sessionId);
    session.messages = transcriptToMessages(transcript);
    render();
  }

  // ---- events -------------------------------------------------------------
  form.addEventListener("submit", (event) => {
    event.preventDefault();
    const text = input.value;
    input.value = "";
    void send(text);
  });
  input.addEventListener("input", updateControls);

  return { init, send, refresh, session: () => session };
}

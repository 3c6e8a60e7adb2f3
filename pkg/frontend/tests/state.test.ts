import { describe, expect, it } from "vitest";

import {
  appendAgent,
  appendUser,
  newSession,
  parenthesized,
  transcriptToMessages,
} from "../src/state.js";
import { transcriptOf, turnResult } from "./helpers.js";

describe("session state", () => {
  it("starts empty and not pending", () => {
    const session = newSession("s1");
    expect(session.sessionId).toBe("s1");
    expect(session.messages).toEqual([]);
    expect(session.pending).toBe(false);
  });

  it("appends user messages in order", () => {
    const session = newSession("s1");
    appendUser(session, "first");
    appendUser(session, "second");
    expect(session.messages.map((m) => m.text)).toEqual(["first", "second"]);
    expect(session.messages.every((m) => m.role === "user")).toBe(true);
  });

  it("strips the parenthesized explanation suffix from the agent text", () => {
    const session = newSession("s1");
    const message = appendAgent(session, turnResult(1));

    expect(message.text).toBe("You should watch Movie 01.");
    expect(message.explanation).toBe("Because reasons 1.");
    expect(message.path).toEqual([
      "Movie 00 —has_genre→ Crime",
      "Crime —has_genre⁻¹→ Movie 01",
    ]);
    expect(message.recommendations).toEqual([
      {
        name: "Movie 01",
        score: 9,
        path: ["Movie 00 —has_genre→ Crime", "Crime —has_genre⁻¹→ Movie 01"],
      },
    ]);
  });

  it("keeps the response text whole when no suffix matches", () => {
    const session = newSession("s1");
    const message = appendAgent(
      session,
      turnResult(1, { response_text: "I need a bit more to go on." }),
    );
    expect(message.text).toBe("I need a bit more to go on.");
    expect(message.explanation).toBe("Because reasons 1.");
  });

  it("leaves the top path unset when nothing was recommended", () => {
    const session = newSession("s1");
    const message = appendAgent(session, turnResult(1, { recommendations: [] }));
    expect(message.path).toBeUndefined();
    expect(message.recommendations).toEqual([]);
  });

  it("wraps explanations in parentheses for copying", () => {
    expect(parenthesized("shared genre")).toBe("(shared genre)");
  });
});

describe("transcriptToMessages", () => {
  it("maps speakers to roles and recovers explanations from rendered lines", () => {
    const transcript = transcriptOf([
      ["hi there", { text: "You should watch Heat.", explanation: "crime classic" }],
    ]);
    const messages = transcriptToMessages(transcript);

    expect(messages).toHaveLength(2);
    expect(messages[0]).toEqual({ role: "user", text: "hi there" });
    expect(messages[1].role).toBe("agent");
    expect(messages[1].text).toBe("You should watch Heat.");
    expect(messages[1].explanation).toBe("crime classic");
  });

  it("recovers the explanation even when the utterance contains parentheses", () => {
    const transcript = transcriptOf([
      ["hi", { text: "Try Heat (1995).", explanation: "strong crew overlap" }],
    ]);
    const messages = transcriptToMessages(transcript);
    expect(messages[1].text).toBe("Try Heat (1995).");
    expect(messages[1].explanation).toBe("strong crew overlap");
  });

  it("leaves the explanation unset when the rendered line has none", () => {
    const transcript = transcriptOf([["hi", { text: "Hello." }]]);
    const messages = transcriptToMessages(transcript);
    expect(messages[1].role).toBe("agent");
    expect(messages[1].explanation).toBeUndefined();
  });

  it("maps an empty transcript to no messages", () => {
    expect(transcriptToMessages({ turns: [], rendered: "" })).toEqual([]);
  });
});

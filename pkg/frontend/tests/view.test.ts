import { describe, expect, it, vi } from "vitest";

import type { ChatMessage } from "../src/state.js";
import { errorBanner, messageBubble, pathChip, renderMessages } from "../src/view.js";

function agentMessage(overrides: Partial<ChatMessage> = {}): ChatMessage {
  return {
    role: "agent",
    text: "You should watch Heat.",
    explanation: "closest match to what you described",
    ...overrides,
  };
}

describe("messageBubble", () => {
  it("renders a user bubble with its text", () => {
    const bubble = messageBubble({ role: "user", text: "something tense" });
    expect(bubble.classList.contains("bubble")).toBe(true);
    expect(bubble.classList.contains("user")).toBe(true);
    expect(bubble.querySelector(".bubble-text")?.textContent).toBe("something tense");
  });

  it("gives the explanation its own styled element, apart from the reply text", () => {
    const bubble = messageBubble(agentMessage());
    const explanation = bubble.querySelector(".explanation");

    expect(bubble.classList.contains("agent")).toBe(true);
    expect(explanation).not.toBeNull();
    expect(explanation?.textContent).toBe("closest match to what you described");
    expect(explanation?.closest(".bubble-text")).toBeNull();
  });

  it("offers the explanation for copying in its parenthesized form", () => {
    const bubble = messageBubble(agentMessage());
    const copy = bubble.querySelector<HTMLButtonElement>(".copy-explanation");
    expect(copy?.dataset.copyText).toBe("(closest match to what you described)");
    copy?.click();
  });

  it("shows an explicit badge when the agent message has no explanation", () => {
    const bubble = messageBubble(agentMessage({ explanation: undefined }));
    expect(bubble.querySelector(".explanation")).toBeNull();
    expect(bubble.querySelector(".badge.no-explanation")?.textContent).toBe("no explanation");
  });

  it("marks a failed user turn and wires its retry button", () => {
    const message: ChatMessage = { role: "user", text: "hello", failed: "service unreachable" };
    const onRetry = vi.fn();
    const bubble = messageBubble(message, { onRetry });

    expect(bubble.classList.contains("failed")).toBe(true);
    expect(bubble.querySelector(".turn-error-text")?.textContent).toBe("service unreachable");
    bubble.querySelector<HTMLButtonElement>(".retry")?.click();
    expect(onRetry).toHaveBeenCalledWith(message);
  });
});

describe("pathChip", () => {
  it("starts collapsed and expands to every hop on click", () => {
    const chip = pathChip({
      name: "Movie 06",
      score: 13.13,
      path: ["Movie 07 —has_genre→ Genre 3", "Genre 3 —has_genre→ Movie 06"],
    });
    const toggle = chip.querySelector<HTMLButtonElement>(".path-chip-toggle")!;
    const hops = chip.querySelector<HTMLUListElement>(".path-hops")!;

    expect(toggle.textContent).toBe("Movie 06 · 13.13");
    expect(hops.hidden).toBe(true);

    toggle.click();
    expect(hops.hidden).toBe(false);
    expect(toggle.getAttribute("aria-expanded")).toBe("true");
    const hopTexts = Array.from(hops.querySelectorAll(".path-hop"), (li) => li.textContent);
    expect(hopTexts).toEqual([
      "Movie 07 —has_genre→ Genre 3",
      "Genre 3 —has_genre→ Movie 06",
    ]);

    toggle.click();
    expect(hops.hidden).toBe(true);
  });

  it("says so when the recommendation has no graph connection", () => {
    const chip = pathChip({ name: "Movie 01", score: 1, path: [] });
    chip.querySelector<HTMLButtonElement>(".path-chip-toggle")!.click();
    expect(chip.querySelector(".path-hop-empty")?.textContent).toBe("no graph connection");
  });
});

describe("renderMessages", () => {
  it("shows an empty-state hint when there are no messages", () => {
    const container = document.createElement("div");
    renderMessages(container, []);
    expect(container.querySelector(".empty-state")).not.toBeNull();
  });

  it("renders bubbles oldest first", () => {
    const container = document.createElement("div");
    renderMessages(container, [
      { role: "user", text: "one" },
      agentMessage({ text: "two" }),
      { role: "user", text: "three" },
    ]);
    const texts = Array.from(container.querySelectorAll(".bubble-text"), (p) => p.textContent);
    expect(texts).toEqual(["one", "two", "three"]);
    expect(container.querySelector(".empty-state")).toBeNull();
  });
});

describe("errorBanner", () => {
  it("shows the message and wires the retry action", () => {
    const onRetry = vi.fn();
    const banner = errorBanner("Cannot reach the recommendation service.", onRetry);
    expect(banner.textContent).toContain("Cannot reach the recommendation service.");
    banner.querySelector<HTMLButtonElement>(".retry")!.click();
    expect(onRetry).toHaveBeenCalledTimes(1);
  });
});

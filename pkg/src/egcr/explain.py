"""Explanation generation for recommendations.

A prompt template combines the recent dialog window, the recommended item,
the reasoning path through the graph and a couple of review snippets. When a
completion endpoint is configured the rendered prompt is sent there; any
failure, timeout or unusable completion degrades to a deterministic
template-based sentence derived from the reasoning path. The returned
explanation always says which route produced it.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import httpx

from .conversation import RECOMMENDER, DialogHistory
from .errors import TemplateError
from .kg import KnowledgeGraph
from .recommend import Recommendation, ReasoningPath
from .reviews import ReviewSet, truncate_tokens

HISTORY_WINDOW = 4
REVIEW_SNIPPETS = 2
SNIPPET_TOKEN_CAP = 60

INSTRUCTION = (
    "Explain in one or two sentences why this recommendation fits the "
    "conversation, grounding the explanation in the listed connection."
)

NO_FOCUS_FALLBACK = "I asked to learn more about your preferences."

ENDPOINT_ENV = "EGCR_LLM_ENDPOINT"
API_KEY_ENV = "EGCR_LLM_API_KEY"

KNOWN_PLACEHOLDERS = frozenset({"history", "item", "path", "reviews", "instruction"})
REQUIRED_PLACEHOLDERS = frozenset({"history", "item"})

_PLACEHOLDER_RE = re.compile(r"\{([a-z_]+)\}")

SOURCE_LLM = "llm"
SOURCE_FALLBACK = "fallback"


@dataclass(frozen=True)
class Explanation:
    text: str
    source: str


@dataclass(frozen=True)
class PromptTemplate:
    """A named template body with ``{placeholder}`` slots.

    The body must use the ``{history}`` and ``{item}`` slots and may not name
    a placeholder outside the known set.
    """

    name: str
    body: str

    def __post_init__(self) -> None:
        found = set(_PLACEHOLDER_RE.findall(self.body))
        unknown = found - KNOWN_PLACEHOLDERS
        if unknown:
            raise TemplateError(
                f"template {self.name!r} uses unknown placeholders {sorted(unknown)}"
            )
        missing = REQUIRED_PLACEHOLDERS - found
        if missing:
            raise TemplateError(
                f"template {self.name!r} is missing required placeholders {sorted(missing)}"
            )

    def render(self, values: dict[str, str]) -> str:
        """Substitute placeholders literally; every slot must be covered."""
        out = self.body
        for name in _PLACEHOLDER_RE.findall(self.body):
            if name not in values:
                raise TemplateError(f"no value for placeholder {{{name}}}")
        for name, value in values.items():
            out = out.replace("{" + name + "}", value)
        return out


def load_template(name: str, directory: str | Path | None = None) -> PromptTemplate:
    """Load ``<name>.txt`` from a directory or the packaged template set."""
    if directory is not None:
        path = Path(directory) / f"{name}.txt"
        if not path.is_file():
            raise TemplateError(f"no template file {path}")
        return PromptTemplate(name=name, body=path.read_text(encoding="utf-8"))
    from importlib import resources

    ref = resources.files("egcr").joinpath("templates", f"{name}.txt")
    if not ref.is_file():
        raise TemplateError(f"no packaged template named {name!r}")
    return PromptTemplate(name=name, body=ref.read_text(encoding="utf-8"))


# -- rendering pieces ------------------------------------------------------


def _relation_label(g: KnowledgeGraph, relation: int, reverse: bool) -> str:
    label = g.relation(relation).label
    return label + "⁻¹" if reverse else label


def render_path_hops(path: ReasoningPath, g: KnowledgeGraph) -> list[str]:
    """One ``A —relation→ B`` string per traversed edge."""
    out: list[str] = []
    for prev, hop in zip(path.hops, path.hops[1:]):
        label = _relation_label(g, hop.relation, hop.reverse)
        out.append(
            f"{g.entity(prev.entity).name} —{label}→ {g.entity(hop.entity).name}"
        )
    return out


def render_path(path: ReasoningPath, g: KnowledgeGraph) -> str:
    """The whole chain as one string, or ``none`` for an empty path."""
    if path.is_empty or len(path.hops) == 1:
        return "none" if path.is_empty else g.entity(path.hops[0].entity).name
    parts = [g.entity(path.hops[0].entity).name]
    for hop in path.hops[1:]:
        label = _relation_label(g, hop.relation, hop.reverse)
        parts.append(f"—{label}→ {g.entity(hop.entity).name}")
    return " ".join(parts)


def render_history(c: DialogHistory, window: int = HISTORY_WINDOW) -> str:
    lines = []
    for turn in c.turns[-window:]:
        label = "AGENT" if turn.speaker == RECOMMENDER else "SEEKER"
        lines.append(f"{label}: {turn.text}")
    return "\n".join(lines)


def build_prompt(
    c: DialogHistory,
    rec: Recommendation,
    path: ReasoningPath,
    reviews: ReviewSet,
    template: PromptTemplate,
    g: KnowledgeGraph,
) -> str:
    """Render the explanation prompt for the top-ranked item.

    The dialog window is capped at the last four turns, review snippets at
    two texts of sixty tokens each, so the prompt length admits a fixed upper
    bound over any input.
    """
    if not rec.ranked:
        raise ValueError("cannot build a prompt for an empty recommendation")
    item_name = g.entity(rec.ranked[0][0]).name
    snippets = [
        truncate_tokens(r.text, SNIPPET_TOKEN_CAP)
        for r in reviews.reviews[:REVIEW_SNIPPETS]
    ]
    values = {
        "history": render_history(c),
        "item": item_name,
        "path": render_path(path, g),
        "reviews": "\n".join(f"- {s}" for s in snippets) if snippets else "none",
        "instruction": INSTRUCTION,
    }
    return template.render(values)


def render_fallback(rec: Recommendation, path: ReasoningPath, g: KnowledgeGraph) -> str:
    """Deterministic explanation sentence derived from the reasoning path.

    Two hops name the shared neighbor, one hop names the direct link, an
    empty or degenerate path falls back to a generic sentence. An empty
    recommendation yields the preference-probing sentence used for
    non-recommendation turns.
    """
    if not rec.ranked:
        return NO_FOCUS_FALLBACK
    item_name = g.entity(rec.ranked[0][0]).name
    entities = path.entity_ids()
    if len(entities) >= 3:
        mentioned = g.entity(entities[0]).name
        via = g.entity(entities[-2]).name
        return f"I recommend {item_name} because, like {mentioned}, it is linked to {via}."
    if len(entities) == 2:
        mentioned = g.entity(entities[0]).name
        return f"I recommend {item_name} because it is directly related to {mentioned}."
    return f"I recommend {item_name} based on our conversation."


# -- completion clients ----------------------------------------------------


class CompletionClient(Protocol):
    """Anything that can turn a prompt into a completion string."""

    name: str

    def complete(self, prompt: str) -> str: ...


@dataclass(frozen=True)
class HttpCompletionClient:
    """Minimal JSON-over-HTTP completion client.

    Posts ``{"prompt": ..., "max_tokens": ...}`` with a bearer token and
    accepts either ``{"completion": str}``, ``{"text": str}`` or an
    OpenAI-style choices array in the response.
    """

    endpoint: str
    api_key: str = ""
    timeout: float = 10.0
    max_tokens: int = 256
    name: str = "http"

    def complete(self, prompt: str) -> str:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        response = httpx.post(
            self.endpoint,
            json={"prompt": prompt, "max_tokens": self.max_tokens},
            headers=headers,
            timeout=self.timeout,
        )
        response.raise_for_status()
        data = response.json()
        if isinstance(data, dict):
            for key in ("completion", "text"):
                if isinstance(data.get(key), str):
                    return data[key]
            choices = data.get("choices")
            if isinstance(choices, list) and choices:
                first = choices[0]
                if isinstance(first, dict):
                    if isinstance(first.get("text"), str):
                        return first["text"]
                    message = first.get("message")
                    if isinstance(message, dict) and isinstance(message.get("content"), str):
                        return message["content"]
        raise ValueError(f"unrecognized completion payload from {self.endpoint}")


def client_from_env(environ: dict[str, str] | None = None) -> CompletionClient | None:
    """Build the HTTP client from ``EGCR_LLM_ENDPOINT``/``EGCR_LLM_API_KEY``.

    Without an endpoint configured there is nothing to call and None is
    returned; the engine then runs fallback-only.
    """
    env = os.environ if environ is None else environ
    endpoint = env.get(ENDPOINT_ENV, "").strip()
    if not endpoint:
        return None
    return HttpCompletionClient(endpoint=endpoint, api_key=env.get(API_KEY_ENV, "").strip())


def generate_explanation(
    prompt: str,
    client: CompletionClient | None,
    rec: Recommendation,
    path: ReasoningPath,
    g: KnowledgeGraph,
) -> Explanation:
    """Produce an explanation, degrading to the deterministic fallback.

    The fallback engages when no client is configured, the call raises, or
    the completion is unusable (empty, whitespace-only, or just the prompt
    echoed back). The source field truthfully records which route ran.
    """
    if client is not None:
        try:
            completion = client.complete(prompt).strip()
        except Exception:
            completion = ""
        if completion and completion != prompt.strip():
            return Explanation(text=completion, source=SOURCE_LLM)
    return Explanation(text=render_fallback(rec, path, g), source=SOURCE_FALLBACK)

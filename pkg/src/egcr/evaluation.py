"""Dialog corpus loading, ranking/generation metrics and experiment runs.

Dialog files are JSONL, one conversation per line, with items referenced
inline as ``@<id>`` placeholder tokens::

    {"conversation_id": "c1",
     "messages": [{"role": "seeker", "text": "I loved @111"}, ...],
     "gold": [{"turn": 2, "item_id": 93}]}

Gold labels point at recommender turns; replaying a dialog builds the state
from everything before the labeled turn and asks the engine to rank items.
Metrics follow the usual corpus conventions: Recall@K averaged over labeled
turns, distinct n-gram ratios over the generated side, corpus-level BLEU-4
with clipped counts pooled across the corpus and no smoothing.
"""

from __future__ import annotations

import json
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .conversation import RECOMMENDER, SEEKER, SPEAKERS, DialogHistory, DialogTurn
from .errors import ParseError
from .kg import KnowledgeGraph, link_mentions
from .pipeline import Pipeline

logger = logging.getLogger(__name__)

MALFORMED_ABORT_FRACTION = 0.10

_TOKEN_SPLIT_RE = re.compile(r"([^\w\s])")


@dataclass(frozen=True)
class Dialog:
    """One conversation with gold (turn, item) labels on recommender turns."""

    conversation_id: str
    turns: tuple[DialogTurn, ...]
    gold: tuple[tuple[int, int], ...] = ()

    def history(self) -> DialogHistory:
        return DialogHistory(turns=self.turns)

    def prefix_before(self, turn_index: int) -> DialogHistory:
        return DialogHistory(turns=tuple(t for t in self.turns if t.turn_index < turn_index))


def _parse_dialog(record: dict, g: KnowledgeGraph) -> Dialog:
    conversation_id = record["conversation_id"]
    if not isinstance(conversation_id, str) or not conversation_id:
        raise ValueError("conversation_id must be a non-empty string")
    messages = record["messages"]
    if not isinstance(messages, list) or not messages:
        raise ValueError("messages must be a non-empty list")
    turns = []
    for i, msg in enumerate(messages, start=1):
        role = msg["role"]
        text = msg["text"]
        if role not in SPEAKERS:
            raise ValueError(f"unknown role {role!r}")
        if not isinstance(text, str):
            raise ValueError("message text must be a string")
        turns.append(
            DialogTurn(
                turn_index=i,
                speaker=role,
                text=text,
                mentions=tuple(link_mentions(text, g)),
            )
        )
    gold = []
    for entry in record.get("gold", []):
        turn = int(entry["turn"])
        item_id = int(entry["item_id"])
        if not 1 <= turn <= len(turns):
            raise ValueError(f"gold turn {turn} out of range")
        if turns[turn - 1].speaker != RECOMMENDER:
            raise ValueError(f"gold turn {turn} is not a recommender turn")
        gold.append((turn, item_id))
    return Dialog(conversation_id=conversation_id, turns=tuple(turns), gold=tuple(gold))


def load_redial(source: str | Path, g: KnowledgeGraph) -> list[Dialog]:
    """Load a dialog corpus, skipping malformed lines with a counted warning.

    More than ten percent malformed lines abort the load: at that rate the
    file is assumed to be the wrong format rather than slightly dirty.
    """
    path = Path(source)
    dialogs: list[Dialog] = []
    malformed = 0
    total = 0
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            total += 1
            try:
                record = json.loads(line)
                if not isinstance(record, dict):
                    raise ValueError("dialog record must be a JSON object")
                dialogs.append(_parse_dialog(record, g))
            except (ValueError, KeyError, TypeError) as exc:
                malformed += 1
                logger.warning("%s:line %d: skipping malformed dialog (%s)", path.name, lineno, exc)
    if total and malformed / total > MALFORMED_ABORT_FRACTION:
        raise ParseError(
            f"{malformed} of {total} lines malformed, above the "
            f"{MALFORMED_ABORT_FRACTION:.0%} threshold",
            source=path.name,
        )
    return dialogs


def save_dialogs(dialogs: Iterable[Dialog], dest: str | Path) -> None:
    """Serialize dialogs back to the JSONL format accepted by load_redial."""
    with Path(dest).open("w", encoding="utf-8") as fh:
        for d in dialogs:
            record = {
                "conversation_id": d.conversation_id,
                "messages": [{"role": t.speaker, "text": t.text} for t in d.turns],
                "gold": [{"turn": turn, "item_id": item} for turn, item in d.gold],
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


# -- metrics ---------------------------------------------------------------


def tokenize(text: str) -> list[str]:
    """Lowercase, split punctuation from words, then split on whitespace."""
    return _TOKEN_SPLIT_RE.sub(r" \1 ", text.lower()).split()


def recall_at_k(ranked: Sequence[int], gold: int, k: int) -> float:
    """1.0 if the gold item is in the first k ranked ids, else 0.0."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return 1.0 if gold in ranked[:k] else 0.0


def _ngrams(tokens: Sequence[str], n: int) -> Iterable[tuple[str, ...]]:
    return (tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def distinct_n(texts: Sequence[str], n: int) -> float:
    """Corpus-level distinct n-gram ratio; 0.0 when no n-grams exist."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    seen: set[tuple[str, ...]] = set()
    total = 0
    for text in texts:
        for gram in _ngrams(tokenize(text), n):
            seen.add(gram)
            total += 1
    return len(seen) / total if total else 0.0


def bleu(candidates: Sequence[str], references: Sequence[str]) -> float:
    """Corpus BLEU-4 with uniform weights and no smoothing.

    Clipped n-gram counts are pooled across the whole corpus before the
    precisions are combined. An order whose n-grams exist but never match
    zeroes the score; an order with no candidate n-grams at all (short
    corpus) is vacuous and counts as a neutral 1. Brevity penalty is
    exp(1 - r/c) when the candidate side is shorter.
    """
    if len(candidates) != len(references):
        raise ValueError(
            f"need one reference per candidate, got {len(candidates)} vs {len(references)}"
        )
    if not candidates:
        raise ValueError("empty candidate corpus")
    matched = [0] * 4
    possible = [0] * 4
    c_len = 0
    r_len = 0
    for cand, ref in zip(candidates, references):
        c_tokens = tokenize(cand)
        r_tokens = tokenize(ref)
        c_len += len(c_tokens)
        r_len += len(r_tokens)
        for n in range(1, 5):
            c_counts = Counter(_ngrams(c_tokens, n))
            r_counts = Counter(_ngrams(r_tokens, n))
            possible[n - 1] += sum(c_counts.values())
            matched[n - 1] += sum(min(count, r_counts[gram]) for gram, count in c_counts.items())
    if c_len == 0:
        return 0.0
    log_sum = 0.0
    for n in range(4):
        if possible[n] == 0:
            continue
        if matched[n] == 0:
            return 0.0
        log_sum += math.log(matched[n] / possible[n])
    log_mean = log_sum / 4.0
    bp = 1.0 if c_len >= r_len else math.exp(1.0 - r_len / c_len)
    return bp * math.exp(log_mean)


# -- reports ---------------------------------------------------------------


@dataclass(frozen=True)
class MetricsReport:
    recalls: Mapping[int, float]
    bleu: float
    dist_2: float
    dist_3: float
    n_eval_turns: int

    def __post_init__(self) -> None:
        for k, v in self.recalls.items():
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"recall@{k} out of range: {v}")
        for name, v in (("bleu", self.bleu), ("dist_2", self.dist_2), ("dist_3", self.dist_3)):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} out of range: {v}")

    @property
    def recall_1(self) -> float:
        return self.recalls[1]

    @property
    def recall_10(self) -> float:
        return self.recalls[10]

    @property
    def recall_50(self) -> float:
        return self.recalls[50]

    def to_json_dict(self) -> dict:
        out = {f"recall_{k}": self.recalls[k] for k in sorted(self.recalls)}
        out["bleu"] = self.bleu
        out["dist_2"] = self.dist_2
        out["dist_3"] = self.dist_3
        out["n_eval_turns"] = self.n_eval_turns
        return out


#: Full-benchmark reference values (fractions) for orientation when reading
#: desk-scale reports; BLEU entries without a published value are None.
REFERENCE_RESULTS: dict[str, dict[str, float | None]] = {
    "redial": {"recall_1": 0.024, "recall_10": 0.140, "recall_50": 0.320, "bleu": 0.219, "dist_2": 0.140, "dist_3": 0.320},
    "kbrd": {"recall_1": 0.031, "recall_10": 0.150, "recall_50": 0.336, "bleu": 0.228, "dist_2": 0.150, "dist_3": 0.336},
    "kgsf": {"recall_1": 0.039, "recall_10": 0.183, "recall_50": 0.378, "bleu": 0.186, "dist_2": 0.183, "dist_3": 0.378},
    "crwalker": {"recall_1": 0.040, "recall_10": 0.187, "recall_50": 0.376, "bleu": 0.280, "dist_2": 0.192, "dist_3": 0.408},
    "revcore": {"recall_1": 0.061, "recall_10": 0.236, "recall_50": 0.454, "bleu": None, "dist_2": 0.424, "dist_3": 0.558},
    "egcr": {"recall_1": 0.038, "recall_10": 0.178, "recall_50": 0.361, "bleu": None, "dist_2": 0.191, "dist_3": 0.404},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """What to evaluate and where to write the results."""

    model_dir: Path
    dialogs_path: Path
    k_values: tuple[int, ...] = (1, 10, 50)
    report_json: Path | None = None
    report_table: Path | None = None

    def __post_init__(self) -> None:
        if not self.k_values or any(k < 1 for k in self.k_values):
            raise ValueError(f"k_values must be positive, got {self.k_values}")


def replay_dialog(pipe: Pipeline, dialog: Dialog) -> list[tuple[int, list[int], str, str]]:
    """Rank items for every gold turn of one dialog.

    Returns (gold item, ranked ids, generated response, reference response)
    per usable gold label; labels whose prefix has no seeker turn are skipped.
    """
    results = []
    for turn, gold_item in dialog.gold:
        prefix = dialog.prefix_before(turn)
        if not any(t.speaker == SEEKER for t in prefix.turns):
            continue
        outcome = pipe.respond(prefix)
        ranked = outcome.recommendation.entity_ids()
        reference = dialog.turns[turn - 1].text
        results.append((gold_item, ranked, outcome.response_text, reference))
    return results


def run_experiment(config: ExperimentConfig) -> MetricsReport:
    """Replay a dialog corpus against a fitted model and report the metrics.

    The ranking depth follows the largest configured K. Reports are written
    with sorted keys and fixed formatting, so equal inputs give equal bytes.
    """
    pipe = Pipeline.load(config.model_dir)
    max_k = max(config.k_values)
    if pipe.cfg.top_k < max_k:
        pipe.cfg = replace(pipe.cfg, top_k=max_k)
    dialogs = load_redial(config.dialogs_path, pipe.g)

    recall_hits: dict[int, float] = {k: 0.0 for k in config.k_values}
    candidates: list[str] = []
    references: list[str] = []
    n_turns = 0
    for dialog in dialogs:
        for gold_item, ranked, generated, reference in replay_dialog(pipe, dialog):
            n_turns += 1
            for k in config.k_values:
                recall_hits[k] += recall_at_k(ranked, gold_item, k)
            candidates.append(generated)
            references.append(reference)

    recalls = {k: (recall_hits[k] / n_turns if n_turns else 0.0) for k in config.k_values}
    report = MetricsReport(
        recalls=recalls,
        bleu=bleu(candidates, references) if candidates else 0.0,
        dist_2=distinct_n(candidates, 2),
        dist_3=distinct_n(candidates, 3),
        n_eval_turns=n_turns,
    )
    if config.report_json is not None:
        write_report_json(report, config.report_json)
    if config.report_table is not None:
        Path(config.report_table).write_text(render_report_table(report), encoding="utf-8")
    return report


def write_report_json(report: MetricsReport, dest: str | Path) -> None:
    with Path(dest).open("w", encoding="utf-8") as fh:
        json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def render_report_table(report: MetricsReport) -> str:
    """Plain-text metrics table; ratio metrics are rendered as percentages."""
    data = report.to_json_dict()
    headers = [k for k in data if k != "n_eval_turns"]
    cells = []
    for h in headers:
        value = data[h]
        cells.append(f"{100.0 * value:.1f}")
    widths = [max(len(h), len(c)) for h, c in zip(headers, cells)]
    header_row = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
    value_row = "  ".join(c.ljust(w) for c, w in zip(cells, widths))
    return (
        f"{header_row}\n{value_row}\n"
        f"(percentages; averaged over {report.n_eval_turns} labeled turns)\n"
    )

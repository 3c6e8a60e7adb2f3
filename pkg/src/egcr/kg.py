"""Multi-relational knowledge graph store with fusion and mention linking.

Entities carry a kind (item, attribute or concept), relations are registered
by label in order of first appearance, and triples are directed
(head, relation, tail). Two graphs covering the same items from different
angles can be merged into one joint graph through an alignment table; the
merge keeps both entity sets disjoint and wires aligned pairs together with a
dedicated ``aligned_to`` relation in both directions.

File formats understood here:

* triples: TSV ``head<TAB>relation_label<TAB>tail``, ``#`` starts a comment
* entities: JSONL ``{"id", "name", "kind", "aliases"}``
* alignment: TSV ``item_entity_id<TAB>concept_entity_id``
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping

from .errors import IntegrityError, ParseError

ENTITY_KINDS = ("item", "attribute", "concept")
ALIGNED_TO = "aligned_to"

_PLACEHOLDER_RE = re.compile(r"(?<!\w)@(\d+)\b")


@dataclass(frozen=True)
class Entity:
    """A node in the graph. Names are unique per kind after case-folding."""

    id: int
    name: str
    kind: str
    aliases: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.id < 0:
            raise IntegrityError(f"entity id must be non-negative, got {self.id}")
        if not self.name or not self.name.strip():
            raise IntegrityError(f"entity {self.id} has an empty name")
        if self.kind not in ENTITY_KINDS:
            raise IntegrityError(
                f"entity {self.id} has unknown kind {self.kind!r}; expected one of {ENTITY_KINDS}"
            )


@dataclass(frozen=True)
class RelationType:
    """A registered relation. Ids are dense 0..|R|-1 in registration order."""

    id: int
    label: str

    def __post_init__(self) -> None:
        if not self.label or not self.label.strip():
            raise IntegrityError("relation label must be non-empty")


@dataclass(frozen=True)
class Triple:
    head: int
    relation: int
    tail: int


@dataclass(frozen=True)
class Mention:
    """A linked span of utterance text. ``start``/``end`` are character offsets."""

    start: int
    end: int
    surface: str
    entity: int


class KnowledgeGraph:
    """Immutable multi-relational graph with per-(entity, relation) adjacency.

    Build instances through :func:`load_graph`, :func:`merge_graphs` or the
    :meth:`build` constructor, which validates referential integrity and the
    naming invariants before anything else can observe the graph.
    """

    def __init__(
        self,
        entities: Mapping[int, Entity],
        relations: Mapping[int, RelationType],
        triples: frozenset[Triple],
        concept_id_base: int | None = None,
    ):
        self._entities = dict(entities)
        self._relations = dict(relations)
        self._triples = triples
        self.concept_id_base = concept_id_base
        self._relation_by_label = {r.label: r.id for r in relations.values()}
        # Dense registry positions in ascending entity id order. Embedding
        # tables index their rows by these positions.
        self._positions = {eid: i for i, eid in enumerate(sorted(self._entities))}
        self._adjacency: dict[tuple[int, int], frozenset[int]] = {}
        grouped: dict[tuple[int, int], set[int]] = {}
        for t in triples:
            grouped.setdefault((t.head, t.relation), set()).add(t.tail)
        self._adjacency = {k: frozenset(v) for k, v in grouped.items()}

    @classmethod
    def build(
        cls,
        entities: Iterable[Entity],
        relations: Iterable[RelationType],
        triples: Iterable[Triple],
        concept_id_base: int | None = None,
    ) -> "KnowledgeGraph":
        ent_map: dict[int, Entity] = {}
        for e in entities:
            if e.id in ent_map:
                raise IntegrityError(f"duplicate entity id {e.id}")
            ent_map[e.id] = e

        names_by_kind: dict[tuple[str, str], int] = {}
        for e in ent_map.values():
            key = (e.kind, e.name.casefold())
            if key in names_by_kind:
                raise IntegrityError(
                    f"entities {names_by_kind[key]} and {e.id} share the name "
                    f"{e.name!r} for kind {e.kind!r}"
                )
            names_by_kind[key] = e.id
        for e in ent_map.values():
            for alias in e.aliases:
                key = (e.kind, alias.casefold())
                if key in names_by_kind and names_by_kind[key] != e.id:
                    raise IntegrityError(
                        f"alias {alias!r} of entity {e.id} collides with the name "
                        f"of entity {names_by_kind[key]}"
                    )

        rel_map: dict[int, RelationType] = {}
        labels: set[str] = set()
        for r in relations:
            if r.id in rel_map:
                raise IntegrityError(f"duplicate relation id {r.id}")
            if r.label in labels:
                raise IntegrityError(f"duplicate relation label {r.label!r}")
            rel_map[r.id] = r
            labels.add(r.label)
        if rel_map and sorted(rel_map) != list(range(len(rel_map))):
            raise IntegrityError("relation ids must be dense 0..|R|-1")

        triple_set: set[Triple] = set()
        for t in triples:
            if t.head not in ent_map:
                raise IntegrityError(f"triple references unknown head entity {t.head}")
            if t.tail not in ent_map:
                raise IntegrityError(f"triple references unknown tail entity {t.tail}")
            if t.relation not in rel_map:
                raise IntegrityError(f"triple references unknown relation {t.relation}")
            if rel_map[t.relation].label == ALIGNED_TO and t.head == t.tail:
                raise IntegrityError(f"alignment triple may not be reflexive: {t}")
            triple_set.add(t)

        return cls(ent_map, rel_map, frozenset(triple_set), concept_id_base)

    # -- accessors ---------------------------------------------------------

    @property
    def triples(self) -> frozenset[Triple]:
        return self._triples

    def entity(self, entity_id: int) -> Entity:
        try:
            return self._entities[entity_id]
        except KeyError:
            raise KeyError(f"unregistered entity id {entity_id}") from None

    def has_entity(self, entity_id: int) -> bool:
        return entity_id in self._entities

    def entities(self) -> Iterator[Entity]:
        """Entities in ascending id order."""
        for eid in sorted(self._entities):
            yield self._entities[eid]

    def entity_ids(self) -> list[int]:
        return sorted(self._entities)

    def items(self) -> list[int]:
        """Ids of all entities with kind ``item``, ascending."""
        return [e.id for e in self.entities() if e.kind == "item"]

    def relation(self, relation_id: int) -> RelationType:
        try:
            return self._relations[relation_id]
        except KeyError:
            raise KeyError(f"unregistered relation id {relation_id}") from None

    def relation_by_label(self, label: str) -> RelationType:
        try:
            return self._relations[self._relation_by_label[label]]
        except KeyError:
            raise KeyError(f"unregistered relation label {label!r}") from None

    def has_relation_label(self, label: str) -> bool:
        return label in self._relation_by_label

    def relations(self) -> list[RelationType]:
        return [self._relations[i] for i in sorted(self._relations)]

    def relation_ids(self) -> list[int]:
        return sorted(self._relations)

    @property
    def entity_count(self) -> int:
        return len(self._entities)

    @property
    def relation_count(self) -> int:
        return len(self._relations)

    def position_of(self, entity_id: int) -> int:
        """Dense registry position of an entity, used as a table row index."""
        try:
            return self._positions[entity_id]
        except KeyError:
            raise KeyError(f"unregistered entity id {entity_id}") from None

    @property
    def positions(self) -> Mapping[int, int]:
        return self._positions


def neighbors(g: KnowledgeGraph, e: int, r: int | None = None) -> set[int]:
    """Tails of triples with head ``e``, optionally restricted to relation ``r``.

    Raises KeyError for an unregistered entity or relation id. An entity with
    no outgoing triples has an empty neighbor set.
    """
    g.entity(e)
    if r is not None:
        g.relation(r)
        return set(g._adjacency.get((e, r), ()))
    out: set[int] = set()
    for rel in g.relation_ids():
        out |= g._adjacency.get((e, rel), set())
    return out


# -- loading and serialization --------------------------------------------


def _parse_entity_line(line: str, lineno: int, source: str) -> Entity:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON ({exc.msg})", line=lineno, source=source) from None
    if not isinstance(record, dict):
        raise ParseError("entity record must be a JSON object", line=lineno, source=source)
    try:
        eid = record["id"]
        name = record["name"]
        kind = record["kind"]
    except KeyError as exc:
        raise ParseError(f"entity record missing key {exc.args[0]!r}", line=lineno, source=source) from None
    aliases = record.get("aliases", [])
    if not isinstance(eid, int) or isinstance(eid, bool):
        raise ParseError(f"entity id must be an integer, got {eid!r}", line=lineno, source=source)
    if not isinstance(aliases, list) or not all(isinstance(a, str) for a in aliases):
        raise ParseError("aliases must be a list of strings", line=lineno, source=source)
    try:
        return Entity(id=eid, name=str(name), kind=str(kind), aliases=tuple(aliases))
    except IntegrityError as exc:
        raise ParseError(str(exc), line=lineno, source=source) from None


def load_graph(triples_source: str | Path, entities_source: str | Path) -> KnowledgeGraph:
    """Load a graph from a triples TSV and an entities JSONL file.

    Relation ids are assigned densely in order of first appearance in the
    triples file. Unknown entity references and duplicate or colliding names
    are rejected; `#` lines and blank lines in the TSV are skipped.
    """
    entities_path = Path(entities_source)
    triples_path = Path(triples_source)

    entities: list[Entity] = []
    with entities_path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            entities.append(_parse_entity_line(line, lineno, entities_path.name))
    known_ids = {e.id for e in entities}

    relations: list[RelationType] = []
    rel_ids: dict[str, int] = {}
    triples: list[Triple] = []
    with triples_path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(
                    f"expected 3 tab-separated fields, got {len(parts)}",
                    line=lineno,
                    source=triples_path.name,
                )
            head_s, label, tail_s = (p.strip() for p in parts)
            try:
                head, tail = int(head_s), int(tail_s)
            except ValueError:
                raise ParseError(
                    f"entity ids must be decimal integers, got {head_s!r}, {tail_s!r}",
                    line=lineno,
                    source=triples_path.name,
                ) from None
            if not label:
                raise ParseError("empty relation label", line=lineno, source=triples_path.name)
            for eid in (head, tail):
                if eid not in known_ids:
                    raise IntegrityError(
                        f"{triples_path.name}:line {lineno}: triple references "
                        f"unknown entity {eid}"
                    )
            if label not in rel_ids:
                rel_ids[label] = len(rel_ids)
                relations.append(RelationType(id=rel_ids[label], label=label))
            triples.append(Triple(head=head, relation=rel_ids[label], tail=tail))

    return KnowledgeGraph.build(entities, relations, triples)


def save_graph(g: KnowledgeGraph, triples_dest: str | Path, entities_dest: str | Path) -> None:
    """Write a graph back to the TSV/JSONL formats accepted by :func:`load_graph`.

    Triples are ordered by (relation, head, tail) so that reloading assigns
    each relation the id it already has. Relations without any triple cannot
    be expressed in the TSV format and are dropped.
    """
    entities_path = Path(entities_dest)
    triples_path = Path(triples_dest)
    with entities_path.open("w", encoding="utf-8") as fh:
        for e in g.entities():
            record = {"id": e.id, "name": e.name, "kind": e.kind, "aliases": list(e.aliases)}
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    ordered = sorted(g.triples, key=lambda t: (t.relation, t.head, t.tail))
    with triples_path.open("w", encoding="utf-8") as fh:
        fh.write("# head\trelation\ttail\n")
        for t in ordered:
            fh.write(f"{t.head}\t{g.relation(t.relation).label}\t{t.tail}\n")


def load_alignment(source: str | Path) -> list[tuple[int, int]]:
    """Read a TSV of ``item_entity_id<TAB>concept_entity_id`` pairs."""
    path = Path(source)
    pairs: list[tuple[int, int]] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(
                    f"expected 2 tab-separated fields, got {len(parts)}",
                    line=lineno,
                    source=path.name,
                )
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise ParseError(
                    f"alignment ids must be integers, got {parts!r}",
                    line=lineno,
                    source=path.name,
                ) from None
    return pairs


# -- fusion ----------------------------------------------------------------


def merge_graphs(
    g_item: KnowledgeGraph,
    g_concept: KnowledgeGraph,
    alignment: Iterable[tuple[int, int]],
) -> KnowledgeGraph:
    """Fuse an item-centric graph and a concept graph into one joint graph.

    Concept entity ids are offset by a recorded base so both id spaces stay
    disjoint; the base is ``max(item graph ids) + 1`` (0 for an empty item
    graph). The relation set is the union by label plus a fresh ``aligned_to``
    relation, and each alignment pair (i, c) contributes the two triples
    (i, aligned_to, c') and (c', aligned_to, i). Alignment pairs referencing
    unknown entities are rejected; an empty alignment yields a plain disjoint
    union.
    """
    item_ids = g_item.entity_ids()
    base = (max(item_ids) + 1) if item_ids else 0

    entities: list[Entity] = list(g_item.entities())
    for e in g_concept.entities():
        entities.append(Entity(id=e.id + base, name=e.name, kind=e.kind, aliases=e.aliases))

    relations: list[RelationType] = list(g_item.relations())
    label_to_id = {r.label: r.id for r in relations}
    concept_rel_map: dict[int, int] = {}
    for r in g_concept.relations():
        if r.label not in label_to_id:
            label_to_id[r.label] = len(relations)
            relations.append(RelationType(id=label_to_id[r.label], label=r.label))
        concept_rel_map[r.id] = label_to_id[r.label]
    if ALIGNED_TO in label_to_id:
        raise IntegrityError(f"input graphs may not already use the {ALIGNED_TO!r} relation")
    aligned_id = len(relations)
    relations.append(RelationType(id=aligned_id, label=ALIGNED_TO))

    triples: list[Triple] = list(g_item.triples)
    for t in g_concept.triples:
        triples.append(
            Triple(head=t.head + base, relation=concept_rel_map[t.relation], tail=t.tail + base)
        )
    for item_eid, concept_eid in dict.fromkeys(alignment):
        if not g_item.has_entity(item_eid):
            raise IntegrityError(f"alignment references unknown item-graph entity {item_eid}")
        if not g_concept.has_entity(concept_eid):
            raise IntegrityError(f"alignment references unknown concept-graph entity {concept_eid}")
        shifted = concept_eid + base
        triples.append(Triple(head=item_eid, relation=aligned_id, tail=shifted))
        triples.append(Triple(head=shifted, relation=aligned_id, tail=item_eid))

    return KnowledgeGraph.build(entities, relations, triples, concept_id_base=base)


# -- mention linking -------------------------------------------------------


@dataclass(frozen=True)
class _Candidate:
    start: int
    end: int
    surface: str
    entity: int


def _lexicon(g: KnowledgeGraph) -> dict[str, int]:
    """Case-folded attribute/concept names and aliases, ties to the lowest id."""
    lex: dict[str, int] = {}
    for e in g.entities():
        if e.kind == "item":
            continue
        for phrase in (e.name, *e.aliases):
            folded = phrase.casefold()
            if folded not in lex or e.id < lex[folded]:
                lex[folded] = e.id
    return lex


def scan_mentions(text: str, g: KnowledgeGraph) -> tuple[list[Mention], list[str]]:
    """Link mentions in ``text`` and also report unresolved placeholder tokens.

    Two sources of mentions: `@<id>` placeholders for registered items, and
    case-insensitive whole-word occurrences of attribute/concept names and
    aliases. Longest match wins; candidates are selected left to right without
    overlap; equal-length candidates at the same offset resolve to the lowest
    entity id. Placeholders naming an unregistered id (or a non-item entity)
    are returned as unlinked tokens, never as an error.
    """
    candidates: list[_Candidate] = []
    unlinked: list[str] = []

    for m in _PLACEHOLDER_RE.finditer(text):
        eid = int(m.group(1))
        if g.has_entity(eid) and g.entity(eid).kind == "item":
            candidates.append(_Candidate(m.start(), m.end(), m.group(0), eid))
        else:
            unlinked.append(m.group(0))

    for phrase, eid in _lexicon(g).items():
        pattern = re.compile(r"\b" + re.escape(phrase) + r"\b", re.IGNORECASE)
        for m in pattern.finditer(text):
            candidates.append(_Candidate(m.start(), m.end(), m.group(0), eid))

    candidates.sort(key=lambda c: (c.start, c.start - c.end, c.entity))
    mentions: list[Mention] = []
    cursor = 0
    for c in candidates:
        if c.start >= cursor:
            mentions.append(Mention(start=c.start, end=c.end, surface=c.surface, entity=c.entity))
            cursor = c.end
    return mentions, unlinked


def link_mentions(text: str, g: KnowledgeGraph) -> list[Mention]:
    """Mentions of registered entities in ``text``, ordered by start offset."""
    return scan_mentions(text, g)[0]

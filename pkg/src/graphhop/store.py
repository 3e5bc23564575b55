"""Immutable heterogeneous text-attributed graph store with lexical retrieval.

Loads line-delimited graph and question files, validates them against the
declared schema, and serves deterministic BM25-ranked lookups over the
concatenated text features of every node.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterable, Mapping

DIFFICULTY_LABELS = ("Easy", "Medium", "Hard", "OOD")

BM25_K1 = 1.2
BM25_B = 0.75

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase alphanumeric tokenization shared by index and scoring."""
    return _TOKEN_RE.findall(text.lower())


class GraphFileError(ValueError):
    """Malformed graph/question file. Carries the 1-based offending line."""

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(ValueError):
    """Schema self-inconsistency or a record referencing undeclared vocabulary."""


class ReferentialIntegrityError(ValueError):
    """A stored edge points at a missing node or one of the wrong type."""


class QuestionValidationError(ValueError):
    """A question instance violates the question-file contract."""


class EmptyQueryError(ValueError):
    """Retrieval query tokenized to nothing."""


@dataclass(frozen=True)
class RelationType:
    """A typed, directed relation: (name, source node type, target node type)."""

    name: str
    source: str
    target: str


@dataclass(frozen=True)
class GraphSchema:
    """Typed vocabulary of a heterogeneous graph."""

    node_types: tuple[str, ...]
    features_per_type: Mapping[str, tuple[str, ...]]
    relation_types: tuple[RelationType, ...]

    def __post_init__(self) -> None:
        declared = set(self.node_types)
        if len(declared) != len(self.node_types):
            raise SchemaError("duplicate node type declaration")
        for node_type, features in self.features_per_type.items():
            if node_type not in declared:
                raise SchemaError(f"features declared for unknown node type {node_type!r}")
            if len(set(features)) != len(features):
                raise SchemaError(f"duplicate feature name for node type {node_type!r}")
        seen_pairs = set()
        for rel in self.relation_types:
            if rel.source not in declared:
                raise SchemaError(f"relation {rel.name!r} has unknown source type {rel.source!r}")
            if rel.target not in declared:
                raise SchemaError(f"relation {rel.name!r} has unknown target type {rel.target!r}")
            if (rel.name, rel.source) in seen_pairs:
                raise SchemaError(f"relation {rel.name!r} declared twice for source {rel.source!r}")
            seen_pairs.add((rel.name, rel.source))
        object.__setattr__(self, "features_per_type", MappingProxyType(dict(self.features_per_type)))

    @classmethod
    def from_dict(cls, payload: Mapping[str, Any]) -> GraphSchema:
        try:
            node_types = tuple(str(t) for t in payload["node_types"])
            features = {
                str(k): tuple(str(f) for f in v) for k, v in payload["features_per_type"].items()
            }
            relations = tuple(
                RelationType(str(name), str(src), str(dst))
                for name, src, dst in payload["relation_types"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed schema record: {exc}") from exc
        return cls(node_types, features, relations)

    def features_for(self, node_type: str) -> tuple[str, ...]:
        return self.features_per_type.get(node_type, ())

    def relation_for(self, name: str, source_type: str) -> RelationType | None:
        for rel in self.relation_types:
            if rel.name == name and rel.source == source_type:
                return rel
        return None

    def relations_for(self, source_type: str) -> tuple[RelationType, ...]:
        return tuple(r for r in self.relation_types if r.source == source_type)


@dataclass(frozen=True)
class NodeRecord:
    """One graph node: typed, text-attributed, with ordered typed neighbor lists."""

    id: str
    node_type: str
    features: Mapping[str, str]
    neighbors: Mapping[str, tuple[str, ...]]

    def __post_init__(self) -> None:
        object.__setattr__(self, "features", MappingProxyType(dict(self.features)))
        object.__setattr__(
            self, "neighbors", MappingProxyType({k: tuple(v) for k, v in self.neighbors.items()})
        )


@dataclass(frozen=True)
class ReferenceStep:
    """One step of a reference trajectory: a call plus its expected observation."""

    function: str
    args: tuple[str, ...]
    expected: str | None = None
    think: str | None = None


@dataclass(frozen=True)
class QuestionInstance:
    """A question, its gold answer, and optional difficulty/trajectory metadata."""

    question_id: str
    question: str
    gold_answer: str
    domain: str
    difficulty: str | None = None
    reference_trajectory: tuple[ReferenceStep, ...] | None = None

    def __post_init__(self) -> None:
        if self.difficulty is not None and self.difficulty not in DIFFICULTY_LABELS:
            raise QuestionValidationError(
                f"question {self.question_id!r}: unknown difficulty {self.difficulty!r}"
            )
        if self.difficulty is None and self.reference_trajectory is None:
            raise QuestionValidationError(
                f"question {self.question_id!r}: needs difficulty or reference_trajectory"
            )


class GraphStore:
    """Validated, immutable node/edge store with a BM25 retrieval index.

    Safe to share across concurrent episodes: nothing mutates after
    construction and retrieval is a pure function of (store, query, k).
    """

    def __init__(self, schema: GraphSchema, nodes: Iterable[NodeRecord]) -> None:
        self.schema = schema
        self._nodes: dict[str, NodeRecord] = {}
        for record in nodes:
            if record.id in self._nodes:
                raise ReferentialIntegrityError(f"duplicate node id {record.id!r}")
            self._nodes[record.id] = record
        self._validate()
        self._build_index()

    # -- container protocol --------------------------------------------------

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self._nodes

    def node_ids(self) -> tuple[str, ...]:
        return tuple(self._nodes)

    def get(self, node_id: str) -> NodeRecord | None:
        return self._nodes.get(node_id)

    def node(self, node_id: str) -> NodeRecord:
        return self._nodes[node_id]

    # -- validation ----------------------------------------------------------

    def _validate(self) -> None:
        for record in self._nodes.values():
            if record.node_type not in self.schema.node_types:
                raise SchemaError(f"node {record.id!r} has undeclared type {record.node_type!r}")
            declared = self.schema.features_for(record.node_type)
            for feature in record.features:
                if feature not in declared:
                    raise SchemaError(
                        f"node {record.id!r} carries undeclared feature {feature!r}"
                    )
            for relation, neighbor_ids in record.neighbors.items():
                rel = self.schema.relation_for(relation, record.node_type)
                if rel is None:
                    raise SchemaError(
                        f"node {record.id!r} uses undeclared relation {relation!r}"
                    )
                for neighbor_id in neighbor_ids:
                    neighbor = self._nodes.get(neighbor_id)
                    if neighbor is None:
                        raise ReferentialIntegrityError(
                            f"node {record.id!r} references missing node {neighbor_id!r}"
                            f" via {relation!r}"
                        )
                    if neighbor.node_type != rel.target:
                        raise ReferentialIntegrityError(
                            f"node {record.id!r} references {neighbor_id!r} via {relation!r}"
                            f" expecting type {rel.target!r}, found {neighbor.node_type!r}"
                        )

    # -- retrieval index -----------------------------------------------------

    def _document(self, record: NodeRecord) -> str:
        return " ".join(record.features.get(f, "") for f in self.schema.features_for(record.node_type))

    def _build_index(self) -> None:
        self._term_freqs: dict[str, Counter[str]] = {}
        self._doc_lens: dict[str, int] = {}
        self._postings: dict[str, list[str]] = {}
        self._exact: dict[str, list[str]] = {}
        for node_id, record in self._nodes.items():
            tokens = tokenize(self._document(record))
            freqs = Counter(tokens)
            self._term_freqs[node_id] = freqs
            self._doc_lens[node_id] = len(tokens)
            for term in freqs:
                self._postings.setdefault(term, []).append(node_id)
            for value in record.features.values():
                self._exact.setdefault(value.lower(), []).append(node_id)
        total = sum(self._doc_lens.values())
        self._avgdl = total / len(self._nodes) if self._nodes else 0.0
        self._idf = {
            term: math.log(1.0 + (len(self._nodes) - len(ids) + 0.5) / (len(ids) + 0.5))
            for term, ids in self._postings.items()
        }

    def retrieve(self, query: str, k: int) -> list[tuple[str, float]]:
        """Top-k (node id, BM25 score), exact feature-value matches first.

        Ties break by ascending node id so rankings are a total order
        independent of hash iteration. Raises EmptyQueryError when the query
        tokenizes to nothing.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        query_tokens = tokenize(query)
        if not query_tokens:
            raise EmptyQueryError(f"query {query!r} has no indexable tokens")
        scores: dict[str, float] = {}
        for term in query_tokens:
            idf = self._idf.get(term)
            if idf is None:
                continue
            for node_id in self._postings[term]:
                tf = self._term_freqs[node_id][term]
                norm = BM25_K1 * (1.0 - BM25_B + BM25_B * self._doc_lens[node_id] / self._avgdl)
                scores[node_id] = scores.get(node_id, 0.0) + idf * tf * (BM25_K1 + 1.0) / (tf + norm)
        exact_ids = set(self._exact.get(query.lower(), ()))
        candidates = set(scores) | exact_ids
        ranked = sorted(
            candidates,
            key=lambda node_id: (node_id not in exact_ids, -scores.get(node_id, 0.0), node_id),
        )
        return [(node_id, scores.get(node_id, 0.0)) for node_id in ranked[:k]]


# -- file loading -------------------------------------------------------------


def _parse_json_line(raw: str, line_no: int) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise GraphFileError(f"invalid JSON ({exc.msg})", line_no) from exc


def load_graph(path: str | Path) -> GraphStore:
    """Load and validate a line-delimited graph file.

    The first non-blank line must be the schema record; every following line
    is one node record. All referential and schema checks run before the
    store is returned.
    """
    records: list[NodeRecord] = []
    schema: GraphSchema | None = None
    with open(path, encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            raw = raw.strip()
            if not raw:
                continue
            payload = _parse_json_line(raw, line_no)
            if schema is None:
                if not isinstance(payload, dict) or "schema" not in payload:
                    raise GraphFileError("first record must be the schema", line_no)
                schema = GraphSchema.from_dict(payload["schema"])
                continue
            if not isinstance(payload, dict) or "id" not in payload or "type" not in payload:
                raise GraphFileError("node record needs 'id' and 'type'", line_no)
            features = payload.get("features", {})
            if not isinstance(features, dict) or not all(
                isinstance(v, str) for v in features.values()
            ):
                raise GraphFileError(
                    f"node {payload['id']!r}: features must map names to strings", line_no
                )
            neighbors = payload.get("neighbors", {})
            if not isinstance(neighbors, dict) or not all(
                isinstance(v, list) for v in neighbors.values()
            ):
                raise GraphFileError(
                    f"node {payload['id']!r}: neighbors must map relations to id lists", line_no
                )
            records.append(
                NodeRecord(
                    id=str(payload["id"]),
                    node_type=str(payload["type"]),
                    features={str(k): v for k, v in features.items()},
                    neighbors={str(k): tuple(str(i) for i in v) for k, v in neighbors.items()},
                )
            )
    if schema is None:
        raise GraphFileError("graph file has no schema record")
    return GraphStore(schema, records)


def _parse_reference_step(payload: Any, question_id: str) -> ReferenceStep:
    if not isinstance(payload, dict) or "function" not in payload or "args" not in payload:
        raise QuestionValidationError(
            f"question {question_id!r}: trajectory steps need 'function' and 'args'"
        )
    expected = payload.get("expected")
    think = payload.get("think")
    return ReferenceStep(
        function=str(payload["function"]),
        args=tuple(str(a) for a in payload["args"]),
        expected=None if expected is None else str(expected),
        think=None if think is None else str(think),
    )


def load_question_set(path: str | Path) -> list[QuestionInstance]:
    """Load a line-delimited question file, preserving file order."""
    questions: list[QuestionInstance] = []
    with open(path, encoding="utf-8") as handle:
        for line_no, raw in enumerate(handle, start=1):
            raw = raw.strip()
            if not raw:
                continue
            payload = _parse_json_line(raw, line_no)
            if not isinstance(payload, dict):
                raise GraphFileError("question record must be an object", line_no)
            question_id = str(payload.get("question_id", f"<line {line_no}>"))
            for required in ("question_id", "question", "gold_answer", "domain"):
                if required not in payload:
                    raise QuestionValidationError(
                        f"question {question_id!r}: missing field {required!r}"
                    )
            trajectory = payload.get("reference_trajectory")
            steps = (
                tuple(_parse_reference_step(step, question_id) for step in trajectory)
                if trajectory is not None
                else None
            )
            questions.append(
                QuestionInstance(
                    question_id=question_id,
                    question=str(payload["question"]),
                    gold_answer=str(payload["gold_answer"]),
                    domain=str(payload["domain"]),
                    difficulty=payload.get("difficulty"),
                    reference_trajectory=steps,
                )
            )
    return questions

"""Deterministic executor for the four typed graph functions.

Every failure is in-band: invalid calls never raise, they produce a result
whose rendered text is the environment's single error template, so no call
can crash an episode.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .store import EmptyQueryError, GraphStore

FUNCTIONS = ("RetrieveNode", "NodeFeature", "NeighborCheck", "NodeDegree")

ERROR_KINDS = (
    "unknown_function",
    "bad_arity",
    "unknown_node",
    "unknown_feature",
    "unknown_relation",
    "empty_query",
)

# Observation templates, byte-exact. The invalid template is shared by every
# failure kind; error_kind still distinguishes them internally.
RETRIEVE_TEMPLATE = "The ID of this retrieval target node is {id}."
RETRIEVE_MULTI_TEMPLATE = "The IDs of the retrieval target nodes are: {ids}."
FEATURE_TEMPLATE = "The {feature} feature of {id} are: {value}."
DEGREE_TEMPLATE = "The {relation} neighbor node degree of {id} are: {count}."
NEIGHBOR_TEMPLATE = "The {relation} neighbors of {id} are: {ids}."
ERROR_OBSERVATION = (
    "The node or feature name does not exist in the graph. This might be"
    " because your given feature name is not correct. Please modify it."
)

_CALL_RE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*\[(.*)\]\s*$", re.DOTALL)


class EmptyBlockError(ValueError):
    """execute_block was handed no calls."""


@dataclass(frozen=True)
class FunctionCall:
    """One parsed call. parse_ok is False when the raw text had no call shape."""

    function: str
    args: tuple[str, ...]
    raw: str | None = None
    parse_ok: bool = True


@dataclass(frozen=True)
class FunctionResult:
    """Outcome of executing one call: surfaced node ids plus observation text."""

    call: FunctionCall
    status: str  # "ok" | "invalid"
    node_ids: tuple[str, ...]
    rendered: str
    error_kind: str | None = None


def parse_call(text: str) -> FunctionCall:
    """Parse ``Function[args]`` text.

    Two-argument functions split on the first comma (queries for
    RetrieveNode keep commas verbatim); surrounding whitespace is trimmed.
    Brackets inside arguments are unsupported. Unparseable text yields a
    FunctionCall with parse_ok=False rather than an exception.
    """
    match = _CALL_RE.match(text)
    if match is None:
        return FunctionCall(function=text.strip(), args=(), raw=text, parse_ok=False)
    name, body = match.group(1), match.group(2)
    if name == "RetrieveNode":
        args: tuple[str, ...] = (body.strip(),)
    elif "," in body:
        first, rest = body.split(",", 1)
        args = (first.strip(), rest.strip())
    else:
        args = (body.strip(),)
    return FunctionCall(function=name, args=args, raw=text)


def _quoted_id_list(node_ids: tuple[str, ...]) -> str:
    return "[" + ", ".join(f"'{node_id}'" for node_id in node_ids) + "]"


def _invalid(call: FunctionCall, error_kind: str) -> FunctionResult:
    return FunctionResult(
        call=call,
        status="invalid",
        node_ids=(),
        rendered=ERROR_OBSERVATION,
        error_kind=error_kind,
    )


def execute(store: GraphStore, call: FunctionCall, retrieval_top_k: int = 1) -> FunctionResult:
    """Execute one call against the immutable store. Pure and total."""
    if not call.parse_ok or call.function not in FUNCTIONS:
        return _invalid(call, "unknown_function")

    if call.function == "RetrieveNode":
        if len(call.args) != 1:
            return _invalid(call, "bad_arity")
        try:
            ranked = store.retrieve(call.args[0], retrieval_top_k)
        except EmptyQueryError:
            return _invalid(call, "empty_query")
        if not ranked:
            return _invalid(call, "unknown_node")
        node_ids = tuple(node_id for node_id, _ in ranked)
        if len(node_ids) == 1:
            rendered = RETRIEVE_TEMPLATE.format(id=node_ids[0])
        else:
            rendered = RETRIEVE_MULTI_TEMPLATE.format(ids=_quoted_id_list(node_ids))
        return FunctionResult(call=call, status="ok", node_ids=node_ids, rendered=rendered)

    if len(call.args) != 2:
        return _invalid(call, "bad_arity")
    node_id, key = call.args
    record = store.get(node_id)
    if record is None:
        return _invalid(call, "unknown_node")

    if call.function == "NodeFeature":
        if key not in store.schema.features_for(record.node_type) or key not in record.features:
            return _invalid(call, "unknown_feature")
        rendered = FEATURE_TEMPLATE.format(feature=key, id=node_id, value=record.features[key])
        return FunctionResult(call=call, status="ok", node_ids=(), rendered=rendered)

    # NeighborCheck / NodeDegree share relation validation.
    if store.schema.relation_for(key, record.node_type) is None:
        return _invalid(call, "unknown_relation")
    neighbor_ids = record.neighbors.get(key, ())
    if call.function == "NodeDegree":
        rendered = DEGREE_TEMPLATE.format(relation=key, id=node_id, count=len(neighbor_ids))
        return FunctionResult(call=call, status="ok", node_ids=(), rendered=rendered)
    rendered = NEIGHBOR_TEMPLATE.format(relation=key, id=node_id, ids=_quoted_id_list(neighbor_ids))
    return FunctionResult(call=call, status="ok", node_ids=neighbor_ids, rendered=rendered)


def execute_block(
    store: GraphStore, calls: list[FunctionCall], retrieval_top_k: int = 1
) -> list[FunctionResult]:
    """Execute a within-round batch of calls, in order, against one store state."""
    if not calls:
        raise EmptyBlockError("a call block must contain at least one call")
    return [execute(store, call, retrieval_top_k) for call in calls]


def call_validity(result: FunctionResult) -> bool:
    """True iff the call passed name/arity/schema validation (the CV metric)."""
    return result.status == "ok"

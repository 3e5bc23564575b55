from __future__ import annotations

import json
import math
import random
from collections import Counter

import pytest

from graphhop.store import (
    BM25_B,
    BM25_K1,
    EmptyQueryError,
    GraphFileError,
    GraphSchema,
    GraphStore,
    QuestionValidationError,
    ReferentialIntegrityError,
    RelationType,
    SchemaError,
    load_graph,
    load_question_set,
    tokenize,
)

TITLE = "PYLE-PRO PPHP1293 - 800 Watt 12'' Two-Way Plastic Molded Loudspeaker"


def write_graph(tmp_path, lines, name="graph.jsonl"):
    path = tmp_path / name
    path.write_text("".join(json.dumps(line) + "\n" for line in lines), encoding="utf-8")
    return path


def schema_line(relations=(("bought_together_item", "item", "item"),)):
    return {
        "schema": {
            "node_types": ["item"],
            "features_per_type": {"item": ["title", "price"]},
            "relation_types": [list(r) for r in relations],
        }
    }


# -- loading -------------------------------------------------------------------


def test_load_fixture_graph(store):
    assert len(store) == 2
    assert "B000NJIYHY" in store and "B000E1U4WY" in store
    assert store.node("B000NJIYHY").neighbors["bought_together_item"] == ("B000E1U4WY",)
    assert len(store.schema.relation_types) == 1


def test_load_empty_node_list(tmp_path):
    store = load_graph(write_graph(tmp_path, [schema_line()]))
    assert len(store) == 0


def test_dangling_neighbor_is_referential_error(tmp_path):
    path = write_graph(
        tmp_path,
        [
            schema_line(),
            {"id": "a", "type": "item", "features": {}, "neighbors": {"bought_together_item": ["ghost"]}},
        ],
    )
    with pytest.raises(ReferentialIntegrityError) as excinfo:
        load_graph(path)
    assert "a" in str(excinfo.value) and "ghost" in str(excinfo.value)


def test_neighbor_type_mismatch_is_referential_error(tmp_path):
    lines = [
        {
            "schema": {
                "node_types": ["item", "brand"],
                "features_per_type": {"item": ["title"], "brand": ["name"]},
                "relation_types": [["made_by", "item", "brand"]],
            }
        },
        {"id": "a", "type": "item", "features": {}, "neighbors": {"made_by": ["b"]}},
        {"id": "b", "type": "item", "features": {}, "neighbors": {}},
    ]
    with pytest.raises(ReferentialIntegrityError):
        load_graph(write_graph(tmp_path, lines))


def test_undeclared_feature_is_schema_error(tmp_path):
    path = write_graph(
        tmp_path,
        [schema_line(), {"id": "a", "type": "item", "features": {"color": "red"}, "neighbors": {}}],
    )
    with pytest.raises(SchemaError):
        load_graph(path)


def test_undeclared_node_type_is_schema_error(tmp_path):
    path = write_graph(
        tmp_path, [schema_line(), {"id": "a", "type": "shop", "features": {}, "neighbors": {}}]
    )
    with pytest.raises(SchemaError):
        load_graph(path)


def test_undeclared_relation_is_schema_error(tmp_path):
    path = write_graph(
        tmp_path,
        [schema_line(), {"id": "a", "type": "item", "features": {}, "neighbors": {"similar_to": []}}],
    )
    with pytest.raises(SchemaError):
        load_graph(path)


def test_malformed_json_reports_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps(schema_line()) + "\n{not json\n", encoding="utf-8")
    with pytest.raises(GraphFileError) as excinfo:
        load_graph(path)
    assert excinfo.value.line == 2


def test_missing_schema_record(tmp_path):
    path = tmp_path / "noschema.jsonl"
    path.write_text('{"id": "a", "type": "item"}\n', encoding="utf-8")
    with pytest.raises(GraphFileError):
        load_graph(path)


def test_duplicate_node_id_rejected(tmp_path):
    node = {"id": "a", "type": "item", "features": {}, "neighbors": {}}
    with pytest.raises(ReferentialIntegrityError):
        load_graph(write_graph(tmp_path, [schema_line(), node, node]))


def test_schema_relation_with_unknown_type():
    with pytest.raises(SchemaError):
        GraphSchema(
            node_types=("item",),
            features_per_type={"item": ("title",)},
            relation_types=(RelationType("rel", "item", "ghost"),),
        )


def test_schema_duplicate_feature_names():
    with pytest.raises(SchemaError):
        GraphSchema(
            node_types=("item",),
            features_per_type={"item": ("title", "title")},
            relation_types=(),
        )


def test_store_is_immutable(store):
    record = store.node("B000NJIYHY")
    with pytest.raises(TypeError):
        record.features["title"] = "changed"
    with pytest.raises(Exception):
        record.id = "other"
    assert isinstance(record.neighbors["bought_together_item"], tuple)


# -- retrieval -----------------------------------------------------------------


def brute_force_bm25(store: GraphStore, query: str) -> dict[str, float]:
    """Straight-line BM25 over every node; no inverted index, no shortcuts."""
    docs = {
        node_id: tokenize(
            " ".join(
                store.node(node_id).features.get(f, "")
                for f in store.schema.features_for(store.node(node_id).node_type)
            )
        )
        for node_id in store.node_ids()
    }
    n_docs = len(docs)
    avgdl = sum(len(d) for d in docs.values()) / n_docs
    scores = {}
    for node_id, doc in docs.items():
        tf = Counter(doc)
        score = 0.0
        for term in tokenize(query):
            df = sum(1 for other in docs.values() if term in other)
            if term not in tf or df == 0:
                continue
            idf = math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))
            freq = tf[term]
            norm = BM25_K1 * (1 - BM25_B + BM25_B * len(doc) / avgdl)
            score += idf * freq * (BM25_K1 + 1) / (freq + norm)
        if score > 0.0:
            scores[node_id] = score
    return scores


def test_exact_title_query_ranks_anchor_first(store):
    ranked = store.retrieve(TITLE, 1)
    assert len(ranked) == 1
    node_id, score = ranked[0]
    assert node_id == "B000NJIYHY"
    assert score > 0


def test_exact_match_priority_for_every_feature_value(store):
    for node_id in store.node_ids():
        for value in store.node(node_id).features.values():
            assert store.retrieve(value, 1)[0][0] == node_id


def test_exact_match_is_case_insensitive(store):
    assert store.retrieve(TITLE.upper(), 1)[0][0] == "B000NJIYHY"


def test_ranking_matches_brute_force_bm25(store):
    query = "loudspeaker watt"
    expected = brute_force_bm25(store, query)
    got = store.retrieve(query, len(store))
    assert [node_id for node_id, _ in got] == sorted(
        expected, key=lambda n: (-expected[n], n)
    )
    for node_id, score in got:
        assert score == pytest.approx(expected[node_id], abs=1e-12)


def test_ranking_matches_brute_force_on_synthetic_corpus(tmp_path):
    rng = random.Random(7)
    words = ["speaker", "cable", "watt", "pro", "audio", "mount", "stand", "wire"]
    lines = [
        {
            "schema": {
                "node_types": ["item"],
                "features_per_type": {"item": ["title", "blurb"]},
                "relation_types": [],
            }
        }
    ]
    for i in range(30):
        lines.append(
            {
                "id": f"n{i:02d}",
                "type": "item",
                "features": {
                    "title": " ".join(rng.choices(words, k=rng.randint(2, 5))),
                    "blurb": " ".join(rng.choices(words, k=rng.randint(3, 9))),
                },
                "neighbors": {},
            }
        )
    store = load_graph(write_graph(tmp_path, lines))
    for _ in range(25):
        query = " ".join(rng.choices(words, k=rng.randint(1, 3)))
        expected = brute_force_bm25(store, query)
        exact = {
            node_id
            for node_id in store.node_ids()
            for value in store.node(node_id).features.values()
            if value.lower() == query.lower()
        }
        order = sorted(
            set(expected) | exact,
            key=lambda n: (n not in exact, -expected.get(n, 0.0), n),
        )
        got = [node_id for node_id, _ in store.retrieve(query, len(store))]
        assert got == order


def test_retrieval_is_deterministic(store):
    first = store.retrieve("loudspeaker", 5)
    for _ in range(5):
        assert store.retrieve("loudspeaker", 5) == first


def test_retrieval_k_limits_results(store):
    assert len(store.retrieve("speaker", 1)) <= 1


def test_empty_query_raises(store):
    with pytest.raises(EmptyQueryError):
        store.retrieve("!!! ---", 1)


def test_no_hit_query_returns_empty(store):
    assert store.retrieve("zzzqqq", 3) == []


# -- questions -----------------------------------------------------------------


def test_load_fixture_questions(questions):
    assert [q.question_id for q in questions] == [
        "ecommerce-0001",
        "ecommerce-0002",
        "ecommerce-0003",
        "ecommerce-0004",
    ]
    assert questions[0].reference_trajectory is not None
    assert questions[0].gold_answer == "12.95"


def test_question_counts_at_dataset_scale(tmp_path):
    # Counting behavior at the published per-label sizes for one domain.
    labels = ["Easy"] * 370 + ["Medium"] * 120 + ["Hard"] * 310 + ["OOD"] * 50
    path = tmp_path / "questions.jsonl"
    with open(path, "w", encoding="utf-8") as handle:
        for i, label in enumerate(labels):
            handle.write(
                json.dumps(
                    {
                        "question_id": f"q{i:04d}",
                        "question": f"question {i}",
                        "gold_answer": "x",
                        "domain": "Academic",
                        "difficulty": label,
                    }
                )
                + "\n"
            )
    questions = load_question_set(path)
    assert len(questions) == 850
    counts = Counter(q.difficulty for q in questions)
    assert counts == {"Easy": 370, "Medium": 120, "Hard": 310, "OOD": 50}


def test_empty_question_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    assert load_question_set(path) == []


def test_question_missing_gold_answer(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(
        json.dumps({"question_id": "q1", "question": "?", "domain": "d", "difficulty": "Easy"})
        + "\n",
        encoding="utf-8",
    )
    with pytest.raises(QuestionValidationError) as excinfo:
        load_question_set(path)
    assert "q1" in str(excinfo.value)


def test_question_needs_difficulty_or_trajectory(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(
        json.dumps({"question_id": "q9", "question": "?", "gold_answer": "a", "domain": "d"})
        + "\n",
        encoding="utf-8",
    )
    with pytest.raises(QuestionValidationError) as excinfo:
        load_question_set(path)
    assert "q9" in str(excinfo.value)


def test_question_order_preserved(questions):
    assert questions[1].difficulty == "Easy"
    assert questions[3].difficulty == "OOD"

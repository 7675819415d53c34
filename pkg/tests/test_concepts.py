from __future__ import annotations

import random
import string

import pytest

from coursegraph.concepts import (ConceptMention, build_mention_index, canonicalize,
                                  classify_role, extract_concepts, mine_concepts,
                                  parse_concept_surfaces)
from coursegraph.errors import EmptyConcept, MalformedResponse
from coursegraph.gateway import Gateway, JsonResult, StubChatBackend, StubEmbeddingBackend
from coursegraph.ingest import Chunk, Corpus, LectureSummary
from coursegraph.prompts import (CONCEPT_EXTRACTION_PROMPT, ROLE_CLASSIFICATION_PROMPT,
                                 render_role_user_prompt)


def _chunk(chunk_id: str, text: str, lecture_index: int = 0,
           chunk_index: int = 0) -> Chunk:
    lecture_id = chunk_id.rsplit("__", 1)[0]
    return Chunk(chunk_id=chunk_id, lecture_id=lecture_id, chunk_index=chunk_index,
                 lecture_index=lecture_index, page_numbers=(1,), text=text,
                 token_count=len(text.split()))


def _result(value: dict) -> JsonResult:
    return JsonResult(value=value, raw_text="", attempts_used=1)


def test_canonicalize_left_outer_join() -> None:
    assert canonicalize("Left outer join") == "LEFT_OUTER_JOIN"


def test_canonicalize_merge_sort() -> None:
    assert canonicalize("merge sort") == "MERGE_SORT"


def test_canonicalize_maps_each_nonalnum_char() -> None:
    # '+', '+', ' ', '(' each map to one underscore, as does the trailing ')'.
    assert canonicalize("C++ (advanced)") == "C____ADVANCED_"


def test_canonicalize_empty_raises() -> None:
    with pytest.raises(EmptyConcept):
        canonicalize("   ")


def test_canonicalize_property_suite() -> None:
    # 200 random surfaces: idempotent, case-collapsing, and closed over
    # [A-Z0-9_].
    rng = random.Random(0)
    alphabet = string.ascii_letters + string.digits + " -_()+./'" + "éß"
    for _ in range(200):
        surface = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 24)))
        if not surface.strip():
            surface += "x"
        canonical = canonicalize(surface)
        assert canonical
        assert canonicalize(canonical) == canonical
        assert canonicalize(surface.lower()) == canonical
        assert all(c in string.ascii_uppercase + string.digits + "_" for c in canonical)


def test_extract_dedupes_case_insensitively() -> None:
    surfaces = parse_concept_surfaces(
        _result({"concepts": ["Recursion", "recursion", "Merge Sort"]}))
    assert surfaces == ["Recursion", "Merge Sort"]


def test_extract_empty_list_is_valid() -> None:
    assert parse_concept_surfaces(_result({"concepts": []})) == []


def test_extract_drops_overlong_and_blank_surfaces() -> None:
    surfaces = parse_concept_surfaces(_result({"concepts": [
        "  ", "one two three four five six", "valid concept", 42]}))
    assert surfaces == ["valid concept"]


def test_extract_merge_sort_definition_chunk() -> None:
    chunk = _chunk("lec2__2", "Merge sort recursively divides the array into halves "
                              "and sits alongside other sorting algorithms.")
    stub = StubChatBackend({})
    stub.add(CONCEPT_EXTRACTION_PROMPT, chunk.text,
             {"concepts": ["merge sort", "recursion", "sorting algorithms"]})
    gateway = Gateway(stub, StubEmbeddingBackend())
    surfaces = extract_concepts(chunk, gateway)
    assert {"merge sort", "recursion", "sorting algorithms"} <= set(surfaces)


def test_extract_malformed_propagates() -> None:
    chunk = _chunk("lec1__0", "text body")
    stub = StubChatBackend({})
    stub.add(CONCEPT_EXTRACTION_PROMPT, chunk.text, "absolutely not json")
    gateway = Gateway(stub, StubEmbeddingBackend())
    with pytest.raises(MalformedResponse):
        extract_concepts(chunk, gateway, max_attempts=2)


def _role_gateway(chunk: Chunk, display: str, response) -> Gateway:
    stub = StubChatBackend({})
    stub.add(ROLE_CLASSIFICATION_PROMPT, render_role_user_prompt(display, chunk.text),
             response)
    return Gateway(stub, StubEmbeddingBackend())


def test_classify_role_definition_with_verified_snippet() -> None:
    chunk = _chunk("lec2__2", "Merge sort recursively divides the array into halves.")
    gateway = _role_gateway(chunk, "merge sort",
                            {"role": "Definition",
                             "snippet": "Merge sort recursively divides"})
    label = classify_role(chunk, "merge sort", gateway)
    assert label.role == "Definition"
    assert label.snippet == "Merge sort recursively divides"


def test_classify_role_assumption() -> None:
    chunk = _chunk("lec2__1", "Merge sort assumes you already know recursion well.")
    gateway = _role_gateway(chunk, "recursion",
                            {"role": "Assumption",
                             "snippet": "assumes you already know recursion"})
    assert classify_role(chunk, "recursion", gateway).role == "Assumption"


def test_classify_role_na_passthrough() -> None:
    chunk = _chunk("lec1__0", "Some text.")
    gateway = _role_gateway(chunk, "x", {"role": "NA", "snippet": ""})
    label = classify_role(chunk, "x", gateway)
    assert label.role == "NA"
    assert label.snippet == ""


def test_classify_role_unverified_snippet_cleared() -> None:
    chunk = _chunk("lec1__0", "Recursion shows up here.")
    gateway = _role_gateway(chunk, "recursion",
                            {"role": "Example", "snippet": "not in the chunk"})
    label = classify_role(chunk, "recursion", gateway)
    assert label.role == "Example"
    assert label.snippet == ""


def test_classify_role_unknown_role_downgrades_to_na() -> None:
    chunk = _chunk("lec1__0", "Recursion shows up here.")
    gateway = _role_gateway(chunk, "recursion",
                            {"role": "Comparison", "snippet": "Recursion shows up"})
    label = classify_role(chunk, "recursion", gateway)
    assert label.role == "NA"
    assert label.snippet == ""


def test_classify_role_case_insensitive_role_values() -> None:
    chunk = _chunk("lec1__0", "Recursion shows up here.")
    gateway = _role_gateway(chunk, "recursion",
                            {"role": "definition", "snippet": "Recursion shows up"})
    assert classify_role(chunk, "recursion", gateway).role == "Definition"


def _mention(concept_id: str, lecture_index: int, chunk_index: int) -> ConceptMention:
    return ConceptMention(concept_id=concept_id, display=concept_id.lower(),
                          chunk_id=f"lec{lecture_index}__{chunk_index}",
                          lecture_id=f"lec{lecture_index}",
                          lecture_index=lecture_index, chunk_index=chunk_index,
                          role="NA", snippet="")


def test_first_intro_lexicographic_min() -> None:
    mentions, first = build_mention_index(
        [_mention("V", 2, 5), _mention("V", 1, 9)])
    assert first["V"] == (1, 9)


def test_first_intro_singleton() -> None:
    _, first = build_mention_index([_mention("V", 3, 4)])
    assert first["V"] == (3, 4)


def test_first_intro_matches_brute_force_on_random_sets() -> None:
    rng = random.Random(42)
    for _ in range(100):
        rows = [_mention(f"C{rng.randint(0, 9)}", rng.randint(0, 5), rng.randint(0, 8))
                for _ in range(rng.randint(1, 200))]
        mentions, first = build_mention_index(rows)
        # Brute force: scan every mention of each concept.
        expected: dict[str, tuple[int, int]] = {}
        for mention in mentions:
            coordinate = (mention.lecture_index, mention.chunk_index)
            best = expected.get(mention.concept_id)
            if best is None or coordinate < best:
                expected[mention.concept_id] = coordinate
        assert first == expected
        for mention in mentions:
            assert first[mention.concept_id] <= (mention.lecture_index,
                                                 mention.chunk_index)


def test_mention_index_unique_per_concept_chunk() -> None:
    rows = [_mention("V", 0, 0), _mention("V", 0, 0), _mention("W", 0, 0)]
    mentions, _ = build_mention_index(rows)
    assert len(mentions) == 2


def _tiny_corpus() -> Corpus:
    chunks = (
        _chunk("lec1__0", "Merge-sort is defined here in detail.", 0, 0),
        _chunk("lec2__0", "Merge Sort appears again later on.", 1, 0),
    )
    lectures = (LectureSummary("lec1", "lec1.txt", 0, 1),
                LectureSummary("lec2", "lec2.txt", 1, 1))
    return Corpus(chunks=chunks, lectures=lectures, config_fingerprint="t")


def test_mine_concepts_merges_colliding_ids_keeping_earliest_display() -> None:
    corpus = _tiny_corpus()
    stub = StubChatBackend({})
    stub.add(CONCEPT_EXTRACTION_PROMPT, corpus.chunks[0].text,
             {"concepts": ["merge-sort"]})
    stub.add(CONCEPT_EXTRACTION_PROMPT, corpus.chunks[1].text,
             {"concepts": ["Merge Sort"]})
    gateway = Gateway(stub, StubEmbeddingBackend())
    mentions, first = mine_concepts(corpus, gateway, no_roles=True)
    assert {m.concept_id for m in mentions} == {"MERGE_SORT"}
    assert all(m.display == "merge-sort" for m in mentions)
    assert first["MERGE_SORT"] == (0, 0)


def test_mine_concepts_no_roles_records_na_everywhere() -> None:
    corpus = _tiny_corpus()
    stub = StubChatBackend({})
    for chunk in corpus.chunks:
        stub.add(CONCEPT_EXTRACTION_PROMPT, chunk.text, {"concepts": ["merge sort"]})
    gateway = Gateway(stub, StubEmbeddingBackend())
    mentions, _ = mine_concepts(corpus, gateway, no_roles=True)
    assert len(mentions) == 2
    assert all(m.role == "NA" and m.snippet == "" for m in mentions)


def test_mine_concepts_with_roles_one_call_per_pair() -> None:
    corpus = _tiny_corpus()
    stub = StubChatBackend({})
    for chunk in corpus.chunks:
        stub.add(CONCEPT_EXTRACTION_PROMPT, chunk.text, {"concepts": ["merge sort"]})
        stub.add(ROLE_CLASSIFICATION_PROMPT,
                 render_role_user_prompt("merge sort", chunk.text),
                 {"role": "Definition", "snippet": ""})
    gateway = Gateway(stub, StubEmbeddingBackend())
    mentions, _ = mine_concepts(corpus, gateway)
    assert [m.role for m in mentions] == ["Definition", "Definition"]

"""Prompt templates and block renderers.

The five core templates are used exactly as written. The relation judge
template carries ``{A}``/``{B}``/``{*_BLOCK}`` slots plus ``{{``/``}}``
escapes and is rendered with ``str.format``; the two evaluation templates
embed a literal single-braced JSON output block, so their named slots are
substituted with ``str.replace`` instead. Block rendering formats are part
of the artifact contract (the stub backend keys on rendered prompt bytes).
"""

from __future__ import annotations

from typing import Iterable, Mapping, Protocol, Sequence

ROLE_ORDER = ("Definition", "Example", "Assumption", "NA")

CONCEPT_EXTRACTION_PROMPT = """You are an instructor that extracts learning concepts from text.

- Concept: a core idea or topic about the subject matter. Only extract meaningful course concepts.
DO NOT extract example values, variable names, numbers, formulas, or code elements.
Ignore content inside examples, formulas.


Return strict JSON:
{ "concepts": ["..."] }

Rules:
- 1–5 words per concept
- No code tokens, variable names, numbers, example values
- Deduplicate"""

ROLE_CLASSIFICATION_PROMPT = """You will be given a text chunk from university lecture notes or slides and a concept from the course.
Classify the role the concept plays in this chunk into one of four categories:

1**Definition**: The concept is being defined, explained, or introduced. The text describes what the concept is, its properties, or how it works.
Simple example: "Binary search is an algorithm that finds an element in a sorted array by repeatedly dividing the search interval in half."
Complex example:
- Concept: "Big O notation"
- Text: "When analyzing algorithm efficiency, we need a formal way to describe performance. Big O notation provides an upper bound on the growth rate of an algorithm's time complexity, expressing how runtime scales with input size n."
- Classification: Definition (the concept itself is being explained, even when embedded in broader context)

2**Example**: The concept is being demonstrated or illustrated through a concrete example, walkthrough, or application. The text shows the concept in action.
Simple example: "Let's apply binary search to find 7 in [1,3,5,7,9,11]: First, check the middle element 5..."
Complex example:
- Concept: "Recursion"
- Text: "To understand how the call stack works, consider computing factorial(3). The function calls factorial(2), which calls factorial(1), which calls factorial(0) returning 1. Then factorial(1) returns 1x1=1, factorial(2) returns 2x1=2, and finally factorial(3) returns 3x2=6."
- Classification: Example (shows recursion through a concrete walkthrough, even if framed as explanation)

3**Assumption**: The concept is being used as prior knowledge, a prerequisite, or a foundation for explaining something else. The text assumes familiarity with the concept to build further understanding.
Simple example: "Using binary search, we can now efficiently implement the dictionary lookup feature..."
Complex example:
- Concept: "Hash functions"
- Text: "Hash tables achieve O(1) average-case lookup because hash functions distribute keys uniformly across buckets. However, we must handle collisions when multiple keys map to the same index."
- Classification: Assumption (hash functions are used as known background to explain hash table behavior)

4** NA **: The concept does not fall under any of the above mentioned roles: (Definition, Example, Assumption).


**Key distinction**: If the concept is being taught -> Definition. If it's being shown in action -> Example. If it's being used to explain something else -> Assumption. If none of the previously mentioned then -> NA


Also return an evidence snippet:
- Must be an exact substring copied from the chunk (10-30 words)
- Should best support your classification
- Keep it concise and relevant

Return strict JSON format only:
{ "role": "Definition" | "Example" | "Assumption" | "NA", "snippet": "..." }"""

RELATION_JUDGE_PROMPT = """You are an expert course instructor building a concept hierarchy for a university course.

TASK:
- Use ONLY these relations: ["depends_on","part_of"].
- For this ordered pair (A,B), choose the MOST DOMINANT relation if any exists.
- **CRITICAL**: The relation direction is ALWAYS from A to B (A -> B). Do NOT reverse the direction.
- Dominance rules: prefer the single relation that best supports learning order and course understanding.
- Be minimal: avoid drawing edges just because they are possible. Only include edges that are clearly supported.
- If two relations both plausibly hold, output the dominant one only; output the other ONLY if strongly justified (lower confidence).
- You can skip making a relationship if there is no clear relation.
CAUTION: Never make a relationship between concepts that have no clear connection.

Definitions:
- Concept: a distinct course idea/skill/topic.
- Role: how a concept appears in a passage.
  - Definition = the passage defines/explains/introduces the concept.
  - Example = the passage demonstrates the concept via a concrete instance/walkthrough.
  - Assumption = the passage uses the concept as prior knowledge without teaching it.

RELATION DEFINITIONS & EXAMPLES (direction is ALWAYS A → B):

1. "depends_on": A depends_on B means A requires B as a prerequisite (B must be learned BEFORE A).
   **Direction**: A → B means "A requires B first"
   Examples:
   - "gradient descent" depends_on "derivatives"
     -> gradient descent (A) requires derivatives (B) as prerequisite
   - "backpropagation" depends_on "chain rule"
     -> backpropagation (A) requires chain rule (B) as prerequisite
   - "ANOVA" depends_on "variance"
     -> ANOVA (A) requires variance (B) as prerequisite

   **WRONG examples (these would be backwards)**:
   - DO NOT say "derivatives" depends_on "gradient descent" (this is reversed!)
   - DO NOT say B depends_on A when A actually needs B first

2. "part_of": A part_of B means A is a component/subtype/member of the broader concept B.
   **Direction**: A -> B means "A is part of B" (A is the specific, B is the general)
   Examples:
   - "convolutional layer" part_of "neural networks"
     -> convolutional layer (A) is a component of neural networks (B)
   - "t-test" part_of "hypothesis testing"
     -> t-test (A) is a specific type within hypothesis testing (B)
   - "supervised learning" part_of "machine learning"
     -> supervised learning (A) is a subcategory of machine learning (B)

   **WRONG examples (these would be backwards)**:
   - DO NOT say "neural networks" part_of "convolutional layer" (this is reversed!)
   - DO NOT say B part_of A when A is actually the specific case of B

PAIR:
A = "{A}"
B = "{B}"

ROLES:
{ROLE_BLOCK}

TEMPORAL / STATS:
{TEMPORAL_BLOCK}

EVIDENCE_MODE:
{MODE_BLOCK}

RULES FOR USING THE EVIDENCE TEXT: - Base your decision ONLY on the text shown in EVIDENCE below. - The EVIDENCE text is the supporting passages for this (A,B) pair. - If the text does not clearly support a relation, output null. - Your returned evidence[].quote MUST be an exact substring copied from the provided text.

EVIDENCE (use ONLY what is shown below; do not assume anything unstated):
{EVIDENCE_BLOCK}

Return strict JSON ONLY (no markdown, no extra text):
{{
  "A": "{A}",
  "B": "{B}",
  "relation": "depends_on" | "part_of" | null,
  "confidence": 0.0,
  "justification": "1-3 sentences grounded in the evidence above",
  "evidence": [
    {{"type": "chunk" | "cluster", "chunk_id": "...", "lecture_id": "...", "page_numbers": [1,2], "quote": "..."}}
  ]
}}"""

NODE_SIGNIFICANCE_PROMPT = """You are evaluating a single concept node extracted for a course knowledge graph.

Course Title: {course_name}

Goal:
Decide whether the node is a SIGNIFICANT course-content concept:
something students should be taught and should understand/use in this course.

Important:
- "Significant concept" means key educational concepts (topic, method, principle, theorem,
    algorithm, framework, key technical term) for a course.
- It does NOT mean logistics/admin/metadata (e.g., instructor name, due dates, office hours,
    grading policy, LMS/Canvas, Zoom link).
- It does NOT mean educational concepts that would typically fall under a different course/topic (e.g., "Constitution", mentioned in an example of text parsing, would NOT be a significant concept for an NLP course.)

Concept Node:
- A = "{node_label}"

Use the following 0-2 ordinal scale strictly (Concept Node significance/validity):

    Definitions:
    - "Significant/meaningful concept" = a critical educational concept that students should
      be taught and be able to explain/use in this course (core topic, method, principle,
      model, theorem, algorithm, technique, framework, key term).
    - "Not meaningful for the course" includes logistical/admin/metadata items that do not
      represent course content knowledge.

    Clear examples:
    - Meaningful (YES / likely 2 if supported): "recursion", "merge sort", "Bayes' theorem",
      "photosynthesis", "supply and demand", "gradient descent", "constitutional amendments".
    - Not meaningful (NO / likely 0 even if mentioned): instructor/TA names, office hours,
      due dates, grading policy, course number, Zoom link, classroom location, required textbook ISBN,
      "homework submission", "attendance", "Canvas", "midterm".

    Scoring:
    0 = Invalid OR not a course-content concept (logistics/metadata), OR clearly insignificant or unrelated to course learning goals.
    1 = Plausible course-content concept but weakly supported, too vague, overly broad, or ambiguous given excerpts.
        (Use 1 when you cannot confirm significance from the excerpts.)
    2 = Clearly a valid course-content concept AND clearly significant for the course, with strong excerpt support.

    Evidence policy:
    - Base your score ONLY on the provided excerpts and the node label.
    - If evidence is insufficient/ambiguous, score 1 and state what is missing.
    - Cite evidence by excerpt_id (avoid long quotations).

Instructor-material excerpts (evidence base):
[formatted exerpts here]

Requirements for your answer:
- Output STRICT JSON only (no markdown).
- Rationale must cite excerpt_id(s) as evidence (e.g., "[1]", "[3]").
- If evidence is insufficient or ambiguous, score 1 and say what is missing.

Output format (STRICT JSON, no markdown, no trailing commentary):
        {
          "score": <integer in the required range>,
          "rationale": "<2-6 sentences; must reference excerpt_ids as evidence>",
          "evidence": ["<excerpt_id>", "..."],
          "notes": ["<optional brief note>", "..."]
        }"""

TRIPLET_ACCURACY_PROMPT = """You are evaluating a single directed typed edge (concept triplet) in a course knowledge graph.

        Task:
        Score whether the edge type and direction accurately reflect the conceptual relationship
        between the two concepts, based strictly on the instructor-provided excerpts.

        Course Title: {course_name}

        Concept Triplet:
        - A = "{edge['source']}"
        - relation = "{edge['relation_type']}"  (allowed: depends_on, part_of)
        - B = "{edge['target']}"
        Interpreting relation types:
        - depends_on: B is a prerequisite of A (B should be learned before A)
        - part_of:    B is a subtopic/component of A (A contains/organizes B)

        Use the following 0-2 ordinal scale strictly (Directed, typed edge accuracy):

    You must judge TWO things:
    (1) Whether A and B are directly related as course concepts, AND
    (2) Whether the relation TYPE AND DIRECTION are correct.

    The options for relation types are: depends_on, part_of, and None.

    If A and B should NOT be directly related, then the proposed relationship should be "None" (e.g., "mergesort", "machine learning" should not be directly related).

    Relation semantics (direction matters):
    - depends_on: Comprehending A requires understanding B; B is a prerequisite of A. Students should learn/understand B BEFORE A.
      (Read as: A depends_on B.)
    - part_of: A is a subtopic/component of B. B contains/organizes A.
      (Read as: A is part_of B.)

    Clear examples (directional):
    - Correct depends_on:
      A="merge sort" depends_on B="recursion": CORRECT (merge sort relies on recursion ideas)
      A="backpropagation" depends_on B="chain rule": CORRECT
    - Incorrect depends_on (reversed):
      A="recursion" depends_on B="merge sort": WRONG (direction reversed; recursion is more fundamental)

    - Correct part_of:
      A="merge sort" part_of B="sorting algorithms" and relation part_of where A part_of B: CORRECT
      A="mitochondria" with B="cell" and relation part_of where A part_of B: CORRECT
    - Incorrect part_of (reversed):
      A="sorting algorithms" part_of B="merge sort": WRONG

    Scoring:
    0 = No: the proposed direct relationship is wrong OR not supported by excerpts.
    1 = Somewhat: A and B are related, but the type and/or the direction is wrong or unclear from evidence.
    2 = Yes: A and B are directly related AND the type AND direction match the excerpts.

    Evidence policy:
    - Base your score ONLY on the provided excerpts and the proposed edge.
    - If evidence is insufficient/ambiguous, score 1 and state what is missing.
    - Cite evidence by excerpt_id (avoid long quotations).

        Instructor-material excerpts (evidence base):
        [formatted excerpts]

        Output format (STRICT JSON, no markdown, no trailing commentary):
        {
          "score": <integer in the required range>,
          "rationale": "<2-6 sentences; must reference excerpt_ids as evidence>",
          "evidence": ["<excerpt_id>", "..."],
          "notes": ["<optional brief note>", "..."]
        }"""

QUESTION_TAG_PROMPT = """You map an assessment question onto course concepts.

You are given a question and a numbered list of candidate concepts from the
course knowledge graph. Select every concept the question directly assesses.
Only choose concepts from the candidate list, identified by their concept_id.
Assign each selected concept a confidence between 0.0 and 1.0.

Return strict JSON only:
{ "tags": [ {"concept_id": "...", "confidence": 0.0} ] }"""

ERROR_DIFF_PROMPT = """You compare a student submission against the expected solution for one
assessment question and identify which of the question's tagged concepts the
student appears to misunderstand.

Only choose concepts from the tagged list, identified by their concept_id.
If the submission matches the expected solution, return an empty list.

Return strict JSON only:
{ "error_concepts": ["..."] }"""

_NODE_EXCERPT_SLOT = "[formatted exerpts here]"
_TRIPLET_EXCERPT_SLOT = "[formatted excerpts]"

# Opening lines used to classify a prompt into a stub-fixture kind.
_KIND_PREFIXES = (
    ("extract", "You are an instructor that extracts learning concepts"),
    ("role", "You will be given a text chunk from university lecture notes"),
    ("relation", "You are an expert course instructor building a concept hierarchy"),
    ("node_eval", "You are evaluating a single concept node"),
    ("triplet_eval", "You are evaluating a single directed typed edge"),
    ("tag", "You map an assessment question onto course concepts"),
    ("diff", "You compare a student submission against the expected solution"),
)


def prompt_kind(system_prompt: str, user_prompt: str) -> str:
    """Classify a request by which template it was rendered from."""
    for text in (system_prompt, user_prompt):
        lead = text.lstrip()
        for kind, prefix in _KIND_PREFIXES:
            if lead.startswith(prefix):
                return kind
    return "completion"


class _EvidenceLike(Protocol):
    chunk_id: str
    lecture_id: str
    page_numbers: Sequence[int]
    text: str


def format_role_counts(counts: Mapping[str, int]) -> str:
    parts = [f"{role}:{counts[role]}" for role in ROLE_ORDER if counts.get(role)]
    return "{" + ",".join(parts) + "}"


def render_role_block(display_a: str, roles_a: Mapping[str, int],
                      display_b: str, roles_b: Mapping[str, int]) -> str:
    return (f'A="{display_a}": roles={format_role_counts(roles_a)}\n'
            f'B="{display_b}": roles={format_role_counts(roles_b)}')


def render_temporal_block(first_a: Sequence[int], first_b: Sequence[int]) -> str:
    fa, fb = tuple(first_a), tuple(first_b)
    if fa < fb:
        order = "before"
    elif fa > fb:
        order = "after"
    else:
        order = "same-chunk-as"
    return (f"first(A)=(lecture {fa[0]}, chunk {fa[1]}); "
            f"first(B)=(lecture {fb[0]}, chunk {fb[1]}); "
            f"A introduced {order} B")


def render_mode_block(evidence_mode: str, source_cluster: int | None = None) -> str:
    if evidence_mode == "chunk":
        return "chunk co-occurrence"
    return f"cluster co-occurrence (cluster {source_cluster})"


def render_evidence_block(evidence: Iterable[_EvidenceLike]) -> str:
    lines = []
    for number, item in enumerate(evidence, start=1):
        pages = ",".join(str(p) for p in item.page_numbers)
        lines.append(f"{number}. [{item.chunk_id} | {item.lecture_id} | pages {pages}] {item.text}")
    return "\n".join(lines)


def render_relation_prompt(a_display: str, b_display: str, role_block: str,
                           temporal_block: str, mode_block: str,
                           evidence_block: str) -> str:
    return RELATION_JUDGE_PROMPT.format(
        A=a_display,
        B=b_display,
        ROLE_BLOCK=role_block,
        TEMPORAL_BLOCK=temporal_block,
        MODE_BLOCK=mode_block,
        EVIDENCE_BLOCK=evidence_block,
    )


def render_role_user_prompt(concept_display: str, chunk_text: str) -> str:
    return f'Concept: "{concept_display}"\n\nChunk:\n{chunk_text}'


def render_excerpt_block(excerpts: Iterable) -> str:
    return "\n\n".join(f"[{e.excerpt_id}] ({e.chunk_id}) {e.text}" for e in excerpts)


def render_node_prompt(course_name: str, node_label: str, excerpt_block: str) -> str:
    filled = NODE_SIGNIFICANCE_PROMPT.replace("{course_name}", course_name)
    filled = filled.replace("{node_label}", node_label)
    return filled.replace(_NODE_EXCERPT_SLOT, excerpt_block)


def render_triplet_prompt(course_name: str, source_label: str, relation: str,
                          target_label: str, excerpt_block: str) -> str:
    filled = TRIPLET_ACCURACY_PROMPT.replace("{course_name}", course_name)
    filled = filled.replace("{edge['source']}", source_label)
    filled = filled.replace("{edge['relation_type']}", relation)
    filled = filled.replace("{edge['target']}", target_label)
    return filled.replace(_TRIPLET_EXCERPT_SLOT, excerpt_block)


def render_tag_user_prompt(question_text: str, candidates: Sequence[tuple[str, str]]) -> str:
    lines = [f"- {concept_id}: {display}" for concept_id, display in candidates]
    return f"Question:\n{question_text}\n\nCandidate concepts:\n" + "\n".join(lines)


def render_diff_user_prompt(question_text: str, expected_solution: str,
                            submission: str, tagged: Sequence[tuple[str, str]]) -> str:
    lines = [f"- {concept_id}: {display}" for concept_id, display in tagged]
    return (f"Question:\n{question_text}\n\n"
            f"Expected solution:\n{expected_solution}\n\n"
            f"Student submission:\n{submission}\n\n"
            f"Tagged concepts:\n" + "\n".join(lines))

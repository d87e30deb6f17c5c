import dataclasses

import pytest

from molblend import prompts
from molblend.chem.records import MoleculeRecord
from molblend.datagen import LLMClient
from molblend.evaluation import (
    CRITERIA,
    McqItem,
    PampaItem,
    evaluate_pair,
    extract_final_answer,
    extract_option_letter,
    judge_pairwise,
    judge_reasoning,
    mcq_chat,
    moleculeqa_eval,
    pampa_messages,
    pampa_metrics,
    pampa_predict,
    parse_judge_verdict,
    parse_reasoning_verdict,
    relative_score,
    render_judge_messages,
    select_representatives,
)


class ScriptedModel:
    """Plays back canned responses keyed by molecule id."""

    def __init__(self, responses, continuations=None):
        self.responses = responses
        self.continuations = continuations or {}
        self.continue_calls = []

    def respond(self, messages, record=None, **kwargs):
        return self.responses[record.id if record else None]

    def continue_response(self, messages, partial, record=None, **kwargs):
        self.continue_calls.append(partial)
        return self.continuations.get(record.id if record else None, "")


def scripted_from_fixture(pampa_fixture):
    responses = {row["molecule_id"]: row["response"] for row in pampa_fixture}
    continuations = {
        row["molecule_id"]: row["continuation"] for row in pampa_fixture
    }
    return ScriptedModel(responses, continuations)


def fixture_items(pampa_fixture, corpus):
    by_id = {rec.id: rec for rec in corpus}
    return [
        PampaItem(record=by_id[row["molecule_id"]], label=row["label"])
        for row in pampa_fixture
    ]


# ---------------------------------------------------------------------------
# representative selection


def test_representatives_full_corpus(corpus):
    reps = select_representatives(corpus, k=len(corpus), seed=0)
    assert reps == list(corpus)


def test_representatives_k1_and_bounds(corpus):
    reps = select_representatives(corpus, k=1, seed=0)
    assert len(reps) == 1 and reps[0] in corpus
    with pytest.raises(ValueError, match="k must be"):
        select_representatives(corpus, k=0)
    with pytest.raises(ValueError, match="k must be"):
        select_representatives(corpus, k=len(corpus) + 1)
    with pytest.raises(ValueError, match="empty"):
        select_representatives([], k=1)


def test_representatives_deterministic_and_distinct(corpus):
    a = select_representatives(corpus, k=8, seed=42)
    b = select_representatives(corpus, k=8, seed=42)
    assert [r.id for r in a] == [r.id for r in b]
    assert len({r.id for r in a}) == 8
    c = select_representatives(corpus, k=8, seed=43)
    assert all(r in corpus for r in c)


# ---------------------------------------------------------------------------
# pairwise judge


def test_render_judge_contains_references(corpus):
    messages = render_judge_messages(corpus[0], "structural", "resp A", "resp B")
    user = messages[1]["content"]
    assert corpus[0].smiles in user
    assert corpus[0].iupac in user
    assert "Explain the structural features of the given molecule." in user
    assert "[Assistant 1]\nresp A\n[End of Assistant 1]" in user
    with pytest.raises(ValueError, match="non-empty"):
        render_judge_messages(corpus[0], "structural", "", "resp B")
    with pytest.raises(ValueError, match="unknown level"):
        render_judge_messages(corpus[0], "stylistic", "a", "b")


def test_parse_judge_verdict_roundtrip():
    text = (
        "[Assistant 1]\n- Helpfulness: 8\n- Relevance: 7\n- Accuracy: 9\n"
        "- Level of detail: 6\n- Overall: 8\n"
        "[Assistant 2]\n- Helpfulness: 5\n- Relevance: 6\n- Accuracy: 7.5\n"
        "- Level of detail: 5\n- Overall: 6\n"
        "Reasoned comparison follows."
    )
    verdict = parse_judge_verdict(text)
    assert verdict.scores[1]["helpfulness"] == 8.0
    assert verdict.scores[1]["detail"] == 6.0
    assert verdict.scores[2]["accuracy"] == 7.5
    assert set(verdict.scores[1]) == set(CRITERIA)


def test_parse_judge_verdict_rejects_incomplete():
    missing_overall = (
        "[Assistant 1]\n- Helpfulness: 8\n- Relevance: 7\n- Accuracy: 9\n"
        "- Level of detail: 6\n- Overall: 8\n"
        "[Assistant 2]\n- Helpfulness: 5\n- Relevance: 6\n- Accuracy: 7\n"
        "- Level of detail: 5\n"
    )
    with pytest.raises(ValueError, match="missing 'Overall'"):
        parse_judge_verdict(missing_overall)
    only_first = (
        "[Assistant 1]\n- Helpfulness: 8\n- Relevance: 7\n- Accuracy: 9\n"
        "- Level of detail: 6\n- Overall: 8\n"
    )
    with pytest.raises(ValueError, match="missing \\[Assistant 2\\]"):
        parse_judge_verdict(only_first)
    out_of_range = (
        "[Assistant 1]\n- Helpfulness: 11\n- Relevance: 7\n- Accuracy: 9\n"
        "- Level of detail: 6\n- Overall: 8\n[Assistant 2]\n- Helpfulness: 5\n"
        "- Relevance: 6\n- Accuracy: 7\n- Level of detail: 5\n- Overall: 6\n"
    )
    with pytest.raises(ValueError, match="outside"):
        parse_judge_verdict(out_of_range)


def test_judge_pairwise_mock_symmetry(corpus):
    client = LLMClient("mock:")
    verdict = judge_pairwise(client, corpus[0], "chemical", "same text", "same text")
    one, two = verdict.scores[1], verdict.scores[2]
    # the mock biases position 1 upward by exactly one point
    assert all(one[key] - two[key] == 1.0 for key in CRITERIA)


def test_judge_pairwise_retry_then_reject(corpus):
    class BadClient(LLMClient):
        def __init__(self):
            super().__init__("mock:")
            self.calls = 0

        def chat(self, messages, temperature=1.0):
            self.calls += 1
            return "no scores here"

    client = BadClient()
    with pytest.raises(ValueError, match="rejected after 2 attempts"):
        judge_pairwise(client, corpus[0], "structural", "a", "b", retries=1)
    assert client.calls == 2


def test_evaluate_pair_cancels_position_bias(corpus):
    client = LLMClient("mock:")
    scores = evaluate_pair(client, corpus[0], "biological", "identical", "identical")
    for key in CRITERIA:
        a, b = scores[key]
        assert a == b  # single-order judging would leave a one-point gap


def test_relative_score_arithmetic():
    assert relative_score([{"overall": 6.0}], [{"overall": 6.0}]) == {"overall": 1.0}
    out = relative_score([{"overall": 9.0}], [{"overall": 6.0}])
    assert out["overall"] == pytest.approx(1.5)
    two = relative_score(
        [{"overall": 8.0}, {"overall": 4.0}], [{"overall": 8.0}, {"overall": 8.0}]
    )
    assert two["overall"] == pytest.approx(0.75)
    with pytest.raises(ValueError, match="non-positive reference"):
        relative_score([{"overall": 5.0}], [{"overall": 0.0}])
    with pytest.raises(ValueError, match="align"):
        relative_score([{"overall": 5.0}], [])
    with pytest.raises(ValueError, match="inconsistent"):
        relative_score([{"overall": 5.0}], [{"detail": 5.0}])


# ---------------------------------------------------------------------------
# permeability prompts and extraction


def test_pampa_prompt_variants():
    default = pampa_messages("default")
    assert prompts.PAMPA_SYSTEM_BASE in default[0].content
    assert prompts.PAMPA_ANSWER_FORMAT in default[0].content
    assert "Lipophilicity" not in default[0].content
    assert default[1].content == prompts.PAMPA_USER

    cot = pampa_messages("cot")
    assert cot[1].content.endswith(prompts.PAMPA_COT_LINE)
    assert "Lipophilicity" not in cot[0].content

    info = pampa_messages("task_info")
    assert "1) Lipophilicity: Higher lipophilicity generally correlates" in info[0].content
    assert not info[1].content.endswith(prompts.PAMPA_COT_LINE)

    with pytest.raises(ValueError, match="unknown mode"):
        pampa_messages("zero_shot_cot")


def test_pampa_few_shot_examples(corpus):
    examples = [(corpus[i], "high" if i % 2 == 0 else "low_to_moderate") for i in range(3)]
    messages = pampa_messages("few_shot", examples)
    user = messages[1].content
    assert user.count("Example ") == 3
    assert user.count("Final answer: ") == 3
    assert user.index("Example 3:") < user.index(prompts.PAMPA_USER)
    with pytest.raises(ValueError, match="needs labeled examples"):
        pampa_messages("few_shot")


def test_extract_final_answer_formats():
    assert extract_final_answer("blah. Final answer: High permeability.") == "high"
    assert (
        extract_final_answer("blah. Final answer:  Low-to-moderate permeability.")
        == "low_to_moderate"
    )
    assert extract_final_answer("FINAL ANSWER : high permeability") == "high"
    assert extract_final_answer("The molecule permeates well.") is None
    assert extract_final_answer("Final answer: who knows") is None
    both = "Final answer: High permeability. Wait. Final answer: Low-to-moderate permeability."
    assert extract_final_answer(both) == "low_to_moderate"


def test_extract_final_answer_idempotent():
    text = "Reasoning. Final answer: High permeability."
    first = extract_final_answer(text)
    assert extract_final_answer(text) == first == "high"


# ---------------------------------------------------------------------------
# permeability harness on the scripted fixture


def test_pampa_fixture_metrics(pampa_fixture, corpus):
    model = scripted_from_fixture(pampa_fixture)
    items = [
        pampa_predict(model, item) for item in fixture_items(pampa_fixture, corpus)
    ]
    assert len(model.continue_calls) == 6  # four recoverable + two hopeless
    assert all(call.endswith(prompts.FINAL_ANSWER_PREFIX) for call in model.continue_calls)
    metrics = pampa_metrics(items)
    assert metrics["n_items"] == 20
    assert metrics["n_predicted"] == 18
    assert metrics["n_nonconforming"] == 2
    assert metrics["accuracy"] == pytest.approx(12 / 18)
    assert metrics["label_ratio"] == pytest.approx(0.5)
    assert not metrics["all_one_label"]
    assert not metrics["not_applicable"]
    assert metrics["n_predicted"] + metrics["n_nonconforming"] == metrics["n_items"]


def test_pampa_all_one_label_flag(pampa_fixture, corpus):
    responses = {row["molecule_id"]: "Final answer: High permeability."
                 for row in pampa_fixture}
    model = ScriptedModel(responses)
    items = [
        pampa_predict(model, item) for item in fixture_items(pampa_fixture, corpus)
    ]
    metrics = pampa_metrics(items)
    assert metrics["all_one_label"]
    assert metrics["label_ratio"] == 0.0


def test_pampa_not_applicable_flag(pampa_fixture, corpus):
    responses = {}
    for i, row in enumerate(pampa_fixture):
        if i < 5:
            responses[row["molecule_id"]] = "no verdict"
        else:
            responses[row["molecule_id"]] = "Final answer: Low-to-moderate permeability."
    model = ScriptedModel(responses)
    items = [
        pampa_predict(model, item) for item in fixture_items(pampa_fixture, corpus)
    ]
    metrics = pampa_metrics(items)
    assert metrics["n_nonconforming"] == 5
    assert metrics["not_applicable"]


def test_pampa_validation(corpus):
    item = PampaItem(record=corpus[0], label="high")
    with pytest.raises(ValueError, match="not been predicted"):
        pampa_metrics([item])
    with pytest.raises(ValueError, match="label must be"):
        PampaItem(record=corpus[0], label="medium")
    with pytest.raises(ValueError, match="no items"):
        pampa_metrics([])
    model = ScriptedModel({corpus[0].id: "nothing"})
    with pytest.raises(ValueError, match="must not contain the query"):
        pampa_predict(model, item, mode="few_shot", examples=[(corpus[0], "high")])


def test_pampa_zero_conforming(corpus):
    items = [
        dataclasses.replace(
            PampaItem(record=corpus[i], label="high"), nonconforming=True
        )
        for i in range(3)
    ]
    with pytest.raises(ValueError, match="zero conforming"):
        pampa_metrics(items)


# ---------------------------------------------------------------------------
# reasoning judge


def test_parse_reasoning_verdict():
    text = (
        "Explanation of the evaluation:\nBoth fine.\nFinal Decision:\n"
        "[Assistant 1]\n- Fidelity : 7\n- Helpfulness : 8\n"
        "[Assistant 2]\n- Fidelity : 6\n- Helpfulness : 5\n"
    )
    scores = parse_reasoning_verdict(text)
    assert scores[1] == {"fidelity": 7.0, "helpfulness": 8.0}
    assert scores[2] == {"fidelity": 6.0, "helpfulness": 5.0}
    with pytest.raises(ValueError, match="missing 'Helpfulness'"):
        parse_reasoning_verdict("[Assistant 1]\n- Fidelity : 7\n[Assistant 2]\n- Fidelity : 6\n")


def test_judge_reasoning_mock(corpus):
    client = LLMClient("mock:")
    scores = judge_reasoning(client, corpus[0], "rationale one", "rationale two")
    assert set(scores) == {1, 2}
    assert set(scores[1]) == {"fidelity", "helpfulness"}
    assert all(1 <= v <= 10 for v in scores[1].values())


def test_judge_reasoning_retry_then_reject(corpus):
    class BadClient(LLMClient):
        def chat(self, messages, temperature=1.0):
            return "unstructured"

    with pytest.raises(ValueError, match="rejected after 2 attempts"):
        judge_reasoning(BadClient("mock:"), corpus[0], "a", "b")


# ---------------------------------------------------------------------------
# multiple choice


def mcq_items():
    return [
        McqItem("q1", "structure", "Which group is present?",
                {"A": "ester", "B": "amide", "C": "ketone", "D": "ether"}, "B",
                molecule_id="mol-001"),
        McqItem("q2", "source", "Where is it found?",
                {"A": "plants", "B": "minerals", "C": "animals", "D": "synthesis"}, "A"),
        McqItem("q3", "property", "Which property holds?",
                {"A": "volatile", "B": "ionic", "C": "aromatic", "D": "polymeric"}, "C"),
        McqItem("q4", "application", "What is it used for?",
                {"A": "dye", "B": "fuel", "C": "drug", "D": "solvent"}, "C"),
    ]


class McqScriptedModel:
    def __init__(self, answers):
        self.answers = answers

    def respond(self, messages, record=None, **kwargs):
        question = messages[-1].content.splitlines()[0]
        return self.answers[question]


def test_mcq_item_validation():
    with pytest.raises(ValueError, match="category"):
        McqItem("q", "taste", "?", {"A": "x", "B": "y"}, "A")
    with pytest.raises(ValueError, match="lettered A-D"):
        McqItem("q", "structure", "?", {"E": "x"}, "E")
    with pytest.raises(ValueError, match="not among options"):
        McqItem("q", "structure", "?", {"A": "x", "B": "y"}, "C")


def test_mcq_chat_layout():
    chat = mcq_chat(mcq_items()[0])
    assert chat[0].content == prompts.MCQ_SYSTEM
    assert "A. ester" in chat[1].content
    assert chat[1].content.endswith(prompts.MCQ_USER_SUFFIX)


def test_extract_option_letter():
    assert extract_option_letter("B") == "B"
    assert extract_option_letter("The answer is C.") == "C"
    assert extract_option_letter("ABCD has no standalone letter") is None
    assert extract_option_letter("no letter at all") is None


def test_moleculeqa_eval(corpus):
    items = mcq_items()
    model = McqScriptedModel(
        {
            "Which group is present?": "B",
            "Where is it found?": "The answer is A.",
            "Which property holds?": "D",  # wrong
            "What is it used for?": "mumble",  # unparseable -> wrong
        }
    )
    report = moleculeqa_eval(model, items, corpus)
    assert report["accuracy"] == pytest.approx(0.5)
    assert report["per_category"]["structure"] == 1.0
    assert report["per_category"]["source"] == 1.0
    assert report["per_category"]["property"] == 0.0
    assert report["per_category"]["application"] == 0.0
    assert report["predictions"]["q4"] is None
    with pytest.raises(ValueError, match="no items"):
        moleculeqa_eval(model, [])

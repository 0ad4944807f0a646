import json
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from phishvote.dataset import Batch, UrlSample
from phishvote.errors import ExemplarLeakage, ExemplarMismatch, TemplateError
from phishvote.prompting import (
    Exemplar,
    PromptKind,
    PromptTemplate,
    check_leakage,
    default_templates,
    format_response,
    load_templates,
    parse_batch_response,
    parse_template,
    render_batch_prompt,
)
from phishvote.vote import Label, Vote

P, L, A = Vote.PHISHING, Vote.LEGITIMATE, Vote.ABSTAIN
FIXTURES = json.loads((Path(__file__).parent / "fixtures" / "malformed_responses.json").read_text(encoding="utf-8"))

url_st = st.text(
    alphabet=st.characters(blacklist_categories=("Cs", "Cc", "Zl", "Zp"), blacklist_characters="\x85"),
    min_size=1, max_size=40,
).map(lambda s: "http://" + s.strip().replace(" ", "-") + ".example")


def make_batch(urls, labels=None):
    labels = labels or [Label.PHISHING] * len(urls)
    return Batch(0, tuple(UrlSample(u, lab) for u, lab in zip(urls, labels)))


def test_zero_shot_render(templates):
    rp = render_batch_prompt(templates[PromptKind.ZERO_SHOT], make_batch(["http://a.example", "http://b.example"]))
    lines = rp.text.splitlines()
    assert "1. http://a.example" in lines and "2. http://b.example" in lines
    assert templates[PromptKind.ZERO_SHOT].response_format_clause in rp.text
    assert rp.url_count == 2 and rp.component_prompt is PromptKind.ZERO_SHOT


def test_one_shot_fifty(templates):
    urls = [f"http://u{i}.example" for i in range(50)]
    rp = render_batch_prompt(templates[PromptKind.ONE_SHOT], make_batch(urls))
    assert rp.url_count == 50
    for i, u in enumerate(urls, start=1):
        assert rp.text.splitlines().count(f"{i}. {u}") == 1


def test_exemplar_block_uses_response_format(templates):
    tpl = templates[PromptKind.TWO_SHOT]
    text = render_batch_prompt(tpl, make_batch(["http://x.example"])).text
    assert "1. phishing\n2. legitimate" in text
    assert text.index("1. phishing") < text.index("1. http://x.example")


def test_two_shot_two_phishing_rejected():
    tpl = PromptTemplate(PromptKind.TWO_SHOT, "Classify.", (
        Exemplar("http://e1.example", Label.PHISHING), Exemplar("http://e2.example", Label.PHISHING)),
        "Answer '<n>. <label>'.")
    with pytest.raises(ExemplarMismatch):
        render_batch_prompt(tpl, make_batch(["http://a.example"]))


@pytest.mark.parametrize("kind,n", [(PromptKind.ZERO_SHOT, 1), (PromptKind.ONE_SHOT, 0), (PromptKind.ONE_SHOT, 2)])
def test_exemplar_count_mismatch(kind, n):
    ex = tuple(Exemplar(f"http://e{i}.example", Label.PHISHING) for i in range(n))
    with pytest.raises(ExemplarMismatch):
        render_batch_prompt(PromptTemplate(kind, "Classify.", ex, "Format."), make_batch(["http://a.example"]))


def test_empty_batch_rejected(templates):
    with pytest.raises(ValueError):
        render_batch_prompt(templates[PromptKind.ZERO_SHOT], Batch(0, ()))


def test_render_deterministic(templates):
    b = make_batch(["http://a.example", "http://b.example"])
    for tpl in templates.values():
        assert render_batch_prompt(tpl, b) == render_batch_prompt(tpl, b)


def test_shipped_templates_shape(templates):
    assert set(templates) == set(PromptKind)
    for kind, tpl in templates.items():
        assert len(tpl.exemplars) == kind.n_exemplars
    assert {e.label for e in templates[PromptKind.TWO_SHOT].exemplars} == {Label.PHISHING, Label.LEGITIMATE}


def test_template_override_dir(tmp_path):
    (tmp_path / "zero_shot.txt").write_text("---\nJudge these.\n{{exemplars}}\n{{url_list}}\nOne line each.\n")
    tpls = load_templates(tmp_path)
    assert tpls[PromptKind.ZERO_SHOT].instruction_text == "Judge these."
    assert tpls[PromptKind.ZERO_SHOT].list_header == ""
    assert tpls[PromptKind.ONE_SHOT].exemplars  # untouched default


@pytest.mark.parametrize("text", [
    "---\nno markers here\n",
    "---\n{{url_list}}\n{{exemplars}}\nclause\n",
    "color: blue\n---\nx\n{{exemplars}}\n{{url_list}}\ny\n",
    "exemplar: spam http://a.example\n---\nx\n{{exemplars}}\n{{url_list}}\ny\n",
    "---\n{{exemplars}}\n{{url_list}}\nclause\n",
])
def test_bad_templates(text):
    with pytest.raises((TemplateError, ExemplarMismatch)):
        parse_template(text, PromptKind.ZERO_SHOT)


def test_parse_examples():
    assert parse_batch_response("1. phishing\n2. legitimate", 2) == [P, L]
    assert parse_batch_response("1. PHISHING!\nsome chatter\n3. legitimate", 3) == [P, A, L]
    assert parse_batch_response("1. phishing\n1. legitimate", 1) == [P]


@pytest.mark.parametrize("case", FIXTURES, ids=[c["name"] for c in FIXTURES])
def test_malformed_fixture(case):
    got = parse_batch_response(case["text"], case["expected_count"])
    assert [v.value for v in got] == case["expected"]


def test_fixture_corpus_size():
    assert len(FIXTURES) == 50


def test_parse_bytes():
    assert parse_batch_response(b"1. phishing\n2. \xff", 2) == [P, A]


@settings(max_examples=500)
@given(st.text(), st.integers(min_value=1, max_value=60))
def test_parse_total(text, n):
    votes = parse_batch_response(text, n)
    assert len(votes) == n and all(isinstance(v, Vote) for v in votes)


@given(st.lists(url_st, min_size=1, max_size=20, unique=True), st.data())
def test_render_parse_roundtrip(urls, data):
    labels = data.draw(st.lists(st.sampled_from(list(Label)), min_size=len(urls), max_size=len(urls)))
    for tpl in default_templates().values():
        rp = render_batch_prompt(tpl, make_batch(urls, labels))
        votes = parse_batch_response(format_response(labels), rp.url_count)
        assert [v.label for v in votes] == labels


def test_leakage_guard(templates):
    exemplar_url = templates[PromptKind.ONE_SHOT].exemplars[0].url
    check_leakage(templates, ["http://fine.example"])
    with pytest.raises(ExemplarLeakage):
        check_leakage(templates, ["http://fine.example", exemplar_url])

import json
import os
from pathlib import Path

import pytest

from socparse.corpus import (
    CorpusError,
    DialogueSession,
    GoldRelation,
    Turn,
    attach_attributes,
    dump_dialogre,
    evaluation_turn,
    f1_c,
    load_attribute_sidecar,
    load_dialogre,
    load_moviegraph_clip,
    macro_f1,
    score_predictions,
    split_corpus,
)
from socparse.schema import load_fixture
from socparse.socgraph import Entity

DATA = Path(__file__).parent / "data"
EXAMPLE = DATA / "dialogre_example.json"


@pytest.fixture(scope="module")
def dialogre():
    return load_fixture("dialogre.schema")


@pytest.fixture(scope="module")
def example(dialogre):
    return load_dialogre(EXAMPLE, dialogre[0])[0]


def test_example_dialogue_loads(example):
    assert len(example.turns) == 8
    assert len(example.gold_relations) == 5
    assert GoldRelation("S2", "S1", ("per:children",), ("dad",)) in example.gold_relations
    assert example.turns[3].speakers == ("S1",)
    assert [e.id for e in example.entities] == ["S1", "S2", "S3", "Gunther"]
    assert example.turns[5].tokens == ("Gunther", "?", "!")


def test_example_round_trips(example, tmp_path):
    dump_dialogre([example], tmp_path / "out.json")
    again = load_dialogre(tmp_path / "out.json")[0]
    assert again.turns == example.turns
    assert again.gold_relations == example.gold_relations
    assert again.entities == example.entities


@pytest.mark.skipif("DIALOGRE_TRAIN" not in os.environ, reason="set DIALOGRE_TRAIN to the official train.json")
def test_official_training_split_size(dialogre):
    assert len(load_dialogre(os.environ["DIALOGRE_TRAIN"], dialogre[0])) == 1073


def test_empty_file_is_an_empty_corpus(tmp_path):
    (tmp_path / "e.json").write_text("[]")
    assert load_dialogre(tmp_path / "e.json") == []


@pytest.mark.parametrize("doc, match", [
    ([["Speaker 1: hi"]], "item 0"),
    ([[["no colon here"], []]], "malformed turn"),
    ([[["Speaker 1: hi"], [{"x": "Speaker 1"}]]], "x/y/r"),
    ([[["Speaker 1: hi"], [{"x": "Speaker 1", "y": "Bob", "r": ["per:wizardry"]}]]], "absent from schema"),
])
def test_malformed_items_are_reported(tmp_path, dialogre, doc, match):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    with pytest.raises(CorpusError, match=match):
        load_dialogre(path, dialogre[0])


def test_attribute_sidecar(tmp_path, dialogre, example):
    path = tmp_path / "attrs.tsv"
    path.write_text("0\tS3\tgender\tfemale\n0\tGunther\tprofession\twizard\n")
    sidecar = load_attribute_sidecar(path, dialogre[1], [example])
    assert sidecar["0"]["S3"]["gender"] == "female"
    assert sidecar["0"]["Gunther"]["profession"] == "wizard"
    attach_attributes([example], sidecar)
    assert example.gold_attributes["S3"] == {"gender": "female"}


@pytest.mark.parametrize("line, match", [
    ("0\tS1\tgender\tpurple", "line 2|:2:"),
    ("0\tS1\thaircut\tshort", "subtype"),
    ("0\tS9\tgender\tmale", "entity"),
    ("0\tS1\tgender", "4 tab"),
])
def test_sidecar_errors_name_the_line(tmp_path, dialogre, example, line, match):
    path = tmp_path / "attrs.tsv"
    path.write_text("0\tS1\tgender\tmale\n" + line + "\n")
    with pytest.raises(CorpusError, match=match) as info:
        load_attribute_sidecar(path, dialogre[1], [example])
    assert ":2:" in str(info.value)


def test_moviegraph_clip(tmp_path, dialogre):
    rs, ats = load_fixture("moviegraph.schema")
    path = tmp_path / "clip.txt"
    path.write_text(
        "[entities]\nA\tAnn\nB\tBen\nW\twand\tobject\n"
        "[attributes]\nA\tgender\tfemale\n"
        "[relations]\nA\tB\t" + rs.labels[0] + "\n"
        "[transcript]\nAnn: hello Ben\nBen: hi\n"
    )
    s = load_moviegraph_clip(path, rs, ats)
    assert [t.speakers for t in s.turns] == [("A",), ("B",)]
    assert s.gold_attributes == {"A": {"gender": "female"}}
    assert not s.entities[2].is_human
    assert s.gold_relations[0].triggers is None


def _toy_gold():
    return {"s": [GoldRelation("a", "b", ("A",)), GoldRelation("b", "a", ("A",)),
                  GoldRelation("a", "c", ("B",)), GoldRelation("c", "a", ("C",))]}


def test_macro_f1_hand_computed():
    gold = {"s": [GoldRelation("a", "b", ("A",)), GoldRelation("b", "a", ("A",)),
                  GoldRelation("a", "c", ("B",))]}
    # A: one hit, one miss (predicted B) -> P 1, R 1/2; B: one hit, one false positive -> P 1/2, R 1
    preds = {"s": {("a", "b"): "A", ("b", "a"): "B", ("a", "c"): "B"}}
    assert macro_f1(preds, gold) == pytest.approx(2 / 3, abs=1e-12)
    report = score_predictions(preds, gold)
    assert report.per_label["A"]["f1"] == pytest.approx(2 / 3)
    assert report.support == {"A": 2, "B": 1}


def test_perfect_and_unanswerable_predictions():
    gold = _toy_gold()
    perfect = {"s": {(r.subject, r.object): r.labels[0] for r in gold["s"]}}
    assert macro_f1(perfect, gold) == 1.0
    nothing = {"s": {k: "unanswerable" for k in perfect["s"]}}
    assert macro_f1(nothing, gold) == 0.0


def test_multi_label_gold_accepts_any_listed_label():
    gold = {"s": [GoldRelation("a", "b", ("A", "B"))]}
    report = score_predictions({"s": {("a", "b"): "B"}}, gold)
    assert report.per_label["B"]["f1"] == 1.0
    assert report.per_label["A"]["precision"] == 0.0 and report.per_label["A"]["recall"] == 0.0


def test_missing_prediction_is_an_error():
    with pytest.raises(CorpusError, match="missing prediction"):
        macro_f1({"s": {}}, _toy_gold())


def test_macro_f1_is_order_invariant():
    gold = _toy_gold()
    preds = {"s": {("a", "b"): "A", ("b", "a"): "C", ("a", "c"): "B", ("c", "a"): "A"}}
    reordered = {"s": dict(reversed(list(preds["s"].items())))}
    gold_rev = {"s": list(reversed(gold["s"]))}
    assert macro_f1(preds, gold) == macro_f1(reordered, gold_rev)


def test_trigger_turn_of_the_example(example):
    rel = next(r for r in example.gold_relations if (r.subject, r.object) == ("S2", "S1"))
    # "dad" and S1 appear in the first turn, S2 speaks the second
    assert evaluation_turn(example, rel) == 1
    no_trigger = GoldRelation("S2", "S1", ("per:children",), ())
    assert evaluation_turn(example, no_trigger) == 7


def test_constant_predictions_give_f1_c_equal_to_f1(example):
    final = {(r.subject, r.object): "per:children" for r in example.gold_relations}
    per_turn = {example.session_id: [final] * len(example.turns)}
    assert f1_c(per_turn, [example]) == macro_f1({example.session_id: final}, [example])


def _two_turn_session():
    turns = [Turn.from_text("A", "hello B"), Turn.from_text("B", "hi dad")]
    return DialogueSession(turns, [Entity("A"), Entity("B")],
                           [GoldRelation("B", "A", ("per:children",), ("dad",))], None, "t")


def test_f1_c_uses_the_trigger_turn():
    session = _two_turn_session()
    per_turn = {"t": [{("B", "A"): "per:friends"}, {("B", "A"): "per:children"}]}
    assert f1_c(per_turn, [session]) == 1.0
    truncated = DialogueSession(session.turns[:1], session.entities, session.gold_relations, None, "t")
    assert f1_c({"t": per_turn["t"][:1]}, [truncated]) == 0.0


def test_f1_c_refuses_without_triggers():
    session = _two_turn_session()
    session.gold_relations = [GoldRelation("B", "A", ("per:children",), None)]
    with pytest.raises(CorpusError, match="trigger"):
        f1_c({"t": [{}, {}]}, [session])


def test_report_rendering(example):
    preds = {"0": {(r.subject, r.object): r.labels[0] for r in example.gold_relations}}
    report = score_predictions(preds, [example])
    assert json.loads(report.to_json())["macro_f1"] == 1.0
    assert "macro F1" in report.to_table()


def test_split_is_deterministic_and_complete():
    items = list(range(50))
    a = split_corpus(items, seed=3)
    assert a == split_corpus(items, seed=3)
    assert sorted(sum(a, [])) == items
    assert [len(p) for p in a] == [40, 5, 5]

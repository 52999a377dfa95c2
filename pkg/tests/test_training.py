import numpy as np
import pytest

from helpers import gradient_errors, random_gradient_case, used_groups
from socparse.corpus import DialogueSession, GoldRelation, Turn
from socparse.energy import beta_conditional, gamma_conditional
from socparse.schema import AttributeSchema, make_relation_schema
from socparse.socgraph import Entity, diff, make_aog, new_parse_graph
from socparse.synthetic import generate_corpus, planted_beta_error
from socparse.training import (
    TrainConfig,
    TrainingError,
    contrastive_loss,
    fit_counts,
    load_model,
    model_to_dict,
    sample_negative,
    save_model,
    train,
    tune_weights,
)

FAMILY = make_relation_schema(["per:children", "per:parents", "per:friends"],
                              [("per:children", "per:parents"), ("per:friends", "per:friends")])
GENDER_AGE = AttributeSchema(("gender", "age"), {"gender": ("male", "female"), "age": ("adult", "baby")})


def toy_family_corpus(n):
    sessions = []
    for k in range(n):
        ents = [Entity("S1", "Mum"), Entity("S2", "Kid")]
        gold = [GoldRelation("S1", "S2", ("per:children",)), GoldRelation("S2", "S1", ("per:parents",))]
        attrs = {"S1": {"gender": "female", "age": "adult"}, "S2": {"gender": "male", "age": "baby"}}
        sessions.append(DialogueSession([Turn.from_text(("S1",), "hi there")], ents, gold, attrs, f"t{k}"))
    return sessions


def test_count_fit_on_hand_counted_corpus():
    model = fit_counts(toy_family_corpus(10), FAMILY, GENDER_AGE, smoothing=0.1)
    row = beta_conditional(model, ("female", "adult"), ("male", "baby"))
    assert row[FAMILY.index("per:children")] >= 0.9
    np.testing.assert_allclose(row[FAMILY.index("per:children")], 10.1 / 10.4)
    np.testing.assert_allclose(row.sum(), 1.0)
    unseen = beta_conditional(model, ("male", "adult"), ("male", "adult"))
    np.testing.assert_allclose(unseen, 1 / len(FAMILY))
    left = gamma_conditional(model, "per:children", "left", "gender")
    np.testing.assert_allclose(left, [0.1 / 10.2, 10.1 / 10.2])
    np.testing.assert_allclose(gamma_conditional(model, "per:friends", "left", "age"), [0.5, 0.5])


def test_unsmoothed_unseen_label_has_zero_probability():
    model = fit_counts(toy_family_corpus(3), FAMILY, GENDER_AGE, smoothing=0.0)
    row = beta_conditional(model, ("female", "adult"), ("male", "baby"))
    assert row[FAMILY.index("per:friends")] == 0.0
    assert row[FAMILY.index("per:children")] == 1.0


def test_balanced_gender_counts():
    sessions = toy_family_corpus(2)
    sessions[1].gold_attributes["S1"]["gender"] = "male"
    model = fit_counts(sessions, FAMILY, GENDER_AGE, smoothing=0.0)
    np.testing.assert_allclose(gamma_conditional(model, "per:children", "left", "gender"), [0.5, 0.5])


def test_attribute_free_corpus_fills_triangle_table():
    rs = make_relation_schema(["per:friends"])
    ents = [Entity("A"), Entity("B"), Entity("C")]
    gold = [GoldRelation(a, b, ("per:friends",)) for a in "ABC" for b in "ABC" if a != b]
    session = DialogueSession([Turn.from_text(("A",), "yo")], ents, gold)
    model = fit_counts([session], rs, AttributeSchema(), smoothing=0.0, reduced=True)
    assert model.gamma_tables == ()
    assert model.triangle_table[0, 0, 0] == 0.0
    assert model.reduced


def test_empty_corpus_is_an_error():
    with pytest.raises(TrainingError):
        fit_counts([], FAMILY, GENDER_AGE)
    with pytest.raises(TrainingError):
        train([], FAMILY, GENDER_AGE)


def test_negative_of_single_binary_slot_is_the_flip():
    rs = make_relation_schema([])
    aog = make_aog(["A"], rs, AttributeSchema(("g",), {"g": ("x", "y")}))
    gold = new_parse_graph(aog)
    gold.attrs[0, 0] = 0
    neg = sample_negative(gold, np.random.default_rng(0))
    assert neg.attrs[0, 0] == 1


def test_negative_changes_exactly_one_slot_uniformly():
    aog = make_aog(["A", "B", "C"], FAMILY, GENDER_AGE)
    gold = new_parse_graph(aog)
    for s in aog.slots:
        gold.set(s, 0)
    rng = np.random.default_rng(1)
    counts = np.zeros(len(aog.slots))
    n = 100_000
    for _ in range(n):
        d = diff(gold, sample_negative(gold, rng))
        assert len(d) == 1
        counts[aog.slots.index(d.changed_slots[0][0])] += 1
    np.testing.assert_allclose(counts / n, 1 / len(aog.slots), atol=0.02 / len(aog.slots))


def test_negative_needs_a_known_slot():
    aog = make_aog(["A"], FAMILY, GENDER_AGE)
    with pytest.raises(TrainingError):
        sample_negative(new_parse_graph(aog), np.random.default_rng(0))


@pytest.mark.parametrize("E_pos, E_neg, margin, expected", [
    (2.0, 2.0, 1.0, 1.0),
    (0.0, 1.0, 1.0, 0.0),
    (0.0, 5.0, 1.0, 0.0),
    (3.0, 1.0, 0.5, 2.5),
])
def test_contrastive_loss(E_pos, E_neg, margin, expected):
    assert contrastive_loss(E_pos, E_neg, margin) == expected


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("reduced", [False, True])
def test_gradients_match_finite_differences(seed, reduced):
    params, ex, neg, model = random_gradient_case(seed, reduced)
    errors = gradient_errors(params, ex, neg, model)
    for group in used_groups(model):
        assert errors[group] <= 1e-4, (group, errors[group])


@pytest.fixture(scope="module")
def small_corpus():
    return generate_corpus(60, seed=5, K=3, n_turns=6)


def test_zero_epochs_equals_count_fit(small_corpus, kinship):
    rs, ats = kinship
    res = train(small_corpus, rs, ats, TrainConfig(epochs=0))
    counts = fit_counts(small_corpus, rs, ats)
    for a, b in zip(res.model.beta_tables + res.model.gamma_tables, counts.beta_tables + counts.gamma_tables):
        np.testing.assert_array_equal(a, b)
    assert res.losses == []


def test_training_is_deterministic_and_reduces_loss(small_corpus, kinship):
    rs, ats = kinship
    cfg = TrainConfig(epochs=3, seed=4, lr=0.05)
    a = train(small_corpus, rs, ats, cfg)
    b = train(small_corpus, rs, ats, cfg)
    assert model_to_dict(a.model, a.scorer) == model_to_dict(b.model, b.scorer)
    assert a.losses == b.losses
    assert a.losses[-1] <= a.losses[0]
    for t in a.model.beta_tables:
        np.testing.assert_allclose(np.exp(t).sum(axis=-1), 1.0)


def test_planted_rows_are_recovered(kinship):
    rs, ats = kinship
    corpus = generate_corpus(1000, seed=0, K=6, n_turns=4, p_adult=0.5)
    model = fit_counts(corpus, rs, ats)
    assert planted_beta_error(model) <= 0.1


def test_model_file_round_trip(tmp_path, small_corpus, kinship):
    rs, ats = kinship
    res = train(small_corpus, rs, ats, TrainConfig(epochs=1))
    path = tmp_path / "m.json"
    save_model(path, res.model, res.scorer, TrainConfig(epochs=1))
    model, scorer, cfg = load_model(path)
    assert model_to_dict(model, scorer) == model_to_dict(res.model, res.scorer)
    assert cfg == TrainConfig(epochs=1)
    other = make_relation_schema(["per:friends"])
    with pytest.raises(TrainingError, match="fingerprint"):
        load_model(path, relation_schema=other)


def test_weight_search_keeps_first_best():
    model = fit_counts(toy_family_corpus(2), FAMILY, GENDER_AGE)
    best, score = tune_weights(model, lambda m: -abs(m.beta - 0.5) - abs(m.gamma_l - 2.0), grid=(0.5, 1.0, 2.0))
    assert (best.beta, best.gamma_l, best.gamma_r) == (0.5, 2.0, 0.5)
    assert score == 0.0


@pytest.mark.parametrize("kwargs", [dict(margin=0.0), dict(epochs=-1), dict(optimizer="sgd"), dict(smoothing=-1)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_loss_is_monotone_at_small_learning_rate(kinship):
    rs, ats = kinship
    corpus = generate_corpus(200, seed=0, K=4, n_turns=6)
    losses = train(corpus, rs, ats, TrainConfig(epochs=6, lr=1e-2, seed=0)).losses
    assert np.all(np.diff(losses) <= 0), losses
